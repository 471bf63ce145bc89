//! Planted-fact micro-benchmark.
//!
//! Each generated passage states five facts about one person, in shuffled
//! sentence order, and comes with one held-out question per fact. Passages
//! carry hand-built entities, dependency trees and SRL frames so every
//! question generator has material to work with.

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annotation::{AnnotatedContext, ContextBuilder, Corpus, EntityLabel, GoldAnswer, Question, SrlRole};
use crate::{Error, Result};

pub const DEFAULT_CONTEXTS: usize = 30;
pub const FACTS_PER_CONTEXT: usize = 5;

const FIRST_NAMES: &[&str] = &[
    "Alice", "Bob", "Clara", "Daniel", "Elena", "Felix", "Greta", "Hugo", "Irene", "Jonas", "Karla", "Lukas", "Marta",
    "Nils", "Olga", "Pavel", "Rosa", "Stefan", "Tilda", "Viktor", "Wanda", "Xaver", "Yvonne", "Zeno", "Agnes", "Bruno",
    "Cecil", "Dora", "Emil", "Frida",
];

const SURNAMES: &[&str] = &[
    "Abbott",
    "Brandt",
    "Castell",
    "Dorsey",
    "Eckert",
    "Falk",
    "Gruber",
    "Hale",
    "Ivers",
    "Jansen",
    "Keller",
    "Lindqvist",
    "Morrow",
    "Nyberg",
    "Ostrander",
    "Pruitt",
    "Quast",
    "Rasmussen",
    "Sorensen",
    "Thorne",
    "Ulrich",
    "Vance",
    "Whitlock",
    "Yates",
    "Zeller",
    "Ambrose",
    "Bellamy",
    "Corrigan",
    "Draper",
    "Ellwood",
];

const CITIES: &[&str] = &[
    "Lisbon", "Oslo", "Vienna", "Prague", "Dublin", "Krakow", "Ghent", "Turin", "Bergen", "Seville", "Lyon", "Graz",
    "Utrecht", "Bremen", "Tampere", "Porto", "Bilbao", "Malmo", "Antwerp", "Split", "Zagreb", "Riga", "Tallinn",
    "Vilnius", "Aarhus", "Leipzig", "Salzburg", "Bruges", "Verona", "Nantes",
];

const COMPANIES: &[&str] = &[
    "Veltrix",
    "Orbina",
    "Calderon",
    "Monvale",
    "Quillfield",
    "Brightwater",
    "Harrowgate",
    "Ostrava",
    "Pennick",
    "Ruskin",
    "Sablewood",
    "Tamworth",
    "Umbridge",
    "Vantor",
    "Wexley",
    "Ashgrove",
    "Blakemore",
    "Corvane",
    "Dunmore",
    "Elstree",
    "Fenwick",
    "Glenhaven",
    "Holloway",
    "Ironside",
    "Kestrel",
    "Larchmont",
    "Marlowe",
    "Northcote",
    "Oakridge",
    "Pemberton",
];

struct Person {
    first: &'static str,
    last: &'static str,
}

impl Person {
    fn name(&self) -> String {
        format!("{} {}", self.first, self.last)
    }
}

struct Fact {
    sentence: String,
    question: String,
    answer: String,
    label: EntityLabel,
    heads: Vec<i64>,
    /// Fact kind, used in question ids; also the SRL predicate.
    predicate: &'static str,
    /// SRL arguments besides the subject, by role and surface.
    args: Vec<(SrlRole, String)>,
    subject_role: SrlRole,
}

fn planted(p: &Person, spouse: &Person, city: &str, year: u32, horses: u32, company: &str) -> Vec<Fact> {
    let name = p.name();
    vec![
        Fact {
            sentence: format!("{name} was born in {city}."),
            question: format!("Where was {name} born?"),
            answer: city.to_string(),
            label: EntityLabel::Location,
            heads: vec![1, 3, 3, -1, 3, 4, 3],
            predicate: "born",
            args: vec![(SrlRole::ArgmLoc, city.to_string())],
            subject_role: SrlRole::Arg1,
        },
        Fact {
            sentence: format!("{name} was married to {}.", spouse.name()),
            question: format!("Who was {name} married to?"),
            answer: spouse.name(),
            label: EntityLabel::Person,
            heads: vec![1, 3, 3, -1, 3, 6, 4, 3],
            predicate: "married",
            args: vec![(SrlRole::Arg2, format!("to {}", spouse.name()))],
            subject_role: SrlRole::Arg1,
        },
        Fact {
            sentence: format!("{name} was elected mayor in {year}."),
            question: format!("When was {name} elected mayor?"),
            answer: year.to_string(),
            label: EntityLabel::Temporal,
            heads: vec![1, 3, 3, -1, 3, 3, 5, 3],
            predicate: "elected",
            args: vec![(SrlRole::ArgmTmp, year.to_string())],
            subject_role: SrlRole::Arg1,
        },
        Fact {
            sentence: format!("{name} kept {horses} horses."),
            question: format!("How many horses did {name} keep?"),
            answer: horses.to_string(),
            label: EntityLabel::Numeric,
            heads: vec![1, 2, -1, 4, 2, 2],
            predicate: "kept",
            args: vec![(SrlRole::Arg1, format!("{horses} horses"))],
            subject_role: SrlRole::Arg0,
        },
        Fact {
            sentence: format!("{name} was employed by {company}."),
            question: format!("Which company employed {name}?"),
            answer: company.to_string(),
            label: EntityLabel::Thing,
            heads: vec![1, 3, 3, -1, 3, 4, 3],
            predicate: "employed",
            args: vec![(SrlRole::Arg0, company.to_string())],
            subject_role: SrlRole::Arg1,
        },
    ]
}

/// `n` people with pairwise distinct first names and surnames.
fn pick_people(rng: &mut ChaCha8Rng, n: usize) -> Vec<Person> {
    let firsts = FIRST_NAMES.choose_multiple(rng, n);
    let lasts: Vec<&str> = SURNAMES.choose_multiple(rng, n).copied().collect();
    firsts.zip(lasts).map(|(&first, last)| Person { first, last }).collect()
}

/// One passage about `people` persons and its held-out questions. Names,
/// places, companies, years and counts never repeat within a passage.
fn planted_context(id: &str, people: usize, rng: &mut ChaCha8Rng) -> Result<(AnnotatedContext, Vec<Question>)> {
    let names = pick_people(rng, 2 * people);
    let (subjects, spouses) = names.split_at(people);
    let cities: Vec<&str> = CITIES.choose_multiple(rng, people).copied().collect();
    let companies: Vec<&str> = COMPANIES.choose_multiple(rng, people).copied().collect();
    let years = index::sample(rng, 2021 - 1890, people);
    let horses = index::sample(rng, 90 - 2, people);
    let mut facts: Vec<(usize, Fact)> = Vec::new();
    for j in 0..people {
        let year = 1890 + years.index(j) as u32;
        let count = 2 + horses.index(j) as u32;
        let fs = planted(&subjects[j], &spouses[j], cities[j], year, count, companies[j]);
        facts.extend(fs.into_iter().map(|f| (j, f)));
    }
    facts.shuffle(rng);

    let text = facts
        .iter()
        .map(|(_, f)| f.sentence.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let mut b = ContextBuilder::new(id, &text);
    for (s, (j, f)) in facts.iter().enumerate() {
        let name = subjects[*j].name();
        b = b
            .entity(s, &name, EntityLabel::Person)
            .entity(s, &f.answer, f.label)
            .dep(s, &f.heads);
        let mut args: Vec<(SrlRole, &str)> = vec![(f.subject_role, name.as_str())];
        args.extend(f.args.iter().map(|(r, a)| (*r, a.as_str())));
        b = b.frame(s, f.predicate, &args);
    }
    let ctx = b.build()?;

    let mut questions = Vec::new();
    for (k, (j, f)) in facts.iter().enumerate() {
        let sent = ctx.sentences[k];
        let offset = ctx.tokens[sent.start_tok].start_char;
        let local = f.sentence.rfind(&f.answer).expect("answer is in its sentence");
        let answer_start = offset + f.sentence[..local].chars().count();
        let qid = if people == 1 {
            format!("{id}.{}", f.predicate)
        } else {
            format!("{id}.{j}.{}", f.predicate)
        };
        questions.push(Question {
            id: qid,
            context_id: id.to_string(),
            question: f.question.clone(),
            answers: vec![GoldAnswer {
                text: f.answer.clone(),
                answer_start,
            }],
        });
    }
    questions.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((ctx, questions))
}

/// `n` one-person passages with ids `0.0 … 0.{n-1}`, fixed by `seed`.
pub fn planted_facts(n: usize, seed: u64) -> Result<Corpus> {
    planted_corpus(n, 1, seed)
}

/// Like [`planted_facts`] with `people` persons per passage, at most 15.
pub fn planted_corpus(n: usize, people: usize, seed: u64) -> Result<Corpus> {
    if people == 0 || 2 * people > FIRST_NAMES.len() {
        return Err(Error::Config(format!(
            "people per passage must be in 1..={}",
            FIRST_NAMES.len() / 2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::default();
    for i in 0..n {
        let (ctx, qs) = planted_context(&format!("0.{i}"), people, &mut rng)?;
        corpus.contexts.push(ctx);
        corpus.questions.extend(qs);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::validate;
    use crate::qgen::{generate, Method};

    #[test]
    fn generator_is_seeded() {
        let a = planted_facts(4, 1).unwrap();
        let b = planted_facts(4, 1).unwrap();
        let c = planted_facts(4, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn passages_are_valid_and_answers_located() {
        let corpus = planted_facts(DEFAULT_CONTEXTS, 0).unwrap();
        assert_eq!(corpus.contexts.len(), DEFAULT_CONTEXTS);
        assert_eq!(corpus.questions.len(), DEFAULT_CONTEXTS * FACTS_PER_CONTEXT);
        for ctx in &corpus.contexts {
            assert!(validate(ctx).is_empty(), "{:?}", validate(ctx));
            assert_eq!(ctx.sentences.len(), FACTS_PER_CONTEXT);
            assert_eq!(ctx.srl.len(), FACTS_PER_CONTEXT);
            for q in corpus.questions_for(&ctx.id) {
                let a = &q.answers[0];
                let end = a.answer_start + a.text.chars().count();
                assert_eq!(ctx.slice_chars(a.answer_start, end), a.text);
            }
        }
    }

    #[test]
    fn multi_person_passages_never_repeat_values() {
        let corpus = planted_corpus(5, 3, 4).unwrap();
        for ctx in &corpus.contexts {
            assert!(validate(ctx).is_empty());
            assert_eq!(ctx.sentences.len(), 3 * FACTS_PER_CONTEXT);
            let answers: Vec<_> = corpus
                .questions_for(&ctx.id)
                .map(|q| q.answers[0].text.clone())
                .collect();
            let unique: std::collections::HashSet<_> = answers.iter().collect();
            assert_eq!(unique.len(), answers.len());
        }
        assert!(planted_corpus(1, 0, 0).is_err());
        assert!(planted_corpus(1, 16, 0).is_err());
    }

    #[test]
    fn every_generator_fires() {
        let corpus = planted_facts(1, 3).unwrap();
        let pairs = generate(&corpus.contexts[0], &Method::ALL);
        for m in Method::ALL {
            assert!(pairs.iter().any(|p| p.method == m), "no {m} pairs");
        }
    }
}
