//! Rule-based annotator used for fixtures and for datasets that arrive
//! without external annotations. Produces tokens, sentences and entities;
//! dependency trees and SRL frames are left empty.

use super::{AnnotatedContext, EntityLabel, EntitySpan, Sentence, Token};
use crate::{Error, Result};

const MONTHS: &[&str] = &[
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

const NUMBER_WORDS: &[&str] = &[
    "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "twenty", "thirty",
    "forty", "fifty", "hundred", "thousand", "million", "billion", "dozen",
];

/// A bare number right after one of these reads as a date ("in 911").
const TEMPORAL_PREPS: &[&str] = &["in", "since", "until", "by", "before", "after", "during"];

/// Capitalized only because they open a sentence.
const SENTENCE_OPENERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "it", "its", "they", "their", "he", "she", "his", "her", "we",
    "our", "i", "you", "in", "on", "at", "of", "for", "from", "by", "with", "as", "after", "before", "during", "since",
    "until", "when", "while", "although", "though", "but", "and", "or", "if", "however", "there", "here", "some",
    "many", "most", "all", "each", "one", "another", "other", "such", "both", "what", "who", "where", "which", "how",
    "why", "later", "then", "today", "also", "once",
];

const PERSON_NAMES: &[&str] = &[
    "Alice",
    "Anna",
    "Anne",
    "Bob",
    "Bohemond",
    "Carlos",
    "Charles",
    "Clara",
    "David",
    "Edward",
    "Elena",
    "Elizabeth",
    "Emma",
    "Frederick",
    "George",
    "Hans",
    "Harold",
    "Henry",
    "Hugo",
    "Ingrid",
    "James",
    "Johan",
    "John",
    "Kim",
    "Laura",
    "Leo",
    "Louis",
    "Lucia",
    "Maria",
    "Marco",
    "Mary",
    "Nadia",
    "Omar",
    "Otto",
    "Paul",
    "Peter",
    "Priya",
    "Richard",
    "Robert",
    "Roger",
    "Rollo",
    "Sarah",
    "Sofia",
    "Tancred",
    "Thomas",
    "Tutu",
    "Victor",
    "William",
    "Yuki",
];

const LOCATIONS: &[&str] = &[
    "Africa",
    "America",
    "Antioch",
    "Asia",
    "Athens",
    "Berlin",
    "Boston",
    "Brittany",
    "Byzantium",
    "Cairo",
    "Canada",
    "Chicago",
    "China",
    "Constantinople",
    "Denmark",
    "Dublin",
    "Egypt",
    "England",
    "Europe",
    "Flanders",
    "France",
    "Germany",
    "Greece",
    "Iceland",
    "India",
    "Ireland",
    "Italy",
    "Japan",
    "Jerusalem",
    "Lisbon",
    "London",
    "Madrid",
    "Normandy",
    "Norway",
    "Oslo",
    "Paris",
    "Prague",
    "Rome",
    "Scotland",
    "Sicily",
    "Spain",
    "Texas",
    "Tokyo",
    "Vienna",
    "Wales",
];

/// Split on whitespace; alphanumeric runs form words and every other
/// character is a token of its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word: Option<(usize, String)> = None;
    for (ci, ch) in text.chars().enumerate() {
        if ch.is_alphanumeric() {
            match &mut word {
                Some((_, w)) => w.push(ch),
                None => word = Some((ci, ch.to_string())),
            }
            continue;
        }
        if let Some((start, w)) = word.take() {
            tokens.push(Token {
                end_char: start + w.chars().count(),
                text: w,
                start_char: start,
            });
        }
        if !ch.is_whitespace() {
            tokens.push(Token {
                text: ch.to_string(),
                start_char: ci,
                end_char: ci + 1,
            });
        }
    }
    if let Some((start, w)) = word {
        tokens.push(Token {
            end_char: start + w.chars().count(),
            text: w,
            start_char: start,
        });
    }
    tokens
}

fn split_sentences(tokens: &[Token]) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t.text.as_str(), "." | "!" | "?") {
            out.push(Sentence {
                start_tok: start,
                end_tok: i + 1,
            });
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(Sentence {
            start_tok: start,
            end_tok: tokens.len(),
        });
    }
    out
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit())
}

fn is_capitalized(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(char::is_uppercase) && s.chars().all(char::is_alphanumeric)
}

fn entities_in(tokens: &[Token], sent: Sentence) -> Vec<EntitySpan> {
    let mut out = Vec::new();
    let text = |i: usize| tokens[i].text.as_str();
    let mut i = sent.start_tok;
    while i < sent.end_tok {
        let t = text(i);
        if MONTHS.contains(&t) {
            let mut end = i + 1;
            loop {
                if end < sent.end_tok && is_digits(text(end)) {
                    end += 1;
                } else if end + 1 < sent.end_tok && text(end) == "," && is_digits(text(end + 1)) {
                    end += 2;
                } else {
                    break;
                }
            }
            out.push(EntitySpan {
                start_tok: i,
                end_tok: end,
                label: EntityLabel::Temporal,
            });
            i = end;
        } else if is_digits(t) {
            let after_prep = i > sent.start_tok && TEMPORAL_PREPS.contains(&text(i - 1).to_lowercase().as_str());
            let label = if t.len() == 4 || (after_prep && t.len() <= 4) {
                EntityLabel::Temporal
            } else {
                EntityLabel::Numeric
            };
            out.push(EntitySpan {
                start_tok: i,
                end_tok: i + 1,
                label,
            });
            i += 1;
        } else if NUMBER_WORDS.contains(&t.to_lowercase().as_str()) {
            out.push(EntitySpan {
                start_tok: i,
                end_tok: i + 1,
                label: EntityLabel::Numeric,
            });
            i += 1;
        } else if is_capitalized(t) {
            let mut start = i;
            let mut end = i;
            while end < sent.end_tok && is_capitalized(text(end)) && !MONTHS.contains(&text(end)) {
                end += 1;
            }
            if start == sent.start_tok && SENTENCE_OPENERS.contains(&t.to_lowercase().as_str()) {
                start += 1;
            }
            if start < end {
                let run: Vec<&str> = (start..end).map(text).collect();
                let label = if PERSON_NAMES.contains(&run[0]) {
                    EntityLabel::Person
                } else if run.iter().any(|w| LOCATIONS.contains(w)) {
                    EntityLabel::Location
                } else {
                    EntityLabel::Thing
                };
                out.push(EntitySpan {
                    start_tok: start,
                    end_tok: end,
                    label,
                });
            }
            i = end.max(i + 1);
        } else {
            i += 1;
        }
    }
    out
}

/// Deterministic rule-based annotation of a raw passage.
pub fn heuristic_annotate(id: &str, text: &str) -> Result<AnnotatedContext> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyText(id.to_string()));
    }
    let sentences = split_sentences(&tokens);
    let entities = sentences.iter().flat_map(|&s| entities_in(&tokens, s)).collect();
    Ok(AnnotatedContext {
        id: id.to_string(),
        text: text.to_string(),
        tokens,
        sentences,
        entities,
        dep: Vec::new(),
        srl: Vec::new(),
    })
}
