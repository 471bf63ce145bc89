use std::collections::{BTreeSet, HashMap};

use crate::annotation::{tokenize, AnnotatedContext, EntityLabel};
use crate::{Error, Result};

pub const UNK: &str = "[unk]";

/// Words the question generators emit that may not occur in any passage.
const QUESTION_WORDS: &[&str] = &[
    "who",
    "where",
    "when",
    "how",
    "many",
    "what",
    "which",
    "did",
    "was",
    "someone",
    "something",
    "?",
];

/// Lowercased word list with dense ids. Unknown words map to [`UNK`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Sorted, deduplicated union of `words` (lowercased), the question
    /// template words, the category masks and [`UNK`].
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set: BTreeSet<String> = words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        set.extend(QUESTION_WORDS.iter().map(|w| w.to_string()));
        set.extend(EntityLabel::ALL.iter().map(|l| l.mask_token().to_lowercase()));
        set.remove(UNK);
        let words: Vec<String> = std::iter::once(UNK.to_string()).chain(set).collect();
        Self::from_words(words).expect("fresh vocabulary is unique")
    }

    /// Every passage token plus every token of `questions`.
    pub fn for_corpus<'a, C, Q>(contexts: C, questions: Q) -> Self
    where
        C: IntoIterator<Item = &'a AnnotatedContext>,
        Q: IntoIterator<Item = &'a str>,
    {
        let mut words: Vec<String> = Vec::new();
        for ctx in contexts {
            words.extend(ctx.tokens.iter().map(|t| t.text.clone()));
        }
        for q in questions {
            words.extend(question_tokens(q));
        }
        Self::new(words)
    }

    /// Keep the given order; used when reading a checkpoint.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::BadCheckpoint(format!("vocabulary lists `{w}` twice")));
            }
        }
        if index.get(UNK) != Some(&0) {
            return Err(Error::BadCheckpoint(format!("vocabulary must start with {UNK}")));
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(&word.to_lowercase()).copied()
    }

    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(0)
    }

    pub fn ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    /// Append the words not yet present, in sorted order. Returns how many
    /// were added.
    pub fn extend<I, S>(&mut self, words: I) -> usize
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fresh: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .filter(|w| !self.index.contains_key(w))
            .collect();
        for w in &fresh {
            self.index.insert(w.clone(), self.words.len());
            self.words.push(w.clone());
        }
        fresh.len()
    }
}

/// Lowercased question tokens, with `[ LABEL ]` runs merged into one mask
/// token.
pub fn question_tokens(question: &str) -> Vec<String> {
    let raw: Vec<String> = tokenize(question).into_iter().map(|t| t.text).collect();
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if i + 2 < raw.len() && raw[i] == "[" && raw[i + 2] == "]" {
            let merged = format!("[{}]", raw[i + 1]);
            if EntityLabel::from_mask_token(&merged).is_some() {
                out.push(merged.to_lowercase());
                i += 3;
                continue;
            }
        }
        out.push(raw[i].to_lowercase());
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_sorted_lowercase_with_reserved_words() {
        let v = Vocabulary::new(["Paris", "paris", "Rollo"]);
        assert_eq!(v.words()[0], UNK);
        assert!(v.get("PARIS").is_some());
        assert!(v.get("[location]").is_some());
        assert!(v.get("who").is_some());
        let rest = &v.words()[1..];
        assert!(rest.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(v.id("unseen"), 0);
    }

    #[test]
    fn masks_merge_in_questions() {
        assert_eq!(
            question_tokens("Pirates from [LOCATION]."),
            ["pirates", "from", "[location]", "."]
        );
        assert_eq!(question_tokens("[x] y"), ["[", "x", "]", "y"]);
    }

    #[test]
    fn extension_appends_new_words_only() {
        let mut v = Vocabulary::new(["a"]);
        let before = v.len();
        assert_eq!(v.extend(["zebra", "A", "yak"]), 2);
        assert_eq!(v.len(), before + 2);
        assert_eq!(v.id("yak"), before);
        assert_eq!(v.id("zebra"), before + 1);
    }

    #[test]
    fn duplicate_words_rejected() {
        let words = vec![UNK.to_string(), "a".into(), "a".into()];
        assert!(Vocabulary::from_words(words).is_err());
    }
}
