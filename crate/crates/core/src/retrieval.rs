//! In-process inverted index with BM25 ranking, used to pull the passages
//! most similar to a test passage into its training pool.
//!
//! On-disk layout (JSON, integers only so round-trips are exact):
//!
//! ```text
//! { "format": "ttlqa-bm25", "version": 1,
//!   "docs": [{"id": "...", "len": 12}, ...],
//!   "stopwords": ["the", ...],
//!   "postings": {"term": [[doc_index, tf], ...], ...} }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::AnnotatedContext;
use crate::{Error, Result};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const DEFAULT_STOPWORDS: usize = 30;
/// Upper bound on neighbors pulled into one training pool.
pub const MAX_NEIGHBORS: usize = 500;

const FORMAT: &str = "ttlqa-bm25";
const VERSION: u32 = 1;

/// Lowercased word terms of a passage; punctuation-only tokens are skipped.
pub fn terms(ctx: &AnnotatedContext) -> Vec<String> {
    ctx.tokens
        .iter()
        .filter(|t| t.text.chars().any(char::is_alphanumeric))
        .map(|t| t.text.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DocEntry {
    id: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    format: String,
    version: u32,
    docs: Vec<DocEntry>,
    stopwords: Vec<String>,
    postings: BTreeMap<String, Vec<(usize, usize)>>,
}

#[derive(Debug, Clone)]
pub struct Index {
    docs: Vec<DocEntry>,
    by_id: HashMap<String, usize>,
    stopwords: Vec<String>,
    /// Term → ascending `(doc index, term frequency)`.
    postings: BTreeMap<String, Vec<(usize, usize)>>,
    avgdl: f64,
}

impl PartialEq for Index {
    fn eq(&self, other: &Self) -> bool {
        self.docs == other.docs && self.stopwords == other.stopwords && self.postings == other.postings
    }
}

impl Index {
    fn assemble(
        docs: Vec<DocEntry>,
        stopwords: Vec<String>,
        postings: BTreeMap<String, Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut by_id = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(Error::BadIndex(format!("duplicate document id `{}`", d.id)));
            }
        }
        let avgdl = docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64;
        Ok(Index {
            docs,
            by_id,
            stopwords,
            postings,
            avgdl,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).map(|&i| self.docs[i].len)
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avgdl
    }

    pub fn stopwords(&self) -> &[String] {
        &self.stopwords
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.stopwords.iter().any(|s| s == term)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, term: &str, doc_id: &str) -> usize {
        let Some(&d) = self.by_id.get(doc_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&d, |&(doc, _)| doc).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: usize, len: usize) -> f64 {
        let tf = tf as f64;
        let norm = K1 * (1.0 - B + B * len as f64 / self.avgdl);
        idf * tf * (K1 + 1.0) / (tf + norm)
    }

    /// Query terms dropped by the stopword list (or absent from every
    /// document) contribute nothing.
    pub fn query_terms(&self, ctx: &AnnotatedContext) -> Vec<String> {
        terms(ctx).into_iter().filter(|t| !self.is_stopword(t)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = IndexFile {
            format: FORMAT.into(),
            version: VERSION,
            docs: self.docs.clone(),
            stopwords: self.stopwords.clone(),
            postings: self.postings.clone(),
        };
        let raw = serde_json::to_string(&file).expect("index serializes");
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: IndexFile = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            at: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::BadIndex(format!(
                "{}: expected {FORMAT} version {VERSION}, found {} version {}",
                path.display(),
                file.format,
                file.version
            )));
        }
        let n = file.docs.len();
        for (term, list) in &file.postings {
            let sorted = list.windows(2).all(|w| w[0].0 < w[1].0);
            if !sorted || list.iter().any(|&(d, tf)| d >= n || tf == 0) {
                return Err(Error::BadIndex(format!("malformed postings for `{term}`")));
            }
        }
        Index::assemble(file.docs, file.stopwords, file.postings)
    }
}

/// Index every passage; the `stopwords` highest document-frequency terms
/// (ties by term order) are kept out of the postings.
pub fn build_index<'a, I>(contexts: I, stopwords: usize) -> Result<Index>
where
    I: IntoIterator<Item = &'a AnnotatedContext>,
{
    let mut docs = Vec::new();
    let mut counts: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (d, ctx) in contexts.into_iter().enumerate() {
        let words = terms(ctx);
        docs.push(DocEntry {
            id: ctx.id.clone(),
            len: words.len(),
        });
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for w in words {
            *tf.entry(w).or_default() += 1;
        }
        for (w, n) in tf {
            counts.entry(w).or_default().push((d, n));
        }
    }
    let mut by_df: Vec<(&String, usize)> = counts.iter().map(|(t, p)| (t, p.len())).collect();
    by_df.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let stop: Vec<String> = by_df.into_iter().take(stopwords).map(|(t, _)| t.clone()).collect();
    for s in &stop {
        counts.remove(s);
    }
    Index::assemble(docs, stop, counts)
}

/// BM25 of `query` (terms with multiplicity) against one document.
pub fn bm25_score(index: &Index, query: &[String], doc_id: &str) -> Result<f64> {
    let len = index
        .doc_len(doc_id)
        .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
    Ok(query
        .iter()
        .map(|t| match index.term_freq(t, doc_id) {
            0 => 0.0,
            tf => index.term_weight(index.idf(t), tf, len),
        })
        .sum())
}

/// Every document scored against `query`, best first, ties by ascending id.
pub fn rank(index: &Index, query: &[String]) -> Vec<RankedHit> {
    let mut multiplicity: BTreeMap<&str, usize> = BTreeMap::new();
    for t in query {
        *multiplicity.entry(t.as_str()).or_default() += 1;
    }
    let mut scores = vec![0.0; index.docs.len()];
    for (term, times) in multiplicity {
        let Some(list) = index.postings.get(term) else {
            continue;
        };
        let idf = index.idf(term);
        for &(d, tf) in list {
            scores[d] += times as f64 * index.term_weight(idf, tf, index.docs[d].len);
        }
    }
    let mut hits: Vec<RankedHit> = index
        .docs
        .iter()
        .zip(scores)
        .map(|(d, score)| RankedHit {
            doc_id: d.id.clone(),
            score,
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    hits
}

/// `ctx` itself followed by its `k - 1` nearest indexed neighbors, at most
/// [`MAX_NEIGHBORS`] passages in total. Ids resolve through `pool`.
pub fn expand_context<'a>(
    index: &Index,
    ctx: &'a AnnotatedContext,
    k: usize,
    pool: &'a [AnnotatedContext],
) -> Result<Vec<&'a AnnotatedContext>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let k = if k > MAX_NEIGHBORS {
        log::warn!("K = {k} exceeds the neighbor cap, using {MAX_NEIGHBORS}");
        MAX_NEIGHBORS
    } else {
        k
    };
    let by_id: HashMap<&str, &AnnotatedContext> = pool.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut out = vec![ctx];
    for hit in rank(index, &index.query_terms(ctx)) {
        if out.len() >= k {
            break;
        }
        if hit.doc_id == ctx.id {
            continue;
        }
        match by_id.get(hit.doc_id.as_str()) {
            Some(c) => out.push(c),
            None => return Err(Error::UnknownDocument(hit.doc_id)),
        }
    }
    Ok(out)
}
