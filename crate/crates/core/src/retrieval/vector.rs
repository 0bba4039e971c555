use std::collections::BTreeMap;

use super::extract::tokenize;
use crate::exec::Exec;

/// Maps text to a vector of fixed length [`Embedder::dim`].
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Bag-of-words TF-IDF over the vocabulary of a fitted corpus, with smoothed
/// idf `ln((1 + n) / (1 + df)) + 1`. Out-of-vocabulary terms are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfEmbedder {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfEmbedder {
    pub fn fit<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            let mut terms = tokenize(t.as_ref());
            terms.sort();
            terms.dedup();
            for term in terms {
                *df.entry(term).or_default() += 1;
            }
        }
        let n = texts.len() as f64;
        let idf = df.values().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let vocab = df.into_keys().enumerate().map(|(i, t)| (t, i)).collect();
        TfIdfEmbedder { vocab, idf }
    }
}

impl Embedder for TfIdfEmbedder {
    fn dim(&self) -> usize {
        self.idf.len()
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.idf.len()];
        for term in tokenize(text) {
            if let Some(&i) = self.vocab.get(&term) {
                v[i] += self.idf[i];
            }
        }
        v
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorHits {
    /// `(document index, similarity)` with positive similarity, best first.
    pub hits: Vec<(usize, f64)>,
    /// Set when no document shares any vocabulary with the query.
    pub no_match: bool,
}

/// The `top_k` most similar documents to `query`, ties by ascending index.
/// Zero-similarity documents are never returned.
pub fn vector_retrieve(query: &str, doc_vectors: &[Vec<f64>], embedder: &dyn Embedder, top_k: usize, exec: Exec) -> VectorHits {
    let q = embedder.embed(query);
    let sims = exec.map(doc_vectors, |d| cosine(&q, d));
    let mut hits: Vec<(usize, f64)> = sims.into_iter().enumerate().filter(|&(_, s)| s > 0.0).collect();
    let no_match = hits.is_empty();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits.truncate(top_k);
    VectorHits { hits, no_match }
}
