//! Hybrid retrieval: keyword-set scoring over heading-indexed text blocks,
//! knowledge-graph traversal from recognized entities, TF-IDF vector search,
//! and a provenance-keeping union of the three.

mod corpus;
mod extract;
mod fuse;
mod graph;
mod vector;

pub use corpus::{score_documents, split_sections, top_g, Corpus, Document};
pub use extract::{
    expand_entities, expand_set, normalize, tokenize, EntityRecognizer, ExactMatchEntities, Extractors, KeywordExtractor,
    LexiconTokenizer, SynonymDictionary, SynonymSource, TripletExtractor, TsvTriplets,
};
pub use fuse::{fuse, FusedItem, Source};
pub use graph::{parse_triplets, traverse, GraphStats, KnowledgeGraph, Triplet};
pub use vector::{cosine, vector_retrieve, Embedder, TfIdfEmbedder, VectorHits};

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("index file: {0}")]
    Index(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    Keyword,
    Graph,
    Vector,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryParams {
    /// Keyword blocks kept.
    pub g_top: usize,
    /// Graph traversal depth in hops.
    pub depth: usize,
    /// Vector hits kept.
    pub top_k: usize,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams { g_top: 3, depth: 2, top_k: 3 }
    }
}

/// Serializable ingest result: text blocks plus the triplet list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IndexFile {
    pub corpus: Corpus,
    pub triplets: Vec<Triplet>,
}

impl IndexFile {
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| RetrievalError::Index(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| RetrievalError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::Io { path: path.display().to_string(), source: e })?;
        serde_json::from_str(&text).map_err(|e| RetrievalError::Index(e.to_string()))
    }
}

/// Immutable query-ready index. Safe to share across threads.
pub struct RetrievalIndex {
    pub corpus: Corpus,
    pub graph: KnowledgeGraph,
    keyword_index: BTreeSet<String>,
    embedder: TfIdfEmbedder,
    doc_vectors: Vec<Vec<f64>>,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub items: Vec<FusedItem>,
    /// Query keywords that survived the index filter.
    pub keywords: BTreeSet<String>,
    /// Entities after synonym expansion.
    pub entities: BTreeSet<String>,
    /// True when the vector stage ran and found nothing similar.
    pub vector_no_match: bool,
}

impl RetrievalIndex {
    pub fn build(corpus: Corpus, triplets: Vec<Triplet>) -> Self {
        let texts = corpus.texts();
        let embedder = TfIdfEmbedder::fit(&texts);
        let doc_vectors = texts.iter().map(|t| embedder.embed(t)).collect();
        let keyword_index = corpus.keyword_index();
        RetrievalIndex { graph: KnowledgeGraph::from_triplets(triplets), corpus, keyword_index, embedder, doc_vectors, exec: Exec::default() }
    }

    pub fn from_file(file: IndexFile) -> Self {
        Self::build(file.corpus, file.triplets)
    }

    pub fn keyword_index(&self) -> &BTreeSet<String> {
        &self.keyword_index
    }

    /// Block indices chosen by keyword overlap.
    pub fn keyword_blocks(&self, keywords: &BTreeSet<String>, g_top: usize) -> Vec<usize> {
        top_g(&score_documents(keywords, &self.corpus.documents, self.exec), g_top)
    }

    pub fn vector_hits(&self, query: &str, top_k: usize) -> VectorHits {
        vector_retrieve(query, &self.doc_vectors, &self.embedder, top_k, self.exec)
    }

    pub fn query(&self, query: &str, mode: QueryMode, params: QueryParams, extractors: &Extractors) -> QueryResult {
        let use_kw = matches!(mode, QueryMode::Keyword | QueryMode::Hybrid);
        let use_graph = matches!(mode, QueryMode::Graph | QueryMode::Hybrid);
        let use_vec = matches!(mode, QueryMode::Vector | QueryMode::Hybrid);
        let text_of = |i: usize| self.corpus.documents[i].text.clone();

        let keywords: BTreeSet<String> = if use_kw {
            extractors.keyword.keywords(query).intersection(&self.keyword_index).cloned().collect()
        } else {
            BTreeSet::new()
        };
        let kw_items: Vec<String> = if use_kw { self.keyword_blocks(&keywords, params.g_top).into_iter().map(text_of).collect() } else { vec![] };

        let entities = if use_graph { expand_entities(query, &self.graph, extractors) } else { BTreeSet::new() };
        let graph_items = if use_graph { traverse(&self.graph, &entities, params.depth) } else { vec![] };

        let (vec_items, vector_no_match) = if use_vec {
            let hits = self.vector_hits(query, params.top_k);
            (hits.hits.iter().map(|&(i, _)| text_of(i)).collect(), hits.no_match)
        } else {
            (vec![], false)
        };

        QueryResult { items: fuse(&kw_items, &graph_items, &vec_items), keywords, entities, vector_no_match }
    }
}
