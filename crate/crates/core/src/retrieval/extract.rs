//! Pluggable query-understanding functions. The defaults are deterministic
//! lexical stand-ins for model-backed extractors.

use std::collections::{BTreeMap, BTreeSet};

use super::graph::{parse_triplets, KnowledgeGraph, Triplet};
use super::RetrievalError;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Lowercase and collapse internal whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

pub trait KeywordExtractor: Send + Sync {
    fn keywords(&self, query: &str) -> BTreeSet<String>;
}

pub trait EntityRecognizer: Send + Sync {
    fn entities(&self, query: &str, graph: &KnowledgeGraph) -> BTreeSet<String>;
}

pub trait SynonymSource: Send + Sync {
    fn synonyms(&self, entity: &str) -> Vec<String>;
}

pub trait TripletExtractor: Send + Sync {
    fn triplets(&self, text: &str) -> Result<Vec<Triplet>, RetrievalError>;
}

/// Every token of the query.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconTokenizer;

impl KeywordExtractor for LexiconTokenizer {
    fn keywords(&self, query: &str) -> BTreeSet<String> {
        tokenize(query).into_iter().collect()
    }
}

/// Graph nodes whose token sequence occurs contiguously in the query.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchEntities;

impl EntityRecognizer for ExactMatchEntities {
    fn entities(&self, query: &str, graph: &KnowledgeGraph) -> BTreeSet<String> {
        let padded = format!(" {} ", tokenize(query).join(" "));
        graph
            .nodes()
            .filter(|n| {
                let t = tokenize(n);
                !t.is_empty() && padded.contains(&format!(" {} ", t.join(" ")))
            })
            .map(str::to_string)
            .collect()
    }
}

/// Plain lookup table; no transitive closure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymDictionary {
    pub entries: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymDictionary {
    /// One tab-separated line per term: `term<TAB>syn<TAB>syn...`. Blank
    /// lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, RetrievalError> {
        let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<String> = line.split('\t').map(normalize).collect();
            if fields.len() < 2 || fields.iter().any(String::is_empty) {
                return Err(RetrievalError::Malformed { line: i + 1, reason: "expected term and at least one synonym".into() });
            }
            entries.entry(fields[0].clone()).or_default().extend(fields[1..].iter().cloned());
        }
        Ok(SynonymDictionary { entries })
    }
}

impl SynonymSource for SynonymDictionary {
    fn synonyms(&self, entity: &str) -> Vec<String> {
        self.entries.get(&normalize(entity)).map(|s| s.iter().cloned().collect()).unwrap_or_default()
    }
}

/// Reads pre-extracted tab-separated triplets.
#[derive(Debug, Clone, Copy, Default)]
pub struct TsvTriplets;

impl TripletExtractor for TsvTriplets {
    fn triplets(&self, text: &str) -> Result<Vec<Triplet>, RetrievalError> {
        parse_triplets(text)
    }
}

/// The four extractor slots used by a hybrid query.
pub struct Extractors {
    pub keyword: Box<dyn KeywordExtractor>,
    pub entity: Box<dyn EntityRecognizer>,
    pub synonym: Box<dyn SynonymSource>,
    pub triplet: Box<dyn TripletExtractor>,
}

impl Default for Extractors {
    fn default() -> Self {
        Extractors {
            keyword: Box::new(LexiconTokenizer),
            entity: Box::new(ExactMatchEntities),
            synonym: Box::new(SynonymDictionary::default()),
            triplet: Box::new(TsvTriplets),
        }
    }
}

impl Extractors {
    pub fn with_synonyms(synonyms: SynonymDictionary) -> Self {
        Extractors { synonym: Box::new(synonyms), ..Self::default() }
    }
}

/// `entities` together with all their synonyms, normalized.
pub fn expand_set(entities: &BTreeSet<String>, synonyms: &dyn SynonymSource) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = entities.iter().map(|e| normalize(e)).collect();
    for e in entities {
        out.extend(synonyms.synonyms(e).iter().map(|s| normalize(s)));
    }
    out
}

/// Recognized query entities plus their synonyms.
pub fn expand_entities(query: &str, graph: &KnowledgeGraph, extractors: &Extractors) -> BTreeSet<String> {
    expand_set(&extractors.entity.entities(query, graph), extractors.synonym.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph::from_triplets(parse_triplets("ground user\toffloads to\tuav\nuav\tconsumes\tpropulsion energy\n").unwrap())
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("UAV-assisted MEC, 2 users!"), vec!["uav", "assisted", "mec", "2", "users"]);
    }

    #[test]
    fn multiword_entities_match_on_token_boundaries() {
        let e = ExactMatchEntities.entities("How much Propulsion Energy does a UAV use?", &graph());
        assert_eq!(e.into_iter().collect::<Vec<_>>(), vec!["propulsion energy", "uav"]);
        assert!(ExactMatchEntities.entities("uavs", &graph()).is_empty());
    }

    #[test]
    fn empty_dictionary_keeps_entities() {
        let x = Extractors::default();
        let e = x.entity.entities("uav", &graph());
        assert_eq!(expand_entities("uav", &graph(), &x), e);
    }

    #[test]
    fn synonyms_grow_the_set_by_at_most_their_count() {
        let dict = SynonymDictionary::parse("uav\tdrone\tquadcopter\n").unwrap();
        let x = Extractors::with_synonyms(dict);
        let out = expand_entities("the uav", &graph(), &x);
        assert_eq!(out.len(), 3);
        let dict = SynonymDictionary::parse("uav\tuav\tdrone\n").unwrap();
        let out = expand_entities("the uav", &graph(), &Extractors::with_synonyms(dict));
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn dictionary_reports_bad_lines() {
        let err = SynonymDictionary::parse("# c\nuav\tdrone\nlonely\n").unwrap_err();
        assert!(matches!(err, RetrievalError::Malformed { line: 3, .. }));
    }
}
