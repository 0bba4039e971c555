use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Keyword,
    Graph,
    Vector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FusedItem {
    pub text: String,
    pub sources: Vec<Source>,
}

/// Set union of the three result lists. Each distinct text appears once with
/// every list it came from. Items are grouped by their first source in the
/// order keyword, graph, vector and sorted within each group.
pub fn fuse(keyword: &[String], graph: &[String], vector: &[String]) -> Vec<FusedItem> {
    let mut provenance: BTreeMap<&str, BTreeSet<Source>> = BTreeMap::new();
    for (src, items) in [(Source::Keyword, keyword), (Source::Graph, graph), (Source::Vector, vector)] {
        for it in items {
            provenance.entry(it.as_str()).or_default().insert(src);
        }
    }
    let mut out: Vec<FusedItem> = provenance
        .into_iter()
        .map(|(text, s)| FusedItem { text: text.to_string(), sources: s.into_iter().collect() })
        .collect();
    out.sort_by(|a, b| a.sources[0].cmp(&b.sources[0]).then_with(|| a.text.cmp(&b.text)));
    out
}
