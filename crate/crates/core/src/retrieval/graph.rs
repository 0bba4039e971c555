use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::extract::normalize;
use super::RetrievalError;

/// Directed labeled edge `subject --predicate--> object`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triplet {
    /// Normalizes case and whitespace; all three parts must be non-empty.
    pub fn new(subject: &str, predicate: &str, object: &str) -> Option<Self> {
        let t = Triplet { subject: normalize(subject), predicate: normalize(predicate), object: normalize(object) };
        (!t.subject.is_empty() && !t.predicate.is_empty() && !t.object.is_empty()).then_some(t)
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// One `subject<TAB>predicate<TAB>object` record per line. Blank lines and
/// `#` comments are skipped; anything else is an error naming the line.
pub fn parse_triplets(text: &str) -> Result<Vec<Triplet>, RetrievalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(RetrievalError::Malformed { line: i + 1, reason: format!("expected 3 tab-separated fields, found {}", fields.len()) });
        }
        let t = Triplet::new(fields[0], fields[1], fields[2])
            .ok_or_else(|| RetrievalError::Malformed { line: i + 1, reason: "empty field".into() })?;
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub duplicates_dropped: usize,
}

/// Deduplicated triplet graph with an undirected adjacency index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeGraph {
    edges: Vec<Triplet>,
    /// Node to indices of incident edges, in either direction.
    adjacency: BTreeMap<String, Vec<usize>>,
    duplicates_dropped: usize,
}

impl KnowledgeGraph {
    pub fn from_triplets(triplets: impl IntoIterator<Item = Triplet>) -> Self {
        let mut g = KnowledgeGraph::default();
        let mut seen = BTreeSet::new();
        for t in triplets {
            if !seen.insert(t.clone()) {
                g.duplicates_dropped += 1;
                continue;
            }
            let idx = g.edges.len();
            g.adjacency.entry(t.subject.clone()).or_default().push(idx);
            let obj = g.adjacency.entry(t.object.clone()).or_default();
            if t.object != t.subject {
                obj.push(idx);
            }
            g.edges.push(t);
        }
        g
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats { nodes: self.adjacency.len(), edges: self.edges.len(), duplicates_dropped: self.duplicates_dropped }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.adjacency.keys().map(String::as_str)
    }

    pub fn edges(&self) -> &[Triplet] {
        &self.edges
    }

    pub fn contains(&self, node: &str) -> bool {
        self.adjacency.contains_key(node)
    }

    fn neighbor(&self, edge: usize, from: &str) -> &str {
        let t = &self.edges[edge];
        if t.subject == from {
            &t.object
        } else {
            &t.subject
        }
    }
}

/// Edges reachable within `depth` hops of any seed present in the graph,
/// following edges in both directions. Rendered as `"s p o"`, sorted.
pub fn traverse(graph: &KnowledgeGraph, seeds: &BTreeSet<String>, depth: usize) -> Vec<String> {
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in seeds {
        if let Some((node, _)) = graph.adjacency.get_key_value(s.as_str()) {
            dist.insert(node.as_str(), 0);
            queue.push_back(node.as_str());
        }
    }
    let mut picked = BTreeSet::new();
    while let Some(node) = queue.pop_front() {
        let d = dist[node];
        if d >= depth {
            continue;
        }
        for &e in &graph.adjacency[node] {
            picked.insert(e);
            let next = graph.neighbor(e, node);
            if !dist.contains_key(next) {
                dist.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }
    let rendered: BTreeSet<String> = picked.into_iter().map(|e| graph.edges[e].to_string()).collect();
    rendered.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(s: &[&str]) -> BTreeSet<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_triplets(parse_triplets("A\tp1\tB\nB\tp2\tC\n").unwrap())
    }

    #[test]
    fn chain_depths() {
        let g = chain();
        assert!(traverse(&g, &seeds(&["a"]), 0).is_empty());
        assert_eq!(traverse(&g, &seeds(&["a"]), 1), vec!["a p1 b"]);
        assert_eq!(traverse(&g, &seeds(&["a"]), 2), vec!["a p1 b", "b p2 c"]);
        assert_eq!(traverse(&g, &seeds(&["c"]), 1), vec!["b p2 c"]);
    }

    #[test]
    fn absent_seeds_contribute_nothing() {
        assert!(traverse(&chain(), &seeds(&["z"]), 5).is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        let g = KnowledgeGraph::from_triplets(parse_triplets("a\tr\tb\nA\tR\tB\n").unwrap());
        assert_eq!(g.stats(), GraphStats { nodes: 2, edges: 1, duplicates_dropped: 1 });
    }

    #[test]
    fn hub_node() {
        let g = KnowledgeGraph::from_triplets(parse_triplets("h\tr\tx\nh\tr\ty\nh\tq\tx\n").unwrap());
        assert_eq!(g.stats().nodes, 3);
        assert_eq!(g.stats().edges, 3);
        assert_eq!(g.adjacency["h"].len(), 3);
    }

    #[test]
    fn self_loop_is_listed_once() {
        let g = KnowledgeGraph::from_triplets(parse_triplets("a\tr\ta\n").unwrap());
        assert_eq!(traverse(&g, &seeds(&["a"]), 3), vec!["a r a"]);
    }

    #[test]
    fn malformed_lines_are_located() {
        let err = parse_triplets("a\tb\tc\n\n# note\na\tb\n").unwrap_err();
        assert!(matches!(err, RetrievalError::Malformed { line: 4, .. }), "{err:?}");
        let err = parse_triplets("a\t \tc\n").unwrap_err();
        assert!(matches!(err, RetrievalError::Malformed { line: 1, .. }));
    }
}
