use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::extract::tokenize;
use super::RetrievalError;
use crate::exec::Exec;

/// One text block: a heading section of an ingested file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    /// File the block came from.
    pub source: String,
    /// Headings from the file root down to this block.
    pub heading_path: Vec<String>,
    pub text: String,
    pub keywords: BTreeSet<String>,
}

impl Document {
    /// Keyword set from the heading path; the body never contributes.
    pub fn new(id: usize, source: &str, heading_path: Vec<String>, text: String) -> Self {
        let keywords = heading_path.iter().flat_map(|h| tokenize(h)).collect();
        Document { id, source: source.to_string(), heading_path, text, keywords }
    }
}

fn heading(line: &str) -> Option<(usize, &str)> {
    let level = line.bytes().take_while(|&b| b == b'#').count();
    let rest = &line[level..];
    (level > 0 && (rest.is_empty() || rest.starts_with(' '))).then(|| (level, rest.trim()))
}

/// Split heading-marker text (`#`, `##`, ...) into blocks. Each block's path
/// starts with `root`; text before the first heading forms a block at the
/// root. Blocks with neither heading nor body are dropped.
pub fn split_sections(root: &str, text: &str) -> Vec<(Vec<String>, String)> {
    let mut out = Vec::new();
    let mut path: Vec<(usize, String)> = Vec::new();
    let mut body: Vec<&str> = Vec::new();
    let mut has_heading = false;

    let flush = |path: &[(usize, String)], body: &[&str], has_heading: bool, out: &mut Vec<(Vec<String>, String)>| {
        let text = body.join("\n").trim().to_string();
        if has_heading || !text.is_empty() {
            let mut hp = vec![root.to_string()];
            hp.extend(path.iter().map(|(_, h)| h.clone()));
            out.push((hp, text));
        }
    };

    for line in text.lines() {
        if let Some((level, title)) = heading(line) {
            flush(&path, &body, has_heading, &mut out);
            body.clear();
            while path.last().is_some_and(|(l, _)| *l >= level) {
                path.pop();
            }
            path.push((level, title.to_string()));
            has_heading = true;
        } else {
            body.push(line);
        }
    }
    flush(&path, &body, has_heading, &mut out);
    out
}

/// Blocks in id order together with the index keyword set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Parse `(file name, contents)` pairs in the order given.
    pub fn from_texts<'a>(files: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut documents = Vec::new();
        for (name, text) in files {
            let root = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name);
            for (path, body) in split_sections(root, text) {
                documents.push(Document::new(documents.len(), name, path, body));
            }
        }
        Corpus { documents }
    }

    /// Every regular file in `dir`, in file-name order.
    pub fn ingest_dir(dir: &Path) -> Result<Self, RetrievalError> {
        let io = |e: std::io::Error| RetrievalError::Io { path: dir.display().to_string(), source: e };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(io)?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut texts = Vec::with_capacity(files.len());
        for p in &files {
            let text = std::fs::read_to_string(p).map_err(|e| RetrievalError::Io { path: p.display().to_string(), source: e })?;
            let name = p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            texts.push((name, text));
        }
        Ok(Self::from_texts(texts.iter().map(|(n, t)| (n.as_str(), t.as_str()))))
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Union of all block keyword sets.
    pub fn keyword_index(&self) -> BTreeSet<String> {
        self.documents.iter().flat_map(|d| d.keywords.iter().cloned()).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.text.as_str()).collect()
    }
}

/// Number of query keywords present in each block's keyword set.
pub fn score_documents(keywords: &BTreeSet<String>, documents: &[Document], exec: Exec) -> Vec<usize> {
    exec.map(documents, |d| keywords.iter().filter(|w| d.keywords.contains(*w)).count())
}

/// Indices of the `g` highest scores, ties by ascending index.
pub fn top_g(scores: &[usize], g: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(g);
    idx
}
