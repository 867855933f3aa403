//! Diagnosis-category tree: loading, code lookup, root paths and label
//! propagation from leaves to their ancestors.
//!
//! The on-disk format is one JSON object per line:
//!
//! ```text
//! {"format":"distsum-hierarchy","version":1}
//! {"id":"neo","name":"Neoplasm","description":"Neoplasm","parent":null,"codes":[]}
//! {"id":"neo.brain","name":"Brain","description":"Malignant neoplasm of brain","parent":"neo","codes":["191"]}
//! ```
//!
//! The header line is optional. Unknown fields on any line are ignored so
//! documents extended by other tools still load.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

pub const HIERARCHY_FORMAT: &str = "distsum-hierarchy";
pub const HIERARCHY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported hierarchy version {0}")]
    Version(u32),
    #[error("duplicate category id {0:?}")]
    DuplicateId(String),
    #[error("category {child:?} names unknown parent {parent:?}")]
    UnknownParent { child: String, parent: String },
    #[error("cycle detected through category {0:?}")]
    Cycle(String),
    #[error("code {code:?} claimed by both {first:?} and {second:?}")]
    CodeConflict {
        code: String,
        first: String,
        second: String,
    },
    #[error("non-leaf category {0:?} carries codes")]
    CodesOnNonLeaf(String),
    #[error("malformed code pattern {0:?}")]
    BadPattern(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("label supplied for non-leaf category {0:?}")]
    NonLeafLabel(String),
}

pub type Result<T> = std::result::Result<T, HierarchyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeSystem {
    #[serde(rename = "ICD9")]
    Icd9,
    #[serde(rename = "ICD10")]
    Icd10,
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeSystem::Icd9 => f.write_str("ICD9"),
            CodeSystem::Icd10 => f.write_str("ICD10"),
        }
    }
}

/// A leaf code pattern: either an exact code or an inclusive range over the
/// integer part of a code ("420-429" covers 420, 420.1, ..., 429.9).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodePattern {
    Exact(String),
    Range { prefix: String, lo: u32, hi: u32 },
}

/// Uppercase and trim; codes are compared in this form everywhere.
pub fn normalize_code(code: &str) -> String {
    code.trim().to_ascii_uppercase()
}

/// Splits a normalized code into its alphabetic prefix and integer part,
/// e.g. "V10.3" -> ("V", 10). Returns `None` when there is no integer part.
fn integer_part(code: &str) -> Option<(&str, u32)> {
    let head = code.split('.').next().unwrap_or("");
    let digits_at = head.find(|c: char| c.is_ascii_digit())?;
    let (prefix, digits) = head.split_at(digits_at);
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(|n| (prefix, n))
}

impl CodePattern {
    pub fn parse(raw: &str) -> Result<Self> {
        let norm = normalize_code(raw);
        if norm.is_empty() {
            return Err(HierarchyError::BadPattern(raw.to_string()));
        }
        if let Some((lo, hi)) = norm.split_once('-') {
            let (lp, ln) =
                integer_part(lo).ok_or_else(|| HierarchyError::BadPattern(raw.to_string()))?;
            let (hp, hn) =
                integer_part(hi).ok_or_else(|| HierarchyError::BadPattern(raw.to_string()))?;
            if lp != hp || ln > hn || lo.contains('.') || hi.contains('.') {
                return Err(HierarchyError::BadPattern(raw.to_string()));
            }
            return Ok(CodePattern::Range {
                prefix: lp.to_string(),
                lo: ln,
                hi: hn,
            });
        }
        Ok(CodePattern::Exact(norm))
    }

    /// `code` must already be normalized.
    pub fn matches(&self, code: &str) -> bool {
        match self {
            CodePattern::Exact(c) => c == code,
            CodePattern::Range { prefix, lo, hi } => match integer_part(code) {
                Some((p, n)) => p == prefix && (*lo..=*hi).contains(&n),
                None => false,
            },
        }
    }

    fn overlaps(&self, other: &CodePattern) -> Option<String> {
        match (self, other) {
            (CodePattern::Exact(a), b) | (b, CodePattern::Exact(a)) if b.matches(a) => {
                Some(a.clone())
            }
            (
                CodePattern::Range { prefix: p1, lo: l1, hi: h1 },
                CodePattern::Range { prefix: p2, lo: l2, hi: h2 },
            ) if p1 == p2 && l1.max(l2) <= h1.min(h2) => Some(format!("{p1}{}", l1.max(l2))),
            _ => None,
        }
    }
}

impl fmt::Display for CodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodePattern::Exact(c) => f.write_str(c),
            CodePattern::Range { prefix, lo, hi } => write!(f, "{prefix}{lo}-{prefix}{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryNode {
    pub id: String,
    pub name: String,
    pub description: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub codes: Vec<CodePattern>,
    /// Top-level categories have depth 1.
    pub depth: usize,
    raw_codes: Vec<String>,
}

impl CategoryNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_top_level(&self) -> bool {
        self.parent.is_none()
    }
}

/// Lookup from normalized code to the leaf claiming it.
#[derive(Debug, Clone, Default)]
pub struct CodeIndex {
    exact: HashMap<String, usize>,
    ranges: Vec<(CodePattern, usize)>,
}

impl CodeIndex {
    pub fn get(&self, code: &str) -> Option<usize> {
        if let Some(&leaf) = self.exact.get(code) {
            return Some(leaf);
        }
        self.ranges
            .iter()
            .find(|(p, _)| p.matches(code))
            .map(|&(_, leaf)| leaf)
    }

    /// Number of exact codes plus number of ranges.
    pub fn len(&self) -> usize {
        self.exact.len() + self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat ICD-10 -> ICD-9 equivalence table.
#[derive(Debug, Clone, Default)]
pub struct GemMap {
    map: HashMap<String, String>,
}

impl GemMap {
    /// Parses two-column text (tab, comma or whitespace separated). Lines
    /// starting with `#` are comments. When a source code is listed twice the
    /// first target wins.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line
                .split(|c: char| c == ',' || c == '\t' || c.is_whitespace())
                .filter(|s| !s.is_empty());
            let (src, dst) = match (cols.next(), cols.next()) {
                (Some(s), Some(d)) => (normalize_code(s), normalize_code(d)),
                _ => {
                    return Err(HierarchyError::Parse {
                        line: i + 1,
                        message: "expected two columns".into(),
                    })
                }
            };
            match map.get(&src) {
                Some(existing) if existing != &dst => {
                    warn!(source = %src, kept = %existing, dropped = %dst, "GEM collision, keeping first entry");
                }
                Some(_) => {}
                None => {
                    map.insert(src, dst);
                }
            }
        }
        Ok(GemMap { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| HierarchyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, icd10: &str) -> Option<&str> {
        self.map.get(icd10).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryLabel {
    Positive,
    Negative,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafLabel {
    Positive,
    Negative,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    codes: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct HeaderRecord {
    format: String,
    #[serde(default)]
    version: Option<u32>,
}

/// Immutable category forest. Top-level categories are roots; there is no
/// synthetic super-root.
#[derive(Debug, Clone)]
pub struct DiagnosisHierarchy {
    nodes: Vec<CategoryNode>,
    by_id: HashMap<String, usize>,
    top_level: Vec<usize>,
    code_index: CodeIndex,
    gem: Option<GemMap>,
}

/// Input for building a hierarchy programmatically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: String,
    pub name: String,
    pub description: String,
    pub parent: Option<String>,
    pub codes: Vec<String>,
}

impl NodeSpec {
    pub fn new(id: &str, parent: Option<&str>, description: &str, codes: &[&str]) -> Self {
        NodeSpec {
            id: id.to_string(),
            name: id.to_string(),
            description: description.to_string(),
            parent: parent.map(str::to_string),
            codes: codes.iter().map(|c| c.to_string()).collect(),
        }
    }
}

impl DiagnosisHierarchy {
    pub fn from_specs(specs: Vec<NodeSpec>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(HierarchyError::DuplicateId(s.id.clone()));
            }
        }
        let mut nodes = Vec::with_capacity(specs.len());
        for s in &specs {
            let parent = match &s.parent {
                Some(p) => Some(*by_id.get(p).ok_or_else(|| HierarchyError::UnknownParent {
                    child: s.id.clone(),
                    parent: p.clone(),
                })?),
                None => None,
            };
            let codes = s
                .codes
                .iter()
                .map(|c| CodePattern::parse(c))
                .collect::<Result<Vec<_>>>()?;
            nodes.push(CategoryNode {
                id: s.id.clone(),
                name: s.name.clone(),
                description: s.description.clone(),
                parent,
                children: Vec::new(),
                codes,
                depth: 0,
                raw_codes: s.codes.clone(),
            });
        }
        for i in 0..nodes.len() {
            if let Some(p) = nodes[i].parent {
                nodes[p].children.push(i);
            }
        }
        let top_level: Vec<usize> = (0..nodes.len())
            .filter(|&i| nodes[i].parent.is_none())
            .collect();

        // Breadth-first from the roots; anything unreached sits on a cycle.
        let mut queue: std::collections::VecDeque<usize> = top_level.iter().copied().collect();
        for &r in &top_level {
            nodes[r].depth = 1;
        }
        while let Some(n) = queue.pop_front() {
            let d = nodes[n].depth;
            for c in nodes[n].children.clone() {
                nodes[c].depth = d + 1;
                queue.push_back(c);
            }
        }
        if let Some(n) = nodes.iter().find(|n| n.depth == 0) {
            return Err(HierarchyError::Cycle(n.id.clone()));
        }

        let mut code_index = CodeIndex::default();
        let mut claimed: Vec<(CodePattern, usize)> = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.codes.is_empty() {
                continue;
            }
            if !n.is_leaf() {
                return Err(HierarchyError::CodesOnNonLeaf(n.id.clone()));
            }
            for pat in &n.codes {
                for (other, owner) in &claimed {
                    if *owner == i {
                        continue;
                    }
                    if let Some(code) = pat.overlaps(other) {
                        return Err(HierarchyError::CodeConflict {
                            code,
                            first: nodes[*owner].id.clone(),
                            second: n.id.clone(),
                        });
                    }
                }
                claimed.push((pat.clone(), i));
                match pat {
                    CodePattern::Exact(c) => {
                        code_index.exact.insert(c.clone(), i);
                    }
                    CodePattern::Range { .. } => code_index.ranges.push((pat.clone(), i)),
                }
            }
        }

        Ok(DiagnosisHierarchy {
            nodes,
            by_id,
            top_level,
            code_index,
            gem: None,
        })
    }

    /// Parses the line-delimited document format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut specs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| HierarchyError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if value.get("id").is_none() && value.get("format").is_some() {
                let header: HeaderRecord =
                    serde_json::from_value(value).map_err(|e| HierarchyError::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                if header.format != HIERARCHY_FORMAT {
                    return Err(HierarchyError::Parse {
                        line: i + 1,
                        message: format!("unexpected format {:?}", header.format),
                    });
                }
                match header.version {
                    Some(v) if v > HIERARCHY_VERSION => return Err(HierarchyError::Version(v)),
                    _ => {}
                }
                continue;
            }
            let rec: NodeRecord =
                serde_json::from_value(value).map_err(|e| HierarchyError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let name = if rec.name.is_empty() {
                rec.id.clone()
            } else {
                rec.name
            };
            // Top-level categories without a description use their name.
            let description = if rec.description.trim().is_empty() {
                name.clone()
            } else {
                rec.description
            };
            specs.push(NodeSpec {
                id: rec.id,
                name,
                description,
                parent: rec.parent,
                codes: rec.codes,
            });
        }
        Self::from_specs(specs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| HierarchyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn with_gem(mut self, gem: GemMap) -> Self {
        self.gem = Some(gem);
        self
    }

    pub fn gem(&self) -> Option<&GemMap> {
        self.gem.as_ref()
    }

    /// Serializes back to the line-delimited format, header first.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{}",
            serde_json::json!({"format": HIERARCHY_FORMAT, "version": HIERARCHY_VERSION})
        )?;
        for n in &self.nodes {
            let rec = NodeRecord {
                id: n.id.clone(),
                name: n.name.clone(),
                description: n.description.clone(),
                parent: n.parent.map(|p| self.nodes[p].id.clone()),
                codes: n.raw_codes.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("node record"))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[CategoryNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &CategoryNode {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&CategoryNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| HierarchyError::UnknownCategory(id.to_string()))
    }

    pub fn top_level(&self) -> &[usize] {
        &self.top_level
    }

    pub fn code_index(&self) -> &CodeIndex {
        &self.code_index
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Node count per depth, index 0 holding depth 1.
    pub fn depth_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.max_depth()];
        for n in &self.nodes {
            h[n.depth - 1] += 1;
        }
        h
    }

    /// Leaf claiming `code`, translating ICD-10 codes through the GEM table
    /// first when an entry exists.
    pub fn map_code(&self, code: &str, system: CodeSystem) -> Option<usize> {
        let norm = normalize_code(code);
        if norm.is_empty() {
            return None;
        }
        if system == CodeSystem::Icd10 {
            if let Some(target) = self.gem.as_ref().and_then(|g| g.get(&norm)) {
                return self.code_index.get(target);
            }
        }
        self.code_index.get(&norm)
    }

    /// Same as [`map_code`](Self::map_code) but returns the category id.
    pub fn map_code_id(&self, code: &str, system: CodeSystem) -> Option<&str> {
        self.map_code(code, system)
            .map(|i| self.nodes[i].id.as_str())
    }

    /// Indices from the top-level ancestor down to `idx`, inclusive.
    pub fn path_indices(&self, idx: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.nodes[idx].depth);
        let mut cur = Some(idx);
        while let Some(c) = cur {
            path.push(c);
            cur = self.nodes[c].parent;
        }
        path.reverse();
        path
    }

    pub fn path_to(&self, id: &str) -> Result<Vec<&str>> {
        let idx = self.require(id)?;
        Ok(self
            .path_indices(idx)
            .into_iter()
            .map(|i| self.nodes[i].id.as_str())
            .collect())
    }

    /// Descriptions along the root path, in order.
    pub fn path_descriptions(&self, idx: usize) -> Vec<&str> {
        self.path_indices(idx)
            .into_iter()
            .map(|i| self.nodes[i].description.as_str())
            .collect()
    }

    /// Index-based propagation; `leaf_labels` must only hold leaves.
    pub fn propagate_indices(&self, leaf_labels: &HashMap<usize, LeafLabel>) -> Result<Vec<CategoryLabel>> {
        for &l in leaf_labels.keys() {
            if !self.nodes[l].is_leaf() {
                return Err(HierarchyError::NonLeafLabel(self.nodes[l].id.clone()));
            }
        }
        let n = self.nodes.len();
        let mut has_pos = vec![false; n];
        let mut has_neg = vec![false; n];
        for (&leaf, &lab) in leaf_labels {
            let flag = match lab {
                LeafLabel::Positive => &mut has_pos,
                LeafLabel::Negative => &mut has_neg,
            };
            let mut cur = Some(leaf);
            while let Some(c) = cur {
                flag[c] = true;
                cur = self.nodes[c].parent;
            }
        }
        Ok((0..n)
            .map(|i| {
                if has_pos[i] {
                    CategoryLabel::Positive
                } else if has_neg[i] {
                    CategoryLabel::Negative
                } else {
                    CategoryLabel::Excluded
                }
            })
            .collect())
    }

    /// Extends leaf labels to every category: positive with any positive
    /// descendant, negative with only negative labeled descendants, excluded
    /// otherwise.
    pub fn propagate_labels(
        &self,
        leaf_labels: &BTreeMap<String, LeafLabel>,
    ) -> Result<BTreeMap<String, CategoryLabel>> {
        let mut by_idx = HashMap::with_capacity(leaf_labels.len());
        for (id, &lab) in leaf_labels {
            by_idx.insert(self.require(id)?, lab);
        }
        let labels = self.propagate_indices(&by_idx)?;
        Ok(self
            .nodes
            .iter()
            .zip(labels)
            .map(|(n, l)| (n.id.clone(), l))
            .collect())
    }
}

/// Reads a hierarchy and, optionally, a GEM table.
pub fn load_hierarchy(path: &Path, gem: Option<&Path>) -> Result<DiagnosisHierarchy> {
    let h = DiagnosisHierarchy::load(path)?;
    match gem {
        Some(g) => Ok(h.with_gem(GemMap::load(g)?)),
        None => Ok(h),
    }
}

/// Streams records from a reader; used by tests and tools that hold the
/// document in memory.
pub fn read_hierarchy<R: std::io::Read>(r: R) -> Result<DiagnosisHierarchy> {
    let mut text = String::new();
    BufReader::new(r)
        .lines()
        .enumerate()
        .try_for_each(|(i, l)| match l {
            Ok(l) => {
                text.push_str(&l);
                text.push('\n');
                Ok(())
            }
            Err(e) => Err(HierarchyError::Parse {
                line: i + 1,
                message: e.to_string(),
            }),
        })?;
    DiagnosisHierarchy::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// a
    /// ├── a1
    /// │   ├── a1x  (420-429)
    /// │   └── a1y  (432.0)
    /// └── a2       (191)
    /// b
    /// └── b1       (V10-V15)
    fn seven() -> DiagnosisHierarchy {
        DiagnosisHierarchy::from_specs(vec![
            NodeSpec::new("a", None, "Alpha", &[]),
            NodeSpec::new("a1", Some("a"), "Alpha one", &[]),
            NodeSpec::new("a1x", Some("a1"), "Other forms of heart disease", &["420-429"]),
            NodeSpec::new("a1y", Some("a1"), "Subdural hemorrhage", &["432.0"]),
            NodeSpec::new("a2", Some("a"), "Malignant neoplasm of brain", &["191"]),
            NodeSpec::new("b", None, "Beta", &[]),
            NodeSpec::new("b1", Some("b"), "History of malignancy", &["V10-V15"]),
        ])
        .unwrap()
    }

    #[test]
    fn single_node() {
        let h = DiagnosisHierarchy::parse(
            r#"{"id":"x","name":"X","description":"","parent":null,"codes":["123"]}"#,
        )
        .unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.node(0).depth, 1);
        assert_eq!(h.code_index().len(), 1);
        // empty description falls back to the name
        assert_eq!(h.node(0).description, "X");
    }

    #[test]
    fn range_membership_matches_enumeration() {
        let h = seven();
        let leaf = h.index_of("a1x");
        for n in 400..440u32 {
            for suffix in ["", ".0", ".9"] {
                let code = format!("{n}{suffix}");
                let expect = if (420..=429).contains(&n) { leaf } else { None };
                if n == 432 && suffix == ".0" {
                    assert_eq!(h.map_code(&code, CodeSystem::Icd9), h.index_of("a1y"));
                } else {
                    assert_eq!(h.map_code(&code, CodeSystem::Icd9), expect, "{code}");
                }
            }
        }
        assert_eq!(h.map_code("V12.5", CodeSystem::Icd9), h.index_of("b1"));
        assert_eq!(h.map_code("E12", CodeSystem::Icd9), None);
    }

    #[test]
    fn exact_code_and_missing_code() {
        let h = seven();
        assert_eq!(h.map_code_id("432.0", CodeSystem::Icd9), Some("a1y"));
        assert_eq!(h.map_code_id(" 432.0 ", CodeSystem::Icd9), Some("a1y"));
        assert_eq!(h.map_code_id("432.1", CodeSystem::Icd9), None);
        assert_eq!(h.map_code_id("999", CodeSystem::Icd9), None);
        assert_eq!(h.map_code_id("", CodeSystem::Icd9), None);
    }

    #[test]
    fn gem_then_range() {
        let gem = GemMap::parse("I38\t424\nI61.9,432.0\nI38 999\n").unwrap();
        assert_eq!(gem.len(), 2);
        assert_eq!(gem.get("I38"), Some("424"));
        let h = seven().with_gem(gem);
        assert_eq!(h.map_code_id("I38", CodeSystem::Icd10), Some("a1x"));
        assert_eq!(h.map_code_id("i61.9", CodeSystem::Icd10), Some("a1y"));
        // no GEM entry: looked up directly
        assert_eq!(h.map_code_id("191", CodeSystem::Icd10), Some("a2"));
    }

    #[test]
    fn paths() {
        let h = seven();
        assert_eq!(h.path_to("a").unwrap(), vec!["a"]);
        assert_eq!(h.path_to("a1y").unwrap(), vec!["a", "a1", "a1y"]);
        assert_eq!(h.path_to("b1").unwrap(), vec!["b", "b1"]);
        assert!(matches!(
            h.path_to("zzz"),
            Err(HierarchyError::UnknownCategory(_))
        ));
        assert_eq!(h.depth_histogram(), vec![2, 3, 2]);
    }

    #[test]
    fn load_errors() {
        let dup = vec![NodeSpec::new("a", None, "A", &[]), NodeSpec::new("a", None, "A", &[])];
        assert!(matches!(
            DiagnosisHierarchy::from_specs(dup),
            Err(HierarchyError::DuplicateId(_))
        ));

        let cyc = vec![
            NodeSpec::new("r", None, "R", &[]),
            NodeSpec::new("a", Some("b"), "A", &[]),
            NodeSpec::new("b", Some("a"), "B", &[]),
        ];
        assert!(matches!(
            DiagnosisHierarchy::from_specs(cyc),
            Err(HierarchyError::Cycle(_))
        ));

        let conflict = vec![
            NodeSpec::new("r", None, "R", &[]),
            NodeSpec::new("a", Some("r"), "A", &["420-429"]),
            NodeSpec::new("b", Some("r"), "B", &["424.1"]),
        ];
        assert!(matches!(
            DiagnosisHierarchy::from_specs(conflict),
            Err(HierarchyError::CodeConflict { .. })
        ));

        let overlap = vec![
            NodeSpec::new("a", None, "A", &["420-425"]),
            NodeSpec::new("b", None, "B", &["425-429"]),
        ];
        assert!(DiagnosisHierarchy::from_specs(overlap).is_err());

        let nonleaf = vec![
            NodeSpec::new("r", None, "R", &["100"]),
            NodeSpec::new("a", Some("r"), "A", &[]),
        ];
        assert!(matches!(
            DiagnosisHierarchy::from_specs(nonleaf),
            Err(HierarchyError::CodesOnNonLeaf(_))
        ));

        let orphan = vec![NodeSpec::new("a", Some("nope"), "A", &[])];
        assert!(matches!(
            DiagnosisHierarchy::from_specs(orphan),
            Err(HierarchyError::UnknownParent { .. })
        ));
    }

    #[test]
    fn parse_ignores_unknown_fields_and_round_trips() {
        let doc = concat!(
            r#"{"format":"distsum-hierarchy","version":1,"note":"x"}"#,
            "\n",
            r#"{"id":"t","name":"Trauma","description":"","parent":null,"codes":[],"custom":true}"#,
            "\n",
            r#"{"id":"t.1","name":"Fracture","description":"Skull fracture","parent":"t","codes":["800-804"],"extra":[1,2]}"#,
            "\n"
        );
        let h = DiagnosisHierarchy::parse(doc).unwrap();
        assert_eq!(h.len(), 2);
        let mut out = Vec::new();
        h.write_to(&mut out).unwrap();
        let again = read_hierarchy(&out[..]).unwrap();
        let mut out2 = Vec::new();
        again.write_to(&mut out2).unwrap();
        assert_eq!(out, out2);
        assert_eq!(again.map_code_id("801.2", CodeSystem::Icd9), Some("t.1"));
    }

    #[test]
    fn propagation_rules() {
        let h = seven();
        let mut leaf = BTreeMap::new();
        leaf.insert("a1x".to_string(), LeafLabel::Positive);
        leaf.insert("a1y".to_string(), LeafLabel::Negative);
        let out = h.propagate_labels(&leaf).unwrap();
        assert_eq!(out["a1"], CategoryLabel::Positive);
        assert_eq!(out["a"], CategoryLabel::Positive);
        assert_eq!(out["a1y"], CategoryLabel::Negative);
        assert_eq!(out["a2"], CategoryLabel::Excluded);
        assert_eq!(out["b"], CategoryLabel::Excluded);
        assert_eq!(out["b1"], CategoryLabel::Excluded);

        let mut only_neg = BTreeMap::new();
        only_neg.insert("b1".to_string(), LeafLabel::Negative);
        only_neg.insert("a2".to_string(), LeafLabel::Negative);
        let out = h.propagate_labels(&only_neg).unwrap();
        assert_eq!(out["b"], CategoryLabel::Negative);
        assert_eq!(out["a"], CategoryLabel::Negative);
        assert_eq!(out["a1"], CategoryLabel::Excluded);

        let mut bad = BTreeMap::new();
        bad.insert("a1".to_string(), LeafLabel::Positive);
        assert!(matches!(
            h.propagate_labels(&bad),
            Err(HierarchyError::NonLeafLabel(_))
        ));
    }
}
