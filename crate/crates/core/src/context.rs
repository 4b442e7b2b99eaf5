//! Failure context for prompts: traceback deduplication and extraction of
//! dependent functions (callers/callees of the buggy function that appear in
//! a failing traceback).

use std::collections::{BTreeMap, HashSet, VecDeque};

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub function: String,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Traceback {
    pub raw: String,
    pub frames: Vec<Frame>,
}

impl Traceback {
    /// Uses adapter-supplied frames when there are any, otherwise scans the
    /// text for `at qualified.name(File.java:12)` lines.
    pub fn new(raw: impl Into<String>, frames: Option<Vec<Frame>>) -> Self {
        let raw = raw.into();
        let frames = match frames {
            Some(f) if !f.is_empty() => f,
            _ => parse_frames(&raw),
        };
        Traceback { raw, frames }
    }

    /// Dedup key: raw text with trailing whitespace removed from every line.
    fn normalized(&self) -> String {
        self.raw
            .lines()
            .map(str::trim_end)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn parse_frames(raw: &str) -> Vec<Frame> {
    let re = Regex::new(r"at\s+([\w$.<>]+)\(([^:()]+):(\d+)\)").expect("static regex");
    re.captures_iter(raw)
        .map(|c| Frame {
            function: c[1].to_string(),
            file: c[2].to_string(),
            line: c[3].parse().unwrap_or(0),
        })
        .collect()
}

/// Keeps the first occurrence of each distinct traceback, in order.
pub fn dedupe_tracebacks(tracebacks: &[Traceback]) -> Vec<Traceback> {
    let mut seen = HashSet::new();
    tracebacks
        .iter()
        .filter(|t| seen.insert(t.normalized()))
        .cloned()
        .collect()
}

/// Function name → source text, supplied with the bug.
pub type ProjectIndex = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencySet {
    pub functions: Vec<(String, String)>,
}

impl DependencySet {
    pub fn names(&self) -> Vec<&str> {
        self.functions.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn total_len(&self) -> usize {
        self.functions.iter().map(|(_, s)| s.chars().count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

/// Last identifier of a qualified frame name (`a.b.C.run` → `run`).
fn simple_name(qualified: &str) -> &str {
    qualified
        .rsplit(['.', ':', '#', '/'])
        .next()
        .unwrap_or(qualified)
}

fn is_ident(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// True when `source` contains a call `name(`, with `name` not part of a
/// longer identifier. Whitespace between the name and `(` is allowed.
pub fn calls(source: &str, name: &str) -> bool {
    if name.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(off) = source[from..].find(name) {
        let start = from + off;
        let end = start + name.len();
        let before_ok = source[..start].chars().next_back().is_none_or(|c| !is_ident(c));
        let after = source[end..].trim_start();
        if before_ok && after.starts_with('(') {
            return true;
        }
        from = start + name.chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Breadth-first collection of dependent functions.
///
/// Candidates are the frame names (in order of first appearance) that are
/// also keys of `index`. Starting from the buggy function, a candidate joins
/// when it is called by, or calls, a function already admitted. Collection
/// stops at the first candidate whose source would push the total past
/// `char_budget`.
pub fn extract_dependents(
    buggy_source: &str,
    buggy_name: &str,
    tracebacks: &[Traceback],
    index: &ProjectIndex,
    char_budget: usize,
) -> DependencySet {
    let mut candidates: Vec<&str> = Vec::new();
    for frame in tracebacks.iter().flat_map(|t| &t.frames) {
        let name = if index.contains_key(frame.function.as_str()) {
            frame.function.as_str()
        } else {
            simple_name(&frame.function)
        };
        if name != buggy_name && index.contains_key(name) && !candidates.contains(&name) {
            candidates.push(name);
        }
    }

    let mut out = DependencySet::default();
    let mut used = 0usize;
    let mut admitted: HashSet<&str> = HashSet::from([buggy_name]);
    let mut queue: VecDeque<(&str, &str)> = VecDeque::from([(buggy_name, buggy_source)]);
    while let Some((name, source)) = queue.pop_front() {
        for &cand in &candidates {
            if admitted.contains(cand) {
                continue;
            }
            let cand_source = index[cand].as_str();
            if !(calls(source, cand) || calls(cand_source, name)) {
                continue;
            }
            let len = cand_source.chars().count();
            if used + len > char_budget {
                return out;
            }
            used += len;
            admitted.insert(cand);
            out.functions.push((cand.to_string(), cand_source.to_string()));
            queue.push_back((cand, cand_source));
        }
    }
    out
}
