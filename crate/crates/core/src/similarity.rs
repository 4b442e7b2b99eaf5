//! Damerau-Levenshtein distance (optimal string alignment variant) and the
//! normalized pair similarity built on it.

use crate::values::{params_sim_text, ParamTuple};

/// A similarity in `[0, 1]`; 1 means identical renderings.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    /// Clamps into `[0, 1]`.
    pub fn new(value: f64) -> Self {
        SimilarityScore(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Restricted edit distance over Unicode scalars: insertion, deletion,
/// substitution and adjacent transposition, with no substring edited twice.
pub fn dl_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    osa(&a, &b)
}

fn osa(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let width = b.len() + 1;
    // Three rolling rows: i-2, i-1, i.
    let mut two_back = vec![0usize; width];
    let mut prev: Vec<usize> = (0..width).collect();
    let mut cur = vec![0usize; width];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut d = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d = d.min(two_back[j - 2] + 1);
            }
            cur[j] = d;
        }
        std::mem::swap(&mut two_back, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - d / max(len)` over two already-rendered texts; 1 when both are empty.
pub fn text_similarity(a: &str, b: &str) -> SimilarityScore {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return SimilarityScore(1.0);
    }
    let d = dl_distance(a, b);
    SimilarityScore::new(1.0 - d as f64 / longest as f64)
}

/// Similarity of two test inputs, computed on their parameter-tuple renderings.
pub fn delta(failing: &ParamTuple, passing: &ParamTuple) -> SimilarityScore {
    text_similarity(&params_sim_text(failing), &params_sim_text(passing))
}
