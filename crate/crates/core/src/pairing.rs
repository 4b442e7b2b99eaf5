//! Contrastive pairs: a failing test next to a very similar passing one.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::harness::{Harness, HarnessError, OracleKind, TestCase, Verdict};
use crate::mutation::{generate_candidates, MutationConfig};
use crate::similarity::{delta, SimilarityScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Pairs need a similarity strictly above this.
    pub theta: f64,
    /// Pairs per prompt.
    pub k: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig { theta: 0.5, k: 2 }
    }
}

impl PairConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.theta) {
            return Err(format!("theta must be in [0, 1), got {}", self.theta));
        }
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    pub fail: TestCase,
    pub pass: TestCase,
    pub sim: SimilarityScore,
    pub times_selected: u32,
}

impl TestPair {
    pub fn identity(&self) -> (String, String) {
        (self.fail.id.clone(), self.pass.id.clone())
    }
}

/// What a prompt carries about the failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    PairSet(Vec<TestPair>),
    /// No pair qualified; show the failing inputs alone.
    FailOnly(Vec<TestCase>),
}

impl Feedback {
    pub fn failing_tests(&self) -> Vec<&TestCase> {
        match self {
            Feedback::PairSet(pairs) => {
                let mut seen = HashSet::new();
                pairs
                    .iter()
                    .map(|p| &p.fail)
                    .filter(|f| seen.insert(f.id.clone()))
                    .collect()
            }
            Feedback::FailOnly(fails) => fails.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairPool {
    pairs: Vec<TestPair>,
}

/// All (failing, passing) combinations with similarity above `theta`, best
/// first; ties are ordered by (failing id, passing id).
pub fn build_pool(failing: &[TestCase], passing: &[TestCase], cfg: &PairConfig) -> PairPool {
    let mut pairs = Vec::new();
    for f in failing {
        for p in passing {
            let sim = delta(&f.params, &p.params);
            if sim.value() > cfg.theta {
                pairs.push(TestPair {
                    fail: f.clone(),
                    pass: p.clone(),
                    sim,
                    times_selected: 0,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.sim
            .value()
            .total_cmp(&a.sim.value())
            .then_with(|| a.fail.id.cmp(&b.fail.id))
            .then_with(|| a.pass.id.cmp(&b.pass.id))
    });
    PairPool { pairs }
}

impl PairPool {
    pub fn pairs(&self) -> &[TestPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Copies selection counters for pairs whose (fail id, pass id) also
    /// exists in `previous`.
    pub fn carry_counters_from(&mut self, previous: &PairPool) {
        self.apply_counts(&previous.counts());
    }

    pub fn counts(&self) -> HashMap<(String, String), u32> {
        self.pairs
            .iter()
            .map(|p| (p.identity(), p.times_selected))
            .collect()
    }

    pub fn apply_counts(&mut self, counts: &HashMap<(String, String), u32>) {
        for pair in &mut self.pairs {
            if let Some(&n) = counts.get(&pair.identity()) {
                pair.times_selected = n;
            }
        }
    }

    /// Picks the `k` least-selected pairs (higher similarity first among
    /// equals) and bumps their counters. An empty pool falls back to the
    /// distinct failing tests.
    pub fn select(&mut self, k: usize, failing: &[TestCase]) -> Feedback {
        if self.pairs.is_empty() {
            let mut seen = HashSet::new();
            return Feedback::FailOnly(
                failing
                    .iter()
                    .filter(|f| seen.insert(f.key()))
                    .cloned()
                    .collect(),
            );
        }
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&self.pairs[a], &self.pairs[b]);
            pa.times_selected
                .cmp(&pb.times_selected)
                .then_with(|| pb.sim.value().total_cmp(&pa.sim.value()))
                .then(a.cmp(&b))
        });
        let chosen: Vec<usize> = order.into_iter().take(k.max(1)).collect();
        for &i in &chosen {
            self.pairs[i].times_selected += 1;
        }
        Feedback::PairSet(chosen.into_iter().map(|i| self.pairs[i].clone()).collect())
    }
}

/// Mutants of one failing test with their verdicts under the original source.
/// `None` marks candidates left unvalidated because the deadline passed.
pub fn validate_candidates(
    failing: &TestCase,
    harness: &Harness,
    original: &str,
    cfg: &MutationConfig,
    deadline: Instant,
) -> Result<Vec<(TestCase, Option<Verdict>)>, HarnessError> {
    if failing.oracle != OracleKind::Exception {
        return Ok(Vec::new());
    }
    let candidates = generate_candidates(failing, cfg);
    let inputs: Vec<_> = candidates.iter().map(|c| c.params.clone()).collect();
    let verdicts = harness.validate_many(original, &inputs, deadline)?;
    Ok(candidates.into_iter().zip(verdicts).collect())
}

/// Passing mutants of an exception-oracle failing test. Empty for assertion
/// oracles, which mutants cannot satisfy.
pub fn augment_passing(
    failing: &TestCase,
    harness: &Harness,
    original: &str,
    cfg: &MutationConfig,
    budget: Duration,
) -> Result<Vec<TestCase>, HarnessError> {
    augment_passing_until(failing, harness, original, cfg, Instant::now() + budget)
}

pub fn augment_passing_until(
    failing: &TestCase,
    harness: &Harness,
    original: &str,
    cfg: &MutationConfig,
    deadline: Instant,
) -> Result<Vec<TestCase>, HarnessError> {
    Ok(validate_candidates(failing, harness, original, cfg, deadline)?
        .into_iter()
        .filter(|(_, v)| matches!(v, Some(Verdict::Pass)))
        .map(|(c, _)| c)
        .collect())
}
