//! Type-aware mutation of failing inputs into near-miss candidates.
//!
//! Every candidate is one operator application on one parameter, so that a
//! candidate differs from its failing input as little as possible. All
//! randomness comes from a seeded ChaCha stream; integer draws go through
//! `u64` so the sequence does not depend on the platform's pointer width.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::testcase::TestCase;
use crate::values::{encode_params, TypedValue, ValueKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MutationError {
    #[error("no mutation operator can change a {0} value")]
    Inapplicable(ValueKind),
    #[error("test case has no mutable parameter")]
    NoMutableParameter,
    #[error("invalid mutation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationConfig {
    pub candidate_count: usize,
    pub edit_budget_fraction: f64,
    pub numeric_delta_max: u32,
    pub scale_range: (f64, f64),
    pub magnitude_percent_range: (f64, f64),
    pub rng_seed: u64,
    /// Parameters mutated per candidate.
    pub max_params: usize,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            candidate_count: 1000,
            edit_budget_fraction: 0.10,
            numeric_delta_max: 3,
            scale_range: (0.5, 2.0),
            magnitude_percent_range: (1.0, 10.0),
            rng_seed: 0,
            max_params: 1,
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), MutationError> {
        let bad = |m: &str| Err(MutationError::InvalidConfig(m.to_string()));
        if self.candidate_count == 0 {
            return bad("candidate_count must be at least 1");
        }
        if !(self.edit_budget_fraction > 0.0 && self.edit_budget_fraction <= 1.0) {
            return bad("edit_budget_fraction must be in (0, 1]");
        }
        if self.numeric_delta_max == 0 {
            return bad("numeric_delta_max must be positive");
        }
        for (name, (lo, hi)) in [
            ("scale_range", self.scale_range),
            ("magnitude_percent_range", self.magnitude_percent_range),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(&format!("{name} must have positive, ordered endpoints"));
            }
        }
        if self.max_params == 0 {
            return bad("max_params must be at least 1");
        }
        Ok(())
    }

    /// Atomic character edits allowed for one string operator.
    pub fn edit_budget(&self, len: usize) -> usize {
        ((self.edit_budget_fraction * len as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationOp {
    StrReplaceChar,
    StrReplaceSubstring,
    StrInsertChar,
    StrDeleteChar,
    StrSwapSubstrings,
    StrCaseConvert,
    StrTruncExtend,
    NumPerturb,
    NumScale,
    NumFlipSign,
    NumMagnitudePerturb,
    CharReplace,
    BoolNegate,
    SeqElementMutate,
    SeqSwap,
    SeqInsert,
    SeqDelete,
    SeqShuffle,
    ObjFieldMutate,
}

use MutationOp::*;

const STR_OPS: &[MutationOp] = &[
    StrReplaceChar,
    StrReplaceSubstring,
    StrInsertChar,
    StrDeleteChar,
    StrSwapSubstrings,
    StrCaseConvert,
    StrTruncExtend,
];
const NUM_OPS: &[MutationOp] = &[NumPerturb, NumScale, NumFlipSign, NumMagnitudePerturb];
const SEQ_OPS: &[MutationOp] = &[SeqElementMutate, SeqSwap, SeqInsert, SeqDelete, SeqShuffle];

impl MutationOp {
    pub fn for_kind(kind: ValueKind) -> &'static [MutationOp] {
        match kind {
            ValueKind::Str => STR_OPS,
            ValueKind::Int | ValueKind::Float => NUM_OPS,
            ValueKind::Char => &[CharReplace],
            ValueKind::Bool => &[BoolNegate],
            ValueKind::Array => SEQ_OPS,
            ValueKind::Object => &[ObjFieldMutate],
            ValueKind::Null => &[],
        }
    }
}

fn index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// `k` distinct indices out of `0..n`, by partial Fisher-Yates.
fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = i + index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k.min(n));
    pool
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    sample_distinct(rng, n, n)
}

fn printable(rng: &mut ChaCha8Rng) -> char {
    char::from(b' ' + rng.random_range(0..95u32) as u8)
}

fn printable_other_than(rng: &mut ChaCha8Rng, c: char) -> char {
    loop {
        let r = printable(rng);
        if r != c {
            return r;
        }
    }
}

/// The opposite-case form of `c` when it is exactly one scalar.
fn flip_case(c: char) -> Option<char> {
    let mapped: Vec<char> = if c.is_lowercase() {
        c.to_uppercase().collect()
    } else if c.is_uppercase() {
        c.to_lowercase().collect()
    } else {
        return None;
    };
    match mapped.as_slice() {
        [m] if *m != c => Some(*m),
        _ => None,
    }
}

/// Applies one operator once. `None` when the operator cannot change `value`
/// (wrong kind, degenerate input, or an unlucky draw that left it unchanged).
pub fn apply_op(
    op: MutationOp,
    value: &TypedValue,
    cfg: &MutationConfig,
    rng: &mut ChaCha8Rng,
) -> Option<TypedValue> {
    let out = match (op, value) {
        (_, TypedValue::Str(s)) if STR_OPS.contains(&op) => {
            let chars: Vec<char> = s.chars().collect();
            mutate_str(op, &chars, cfg, rng).map(|c| TypedValue::Str(c.into_iter().collect()))
        }
        (_, TypedValue::Int(v)) => mutate_int(op, *v, cfg, rng).map(TypedValue::Int),
        (_, TypedValue::Float(x)) => mutate_float(op, *x, cfg, rng).map(TypedValue::Float),
        (CharReplace, TypedValue::Char(c)) => Some(TypedValue::Char(printable_other_than(rng, *c))),
        (BoolNegate, TypedValue::Bool(b)) => Some(TypedValue::Bool(!b)),
        (_, TypedValue::Array(items)) => mutate_seq(op, items, cfg, rng).map(TypedValue::Array),
        (ObjFieldMutate, TypedValue::Object(fields)) => {
            let order = shuffled(rng, fields.len());
            order.into_iter().find_map(|i| {
                mutate_value(&fields[i].1, cfg, rng).ok().map(|v| {
                    let mut fields = fields.clone();
                    fields[i].1 = v;
                    TypedValue::Object(fields)
                })
            })
        }
        _ => None,
    };
    out.filter(|v| v != value)
}

fn mutate_str(
    op: MutationOp,
    s: &[char],
    cfg: &MutationConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<char>> {
    let n = s.len();
    let budget = cfg.edit_budget(n);
    let mut out = s.to_vec();
    match op {
        StrReplaceChar => {
            if n == 0 {
                return None;
            }
            let count = 1 + index(rng, budget.min(n));
            for pos in sample_distinct(rng, n, count) {
                out[pos] = printable_other_than(rng, s[pos]);
            }
        }
        StrReplaceSubstring => {
            if n == 0 {
                return None;
            }
            let len = 1 + index(rng, budget.min(n));
            let start = index(rng, n - len + 1);
            for slot in &mut out[start..start + len] {
                *slot = printable(rng);
            }
        }
        StrInsertChar => {
            let count = 1 + index(rng, budget);
            for _ in 0..count {
                let pos = index(rng, out.len() + 1);
                let c = printable(rng);
                out.insert(pos, c);
            }
        }
        StrDeleteChar => {
            if n == 0 {
                return None;
            }
            let count = 1 + index(rng, budget.min(n));
            let mut doomed = sample_distinct(rng, n, count);
            doomed.sort_unstable_by(|a, b| b.cmp(a));
            for pos in doomed {
                out.remove(pos);
            }
        }
        StrSwapSubstrings => {
            if n < 2 {
                return None;
            }
            let len = 1 + index(rng, budget.min(n / 2));
            let first = index(rng, n - 2 * len + 1);
            let second = first + len + index(rng, n - len - (first + len) + 1);
            for k in 0..len {
                out.swap(first + k, second + k);
            }
        }
        StrCaseConvert => {
            let cased: Vec<usize> = (0..n).filter(|&i| flip_case(s[i]).is_some()).collect();
            if cased.is_empty() {
                return None;
            }
            let count = 1 + index(rng, budget.min(cased.len()));
            for pick in sample_distinct(rng, cased.len(), count) {
                let pos = cased[pick];
                out[pos] = flip_case(s[pos]).expect("cased");
            }
        }
        StrTruncExtend => {
            if n > 0 && rng.random_bool(0.5) {
                let len = 1 + index(rng, budget.min(n));
                out.truncate(n - len);
            } else {
                let mut alphabet: Vec<char> = Vec::new();
                for &c in s {
                    if !alphabet.contains(&c) {
                        alphabet.push(c);
                    }
                }
                if alphabet.is_empty() {
                    alphabet = ('a'..='z').chain('A'..='Z').collect();
                }
                let len = 1 + index(rng, budget);
                for _ in 0..len {
                    out.push(alphabet[index(rng, alphabet.len())]);
                }
            }
        }
        _ => return None,
    }
    Some(out)
}

fn mutate_int(op: MutationOp, v: i64, cfg: &MutationConfig, rng: &mut ChaCha8Rng) -> Option<i64> {
    match op {
        NumPerturb => {
            let u = 1 + rng.random_range(0..cfg.numeric_delta_max) as i64;
            if rng.random_bool(0.5) {
                v.checked_add(u)
            } else {
                v.checked_sub(u)
            }
        }
        NumScale => {
            let (lo, hi) = cfg.scale_range;
            let scaled = (v as f64 * rng.random_range(lo..=hi)).round();
            // i64::MAX as f64 rounds up to 2^63, so the upper bound is exclusive.
            (scaled >= i64::MIN as f64 && scaled < i64::MAX as f64).then_some(scaled as i64)
        }
        NumFlipSign => (v != 0).then(|| v.checked_neg()).flatten(),
        NumMagnitudePerturb => {
            let (lo, hi) = cfg.magnitude_percent_range;
            let step = (rng.random_range(lo..=hi) / 100.0 * (v as f64).abs()).round();
            if step < 1.0 || step >= i64::MAX as f64 {
                return None;
            }
            if rng.random_bool(0.5) {
                v.checked_add(step as i64)
            } else {
                v.checked_sub(step as i64)
            }
        }
        _ => None,
    }
}

fn mutate_float(op: MutationOp, x: f64, cfg: &MutationConfig, rng: &mut ChaCha8Rng) -> Option<f64> {
    if x.is_nan() {
        return None;
    }
    if x.is_infinite() {
        return (op == NumFlipSign).then_some(-x);
    }
    let out = match op {
        NumPerturb => {
            // (0, max]: 1 - U[0,1) is in (0, 1].
            let u = f64::from(cfg.numeric_delta_max) * (1.0 - rng.random::<f64>());
            if rng.random_bool(0.5) {
                x + u
            } else {
                x - u
            }
        }
        NumScale => {
            let (lo, hi) = cfg.scale_range;
            x * rng.random_range(lo..=hi)
        }
        NumFlipSign if x != 0.0 => -x,
        NumMagnitudePerturb => {
            let (lo, hi) = cfg.magnitude_percent_range;
            let step = rng.random_range(lo..=hi) / 100.0 * x.abs();
            if rng.random_bool(0.5) {
                x + step
            } else {
                x - step
            }
        }
        _ => return None,
    };
    (out.is_finite() && out != x).then_some(out)
}

fn mutate_seq(
    op: MutationOp,
    items: &[TypedValue],
    cfg: &MutationConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<TypedValue>> {
    let n = items.len();
    let all_equal = items.windows(2).all(|w| w[0] == w[1]);
    let mut out = items.to_vec();
    match op {
        SeqElementMutate => {
            let order = shuffled(rng, n);
            let (i, v) = order
                .into_iter()
                .find_map(|i| mutate_value(&items[i], cfg, rng).ok().map(|v| (i, v)))?;
            out[i] = v;
        }
        SeqSwap => {
            if all_equal {
                return None;
            }
            let i = index(rng, n);
            let partners: Vec<usize> = (0..n).filter(|&j| items[j] != items[i]).collect();
            let j = partners[index(rng, partners.len())];
            out.swap(i, j);
        }
        SeqInsert => {
            if n == 0 {
                return None;
            }
            let template = &items[index(rng, n)];
            let fresh = mutate_value(template, cfg, rng).unwrap_or_else(|_| template.clone());
            out.insert(index(rng, n + 1), fresh);
        }
        SeqDelete => {
            if n == 0 {
                return None;
            }
            out.remove(index(rng, n));
        }
        SeqShuffle => {
            if all_equal {
                return None;
            }
            for _ in 0..8 {
                for i in (1..n).rev() {
                    let j = index(rng, i + 1);
                    out.swap(i, j);
                }
                if out != items {
                    return Some(out);
                }
            }
            return None;
        }
        _ => return None,
    }
    Some(out)
}

/// Applies one uniformly chosen applicable operator; operators that cannot
/// change the value are dropped and another is drawn.
pub fn mutate_value(
    value: &TypedValue,
    cfg: &MutationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TypedValue, MutationError> {
    let mut ops = MutationOp::for_kind(value.kind()).to_vec();
    while !ops.is_empty() {
        let op = ops.remove(index(rng, ops.len()));
        if let Some(v) = apply_op(op, value, cfg, rng) {
            return Ok(v);
        }
    }
    Err(MutationError::Inapplicable(value.kind()))
}

/// Mutates up to `cfg.max_params` parameters of `failing`.
pub fn mutate_test_case(
    failing: &TestCase,
    id: impl Into<String>,
    cfg: &MutationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TestCase, MutationError> {
    let n = failing.params.len();
    let wanted = 1 + index(rng, cfg.max_params.min(n).max(1));
    let mut params = failing.params.clone();
    let mut changed = 0;
    for i in shuffled(rng, n) {
        if changed == wanted {
            break;
        }
        if let Ok(v) = mutate_value(&params.entries()[i].1, cfg, rng) {
            params = params.with_value(i, v);
            changed += 1;
        }
    }
    if changed == 0 {
        return Err(MutationError::NoMutableParameter);
    }
    Ok(TestCase::mutated(id, params))
}

/// Deterministic list of distinct mutants of `failing`, at most
/// `cfg.candidate_count` long. Shorter when the neighbourhood runs dry.
pub fn generate_candidates(failing: &TestCase, cfg: &MutationConfig) -> Vec<TestCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut seen = HashSet::from([encode_params(&failing.params)]);
    let mut out = Vec::new();
    let attempts = cfg.candidate_count.saturating_mul(20).max(200);
    for _ in 0..attempts {
        if out.len() >= cfg.candidate_count {
            break;
        }
        let id = format!("{}~m{}", failing.id, out.len() + 1);
        match mutate_test_case(failing, id, cfg, &mut rng) {
            Ok(tc) => {
                if seen.insert(tc.key()) {
                    out.push(tc);
                }
            }
            Err(_) => break,
        }
    }
    out
}
