//! Acceptance criteria. Each test prints one `criterion NN PASS|FAIL` line;
//! run with `--nocapture` to see them:
//!
//!     cargo test -p contrast-repair --test acceptance -- --nocapture --test-threads 1

mod common;

use std::collections::{HashSet, VecDeque};
use std::io::Write as _;
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::Instant;

use contrast_repair::context::{dedupe_tracebacks, extract_dependents, Frame, ProjectIndex, Traceback};
use contrast_repair::harness::TestCase;
use contrast_repair::llm::{CompletionRequest, Provider, ProviderConfig, ScriptEntry, ScriptedTransport, API_KEY_ENV};
use contrast_repair::mutation::{apply_op, generate_candidates, MutationConfig, MutationOp};
use contrast_repair::pairing::{build_pool, Feedback, PairConfig};
use contrast_repair::prompting::extract_patch;
use contrast_repair::repair::{Observer, RepairBudget, RepairConfig, RepairSession, RepairStatus, SessionState};
use contrast_repair::similarity::{delta, dl_distance};
use contrast_repair::values::{params_sim_text, ParamTuple, TypedValue, ValueKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn criterion(n: u32, what: &str, check: impl FnOnce() -> Result<(), String>) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let result = check();
    let secs = started.elapsed().as_secs_f64();
    let mut out = std::io::stdout().lock();
    match &result {
        Ok(()) => writeln!(out, "criterion {n:02} PASS ({secs:.1}s): {what}"),
        Err(e) => writeln!(out, "criterion {n:02} FAIL ({secs:.1}s): {what}: {e}"),
    }
    .unwrap();
    if let Err(e) = result {
        panic!("criterion {n} failed: {e}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Oracles

/// Textbook optimal-string-alignment distance over a full matrix.
fn osa_matrix(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[a.len()][b.len()]
}

fn similarity_oracle(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        1.0
    } else {
        1.0 - osa_matrix(a, b) as f64 / longest as f64
    }
}

fn edit_budget(len: usize) -> usize {
    ((len as f64 * 0.10).ceil() as usize).max(1)
}

// ---------------------------------------------------------------------------
// 1. Distance oracle equivalence

const MAX_LEN: usize = 6;
const ALPHABET: [u8; 3] = *b"abc";

/// All strings over the alphabet up to `MAX_LEN`, indexed by length then
/// lexicographic rank.
struct Universe {
    strings: Vec<Vec<u8>>,
    offset: [usize; MAX_LEN + 2],
}

impl Universe {
    fn new() -> Self {
        let mut strings = vec![Vec::new()];
        let mut offset = [0; MAX_LEN + 2];
        offset[1] = 1;
        let mut layer = vec![Vec::new()];
        for len in 1..=MAX_LEN {
            layer = layer
                .iter()
                .flat_map(|s: &Vec<u8>| {
                    ALPHABET.iter().map(move |&c| {
                        let mut t = s.clone();
                        t.push(c);
                        t
                    })
                })
                .collect();
            strings.extend(layer.iter().cloned());
            offset[len + 1] = strings.len();
        }
        Universe { strings, offset }
    }

    fn id(&self, s: &[u8]) -> usize {
        let rank = s
            .iter()
            .fold(0, |acc, &c| acc * 3 + ALPHABET.iter().position(|&a| a == c).unwrap());
        self.offset[s.len()] + rank
    }

    fn extend(&self, id: usize, tail: &[u8]) -> Option<usize> {
        let s = &self.strings[id];
        if s.len() + tail.len() > MAX_LEN {
            return None;
        }
        let mut t = s.clone();
        t.extend_from_slice(tail);
        Some(self.id(&t))
    }
}

/// Cheapest edit script from `source` to every target, found by a 0-1 BFS
/// over (characters of `source` consumed, text produced so far). A script
/// step keeps, substitutes or deletes the next source character, inserts a
/// character, or emits the next two source characters swapped; swapped
/// characters are consumed together so nothing can edit them again.
fn script_search(u: &Universe, source: &[u8]) -> Vec<usize> {
    let states = u.strings.len();
    let n = source.len();
    let mut dist = vec![usize::MAX; (n + 1) * states];
    let mut queue = VecDeque::new();
    dist[0] = 0;
    queue.push_back((0usize, 0usize));
    while let Some((i, out)) = queue.pop_front() {
        let here = dist[i * states + out];
        let mut relax = |ni: usize, nout: usize, cost: usize, queue: &mut VecDeque<(usize, usize)>| {
            let slot = &mut dist[ni * states + nout];
            if here + cost < *slot {
                *slot = here + cost;
                if cost == 0 {
                    queue.push_front((ni, nout));
                } else {
                    queue.push_back((ni, nout));
                }
            }
        };
        for &c in &ALPHABET {
            if let Some(next) = u.extend(out, &[c]) {
                relax(i, next, 1, &mut queue);
            }
        }
        if i < n {
            relax(i + 1, out, 1, &mut queue);
            for &c in &ALPHABET {
                if let Some(next) = u.extend(out, &[c]) {
                    relax(i + 1, next, usize::from(c != source[i]), &mut queue);
                }
            }
            if i + 1 < n && source[i] != source[i + 1] {
                if let Some(next) = u.extend(out, &[source[i + 1], source[i]]) {
                    relax(i + 2, next, 1, &mut queue);
                }
            }
        }
    }
    dist[n * states..].to_vec()
}

#[test]
fn criterion_01_distance_matches_edit_script_search() {
    criterion(1, "OSA distance equals exhaustive edit-script search on {a,b,c}^<=6", || {
        let started = Instant::now();
        let u = Universe::new();
        let texts: Vec<String> = u
            .strings
            .iter()
            .map(|s| String::from_utf8(s.clone()).unwrap())
            .collect();
        let mut checked = 0usize;
        for (i, s) in u.strings.iter().enumerate() {
            let best = script_search(&u, s);
            for (j, t) in texts.iter().enumerate() {
                let got = dl_distance(&texts[i], t);
                if got != best[j] {
                    return Err(format!("d({:?}, {t:?}) = {got}, script search says {}", texts[i], best[j]));
                }
                checked += 1;
            }
        }
        ensure(checked == 1093 * 1093, || format!("checked {checked} pairs"))?;
        let secs = started.elapsed().as_secs_f64();
        ensure(secs < 60.0, || format!("took {secs:.1}s"))
    });
}

// ---------------------------------------------------------------------------
// 2. δ formula

fn random_string(rng: &mut ChaCha8Rng, max: usize) -> String {
    let len = rng.random_range(0..=max);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.05) {
                ['é', 'ß', '日', '"', '\\'][rng.random_range(0..5)]
            } else {
                char::from(rng.random_range(b' '..=b'~'))
            }
        })
        .collect()
}

fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> TypedValue {
    let top = if depth == 0 { 5 } else { 7 };
    match rng.random_range(0..top) {
        0 => TypedValue::Bool(rng.random_bool(0.5)),
        1 => TypedValue::Int(rng.random_range(-100_000i64..100_000)),
        2 => TypedValue::Float(rng.random_range(-1e6..1e6)),
        3 => TypedValue::Char(char::from(rng.random_range(b'!'..=b'~'))),
        4 => TypedValue::str(random_string(rng, 16)),
        5 => TypedValue::Array((0..rng.random_range(0..4)).map(|_| random_value(rng, depth - 1)).collect()),
        _ => TypedValue::object(
            (0..rng.random_range(0..3))
                .map(|i| (format!("f{i}"), random_value(rng, depth - 1)))
                .collect(),
        )
        .unwrap(),
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> ParamTuple {
    let n = rng.random_range(1..=3);
    ParamTuple::new((0..n).map(|i| (format!("p{i}"), random_value(rng, 2))).collect()).unwrap()
}

#[test]
fn criterion_02_delta_formula() {
    criterion(2, "delta = 1 - d/max(len) on 1000 random pairs, in [0,1], delta(x,x) = 1", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = MutationConfig::default();
        for i in 0..1000 {
            let a = random_params(&mut rng);
            // Half the pairs are near neighbours produced by mutation.
            let b = if i % 2 == 0 {
                random_params(&mut rng)
            } else {
                let f = TestCase::mutated("f", a.clone());
                let cands = generate_candidates(&f, &MutationConfig { candidate_count: 1, rng_seed: i, ..cfg.clone() });
                cands.first().map(|c| c.params.clone()).unwrap_or_else(|| a.clone())
            };
            let got = delta(&a, &b).value();
            let want = similarity_oracle(&params_sim_text(&a), &params_sim_text(&b));
            ensure((got - want).abs() <= 1e-12, || format!("pair {i}: delta {got} vs oracle {want}"))?;
            ensure((0.0..=1.0).contains(&got), || format!("pair {i}: delta {got} out of range"))?;
            ensure(delta(&a, &a).value() == 1.0, || format!("pair {i}: delta(x,x) != 1"))?;
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 3. Mutation soundness

fn mutation_corpus() -> Vec<TestCase> {
    let s = TypedValue::str;
    let values = vec![
        s("-0Xfade"),
        s("hello world, this is a longer input string"),
        s("ab"),
        s(""),
        s("ÀÉÎõü日本"),
        TypedValue::Int(0),
        TypedValue::Int(-7),
        TypedValue::Int(i64::MAX),
        TypedValue::Float(1.5),
        TypedValue::Float(-0.0),
        TypedValue::Float(1e300),
        TypedValue::Float(f64::INFINITY),
        TypedValue::Char('x'),
        TypedValue::Bool(true),
        TypedValue::Array(vec![TypedValue::Int(1), TypedValue::Int(2), TypedValue::Int(3)]),
        TypedValue::Array(vec![s("x"), s("yz")]),
        TypedValue::Array(vec![]),
        TypedValue::object(vec![("a".into(), TypedValue::Int(4)), ("b".into(), s("text"))]).unwrap(),
    ];
    let mut corpus: Vec<TestCase> = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| TestCase::mutated(format!("c{i}"), ParamTuple::single("x", v)))
        .collect();
    corpus.push(TestCase::mutated(
        "multi",
        ParamTuple::new(vec![
            ("s".into(), s("1eE")),
            ("n".into(), TypedValue::Int(10)),
            ("c".into(), TypedValue::Char('q')),
        ])
        .unwrap(),
    ));
    corpus
}

/// Every string operator stays within its edit budget.
fn string_bound_holds(original: &str, mutant: &str) -> bool {
    let budget = edit_budget(original.chars().count());
    if osa_matrix(original, mutant) <= budget {
        return true;
    }
    // Swapping two substrings keeps the characters and length but may move
    // up to twice the budget of them.
    let (a, b): (Vec<char>, Vec<char>) = (original.chars().collect(), mutant.chars().collect());
    let (mut sa, mut sb) = (a.clone(), b.clone());
    sa.sort_unstable();
    sb.sort_unstable();
    let moved = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    a.len() == b.len() && sa == sb && moved <= 2 * budget
}

fn same_kind(a: &TypedValue, b: &TypedValue) -> bool {
    a.kind() == b.kind()
}

#[test]
fn criterion_03_mutation_soundness() {
    criterion(3, "10,000 mutants keep kind, differ from the original, respect string budgets, replay identically", || {
        let corpus = mutation_corpus();
        let mut total = 0usize;
        let mut seed = 0u64;
        while total < 10_000 {
            for f in &corpus {
                let cfg = MutationConfig { candidate_count: 150, rng_seed: seed, ..MutationConfig::default() };
                let first = generate_candidates(f, &cfg);
                let again = generate_candidates(f, &cfg);
                let bytes = |c: &[TestCase]| c.iter().map(|t| format!("{}\t{}\n", t.id, t.key())).collect::<String>();
                ensure(bytes(&first) == bytes(&again), || format!("{} seed {seed}: replay differs", f.id))?;
                for m in &first {
                    ensure(m.key() != f.key(), || format!("{}: mutant equals original", f.id))?;
                    let (orig, muts) = (f.params.entries(), m.params.entries());
                    ensure(orig.len() == muts.len(), || format!("{}: arity changed", f.id))?;
                    for ((n0, v0), (n1, v1)) in orig.iter().zip(muts) {
                        ensure(n0 == n1 && same_kind(v0, v1), || {
                            format!("{}: {n0} changed kind {:?} -> {:?}", f.id, v0.kind(), v1.kind())
                        })?;
                        if let (TypedValue::Str(a), TypedValue::Str(b)) = (v0, v1) {
                            ensure(string_bound_holds(a, b), || format!("{a:?} -> {b:?} exceeds the edit budget"))?;
                        }
                    }
                }
                total += first.len();
            }
            seed += 1;
        }
        // Operator-level check on random strings.
        let cfg = MutationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for op in MutationOp::for_kind(ValueKind::Str) {
            for _ in 0..300 {
                let s = random_string(&mut rng, 40);
                if let Some(TypedValue::Str(m)) = apply_op(*op, &TypedValue::str(s.clone()), &cfg, &mut rng) {
                    ensure(m != s, || format!("{op:?} returned its input"))?;
                    ensure(string_bound_holds(&s, &m), || format!("{op:?}: {s:?} -> {m:?}"))?;
                }
            }
        }
        ensure(total >= 10_000, || format!("only {total} mutants"))
    });
}

// ---------------------------------------------------------------------------
// 4. Pair-pool admission

#[test]
fn criterion_04_pool_admission() {
    criterion(4, "every admitted pair has delta > theta for theta in {0.3, 0.5, 0.7}", || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut admitted_total = 0;
        for round in 0..20u64 {
            let failing: Vec<TestCase> = (0..4)
                .map(|i| TestCase::mutated(format!("f{i}"), ParamTuple::single("s", TypedValue::str(random_string(&mut rng, 12)))))
                .collect();
            let mut passing: Vec<TestCase> = Vec::new();
            for f in &failing {
                let cfg = MutationConfig { candidate_count: 8, rng_seed: round, ..MutationConfig::default() };
                passing.extend(generate_candidates(f, &cfg));
                passing.push(TestCase::mutated(format!("r{}", passing.len()), ParamTuple::single("s", TypedValue::str(random_string(&mut rng, 12)))));
            }
            for theta in [0.3, 0.5, 0.7] {
                let pool = build_pool(&failing, &passing, &PairConfig { theta, k: 2 });
                let mut inside = HashSet::new();
                for p in pool.pairs() {
                    let sim = similarity_oracle(&params_sim_text(&p.fail.params), &params_sim_text(&p.pass.params));
                    ensure(sim > theta, || format!("admitted {:?} with delta {sim} at theta {theta}", p.identity()))?;
                    inside.insert(p.identity());
                }
                for f in &failing {
                    for p in &passing {
                        let sim = similarity_oracle(&params_sim_text(&f.params), &params_sim_text(&p.params));
                        let id = (f.id.clone(), p.id.clone());
                        ensure(sim <= theta || inside.contains(&id), || format!("missed {id:?} with delta {sim}"))?;
                    }
                }
                admitted_total += pool.len();
            }
        }
        ensure(admitted_total > 0, || "no pair was ever admitted".into())
    });
}

// ---------------------------------------------------------------------------
// 5. SelectPair fairness

#[test]
fn criterion_05_selection_fairness() {
    criterion(5, "4-pair pool, k=1, 100 selections: counts differ by at most 1, replay identical", || {
        let failing = vec![common::str_case("f", "abcx")];
        let passing: Vec<_> = ["abcd", "abce", "abcf", "abcg"]
            .iter()
            .enumerate()
            .map(|(i, s)| common::str_case(&format!("p{i}"), s))
            .collect();
        let run = || {
            let mut pool = build_pool(&failing, &passing, &PairConfig::default());
            let mut picks = Vec::new();
            for _ in 0..100 {
                let Feedback::PairSet(ps) = pool.select(1, &failing) else { return Err("pool empty".to_string()) };
                picks.push(ps[0].pass.id.clone());
                let counts: Vec<u32> = pool.pairs().iter().map(|p| p.times_selected).collect();
                let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
                ensure(spread <= 1, || format!("counts {counts:?}"))?;
            }
            Ok(picks)
        };
        let first = run()?;
        ensure(first.len() == 100, || "short run".into())?;
        ensure(run()? == first, || "replay chose different pairs".into())
    });
}

// ---------------------------------------------------------------------------
// Scripted sessions on the hexparse fixture

fn reply(code: &str) -> String {
    format!("Here you go.\n\n```python\n{code}\n```\n")
}

fn wrong_patch(i: usize) -> String {
    let bug = common::hexparse();
    bug.buggy_source.replace(
        "str.startswith(\"0x\") or str.startswith(\"-0x\")",
        &format!("str.startswith(\"0x\") or str.startswith(\"0X\") or {i} < 0"),
    )
}

fn scripted(entries: Vec<String>) -> Provider {
    Provider::new(ScriptedTransport::new(
        entries
            .into_iter()
            .map(|response| ScriptEntry { expect: None, response })
            .collect(),
    ))
}

fn small_config(m: usize, n: usize, augment_budget: usize) -> RepairConfig {
    let mut cfg = RepairConfig {
        budget: RepairBudget { m, n, augment_budget, k: 2 },
        ..RepairConfig::default()
    };
    cfg.mutation.candidate_count = 60;
    cfg
}

#[test]
fn criterion_06_budget_law() {
    criterion(6, "query budget: all-wrong m=2,n=2 gives 4; third-correct gives 3 + min(1, remainder)", || {
        let bug = common::hexparse();
        let fixed = common::fixed_source();
        let cfg = small_config(2, 2, 1);

        let wrong = scripted((0..10).map(|i| reply(&wrong_patch(i))).collect());
        let run = RepairSession::new(&bug, &cfg, &wrong).run();
        let status = run.result.map_err(|e| e.to_string())?;
        ensure(status == RepairStatus::Exhausted, || format!("{status:?}"))?;
        ensure(run.metrics.query_count == 4, || format!("all-wrong queryCount {}", run.metrics.query_count))?;
        ensure(run.log.len() == 4, || format!("{} log records", run.log.len()))?;

        for remainder in [0usize, 1, 3] {
            let mut entries = vec![reply(&wrong_patch(0)), reply(&wrong_patch(1)), reply(&fixed)];
            entries.extend((0..remainder).map(|i| reply(&fixed.replace("(str)", &format!("(str)  # v{i}")))));
            let provider = scripted(entries);
            let run = RepairSession::new(&bug, &cfg, &provider).run();
            let status = run.result.map_err(|e| e.to_string())?;
            ensure(matches!(status, RepairStatus::Plausible(_)), || format!("{status:?}"))?;
            let want = 3 + remainder.min(1) as u64;
            ensure(run.metrics.query_count == want, || {
                format!("remainder {remainder}: queryCount {} != {want}", run.metrics.query_count)
            })?;
        }

        let defaults = RepairBudget::default();
        ensure(defaults.repair_ceiling() == 120 && defaults.query_ceiling() == 120 + 40, || {
            format!("default ceilings {} / {}", defaults.repair_ceiling(), defaults.query_ceiling())
        })
    });
}

#[derive(Default)]
struct Recorder {
    restarts: Vec<SessionState>,
    rounds: Vec<SessionState>,
}

impl Observer for Recorder {
    fn on_restart(&mut self, state: &SessionState) {
        self.restarts.push(state.clone());
    }
    fn on_round(&mut self, state: &SessionState) {
        self.rounds.push(state.clone());
    }
}

#[test]
fn criterion_07_restart_purity() {
    criterion(7, "tmp equals the original source at every restart boundary", || {
        let bug = common::hexparse();
        let cfg = small_config(3, 3, 0);
        let provider = scripted((0..9).map(|i| reply(&wrong_patch(i))).collect());
        let mut rec = Recorder::default();
        let run = RepairSession::new(&bug, &cfg, &provider).with_observer(&mut rec).run();
        run.result.map_err(|e| e.to_string())?;
        ensure(rec.restarts.len() == 3, || format!("{} restarts", rec.restarts.len()))?;
        for (i, s) in rec.restarts.iter().enumerate() {
            ensure(s.iter1 == i, || format!("restart {i} reported iter1 {}", s.iter1))?;
            ensure(s.tmp == bug.buggy_source, || format!("restart {i}: tmp differs from the original"))?;
        }
        let continued = rec.rounds.iter().filter(|s| s.iter2 > 0).count();
        ensure(continued == 6 && rec.rounds.iter().filter(|s| s.iter2 > 0).all(|s| s.tmp != bug.buggy_source), || {
            "continuous rounds did not carry the previous patch".into()
        })
    });
}

// ---------------------------------------------------------------------------
// 8. Golden prompts

#[test]
fn criterion_08_golden_prompts() {
    criterion(8, "repair and augmentation prompts match the golden files", || {
        let prompts = common::golden_prompts();
        ensure(prompts.len() >= 5, || format!("only {} golden files", prompts.len()))?;
        for (name, text) in &prompts {
            common::check_golden(name, text)?;
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 9. End to end

/// Runs one declared test through the adapter without the harness.
fn replay_test(patch: &str, test_id: &str) -> Result<bool, String> {
    let bug = common::hexparse();
    let mut child = Command::new(&bug.adapter_command[0])
        .args(&bug.adapter_command[1..])
        .current_dir(&bug.base_dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let request = serde_json::json!({"mode": "suite", "patch": patch, "test_id": test_id, "timeout_secs": 30});
    child.stdin.take().unwrap().write_all(request.to_string().as_bytes()).map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    Ok(v["verdict"] == "pass")
}

#[test]
fn criterion_09_end_to_end() {
    criterion(9, "hexparse: passing mutant with delta >= 0.9, plausible patch replays green, under 30s", || {
        let started = Instant::now();
        let bug = common::hexparse();
        let cfg = RepairConfig::default();
        let provider = Provider::mock_from_script(common::fixture_dir().join("script.json")).map_err(|e| e.to_string())?;
        let run = RepairSession::new(&bug, &cfg, &provider).run();
        let secs = started.elapsed().as_secs_f64();
        let RepairStatus::Plausible(patches) = run.result.map_err(|e| e.to_string())? else {
            return Err("repair exhausted".into());
        };
        let failing = common::str_case("t_fail_upperhex", "-0Xfade");
        let best = run
            .mutants
            .iter()
            .map(|m| delta(&failing.params, &m.params).value())
            .fold(0.0, f64::max);
        ensure(best >= 0.9, || format!("best passing mutant has delta {best} ({} mutants)", run.mutants.len()))?;
        for patch in &patches {
            for test in &bug.test_ids {
                ensure(replay_test(patch, test)?, || format!("patch fails {test} on replay"))?;
            }
        }
        ensure(!replay_test(&bug.buggy_source, "t_fail_upperhex")?, || "replay cannot see the bug".into())?;
        println!("    {} passing mutants, best delta {best:.3}, {} patches, {secs:.1}s", run.mutants.len(), patches.len());
        ensure(secs < 30.0, || format!("run took {secs:.1}s"))
    });
}

// ---------------------------------------------------------------------------
// 10. Traceback dedup and dependency budget

#[test]
fn criterion_10_dedup_and_dependency_budget() {
    criterion(10, "first-occurrence traceback dedup; included dependents fit the char budget", || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let names: Vec<String> = (0..8).map(|i| format!("fn{i}")).collect();
        for round in 0..200 {
            // Dedup.
            let base: Vec<String> = (0..5).map(|i| format!("Error {i}\n  at fn{i}(F.java:{i})")).collect();
            let corpus: Vec<Traceback> = (0..rng.random_range(0..20))
                .map(|_| {
                    let text = &base[rng.random_range(0..base.len())];
                    let pad = if rng.random_bool(0.3) { "  \t" } else { "" };
                    Traceback::new(text.replace('\n', &format!("{pad}\n")), None)
                })
                .collect();
            let mut seen = HashSet::new();
            let want: Vec<&str> = corpus
                .iter()
                .filter(|t| {
                    let key: Vec<&str> = t.raw.lines().map(str::trim_end).collect();
                    seen.insert(key.join("\n"))
                })
                .map(|t| t.raw.as_str())
                .collect();
            let got = dedupe_tracebacks(&corpus);
            let got: Vec<&str> = got.iter().map(|t| t.raw.as_str()).collect();
            ensure(got == want, || format!("round {round}: dedup mismatch"))?;

            // Dependency budget.
            let mut index = ProjectIndex::new();
            for (i, name) in names.iter().enumerate() {
                let callee = &names[rng.random_range(0..names.len())];
                let body = "x".repeat(rng.random_range(10..400));
                index.insert(name.clone(), format!("void {name}() {{ {callee}(); // {body} {i}\n}}"));
            }
            let frames: Vec<Frame> = (0..rng.random_range(1..8))
                .map(|i| Frame { function: names[rng.random_range(0..names.len())].clone(), file: "F.java".into(), line: i })
                .collect();
            let tb = Traceback::new("synthetic", Some(frames.clone()));
            let budget = rng.random_range(0..1500);
            let buggy = format!("void bug() {{ {}(); }}", names[rng.random_range(0..names.len())]);
            let deps = extract_dependents(&buggy, "bug", &[tb], &index, budget);
            let framed: HashSet<&str> = frames.iter().map(|f| f.function.as_str()).collect();
            let mut total = 0;
            for (name, source) in &deps.functions {
                ensure(framed.contains(name.as_str()), || format!("{name} is not in the traceback"))?;
                ensure(index.get(name) == Some(source), || format!("{name} source differs from the index"))?;
                total += source.chars().count();
            }
            ensure(total <= budget, || format!("round {round}: {total} chars over budget {budget}"))?;
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 11. Report arithmetic

#[test]
fn criterion_11_report_average() {
    criterion(11, "report avgQuery equals the mean of 50 synthetic rows", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = Vec::new();
        for i in 0..50 {
            let q: u64 = rng.random_range(0..=160);
            counts.push(q);
            let sub = dir.path().join(format!("bug{i:02}"));
            std::fs::create_dir(&sub).map_err(|e| e.to_string())?;
            let row = serde_json::json!({
                "id": format!("bug{i:02}"),
                "status": if q.is_multiple_of(3) { "exhausted" } else { "plausible" },
                "queryCount": q,
                "plausibleCount": q % 4,
                "wallSeconds": q as f64 / 7.0,
            });
            std::fs::write(sub.join("report.json"), row.to_string()).map_err(|e| e.to_string())?;
        }
        let out = Command::new(env!("CARGO_BIN_EXE_contrast-repair"))
            .args(["report", "--format", "json", "--in"])
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let doc: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        let got = doc["aggregate"]["avgQuery"].as_f64().ok_or("avgQuery missing")?;
        let want = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        ensure((got - want).abs() <= 1e-9, || format!("avgQuery {got} != {want}"))?;
        ensure(doc["aggregate"]["bugs"] == 50, || "bug count".into())?;
        ensure(doc["rows"].as_array().is_some_and(|r| r.len() == 50), || "row count".into())
    });
}

// ---------------------------------------------------------------------------
// 12. Live smoke (opt-in)

#[test]
fn criterion_12_live_smoke() {
    if std::env::var_os(API_KEY_ENV).is_none() {
        println!("criterion 12 SKIP: {API_KEY_ENV} not set (live smoke test is opt-in)");
        return;
    }
    criterion(12, "live provider round-trips one completion with a fenced block", || {
        let mut config = ProviderConfig::default();
        if let Ok(url) = std::env::var("CONTRAST_REPAIR_API_URL") {
            config.url = url;
        }
        if let Ok(model) = std::env::var("CONTRAST_REPAIR_MODEL") {
            config.model = model;
        }
        let provider = Provider::live(&config).map_err(|e| e.to_string())?;
        let request = CompletionRequest::new(
            &config.model,
            "You are a Python program repair expert.",
            "Fix this function so it returns the sum. Reply with the function in one fenced code block.\n```python\ndef add(a, b):\n    return a - b\n```",
            config.temperature,
        );
        let response = provider.complete(&request).map_err(|e| e.to_string())?;
        let patch = extract_patch(&response, "add").map_err(|e| e.to_string())?;
        ensure(patch.contains("add"), || format!("unexpected patch {patch:?}"))?;
        ensure(provider.stats().query_count == 1, || "query not counted".into())
    });
}

