//! The repair session: restarting and continuous conversations with the
//! model, patch validation against the full suite, and patch augmentation.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bugspec::BugSpec;
use crate::context::{dedupe_tracebacks, extract_dependents, DependencySet, Traceback};
use crate::harness::{Harness, HarnessError, OracleKind, Provenance, SuiteRun, TestCase, Verdict};
use crate::llm::{CompletionRequest, LlmError, Provider, ProviderConfig};
use crate::mutation::MutationConfig;
use crate::pairing::{augment_passing_until, build_pool, Feedback, PairConfig, PairPool};
use crate::prompting::{
    build_augment_prompt, build_repair_prompt, extract_patch, PromptBudget, PromptError,
    RepairPrompt, RepairPromptInput,
};
use crate::similarity::delta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairBudget {
    /// Restarts.
    pub m: usize,
    /// Continuous attempts per restart.
    pub n: usize,
    /// Extra queries spent looking for alternative plausible patches.
    pub augment_budget: usize,
    /// Pairs per prompt.
    pub k: usize,
}

impl Default for RepairBudget {
    fn default() -> Self {
        RepairBudget {
            m: 40,
            n: 3,
            augment_budget: 40,
            k: 2,
        }
    }
}

impl RepairBudget {
    pub fn repair_ceiling(&self) -> usize {
        self.m * self.n
    }

    pub fn query_ceiling(&self) -> usize {
        self.repair_ceiling() + self.augment_budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub budget: RepairBudget,
    pub theta: f64,
    pub mutation: MutationConfig,
    /// Wall-clock allowance for validating mutants.
    pub mutation_budget_secs: u64,
    pub prompt: PromptBudget,
    pub dependency_char_budget: usize,
    pub test_timeout_secs: u64,
    pub workers: usize,
    pub provider: ProviderConfig,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            budget: RepairBudget::default(),
            theta: 0.5,
            mutation: MutationConfig::default(),
            mutation_budget_secs: 25 * 60,
            prompt: PromptBudget::default(),
            dependency_char_budget: 4_000,
            test_timeout_secs: 30,
            workers: 4,
            provider: ProviderConfig::default(),
        }
    }
}

impl RepairConfig {
    pub fn pair_config(&self) -> PairConfig {
        PairConfig {
            theta: self.theta,
            k: self.budget.k,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.budget.m == 0 || self.budget.n == 0 || self.budget.k == 0 {
            return Err("m, n and k must be positive".into());
        }
        self.pair_config().validate()?;
        self.mutation.validate().map_err(|e| e.to_string())?;
        self.prompt.validate()?;
        if self.test_timeout_secs == 0 {
            return Err("test timeout must be positive".into());
        }
        if self.workers == 0 {
            return Err("workers must be positive".into());
        }
        Ok(())
    }

    pub fn harness_for(&self, bug: &BugSpec) -> Harness {
        bug.harness(Duration::from_secs(self.test_timeout_secs), self.workers)
    }
}

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Repair,
    Augment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundVerdict {
    Plausible,
    Failing,
    NoPatch,
}

/// One model call. Augmentation records reuse `iter1` of the restart that
/// found the first plausible patch and number their attempts in `iter2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter1: usize,
    pub iter2: usize,
    pub phase: Phase,
    pub prompt: String,
    pub response: String,
    pub verdict: RoundVerdict,
    pub ts: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub query_count: u64,
    pub repair_queries: u64,
    pub augment_queries: u64,
    pub plausible_count: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepairStatus {
    Plausible(Vec<String>),
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub status: RepairStatus,
    pub metrics: Metrics,
}

/// Everything a session produced. `metrics` and `log` are filled in even
/// when `result` is an error.
#[derive(Debug)]
pub struct RepairRun {
    pub result: Result<RepairStatus, RepairError>,
    pub metrics: Metrics,
    pub log: Vec<LogRecord>,
    /// Every passing mutant found for the original failing tests, including
    /// those identical to a recorded passing test.
    pub mutants: Vec<TestCase>,
}

impl RepairRun {
    pub fn outcome(&self) -> Result<RepairOutcome, &RepairError> {
        match &self.result {
            Ok(status) => Ok(RepairOutcome {
                status: status.clone(),
                metrics: self.metrics,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Loop state handed to observers.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub iter1: usize,
    pub iter2: usize,
    pub tmp: String,
    pub pool: PairPool,
    pub query_count: u64,
}

pub trait Observer {
    /// Called at the top of every restart, before pair selection.
    fn on_restart(&mut self, _state: &SessionState) {}
    /// Called before each continuous attempt.
    fn on_round(&mut self, _state: &SessionState) {}
}

impl Observer for () {}

fn utc_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Whitespace-insensitive identity of a patch.
pub fn normalize_patch(source: &str) -> String {
    source.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reruns the selected failing tests against `tmp` and gathers the context
/// for the next prompt.
pub fn refresh_feedback(
    harness: &Harness,
    tmp: &str,
    selected: &Feedback,
    bug: &BugSpec,
    dependency_char_budget: usize,
) -> Result<(Vec<Traceback>, DependencySet), HarnessError> {
    let mut tracebacks = Vec::new();
    let mut ran = HashSet::new();
    for test in selected.failing_tests() {
        let verdict = match (&test.provenance, &test.test_id) {
            (Provenance::Recorded, Some(test_id)) => {
                if !ran.insert(test_id.clone()) {
                    continue;
                }
                harness.run_test(tmp, test_id)?
            }
            _ if test.oracle == OracleKind::Exception => {
                harness.run_with_args(tmp, &test.params, OracleKind::Exception)?
            }
            _ => continue,
        };
        tracebacks.extend(verdict.traceback(harness.timeout));
    }
    let tracebacks = dedupe_tracebacks(&tracebacks);
    let dependents = extract_dependents(
        tmp,
        &bug.buggy_name,
        &tracebacks,
        &bug.project_index,
        dependency_char_budget,
    );
    Ok((tracebacks, dependents))
}

pub struct RepairSession<'a> {
    bug: &'a BugSpec,
    cfg: &'a RepairConfig,
    provider: &'a Provider,
    harness: Harness,
    clock: Box<dyn Fn() -> String + 'a>,
    observer: Option<&'a mut dyn Observer>,
    log: Vec<LogRecord>,
    base_queries: u64,
    repair_queries: u64,
    augment_queries: u64,
    plausible_count: usize,
}

impl<'a> RepairSession<'a> {
    pub fn new(bug: &'a BugSpec, cfg: &'a RepairConfig, provider: &'a Provider) -> Self {
        RepairSession {
            bug,
            cfg,
            provider,
            harness: cfg.harness_for(bug),
            clock: Box::new(utc_now),
            observer: None,
            log: Vec::new(),
            base_queries: 0,
            repair_queries: 0,
            augment_queries: 0,
            plausible_count: 0,
        }
    }

    pub fn with_clock(mut self, clock: impl Fn() -> String + 'a) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn with_observer(mut self, observer: &'a mut dyn Observer) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn run(mut self) -> RepairRun {
        let started = Instant::now();
        self.base_queries = self.provider.stats().query_count;
        let mut mutants = Vec::new();
        let result = self.run_inner(&mut mutants);
        let metrics = Metrics {
            query_count: self.repair_queries + self.augment_queries,
            repair_queries: self.repair_queries,
            augment_queries: self.augment_queries,
            plausible_count: self.plausible_count,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        RepairRun {
            result,
            metrics,
            log: self.log,
            mutants,
        }
    }

    fn queries_so_far(&self) -> u64 {
        self.provider.stats().query_count - self.base_queries
    }

    fn complete(&mut self, prompt: &RepairPrompt, phase: Phase) -> Result<String, LlmError> {
        let request = CompletionRequest::new(
            &self.cfg.provider.model,
            &prompt.system,
            &prompt.user,
            self.cfg.provider.temperature,
        );
        let before = self.provider.stats().query_count;
        let result = self.provider.complete(&request);
        let spent = self.provider.stats().query_count - before;
        match phase {
            Phase::Repair => self.repair_queries += spent,
            Phase::Augment => self.augment_queries += spent,
        }
        result
    }

    fn record(&mut self, iter1: usize, iter2: usize, phase: Phase, prompt: &RepairPrompt, response: String, verdict: RoundVerdict) {
        self.log.push(LogRecord {
            iter1,
            iter2,
            phase,
            prompt: prompt.render(),
            response,
            verdict,
            ts: (self.clock)(),
        });
    }

    fn run_inner(&mut self, mutants_out: &mut Vec<TestCase>) -> Result<RepairStatus, RepairError> {
        self.cfg.validate().map_err(RepairError::Config)?;
        self.bug
            .validate()
            .map_err(|e| RepairError::Config(e.to_string()))?;
        let bug = self.bug;
        let cfg = self.cfg;
        let original = bug.buggy_source.as_str();
        let oracle = bug.oracle_kind_default;

        let first = self.harness.run_suite(original)?;
        if first.all_pass() {
            self.plausible_count = 1;
            return Ok(RepairStatus::Plausible(vec![original.to_string()]));
        }
        let recorded = self.harness.capture(original, oracle)?;
        let initial = first.assemble(&recorded, oracle);
        let failing = initial.failing_cases();
        let recorded_passing = initial.passing;

        let deadline = Instant::now() + Duration::from_secs(cfg.mutation_budget_secs);
        let mut known: HashSet<String> = recorded_passing.iter().map(TestCase::key).collect();
        known.extend(failing.iter().map(TestCase::key));
        let mut seen_fail = HashSet::new();
        for f in &failing {
            if f.oracle != OracleKind::Exception || f.params.is_empty() || !seen_fail.insert(f.key()) {
                continue;
            }
            mutants_out.extend(augment_passing_until(f, &self.harness, original, &cfg.mutation, deadline)?);
        }
        log::info!(
            "{}: {} failing, {} passing, {} passing mutants",
            bug.id,
            failing.len(),
            recorded_passing.len(),
            mutants_out.len()
        );
        // Mutants that coincide with a recorded test add nothing to the pool.
        let fresh: Vec<TestCase> = mutants_out
            .iter()
            .filter(|m| known.insert(m.key()))
            .cloned()
            .collect();
        let mutants: &[TestCase] = &fresh;

        let pair_cfg = cfg.pair_config();
        let mut all_passing = recorded_passing.clone();
        all_passing.extend(mutants.iter().cloned());
        let root_pool = build_pool(&failing, &all_passing, &pair_cfg);
        let mut counts: HashMap<(String, String), u32> = HashMap::new();
        let style = bug.style();

        for iter1 in 0..cfg.budget.m {
            let mut tmp = original.to_string();
            let mut pool = root_pool.clone();
            pool.apply_counts(&counts);
            self.notify_restart(iter1, &tmp, &pool);
            let mut feedback = pool.select(cfg.budget.k, &failing);
            counts.extend(pool.counts());

            for iter2 in 0..cfg.budget.n {
                self.notify_round(iter1, iter2, &tmp, &pool);
                let (tracebacks, dependents) = refresh_feedback(
                    &self.harness,
                    &tmp,
                    &feedback,
                    bug,
                    cfg.dependency_char_budget,
                )?;
                let fault_lines = (tmp == original)
                    .then_some(bug.fault_lines.as_deref())
                    .flatten();
                let prompt = build_repair_prompt(
                    &RepairPromptInput {
                        buggy: &tmp,
                        feedback: &feedback,
                        tracebacks: &tracebacks,
                        dependents: &dependents,
                        fault_lines,
                        style: &style,
                    },
                    &cfg.prompt,
                )?;
                let response = self.complete(&prompt, Phase::Repair)?;
                let patch = match extract_patch(&response, &bug.buggy_name) {
                    Ok(p) => p,
                    Err(_) => {
                        self.record(iter1, iter2, Phase::Repair, &prompt, response, RoundVerdict::NoPatch);
                        continue;
                    }
                };
                let run = self.harness.run_suite(&patch)?;
                if run.all_pass() {
                    self.record(iter1, iter2, Phase::Repair, &prompt, response, RoundVerdict::Plausible);
                    let patches = self.augment_patches(iter1, patch);
                    self.plausible_count = patches.len();
                    return Ok(RepairStatus::Plausible(patches));
                }
                self.record(iter1, iter2, Phase::Repair, &prompt, response, RoundVerdict::Failing);

                let (new_failing, new_passing) =
                    self.recollect(&run, &patch, &recorded, mutants, &pair_cfg)?;
                pool = build_pool(&new_failing, &new_passing, &pair_cfg);
                pool.apply_counts(&counts);
                feedback = pool.select(cfg.budget.k, &new_failing);
                counts.extend(pool.counts());
                tmp = patch;
            }
        }
        Ok(RepairStatus::Exhausted)
    }

    /// Failing and passing tests under a rejected patch. Mutants rejoin the
    /// passing side only if they still pass under the patch; only those close
    /// enough to some failing test to form a pair are rechecked.
    fn recollect(
        &self,
        run: &SuiteRun,
        patch: &str,
        recorded: &[TestCase],
        mutants: &[TestCase],
        pair_cfg: &PairConfig,
    ) -> Result<(Vec<TestCase>, Vec<TestCase>), HarnessError> {
        let result = run.assemble(recorded, self.bug.oracle_kind_default);
        let failing = result.failing_cases();
        let mut passing = result.passing;
        let relevant: Vec<&TestCase> = mutants
            .iter()
            .filter(|m| {
                failing
                    .iter()
                    .any(|f| delta(&f.params, &m.params).value() > pair_cfg.theta)
            })
            .collect();
        if !relevant.is_empty() {
            let inputs: Vec<_> = relevant.iter().map(|m| m.params.clone()).collect();
            let deadline = Instant::now() + Duration::from_secs(self.cfg.mutation_budget_secs);
            let verdicts = self.harness.validate_many(patch, &inputs, deadline)?;
            passing.extend(
                relevant
                    .into_iter()
                    .zip(verdicts)
                    .filter(|(_, v)| matches!(v, Some(Verdict::Pass)))
                    .map(|(m, _)| m.clone()),
            );
        }
        Ok((failing, passing))
    }

    /// Asks for alternatives to `first` until the augmentation budget is
    /// spent. Transport or harness failures end the search early.
    fn augment_patches(&mut self, iter1: usize, first: String) -> Vec<String> {
        let mut plausible = vec![first];
        let mut seen: HashSet<String> = plausible.iter().map(|p| normalize_patch(p)).collect();
        let style = self.bug.style();
        for j in 0..self.cfg.budget.augment_budget {
            let prompt = match build_augment_prompt(&self.bug.buggy_source, &plausible, &style) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("augmentation stopped: {e}");
                    break;
                }
            };
            let response = match self.complete(&prompt, Phase::Augment) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("augmentation stopped: {e}");
                    break;
                }
            };
            let Ok(patch) = extract_patch(&response, &self.bug.buggy_name) else {
                self.record(iter1, j, Phase::Augment, &prompt, response, RoundVerdict::NoPatch);
                continue;
            };
            let run = match self.harness.run_suite(&patch) {
                Ok(run) => run,
                Err(e) => {
                    log::warn!("augmentation stopped: {e}");
                    break;
                }
            };
            if run.all_pass() {
                self.record(iter1, j, Phase::Augment, &prompt, response, RoundVerdict::Plausible);
                if seen.insert(normalize_patch(&patch)) {
                    plausible.push(patch);
                }
            } else {
                self.record(iter1, j, Phase::Augment, &prompt, response, RoundVerdict::Failing);
            }
        }
        plausible
    }

    fn notify_restart(&mut self, iter1: usize, tmp: &str, pool: &PairPool) {
        if self.observer.is_some() {
            let state = self.state(iter1, 0, tmp, pool);
            if let Some(o) = self.observer.as_deref_mut() {
                o.on_restart(&state);
            }
        }
    }

    fn notify_round(&mut self, iter1: usize, iter2: usize, tmp: &str, pool: &PairPool) {
        if self.observer.is_some() {
            let state = self.state(iter1, iter2, tmp, pool);
            if let Some(o) = self.observer.as_deref_mut() {
                o.on_round(&state);
            }
        }
    }

    fn state(&self, iter1: usize, iter2: usize, tmp: &str, pool: &PairPool) -> SessionState {
        SessionState {
            iter1,
            iter2,
            tmp: tmp.to_string(),
            pool: pool.clone(),
            query_count: self.queries_so_far(),
        }
    }
}

pub fn repair_bug(bug: &BugSpec, cfg: &RepairConfig, provider: &Provider) -> RepairRun {
    RepairSession::new(bug, cfg, provider).run()
}
