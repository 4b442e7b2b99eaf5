//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use contrast_repair::bugspec::{load_bug_spec, BugSpec};
use contrast_repair::context::{extract_dependents, Frame, Traceback};
use contrast_repair::harness::{OracleKind, TestCase};
use contrast_repair::pairing::{build_pool, Feedback, PairConfig};
use contrast_repair::prompting::{
    build_augment_prompt, build_repair_prompt, PromptBudget, RepairPrompt, RepairPromptInput,
};
use contrast_repair::values::{ParamTuple, TypedValue};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixture_dir() -> PathBuf {
    repo_root().join("fixtures/hexparse")
}

pub fn hexparse() -> BugSpec {
    load_bug_spec(fixture_dir().join("bug.json")).expect("fixture bug spec")
}

pub fn fixed_source() -> String {
    std::fs::read_to_string(fixture_dir().join("fixed.py"))
        .unwrap()
        .trim_end()
        .to_string()
}

pub fn str_case(id: &str, s: &str) -> TestCase {
    TestCase::recorded(id, id, ParamTuple::single("str", TypedValue::str(s)), OracleKind::Exception)
}

/// The three recorded hexparse tests: one failing, two passing.
pub fn hexparse_tests() -> (Vec<TestCase>, Vec<TestCase>) {
    (
        vec![str_case("t_fail_upperhex", "-0Xfade")],
        vec![str_case("t_pass_hex", "0xfade"), str_case("t_pass_neghex", "-0xfade")],
    )
}

/// What the adapter reports for the failing test under the buggy source.
pub fn hexparse_traceback() -> Traceback {
    Traceback::new(
        "Traceback (most recent call last):\n  File \"createNumber.py\", line 6, in createNumber\n  File \"NumberUtils.py\", line 8, in isAllZeros\nNumberFormatException: '-0Xfade' is not a valid number.",
        Some(vec![
            Frame { function: "createNumber".into(), file: "createNumber.py".into(), line: 6 },
            Frame { function: "isAllZeros".into(), file: "NumberUtils.py".into(), line: 8 },
        ]),
    )
}

fn repair_prompt(bug: &BugSpec, feedback: &Feedback, tracebacks: &[Traceback], budget: usize) -> RepairPrompt {
    let dependents = extract_dependents(&bug.buggy_source, &bug.buggy_name, tracebacks, &bug.project_index, 4000);
    build_repair_prompt(
        &RepairPromptInput {
            buggy: &bug.buggy_source,
            feedback,
            tracebacks,
            dependents: &dependents,
            fault_lines: bug.fault_lines.as_deref(),
            style: &bug.style(),
        },
        &PromptBudget { prompt_char_budget: budget },
    )
    .unwrap()
}

/// Every golden prompt, keyed by file name.
pub fn golden_prompts() -> Vec<(&'static str, String)> {
    let bug = hexparse();
    let style = bug.style();
    let (failing, passing) = hexparse_tests();
    let tb = vec![hexparse_traceback()];

    let mut pool = build_pool(&failing, &passing, &PairConfig::default());
    let pairs = pool.select(2, &failing);
    let fail_only = Feedback::FailOnly(failing.clone());

    // Distinct tracebacks from several runs overflow a tight budget, so the
    // builder has to drop context.
    let many: Vec<Traceback> = (0..12)
        .map(|i| {
            Traceback::new(
                format!("{}\n  (run {i})", hexparse_traceback().raw),
                Some(hexparse_traceback().frames),
            )
        })
        .collect();

    let fixed = fixed_source();
    let alt1 = fixed.replace(
        "str.startswith((\"0x\", \"0X\", \"-0x\", \"-0X\"))",
        "str.lower().startswith((\"0x\", \"-0x\"))",
    );
    let alt2 = fixed.replace(
        "str.startswith((\"0x\", \"0X\", \"-0x\", \"-0X\"))",
        "str.lstrip(\"-\")[:2] in (\"0x\", \"0X\")",
    );

    vec![
        ("hexparse_pairset.txt", repair_prompt(&bug, &pairs, &tb, 12_000).render()),
        ("hexparse_failonly.txt", repair_prompt(&bug, &fail_only, &tb, 12_000).render()),
        ("hexparse_truncated.txt", repair_prompt(&bug, &pairs, &many, 2_000).render()),
        ("augment_1.txt", build_augment_prompt(&bug.buggy_source, std::slice::from_ref(&fixed), &style).unwrap().render()),
        ("augment_3.txt", build_augment_prompt(&bug.buggy_source, &[fixed, alt1, alt2], &style).unwrap().render()),
    ]
}

/// Compares `actual` with the frozen file, rewriting it instead when
/// `UPDATE_GOLDEN=1`.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = repo_root().join("golden").join(name);
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()) + 1);
        Err(format!("{name} differs from the golden file at line {line}"))
    }
}
