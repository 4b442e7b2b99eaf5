//! Prompt assembly and patch extraction.
//!
//! Wording lives in `templates/repair_prompt.txt`. A repair prompt has five
//! parts, in order: the buggy function, the pairs (or failing inputs), the
//! tracebacks, the dependent functions and the requirement. Only the
//! tracebacks and dependents are ever dropped to fit the character budget,
//! dependents first, each from the tail.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{DependencySet, Traceback};
use crate::pairing::Feedback;
use crate::values::params_sim_text;

const TEMPLATE: &str = include_str!("../templates/repair_prompt.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt needs {needed} characters without context but the budget is {budget}")]
    BudgetImpossible { needed: usize, budget: usize },
    #[error("no patch found in model response")]
    NoPatchFound,
    #[error("augmentation needs at least one plausible patch")]
    NoPlausiblePatches,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairPrompt {
    pub system: String,
    pub user: String,
}

impl RepairPrompt {
    /// System and user text as stored in golden files.
    pub fn render(&self) -> String {
        format!("[system]\n{}\n[user]\n{}\n", self.system, self.user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptBudget {
    pub prompt_char_budget: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        PromptBudget {
            prompt_char_budget: 12_000,
        }
    }
}

impl PromptBudget {
    pub const MIN: usize = 2_000;

    pub fn validate(&self) -> Result<(), String> {
        if self.prompt_char_budget < Self::MIN {
            return Err(format!("prompt budget must be at least {}", Self::MIN));
        }
        Ok(())
    }
}

/// Inclusive 1-based line range within the buggy function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan(pub usize, pub usize);

impl LineSpan {
    pub fn contains(&self, line: usize) -> bool {
        self.0 <= line && line <= self.1
    }
}

/// How code in a given target language is presented.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageStyle {
    pub label: String,
    pub line_comment: String,
}

impl LanguageStyle {
    pub fn new(label: impl Into<String>, line_comment: impl Into<String>) -> Self {
        LanguageStyle {
            label: label.into(),
            line_comment: line_comment.into(),
        }
    }

    fn fence(&self) -> String {
        self.label.to_lowercase().replace(' ', "")
    }

    fn marker(&self) -> String {
        format!("{} <BUG HERE>", self.line_comment)
    }

    fn article(&self) -> &'static str {
        match self.label.chars().next().map(|c| c.to_ascii_lowercase()) {
            Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
            _ => "a",
        }
    }
}

fn sections() -> &'static HashMap<&'static str, &'static str> {
    static SECTIONS: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    SECTIONS.get_or_init(|| {
        let mut out = HashMap::new();
        let mut name: Option<&str> = None;
        let mut start = 0;
        let mut offset = 0;
        for line in TEMPLATE.split_inclusive('\n') {
            let trimmed = line.trim_end();
            if trimmed.starts_with('[') && trimmed.ends_with(']') && !trimmed.contains(' ') {
                if let Some(n) = name {
                    out.insert(n, TEMPLATE[start..offset].trim_end_matches('\n'));
                }
                name = Some(&trimmed[1..trimmed.len() - 1]);
                start = offset + line.len();
            }
            offset += line.len();
        }
        if let Some(n) = name {
            out.insert(n, TEMPLATE[start..].trim_end_matches('\n'));
        }
        out
    })
}

fn fill(section: &str, vars: &[(&str, &str)]) -> String {
    let mut text = sections()
        .get(section)
        .unwrap_or_else(|| panic!("template has no [{section}] section"))
        .to_string();
    for (key, value) in vars {
        text = text.replace(&format!("{{{key}}}"), value);
    }
    text
}

fn block(header: String, items: &[String]) -> String {
    let mut out = header;
    for item in items {
        out.push('\n');
        out.push_str(item);
    }
    out
}

fn annotate(code: &str, spans: &[LineSpan], marker: &str) -> String {
    code.lines()
        .enumerate()
        .map(|(i, line)| {
            if spans.iter().any(|s| s.contains(i + 1)) {
                format!("{line} {marker}")
            } else {
                line.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn len(s: &str) -> usize {
    s.chars().count()
}

pub struct RepairPromptInput<'a> {
    pub buggy: &'a str,
    pub feedback: &'a Feedback,
    pub tracebacks: &'a [Traceback],
    pub dependents: &'a DependencySet,
    /// Marked with the bug marker when present.
    pub fault_lines: Option<&'a [LineSpan]>,
    pub style: &'a LanguageStyle,
}

pub fn system_text(style: &LanguageStyle) -> String {
    fill("system", &[("article", style.article()), ("lang", &style.label)])
}

pub fn build_repair_prompt(
    input: &RepairPromptInput<'_>,
    budget: &PromptBudget,
) -> Result<RepairPrompt, PromptError> {
    let style = input.style;
    let fence = style.fence();
    let marker = style.marker();

    let buggy = match input.fault_lines {
        Some(spans) if !spans.is_empty() => fill(
            "buggy_marked",
            &[
                ("lang", &style.label),
                ("marker", &marker),
                ("fence", &fence),
                ("code", &annotate(input.buggy.trim_end(), spans, &marker)),
            ],
        ),
        _ => fill(
            "buggy",
            &[("lang", &style.label), ("fence", &fence), ("code", input.buggy.trim_end())],
        ),
    };

    let feedback = match input.feedback {
        Feedback::PairSet(pairs) => block(
            fill("pairs", &[]),
            &pairs
                .iter()
                .map(|p| {
                    fill(
                        "pair",
                        &[
                            ("failing", &params_sim_text(&p.fail.params)),
                            ("passing", &params_sim_text(&p.pass.params)),
                        ],
                    )
                })
                .collect::<Vec<_>>(),
        ),
        Feedback::FailOnly(fails) => block(
            fill("fail_only", &[]),
            &fails
                .iter()
                .map(|f| fill("fail_input", &[("failing", &params_sim_text(&f.params))]))
                .collect::<Vec<_>>(),
        ),
    };

    let requirement = fill("requirement", &[]);

    let mut traces: Vec<String> = input
        .tracebacks
        .iter()
        .map(|t| fill("traceback", &[("traceback", t.raw.trim_end())]))
        .collect();
    let mut deps: Vec<String> = input
        .dependents
        .functions
        .iter()
        .map(|(_, src)| fill("dependent", &[("fence", &fence), ("code", src.trim_end())]))
        .collect();

    let assemble = |traces: &[String], deps: &[String]| {
        let mut parts = vec![buggy.clone(), feedback.clone()];
        if !traces.is_empty() {
            parts.push(block(fill("tracebacks", &[]), traces));
        }
        if !deps.is_empty() {
            parts.push(block(fill("dependents", &[]), deps));
        }
        parts.push(requirement.clone());
        parts.join("\n\n")
    };

    let limit = budget.prompt_char_budget;
    let core = assemble(&[], &[]);
    if len(&core) > limit {
        return Err(PromptError::BudgetImpossible {
            needed: len(&core),
            budget: limit,
        });
    }
    let mut user = assemble(&traces, &deps);
    while len(&user) > limit {
        if deps.pop().is_none() {
            traces.pop();
        }
        user = assemble(&traces, &deps);
    }
    Ok(RepairPrompt {
        system: system_text(style),
        user,
    })
}

/// Asks for an alternative to the plausible patches collected so far.
pub fn build_augment_prompt(
    buggy: &str,
    plausible: &[String],
    style: &LanguageStyle,
) -> Result<RepairPrompt, PromptError> {
    if plausible.is_empty() {
        return Err(PromptError::NoPlausiblePatches);
    }
    let fence = style.fence();
    let patches: Vec<String> = plausible
        .iter()
        .enumerate()
        .map(|(i, p)| {
            fill(
                "augment_patch",
                &[
                    ("index", &(i + 1).to_string()),
                    ("fence", &fence),
                    ("code", p.trim_end()),
                ],
            )
        })
        .collect();
    let user = [
        fill(
            "augment",
            &[("lang", &style.label), ("fence", &fence), ("code", buggy.trim_end())],
        ),
        block(fill("augment_patches", &[]), &patches),
        fill("augment_requirement", &[]),
    ]
    .join("\n\n");
    Ok(RepairPrompt {
        system: system_text(style),
        user,
    })
}

fn trim_blank_lines(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    match (first, last) {
        (Some(a), Some(b)) => lines[a..=b].join("\n"),
        _ => String::new(),
    }
}

fn first_fence(response: &str) -> Option<String> {
    let mut lines = response.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let body: Vec<&str> = lines
        .take_while(|l| !l.trim_start().starts_with("```"))
        .collect();
    Some(body.join("\n"))
}

fn matching_brace(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, &c) in chars.iter().enumerate().skip(open) {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Largest region that starts on a line naming `name` and runs through the
/// balanced `{ ... }` block opened after it.
fn brace_region(response: &str, name: &str) -> Option<String> {
    if name.is_empty() {
        return None;
    }
    let chars: Vec<char> = response.chars().collect();
    let text: String = chars.iter().collect();
    let mut best: Option<(usize, usize)> = None;
    let mut search = 0;
    while let Some(off) = text[search..].find(name) {
        let byte_at = search + off;
        search = byte_at + name.len();
        let at = text[..byte_at].chars().count();
        let bounded = |c: Option<&char>| c.is_none_or(|c| !(c.is_alphanumeric() || *c == '_'));
        if !bounded(at.checked_sub(1).and_then(|i| chars.get(i)))
            || !bounded(chars.get(at + name.chars().count()))
        {
            continue;
        }
        let Some(open) = (at..chars.len()).find(|&i| chars[i] == '{') else {
            continue;
        };
        let Some(close) = matching_brace(&chars, open) else {
            continue;
        };
        let line_start = chars[..at]
            .iter()
            .rposition(|&c| c == '\n')
            .map_or(0, |i| i + 1);
        if best.is_none_or(|(s, e)| close - line_start > e - s) {
            best = Some((line_start, close));
        }
    }
    best.map(|(s, e)| chars[s..=e].iter().collect())
}

/// Pulls the patched function out of a model response: the first fenced
/// block if there is one, otherwise the largest brace-balanced region that
/// mentions `buggy_name`.
pub fn extract_patch(response: &str, buggy_name: &str) -> Result<String, PromptError> {
    let raw = first_fence(response).or_else(|| brace_region(response, buggy_name));
    match raw.map(|r| trim_blank_lines(&r)) {
        Some(patch) if !patch.trim().is_empty() => Ok(patch),
        _ => Err(PromptError::NoPatchFound),
    }
}
