use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use super::edit::{relative_edit_distance, EditDistanceResult};

/// A labeled step of an outline such as `S2: ...`, `O1.2: ...` or `3: ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledStep {
    /// Label as written, without the trailing colon.
    pub label: String,
    /// Dotted number the step is aligned by (`O1.2` and `S1.2` both give
    /// `1.2`).
    pub key: String,
    pub text: String,
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^[ \t]*(?:([A-Z])(\d+(?:\.\d+)*):?|(\d+(?:\.\d+)*):)(?:[ \t]+|$)").expect("valid regex")
    })
}

fn structure_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[ \t]*</?parallel>.*$").expect("valid regex"))
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits outline text into labeled steps. Text runs until the next label
/// line; `<parallel>` lines are dropped and whitespace is collapsed. Text
/// before the first label is ignored.
pub fn parse_labeled_steps(text: &str) -> Vec<LabeledStep> {
    let mut steps: Vec<LabeledStep> = Vec::new();
    let mut body: Vec<String> = Vec::new();
    let flush = |steps: &mut Vec<LabeledStep>, body: &mut Vec<String>| {
        if let Some(last) = steps.last_mut() {
            last.text = collapse(&body.join(" "));
        }
        body.clear();
    };
    for line in text.lines() {
        if structure_re().is_match(line) {
            continue;
        }
        if let Some(c) = label_re().captures(line) {
            flush(&mut steps, &mut body);
            let whole = c.get(0).expect("match");
            let (prefix, key) = match (c.get(1), c.get(2), c.get(3)) {
                (Some(p), Some(k), _) => (p.as_str(), k.as_str()),
                (_, _, Some(k)) => ("", k.as_str()),
                _ => unreachable!("one alternative matched"),
            };
            steps.push(LabeledStep {
                label: format!("{prefix}{key}"),
                key: key.to_string(),
                text: String::new(),
            });
            body.push(line[whole.end()..].to_string());
        } else if !steps.is_empty() {
            body.push(line.to_string());
        }
    }
    flush(&mut steps, &mut body);
    steps
}

/// Outline text with labels and `<parallel>` lines removed, whitespace
/// collapsed. Plain text without labels comes back collapsed.
pub fn strip_outline(text: &str) -> String {
    let kept: Vec<&str> = text
        .lines()
        .filter(|l| !structure_re().is_match(l))
        .map(|l| match label_re().find(l) {
            Some(m) => &l[m.end()..],
            None => l,
        })
        .collect();
    collapse(&kept.join(" "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerStep,
    WholeText,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepCheck {
    pub label: String,
    pub result: EditDistanceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContentReport {
    pub granularity: Granularity,
    pub threshold: f64,
    pub steps: Vec<StepCheck>,
    /// Labels of the steps that need regenerating.
    pub flagged: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("steps do not align: missing from refill {missing_in_refill:?}, not in original {unexpected_in_refill:?}")]
pub struct AlignmentError {
    pub missing_in_refill: Vec<String>,
    pub unexpected_in_refill: Vec<String>,
}

/// Compares steps pairwise by label. A step fails when its relative edit
/// distance exceeds `threshold`.
pub fn content_check(
    original: &[LabeledStep],
    refilled: &[LabeledStep],
    threshold: f64,
) -> Result<ContentReport, AlignmentError> {
    let by_key: HashMap<&str, &LabeledStep> = refilled.iter().map(|s| (s.key.as_str(), s)).collect();
    let orig_keys: HashMap<&str, ()> = original.iter().map(|s| (s.key.as_str(), ())).collect();
    let missing: Vec<String> = original
        .iter()
        .filter(|s| !by_key.contains_key(s.key.as_str()))
        .map(|s| s.label.clone())
        .collect();
    let unexpected: Vec<String> = refilled
        .iter()
        .filter(|s| !orig_keys.contains_key(s.key.as_str()))
        .map(|s| s.label.clone())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() || original.len() != refilled.len() {
        return Err(AlignmentError {
            missing_in_refill: missing,
            unexpected_in_refill: unexpected,
        });
    }
    let steps: Vec<StepCheck> = original
        .iter()
        .map(|o| StepCheck {
            label: o.label.clone(),
            result: relative_edit_distance(&o.text, &by_key[o.key.as_str()].text, threshold),
        })
        .collect();
    Ok(report(Granularity::PerStep, threshold, steps))
}

/// Compares the whole original against the refilled outline with its labels
/// and `<parallel>` lines stripped.
pub fn whole_text_check(original: &str, refilled: &str, threshold: f64) -> ContentReport {
    let result = relative_edit_distance(&strip_outline(original), &strip_outline(refilled), threshold);
    report(
        Granularity::WholeText,
        threshold,
        vec![StepCheck {
            label: "all".into(),
            result,
        }],
    )
}

fn report(granularity: Granularity, threshold: f64, steps: Vec<StepCheck>) -> ContentReport {
    let flagged: Vec<String> = steps.iter().filter(|s| !s.result.pass).map(|s| s.label.clone()).collect();
    ContentReport {
        granularity,
        threshold,
        pass: flagged.is_empty(),
        steps,
        flagged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_outline_labels() {
        let text = "intro\nO1: first step\n<parallel>[parallel reason: cases]\nO1.1: case a\n  more a\nO1.2 case b\n</parallel>\n3: last";
        let steps = parse_labeled_steps(text);
        let got: Vec<(&str, &str, &str)> =
            steps.iter().map(|s| (s.label.as_str(), s.key.as_str(), s.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                ("O1", "1", "first step"),
                ("O1.1", "1.1", "case a more a"),
                ("O1.2", "1.2", "case b"),
                ("3", "3", "last"),
            ]
        );
        assert_eq!(strip_outline(text), "intro first step case a more a case b last");
    }

    #[test]
    fn plain_numbers_need_a_colon() {
        assert!(parse_labeled_steps("2 apples and 3 pears").is_empty());
    }
}
