//! Lexicon-driven baseline labeler: trigger phrases with clause-local
//! negation, then the usual taxonomy fix-ups.

use std::fs;
use std::path::Path;

use super::{report_text, LabelerError};
use crate::normalizer::CleanReport;
use crate::taxonomy::{LabelSchema, SecondaryLabelVector};

/// How far back (in characters) a negation cue can reach, never crossing
/// a clause boundary.
const NEGATION_WINDOW: usize = 8;

const CLAUSE_BOUNDARIES: [char; 7] = ['。', '；', '，', '、', '？', '！', '：'];

const DEFAULT_LEXICON_TEXT: &str = include_str!("../../data/lexicon.tsv");

#[derive(Debug, Clone)]
struct Entry {
    label: usize,
    trigger: Vec<char>,
    cues: Vec<String>,
}

/// Trigger table bound to a schema: every row names a known label.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<Entry>,
}

impl Lexicon {
    /// Parse TAB-separated rows: label, trigger, optional '|'-separated
    /// negation cues. '#' lines and blank lines are skipped.
    pub fn parse(text: &str, schema: &LabelSchema) -> Result<Self, LabelerError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_display = lineno + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t');
            let label_name = fields.next().unwrap_or("").trim();
            let trigger = fields.next().map(str::trim).unwrap_or("");
            let cues_field = fields.next().map(str::trim).unwrap_or("");
            if fields.next().is_some() {
                return Err(LabelerError::LexiconParse {
                    line: line_display,
                    msg: "more than three columns".to_string(),
                });
            }
            if trigger.is_empty() {
                return Err(LabelerError::LexiconParse {
                    line: line_display,
                    msg: "empty trigger".to_string(),
                });
            }
            let label =
                schema
                    .secondary_index(label_name)
                    .ok_or_else(|| LabelerError::UnknownLabel {
                        name: label_name.to_string(),
                    })?;
            let cues: Vec<String> = cues_field
                .split('|')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(str::to_string)
                .collect();
            entries.push(Entry {
                label,
                trigger: trigger.chars().collect(),
                cues,
            });
        }
        if entries.is_empty() {
            return Err(LabelerError::LexiconParse {
                line: 0,
                msg: "no entries".to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>, schema: &LabelSchema) -> Result<Self, LabelerError> {
        Self::parse(&fs::read_to_string(path)?, schema)
    }

    /// The lexicon shipped with the crate, matching the default schema.
    pub fn default_lexicon(schema: &LabelSchema) -> Result<Self, LabelerError> {
        Self::parse(DEFAULT_LEXICON_TEXT, schema)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Label free text: a label is positive when any of its triggers has
    /// an un-negated occurrence, then exclusion is enforced.
    pub fn label_text(&self, text: &str, schema: &LabelSchema) -> SecondaryLabelVector {
        let chars: Vec<char> = text.chars().collect();
        let mut labels = SecondaryLabelVector::all_negative();
        for entry in &self.entries {
            if labels.get(entry.label) {
                continue;
            }
            if has_unnegated_occurrence(&chars, &entry.trigger, &entry.cues) {
                labels.set(entry.label, true);
            }
        }
        schema.enforce_exclusion(&labels)
    }
}

fn has_unnegated_occurrence(chars: &[char], trigger: &[char], cues: &[String]) -> bool {
    if trigger.is_empty() || chars.len() < trigger.len() {
        return false;
    }
    'starts: for start in 0..=chars.len() - trigger.len() {
        for (a, b) in chars[start..].iter().zip(trigger) {
            if a != b {
                continue 'starts;
            }
        }
        if !is_negated(chars, start, cues) {
            return true;
        }
    }
    false
}

/// The window is the up-to-`NEGATION_WINDOW` characters immediately before
/// the trigger, cut short at the nearest clause boundary.
fn is_negated(chars: &[char], trigger_start: usize, cues: &[String]) -> bool {
    if cues.is_empty() {
        return false;
    }
    let mut window_start = trigger_start.saturating_sub(NEGATION_WINDOW);
    for i in (window_start..trigger_start).rev() {
        if CLAUSE_BOUNDARIES.contains(&chars[i]) {
            window_start = i + 1;
            break;
        }
    }
    let window: String = chars[window_start..trigger_start].iter().collect();
    cues.iter().any(|cue| window.contains(cue.as_str()))
}

/// Apply the lexicon to a cleaned report (findings plus impression).
pub fn rule_label(
    report: &CleanReport,
    schema: &LabelSchema,
    lexicon: &Lexicon,
) -> SecondaryLabelVector {
    lexicon.label_text(&report_text(report), schema)
}
