//! The hierarchical label space: 14 finding-level (secondary) labels, 7
//! body-part/status (primary) labels, the parent mapping between them, and
//! the consistency rules that keep predicted vectors coherent.
//!
//! Two rules do all the work here:
//!
//! * **Exclusion** — the "no visible abnormality" label is mutually exclusive
//!   with every disease label. Device findings (e.g. a PICC line) are not
//!   diseases and do not trip the exclusion.
//! * **Propagation** — a body-part primary label is positive exactly when one
//!   of its child findings is positive; the "normal" primary is positive
//!   exactly when no body-part primary is; the "device" primary follows the
//!   device findings.
//!
//! The schema itself (label names, ordering, parent edges) is data, loaded
//! from a small sectioned text file, so corrections never require a rebuild.
//! Label ordering in the file defines vector index order everywhere
//! downstream.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Number of secondary (finding-level) labels.
pub const SECONDARY_COUNT: usize = 14;
/// Number of primary (body-part/status) labels.
pub const PRIMARY_COUNT: usize = 7;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema invalid [{rule}]: {detail}")]
    Invalid { rule: &'static str, detail: String },
    #[error("schema i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(rule: &'static str, detail: impl Into<String>) -> SchemaError {
    SchemaError::Invalid {
        rule,
        detail: detail.into(),
    }
}

/// One boolean per secondary label, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecondaryLabelVector {
    values: [bool; SECONDARY_COUNT],
}

impl SecondaryLabelVector {
    pub fn new(values: [bool; SECONDARY_COUNT]) -> Self {
        Self { values }
    }

    pub fn all_negative() -> Self {
        Self {
            values: [false; SECONDARY_COUNT],
        }
    }

    /// Build from a slice; errors if the length is not exactly 14.
    pub fn from_slice(values: &[bool]) -> Result<Self, SchemaError> {
        let values: [bool; SECONDARY_COUNT] = values.try_into().map_err(|_| {
            invalid(
                "secondary-vector-length",
                format!("expected {} values, got {}", SECONDARY_COUNT, values.len()),
            )
        })?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[bool; SECONDARY_COUNT] {
        &self.values
    }

    pub fn get(&self, index: usize) -> bool {
        self.values[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.values[index] = value;
    }

    pub fn count_positive(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

/// One boolean per primary label, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimaryLabelVector {
    values: [bool; PRIMARY_COUNT],
}

impl PrimaryLabelVector {
    pub fn new(values: [bool; PRIMARY_COUNT]) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[bool; PRIMARY_COUNT] {
        &self.values
    }

    pub fn get(&self, index: usize) -> bool {
        self.values[index]
    }
}

/// The validated label hierarchy. Immutable after load; safe to share
/// read-only across workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    secondary_labels: Vec<String>,
    primary_labels: Vec<String>,
    /// Secondary index -> primary index. `None` only for the normal secondary.
    parent_of: Vec<Option<usize>>,
    normal_secondary: usize,
    normal_primary: usize,
    device_primary: usize,
    /// Secondary indices flagged as device findings, ascending.
    device_secondary: Vec<usize>,
}

impl LabelSchema {
    pub fn secondary_labels(&self) -> &[String] {
        &self.secondary_labels
    }

    pub fn primary_labels(&self) -> &[String] {
        &self.primary_labels
    }

    pub fn secondary_index(&self, name: &str) -> Option<usize> {
        self.secondary_labels.iter().position(|l| l == name)
    }

    pub fn primary_index(&self, name: &str) -> Option<usize> {
        self.primary_labels.iter().position(|l| l == name)
    }

    pub fn normal_secondary_index(&self) -> usize {
        self.normal_secondary
    }

    pub fn normal_primary_index(&self) -> usize {
        self.normal_primary
    }

    pub fn device_primary_index(&self) -> usize {
        self.device_primary
    }

    pub fn normal_secondary_name(&self) -> &str {
        &self.secondary_labels[self.normal_secondary]
    }

    /// Parent primary index of a secondary label; `None` for the normal label.
    pub fn parent_of(&self, secondary_index: usize) -> Option<usize> {
        self.parent_of[secondary_index]
    }

    pub fn is_device_secondary(&self, secondary_index: usize) -> bool {
        self.device_secondary
            .binary_search(&secondary_index)
            .is_ok()
    }

    /// A disease label: any secondary that is neither the normal label nor a
    /// device finding.
    pub fn is_disease_secondary(&self, secondary_index: usize) -> bool {
        secondary_index != self.normal_secondary && !self.is_device_secondary(secondary_index)
    }

    /// A body-part primary: neither the normal nor the device primary.
    pub fn is_body_part_primary(&self, primary_index: usize) -> bool {
        primary_index != self.normal_primary && primary_index != self.device_primary
    }

    /// Propagate secondary findings up the hierarchy.
    ///
    /// A body-part or device primary is positive iff one of its children is;
    /// the normal primary is positive iff no body-part primary is. A device
    /// finding alone therefore leaves the normal primary positive.
    pub fn propagate(&self, secondary: &SecondaryLabelVector) -> PrimaryLabelVector {
        let mut primary = [false; PRIMARY_COUNT];
        for (s, parent) in self.parent_of.iter().enumerate() {
            if secondary.get(s) {
                if let Some(p) = *parent {
                    primary[p] = true;
                }
            }
        }
        let any_body_part = primary
            .iter()
            .enumerate()
            .any(|(p, positive)| *positive && self.is_body_part_primary(p));
        primary[self.normal_primary] = !any_body_part;
        PrimaryLabelVector::new(primary)
    }

    /// Force the normal label consistent with the disease labels: negative
    /// whenever any disease is positive, positive whenever none is. Device
    /// findings do not count as diseases. Idempotent.
    pub fn enforce_exclusion(&self, secondary: &SecondaryLabelVector) -> SecondaryLabelVector {
        let any_disease =
            (0..SECONDARY_COUNT).any(|i| secondary.get(i) && self.is_disease_secondary(i));
        let mut out = *secondary;
        out.set(self.normal_secondary, !any_disease);
        out
    }

    /// The default shipped schema.
    pub fn default_schema() -> LabelSchema {
        DEFAULT_SCHEMA_TEXT
            .parse()
            .expect("shipped default schema must be valid")
    }

    /// Serialize to the canonical file format. Parsing the output yields an
    /// equal schema, byte-identically (the format has exactly one canonical
    /// rendering).
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str("[secondary]\n");
        for name in &self.secondary_labels {
            out.push_str(name);
            out.push('\n');
        }
        out.push_str("[primary]\n");
        for name in &self.primary_labels {
            out.push_str(name);
            out.push('\n');
        }
        out.push_str("[parent]\n");
        for (s, parent) in self.parent_of.iter().enumerate() {
            if let Some(p) = *parent {
                out.push_str(&self.secondary_labels[s]);
                out.push('\t');
                out.push_str(&self.primary_labels[p]);
                out.push('\n');
            }
        }
        out.push_str("[special]\n");
        out.push_str(&format!(
            "normal_secondary\t{}\n",
            self.secondary_labels[self.normal_secondary]
        ));
        out.push_str(&format!(
            "normal_primary\t{}\n",
            self.primary_labels[self.normal_primary]
        ));
        out.push_str(&format!(
            "device_primary\t{}\n",
            self.primary_labels[self.device_primary]
        ));
        for s in &self.device_secondary {
            out.push_str(&format!(
                "device_secondary\t{}\n",
                self.secondary_labels[*s]
            ));
        }
        out
    }
}

/// Shipped default schema file, embedded verbatim.
pub const DEFAULT_SCHEMA_TEXT: &str = include_str!("../data/schema.txt");

/// Load and validate a schema file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<LabelSchema, SchemaError> {
    let text = std::fs::read_to_string(path)?;
    text.parse()
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum Section {
    None,
    Secondary,
    Primary,
    Parent,
    Special,
}

impl std::str::FromStr for LabelSchema {
    type Err = SchemaError;

    fn from_str(text: &str) -> Result<Self, SchemaError> {
        let mut secondary: Vec<String> = Vec::new();
        let mut primary: Vec<String> = Vec::new();
        let mut parent_pairs: Vec<(String, String)> = Vec::new();
        let mut specials: Vec<(String, String)> = Vec::new();

        let mut section = Section::None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            match line {
                "[secondary]" => section = Section::Secondary,
                "[primary]" => section = Section::Primary,
                "[parent]" => section = Section::Parent,
                "[special]" => section = Section::Special,
                _ => match section {
                    Section::None => {
                        return Err(SchemaError::Parse {
                            line: lineno,
                            msg: format!("content before any section header: {line:?}"),
                        })
                    }
                    Section::Secondary => secondary.push(line.to_string()),
                    Section::Primary => primary.push(line.to_string()),
                    Section::Parent | Section::Special => {
                        let (k, v) = line.split_once('\t').ok_or(SchemaError::Parse {
                            line: lineno,
                            msg: format!("expected TAB-separated pair, got {line:?}"),
                        })?;
                        if section == Section::Parent {
                            parent_pairs.push((k.to_string(), v.to_string()));
                        } else {
                            specials.push((k.to_string(), v.to_string()));
                        }
                    }
                },
            }
        }

        build_schema(secondary, primary, parent_pairs, specials)
    }
}

fn build_schema(
    secondary: Vec<String>,
    primary: Vec<String>,
    parent_pairs: Vec<(String, String)>,
    specials: Vec<(String, String)>,
) -> Result<LabelSchema, SchemaError> {
    if secondary.len() != SECONDARY_COUNT {
        return Err(invalid(
            "secondary-count",
            format!(
                "expected {SECONDARY_COUNT} secondary labels, got {}",
                secondary.len()
            ),
        ));
    }
    if primary.len() != PRIMARY_COUNT {
        return Err(invalid(
            "primary-count",
            format!(
                "expected {PRIMARY_COUNT} primary labels, got {}",
                primary.len()
            ),
        ));
    }

    let mut sec_index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in secondary.iter().enumerate() {
        if sec_index.insert(name, i).is_some() {
            return Err(invalid(
                "duplicate-label",
                format!("secondary label {name:?}"),
            ));
        }
    }
    let mut pri_index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in primary.iter().enumerate() {
        if pri_index.insert(name, i).is_some() {
            return Err(invalid(
                "duplicate-label",
                format!("primary label {name:?}"),
            ));
        }
    }

    let special_one = |key: &'static str| -> Result<String, SchemaError> {
        let mut hits = specials.iter().filter(|(k, _)| k == key);
        let first = hits
            .next()
            .ok_or_else(|| invalid("special-missing", format!("no {key:?} entry")))?;
        Ok(first.1.clone())
    };
    let normal_secondary_name = special_one("normal_secondary")?;
    let normal_primary_name = special_one("normal_primary")?;
    let device_primary_name = special_one("device_primary")?;

    let normal_secondary = *sec_index
        .get(normal_secondary_name.as_str())
        .ok_or_else(|| {
            invalid(
                "special-unknown",
                format!("normal_secondary {normal_secondary_name:?} not a secondary label"),
            )
        })?;
    let normal_primary = *pri_index.get(normal_primary_name.as_str()).ok_or_else(|| {
        invalid(
            "special-unknown",
            format!("normal_primary {normal_primary_name:?} not a primary label"),
        )
    })?;
    let device_primary = *pri_index.get(device_primary_name.as_str()).ok_or_else(|| {
        invalid(
            "special-unknown",
            format!("device_primary {device_primary_name:?} not a primary label"),
        )
    })?;
    if normal_primary == device_primary {
        return Err(invalid(
            "body-part-count",
            "normal_primary equals device_primary",
        ));
    }

    let mut device_secondary: Vec<usize> = Vec::new();
    for (k, v) in &specials {
        if k == "device_secondary" {
            let idx = *sec_index.get(v.as_str()).ok_or_else(|| {
                invalid(
                    "device-secondary-unknown",
                    format!("{v:?} not a secondary label"),
                )
            })?;
            if device_secondary.contains(&idx) {
                return Err(invalid(
                    "duplicate-label",
                    format!("device_secondary {v:?} listed twice"),
                ));
            }
            device_secondary.push(idx);
        }
    }
    device_secondary.sort_unstable();
    if device_secondary.is_empty() {
        return Err(invalid("special-missing", "no device_secondary entries"));
    }
    if device_secondary.contains(&normal_secondary) {
        return Err(invalid(
            "device-secondary-unknown",
            "normal secondary flagged as device",
        ));
    }

    let mut parent_of: Vec<Option<usize>> = vec![None; SECONDARY_COUNT];
    for (child, parent) in &parent_pairs {
        let s = *sec_index.get(child.as_str()).ok_or_else(|| {
            invalid(
                "parent-child-unknown",
                format!("{child:?} not a secondary label"),
            )
        })?;
        let p = *pri_index.get(parent.as_str()).ok_or_else(|| {
            invalid(
                "parent-target-not-primary",
                format!("{parent:?} not a primary label"),
            )
        })?;
        if s == normal_secondary {
            return Err(invalid(
                "normal-secondary-has-parent",
                format!("{child:?} must not have a parent"),
            ));
        }
        if p == normal_primary {
            return Err(invalid(
                "parent-maps-to-normal-primary",
                format!("{child:?} -> {parent:?}"),
            ));
        }
        if parent_of[s].is_some() {
            return Err(invalid(
                "duplicate-parent",
                format!("{child:?} has two parent entries"),
            ));
        }
        parent_of[s] = Some(p);
    }
    for (s, parent) in parent_of.iter().enumerate() {
        if s != normal_secondary && parent.is_none() {
            return Err(invalid(
                "missing-parent",
                format!("secondary label {:?} has no parent", secondary[s]),
            ));
        }
    }
    // Device findings must sit under the device primary, and vice versa.
    for s in 0..SECONDARY_COUNT {
        let under_device = parent_of[s] == Some(device_primary);
        let flagged = device_secondary.contains(&s);
        if under_device != flagged {
            return Err(invalid(
                "device-parent-mismatch",
                format!(
                    "secondary label {:?}: device flag and parent disagree",
                    secondary[s]
                ),
            ));
        }
    }

    Ok(LabelSchema {
        secondary_labels: secondary,
        primary_labels: primary,
        parent_of,
        normal_secondary,
        normal_primary,
        device_primary,
        device_secondary,
    })
}

impl fmt::Display for LabelSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LabelSchema({} secondary / {} primary, normal={:?})",
            self.secondary_labels.len(),
            self.primary_labels.len(),
            self.secondary_labels[self.normal_secondary]
        )
    }
}
