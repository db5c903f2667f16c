//! Report text cleaning.
//!
//! Raw reports carry template noise that is useless or harmful for training:
//! comparisons against prior studies, follow-up advice, registration-form
//! boilerplate in the clinical description. Seven removal patterns delete
//! those spans. Rules run in fixed order and loop to fixpoint, because a
//! removal can butt two fragments together and create a new match.
//!
//! Cleaning also normalizes ASCII punctuation to its full-width Chinese
//! counterpart (digits and letters survive: accession numbers, "PICC", "CT")
//! and parses the structured age field.
//!
//! Order inside [`clean_report`] matters: patterns that need ASCII colons
//! and parentheses (the boilerplate rule) must run before punctuation
//! normalization, and normalization can create fresh Chinese-punctuation
//! matches, so removal runs once more afterwards. Removal only deletes, so
//! the second pass cannot de-normalize anything and the whole pipeline is
//! idempotent.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seven removal patterns, in application order.
///
/// Lazy quantifiers are significant: `.*?` stops at the first clause
/// delimiter, so a rule deletes one clause, not everything to the last
/// delimiter in the line. Patterns operate on characters, not bytes.
pub const REMOVAL_PATTERNS: [&str; 7] = [
    r"(，|。)*(余大致同前|大致同前|似大致同前|余所见大致同前|所见大致同前|范围大致同前)",
    r"(对比|与|结合)(上片|前片)?\d{3,4}(-|.)\d{1,2}(-|.)\d{1,2}(日|\s)?(\d{1,2}(：|:)\d{1,2})?(片对比|片|胸片|床旁片|床旁平片|床旁胸片|CT)?(：|:|。|，|；|;)?",
    r"(，|。)?(余|建议|请|清|位置)?结合.*?(。|，)",
    r"(，|。|、)?随诊.*?(。|，|、)",
    r"，请?注意心功能",
    r"(，|、)?(范围|左肺|右肺|左侧|右侧|右肺野|左肺野)?较前(明显|稍|略|有所)?(好转|吸收|减轻|进展|增大|减少|减小|缩小|增多|改善|复张|增多|加重|增加|好转|清晰)",
    r"放射科号:/身高\(cm\):/体重\(kg\):/是否肝肾功能不全:/是否碘剂过敏:/*",
];

/// Index of the clinical-description boilerplate rule in [`REMOVAL_PATTERNS`].
pub const BOILERPLATE_RULE: usize = 6;

/// ASCII punctuation and its full-width replacement.
pub const PUNCTUATION_MAP: [(char, char); 8] = [
    (',', '，'),
    ('.', '。'),
    (';', '；'),
    (':', '：'),
    ('?', '？'),
    ('!', '！'),
    ('(', '（'),
    (')', '）'),
];

/// Oldest accepted age in years.
pub const MAX_AGE_YEARS: u32 = 150;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("malformed age {raw:?}: first three characters must be ASCII digits")]
    MalformedAge { raw: String },
    #[error("age {value} out of range [0, {MAX_AGE_YEARS}]")]
    AgeOutOfRange { value: u32 },
    #[error("report {acc:?}: findings and impression both empty after cleaning")]
    EmptyReport { acc: String },
    #[error("report table is missing required column {name:?}")]
    MissingColumn { name: String },
    #[error("report table row {line}: {msg}")]
    BadRow { line: u64, msg: String },
    #[error("report table error: {0}")]
    Csv(#[from] csv::Error),
    #[error("report table i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl NormalizeError {
    /// Short machine-readable code for rejects files; `None` for errors that
    /// abort the whole table rather than rejecting one record.
    pub fn reject_code(&self) -> Option<&'static str> {
        match self {
            NormalizeError::MalformedAge { .. } => Some("malformed-age"),
            NormalizeError::AgeOutOfRange { .. } => Some("out-of-range-age"),
            NormalizeError::EmptyReport { .. } => Some("empty-report"),
            NormalizeError::BadRow { .. } => Some("bad-row"),
            _ => None,
        }
    }
}

fn removal_rules() -> &'static [Regex; 7] {
    static RULES: OnceLock<[Regex; 7]> = OnceLock::new();
    RULES.get_or_init(|| {
        REMOVAL_PATTERNS.map(|p| Regex::new(p).expect("removal patterns are valid"))
    })
}

/// Delete every span matching one of the removal patterns, in rule order,
/// repeating until nothing changes.
pub fn apply_removal_rules(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let mut changed = false;
        for rule in removal_rules() {
            let next = rule.replace_all(&current, "");
            if next != current {
                current = next.into_owned();
                changed = true;
            }
        }
        if !changed {
            return current;
        }
    }
}

/// Delete spans matching one specific rule (by index into
/// [`REMOVAL_PATTERNS`]), repeating until nothing changes.
pub fn apply_removal_rule(text: &str, rule_index: usize) -> String {
    let rule = &removal_rules()[rule_index];
    let mut current = text.to_string();
    loop {
        let next = rule.replace_all(&current, "");
        if next == current {
            return current;
        }
        current = next.into_owned();
    }
}

/// Remove the registration-form boilerplate from a clinical description.
pub fn strip_clinical_boilerplate(text: &str) -> String {
    apply_removal_rule(text, BOILERPLATE_RULE)
}

/// Replace ASCII punctuation with full-width Chinese punctuation. All other
/// characters pass through. Idempotent.
pub fn normalize_punctuation(text: &str) -> String {
    text.chars()
        .map(|c| {
            PUNCTUATION_MAP
                .iter()
                .find(|(from, _)| *from == c)
                .map_or(c, |(_, to)| *to)
        })
        .collect()
}

/// Parse the structured age field: the first three characters are the age in
/// years ("082Y00M20D" is 82).
pub fn parse_age(age_raw: &str) -> Result<u32, NormalizeError> {
    let prefix: Vec<char> = age_raw.chars().take(3).collect();
    if prefix.len() != 3 || !prefix.iter().all(|c| c.is_ascii_digit()) {
        return Err(NormalizeError::MalformedAge {
            raw: age_raw.to_string(),
        });
    }
    let value: u32 = prefix
        .into_iter()
        .collect::<String>()
        .parse()
        .expect("three ASCII digits parse");
    if value > MAX_AGE_YEARS {
        return Err(NormalizeError::AgeOutOfRange { value });
    }
    Ok(value)
}

/// Join a multi-line impression into one line: each line is a diagnosis
/// phrase, connected and terminated with "。". Empty phrases are dropped.
/// Idempotent.
pub fn join_impression(impression: &str) -> String {
    let phrases: Vec<&str> = impression
        .split('\n')
        .map(|line| line.trim().trim_end_matches('。'))
        .filter(|p| !p.is_empty())
        .collect();
    if phrases.is_empty() {
        String::new()
    } else {
        let mut out = phrases.join("。");
        out.push('。');
        out
    }
}

/// A report exactly as it arrives from the reporting system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReport {
    /// Unique examination identifier.
    pub acc: String,
    /// 征象描述: the radiologist's observations.
    pub findings: String,
    /// 诊断结论: the diagnosis, one phrase per line.
    pub impression: String,
    /// 临床诊断.
    pub clinical_dx: String,
    /// 病人性别.
    pub sex: String,
    /// 年龄, structured, e.g. "082Y00M20D".
    pub age_raw: String,
    /// 临床描述.
    pub clinical_desc: String,
}

/// A cleaned report. Text fields contain no ASCII punctuation from the
/// replacement set and no removal-pattern match; the impression is a single
/// line of "。"-joined phrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub acc: String,
    pub findings: String,
    pub impression: String,
    pub clinical_dx: String,
    pub sex: String,
    pub age_raw: String,
    pub clinical_desc: String,
    /// Age in whole years, in [0, 150].
    pub age_years: u32,
}

impl CleanReport {
    /// The impression split back into its phrases.
    pub fn impression_phrases(&self) -> Vec<&str> {
        self.impression
            .split('。')
            .filter(|p| !p.is_empty())
            .collect()
    }
}

fn clean_text(text: &str) -> String {
    let removed = apply_removal_rules(text);
    let normalized = normalize_punctuation(&removed);
    apply_removal_rules(&normalized)
}

/// Clean one report end to end.
///
/// Findings and impression get the full rule set (the impression after
/// joining its lines); the clinical description gets only the boilerplate
/// rule; every text field gets punctuation normalization.
pub fn clean_report(raw: &RawReport) -> Result<CleanReport, NormalizeError> {
    let age_years = parse_age(&raw.age_raw)?;
    let findings = clean_text(&raw.findings);
    let impression = clean_text(&join_impression(&raw.impression));
    if findings.is_empty() && impression.is_empty() {
        return Err(NormalizeError::EmptyReport {
            acc: raw.acc.clone(),
        });
    }
    Ok(CleanReport {
        acc: raw.acc.clone(),
        findings,
        impression,
        clinical_dx: normalize_punctuation(&raw.clinical_dx),
        sex: normalize_punctuation(&raw.sex),
        age_raw: raw.age_raw.clone(),
        clinical_desc: normalize_punctuation(&strip_clinical_boilerplate(&raw.clinical_desc)),
        age_years,
    })
}

/// Header names for report tables, in canonical order.
pub const REPORT_COLUMNS: [&str; 7] = [
    "ACC",
    "征象描述",
    "诊断结论",
    "临床诊断",
    "病人性别",
    "年龄",
    "临床描述",
];

/// Read a delimited report table. Column order is taken from the header row;
/// all seven canonical columns must be present. Fields containing the
/// delimiter, quotes, or line breaks must be double-quoted. Lines starting
/// with '#' are headers and are skipped.
pub fn read_report_table(
    path: impl AsRef<Path>,
    delimiter: u8,
) -> Result<Vec<RawReport>, NormalizeError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| -> Result<usize, NormalizeError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| NormalizeError::MissingColumn {
                name: name.to_string(),
            })
    };
    let cols: Vec<usize> = REPORT_COLUMNS
        .iter()
        .map(|name| index_of(name))
        .collect::<Result<_, _>>()?;

    let mut reports = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> String { record.get(cols[i]).unwrap_or("").to_string() };
        let acc = field(0);
        if acc.is_empty() {
            return Err(NormalizeError::BadRow {
                line,
                msg: "empty ACC identifier".to_string(),
            });
        }
        reports.push(RawReport {
            acc,
            findings: field(1),
            impression: field(2),
            clinical_dx: field(3),
            sex: field(4),
            age_raw: field(5),
            clinical_desc: field(6),
        });
    }
    Ok(reports)
}

/// Write cleaned reports as a delimited table: the canonical columns plus a
/// trailing `age_years`.
pub fn write_clean_table(
    path: impl AsRef<Path>,
    reports: &[CleanReport],
    delimiter: u8,
) -> Result<(), NormalizeError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)?;
    let mut header: Vec<&str> = REPORT_COLUMNS.to_vec();
    header.push("age_years");
    writer.write_record(&header)?;
    for r in reports {
        writer.write_record([
            r.acc.as_str(),
            r.findings.as_str(),
            r.impression.as_str(),
            r.clinical_dx.as_str(),
            r.sex.as_str(),
            r.age_raw.as_str(),
            r.clinical_desc.as_str(),
            &r.age_years.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// One rejected record with its reason code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedReport {
    pub acc: String,
    pub reason: String,
    pub detail: String,
}

/// Write a rejects table (ACC, reason code, human-readable detail).
pub fn write_rejects_table(
    path: impl AsRef<Path>,
    rejects: &[RejectedReport],
    delimiter: u8,
) -> Result<(), NormalizeError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)?;
    writer.write_record(["ACC", "reason", "detail"])?;
    for r in rejects {
        writer.write_record([r.acc.as_str(), r.reason.as_str(), r.detail.as_str()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Clean a batch, splitting results into cleaned reports and rejects.
pub fn clean_batch(raws: &[RawReport]) -> (Vec<CleanReport>, Vec<RejectedReport>) {
    let mut cleaned = Vec::new();
    let mut rejects = Vec::new();
    for raw in raws {
        match clean_report(raw) {
            Ok(c) => cleaned.push(c),
            Err(e) => rejects.push(RejectedReport {
                acc: raw.acc.clone(),
                reason: e.reject_code().unwrap_or("error").to_string(),
                detail: e.to_string(),
            }),
        }
    }
    (cleaned, rejects)
}
