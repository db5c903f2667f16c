//! Dataset assembly: exclusion filtering, seeded 8:1:1 splitting, manifest
//! serialization, and corpus statistics.
//!
//! The shuffle behind the split is a hand-written Fisher-Yates over a
//! ChaCha8 stream. That freezes the permutation for a given seed across
//! dependency upgrades, so a checked-in manifest can always be regenerated
//! bit-identically.
//!
//! Split sizes follow a fixed rule: train gets floor(r_train * N), val gets
//! floor(r_val * N), test gets the remainder. Published size tables round
//! inconsistently at the +-1 level, so one rule is pinned here.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalizer::CleanReport;
use crate::taxonomy::{LabelSchema, SecondaryLabelVector, SECONDARY_COUNT};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("too few samples to split: {n} (need at least 3)")]
    TooFewSamples { n: usize },
    #[error("bad split ratios: {detail}")]
    BadRatios { detail: String },
    #[error("sample {id:?} has no split assigned")]
    UnassignedSplit { id: String },
    #[error("duplicate sample id {id:?}")]
    DuplicateId { id: String },
    #[error("manifest line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Which partition a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dataset sample: a cleaned report, its labels, and its image paths.
/// Exactly one PA image; the LA image is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub pa_image_path: String,
    pub la_image_path: Option<String>,
    pub report: CleanReport,
    pub labels: SecondaryLabelVector,
    pub split: Split,
    /// Optional acquisition metadata (e.g. a bedside flag) keyed by name.
    pub metadata: BTreeMap<String, String>,
}

impl SampleRecord {
    /// The examination identifier doubles as the sample id.
    pub fn sample_id(&self) -> &str {
        &self.report.acc
    }
}

/// Split ratios plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self, DatasetError> {
        let spec = Self {
            train,
            val,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        for (name, r) in [
            ("train", self.train),
            ("val", self.val),
            ("test", self.test),
        ] {
            if !r.is_finite() || r <= 0.0 {
                return Err(DatasetError::BadRatios {
                    detail: format!("{name} ratio {r} is not positive"),
                });
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadRatios {
                detail: format!("ratios sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }

    /// (train, val, test) sizes for N samples: floor, floor, remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = (self.train * n as f64).floor() as usize;
        let val = (self.val * n as f64).floor() as usize;
        (train, val, n - train - val)
    }
}

/// Uniform index in [0, bound) by rejection sampling over the raw stream.
/// Kept explicit so the permutation never shifts under an RNG crate upgrade.
pub(crate) fn uniform_index(rng: &mut impl RngCore, bound: usize) -> usize {
    debug_assert!(bound > 0);
    let bound = bound as u64;
    let limit = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < limit {
            return (x % bound) as usize;
        }
    }
}

/// Shuffle and assign splits: a seeded Fisher-Yates permutation, then the
/// first floor(r_train N) records become train, the next floor(r_val N)
/// val, and the rest test. Deterministic per seed; returns records in
/// shuffled order.
pub fn split(
    mut records: Vec<SampleRecord>,
    spec: &SplitSpec,
) -> Result<Vec<SampleRecord>, DatasetError> {
    spec.validate()?;
    let n = records.len();
    if n < 3 {
        return Err(DatasetError::TooFewSamples { n });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..n).rev() {
        let j = uniform_index(&mut rng, i + 1);
        records.swap(i, j);
    }
    let (n_train, n_val, _) = spec.sizes(n);
    for (i, record) in records.iter_mut().enumerate() {
        record.split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(records)
}

/// Configuration for the exclusion predicates, all overridable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExclusionConfig {
    /// Minimum age kept; younger records are rejected ("under-18"). The
    /// boundary itself is kept.
    pub min_age_years: u32,
    /// Reports whose findings plus impression fall below this many
    /// characters are rejected ("overly-brief").
    pub min_report_chars: usize,
    /// Reports mentioning any of these anywhere are occupational
    /// pneumoconiosis screenings ("pneumoconiosis").
    pub pneumoconiosis_keywords: Vec<String>,
    /// Reports mentioning any of these are rib-series studies ("rib-series").
    pub rib_keywords: Vec<String>,
    /// Metadata key holding the bedside-film flag ("bedside"). Records
    /// without the key pass through with a warning.
    pub bedside_metadata_key: String,
}

impl Default for ExclusionConfig {
    fn default() -> Self {
        Self {
            min_age_years: 18,
            min_report_chars: 6,
            pneumoconiosis_keywords: vec!["尘肺".to_string()],
            rib_keywords: vec!["肋骨".to_string()],
            bedside_metadata_key: "bedside".to_string(),
        }
    }
}

/// A record dropped by an exclusion predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedRecord {
    pub sample_id: String,
    /// The name of the predicate that fired.
    pub reason: String,
}

fn truthy(value: &str) -> bool {
    matches!(value.trim(), "1" | "true" | "yes" | "是")
}

fn text_mentions(report: &CleanReport, keywords: &[String]) -> bool {
    keywords.iter().any(|k| {
        !k.is_empty()
            && (report.findings.contains(k)
                || report.impression.contains(k)
                || report.clinical_dx.contains(k)
                || report.clinical_desc.contains(k))
    })
}

/// Apply the study-selection predicates in a fixed order; the first one that
/// fires names the rejection. Returns kept records, rejections, and
/// warnings about predicates that could not run for lack of metadata.
pub fn apply_exclusions(
    records: Vec<SampleRecord>,
    config: &ExclusionConfig,
) -> (Vec<SampleRecord>, Vec<ExcludedRecord>, Vec<String>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut missing_bedside_flag = 0usize;
    for record in records {
        let reason = exclusion_reason(&record, config, &mut missing_bedside_flag);
        match reason {
            Some(reason) => excluded.push(ExcludedRecord {
                sample_id: record.sample_id().to_string(),
                reason: reason.to_string(),
            }),
            None => kept.push(record),
        }
    }
    let mut warnings = Vec::new();
    if missing_bedside_flag > 0 {
        warnings.push(format!(
            "bedside predicate skipped for {missing_bedside_flag} record(s) without metadata key {:?}",
            config.bedside_metadata_key
        ));
    }
    (kept, excluded, warnings)
}

fn exclusion_reason(
    record: &SampleRecord,
    config: &ExclusionConfig,
    missing_bedside_flag: &mut usize,
) -> Option<&'static str> {
    if record.report.age_years < config.min_age_years {
        return Some("under-18");
    }
    if text_mentions(&record.report, &config.pneumoconiosis_keywords) {
        return Some("pneumoconiosis");
    }
    match record.metadata.get(&config.bedside_metadata_key) {
        Some(flag) if truthy(flag) => return Some("bedside"),
        Some(_) => {}
        None => *missing_bedside_flag += 1,
    }
    let report_chars =
        record.report.findings.chars().count() + record.report.impression.chars().count();
    if report_chars < config.min_report_chars {
        return Some("overly-brief");
    }
    if text_mentions(&record.report, &config.rib_keywords) {
        return Some("rib-series");
    }
    None
}

/// Image counts for one split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCounts {
    pub images: u64,
    pub pa: u64,
    pub la: u64,
}

impl ImageCounts {
    fn add(&mut self, record: &SampleRecord) {
        self.pa += 1;
        if record.la_image_path.is_some() {
            self.la += 1;
        }
        self.images = self.pa + self.la;
    }

    fn merged(mut self, other: &ImageCounts) -> ImageCounts {
        self.pa += other.pa;
        self.la += other.la;
        self.images += other.images;
        self
    }
}

/// Positive count and ratio for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStat {
    pub label: String,
    pub positives: u64,
    /// positives / sample count, as a percentage.
    pub ratio_percent: f64,
}

/// Corpus statistics: image counts per split and per-label positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sample_count: u64,
    pub train: ImageCounts,
    pub val: ImageCounts,
    pub test: ImageCounts,
    pub unassigned: ImageCounts,
    pub total: ImageCounts,
    pub labels: Vec<LabelStat>,
}

/// positives / total as a percentage (0 when the corpus is empty).
pub fn positive_ratio_percent(positives: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * positives as f64 / total as f64
    }
}

/// Tally image counts per split and per-label positive counts/ratios.
/// Multi-label samples count once per positive label, so ratios can sum
/// past 100%.
pub fn compute_stats(records: &[SampleRecord], schema: &LabelSchema) -> DatasetStats {
    let mut train = ImageCounts::default();
    let mut val = ImageCounts::default();
    let mut test = ImageCounts::default();
    let mut unassigned = ImageCounts::default();
    let mut positives = [0u64; SECONDARY_COUNT];
    for record in records {
        match record.split {
            Split::Train => train.add(record),
            Split::Val => val.add(record),
            Split::Test => test.add(record),
            Split::Unassigned => unassigned.add(record),
        }
        for (i, count) in positives.iter_mut().enumerate() {
            if record.labels.get(i) {
                *count += 1;
            }
        }
    }
    let total = train.merged(&val).merged(&test).merged(&unassigned);
    let n = records.len() as u64;
    let labels = schema
        .secondary_labels()
        .iter()
        .zip(positives)
        .map(|(label, count)| LabelStat {
            label: label.clone(),
            positives: count,
            ratio_percent: positive_ratio_percent(count, n),
        })
        .collect();
    DatasetStats {
        sample_count: n,
        train,
        val,
        test,
        unassigned,
        total,
        labels,
    }
}

impl DatasetStats {
    /// Render both statistics tables as delimited text: image distribution
    /// across splits, then per-label positives.
    pub fn to_tables(&self, delimiter: char) -> String {
        let d = delimiter;
        let mut out = String::new();
        out.push_str(&format!("metric{d}train{d}val{d}test{d}total\n"));
        let row = |name: &str, f: fn(&ImageCounts) -> u64| {
            format!(
                "{name}{d}{}{d}{}{d}{}{d}{}\n",
                f(&self.train),
                f(&self.val),
                f(&self.test),
                f(&self.total)
            )
        };
        out.push_str(&row("images", |c| c.images));
        out.push_str(&row("pa_images", |c| c.pa));
        out.push_str(&row("la_images", |c| c.la));
        out.push('\n');
        out.push_str(&format!("label{d}positive_count{d}positive_ratio\n"));
        for stat in &self.labels {
            out.push_str(&format!(
                "{}{d}{}{d}{:.2}%\n",
                stat.label, stat.positives, stat.ratio_percent
            ));
        }
        out
    }
}

const FIELD_ACC: &str = "ACC";
const FIELD_FINDINGS: &str = "征象描述";
const FIELD_IMPRESSION: &str = "诊断结论";
const FIELD_CLINICAL_DX: &str = "临床诊断";
const FIELD_SEX: &str = "病人性别";
const FIELD_AGE: &str = "年龄";
const FIELD_AGE_RAW: &str = "年龄原文";
const FIELD_CLINICAL_DESC: &str = "临床描述";
const FIELD_LABELS: &str = "疾病标签";
const FIELD_PA: &str = "pa_image";
const FIELD_LA: &str = "la_image";
const FIELD_SPLIT: &str = "split";
const FIELD_METADATA: &str = "metadata";

fn record_to_json(record: &SampleRecord, schema: &LabelSchema) -> serde_json::Value {
    let mut labels = serde_json::Map::new();
    for (i, name) in schema.secondary_labels().iter().enumerate() {
        labels.insert(
            name.clone(),
            serde_json::Value::from(u8::from(record.labels.get(i))),
        );
    }
    let mut obj = serde_json::Map::new();
    obj.insert(FIELD_ACC.into(), record.report.acc.clone().into());
    obj.insert(FIELD_FINDINGS.into(), record.report.findings.clone().into());
    obj.insert(
        FIELD_IMPRESSION.into(),
        record.report.impression.clone().into(),
    );
    obj.insert(
        FIELD_CLINICAL_DX.into(),
        record.report.clinical_dx.clone().into(),
    );
    obj.insert(FIELD_SEX.into(), record.report.sex.clone().into());
    obj.insert(FIELD_AGE.into(), record.report.age_years.into());
    obj.insert(FIELD_AGE_RAW.into(), record.report.age_raw.clone().into());
    obj.insert(
        FIELD_CLINICAL_DESC.into(),
        record.report.clinical_desc.clone().into(),
    );
    obj.insert(FIELD_LABELS.into(), labels.into());
    obj.insert(FIELD_PA.into(), record.pa_image_path.clone().into());
    obj.insert(
        FIELD_LA.into(),
        record
            .la_image_path
            .clone()
            .map_or(serde_json::Value::Null, Into::into),
    );
    obj.insert(FIELD_SPLIT.into(), record.split.as_str().into());
    obj.insert(
        FIELD_METADATA.into(),
        serde_json::Value::Object(
            record
                .metadata
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::from(v.clone())))
                .collect(),
        ),
    );
    serde_json::Value::Object(obj)
}

fn json_to_record(
    value: &serde_json::Value,
    schema: &LabelSchema,
    line: usize,
) -> Result<SampleRecord, DatasetError> {
    let parse_err = |msg: String| DatasetError::Parse { line, msg };
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err("record is not a JSON object".to_string()))?;
    let str_field = |name: &str| -> Result<String, DatasetError> {
        obj.get(name)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| parse_err(format!("missing or non-string field {name:?}")))
    };
    let age_years = obj
        .get(FIELD_AGE)
        .and_then(|v| v.as_u64())
        .ok_or_else(|| parse_err(format!("missing or non-integer field {FIELD_AGE:?}")))?;
    let labels_obj = obj
        .get(FIELD_LABELS)
        .and_then(|v| v.as_object())
        .ok_or_else(|| parse_err(format!("missing or non-object field {FIELD_LABELS:?}")))?;
    let mut labels = SecondaryLabelVector::all_negative();
    for (i, name) in schema.secondary_labels().iter().enumerate() {
        let raw = labels_obj
            .get(name)
            .and_then(|v| v.as_u64())
            .ok_or_else(|| parse_err(format!("label {name:?} missing or not 0/1")))?;
        match raw {
            0 => labels.set(i, false),
            1 => labels.set(i, true),
            other => {
                return Err(parse_err(format!(
                    "label {name:?} has value {other}, not 0/1"
                )))
            }
        }
    }
    if labels_obj.len() != SECONDARY_COUNT {
        return Err(parse_err(format!(
            "label object has {} entries, expected {SECONDARY_COUNT}",
            labels_obj.len()
        )));
    }
    let la_image_path = match obj.get(FIELD_LA) {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(parse_err(format!(
                "field {FIELD_LA:?} must be string or null"
            )))
        }
    };
    let split = match obj.get(FIELD_SPLIT).and_then(|v| v.as_str()) {
        Some("train") => Split::Train,
        Some("val") => Split::Val,
        Some("test") => Split::Test,
        Some("unassigned") => Split::Unassigned,
        other => return Err(parse_err(format!("bad split value {other:?}"))),
    };
    let mut metadata = BTreeMap::new();
    if let Some(meta) = obj.get(FIELD_METADATA) {
        let meta = meta
            .as_object()
            .ok_or_else(|| parse_err(format!("field {FIELD_METADATA:?} must be an object")))?;
        for (k, v) in meta {
            let v = v
                .as_str()
                .ok_or_else(|| parse_err(format!("metadata {k:?} must be a string")))?;
            metadata.insert(k.clone(), v.to_string());
        }
    }
    Ok(SampleRecord {
        pa_image_path: str_field(FIELD_PA)?,
        la_image_path,
        report: CleanReport {
            acc: str_field(FIELD_ACC)?,
            findings: str_field(FIELD_FINDINGS)?,
            impression: str_field(FIELD_IMPRESSION)?,
            clinical_dx: str_field(FIELD_CLINICAL_DX)?,
            sex: str_field(FIELD_SEX)?,
            age_raw: str_field(FIELD_AGE_RAW)?,
            clinical_desc: str_field(FIELD_CLINICAL_DESC)?,
            age_years: u32::try_from(age_years)
                .map_err(|_| parse_err(format!("age {age_years} out of range")))?,
        },
        labels,
        split,
        metadata,
    })
}

/// Write one JSON record per line. Every record must have a split; ids must
/// be unique. Reloading reproduces the records exactly.
pub fn emit_manifest(
    records: &[SampleRecord],
    schema: &LabelSchema,
    path: impl AsRef<Path>,
) -> Result<(), DatasetError> {
    let mut seen: HashSet<&str> = HashSet::new();
    for record in records {
        if record.split == Split::Unassigned {
            return Err(DatasetError::UnassignedSplit {
                id: record.sample_id().to_string(),
            });
        }
        if !seen.insert(record.sample_id()) {
            return Err(DatasetError::DuplicateId {
                id: record.sample_id().to_string(),
            });
        }
    }
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, &record_to_json(record, schema))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Load a manifest written by [`emit_manifest`]. Lines starting with '#'
/// are headers and are skipped.
pub fn load_manifest(
    path: impl AsRef<Path>,
    schema: &LabelSchema,
) -> Result<Vec<SampleRecord>, DatasetError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        records.push(json_to_record(&value, schema, lineno)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(acc: &str, age: u32) -> CleanReport {
        CleanReport {
            acc: acc.to_string(),
            findings: "双肺纹理增多。".to_string(),
            impression: "双肺纹理增多。".to_string(),
            clinical_dx: "复查".to_string(),
            sex: "男".to_string(),
            age_raw: format!("{age:03}Y00M00D"),
            clinical_desc: "入院检查".to_string(),
            age_years: age,
        }
    }

    fn sample(acc: &str, age: u32) -> SampleRecord {
        SampleRecord {
            pa_image_path: format!("{acc}_pa.png"),
            la_image_path: None,
            report: report(acc, age),
            labels: SecondaryLabelVector::all_negative(),
            split: Split::Unassigned,
            metadata: BTreeMap::new(),
        }
    }

    fn many(n: usize) -> Vec<SampleRecord> {
        (0..n).map(|i| sample(&format!("A{i:06}"), 30)).collect()
    }

    #[test]
    fn published_corpus_size_splits_as_documented() {
        let spec = SplitSpec::with_seed(7);
        assert_eq!(spec.sizes(24_035), (19_228, 2_403, 2_404));
        assert_eq!(spec.sizes(10), (8, 1, 1));
        assert_eq!(spec.sizes(47_886), (38_308, 4_788, 4_790));
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let spec = SplitSpec::with_seed(42);
        let a = split(many(103), &spec).unwrap();
        let b = split(many(103), &spec).unwrap();
        assert_eq!(a, b);

        let counts =
            |records: &[SampleRecord], s: Split| records.iter().filter(|r| r.split == s).count();
        assert_eq!(counts(&a, Split::Train), 82);
        assert_eq!(counts(&a, Split::Val), 10);
        assert_eq!(counts(&a, Split::Test), 11);
        assert_eq!(counts(&a, Split::Unassigned), 0);

        let mut ids: Vec<&str> = a.iter().map(|r| r.sample_id()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 103);

        let c = split(many(103), &SplitSpec::with_seed(43)).unwrap();
        let order_a: Vec<&str> = a.iter().map(|r| r.sample_id()).collect();
        let order_c: Vec<&str> = c.iter().map(|r| r.sample_id()).collect();
        assert_ne!(order_a, order_c);
    }

    #[test]
    fn split_rejects_tiny_and_bad_ratios() {
        assert!(matches!(
            split(many(2), &SplitSpec::with_seed(1)),
            Err(DatasetError::TooFewSamples { n: 2 })
        ));
        assert!(matches!(
            SplitSpec::new(0.5, 0.5, 0.5, 1),
            Err(DatasetError::BadRatios { .. })
        ));
        assert!(matches!(
            SplitSpec::new(0.9, 0.1, 0.0, 1),
            Err(DatasetError::BadRatios { .. })
        ));
    }

    #[test]
    fn exclusion_predicates_fire_by_name() {
        let config = ExclusionConfig::default();

        let minor = sample("K1", 17);
        let adult = sample("K2", 18);
        let mut dusty = sample("K3", 40);
        dusty.report.clinical_dx = "尘肺复查".to_string();
        let mut bedside = sample("K4", 40);
        bedside.metadata.insert("bedside".into(), "true".into());
        let mut brief = sample("K5", 40);
        brief.report.findings = String::new();
        brief.report.impression = "随诊".to_string();
        let mut ribs = sample("K6", 40);
        ribs.report.clinical_desc = "肋骨正斜位检查".to_string();
        let mut flagged_not_bedside = sample("K7", 40);
        flagged_not_bedside
            .metadata
            .insert("bedside".into(), "false".into());

        let (kept, excluded, warnings) = apply_exclusions(
            vec![
                minor,
                adult,
                dusty,
                bedside,
                brief,
                ribs,
                flagged_not_bedside,
            ],
            &config,
        );
        let kept_ids: Vec<&str> = kept.iter().map(|r| r.sample_id()).collect();
        assert_eq!(kept_ids, vec!["K2", "K7"]);
        let reasons: Vec<(&str, &str)> = excluded
            .iter()
            .map(|e| (e.sample_id.as_str(), e.reason.as_str()))
            .collect();
        assert_eq!(
            reasons,
            vec![
                ("K1", "under-18"),
                ("K3", "pneumoconiosis"),
                ("K4", "bedside"),
                ("K5", "overly-brief"),
                ("K6", "rib-series"),
            ]
        );
        // K1, K2, K5, K6 lack the bedside key; K1 is rejected before the
        // bedside predicate runs.
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("3 record(s)"), "{}", warnings[0]);
    }

    #[test]
    fn first_matching_predicate_names_the_rejection() {
        let mut both = sample("B1", 15);
        both.report.clinical_dx = "尘肺".to_string();
        let (_, excluded, _) = apply_exclusions(vec![both], &ExclusionConfig::default());
        assert_eq!(excluded[0].reason, "under-18");
    }

    #[test]
    fn stats_ratios_match_hand_tallies() {
        assert!((positive_ratio_percent(16_714, 47_886) - 34.90).abs() < 0.005);
        assert!((positive_ratio_percent(23_429, 47_886) - 48.93).abs() < 0.005);
        assert_eq!(positive_ratio_percent(0, 0), 0.0);

        let schema = LabelSchema::default_schema();
        let mut records = many(5);
        // Hand-tallied: label 1 positive in records 0,1; label 8 in record 0.
        records[0].labels.set(1, true);
        records[0].labels.set(8, true);
        records[1].labels.set(1, true);
        records[2].la_image_path = Some("x_la.png".into());
        records[0].split = Split::Train;
        records[1].split = Split::Train;
        records[2].split = Split::Val;
        records[3].split = Split::Test;
        records[4].split = Split::Test;

        let stats = compute_stats(&records, &schema);
        assert_eq!(stats.sample_count, 5);
        assert_eq!(stats.train.pa, 2);
        assert_eq!(stats.val.la, 1);
        assert_eq!(stats.val.images, 2);
        assert_eq!(stats.test.pa, 2);
        assert_eq!(stats.total.pa, 5);
        assert_eq!(stats.total.images, 6);
        assert_eq!(
            stats.total.pa,
            stats.train.pa + stats.val.pa + stats.test.pa
        );

        assert_eq!(stats.labels[1].positives, 2);
        assert!((stats.labels[1].ratio_percent - 40.0).abs() < 1e-9);
        assert_eq!(stats.labels[8].positives, 1);
        assert_eq!(stats.labels[0].positives, 0);
        assert_eq!(stats.labels.len(), SECONDARY_COUNT);

        let tables = stats.to_tables('\t');
        assert!(tables.contains("pa_images\t2\t1\t2\t5"));
        assert!(tables.contains("40.00%"));
    }

    #[test]
    fn all_negative_corpus_has_zero_ratios() {
        let schema = LabelSchema::default_schema();
        let stats = compute_stats(&many(4), &schema);
        assert!(stats.labels.iter().all(|l| l.positives == 0));
        assert!(stats.labels.iter().all(|l| l.ratio_percent == 0.0));
    }

    #[test]
    fn manifest_round_trip_is_identity() {
        let schema = LabelSchema::default_schema();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");

        let mut records = many(3);
        records[0].split = Split::Train;
        records[0].labels.set(3, true);
        records[0].labels.set(7, true);
        records[0].metadata.insert("bedside".into(), "false".into());
        records[1].split = Split::Val;
        records[1].la_image_path = Some("A000001_la.png".into());
        records[2].split = Split::Test;

        emit_manifest(&records, &schema, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("{\"ACC\":"));

        let reloaded = load_manifest(&path, &schema).unwrap();
        assert_eq!(reloaded, records);
    }

    #[test]
    fn manifest_skips_comment_header_lines() {
        let schema = LabelSchema::default_schema();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut records = many(1);
        records[0].split = Split::Train;
        emit_manifest(&records, &schema, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, format!("# version 1\n# seed 42\n{body}")).unwrap();
        assert_eq!(load_manifest(&path, &schema).unwrap(), records);
    }

    #[test]
    fn manifest_rejects_duplicates_and_unassigned() {
        let schema = LabelSchema::default_schema();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");

        let unassigned = many(1);
        assert!(matches!(
            emit_manifest(&unassigned, &schema, &path),
            Err(DatasetError::UnassignedSplit { .. })
        ));

        let mut dup = many(2);
        dup[0].split = Split::Train;
        dup[1].split = Split::Train;
        dup[1].report.acc = dup[0].report.acc.clone();
        assert!(matches!(
            emit_manifest(&dup, &schema, &path),
            Err(DatasetError::DuplicateId { .. })
        ));
    }

    #[test]
    fn manifest_rejects_malformed_labels() {
        let schema = LabelSchema::default_schema();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut records = many(1);
        records[0].split = Split::Train;
        emit_manifest(&records, &schema, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let broken = text.replace("\"未见明显异常\":0", "\"未见明显异常\":3");
        std::fs::write(&path, broken).unwrap();
        assert!(matches!(
            load_manifest(&path, &schema),
            Err(DatasetError::Parse { line: 1, .. })
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn split_sizes_follow_floor_rule(n in 3usize..400, seed in any::<u64>()) {
                let spec = SplitSpec::with_seed(seed);
                let out = split(many(n), &spec).unwrap();
                let train = out.iter().filter(|r| r.split == Split::Train).count();
                let val = out.iter().filter(|r| r.split == Split::Val).count();
                let test = out.iter().filter(|r| r.split == Split::Test).count();
                // Integer-arithmetic reference for the default 8:1:1 ratios.
                prop_assert_eq!(train, n * 8 / 10);
                prop_assert_eq!(val, n / 10);
                prop_assert_eq!(test, n - n * 8 / 10 - n / 10);
                prop_assert_eq!(train + val + test, n);

                let mut ids: Vec<String> =
                    out.iter().map(|r| r.sample_id().to_string()).collect();
                ids.sort();
                ids.dedup();
                prop_assert_eq!(ids.len(), n);
            }

            #[test]
            fn label_vectors_round_trip_through_manifest(bits in 0u16..(1 << SECONDARY_COUNT)) {
                let schema = LabelSchema::default_schema();
                let mut record = sample("P1", 44);
                record.split = Split::Train;
                for i in 0..SECONDARY_COUNT {
                    record.labels.set(i, bits & (1 << i) != 0);
                }
                let json = record_to_json(&record, &schema);
                let back = json_to_record(&json, &schema, 1).unwrap();
                prop_assert_eq!(back, record);
            }
        }
    }
}
