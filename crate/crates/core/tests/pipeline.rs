//! End-to-end flows across module boundaries: report table -> cleaning ->
//! dataset manifest -> training -> checkpoint -> prediction -> scoring,
//! plus the mock-transport labeling path.

use std::collections::BTreeMap;

use cxrlab::dataset::{
    apply_exclusions, compute_stats, emit_manifest, load_manifest, split, ExclusionConfig,
    SampleRecord, Split, SplitSpec,
};
use cxrlab::labeler::{
    load_checkpoint, predict, save_checkpoint, synthetic_corpus, train, EncoderConfig, Lexicon,
    TrainConfig, TrainSample,
};
use cxrlab::llm::{label_with_llm, serialize_labels, MockTransport, PromptTemplate, RetryPolicy};
use cxrlab::metrics::{clinical_efficacy, evaluate};
use cxrlab::normalizer::{clean_batch, read_report_table, write_clean_table, RawReport};
use cxrlab::taxonomy::{LabelSchema, SecondaryLabelVector};

fn raw_from_synthetic(report: &cxrlab::normalizer::CleanReport) -> RawReport {
    RawReport {
        acc: report.acc.clone(),
        findings: report.findings.clone(),
        impression: report.impression.clone(),
        clinical_dx: report.clinical_dx.clone(),
        sex: report.sex.clone(),
        age_raw: report.age_raw.clone(),
        clinical_desc: report.clinical_desc.clone(),
    }
}

fn small_train_config() -> TrainConfig {
    TrainConfig {
        encoder: EncoderConfig {
            embedding_dim: 16,
            max_seq_len: 96,
            ..EncoderConfig::default()
        },
        learning_rate: 2e-2,
        epochs: 120,
        batch_size: 8,
        seed: 42,
        ..TrainConfig::default()
    }
}

#[test]
fn table_to_manifest_round_trip() {
    let schema = LabelSchema::default_schema();
    let corpus = synthetic_corpus(40, 7, &schema);
    let dir = tempfile::tempdir().unwrap();

    // The synthetic reports pass through the raw table format unchanged.
    let raw_path = dir.path().join("raw.tsv");
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(&raw_path)
        .unwrap();
    writer
        .write_record(cxrlab::normalizer::REPORT_COLUMNS)
        .unwrap();
    for (report, _) in &corpus {
        let r = raw_from_synthetic(report);
        writer
            .write_record([
                r.acc.as_str(),
                r.findings.as_str(),
                r.impression.as_str(),
                r.clinical_dx.as_str(),
                r.sex.as_str(),
                r.age_raw.as_str(),
                r.clinical_desc.as_str(),
            ])
            .unwrap();
    }
    writer.flush().unwrap();
    drop(writer);

    let raws = read_report_table(&raw_path, b'\t').unwrap();
    let (cleaned, rejects) = clean_batch(&raws);
    assert!(rejects.is_empty(), "synthetic corpus must clean cleanly");
    assert_eq!(cleaned.len(), 40);
    write_clean_table(dir.path().join("clean.tsv"), &cleaned, b'\t').unwrap();

    let lexicon = Lexicon::default_lexicon(&schema).unwrap();
    let records: Vec<SampleRecord> = cleaned
        .iter()
        .map(|report| SampleRecord {
            pa_image_path: format!("{}_pa.png", report.acc),
            la_image_path: None,
            labels: lexicon.label_text(&cxrlab::labeler::report_text(report), &schema),
            report: report.clone(),
            split: Split::Unassigned,
            metadata: BTreeMap::new(),
        })
        .collect();

    // Rule labels reproduce the generator's gold labels.
    for (record, (_, gold)) in records.iter().zip(&corpus) {
        assert_eq!(&record.labels, gold, "sample {}", record.sample_id());
    }

    let (kept, excluded, warnings) = apply_exclusions(records, &ExclusionConfig::default());
    assert_eq!(excluded.len(), 0);
    assert_eq!(kept.len(), 40);
    // No record carries the bedside metadata key, so the predicate warns.
    assert_eq!(warnings.len(), 1);

    let assigned = split(kept, &SplitSpec::new(0.8, 0.1, 0.1, 11).unwrap()).unwrap();
    let manifest_path = dir.path().join("manifest.jsonl");
    emit_manifest(&assigned, &schema, &manifest_path).unwrap();
    let reloaded = load_manifest(&manifest_path, &schema).unwrap();
    assert_eq!(assigned, reloaded);

    let stats = compute_stats(&reloaded, &schema);
    assert_eq!(stats.sample_count, 40);
    assert_eq!(stats.train.pa, 32);
    assert_eq!(stats.val.pa, 4);
    assert_eq!(stats.test.pa, 4);
}

#[test]
fn train_checkpoint_predict_cycle() {
    let schema = LabelSchema::default_schema();
    let corpus = synthetic_corpus(40, 7, &schema);
    let samples: Vec<TrainSample> = corpus
        .iter()
        .map(|(report, labels)| TrainSample::from_report(report, *labels))
        .collect();

    let out = train(&samples, &schema, &small_train_config()).unwrap();
    assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(&out.params, &ckpt).unwrap();
    let restored = load_checkpoint(&ckpt).unwrap();

    let gold: Vec<SecondaryLabelVector> = corpus.iter().map(|(_, g)| *g).collect();
    let pred: Vec<SecondaryLabelVector> = corpus
        .iter()
        .map(|(report, _)| {
            let from_live = predict(&out.params, report, &schema);
            let from_disk = predict(&restored, report, &schema);
            assert_eq!(from_live, from_disk, "checkpoint must preserve predictions");
            from_live.secondary_labels
        })
        .collect();

    let report = evaluate(schema.secondary_labels(), &gold, &pred).unwrap();
    assert!(
        report.micro_f1 >= 0.95,
        "training must fit the toy corpus, micro-F1 {}",
        report.micro_f1
    );
}

#[test]
fn efficacy_scoring_with_rule_labeler() {
    let schema = LabelSchema::default_schema();
    let corpus = synthetic_corpus(30, 3, &schema);
    let lexicon = Lexicon::default_lexicon(&schema).unwrap();
    let generated: Vec<String> = corpus
        .iter()
        .map(|(report, _)| cxrlab::labeler::report_text(report))
        .collect();
    let gold: Vec<SecondaryLabelVector> = corpus.iter().map(|(_, g)| *g).collect();

    let report = clinical_efficacy(&generated, &gold, schema.secondary_labels(), |text| {
        lexicon.label_text(text, &schema)
    })
    .unwrap();
    assert_eq!(report.micro_f1, 1.0);
    // The macro mean accumulates fourteen f1/14 terms, so it only reaches
    // 1.0 up to summation error.
    assert!((report.aggregates.macro_f1 - 1.0).abs() < 1e-12);
}

#[test]
fn mock_transport_labeling_round_trip() {
    let schema = LabelSchema::default_schema();
    let corpus = synthetic_corpus(10, 5, &schema);
    let reports: Vec<_> = corpus.iter().map(|(r, _)| r.clone()).collect();

    // Script the transport with perfect answers plus one transient failure.
    let mut lines: Vec<String> = vec!["!rate".to_string()];
    lines.extend(
        corpus
            .iter()
            .map(|(_, gold)| serialize_labels(gold, &schema)),
    );
    let mut transport = MockTransport::new(lines, "scripted");
    let template = PromptTemplate::default_template(&schema).unwrap();
    let policy = RetryPolicy {
        max_attempts: 3,
        base_delay: std::time::Duration::ZERO,
    };

    let mut audit = Vec::new();
    let results = label_with_llm(
        &mut transport,
        &template,
        &reports,
        &schema,
        &policy,
        Some(&mut audit),
    )
    .unwrap();

    assert_eq!(results.len(), 10);
    for ((acc, response), (report, gold)) in results.iter().zip(&corpus) {
        assert_eq!(acc, &report.acc);
        assert_eq!(response.labels(), Some(gold), "sample {acc}");
    }
    // One retry on the first sample, then one attempt each.
    let audit_text = String::from_utf8(audit).unwrap();
    let attempts: Vec<u64> = audit_text
        .lines()
        .map(|line| {
            serde_json::from_str::<serde_json::Value>(line).unwrap()["attempts"]
                .as_u64()
                .unwrap()
        })
        .collect();
    assert_eq!(attempts[0], 2);
    assert!(attempts[1..].iter().all(|&a| a == 1));
}
