//! Labeling through a chat-model transport. The default transport replays
//! a scripted response file, so runs are reproducible and offline; the
//! HTTP transport is compiled in only with the `live-llm` feature.

use std::io::Write as _;
use std::path::PathBuf;

use anyhow::anyhow;

use crate::util::{announce, parse_delimiter, write_label_table, LabelRow};
use crate::{input, transport, Ctx, Failure};
use cxrlab::llm::{
    label_with_llm, LlmError, MockTransport, ParseOutcome, PromptTemplate, RetryPolicy, Transport,
};
use cxrlab::normalizer::{clean_batch, read_report_table};

#[derive(clap::Args)]
pub struct LlmLabelArgs {
    /// Cleaned report table to label.
    #[arg(long)]
    pub input: PathBuf,
    /// Label-table output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Scripted responses, one per line; lines !auth, !rate, and !net
    /// simulate transport failures.
    #[arg(long)]
    pub mock_responses: Option<PathBuf>,
    /// Send to the HTTP endpoint configured via the CXRLAB_LLM_* variables
    /// instead of replaying a script.
    #[cfg(feature = "live-llm")]
    #[arg(long, conflicts_with = "mock_responses")]
    pub live: bool,
    /// Prompt template file; the built-in template is used when omitted.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Model name recorded for the scripted transport.
    #[arg(long, default_value = "mock")]
    pub model_name: String,
    /// Append one JSON audit record per request here.
    #[arg(long)]
    pub audit: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    /// First retry backoff; later retries double it.
    #[arg(long, default_value_t = 500)]
    pub retry_base_ms: u64,
    #[arg(long, default_value = "tab", value_parser = parse_delimiter)]
    pub delimiter: u8,
}

fn build_transport(args: &LlmLabelArgs) -> Result<Box<dyn Transport>, Failure> {
    #[cfg(feature = "live-llm")]
    if args.live {
        let http = cxrlab::llm::HttpTransport::from_env()
            .map_err(|e| transport(anyhow!("configuring HTTP transport: {e}")))?;
        return Ok(Box::new(http));
    }
    match &args.mock_responses {
        Some(path) => Ok(Box::new(
            MockTransport::from_file(path, args.model_name.clone()).map_err(input)?,
        )),
        None => Err(Failure::Usage(
            "--mock-responses is required (or --live with the live-llm build)".to_string(),
        )),
    }
}

fn llm_failure(e: LlmError) -> Failure {
    match e {
        LlmError::TransportFailed { .. } => transport(e),
        _ => input(e),
    }
}

pub fn run(args: &LlmLabelArgs, ctx: &Ctx) -> Result<(), Failure> {
    if args.max_attempts == 0 {
        return Err(Failure::Usage(
            "--max-attempts must be at least 1".to_string(),
        ));
    }
    let parts = [
        ("input", args.input.display().to_string()),
        ("out", args.out.display().to_string()),
        (
            "transport",
            args.mock_responses
                .as_ref()
                .map_or("live".to_string(), |p| format!("mock:{}", p.display())),
        ),
        (
            "template",
            args.template
                .as_ref()
                .map_or("builtin".to_string(), |p| p.display().to_string()),
        ),
        ("model_name", args.model_name.clone()),
        ("max_attempts", args.max_attempts.to_string()),
        ("schema", ctx.schema_source.clone()),
    ];
    let header = announce("llm-label", None, &parts);

    let raws = read_report_table(&args.input, args.delimiter).map_err(input)?;
    let (reports, rejects) = clean_batch(&raws);
    if !rejects.is_empty() {
        return Err(input(anyhow!(
            "{} report(s) failed cleaning (first: {} {}); run `cxrlab clean` first",
            rejects.len(),
            rejects[0].acc,
            rejects[0].reason
        )));
    }

    let template = match &args.template {
        Some(path) => PromptTemplate::load(path, &ctx.schema, 2).map_err(input)?,
        None => PromptTemplate::default_template(&ctx.schema).map_err(input)?,
    };
    let mut transport_box = build_transport(args)?;
    let policy = RetryPolicy {
        max_attempts: args.max_attempts,
        base_delay: std::time::Duration::from_millis(args.retry_base_ms),
    };

    let mut audit_file = match &args.audit {
        Some(path) => Some(std::io::BufWriter::new(
            std::fs::File::create(path).map_err(input)?,
        )),
        None => None,
    };
    let results = label_with_llm(
        transport_box.as_mut(),
        &template,
        &reports,
        &ctx.schema,
        &policy,
        audit_file.as_mut().map(|w| w as &mut dyn std::io::Write),
    )
    .map_err(llm_failure)?;
    if let Some(mut w) = audit_file {
        w.flush().map_err(input)?;
    }

    let mut rows = Vec::new();
    let mut parse_failures = 0usize;
    for (acc, response) in &results {
        match &response.outcome {
            ParseOutcome::Labels(labels) => {
                rows.push(LabelRow::from_secondary(acc.clone(), *labels, &ctx.schema));
            }
            ParseOutcome::Failure {
                reason,
                unknown_names,
            } => {
                parse_failures += 1;
                if unknown_names.is_empty() {
                    eprintln!("parse failure {acc}: {reason}");
                } else {
                    eprintln!("parse failure {acc}: {reason}; unknown names {unknown_names:?}");
                }
            }
        }
    }

    write_label_table(&args.out, &header, &rows, &ctx.schema).map_err(input)?;
    println!(
        "labeled {} of {} report(s), {parse_failures} parse failure(s) -> {}",
        rows.len(),
        reports.len(),
        args.out.display()
    );
    if let Some(audit_path) = &args.audit {
        println!("audit: {}", audit_path.display());
    }
    Ok(())
}
