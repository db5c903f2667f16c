//! Shared plumbing: reproducibility headers, delimited-table helpers, the
//! label-table format, and the worker pool.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use cxrlab::taxonomy::{LabelSchema, PrimaryLabelVector, SecondaryLabelVector};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Digest of the resolved configuration. Identical flags hash identically;
/// any flag change shows up in the run header.
pub fn config_digest(command: &str, parts: &[(&str, String)]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update(b"\n");
    for (key, value) in parts {
        hasher.update(key.as_bytes());
        hasher.update(b"=");
        hasher.update(value.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// The three-line reproducibility header. Deliberately free of timestamps,
/// hostnames, and paths that identical reruns would not share.
pub fn header_lines(seed: Option<u64>, digest: &str) -> String {
    let seed = seed.map_or_else(|| "-".to_string(), |s| s.to_string());
    format!(
        "# cxrlab {}\n# seed: {seed}\n# config: sha256:{digest}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Compute the header for a command, print it, and return it for reuse in
/// file outputs.
pub fn announce(command: &str, seed: Option<u64>, parts: &[(&str, String)]) -> String {
    let header = header_lines(seed, &config_digest(command, parts));
    print!("{header}");
    header
}

/// Prefix an already-written text file with the run header.
pub fn prepend_header(path: &Path, header: &str) -> std::io::Result<()> {
    let body = std::fs::read(path)?;
    let mut out = Vec::with_capacity(header.len() + body.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&body);
    std::fs::write(path, out)
}

/// Accepts "tab", "comma", or any single ASCII character.
pub fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        "comma" | "," => Ok(b','),
        other if other.len() == 1 && other.is_ascii() => Ok(other.as_bytes()[0]),
        other => Err(format!(
            "unsupported delimiter {other:?}; use tab, comma, or one ASCII character"
        )),
    }
}

/// CJK and fullwidth characters occupy two terminal cells.
fn char_width(c: char) -> usize {
    match c as u32 {
        0x1100..=0x115F
        | 0x2E80..=0x303E
        | 0x3041..=0x33FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xA000..=0xA4CF
        | 0xAC00..=0xD7A3
        | 0xF900..=0xFAFF
        | 0xFE30..=0xFE4F
        | 0xFF00..=0xFF60
        | 0xFFE0..=0xFFE6 => 2,
        _ => 1,
    }
}

fn display_width(s: &str) -> usize {
    s.chars().map(char_width).sum()
}

/// Render tab-separated text as a space-aligned table for terminals.
/// '#' header lines and blank lines pass through unchanged.
pub fn render_aligned(tsv: &str) -> String {
    let lines: Vec<&str> = tsv.lines().collect();
    let mut widths: Vec<usize> = Vec::new();
    for line in &lines {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        for (i, cell) in line.split('\t').enumerate() {
            let w = display_width(cell);
            if i == widths.len() {
                widths.push(w);
            } else if w > widths[i] {
                widths[i] = w;
            }
        }
    }
    let mut out = String::new();
    for line in &lines {
        if line.starts_with('#') || line.is_empty() {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let mut rendered = String::new();
        for (i, cell) in cells.iter().enumerate() {
            rendered.push_str(cell);
            if i + 1 < cells.len() {
                for _ in 0..widths[i] - display_width(cell) + 2 {
                    rendered.push(' ');
                }
            }
        }
        out.push_str(rendered.trim_end());
        out.push('\n');
    }
    out
}

/// One labeled report in the label-table format: ACC, the fine-grained
/// labels, then the coarse labels, all as 0/1 columns.
pub struct LabelRow {
    pub acc: String,
    pub secondary: SecondaryLabelVector,
    pub primary: PrimaryLabelVector,
}

impl LabelRow {
    pub fn from_secondary(
        acc: String,
        secondary: SecondaryLabelVector,
        schema: &LabelSchema,
    ) -> Self {
        let primary = schema.propagate(&secondary);
        Self {
            acc,
            secondary,
            primary,
        }
    }
}

pub fn write_label_table(
    path: &Path,
    header: &str,
    rows: &[LabelRow],
    schema: &LabelSchema,
) -> std::io::Result<()> {
    let mut out = String::from(header);
    out.push_str("ACC");
    for name in schema.secondary_labels() {
        out.push('\t');
        out.push_str(name);
    }
    for name in schema.primary_labels() {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.acc);
        for &v in row.secondary.values() {
            out.push('\t');
            out.push(if v { '1' } else { '0' });
        }
        for &v in row.primary.values() {
            out.push('\t');
            out.push(if v { '1' } else { '0' });
        }
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Read the fine-grained labels back out of a label table. Columns are
/// matched by header name; extra columns are ignored.
pub fn read_label_table(
    path: &Path,
    schema: &LabelSchema,
) -> anyhow::Result<Vec<(String, SecondaryLabelVector)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading label table {}", path.display()))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| anyhow!("{}: empty label table", path.display()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    let acc_col = cols
        .iter()
        .position(|c| *c == "ACC")
        .ok_or_else(|| anyhow!("{}: missing ACC column", path.display()))?;
    let label_cols: Vec<usize> = schema
        .secondary_labels()
        .iter()
        .map(|name| {
            cols.iter()
                .position(|c| c == name)
                .ok_or_else(|| anyhow!("{}: missing label column {name:?}", path.display()))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split('\t').collect();
        let cell = |col: usize| {
            cells
                .get(col)
                .copied()
                .ok_or_else(|| anyhow!("{}:{lineno}: row has too few columns", path.display()))
        };
        let acc = cell(acc_col)?.to_string();
        let mut labels = SecondaryLabelVector::all_negative();
        for (slot, &col) in label_cols.iter().enumerate() {
            match cell(col)? {
                "0" => {}
                "1" => labels.set(slot, true),
                other => bail!(
                    "{}:{lineno}: label value {other:?}, expected 0 or 1",
                    path.display()
                ),
            }
        }
        rows.push((acc, labels));
    }
    Ok(rows)
}

/// Run a closure inside a worker pool of the requested size; `None` keeps
/// the caller's pool (rayon's global default), 0 means one worker per core.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Usage(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
