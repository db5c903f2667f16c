//! DICOM-to-PNG conversion: first window wins, inverted monochrome is
//! flipped, one PNG per input file plus a conversion log.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use rayon::prelude::*;

use crate::util::{announce, render_aligned, with_jobs};
use crate::{input, Ctx, Failure};
use cxrlab::windowing::{
    apply_window, read_dicom_subset, read_raw_with_sidecar, select_window, write_png_gray8,
    DicomImage,
};

#[derive(clap::Args)]
pub struct ConvertArgs {
    /// DICOM files, directories to scan for .dcm files, or .raw pixel
    /// files paired with a .sidecar description.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for the PNGs and the conversion log.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads for per-file conversion; 0 means one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn gather_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| input(anyhow!("reading directory {}: {e}", path.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "dcm"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            match path.extension().and_then(|e| e.to_str()) {
                Some("dcm") | Some("raw") => files.push(path.clone()),
                _ => {
                    return Err(input(anyhow!(
                        "{}: expected a .dcm or .raw file, or a directory",
                        path.display()
                    )))
                }
            }
        }
    }
    if files.is_empty() {
        return Err(input(anyhow!("no .dcm files found in the given inputs")));
    }
    Ok(files)
}

fn read_study(path: &Path) -> Result<DicomImage, String> {
    if path.extension().is_some_and(|e| e == "raw") {
        let sidecar = path.with_extension("sidecar");
        read_raw_with_sidecar(path, &sidecar).map_err(|e| e.to_string())
    } else {
        read_dicom_subset(path).map_err(|e| e.to_string())
    }
}

fn convert_one(path: &Path, out_dir: &Path) -> Result<String, String> {
    let study = read_study(path)?;
    let window = select_window(&study.windows).map_err(|e| e.to_string())?;
    let gray = apply_window(&study.image, &window);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| "input file has no usable name".to_string())?;
    let out_path = out_dir.join(format!("{stem}.png"));
    write_png_gray8(&gray, &out_path).map_err(|e| e.to_string())?;
    Ok(format!(
        "{}\t{}\t{}x{}\t{}/{}\t{}",
        path.display(),
        out_path.display(),
        gray.width(),
        gray.height(),
        window.wc(),
        window.ww(),
        study.view_position.as_deref().unwrap_or("-"),
    ))
}

pub fn run(args: &ConvertArgs, _ctx: &Ctx) -> Result<(), Failure> {
    let files = gather_inputs(&args.inputs)?;
    let parts = [
        (
            "inputs",
            files
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ),
        ("out_dir", args.out_dir.display().to_string()),
    ];
    let header = announce("convert", None, &parts);
    std::fs::create_dir_all(&args.out_dir).map_err(input)?;

    // Duplicate stems would silently overwrite each other's PNG.
    let mut stems: Vec<&std::ffi::OsStr> = files.iter().filter_map(|p| p.file_stem()).collect();
    stems.sort_unstable();
    if stems.windows(2).any(|w| w[0] == w[1]) {
        return Err(input(anyhow!("two inputs share a file stem")));
    }

    let out_dir = &args.out_dir;
    let results: Vec<(usize, Result<String, String>)> = with_jobs(args.jobs, || {
        files
            .par_iter()
            .enumerate()
            .map(|(i, path)| (i, convert_one(path, out_dir)))
            .collect()
    })?;

    let mut log = String::from(header.as_str());
    log.push_str("input\toutput\tsize\twindow\tview\n");
    let mut failures = 0usize;
    for (i, result) in &results {
        match result {
            Ok(line) => {
                log.push_str(line);
                log.push('\n');
            }
            Err(msg) => {
                failures += 1;
                eprintln!("failed {}: {msg}", files[*i].display());
            }
        }
    }
    let log_path = out_dir.join("convert_log.tsv");
    std::fs::write(&log_path, &log).map_err(input)?;
    print!("{}", render_aligned(log.trim_start_matches(&header)));
    println!(
        "converted {} file(s), {failures} failure(s); log: {}",
        results.len() - failures,
        log_path.display()
    );
    if failures > 0 {
        return Err(input(anyhow!(
            "{failures} of {} conversion(s) failed",
            results.len()
        )));
    }
    Ok(())
}
