//! Command implementations behind the `equiaudit` binary.

pub mod config;
pub mod demo;

use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use equiaudit_core::audit::{full_paper_audit, ReportBundle};
use equiaudit_core::grid::write_pgm_seeded;
use equiaudit_core::transform::{alignment_admits_invariance, classify, parse_transform, ClassifyOptions};
use equiaudit_core::{Error, Result};
use serde::Serialize;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MISMATCH: i32 = 2;

#[derive(Clone, Copy, Debug, Default)]
pub struct AuditOptions {
    /// Worker threads; the global rayon pool when `None`.
    pub jobs: Option<usize>,
    /// Leave the wall-clock timestamp out of report.json.
    pub deterministic: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_time: Option<u64>,
    config: &'a RunConfig,
    all_consistent: bool,
    exit_code: i32,
    #[serde(flatten)]
    bundle: &'a ReportBundle,
}

/// File-name form of a check name: `alignment/rot:90` → `alignment_rot_90`.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub exit_code: i32,
    pub bundle: ReportBundle,
    pub report_path: PathBuf,
}

/// Runs the audit and writes `report.json`, `curves/*.csv` and
/// `images/*.pgm` under the configured output directory.
pub fn run_audit(cfg: &RunConfig, opts: AuditOptions) -> Result<AuditOutcome> {
    let transforms = cfg.parsed_transforms()?;
    let audit_cfg = cfg.audit_config()?;
    let model = cfg.model_source()?;
    let bundle = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| full_paper_audit(&model, &transforms, &audit_cfg))?,
        None => full_paper_audit(&model, &transforms, &audit_cfg)?,
    };
    let exit_code = if bundle.all_consistent() { EXIT_OK } else { EXIT_MISMATCH };
    let report_path = write_outputs(cfg, &bundle, exit_code, opts.deterministic)?;
    Ok(AuditOutcome {
        exit_code,
        bundle,
        report_path,
    })
}

fn write_outputs(cfg: &RunConfig, bundle: &ReportBundle, exit_code: i32, deterministic: bool) -> Result<PathBuf> {
    let out = &cfg.output_dir;
    let curves = out.join("curves");
    let images = out.join("images");
    fs::create_dir_all(&curves)?;
    fs::create_dir_all(&images)?;
    for check in &bundle.checks {
        let stem = file_stem(&check.name);
        if let Some(curve) = &check.spacing_curve {
            let mut text = String::new();
            let _ = writeln!(text, "# seed: {}", cfg.seed);
            text.push_str(&curve.to_csv());
            fs::write(curves.join(format!("{stem}.csv")), text)?;
        }
        for (label, grid) in &check.images {
            write_pgm_seeded(grid, &images.join(format!("{stem}_{label}.pgm")), Some(cfg.seed))?;
        }
    }
    let generated_unix_time = (!deterministic).then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let report = Report {
        tool: "equiaudit",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        generated_unix_time,
        config: cfg,
        all_consistent: bundle.all_consistent(),
        exit_code,
        bundle,
    };
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Exit code contract: 0 when every transform's observed verdict matches
/// the expected one, 2 on a mismatch, 1 on any configuration or runtime
/// error.
pub fn cmd_audit(config_path: &Path, opts: AuditOptions) -> i32 {
    let result = RunConfig::load(config_path).and_then(|cfg| run_audit(&cfg, opts));
    match result {
        Ok(o) => {
            for t in &o.bundle.transforms {
                println!(
                    "{:<16} {:<28} expected {:<18} observed {:<18} floor {:.3e}",
                    t.spec,
                    t.class.kind.to_string(),
                    format!("{:?}", t.expected),
                    format!("{:?}", t.observed),
                    t.misalignment_floor
                );
            }
            println!("report: {}", o.report_path.display());
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClassifyOutput {
    pub spec: String,
    pub class: equiaudit_core::transform::TransformClass,
    pub admits_invariance: equiaudit_core::transform::InvarianceVerdict,
}

pub fn classify_spec(spec: &str) -> Result<ClassifyOutput> {
    let t = parse_transform(spec)?;
    Ok(ClassifyOutput {
        spec: spec.into(),
        class: classify(&t, &ClassifyOptions::default()),
        admits_invariance: alignment_admits_invariance(&t),
    })
}

/// Prints the class on the first line and the full record as JSON.
pub fn cmd_classify(spec: &str) -> i32 {
    match classify_spec(spec) {
        Ok(out) => {
            // Write errors (a closed pipe) are not failures of the command.
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", out.class.kind);
            if let Ok(s) = serde_json::to_string_pretty(&out) {
                let _ = writeln!(stdout, "{s}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
