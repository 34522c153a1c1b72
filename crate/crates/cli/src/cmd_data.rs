use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use imbalml::corpus::{
    generate_synthetic, label_frequencies, load_dataset, save_dataset, DataFormat,
};
use imbalml::{Error, LabelSpace, MetricsReport, SynthConfig};

use crate::artifacts::Seeds;
use crate::cmd_tune::TuningReport;
use crate::UsageError;

#[derive(Args)]
pub struct SynthArgs {
    /// Generator settings as JSON; replaces --n, --prevalence and --labels.
    #[arg(long, conflicts_with_all = ["n", "prevalence", "labels"])]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated per-class positive rates.
    #[arg(long, value_delimiter = ',')]
    prevalence: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Top-level seed; gives the same corpus as a training config with this seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output file; the format follows the extension unless --format is given.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    format: Option<DataFormat>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<DataFormat>,
    /// Comma-separated label names; read from the CSV header otherwise.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Write `class,count` rows here for plotting.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// A report.json or tuning.json.
    path: PathBuf,
}

/// Explicit names, else every CSV column except `id` and `text`, else the
/// default emotion labels.
pub fn resolve_labels(labels: Option<Vec<String>>, data: &Path) -> Result<LabelSpace> {
    if let Some(names) = labels {
        return Ok(LabelSpace::new(names)?);
    }
    if DataFormat::from_path(data) == Some(DataFormat::Csv) {
        let file = std::fs::File::open(data).map_err(|e| Error::Io {
            path: data.to_path_buf(),
            source: e,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        let names: Vec<String> = reader
            .headers()?
            .iter()
            .filter(|h| *h != "id" && *h != "text")
            .map(str::to_string)
            .collect();
        if names.is_empty() {
            return Err(Error::Schema(format!("`{}` has no label columns", data.display())).into());
        }
        return Ok(LabelSpace::new(names)?);
    }
    Ok(LabelSpace::default())
}

pub fn run_synth(args: &SynthArgs) -> Result<u8> {
    let config = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError(format!("cannot read `{}`: {e}", path.display())))?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| UsageError(format!("`{}`: {e}", path.display())))?
        }
        None => {
            let (Some(n), Some(prevalence)) = (args.n, args.prevalence.clone()) else {
                return Err(
                    UsageError("synth needs --spec, or both --n and --prevalence".into()).into(),
                );
            };
            SynthConfig {
                labels: args.labels.clone(),
                ..SynthConfig::new(n, prevalence)
            }
        }
    };
    let format = args
        .format
        .or_else(|| DataFormat::from_path(&args.out))
        .ok_or_else(|| {
            UsageError(format!(
                "cannot infer a format for `{}`; pass --format",
                args.out.display()
            ))
        })?;
    let data = generate_synthetic(&config, Seeds::expand(args.seed).synth)?;
    save_dataset(&data, &args.out, format)?;
    eprintln!("wrote {} records to {}", data.len(), args.out.display());
    Ok(0)
}

pub fn run_stats(args: &StatsArgs) -> Result<u8> {
    let space = resolve_labels(args.labels.clone(), &args.data)?;
    let format = args
        .format
        .or_else(|| DataFormat::from_path(&args.data))
        .unwrap_or(DataFormat::Csv);
    let data = load_dataset(&args.data, format, &space)?;
    let freq = label_frequencies(&data);
    let width = space
        .names()
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max("class".len());
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<width$}  {:>8}  {:>8}",
        "class", "count", "fraction"
    );
    for ((name, count), frac) in space.names().iter().zip(&freq.counts).zip(freq.fractions()) {
        let _ = writeln!(table, "{name:<width$}  {count:>8}  {frac:>8.4}");
    }
    let _ = writeln!(table, "{:<width$}  {:>8}", "records", freq.total);
    print!("{table}");
    if let Some(path) = &args.csv {
        let mut out = String::from("class,count\n");
        for (name, count) in space.names().iter().zip(&freq.counts) {
            let _ = writeln!(out, "{name},{count}");
        }
        std::fs::write(path, out).with_context(|| format!("cannot write `{}`", path.display()))?;
    }
    Ok(0)
}

pub fn run_report(args: &ReportArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.path)
        .map_err(|e| UsageError(format!("cannot read `{}`: {e}", args.path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("`{}`: {e}", args.path.display())))?;
    if value.get("trials").is_some() {
        let report: TuningReport = serde_json::from_value(value)
            .map_err(|e| Error::Schema(format!("{}: {e}", args.path.display())))?;
        print!("{}", report.render_text());
    } else {
        let report = MetricsReport::from_json(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", args.path.display())))?;
        print!("{}", report.render_text());
    }
    Ok(0)
}
