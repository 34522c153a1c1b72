use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{ArgGroup, Args};
use imbalml::corpus::{load_dataset, load_texts, DataFormat};
use imbalml::inference::{assign_labels, predict};
use imbalml::metrics::classification_report;
use imbalml::model::infer;
use imbalml::ndarray::Array2;
use imbalml::{
    trainer, EncodedDataset, Error, LabelSpace, Logits, MetricsReport, PredictionPolicy,
    Probabilities,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, load_run};
use crate::cmd_data::resolve_labels;
use crate::cmd_train::{build_report, write_report};

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["run", "predictions"])))]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: Option<PathBuf>,
    /// JSONL predictions with `id`, `probs` and `labels` per row.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Labelled data to score against.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<DataFormat>,
    /// Comma-separated label names when scoring a predictions file; read from
    /// the CSV header otherwise.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Decision threshold. With --predictions, re-derives labels from `probs`.
    #[arg(long)]
    tau: Option<f64>,
    /// Leave rows with no label above the threshold empty.
    #[arg(long)]
    no_fallback: bool,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Also write report.json and report.txt into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    run: PathBuf,
    /// Texts as CSV or JSONL with `id` and `text`, or plain text, one per line.
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    no_fallback: bool,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub probs: Vec<f64>,
    pub labels: Vec<String>,
}

fn policy_from(
    base: PredictionPolicy,
    tau: Option<f64>,
    no_fallback: bool,
) -> Result<PredictionPolicy> {
    Ok(PredictionPolicy::new(
        tau.unwrap_or(base.tau),
        base.fallback && !no_fallback,
    )?)
}

fn format_of(path: &std::path::Path, explicit: Option<DataFormat>) -> DataFormat {
    explicit
        .or_else(|| DataFormat::from_path(path))
        .unwrap_or(DataFormat::Csv)
}

fn read_predictions(path: &std::path::Path) -> Result<Vec<PredictionRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                Error::Parse {
                    row: i + 1,
                    message: e.to_string(),
                }
                .into()
            })
        })
        .collect()
}

/// Aligns predictions to the truth rows by id.
fn predictions_report(args: &EvalArgs, path: &std::path::Path) -> Result<MetricsReport> {
    let space = resolve_labels(args.labels.clone(), &args.data)?;
    let truth = load_dataset(&args.data, format_of(&args.data, args.format), &space)?;
    let rows = read_predictions(path)?;
    let c = space.len();
    let mut by_id: HashMap<&str, &PredictionRow> = HashMap::new();
    for row in &rows {
        if row.probs.len() != c {
            return Err(Error::Schema(format!(
                "prediction `{}` has {} probabilities but there are {c} classes",
                row.id,
                row.probs.len()
            ))
            .into());
        }
        if by_id.insert(row.id.as_str(), row).is_some() {
            return Err(Error::Schema(format!("prediction id `{}` appears twice", row.id)).into());
        }
    }
    if rows.len() != truth.len() {
        return Err(Error::Schema(format!(
            "{} predictions for {} labelled rows",
            rows.len(),
            truth.len()
        ))
        .into());
    }
    let n = truth.len();
    let mut probs = Array2::<f64>::zeros((n, c));
    let mut stored = Array2::<u8>::zeros((n, c));
    for (i, record) in truth.records().iter().enumerate() {
        let row = by_id
            .get(record.id.as_str())
            .ok_or_else(|| Error::Schema(format!("no prediction for id `{}`", record.id)))?;
        for (j, &p) in row.probs.iter().enumerate() {
            probs[[i, j]] = p;
        }
        for name in &row.labels {
            let j = space.index_of(name).ok_or_else(|| {
                Error::Schema(format!(
                    "prediction `{}` names unknown label `{name}`",
                    row.id
                ))
            })?;
            stored[[i, j]] = 1;
        }
    }
    let probs = Probabilities(probs);
    let assigned = if args.tau.is_some() || args.no_fallback {
        let policy = policy_from(PredictionPolicy::default(), args.tau, args.no_fallback)?;
        // Sigmoid is monotone, so the probabilities rank classes like their logits.
        assign_labels(&probs, &Logits(probs.0.clone()), &policy)?.assigned
    } else {
        stored
    };
    let truth_labels = truth.label_matrix();
    match classification_report(assigned.view(), truth_labels.view(), Some(&probs), &space) {
        Err(Error::UndefinedMetric(msg)) if msg.contains("ROC-AUC") => Ok(classification_report(
            assigned.view(),
            truth_labels.view(),
            None,
            &space,
        )?),
        other => Ok(other?),
    }
}

fn run_report(args: &EvalArgs, dir: &std::path::Path) -> Result<MetricsReport> {
    let run = load_run(dir)?;
    let policy = policy_from(run.manifest.train.policy, args.tau, args.no_fallback)?;
    let data = load_dataset(&args.data, format_of(&args.data, args.format), &run.space)?;
    let encoded = EncodedDataset::from_dataset(&data, &run.vocab, run.manifest.encoding.max_len);
    let (set, _) = trainer::evaluate(&run.params, &encoded, &policy)?;
    build_report(&set, &encoded, &run.space)
}

pub fn run_eval(args: &EvalArgs) -> Result<u8> {
    let report = match (&args.run, &args.predictions) {
        (Some(dir), _) => run_report(args, dir)?,
        (None, Some(path)) => predictions_report(args, path)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(out) = &args.out {
        artifacts::create_dir(out)?;
        write_report(out, &report)?;
    }
    if args.json {
        println!("{}", report.to_json()?);
    } else {
        print!("{}", report.render_text());
    }
    Ok(0)
}

pub fn run_predict(args: &PredictArgs) -> Result<u8> {
    let run = load_run(&args.run)?;
    let policy = policy_from(run.manifest.train.policy, args.tau, args.no_fallback)?;
    let inputs = load_texts(&args.input)?;
    let batch = run.vocab.encode_batch(
        inputs.iter().map(|t| t.text.as_str()),
        run.manifest.encoding.max_len,
    );
    let logits = infer(&run.params, &batch)?;
    let set = predict(&logits, &policy)?;
    let mut out = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let row = PredictionRow {
            id: input.id.clone(),
            probs: set.probs.0.row(i).to_vec(),
            labels: label_names(&run.space, set.assigned.row(i).iter().copied()),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.push(b'\n');
    }
    match &args.out {
        Some(path) => std::fs::write(path, out)
            .with_context(|| format!("cannot write `{}`", path.display()))?,
        None => std::io::stdout().write_all(&out)?,
    }
    Ok(0)
}

fn label_names(space: &LabelSpace, row: impl Iterator<Item = u8>) -> Vec<String> {
    row.zip(space.names())
        .filter(|(v, _)| *v == 1)
        .map(|(_, name)| name.clone())
        .collect()
}
