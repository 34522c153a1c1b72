//! Labelled text corpora: the record model, CSV/JSONL ingestion, train/dev
//! splitting, label statistics and a synthetic imbalanced-corpus generator.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_LABELS: [&str; 5] = ["anger", "fear", "joy", "sadness", "surprise"];

/// Ordered class names. Column `j` of every label matrix is `names[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a label space needs at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(Error::InvalidArgument("class names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate class name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl Default for LabelSpace {
    fn default() -> Self {
        Self {
            names: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    /// One 0/1 entry per class of the owning dataset's label space.
    pub labels: Vec<u8>,
}

/// An immutable collection of labelled records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<Record>,
    space: LabelSpace,
}

impl Dataset {
    pub fn new(records: Vec<Record>, space: LabelSpace) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.labels.len() != space.len() {
                return Err(Error::Schema(format!(
                    "record `{}` has {} labels, expected {}",
                    r.id,
                    r.labels.len(),
                    space.len()
                )));
            }
            if let Some(&bad) = r.labels.iter().find(|&&v| v > 1) {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("label value {bad} is not 0 or 1"),
                });
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Schema(format!("duplicate record id `{}`", r.id)));
            }
        }
        Ok(Self { records, space })
    }

    pub fn empty(space: LabelSpace) -> Self {
        Self {
            records: Vec::new(),
            space,
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.space.len()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }

    /// The `N × C` binary label matrix.
    pub fn label_matrix(&self) -> Array2<u8> {
        let c = self.num_classes();
        Array2::from_shape_fn((self.len(), c), |(i, j)| self.records[i].labels[j])
    }

    /// Label matrix as `f64` targets for the losses.
    pub fn target_matrix(&self) -> Array2<f64> {
        self.label_matrix().mapv(f64::from)
    }

    /// Concatenates two datasets over the same label space.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.space != other.space {
            return Err(Error::Schema("cannot concatenate datasets with different label spaces".into()));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Dataset::new(records, self.space.clone())
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            space: self.space.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DataFormat::Csv),
            "jsonl" | "ndjson" => Some(DataFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown data format `{other}`"))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat, space: &LabelSpace) -> Result<Dataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if content.trim().is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    match format {
        DataFormat::Csv => parse_csv(content.as_bytes(), space),
        DataFormat::Jsonl => parse_jsonl(content.as_bytes(), space),
    }
}

fn parse_label(raw: &str, row: usize, column: &str) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Parse {
            row,
            message: format!("column `{column}` has value `{other}`, expected 0 or 1"),
        }),
    }
}

/// Parses the `id,text,<class...>` CSV dialect. Label columns may appear in
/// any order but must match the label space exactly.
pub fn parse_csv(input: impl std::io::Read, space: &LabelSpace) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let id_col = position("id").ok_or_else(|| Error::Schema("missing column `id`".into()))?;
    let text_col = position("text").ok_or_else(|| Error::Schema("missing column `text`".into()))?;

    let mut label_cols = Vec::with_capacity(space.len());
    for name in space.names() {
        let col = position(name).ok_or_else(|| Error::Schema(format!("missing label column `{name}`")))?;
        label_cols.push(col);
    }
    for (col, header) in headers.iter().enumerate() {
        if col != id_col && col != text_col && !label_cols.contains(&col) {
            return Err(Error::Schema(format!("unexpected column `{header}`")));
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let labels = label_cols
            .iter()
            .zip(space.names())
            .map(|(&col, name)| parse_label(&row[col], row_no, name))
            .collect::<Result<Vec<_>>>()?;
        records.push(Record {
            id: row[id_col].to_string(),
            text: row[text_col].to_string(),
            labels,
        });
    }
    Dataset::new(records, space.clone())
}

/// Parses JSONL objects carrying `id`, `text` and one 0/1 field per class.
pub fn parse_jsonl(input: impl std::io::Read, space: &LabelSpace) -> Result<Dataset> {
    let mut records = Vec::new();
    let reader = BufReader::new(input);
    let mut row_no = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        row_no += 1;
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            row: row_no,
            message: "expected a JSON object".into(),
        })?;
        let string_field = |key: &str| -> Result<String> {
            match obj.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(Value::Number(n)) if key == "id" => Ok(n.to_string()),
                Some(_) => Err(Error::Parse {
                    row: row_no,
                    message: format!("field `{key}` must be a string"),
                }),
                None => Err(Error::Schema(format!("row {row_no}: missing field `{key}`"))),
            }
        };
        let id = string_field("id")?;
        let text = string_field("text")?;
        for key in obj.keys() {
            if key != "id" && key != "text" && space.index_of(key).is_none() {
                return Err(Error::Schema(format!("unexpected field `{key}`")));
            }
        }
        let labels = space
            .names()
            .iter()
            .map(|name| match obj.get(name) {
                Some(Value::Number(n)) => match n.as_u64() {
                    Some(v @ (0 | 1)) => Ok(v as u8),
                    _ => Err(Error::Parse {
                        row: row_no,
                        message: format!("field `{name}` has value `{n}`, expected 0 or 1"),
                    }),
                },
                Some(other) => Err(Error::Parse {
                    row: row_no,
                    message: format!("field `{name}` has value `{other}`, expected 0 or 1"),
                }),
                None => Err(Error::Schema(format!("missing label field `{name}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(Record { id, text, labels });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset("no JSONL records".into()));
    }
    Dataset::new(records, space.clone())
}

pub fn write_csv(data: &Dataset, out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "text".to_string()];
    header.extend(data.space().names().iter().cloned());
    writer.write_record(&header)?;
    for r in data.records() {
        let mut row = vec![r.id.clone(), r.text.clone()];
        row.extend(r.labels.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_jsonl(data: &Dataset, mut out: impl Write) -> Result<()> {
    for r in data.records() {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::String(r.id.clone()));
        obj.insert("text".into(), Value::String(r.text.clone()));
        for (name, &v) in data.space().names().iter().zip(&r.labels) {
            obj.insert(name.clone(), Value::from(v));
        }
        serde_json::to_writer(&mut out, &Value::Object(obj))?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let out = std::io::BufWriter::new(file);
    match format {
        DataFormat::Csv => write_csv(data, out),
        DataFormat::Jsonl => write_jsonl(data, out),
    }
}

fn check_fraction(train_fraction: f64) -> Result<()> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    Ok(())
}

/// Number of training records for a split of `n` records.
///
/// Truncates toward zero, so 70% of 2768 records gives 1937 for training and
/// 831 for development.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    // The small offset absorbs representation error such as 10 * 0.7 = 6.999...
    ((n as f64 * train_fraction + 1e-9).floor() as usize).min(n)
}

/// Seeded uniform shuffle followed by a prefix split.
pub fn split_train_dev(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    check_fraction(train_fraction)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let cut = train_size(data.len(), train_fraction);
    Ok((data.subset(&order[..cut]), data.subset(&order[cut..])))
}

/// Split that shuffles within each distinct label combination and takes the
/// training share from every group separately.
///
/// The training size is the sum of the per-group sizes and can differ from
/// [`train_size`] of the whole dataset by up to the number of groups.
pub fn split_train_dev_stratified(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check_fraction(train_fraction)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty dataset".into()));
    }
    let mut groups: BTreeMap<&[u8], Vec<usize>> = BTreeMap::new();
    for (i, r) in data.records().iter().enumerate() {
        groups.entry(r.labels.as_slice()).or_default().push(i);
    }
    let mut rng = seed::rng(seed);
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let cut = train_size(members.len(), train_fraction);
        train.extend_from_slice(&members[..cut]);
        dev.extend_from_slice(&members[cut..]);
    }
    train.shuffle(&mut rng);
    dev.shuffle(&mut rng);
    Ok((data.subset(&train), data.subset(&dev)))
}

/// An unlabeled input for prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextInput {
    pub id: String,
    pub text: String,
}

/// Reads unlabeled texts. CSV and JSONL need `id` and `text` and ignore
/// other columns; any other extension is read as one text per line with ids
/// `line-<n>` (blank lines skipped).
pub fn load_texts(path: impl AsRef<Path>) -> Result<Vec<TextInput>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let inputs = match DataFormat::from_path(path) {
        Some(DataFormat::Csv) => {
            let mut reader = csv::Reader::from_reader(content.as_bytes());
            let headers = reader.headers()?.clone();
            let column = |name: &str| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
            };
            let (id_col, text_col) = (column("id")?, column("text")?);
            let mut out = Vec::new();
            for row in reader.records() {
                let row = row?;
                out.push(TextInput {
                    id: row[id_col].to_string(),
                    text: row[text_col].to_string(),
                });
            }
            out
        }
        Some(DataFormat::Jsonl) => content
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                #[derive(Deserialize)]
                struct Row {
                    id: Value,
                    text: String,
                }
                let row: Row = serde_json::from_str(l).map_err(|e| Error::Parse {
                    row: i + 1,
                    message: e.to_string(),
                })?;
                let id = match row.id {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                Ok(TextInput { id, text: row.text })
            })
            .collect::<Result<Vec<_>>>()?,
        None => content
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| TextInput {
                id: format!("line-{}", i + 1),
                text: l.to_string(),
            })
            .collect(),
    };
    if inputs.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    Ok(inputs)
}

/// Per-class positive counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFrequencies {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl LabelFrequencies {
    pub fn fractions(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| if self.total == 0 { 0.0 } else { c as f64 / self.total as f64 })
            .collect()
    }
}

pub fn label_frequencies(data: &Dataset) -> LabelFrequencies {
    label_frequencies_of(data.label_matrix().view())
}

/// Column sums of a binary label matrix.
pub fn label_frequencies_of(labels: ArrayView2<u8>) -> LabelFrequencies {
    LabelFrequencies {
        counts: labels.columns().into_iter().map(|c| c.iter().map(|&v| u64::from(v)).sum()).collect(),
        total: labels.nrows() as u64,
    }
}

/// Configuration of the synthetic corpus generator.
///
/// Each record's labels are drawn first, one Bernoulli draw per class. The
/// text then gets one cue token for every positive class (dropped with
/// probability `noise_rate`), a leaked cue for every negative class (with
/// probability `noise_rate`), and a run of filler tokens; the tokens are
/// shuffled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub prevalence: Vec<f64>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Cue vocabulary per class; defaults to `<name>_0`, `<name>_1`, `<name>_2`.
    #[serde(default)]
    pub cue_tokens: Option<Vec<Vec<String>>>,
    #[serde(default = "SynthConfig::default_noise")]
    pub noise_rate: f64,
    #[serde(default = "SynthConfig::default_filler_vocab")]
    pub filler_vocab: usize,
    #[serde(default = "SynthConfig::default_filler_len")]
    pub filler_len: (usize, usize),
}

impl SynthConfig {
    fn default_noise() -> f64 {
        0.05
    }

    fn default_filler_vocab() -> usize {
        200
    }

    fn default_filler_len() -> (usize, usize) {
        (3, 8)
    }

    pub fn new(n: usize, prevalence: Vec<f64>) -> Self {
        Self {
            n,
            prevalence,
            labels: None,
            cue_tokens: None,
            noise_rate: Self::default_noise(),
            filler_vocab: Self::default_filler_vocab(),
            filler_len: Self::default_filler_len(),
        }
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        match &self.labels {
            Some(names) => LabelSpace::new(names.clone()),
            None if self.prevalence.len() == DEFAULT_LABELS.len() => Ok(LabelSpace::default()),
            None => LabelSpace::new((0..self.prevalence.len()).map(|j| format!("class{j}"))),
        }
    }

    fn cues(&self, space: &LabelSpace) -> Result<Vec<Vec<String>>> {
        match &self.cue_tokens {
            Some(cues) => {
                if cues.len() != space.len() || cues.iter().any(|c| c.is_empty()) {
                    return Err(Error::InvalidArgument(
                        "cue_tokens needs one non-empty token list per class".into(),
                    ));
                }
                Ok(cues.clone())
            }
            None => Ok(space
                .names()
                .iter()
                .map(|name| (0..3).map(|k| format!("{name}_{k}")).collect())
                .collect()),
        }
    }
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    if config.n == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs n >= 1".into()));
    }
    if config.prevalence.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("prevalence values must lie in [0, 1]".into()));
    }
    if config.prevalence.iter().all(|&p| p == 0.0) {
        return Err(Error::InvalidArgument("at least one class needs non-zero prevalence".into()));
    }
    if !(0.0..=1.0).contains(&config.noise_rate) {
        return Err(Error::InvalidArgument("noise_rate must lie in [0, 1]".into()));
    }
    let (lo, hi) = config.filler_len;
    if lo > hi || (hi > 0 && config.filler_vocab == 0) {
        return Err(Error::InvalidArgument("invalid filler configuration".into()));
    }
    let space = config.label_space()?;
    if space.len() != config.prevalence.len() {
        return Err(Error::InvalidArgument("labels and prevalence lengths differ".into()));
    }
    let cues = config.cues(&space)?;

    let mut rng = seed::rng(seed);
    let mut records = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let labels: Vec<u8> = config
            .prevalence
            .iter()
            .map(|&p| u8::from(rng.random::<f64>() < p))
            .collect();
        let mut tokens: Vec<String> = Vec::new();
        for (j, &y) in labels.iter().enumerate() {
            let emit = if y == 1 {
                rng.random::<f64>() >= config.noise_rate
            } else {
                rng.random::<f64>() < config.noise_rate
            };
            if emit {
                tokens.push(cues[j][rng.random_range(0..cues[j].len())].clone());
            }
        }
        let fillers = rng.random_range(lo..=hi);
        for _ in 0..fillers {
            tokens.push(format!("w{}", rng.random_range(0..config.filler_vocab)));
        }
        tokens.shuffle(&mut rng);
        records.push(Record {
            id: format!("syn-{i:06}"),
            text: tokens.join(" "),
            labels,
        });
    }
    Dataset::new(records, space)
}
