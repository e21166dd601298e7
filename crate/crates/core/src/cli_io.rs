//! File formats and the command implementations behind the `lcpn` binary.
//!
//! Embedding manifest (JSON lines, UTF-8). The first line is a header, each
//! further non-blank line one item:
//!
//! ```text
//! {"format":"lcpn-embeddings/1","dimension":3,"vocabulary":["rock","jazz"]}
//! {"id":"a","labels":["rock"],"embedding":[0.1,-0.2,0.3]}
//! ```
//!
//! Floats are written in shortest round-trip form, so write-then-load is
//! bit-exact. Adapter files are plain text:
//!
//! ```text
//! lcpn-adapter 1
//! <d_in> <d_out>
//! <d_in lines of d_out weights>
//! <one line of d_out biases>
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{run_scaling, ScalingConfig, ScalingReport};
use crate::dataset::Dataset;
use crate::episodic::{split_labels, task_label_pool, EpisodeSpec, LabelSplit, TaskMode};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_adapted, EvalConfig, EvalResult, Method};
use crate::label_space::{LabelSet, LabelVocabulary};
use crate::metrics::format_score;
use crate::prototypes::{EmbeddedItem, DEFAULT_TIE_EPSILON};
use crate::synthgen::{generate, SynthConfig};
use crate::trainer::{train_adapter, AdapterState, TrainConfig, TrainingLog};

pub const MANIFEST_FORMAT: &str = "lcpn-embeddings/1";
const ADAPTER_MAGIC: &str = "lcpn-adapter 1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    format: String,
    dimension: usize,
    vocabulary: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    id: String,
    labels: Vec<String>,
    embedding: Vec<f64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    labels: Vec<&'a str>,
    embedding: &'a [f64],
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn read_header(line: &str, path: &Path) -> Result<(LabelVocabulary, usize)> {
    let header: ManifestHeader =
        serde_json::from_str(line).map_err(|e| parse_err(path, 1, format!("bad header: {e}")))?;
    if header.format != MANIFEST_FORMAT {
        return Err(parse_err(path, 1, format!("unsupported format {:?}", header.format)));
    }
    if header.dimension == 0 {
        return Err(parse_err(path, 1, "dimension must be positive"));
    }
    let vocab = LabelVocabulary::new(header.vocabulary).map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok((vocab, header.dimension))
}

/// Streams a manifest; `path` is only used in error messages.
pub fn read_manifest<R: BufRead>(reader: R, path: &Path) -> Result<Dataset> {
    let mut lines = reader.lines();
    let first = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(path, 1, "empty file, expected header")),
    };
    let (vocab, dim) = read_header(&first, path)?;

    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(&line).map_err(|e| parse_err(path, n, format!("malformed record: {e}")))?;
        if rec.embedding.len() != dim {
            return Err(parse_err(
                path,
                n,
                format!("embedding has {} values, header dimension is {dim}", rec.embedding.len()),
            ));
        }
        if rec.labels.is_empty() {
            return Err(parse_err(path, n, format!("item {:?} has no labels", rec.id)));
        }
        let mut labels = LabelSet::new();
        for name in &rec.labels {
            let c = vocab
                .index_of(name)
                .ok_or_else(|| parse_err(path, n, format!("unknown label {name:?}")))?;
            if labels.contains(c) {
                return Err(parse_err(path, n, format!("label {name:?} listed twice")));
            }
            labels.insert(c);
        }
        if !ids.insert(rec.id.clone()) {
            return Err(parse_err(path, n, format!("duplicate id {:?}", rec.id)));
        }
        items.push(EmbeddedItem::new(rec.id, labels, rec.embedding));
    }
    Dataset::new(vocab, dim, items)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_manifest(open(path)?, path)
}

/// Reads only the header line.
pub fn load_manifest_vocabulary(path: impl AsRef<Path>) -> Result<(LabelVocabulary, usize)> {
    let path = path.as_ref();
    let mut first = String::new();
    open(path)?.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim().is_empty() {
        return Err(parse_err(path, 1, "empty file, expected header"));
    }
    read_header(first.trim_end(), path)
}

pub fn write_manifest<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    let vocab = dataset.vocabulary();
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.to_string(),
        dimension: dataset.dim(),
        vocabulary: vocab.names().to_vec(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for item in dataset.items() {
        let rec = RecordOut {
            id: &item.id,
            labels: item.labels.iter().map(|c| vocab.names()[c].as_str()).collect(),
            embedding: &item.embedding,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_manifest(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_split(split: &LabelSplit, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &split.to_text())
}

pub fn load_split(path: impl AsRef<Path>) -> Result<LabelSplit> {
    let path = path.as_ref();
    LabelSplit::parse(&read_text(path)?).map_err(|(line, message)| parse_err(path, line, message))
}

pub fn adapter_to_text(adapter: &AdapterState) -> String {
    let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut out = format!("{ADAPTER_MAGIC}\n{} {}\n", adapter.d_in(), adapter.d_out());
    for row in adapter.weight().chunks(adapter.d_out()) {
        out.push_str(&join(row));
        out.push('\n');
    }
    out.push_str(&join(adapter.bias()));
    out.push('\n');
    out
}

/// Parses [`adapter_to_text`] output; errors carry 1-based line numbers.
pub fn parse_adapter(text: &str) -> std::result::Result<AdapterState, (usize, String)> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.first().map(|l| l.trim()) != Some(ADAPTER_MAGIC) {
        return Err((1, format!("expected {ADAPTER_MAGIC:?}")));
    }
    let dims: Vec<usize> = lines
        .get(1)
        .ok_or((2, "missing dimension line".to_string()))?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| (2, e.to_string())))
        .collect::<std::result::Result<_, _>>()?;
    let [d_in, d_out] = dims[..] else {
        return Err((2, "expected \"<d_in> <d_out>\"".into()));
    };
    let row = |n: usize| -> std::result::Result<Vec<f64>, (usize, String)> {
        let line = lines.get(n).ok_or((n + 1, "unexpected end of file".to_string()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| (n + 1, format!("{t:?}: {e}"))))
            .collect::<std::result::Result<_, _>>()?;
        if vals.len() != d_out {
            return Err((n + 1, format!("expected {d_out} values, found {}", vals.len())));
        }
        Ok(vals)
    };
    let mut weight = Vec::with_capacity(d_in * d_out);
    for a in 0..d_in {
        weight.extend(row(2 + a)?);
    }
    let bias = row(2 + d_in)?;
    if lines[3 + d_in..].iter().any(|l| !l.trim().is_empty()) {
        return Err((4 + d_in, "trailing content".into()));
    }
    AdapterState::from_parts(d_in, d_out, weight, bias).map_err(|e| (2, e.to_string()))
}

pub fn save_adapter(adapter: &AdapterState, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &adapter_to_text(adapter))
}

pub fn load_adapter(path: impl AsRef<Path>) -> Result<AdapterState> {
    let path = path.as_ref();
    parse_adapter(&read_text(path)?).map_err(|(line, message)| parse_err(path, line, message))
}

pub fn save_training_log(log: &TrainingLog, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &log.to_csv())
}

/// `"30-way 3-shot Base & Novel"`.
pub fn task_title(n_way: usize, k_shot: usize, mode: TaskMode) -> String {
    format!("{n_way}-way {k_shot}-shot {mode}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportHeader {
    pub n_way: usize,
    pub k_shot: usize,
    pub mode: TaskMode,
    pub runs: usize,
    pub n_episodes: usize,
    pub seed: u64,
    pub adapter: Option<String>,
}

/// Table of macro/micro-F1 in percent with 95% half-widths.
pub fn format_report(header: &ReportHeader, result: &EvalResult, timestamp: Option<u64>) -> String {
    let mut out = task_title(header.n_way, header.k_shot, header.mode);
    out.push('\n');
    out.push_str(&format!(
        "runs: {}, episodes per run: {}, seed: {}\n",
        header.runs, header.n_episodes, header.seed
    ));
    if let Some(a) = &header.adapter {
        out.push_str(&format!("adapter: {a}\n"));
    }
    if let Some(t) = timestamp {
        out.push_str(&format!("generated: {t}\n"));
    }
    out.push('\n');
    out.push_str(&format!("{:<16}{:<18}{}\n", "Method", "Macro-F1", "Micro-F1"));
    for s in &result.scores {
        let macro_cell = format_score(s.summary.macro_mean(), s.summary.macro_ci());
        let micro_cell = format_score(s.summary.micro_mean(), s.summary.micro_ci());
        out.push_str(&format!("{:<16}{:<18}{}\n", s.method.to_string(), macro_cell, micro_cell));
    }
    for s in result.scores.iter().filter(|s| s.episodes_with_absent_labels > 0) {
        out.push_str(&format!(
            "note: {}: {} episode(s) had labels absent from truth and prediction, scored as F1 = 0\n",
            s.method, s.episodes_with_absent_labels
        ));
    }
    out
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Base,
    Novel,
    #[value(alias = "base_and_novel")]
    BaseAndNovel,
}

impl From<ModeArg> for TaskMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Base => TaskMode::Base,
            ModeArg::Novel => TaskMode::Novel,
            ModeArg::BaseAndNovel => TaskMode::BaseAndNovel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchFormat {
    Csv,
    Gnuplot,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub labels: usize,
    #[arg(long, default_value_t = 32)]
    pub dimension: usize,
    #[arg(long, default_value_t = 20)]
    pub items_per_label: usize,
    /// Probabilities of 1, 2, 3, ... labels per item.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.3,0.1")]
    pub cardinality: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub cooccurrence_bias: f64,
    #[arg(long, env = "LCPN_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub base: usize,
    #[arg(long, default_value_t = 5)]
    pub holdout: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "LCPN_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Comma-separated methods.
    #[arg(long = "method", value_delimiter = ',', default_value = "lc-protonets,ml-pn,one-vs-rest")]
    pub methods: Vec<Method>,
    #[arg(long, value_enum, default_value_t = ModeArg::Novel)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    pub n_way: usize,
    #[arg(long, default_value_t = 3)]
    pub k_shot: usize,
    #[arg(long, default_value_t = 3)]
    pub n_query: usize,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Adapter applied to every embedding before evaluation.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
    /// ML-PN decision threshold.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_timestamp: bool,
    #[arg(long, env = "LCPN_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Output adapter path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV path.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub n_way: usize,
    #[arg(long, default_value_t = 3)]
    pub k_shot: usize,
    #[arg(long, default_value_t = 3)]
    pub n_query: usize,
    #[arg(long, default_value_t = 50)]
    pub episodes_per_epoch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub validation_episodes: usize,
    #[arg(long, env = "LCPN_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,15,30")]
    pub n_values: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub k_shot: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 100)]
    pub query_batch: usize,
    /// Time the store without merging identical prototypes.
    #[arg(long)]
    pub no_dedup: bool,
    /// Classify the query batch on all cores.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, value_enum, default_value_t = BenchFormat::Csv)]
    pub format: BenchFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "LCPN_SEED", default_value_t = 0)]
    pub seed: u64,
}

/// Writes the manifest and returns a one-line summary.
pub fn cmd_synth(args: &SynthArgs) -> Result<String> {
    let cfg = SynthConfig {
        n_labels: args.labels,
        dimension: args.dimension,
        items_per_label: args.items_per_label,
        cardinality: args.cardinality.clone(),
        noise_sigma: args.noise,
        cooccurrence_bias: args.cooccurrence_bias,
        seed: args.seed,
    };
    let data = generate(&cfg)?;
    save_manifest(&data.dataset, &args.out)?;
    Ok(format!(
        "wrote {} items, {} labels, dimension {} to {}\n",
        data.dataset.len(),
        args.labels,
        args.dimension,
        args.out.display()
    ))
}

pub fn cmd_split_labels(args: &SplitArgs) -> Result<String> {
    let (vocab, _) = load_manifest_vocabulary(&args.manifest)?;
    let split = split_labels(&vocab, args.base, args.holdout, args.seed)?;
    save_split(&split, &args.out)?;
    Ok(format!(
        "base {}, validation {}, novel {} written to {}\n",
        split.base.len(),
        split.validation_holdout.len(),
        split.novel.len(),
        args.out.display()
    ))
}

/// Returns the report text.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String> {
    let dataset = load_manifest(&args.manifest)?;
    let split = load_split(&args.split)?;
    split.validate(dataset.vocabulary())?;
    let adapter = args.adapter.as_ref().map(load_adapter).transpose()?;
    let mode = TaskMode::from(args.mode);
    let pool = task_label_pool(&split, mode, args.n_way, dataset.vocabulary())?;
    let cfg = EvalConfig {
        methods: args.methods.clone(),
        spec: EpisodeSpec::new(args.n_way, args.k_shot, args.n_query, args.seed),
        n_episodes: args.episodes,
        runs: args.runs,
        seed: args.seed,
        tie_epsilon: DEFAULT_TIE_EPSILON,
        mlpn_threshold: args.threshold,
    };
    let result = evaluate_adapted(&dataset, &pool, &cfg, adapter.as_ref())?;
    let header = ReportHeader {
        n_way: args.n_way,
        k_shot: args.k_shot,
        mode,
        runs: args.runs,
        n_episodes: args.episodes,
        seed: args.seed,
        adapter: args.adapter.as_ref().map(|p| p.display().to_string()),
    };
    let report = format_report(&header, &result, (!args.no_timestamp).then(now_unix));
    if let Some(out) = &args.out {
        write_text(out, &report)?;
    }
    Ok(report)
}

/// Trains, writes the adapter (and log), returns the log CSV.
pub fn cmd_train_adapter(args: &TrainArgs) -> Result<String> {
    let dataset = load_manifest(&args.manifest)?;
    let split = load_split(&args.split)?;
    let mut cfg = TrainConfig {
        episodes_per_epoch: args.episodes_per_epoch,
        spec: EpisodeSpec::new(args.n_way, args.k_shot, args.n_query, args.seed),
        patience: args.patience,
        max_epochs: args.max_epochs,
        validation_episodes: args.validation_episodes,
        seed: args.seed,
        ..TrainConfig::default()
    };
    cfg.adam.learning_rate = args.lr;
    let outcome = train_adapter(&dataset, &split, &cfg)?;
    save_adapter(&outcome.adapter, &args.out)?;
    if let Some(log) = &args.log {
        save_training_log(&outcome.log, log)?;
    }
    Ok(outcome.log.to_csv())
}

pub fn bench_report(args: &BenchArgs) -> Result<ScalingReport> {
    let dataset = load_manifest(&args.manifest)?;
    let cfg = ScalingConfig {
        n_values: args.n_values.clone(),
        k_shot: args.k_shot,
        repetitions: args.repetitions,
        query_batch: args.query_batch,
        dedup: !args.no_dedup,
        parallel: args.parallel,
        seed: args.seed,
    };
    run_scaling(&dataset, &cfg)
}

/// Returns the CSV (or gnuplot) table.
pub fn cmd_bench(args: &BenchArgs) -> Result<String> {
    let report = bench_report(args)?;
    let text = match args.format {
        BenchFormat::Csv => report.to_csv(),
        BenchFormat::Gnuplot => report.to_gnuplot(),
    };
    if let Some(out) = &args.out {
        write_text(out, &text)?;
    }
    Ok(text)
}
