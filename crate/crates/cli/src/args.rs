use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use tweetguard_core::engine::{BatchMode, PipelineConfig};
use tweetguard_core::learners::ClassifierKind;
use tweetguard_core::model::ClassScheme;
use tweetguard_core::normalize::NormalizationMode;

use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "tweetguard", version, about = "Streaming detection of aggressive posts")]
pub struct Cli {
    /// Use a running service instead of starting an embedded one.
    #[arg(long, global = true, value_name = "URL")]
    pub server: Option<String>,

    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP/JSON API until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Classify a live stream, emitting alerts and samples as batches complete.
    Run(RunArgs),
    /// Prequential evaluation of a labeled stream.
    Eval(EvalArgs),
    /// Throughput for each worker count.
    Bench(BenchArgs),
    /// Write a synthetic labeled stream.
    Gen(GenArgs),
    /// Grid search over pipeline parameters.
    Tune(TuneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        s == Switch::On
    }
}

fn parse_normalize(s: &str) -> Result<NormalizationMode, String> {
    s.parse()
}

fn parse_classifier(s: &str) -> Result<ClassifierKind, String> {
    s.parse()
}

/// Pipeline settings shared by every stream-processing command. Flags
/// override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// TOML or JSON pipeline configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// ht, arf or slr.
    #[arg(long, value_parser = parse_classifier)]
    pub classifier: Option<ClassifierKind>,
    /// 2 (normal/aggressive) or 3 (normal/abusive/hateful).
    #[arg(long)]
    pub classes: Option<u8>,
    #[arg(long, value_enum)]
    pub preprocess: Option<Switch>,
    /// off, minmax, minmax-no-outliers or zscore.
    #[arg(long, value_parser = parse_normalize)]
    pub normalize: Option<NormalizationMode>,
    #[arg(long, value_enum)]
    pub adaptive_bow: Option<Switch>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Records per micro-batch.
    #[arg(long, conflicts_with = "batch_interval_ms")]
    pub batch_size: Option<usize>,
    /// Cut micro-batches by wall-clock time instead of size.
    #[arg(long)]
    pub batch_interval_ms: Option<u64>,
    #[arg(long)]
    pub alert_threshold: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub boost_factor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed normalization statistics (JSON keyed by feature name or index).
    #[arg(long, value_name = "FILE")]
    pub stats: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub swear_lexicon: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub sentiment_lexicon: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub pos_lexicon: Option<PathBuf>,
}

pub fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

impl PipelineArgs {
    /// Resolved and validated configuration.
    pub fn build(&self) -> Result<PipelineConfig, Failure> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_text(&read_file(p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.classifier {
            c.classifier = v;
        }
        if let Some(n) = self.classes {
            c.classes = ClassScheme::from_count(n).ok_or_else(|| Failure::Config(format!("--classes must be 2 or 3, got {n}")))?;
        }
        if let Some(v) = self.preprocess {
            c.preprocess = v.into();
        }
        if let Some(v) = self.normalize {
            c.normalize = v;
        }
        if let Some(v) = self.adaptive_bow {
            c.adaptive_bow = v.into();
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = self.batch_size {
            c.batch = BatchMode::Size(v);
        }
        if let Some(v) = self.batch_interval_ms {
            c.batch = BatchMode::IntervalMs(v);
        }
        if let Some(v) = self.alert_threshold {
            c.alert_threshold = v;
        }
        if let Some(v) = self.sample_rate {
            c.sample_rate = v;
        }
        if let Some(v) = self.boost_factor {
            c.boost_factor = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(p) = &self.stats {
            c.stats = Some(read_file(p)?);
        }
        if let Some(p) = &self.swear_lexicon {
            c.lexicons.swear = Some(read_file(p)?);
        }
        if let Some(p) = &self.sentiment_lexicon {
            c.lexicons.sentiment = Some(read_file(p)?);
        }
        if let Some(p) = &self.pos_lexicon {
            c.lexicons.pos = Some(read_file(p)?);
        }
        c.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Stream to classify: a file, `-` for stdin, or `tcp://HOST:PORT` to listen.
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Additional stream of labeled posts used for training.
    #[arg(long)]
    pub labeled: Option<String>,
    /// Replay rate in posts per second per stream (0 = as fast as possible).
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Alerts as JSON lines (default: stdout).
    #[arg(long, value_name = "FILE")]
    pub alerts: Option<PathBuf>,
    /// Boosted random sample as JSON lines.
    #[arg(long, value_name = "FILE")]
    pub samples: Option<PathBuf>,
    /// Metrics CSV written on exit.
    #[arg(long, value_name = "FILE")]
    pub metrics: Option<PathBuf>,
    /// Serialized model written on exit.
    #[arg(long, value_name = "FILE")]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Labeled stream (JSON lines).
    #[arg(long)]
    pub input: PathBuf,
    /// Metrics CSV (default: stdout, with the summary on stderr).
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Print the final summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Stream to replay (JSON lines).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Generate this many synthetic posts instead of reading a file.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Worker counts to compare.
    #[arg(long = "workers-list", value_delimiter = ',', default_value = "1,8")]
    pub workers_list: Vec<usize>,
    /// Source rate limit; benchmarks ignore it and warn.
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Id of the first post.
    #[arg(long, default_value_t = 0)]
    pub first_id: u64,
    /// Class priors normal,abusive,hateful.
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<f64>>,
    /// Strip labels from the output.
    #[arg(long)]
    pub unlabeled: bool,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Labeled stream (JSON lines).
    #[arg(long)]
    pub input: PathBuf,
    /// JSON object mapping parameter names to candidate lists; omit to score
    /// the defaults alone.
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}
