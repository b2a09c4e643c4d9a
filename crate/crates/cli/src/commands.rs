use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use tokio::sync::mpsc;

use tweetguard_core::api::{BenchRequest, EvalRequest, TuneRequest};
use tweetguard_core::engine::BatchMode;
use tweetguard_core::ingest::{parse_tweet, to_json_line, SourceKind, StreamSource, SyntheticConfig};
use tweetguard_core::jobs::{apply_params, expand_grid, InputSpec, ParamGrid, PushOutcome, RunSummary};

use crate::args::{read_file, BenchArgs, EvalArgs, GenArgs, RunArgs, TuneArgs};
use crate::{connect, Failure};

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("cannot write {}: {e}", path.display()))
}

/// Writes `text` to `path`, or to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

/// Reads a stream file, refusing one without any non-blank line.
fn read_stream(path: &Path) -> Result<String, Failure> {
    let text = read_file(path)?;
    if text.lines().all(|l| l.trim().is_empty()) {
        return Err(Failure::Io(format!("{} is empty", path.display())));
    }
    Ok(text)
}

fn format_summary(s: &RunSummary) -> String {
    let mut out = format!(
        "records {} (parse errors {}), labeled {}, batches {}, {:.0} tweets/s\n",
        s.records, s.parse_errors, s.labeled, s.batches, s.tweets_per_sec
    );
    match &s.metrics {
        Some(m) => {
            out += &format!(
                "cumulative: accuracy {:.4}  precision {:.4}  recall {:.4}  F1 {:.4}\n",
                m.accuracy, m.weighted_precision, m.weighted_recall, m.weighted_f1
            );
            for (i, name) in s.class_names.iter().enumerate() {
                out += &format!(
                    "  {name:<10} precision {:.4}  recall {:.4}  F1 {:.4}  support {}\n",
                    m.precision[i], m.recall[i], m.f1[i], m.support[i]
                );
            }
        }
        None => out += "no labeled posts; metrics undefined\n",
    }
    if let Some(w) = &s.window_metrics {
        out += &format!("last window: accuracy {:.4}  F1 {:.4}\n", w.accuracy, w.weighted_f1);
    }
    out += &format!("alerts {}, sampled {}, model {} bytes (version {}), lexicon {} words\n", s.alerts, s.sampled, s.model_bytes, s.model_version, s.lexicon_size);
    out
}

pub async fn serve(bind: &str) -> Result<(), Failure> {
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| Failure::Io(format!("cannot bind {bind}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| Failure::Io(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    tweetguard_server::serve(listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(|e| Failure::Internal(e.to_string()))
}

pub async fn eval(server: Option<&str>, a: EvalArgs) -> Result<(), Failure> {
    let config = a.pipeline.build()?;
    let text = read_stream(&a.input)?;
    let client = connect(server).await?;
    let r = client.eval(&EvalRequest { config, input: InputSpec::Jsonl(text) }).await?;
    emit(a.output.as_deref(), &r.report_csv)?;
    let summary = if a.json {
        serde_json::to_string_pretty(&r.summary).map_err(|e| Failure::Internal(e.to_string()))? + "\n"
    } else {
        format_summary(&r.summary)
    };
    if a.output.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

pub async fn bench(server: Option<&str>, a: BenchArgs) -> Result<(), Failure> {
    let config = a.pipeline.build()?;
    if a.workers_list.is_empty() || a.workers_list.contains(&0) {
        return Err(Failure::Config("--workers-list needs positive counts".into()));
    }
    let input = match (&a.input, a.synthetic) {
        (Some(p), _) => InputSpec::Jsonl(read_stream(p)?),
        (None, Some(n)) => InputSpec::Synthetic(SyntheticConfig::with_size(n, config.seed)),
        (None, None) => unreachable!("clap requires one of --input/--synthetic"),
    };
    let client = connect(server).await?;
    let r = client.bench(&BenchRequest { config, workers: a.workers_list, input, replay_rate: a.rate }).await?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    emit(a.output.as_deref(), &r.to_csv())
}

pub async fn gen(server: Option<&str>, a: GenArgs) -> Result<(), Failure> {
    let mut cfg = SyntheticConfig::with_size(a.count, a.seed);
    cfg.first_id = a.first_id;
    if let Some(p) = a.priors {
        cfg.class_priors = p;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let client = connect(server).await?;
    let mut text = client.generate(&cfg).await?;
    if a.unlabeled {
        text = text
            .lines()
            .map(|l| parse_tweet(l).map(|t| to_json_line(&tweetguard_core::model::TweetRecord { label: None, ..t }) + "\n"))
            .collect::<Result<String, _>>()
            .map_err(|e| Failure::Internal(format!("service returned a malformed post: {e}")))?;
    }
    emit(a.output.as_deref(), &text)
}

pub async fn tune(server: Option<&str>, a: TuneArgs) -> Result<(), Failure> {
    let config = a.pipeline.build()?;
    let grid: ParamGrid = match &a.grid {
        Some(p) => serde_json::from_str(&read_file(p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => ParamGrid::new(),
    };
    // reject bad grids before reading the stream
    for point in expand_grid(&grid).map_err(|e| Failure::Config(e.to_string()))? {
        apply_params(&config, &point).map_err(|e| Failure::Config(e.to_string()))?;
    }
    let text = read_stream(&a.input)?;
    let client = connect(server).await?;
    let r = client.tune(&TuneRequest { config, grid, input: InputSpec::Jsonl(text) }).await?;
    emit(a.output.as_deref(), &r.to_csv())
}

fn source(spec: &str, rate: f64) -> StreamSource {
    let kind = match spec {
        "-" => SourceKind::Stdin,
        s if s.starts_with("tcp://") => SourceKind::TcpListener(s["tcp://".len()..].to_string()),
        s => SourceKind::File(s.into()),
    };
    StreamSource { kind, replay_rate: rate }
}

enum Feed {
    Line(String),
    Done,
    Failed(String),
}

/// Drains each source on its own thread into one channel.
fn spawn_readers(sources: Vec<StreamSource>) -> (mpsc::Receiver<Feed>, usize) {
    let (tx, rx) = mpsc::channel(8192);
    let n = sources.len();
    for src in sources {
        let tx = tx.clone();
        std::thread::spawn(move || {
            let lines = match src.open() {
                Ok(l) => l,
                Err(e) => {
                    let _ = tx.blocking_send(Feed::Failed(e.to_string()));
                    return;
                }
            };
            for line in lines {
                let msg = match line {
                    Ok(l) => Feed::Line(l),
                    Err(e) => Feed::Failed(format!("read error: {e}")),
                };
                let stop = matches!(msg, Feed::Failed(_));
                if tx.blocking_send(msg).is_err() || stop {
                    return;
                }
            }
            let _ = tx.blocking_send(Feed::Done);
        });
    }
    (rx, n)
}

struct Sinks {
    alerts: Box<dyn Write + Send>,
    samples: Option<BufWriter<File>>,
}

impl Sinks {
    fn write(&mut self, out: &PushOutcome) -> Result<(), Failure> {
        for a in &out.alerts {
            writeln!(self.alerts, "{}", json(a)).map_err(|e| Failure::Io(format!("alerts: {e}")))?;
        }
        self.alerts.flush().map_err(|e| Failure::Io(format!("alerts: {e}")))?;
        if let Some(s) = self.samples.as_mut() {
            for p in &out.sample {
                writeln!(s, "{}", json(p)).map_err(|e| Failure::Io(format!("samples: {e}")))?;
            }
            s.flush().map_err(|e| Failure::Io(format!("samples: {e}")))?;
        }
        Ok(())
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

const CHUNK_LINES: usize = 1024;

pub async fn run(server: Option<&str>, a: RunArgs) -> Result<(), Failure> {
    let config = a.pipeline.build()?;
    let mut sources = vec![source(&a.input, a.rate)];
    if let Some(l) = &a.labeled {
        sources.push(source(l, a.rate));
    }
    for s in &sources {
        s.validate().map_err(|e| Failure::Config(e.to_string()))?;
    }
    let create = |p: &Path| File::create(p).map_err(io_err(p));
    let mut sinks = Sinks {
        alerts: match &a.alerts {
            Some(p) => Box::new(BufWriter::new(create(p)?)),
            None => Box::new(io::stdout()),
        },
        samples: a.samples.as_deref().map(create).transpose()?.map(BufWriter::new),
    };

    let client = connect(server).await?;
    let id = client.create_session(&config).await?;
    let tick = match config.batch {
        BatchMode::IntervalMs(ms) => Duration::from_millis(ms.clamp(10, 1000)),
        BatchMode::Size(_) => Duration::from_millis(250),
    };
    let (mut rx, mut open) = spawn_readers(sources);
    let mut buf: Vec<String> = Vec::with_capacity(CHUNK_LINES);
    let mut ticker = tokio::time::interval(tick);
    let mut failure = None;
    let ctrl_c = tokio::signal::ctrl_c();
    tokio::pin!(ctrl_c);

    while open > 0 {
        tokio::select! {
            msg = rx.recv() => match msg {
                Some(Feed::Line(l)) => {
                    buf.push(l);
                    if buf.len() >= CHUNK_LINES {
                        let out = client.push(&id, std::mem::take(&mut buf).join("\n"), false).await?;
                        sinks.write(&out)?;
                    }
                }
                Some(Feed::Done) => open -= 1,
                Some(Feed::Failed(e)) => {
                    failure = Some(Failure::Io(e));
                    break;
                }
                None => break,
            },
            _ = ticker.tick() => {
                // keeps interval batches moving while the source is quiet
                let out = client.push(&id, std::mem::take(&mut buf).join("\n"), false).await?;
                sinks.write(&out)?;
            }
            _ = &mut ctrl_c => {
                eprintln!("interrupted; flushing the current batch");
                break;
            }
        }
    }

    let out = client.push(&id, std::mem::take(&mut buf).join("\n"), true).await?;
    sinks.write(&out)?;
    let summary = client.summary(&id).await?;
    if let Some(p) = &a.metrics {
        std::fs::write(p, client.report(&id).await?).map_err(io_err(p))?;
    }
    if let Some(p) = &a.model_out {
        std::fs::write(p, client.model(&id).await?).map_err(io_err(p))?;
    }
    client.delete_session(&id).await?;
    eprint!("{}", format_summary(&summary));
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}
