use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use wristkey_core::eval::{
    benchmark_fusion as bench_fusion, benchmark_models as bench_models, codebook_for, features_for,
    fit_model, infer_session, prepare_segments, run_experiment, ModelKind,
};
use wristkey_core::nn::{load_model, save_model};
use wristkey_core::preprocess::{preprocess_pipeline_traced, PipelineMode};
use wristkey_core::server::{self, ReplayOptions, ServerConfig, SystemClock};
use wristkey_core::synth::{generate_pair, generate_session, SynthConfig};
use wristkey_core::{read_session, write_session, Error, Millis, RecordingSession, Result};

use crate::config::RunConfig;
use crate::Format;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(name: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |e| match e.io_error_kind() {
        Some(kind) => io_err(name)(io::Error::new(kind, e)),
        None => Error::InvalidArgument(e.to_string()),
    }
}

fn csv_err(name: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(name)(source),
        other => Error::InvalidArgument(format!("{other:?}")),
    }
}

/// `path`, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<(Box<dyn Write>, PathBuf)> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(io_err(p))?;
            Ok((Box::new(BufWriter::new(f)), p.to_path_buf()))
        }
        None => Ok((Box::new(BufWriter::new(io::stdout().lock())), PathBuf::from("<stdout>"))),
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let (mut w, name) = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(json_err(&name))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&name))
}

fn write_json_lines<T: Serialize>(items: &[T], path: Option<&Path>) -> Result<()> {
    let (mut w, name) = sink(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(json_err(&name))?;
        writeln!(w).map_err(io_err(&name))?;
    }
    w.flush().map_err(io_err(&name))
}

fn write_csv<T: Serialize>(rows: &[T], path: Option<&Path>) -> Result<()> {
    let (w, name) = sink(path)?;
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(csv_err(&name))?;
    }
    csv.flush().map_err(io_err(&name))
}

fn write_table<T: Serialize>(rows: &[T], format: Format, path: Option<&Path>) -> Result<()> {
    match format {
        Format::Csv => write_csv(rows, path),
        Format::Json => write_json(&rows, path),
    }
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<RecordingSession>> {
    paths.iter().map(|p| read_session(p)).collect()
}

fn model_kind(cfg: &RunConfig) -> ModelKind {
    cfg.model.unwrap_or(ModelKind::RnnLstm)
}

pub fn serve(
    cfg: &RunConfig,
    tcp_addr: Option<String>,
    http_addr: Option<String>,
    data_dir: Option<PathBuf>,
) -> Result<()> {
    let s = &cfg.server;
    let config = ServerConfig {
        tcp_addr: tcp_addr.unwrap_or_else(|| s.tcp_addr.clone()),
        http_addr: http_addr.unwrap_or_else(|| s.http_addr.clone()),
        data_dir: data_dir.unwrap_or_else(|| s.data_dir.clone()),
    };
    std::fs::create_dir_all(&config.data_dir).map_err(io_err(&config.data_dir))?;
    let running = server::spawn(&config, Arc::new(SystemClock))?;
    eprintln!(
        "listening: sessions on tcp://{}, labels and time on http://{}, storing in {}",
        running.tcp_addr,
        running.http_addr,
        config.data_dir.display()
    );
    running.wait();
    Ok(())
}

pub fn replay(
    cfg: &RunConfig,
    session: &Path,
    tcp_addr: &str,
    http_addr: &str,
    max_batch: usize,
    session_id: Option<String>,
) -> Result<()> {
    let options = ReplayOptions {
        seed: cfg.seed.unwrap_or(ReplayOptions::default().seed),
        max_batch,
        session: session_id,
    };
    server::replay_session(session, tcp_addr, http_addr, &options)
}

#[derive(Serialize)]
struct SynthSummary {
    path: PathBuf,
    id: String,
    keystrokes: usize,
    gyroscope_samples: usize,
    accelerometer_samples: usize,
}

impl SynthSummary {
    fn new(path: PathBuf, s: &RecordingSession) -> Self {
        SynthSummary {
            path,
            id: s.id.clone(),
            keystrokes: s.labels.len(),
            gyroscope_samples: s.gyroscope.len(),
            accelerometer_samples: s.accelerometer.len(),
        }
    }
}

pub fn synth(
    cfg: &RunConfig,
    out: &Path,
    family_b: Option<u64>,
    instances: Option<usize>,
    snr: Option<f64>,
    noiseless: bool,
) -> Result<()> {
    let mut sc = cfg.synth.clone();
    if let Some(n) = instances {
        sc.instances = n;
    }
    if let Some(v) = snr {
        sc.snr = v;
    }
    if noiseless {
        sc = sc.noiseless();
    }
    let written = match family_b {
        None => {
            let s = generate_session(&sc)?;
            write_session(&s, out)?;
            vec![SynthSummary::new(out.to_path_buf(), &s)]
        }
        Some(fb) => {
            let (a, b) = generate_pair(&sc, fb)?;
            let (pa, pb) = (out.join("a"), out.join("b"));
            write_session(&a, &pa)?;
            write_session(&b, &pb)?;
            vec![SynthSummary::new(pa, &a), SynthSummary::new(pb, &b)]
        }
    };
    write_json_lines(&written, None)
}

pub fn preprocess(cfg: &RunConfig, session: &Path, out: &Path, raw: bool) -> Result<()> {
    let mut pc = cfg.preprocess.clone();
    if raw {
        pc.mode = PipelineMode::CalibrationOnly;
    }
    let (clean, trace) = preprocess_pipeline_traced(&read_session(session)?, &pc)?;
    write_session(&clean, out)?;
    write_json(&trace, None)
}

#[derive(Serialize)]
struct SegmentLine<'a> {
    center: usize,
    t: Millis,
    label: Option<&'a str>,
}

pub fn segment(cfg: &RunConfig, session: &Path, out: Option<&Path>) -> Result<()> {
    let prepared = prepare_segments(&read_session(session)?, cfg.scheme(), &cfg.experiment())?;
    if let Some(n) = prepared.detected {
        log::info!("{n} peaks detected, {} labelled", prepared.segments.len());
    }
    let lines: Vec<SegmentLine> = prepared
        .segments
        .iter()
        .map(|s| SegmentLine {
            center: s.center,
            t: s.center_t,
            label: s.label.as_deref(),
        })
        .collect();
    write_json_lines(&lines, out)
}

/// One CSV row per segment: the label, then the un-normalized features.
pub fn features(cfg: &RunConfig, session: &Path, out: Option<&Path>) -> Result<()> {
    let s = read_session(session)?;
    let exp = cfg.experiment();
    let codebook = codebook_for(std::slice::from_ref(&s))?;
    let prepared = prepare_segments(&s, cfg.scheme(), &exp)?;
    let m = features_for(&prepared.segments, model_kind(cfg).features(), &codebook, &exp)?;
    let (w, name) = sink(out)?;
    let mut csv = csv::Writer::from_writer(w);
    let header = std::iter::once("label".to_string()).chain((0..m.row_dim()).map(|i| format!("f{i}")));
    csv.write_record(header).map_err(csv_err(&name))?;
    for (i, row) in m.rows.iter().enumerate() {
        let label = codebook.symbol(m.label_index(i)).unwrap_or_default().to_string();
        let record = std::iter::once(label).chain(row.iter().map(|v| v.to_string()));
        csv.write_record(record).map_err(csv_err(&name))?;
    }
    csv.flush().map_err(io_err(&name))
}

#[derive(Serialize)]
struct TrainSummary {
    model: PathBuf,
    topology: String,
    scheme: String,
    labels: Vec<String>,
    epochs: usize,
    final_loss: Option<f64>,
}

pub fn train(cfg: &RunConfig, sessions: &[PathBuf], out: &Path) -> Result<()> {
    let sessions = read_all(sessions)?;
    let scheme = cfg.scheme();
    let (model, trace) = fit_model(&sessions, scheme, model_kind(cfg), &cfg.experiment())?;
    save_model(&model, out)?;
    write_json(
        &TrainSummary {
            model: out.to_path_buf(),
            topology: model.network.topology().to_string(),
            scheme: scheme.to_string(),
            labels: model.codebook.symbols().to_vec(),
            epochs: trace.len(),
            final_loss: trace.last().copied(),
        },
        None,
    )
}

pub fn evaluate(cfg: &RunConfig, sessions: &[PathBuf], eval: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let train = read_all(sessions)?;
    let eval = read_all(eval)?;
    let report = run_experiment(&train, &eval, cfg.scheme(), model_kind(cfg), &cfg.experiment())?;
    write_json(&report, out)
}

pub fn infer(cfg: &RunConfig, model: &Path, session: &Path, out: Option<&Path>) -> Result<()> {
    let model = load_model(model)?;
    if let (Some(asked), Some(trained)) = (cfg.scheme, &model.scheme) {
        if asked.name() != trained {
            return Err(Error::Incompatible(format!(
                "model was trained under scheme {trained}, not {asked}"
            )));
        }
    }
    let predictions = infer_session(&model, &read_session(session)?, &cfg.experiment())?;
    write_json_lines(&predictions, out)
}

/// Four keys, thirty presses each.
fn toy_sessions(cfg: &RunConfig, noiseless: bool) -> Result<Vec<RecordingSession>> {
    let mut sc = SynthConfig {
        instances: 30,
        ..cfg.synth.clone()
    };
    if sc.alphabet.len() < 4 {
        return Err(Error::InvalidArgument("the synthetic toy set needs an alphabet of at least four keys".into()));
    }
    sc.alphabet.truncate(4);
    if noiseless {
        sc = sc.noiseless();
    }
    Ok(vec![generate_session(&sc)?])
}

fn bench_sessions(cfg: &RunConfig, paths: &[PathBuf], noiseless: bool) -> Result<Vec<RecordingSession>> {
    if paths.is_empty() {
        toy_sessions(cfg, noiseless)
    } else {
        read_all(paths)
    }
}

pub fn benchmark_fusion(
    cfg: &RunConfig,
    sessions: &[PathBuf],
    noiseless: bool,
    format: Format,
    out: Option<&Path>,
) -> Result<()> {
    let sessions = bench_sessions(cfg, sessions, noiseless)?;
    let rows = bench_fusion(&sessions, cfg.scheme(), &cfg.experiment())?;
    write_table(&rows, format, out)
}

pub fn benchmark_models(
    cfg: &RunConfig,
    sessions: &[PathBuf],
    noiseless: bool,
    format: Format,
    out: Option<&Path>,
) -> Result<()> {
    let sessions = bench_sessions(cfg, sessions, noiseless)?;
    let rows = bench_models(&sessions, cfg.scheme(), &cfg.experiment())?;
    write_table(&rows, format, out)
}
