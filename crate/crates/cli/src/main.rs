mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "wristkey", version, about = "Keystroke inference from wrist-worn motion sensors")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the acquisition server until interrupted
    Serve {
        #[arg(long)]
        tcp_addr: Option<String>,
        #[arg(long)]
        http_addr: Option<String>,
        /// Where closed sessions are stored
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Stream a stored session to a running server
    Replay {
        session: PathBuf,
        #[arg(long, default_value = "127.0.0.1:5000")]
        tcp_addr: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        http_addr: String,
        #[arg(long, default_value_t = 64)]
        max_batch: usize,
        /// Session id on the server; defaults to the stored id
        #[arg(long)]
        session_id: Option<String>,
    },
    /// Generate a synthetic session (or a pair with --family-b)
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Also write a session from this template family to <out>/b,
        /// the first one going to <out>/a
        #[arg(long)]
        family_b: Option<u64>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        snr: Option<f64>,
        /// No noise and no sampling jitter
        #[arg(long)]
        noiseless: bool,
    },
    /// Clean a session and store the result
    Preprocess {
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Calibration only
        #[arg(long)]
        raw: bool,
    },
    /// List the segments of a session as JSON lines
    Segment {
        session: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the feature rows of a session as CSV
    Features {
        session: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model on all labelled segments and save it
    Train {
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate on the sessions, or train on them and score --eval
    Evaluate {
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        /// Held-out sessions; switches to the transfer protocol
        #[arg(long = "eval")]
        eval: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect and classify keystrokes in a session, as JSON lines
    Infer {
        #[arg(long = "model-file")]
        model_file: PathBuf,
        session: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the eight fusion strategies
    BenchmarkFusion {
        /// Sessions to use; a synthetic four-key set when empty
        sessions: Vec<PathBuf>,
        #[arg(long)]
        noiseless: bool,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the six hidden layer and feature combinations
    BenchmarkModels {
        /// Sessions to use; a synthetic four-key set when empty
        sessions: Vec<PathBuf>,
        #[arg(long)]
        noiseless: bool,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // Output piped into a reader that stopped early.
        Err(wristkey_core::Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> wristkey_core::Result<()> {
    let cfg = cli.overrides.resolve()?;
    use commands as c;
    match cli.command {
        Command::Serve {
            tcp_addr,
            http_addr,
            data_dir,
        } => c::serve(&cfg, tcp_addr, http_addr, data_dir),
        Command::Replay {
            session,
            tcp_addr,
            http_addr,
            max_batch,
            session_id,
        } => c::replay(&cfg, &session, &tcp_addr, &http_addr, max_batch, session_id),
        Command::Synth {
            out,
            family_b,
            instances,
            snr,
            noiseless,
        } => c::synth(&cfg, &out, family_b, instances, snr, noiseless),
        Command::Preprocess { session, out, raw } => c::preprocess(&cfg, &session, &out, raw),
        Command::Segment { session, out } => c::segment(&cfg, &session, out.as_deref()),
        Command::Features { session, out } => c::features(&cfg, &session, out.as_deref()),
        Command::Train { sessions, out } => c::train(&cfg, &sessions, &out),
        Command::Evaluate { sessions, eval, out } => c::evaluate(&cfg, &sessions, &eval, out.as_deref()),
        Command::Infer {
            model_file,
            session,
            out,
        } => c::infer(&cfg, &model_file, &session, out.as_deref()),
        Command::BenchmarkFusion {
            sessions,
            noiseless,
            format,
            out,
        } => c::benchmark_fusion(&cfg, &sessions, noiseless, format, out.as_deref()),
        Command::BenchmarkModels {
            sessions,
            noiseless,
            format,
            out,
        } => c::benchmark_models(&cfg, &sessions, noiseless, format, out.as_deref()),
    }
}
