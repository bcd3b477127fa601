use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;

use hifinet::config::TrainConfig;
use hifinet::eval::classify_report;
use hifinet::model::HiFiNet;
use hifinet::persist::{self, Checkpoint, RunArtifact};
use hifinet::roadnet::{generate_synthetic, load_network, GeneratorConfig};
use hifinet::spectral::{edge_frequency_report, run_verify_suite, VerifyConfig};
use hifinet::sweep::{run_sweep, worker_threads, write_sweep_csv, SweepSpec};
use hifinet::tensor::Matrix;
use hifinet::training::Trainer;

#[derive(Parser, Debug)]
#[command(name = "hifinet", version, about = "Hierarchical frequency-decomposition embeddings for road networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic network with planted regions to a directory.
    Generate {
        /// toy12, grid10 or grid20
        #[arg(long, default_value = "grid10")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train on a data directory and write a run directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// JSON training config; unknown keys are rejected.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export the reconstructed segment embeddings of a run as CSV.
    Embed {
        #[arg(long)]
        run: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Graph Fourier view of a segment signal, with per-edge frequency labels.
    Spectral {
        /// network.json, or a directory containing one
        #[arg(long)]
        network: PathBuf,
        /// `flow` for the network's flow attribute, otherwise a JSON array file
        #[arg(long, default_value = "flow")]
        signal: String,
        /// Number of eigenvectors in the low band (default ceil(n/10)).
        #[arg(long)]
        low_band: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check the coarsening energy properties on random graphs.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Random signals per graph.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Logistic-regression label classification over an embeddings CSV.
    EvalClassify {
        #[arg(long)]
        embeddings: PathBuf,
        /// Data directory whose network carries the labels.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train over a grid of locality/region counts and tabulate metrics.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n_l: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n_r: Vec<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// A run that finished but whose checks failed.
#[derive(Debug)]
struct CheckFailed;

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("verification failed")
    }
}

impl std::error::Error for CheckFailed {}

fn load_config(path: Option<&Path>) -> anyhow::Result<TrainConfig> {
    match path {
        Some(p) => Ok(TrainConfig::load(p)?),
        None => Ok(TrainConfig::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn generate(preset: &str, seed: u64, out: &Path) -> anyhow::Result<()> {
    let bundle = generate_synthetic(&GeneratorConfig::preset(preset)?, seed)?;
    persist::write_bundle(out, &bundle)?;
    info!(
        "wrote {} segments, {} edges, {} trajectories to {}",
        bundle.network.n_segments(),
        bundle.network.edge_count(),
        bundle.trajectories.len(),
        out.display()
    );
    Ok(())
}

fn train(
    data_dir: &Path,
    out: &Path,
    config: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = persist::load_data_dir(data_dir)?;
    let mut trainer = Trainer::new(&data.network, &data.trajectories, &cfg, cfg.seed)?;
    let (n_s, n_l, n_r) = trainer.model().sizes();
    info!("training N_S={n_s} N_L={n_l} N_R={n_r} d={} for {} epochs", cfg.d, cfg.epochs);
    let trace = trainer.run(cfg.epochs)?;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        info!("total loss {:.4} -> {:.4}", first.total, last.total);
    }
    let run = RunArtifact {
        checkpoint: Checkpoint { seed: cfg.seed, config: cfg, params: trainer.into_params() },
        trace,
        data,
    };
    persist::save_run(out, &run)?;
    info!("run written to {}", out.display());
    Ok(())
}

fn embed(run_dir: &Path, out: &Path) -> anyhow::Result<()> {
    let run = persist::load_run(run_dir)?;
    let model = HiFiNet::new(&run.data.network, &run.checkpoint.config)?;
    let state = model.evaluate(&run.checkpoint.params)?;
    let ids: Vec<usize> = run.data.network.segments().iter().map(|s| s.id).collect();
    persist::save_embeddings(out, &ids, &state.h_hat)?;
    info!("wrote {}x{} embeddings to {}", state.h_hat.rows(), state.h_hat.cols(), out.display());
    Ok(())
}

fn spectral(network: &Path, signal: &str, low_band: Option<usize>, out: Option<&Path>) -> anyhow::Result<()> {
    let path = if network.is_dir() { network.join(persist::NETWORK_FILE) } else { network.to_path_buf() };
    let (net, _) = load_network(&path)?;
    let x: Vec<f64> = if signal == "flow" {
        net.flow().context("network has segments without a flow value")?
    } else {
        let text = fs::read_to_string(signal).with_context(|| format!("reading signal {signal}"))?;
        serde_json::from_str(&text).with_context(|| format!("signal {signal} must be a JSON array of numbers"))?
    };
    let report = edge_frequency_report(&net, &x, low_band)?;
    emit(out, &serde_json::to_string_pretty(&report)?)
}

fn verify(seed: u64, trials: usize, instances: usize, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = VerifyConfig { seed, trials, instances, ..VerifyConfig::default() };
    let report = run_verify_suite(&cfg)?;
    emit(out, &serde_json::to_string_pretty(&report)?)?;
    if !report.passed {
        return Err(CheckFailed.into());
    }
    Ok(())
}

/// Reorders CSV rows so row `i` is segment `i`.
fn align_embeddings(ids: &[usize], emb: &Matrix, n: usize) -> anyhow::Result<Matrix> {
    if ids.len() != n {
        bail!("embeddings cover {} segments, network has {n}", ids.len());
    }
    let mut pos = vec![usize::MAX; n];
    for (row, &id) in ids.iter().enumerate() {
        if id >= n {
            bail!("segment id {id} out of range ({n} segments)");
        }
        if pos[id] != usize::MAX {
            bail!("segment id {id} appears twice");
        }
        pos[id] = row;
    }
    Ok(emb.select_rows(&pos))
}

fn eval_classify(embeddings: &Path, data_dir: &Path, seed: u64, out: Option<&Path>) -> anyhow::Result<()> {
    let (ids, emb) = persist::load_embeddings(embeddings)?;
    let data = persist::load_data_dir(data_dir)?;
    let emb = align_embeddings(&ids, &emb, data.network.n_segments())?;
    let report = classify_report(&emb, &data.labels()?, seed)?;
    info!("macro F1 {:.4}, macro AUC {:.4}", report.macro_f1, report.macro_auc);
    emit(out, &serde_json::to_string_pretty(&report)?)
}

fn sweep(
    data_dir: &Path,
    n_l: &[usize],
    n_r: &[usize],
    config: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let data = persist::load_data_dir(data_dir)?;
    let labels = data.labels()?;
    let spec = SweepSpec {
        network: &data.network,
        trajectories: &data.trajectories,
        labels: &labels,
        base: &cfg,
        n_l,
        n_r,
        epochs: epochs.unwrap_or(cfg.epochs),
        seed: seed.unwrap_or(cfg.seed),
    };
    let threads = worker_threads();
    info!("sweeping {} cells on {threads} thread(s)", n_l.len() * n_r.len());
    let cells = run_sweep(&spec, threads)?;
    let mut f = std::io::BufWriter::new(fs::File::create(out).with_context(|| format!("creating {}", out.display()))?);
    write_sweep_csv(&mut f, &cells)?;
    f.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { preset, seed, out } => generate(&preset, seed, &out),
        Command::Train { data, out, config, epochs, seed } => train(&data, &out, config.as_deref(), epochs, seed),
        Command::Embed { run, out } => embed(&run, &out),
        Command::Spectral { network, signal, low_band, out } => spectral(&network, &signal, low_band, out.as_deref()),
        Command::Verify { seed, trials, instances, out } => verify(seed, trials, instances, out.as_deref()),
        Command::EvalClassify { embeddings, data, seed, out } => {
            eval_classify(&embeddings, &data, seed, out.as_deref())
        }
        Command::Sweep { data, n_l, n_r, config, epochs, seed, out } => {
            sweep(&data, &n_l, &n_r, config.as_deref(), epochs, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 on usage errors and 0 for --help/--version.
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            log::error!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            let usage = matches!(e.downcast_ref::<hifinet::Error>(), Some(hifinet::Error::Config(_)));
            eprintln!("error: {e:#}");
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
