use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsa_core::harness::{
    replay, run_experiment_with, sweep, write_metrics_csv, write_summary_csv, Checkpoint, ExperimentConfig,
    IterationMetrics, MetricsWriter,
};
use dsa_core::{DsaError, Result};

#[derive(Parser)]
#[command(name = "dsa", version, about = "Multi-agent dynamic spectrum access simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents and write per-iteration metrics.
    Run {
        config: PathBuf,
        /// Metrics CSV path. Checkpoint and scenario files are written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Train several seeds in parallel and summarize them.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seeds: usize,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Re-run a checkpoint's greedy evaluation and compare it with the stored one.
    Replay {
        checkpoint: PathBuf,
        config: PathBuf,
        /// Write the evaluation as a one-iteration metrics CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn output_dir() -> PathBuf {
    std::env::var_os("DSA_OUTPUT_DIR").map_or_else(|| PathBuf::from("."), PathBuf::from)
}

fn default_csv(config: &ExperimentConfig) -> PathBuf {
    match (&config.output, std::env::var_os("DSA_OUTPUT_DIR")) {
        (Some(p), None) => p.clone(),
        (Some(p), Some(dir)) => PathBuf::from(dir).join(p.file_name().unwrap_or(p.as_os_str())),
        (None, _) => output_dir().join(format!("{}.csv", config.name)),
    }
}

fn sibling(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}{suffix}"))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| DsaError::Io {
            path: dir.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn progress(m: &IterationMetrics) {
    let a = &m.aggregate;
    let eps = m.epsilon.iter().sum::<f64>() / m.epsilon.len().max(1) as f64;
    eprintln!(
        "iter {:>5}  eps {:.3}  success {:.3}  pu {:.3}  su {:.3}  idle {:.3}  reward {:.3}",
        m.iteration, eps, a.success, a.pu_collision, a.su_collision, a.idle, a.mean_reward
    );
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let c = ExperimentConfig::load(path)?;
    c.validate()?;
    Ok(c)
}

fn cmd_run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Result<()> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let csv_path = out.unwrap_or_else(|| default_csv(&cfg));
    create_parent(&csv_path)?;
    let file = std::fs::File::create(&csv_path).map_err(|e| DsaError::io(&csv_path, e))?;
    let mut writer = MetricsWriter::new(file)?;
    let result = run_experiment_with(&cfg, |m| {
        if !quiet {
            progress(m);
        }
        writer.write(m)?;
        writer.flush()
    })?;
    let cp_path = sibling(&csv_path, ".checkpoint.json");
    result.checkpoint.save(&cp_path)?;
    let sc_path = sibling(&csv_path, ".scenario.toml");
    std::fs::write(&sc_path, result.checkpoint.scenario.to_toml_string()?).map_err(|e| DsaError::io(&sc_path, e))?;
    if !quiet {
        let e = &result.checkpoint.evaluation.aggregate;
        eprintln!(
            "greedy evaluation: success {:.3}  pu {:.3}  su {:.3}  idle {:.3}",
            e.success, e.pu_collision, e.su_collision, e.idle
        );
        eprintln!("wrote {}, {}, {}", csv_path.display(), cp_path.display(), sc_path.display());
    }
    Ok(())
}

fn cmd_sweep(config: &Path, seeds: usize, out: Option<PathBuf>, quiet: bool) -> Result<()> {
    let cfg = load(config)?;
    let dir = out.unwrap_or_else(|| output_dir().join(format!("{}_sweep", cfg.name)));
    std::fs::create_dir_all(&dir).map_err(|e| DsaError::io(&dir, e))?;
    let runs = sweep(&cfg, seeds)?;
    for (k, (seed, run)) in runs.iter().enumerate() {
        write_metrics_csv(&dir.join(format!("seed_{k}.csv")), &run.metrics)?;
        run.checkpoint.save(&dir.join(format!("seed_{k}.checkpoint.json")))?;
        if !quiet {
            let e = &run.checkpoint.evaluation.aggregate;
            eprintln!("seed {k} ({seed}): greedy success {:.3}  pu {:.3}", e.success, e.pu_collision);
        }
    }
    let summary = dir.join("summary.csv");
    let file = std::fs::File::create(&summary).map_err(|e| DsaError::io(&summary, e))?;
    let metrics: Vec<&[IterationMetrics]> = runs.iter().map(|(_, r)| r.metrics.as_slice()).collect();
    write_summary_csv(file, &metrics)?;
    if !quiet {
        eprintln!("config hash {}", cfg.config_hash());
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_replay(checkpoint: &Path, config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load(config)?;
    let cp = Checkpoint::load(checkpoint)?;
    let m = replay(&cfg, &cp)?;
    let a = &m.aggregate;
    println!(
        "success {}  pu_collision {}  su_collision {}  idle {}  mean_reward {}",
        a.success, a.pu_collision, a.su_collision, a.idle, a.mean_reward
    );
    if let Some(path) = out {
        create_parent(&path)?;
        write_metrics_csv(&path, std::slice::from_ref(&m))?;
    }
    if m != cp.evaluation {
        return Err(DsaError::Training(
            "replayed evaluation differs from the one stored in the checkpoint".into(),
        ));
    }
    println!("matches stored evaluation");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            quiet,
        } => cmd_run(&config, out, seed, quiet),
        Command::Sweep {
            config,
            seeds,
            out,
            quiet,
        } => cmd_sweep(&config, seeds, out, quiet),
        Command::Replay { checkpoint, config, out } => cmd_replay(&checkpoint, &config, out),
        Command::Validate { config } => load(&config).map(|c| {
            println!("ok: {} ({} hash {})", config.display(), c.name, c.config_hash());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
