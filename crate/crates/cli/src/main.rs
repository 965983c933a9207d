//! `chartloc`: staged pipeline driver. Exit codes: 0 success, 2 validation
//! error, 3 numerical failure.

use chartloc_core::error::Error;
use chartloc_core::pipeline::{
    run_all, stage_baseline, stage_compare, stage_embed, stage_evaluate, stage_featurize,
    stage_simulate, stage_sweep, PipelineConfig,
};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chartloc", version, about = "CSI simulation, feature fusion and semi-supervised localization pipeline")]
struct Cli {
    /// Pipeline config (JSON). Defaults to configs/default.json next to the
    /// current directory if present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overwrite artifacts produced under a different config.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the scene and synthesize the CSI dataset.
    Simulate,
    /// Compute angular profiles and the fused dissimilarity matrix.
    Featurize,
    /// Run the label-constrained embedding.
    Embed {
        /// Restarts with derived seeds; lowest final KL wins.
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Run a baseline localizer (knn or sle).
    Baseline {
        #[arg(value_parser = ["knn", "sle"])]
        method: String,
    },
    /// Score every estimate file present against the ground truth.
    Evaluate,
    /// Re-run the embedding over a parameter range.
    Sweep {
        /// One of: perplexity, learning_rate, momentum, iters.
        param: String,
        /// Comma-separated values, e.g. 5,10,30,100.
        values: String,
    },
    /// Run all methods on the same artifacts and print a ranking.
    Compare {
        /// Comma-separated subset of stsne,knn,sle.
        #[arg(long, default_value = "stsne,knn,sle")]
        methods: String,
    },
    /// simulate -> featurize -> embed -> baselines -> evaluate.
    RunAll,
}

fn load_config(cli: &Cli) -> Result<(PipelineConfig, PathBuf), Error> {
    let path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            let fallback = PathBuf::from("configs/default.json");
            if fallback.exists() {
                fallback
            } else {
                return Err(Error::validation(
                    "no --config given and configs/default.json not found",
                ));
            }
        }
    };
    let mut cfg = PipelineConfig::from_file(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((cfg, base_dir))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let (mut cfg, base_dir) = load_config(cli)?;
    let out = &cli.out;
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Simulate => {
            stage_simulate(&cfg, &base_dir, out, cli.force)?;
            println!("dataset written to {}", out.join("dataset").display());
        }
        Command::Featurize => {
            stage_featurize(&cfg, out, cli.force)?;
            println!("wrote {}", out.join("dissimilarity.csv").display());
        }
        Command::Embed { restarts } => {
            if let Some(r) = restarts {
                cfg.restarts = *r;
            }
            stage_embed(&cfg, out, cli.force)?;
            println!("wrote {}", out.join("embedding.csv").display());
        }
        Command::Baseline { method } => {
            stage_baseline(&cfg, out, method, cli.force)?;
            println!("wrote {}", out.join(format!("baseline_{method}.csv")).display());
        }
        Command::Evaluate => {
            let written = stage_evaluate(&cfg, out, cli.force)?;
            for p in written {
                println!("wrote {}", p.display());
            }
        }
        Command::Sweep { param, values } => {
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::validation(format!("bad sweep value `{v}`: {e}")))
                })
                .collect::<Result<_, _>>()?;
            if values.is_empty() {
                return Err(Error::validation("sweep needs at least one value"));
            }
            let path = stage_sweep(&cfg, out, param, &values, cli.force)?;
            println!("wrote {}", path.display());
        }
        Command::Compare { methods } => {
            let methods: Vec<String> = methods.split(',').map(|m| m.trim().to_string()).collect();
            let path = stage_compare(&cfg, out, &methods, cli.force)?;
            println!("wrote {}", path.display());
            // print the ranking, best MLE first
            let text = std::fs::read_to_string(&path)?;
            let mut rows: Vec<(String, f64)> = text
                .lines()
                .skip(1)
                .filter_map(|l| {
                    let cols: Vec<&str> = l.split(',').collect();
                    cols[2].parse::<f64>().ok().map(|mle| (cols[0].to_string(), mle))
                })
                .collect();
            rows.sort_by(|a, b| a.1.total_cmp(&b.1));
            for (rank, (method, mle)) in rows.iter().enumerate() {
                println!("{}. {method}: MLE = {mle:.3} m", rank + 1);
            }
        }
        Command::RunAll => {
            let written = run_all(&cfg, &base_dir, out, cli.force)?;
            for p in written {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
