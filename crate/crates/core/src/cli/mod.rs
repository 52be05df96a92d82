//! Command-line front end and the file formats it reads and writes.

pub mod apr;
pub mod checkpoint;
pub mod metrics;
pub mod plot;
pub mod psd;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::EnvId;
use crate::trainer::{self, TrainConfig, Trainer};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CHECKPOINT: i32 = 3;
pub const EXIT_METRICS: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_DIR_VAR: &str = "NSAN_OUT_DIR";

/// Name of the resolved-config snapshot written next to the metrics.
pub const CONFIG_SNAPSHOT: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "nsan", version, about = "Noisy spiking actor networks trained with TD3")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a JSON config; flags override file keys.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic evaluation of a saved actor.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the log-log periodogram slope of the noise generator.
    PsdCheck {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 16384)]
        length: usize,
        #[arg(long, default_value_t = 64)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Periodogram CSV destination; defaults to `$NSAN_OUT_DIR/psd.csv`,
        /// or stdout when that is unset.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Average performance ratio of two JSON task → score maps.
    Apr {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// SVG learning curves from metrics files.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Moving-average window in evaluations; 1 plots raw values.
        #[arg(long, default_value_t = plot::DEFAULT_WINDOW)]
        window: usize,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed,
        } => cmd_eval(&checkpoint, &env, episodes, seed),
        Command::PsdCheck {
            beta,
            length,
            draws,
            seed,
            csv,
        } => cmd_psd_check(beta, length, draws, seed, csv),
        Command::Apr { candidate, reference } => cmd_apr(&candidate, &reference),
        Command::Plot { metrics, out, window } => cmd_plot(&metrics, &out, window),
    }
}

/// Reads and validates a run config.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: TrainConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn cmd_train(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> i32 {
    if !path.is_file() {
        eprintln!("error: config file not found: {}", path.display());
        return EXIT_CONFIG;
    }
    let mut config = match load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = seed {
        config.seeds = vec![seed];
    }
    let out = out
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(default_out_dir);
    config.out_dir = Some(out.to_string_lossy().into_owned());
    match train_all(&config, &out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: training failed: {e}");
            EXIT_FAILURE
        }
    }
}

/// Runs every seed of `config` sequentially. A single seed writes straight
/// into `out`; several seeds get one `seed_<n>` subdirectory each.
pub fn train_all(config: &TrainConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(CONFIG_SNAPSHOT), serde_json::to_string_pretty(config)? + "\n")?;
    for &seed in &config.seeds {
        let dir = if config.seeds.len() == 1 {
            out.to_path_buf()
        } else {
            out.join(format!("seed_{seed}"))
        };
        let mut run = Trainer::new(config.clone(), seed)?;
        let rows = run.run(Some(&dir))?;
        if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
            println!(
                "seed {seed}: eval {:.2} -> {:.2} over {} steps ({})",
                first.eval_mean,
                last.eval_mean,
                last.step,
                dir.display()
            );
        }
    }
    Ok(())
}

fn cmd_eval(path: &Path, env: &str, episodes: usize, seed: u64) -> i32 {
    let actor = match checkpoint::load_actor(path) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: cannot load checkpoint {}: {e}", path.display());
            return EXIT_CHECKPOINT;
        }
    };
    let id: EnvId = match env.parse() {
        Ok(id) => id,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let mut env = id.make();
    let spec = env.spec();
    if spec.state_dim != actor.state_dim() || spec.action_dim != actor.action_dim() {
        eprintln!(
            "error: checkpoint expects state/action dims {}/{}, env `{}` has {}/{}",
            actor.state_dim(),
            actor.action_dim(),
            spec.id,
            spec.state_dim,
            spec.action_dim
        );
        return EXIT_CHECKPOINT;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match trainer::evaluate(&actor, &mut env, episodes, &mut rng) {
        Ok((mean, std)) => {
            println!("{mean:.4} ± {std:.4} over {episodes} episodes");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: evaluation failed: {e}");
            EXIT_FAILURE
        }
    }
}

fn cmd_psd_check(beta: f64, length: usize, draws: usize, seed: u64, csv: Option<PathBuf>) -> i32 {
    let report = match psd::psd_check(beta, length, draws, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let csv = csv.or_else(|| std::env::var_os(OUT_DIR_VAR).map(|d| PathBuf::from(d).join("psd.csv")));
    let verdict = if report.within(psd::SLOPE_TOLERANCE) {
        "pass"
    } else {
        "fail"
    };
    let summary = format!(
        "slope {:.4} (target {}, tolerance {}): {verdict}",
        report.slope,
        -beta,
        psd::SLOPE_TOLERANCE
    );
    match csv {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                if let Err(e) = std::fs::create_dir_all(dir) {
                    eprintln!("error: {e}");
                    return EXIT_FAILURE;
                }
            }
            if let Err(e) = std::fs::write(&path, report.to_csv()) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_FAILURE;
            }
            println!("{summary}");
        }
        None => {
            print!("{}", report.to_csv());
            eprintln!("{summary}");
        }
    }
    if verdict == "pass" {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn cmd_apr(candidate: &Path, reference: &Path) -> i32 {
    let result = (|| -> Result<f64> {
        let c = read_scores(candidate)?;
        let r = read_scores(reference)?;
        apr::compute_apr(&c, &r)
    })();
    match result {
        Ok(apr) => {
            println!("APR {apr:.2}%");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn cmd_plot(inputs: &[PathBuf], out: &Path, window: usize) -> i32 {
    if window == 0 {
        eprintln!("error: smoothing window must be >= 1");
        return EXIT_FAILURE;
    }
    let mut series = Vec::with_capacity(inputs.len());
    for path in inputs {
        match metrics::read_csv(path) {
            Ok(rows) => series.push(plot::Series::from_rows(path.display().to_string(), &rows, window)),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return EXIT_METRICS;
            }
        }
    }
    let written = plot::render_svg(&series, window).and_then(|svg| Ok(std::fs::write(out, svg)?));
    match written {
        Ok(()) => EXIT_OK,
        Err(Error::Io(e)) => {
            eprintln!("error: cannot write {}: {e}", out.display());
            EXIT_FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
