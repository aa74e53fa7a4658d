#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gce_core::config::{AcsSchedule, ExperimentConfig, NoiseSpec};
use gce_core::data::{load_csv, synth_blobs, write_csv, write_noisy_csv, CsvData};
use gce_core::experiment::{corrupt_dataset, run_experiment, sweep, write_outputs, SweepSpec};
use gce_core::io::write_atomic;
use gce_core::model::{compare_gradients, Classifier};
use gce_core::rng::{rng_from_seed, stage_seed};
use gce_core::verify::{run_suite, Check, LossProbe, DEFAULT_SEED, GRADCHECK_TOL, KINK_MARGIN};
use gce_core::{Error, LossConfig, LossKind};

/// Noise-robust loss experiments: data synthesis, noise injection, training,
/// sweeps and numeric verification.
#[derive(Parser)]
#[command(name = "gce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Gaussian-blob dataset as CSV.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        c: usize,
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrupt the labels of a CSV dataset.
    Inject {
        #[arg(long)]
        input: PathBuf,
        /// Noise model as JSON, e.g. '{"kind":"uniform","eta":0.4}'.
        #[arg(long)]
        noise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config with plain training.
    Train(RunArgs),
    /// Run an experiment config with alternating prune/train.
    AcsTrain {
        #[command(flatten)]
        run: RunArgs,
        /// Truncation threshold; switches the loss to truncated Lq.
        #[arg(long)]
        k: Option<f64>,
        /// Lq exponent used with `--k`.
        #[arg(long)]
        q: Option<f64>,
    },
    /// Cross noise rates with loss variants and tabulate test accuracy.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        q_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        eta_grid: Vec<f64>,
        /// Loss kinds: cce, mae, lq, truncated_lq, forward_cce.
        #[arg(long, value_delimiter = ',', default_value = "lq")]
        losses: Vec<String>,
        #[arg(long, default_value_t = 0.5)]
        k: f64,
    },
    /// Run numeric checks (all of them by default).
    Verify {
        /// Checks to run, e.g. lq-bounds gradcheck.
        checks: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Directory for one JSON report per check.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference check of one loss on random models.
    Gradcheck {
        /// Loss as JSON, e.g. '{"kind":"lq","q":0.7}'.
        #[arg(long)]
        loss: String,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        c: usize,
        #[arg(long, value_delimiter = ',')]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(r) = self.repetitions {
            cfg.repetitions = r;
        }
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        cfg.validate_static()?;
        Ok(cfg)
    }
}

/// A failed check, reported with exit status 1.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.exit_code() as u8;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth { n, d, c, separation, seed, out } => {
            let ds = synth_blobs(n, d, c, separation, seed)?;
            write_csv(&out, &ds)?;
            println!("wrote {} rows ({d} features, {c} classes) to {}", n, out.display());
        }
        Command::Inject { input, noise, seed, out } => {
            let spec: NoiseSpec = serde_json::from_str(&noise).context("parsing --noise")?;
            let ds = match load_csv(&input)? {
                CsvData::Clean(d) => d,
                CsvData::Noisy(_) => anyhow::bail!(Error::Config(format!(
                    "{} already carries noisy labels",
                    input.display()
                ))),
            };
            let noisy = corrupt_dataset(&ds, &spec, seed)?;
            write_noisy_csv(&out, &noisy)?;
            println!(
                "corrupted {} of {} labels; wrote {}",
                noisy.corrupted_count(),
                noisy.len(),
                out.display()
            );
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            if cfg.acs.is_some() {
                anyhow::bail!(Error::Config("config has an `acs` section; use acs-train".into()));
            }
            run_and_report(&cfg, args.jobs)?;
        }
        Command::AcsTrain { run, k, q } => {
            let mut cfg = run.load()?;
            if let Some(k) = k {
                let q = match (q, &cfg.train.loss) {
                    (Some(q), _) => q,
                    (None, LossConfig::Lq { q } | LossConfig::TruncatedLq { q, .. }) => *q,
                    (None, _) => 0.7,
                };
                cfg.train.loss = LossConfig::truncated_lq(q, k)?;
            } else if q.is_some() {
                anyhow::bail!(Error::Config("--q needs --k".into()));
            }
            if cfg.acs.is_none() {
                cfg.acs = Some(AcsSchedule::default_for(cfg.train.epochs));
            }
            cfg.validate_static()?;
            run_and_report(&cfg, run.jobs)?;
        }
        Command::Sweep { run, q_grid, eta_grid, losses, k } => {
            let cfg = run.load()?;
            let loss_kinds = losses
                .iter()
                .map(|s| s.parse::<LossKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let spec = SweepSpec { q_grid, eta_grid, loss_kinds, k };
            let (table, outcomes) = sweep(&cfg, &spec, run.jobs)?;
            for (dir, outcome) in &outcomes {
                write_outputs(outcome, dir)?;
            }
            let csv = table.to_csv()?;
            write_atomic(&cfg.output_dir.join("sweep.csv"), csv.as_bytes())?;
            let json = serde_json::to_string_pretty(&table)? + "\n";
            write_atomic(&cfg.output_dir.join("sweep.json"), json.as_bytes())?;
            print!("{csv}");
        }
        Command::Verify { checks, seed, out, jobs } => {
            let selected = if checks.is_empty() {
                Check::ALL.to_vec()
            } else {
                checks.iter().map(|s| s.parse()).collect::<Result<Vec<Check>, _>>()?
            };
            let reports = run_suite(&selected, seed, LossProbe::default(), jobs)?;
            let mut failed = Vec::new();
            for r in &reports {
                println!("{:<14} {}", r.check, if r.passed { "PASS" } else { "FAIL" });
                for f in &r.failures {
                    println!("    {f}");
                }
                if !r.passed {
                    failed.push(r.check.clone());
                }
                if let Some(dir) = &out {
                    let text = serde_json::to_string_pretty(r)? + "\n";
                    write_atomic(&dir.join(format!("{}.json", r.check)), text.as_bytes())?;
                }
            }
            if !failed.is_empty() {
                return Err(CheckFailed(format!("failed checks: {}", failed.join(", "))).into());
            }
        }
        Command::Gradcheck { loss, d, c, hidden, cases, seed } => {
            let loss: LossConfig = serde_json::from_str(&loss).context("parsing --loss")?;
            loss.validate(c)?;
            gradcheck(&loss, d, c, &hidden, cases, seed)?;
        }
    }
    Ok(())
}

fn run_and_report(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<()> {
    let outcome = run_experiment(cfg, jobs)?;
    write_outputs(&outcome, &cfg.output_dir)?;
    let s = &outcome.summary;
    println!("config {}", s.config_hash);
    for r in &outcome.records {
        match (&r.error, r.best_val_test_accuracy, r.final_test_accuracy) {
            (Some(e), _, _) => println!("rep {}: failed: {e}", r.repetition),
            (None, Some(b), Some(f)) => println!(
                "rep {}: best-val epoch {} test acc {b:.4}, final test acc {f:.4}",
                r.repetition,
                r.best_val_epoch.unwrap_or(0)
            ),
            _ => println!("rep {}: no epochs run", r.repetition),
        }
    }
    if let (Some(m), Some(sd)) = (s.best_val_test_accuracy.mean, s.best_val_test_accuracy.std) {
        println!("best-val test accuracy {m:.4} ± {sd:.4} over {} runs", s.succeeded);
    }
    println!("outputs in {}", cfg.output_dir.display());
    if s.succeeded == 0 {
        anyhow::bail!(CheckFailed("every repetition failed".into()));
    }
    Ok(())
}

fn gradcheck(loss: &LossConfig, d: usize, c: usize, hidden: &[usize], cases: usize, seed: u64) -> anyhow::Result<()> {
    use rand::Rng;
    let mut rng = rng_from_seed(stage_seed(seed, 0, "gradcheck"));
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut done = 0;
    while done < cases {
        let clf = Classifier::new(d, c, hidden, rng.random())?;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = rng.random_range(0..c);
        if let LossConfig::TruncatedLq { k, .. } = loss {
            if (clf.forward(&x)?.get(y) - k).abs() < KINK_MARGIN {
                skipped += 1;
                continue;
            }
        }
        let (_, analytic) = clf.loss_gradient(&x, y, loss)?;
        let numeric = clf.numeric_gradient(&x, y, |f, j| LossProbe::default().loss(loss, f, j));
        worst = worst.max(compare_gradients(&analytic, &numeric).max_rel_error);
        done += 1;
    }
    println!(
        "{}: max relative error {worst:.3e} over {cases} cases ({skipped} redrawn near the kink)",
        loss.label()
    );
    if !(worst < GRADCHECK_TOL) {
        anyhow::bail!(CheckFailed(format!("relative error {worst:e} >= {GRADCHECK_TOL:e}")));
    }
    Ok(())
}
