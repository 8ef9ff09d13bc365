//! `mia`: command-line front end for the membership inference toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mia_core::harness::artifact::{attack_saved_target, TargetArtifact};
use mia_core::harness::config::{load_layered, BASE_SEED_ENV};
use mia_core::harness::report::{export_plot_data, read_report, write_report, ExperimentReport, RepetitionStatus};
use mia_core::harness::{run_experiment, run_sweep, DataSource, ExperimentConfig, SweepAxis};
use mia_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mia", version, about = "Membership inference attacks with difficulty calibration")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Built-in defaults.
    Default,
    /// The synthetic overfit benchmark used by the acceptance suite.
    Benchmark,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Scratch,
    Forgetting,
}

/// Configuration layering, lowest precedence first: preset, MIA_BASE_SEED,
/// --config file, --set overrides, then the dedicated flags.
#[derive(Args)]
struct Settings {
    /// Configuration file, one dotted `key=value` per line.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "default")]
    preset: Preset,
    /// Set any configuration field, e.g. `--set target.epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base seed; repetition t uses seed + t.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    /// Target training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Number of reference models.
    #[arg(long, global = true)]
    references: Option<usize>,
    #[arg(long, global = true, value_enum)]
    calibration: Option<Mode>,
    /// Comma-separated score kinds (loss, grad_norm, confidence, entropy,
    /// modified_entropy, merlin, gap).
    #[arg(long, global = true)]
    kinds: Option<String>,
    /// Comma-separated fractions of the member set kept at evaluation.
    #[arg(long, global = true)]
    member_ratios: Option<String>,
    /// Use a CSV file instead of synthetic data.
    #[arg(long, global = true, value_name = "CSV")]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    label_column: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as CSV.
    GenData {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train the target of the first repetition and save it with its split.
    Train {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the full protocol, or attack a target saved by `train`.
    Attack {
        /// Saved target; its recorded data source and split are reused.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Where to write the JSON report.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// One experiment per value along an ablation axis.
    Sweep {
        /// train_size, member_ratio, n_references or shadow_fraction.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Directory receiving one report per value.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Summarize a saved report and optionally export plot data.
    Report {
        path: PathBuf,
        /// Directory for ROC/PR tables, one file per repetition and attack.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
}

impl Settings {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        flag("base_seed", self.seed.map(|v| v.to_string()));
        flag("repetitions", self.repetitions.map(|v| v.to_string()));
        flag("target.epochs", self.epochs.map(|v| v.to_string()));
        flag("calibration.n_reference_models", self.references.map(|v| v.to_string()));
        flag(
            "calibration.mode",
            self.calibration.map(|m| match m {
                Mode::Scratch => "from_scratch".to_string(),
                Mode::Forgetting => "forgetting".to_string(),
            }),
        );
        flag("kinds", self.kinds.clone());
        flag("member_ratios", self.member_ratios.clone());
        if let Some(path) = &self.data {
            flag("data.source", Some("csv".into()));
            flag("data.csv_path", Some(path.display().to_string()));
        }
        flag("data.label_column", self.label_column.clone());
        Ok(pairs)
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match self.preset {
            Preset::Default => ExperimentConfig::default(),
            Preset::Benchmark => ExperimentConfig::overfit_benchmark(),
        };
        let env_seed = std::env::var(BASE_SEED_ENV).ok();
        load_layered(base, self.config.as_deref(), &self.overrides()?, env_seed.as_deref())
    }
}

fn print_summary(report: &ExperimentReport) {
    let total = report.repetitions.len();
    println!("repetitions: {} of {} completed", report.effective_repetitions, total);
    for r in &report.repetitions {
        if let RepetitionStatus::Failed { stage, message } = &r.status {
            println!("  repetition {} (seed {}) failed at {stage}: {message}", r.index, r.seed);
        }
    }
    for (k, s) in &report.model_aggregates {
        println!("{k:<28} {:.4} ± {:.4}", s.mean, s.std);
    }
    let Some(first) = report.aggregates.first() else { return };
    let mut columns = vec!["auc", "accuracy", "best_accuracy", "ppv"];
    columns.extend(first.metrics.keys().filter(|k| k.starts_with("tpr@") || k.starts_with("precision@")).map(String::as_str));
    print!("\n{:<26} {:>6}", "attack", "ratio");
    for c in &columns {
        print!(" {c:>17}");
    }
    println!();
    for a in &report.aggregates {
        print!("{:<26} {:>6}", a.label.to_string(), a.member_ratio);
        for c in &columns {
            match a.metric(c) {
                Some(s) => print!(" {:>17}", format!("{:.3} ± {:.3}", s.mean, s.std)),
                None => print!(" {:>17}", "-"),
            }
        }
        println!();
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.settings.resolve()?;
    match cli.command {
        Command::GenData { out } => {
            if cfg.data.source != DataSource::Synthetic {
                return Err(Error::Config("gen-data needs a synthetic data source".into()));
            }
            let data = cfg.data.load()?;
            data.write_csv(&out)?;
            println!("wrote {} samples with {} features to {}", data.n_samples(), data.n_features(), out.display());
        }
        Command::Train { out } => {
            let artifact = TargetArtifact::train(&cfg)?;
            artifact.write(&out)?;
            println!(
                "trained target on {} members: train accuracy {:.4}, held-out accuracy {:.4}; saved to {}",
                artifact.plan.member_idx.len(),
                artifact.train_accuracy,
                artifact.test_accuracy,
                out.display()
            );
        }
        Command::Attack { target, out } => {
            let report = match target {
                Some(path) => attack_saved_target(&cfg, &TargetArtifact::read(path)?)?,
                None => run_experiment(&cfg)?,
            };
            print_summary(&report);
            if let Some(out) = out {
                write_report(&report, &out)?;
                println!("\nreport written to {}", out.display());
            }
        }
        Command::Sweep { axis, values, out_dir } => {
            let axis: SweepAxis = axis.parse()?;
            let reports = run_sweep(&cfg, axis, &values)?;
            if let Some(dir) = &out_dir {
                std::fs::create_dir_all(dir)?;
            }
            for (report, value) in reports.iter().zip(&values) {
                println!("\n== {axis} = {value}");
                print_summary(report);
                if let Some(dir) = &out_dir {
                    let path = dir.join(format!("{axis}_{value}.json"));
                    write_report(report, &path)?;
                    println!("report written to {}", path.display());
                }
            }
        }
        Command::Report { path, plots } => {
            let report = read_report(&path)?;
            if let Some(a) = report.ablation {
                println!("ablation: {} = {}", a.axis, a.value);
            }
            print_summary(&report);
            if let Some(dir) = plots {
                let files = export_plot_data(&report, &dir)?;
                println!("\nwrote {} plot tables to {}", files.len(), dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not failures; usage errors count
            // as configuration errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
