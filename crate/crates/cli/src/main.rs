use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invgeo::experiments::{self, ExperimentConfig, Policy};
use invgeo::par;
use serde::Serialize;

/// Model-inversion geometry experiments on synthetic manifolds.
#[derive(Parser, Debug)]
#[command(name = "invgeo", version, about)]
struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set inversion.K=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output root. Falls back to the config's `output_dir`, then to
    /// $INVGEO_OUT, then to ./invgeo-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, default_value_t = 0, global = true)]
    jobs: usize,

    /// Build missing prerequisites (data, models) instead of failing.
    #[arg(long, global = true)]
    train_missing: bool,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the private and auxiliary datasets.
    GenData,
    /// Train the vanilla target and the evaluation classifier.
    TrainTarget,
    /// Train the autoencoder used as a learned tangent source.
    TrainDecoder,
    /// Train the alignment-aware target at `beta`.
    TrainAligned,
    /// Measure training- and inversion-time alignment of the target.
    MeasureAlignment,
    /// Compare vanilla and alignment-aware targets across the beta sweep.
    Hypothesis,
    /// Compare baseline, PAA and TAA attacks.
    AlignmiEval,
    /// Summarize existing experiment reports into report.md.
    Report,
}

fn print<T: Serialize>(v: &T) -> invgeo::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> invgeo::Result<()> {
    let cfg: ExperimentConfig = experiments::load_config(cli.config.as_deref(), &cli.overrides)?;
    let out = cfg.resolve_output(cli.out.as_deref());
    let policy = if cli.train_missing {
        Policy::TrainMissing
    } else {
        Policy::Require
    };
    log::info!("output root {} (config {})", out.display(), cfg.config_hash());
    let jobs = cli.jobs;
    let cmd = cli.command;
    let work = move || match cmd {
        Command::GenData => print(&experiments::cmd_gen_data(&cfg, &out)?),
        Command::TrainTarget => print(&experiments::cmd_train_target(&cfg, &out, policy)?),
        Command::TrainDecoder => print(&experiments::cmd_train_decoder(&cfg, &out, policy)?),
        Command::TrainAligned => print(&experiments::cmd_train_aligned(&cfg, &out, policy)?),
        Command::MeasureAlignment => {
            let r = experiments::cmd_measure_alignment(&cfg, &out, policy)?;
            for x in &r.replicates {
                println!(
                    "seed {}: AS_tr mean {:.4}, AS_inv median {:.4}, sqrt(k/d) {:.4}",
                    x.seed, x.as_tr.mean, x.as_inv.median, x.analytic_baseline
                );
            }
            Ok(())
        }
        Command::Hypothesis => {
            let r = experiments::cmd_hypothesis(&cfg, &out, policy)?;
            for x in &r.replicates {
                println!("seed {} (interior maximum: {})", x.seed, x.interior_maximum);
                for row in &x.rows {
                    println!(
                        "  {:<20} AS_tr {:.4}  test acc {:.4}  Acc@1 {:.4}  KNN {:.4}",
                        row.model, row.as_tr, row.test_acc, row.acc1, row.knn_dist
                    );
                }
            }
            Ok(())
        }
        Command::AlignmiEval => {
            let r = experiments::cmd_alignmi_eval(&cfg, &out, policy)?;
            for x in &r.replicates {
                for (row, t) in x.rows.iter().zip(&x.timing) {
                    println!(
                        "seed {} {:?}: Acc@1 {:.4}  Acc@5 {:.4}  KNN {:.4}  runtime ratio {:.2}",
                        x.seed, row.method, row.acc1, row.acc5, row.knn_dist, t.runtime_ratio
                    );
                }
            }
            Ok(())
        }
        Command::Report => {
            print!("{}", experiments::cmd_report(&out)?);
            Ok(())
        }
    };
    if jobs == 0 {
        work()
    } else {
        par::with_jobs(jobs, work)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiments::exit_code(&e) as u8)
        }
    }
}
