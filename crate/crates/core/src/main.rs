use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grl_asr::harness::run::RunDir;
use grl_asr::harness::{ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "grl-asr", version, about = "Adversarial domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults to the run directory's snapshot.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for all inputs and outputs.
    #[arg(long)]
    run_dir: PathBuf,
    /// Config override, `dotted.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpora.
    GenData(Common),
    /// Stage one: supervised training on the source domain.
    Train(Common),
    /// Stage two: adversarial adaptation, once per seed.
    Adapt(Common),
    /// Evaluate stage-one and adapted models on the target test split.
    Eval(Common),
    /// Lambda by feature-layer grid.
    Grid(Common),
    /// Adaptation-data sweeps (source and cross language).
    Sweep(Common),
    /// Re-render stored tables and check them against their CSV files.
    Report(Common),
}

fn open(c: &Common) -> Result<RunDir, HarnessError> {
    let cfg = match (&c.config, c.overrides.is_empty()) {
        (Some(p), _) => Some(ExperimentConfig::load(p)?),
        (None, false) => {
            let snap = c.run_dir.join("config.toml");
            Some(if snap.exists() {
                ExperimentConfig::load(&snap)?
            } else {
                ExperimentConfig::default()
            })
        }
        (None, true) if !c.run_dir.join("config.toml").exists() => Some(ExperimentConfig::default()),
        (None, true) => None,
    };
    let cfg = match cfg {
        Some(mut cfg) => {
            cfg.apply(&c.overrides)?;
            Some(cfg)
        }
        None => None,
    };
    RunDir::open(cfg, &c.run_dir, c.force)
}

fn run(cli: Cli) -> Result<String, HarnessError> {
    Ok(match cli.command {
        Command::GenData(c) => {
            let corpora = open(&c)?.gen_data()?;
            let hours: Vec<String> = corpora
                .splits()
                .iter()
                .map(|d| format!("{:.3}", d.hours_equivalent()))
                .collect();
            format!("corpora written (hours per split: {})", hours.join(", "))
        }
        Command::Train(c) => {
            let s1 = open(&c)?.train()?;
            let last = s1.records.last().map_or(f64::NAN, |r| r.senone_acc_valid);
            format!("stage one: {} epochs, validation accuracy {last:.4}", s1.records.len())
        }
        Command::Adapt(c) => open(&c)?.adapt()?.render()?,
        Command::Eval(c) => serde_json::to_string_pretty(&open(&c)?.eval()?).expect("serializes"),
        Command::Grid(c) => open(&c)?.grid()?.render()?,
        Command::Sweep(c) => {
            let mut out = String::new();
            for t in open(&c)?.sweep()? {
                out.push_str(&t.render()?);
            }
            out
        }
        Command::Report(c) => open(&c)?.report()?,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            println!("{}", text.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
