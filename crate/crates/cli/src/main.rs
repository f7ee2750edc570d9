use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use inspect_cli::config::ExperimentConfig;
use inspect_cli::{cmd_collect, cmd_eval_bfe, cmd_export_mps, cmd_oracle_check, cmd_run};

/// Data-driven inspection planning harness.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Options shared by every command. Flags override keys of the config file.
#[derive(Args)]
struct Common {
    /// Experiment config (JSON); defaults apply to missing keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed (`seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (`output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Data file (`data.path`).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Mesh path or `bundled:desk_cube` / `bundled:desk_pillar` (`scene.mesh`).
    #[arg(long, global = true)]
    mesh: Option<String>,
    /// Targets JSON path or `bundled:desk_targets` (`scene.targets`).
    #[arg(long, global = true)]
    targets: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate exciting input, simulate the plant, write the data file.
    Collect,
    /// Fly one mission; writes trace.jsonl and summary.json.
    Run {
        /// Disable back-face elimination (`bfe = false`).
        #[arg(long)]
        no_bfe: bool,
        /// Step budget (`mission.max_steps`).
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// BFE on/off study over the FOV sweep; writes study.csv and study.json.
    EvalBfe {
        /// Trials per FOV size (`study.trials`).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Branch-and-bound against enumeration on shrunk instances; writes oracle.json.
    OracleCheck {
        /// Number of instances (`oracle.instances`).
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Write the first planning problem of the mission as MPS.
    ExportMps,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let c = cli.common;
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.out {
        cfg.output_dir = v;
    }
    if let Some(v) = c.data {
        cfg.data.path = v;
    }
    if let Some(v) = c.mesh {
        cfg.scene.mesh = v;
    }
    if let Some(v) = c.targets {
        cfg.scene.targets = v;
    }
    match cli.cmd {
        Cmd::Collect => {
            let r = cmd_collect(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Cmd::Run { no_bfe, max_steps } => {
            cfg.bfe &= !no_bfe;
            if let Some(v) = max_steps {
                cfg.mission.max_steps = v;
            }
            let r = cmd_run(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r.summary)?);
        }
        Cmd::EvalBfe { trials } => {
            if let Some(v) = trials {
                cfg.study.trials = v;
            }
            let r = cmd_eval_bfe(&cfg, &mut |row| {
                eprintln!(
                    "trial {} W={} bfe={} inspected {} visible {}{}",
                    row.trial,
                    row.fov_w,
                    row.bfe,
                    row.inspected,
                    row.visible,
                    row.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
                )
            })?;
            println!("{}", serde_json::to_string_pretty(&r.result.groups)?);
        }
        Cmd::OracleCheck { instances } => {
            if let Some(v) = instances {
                cfg.oracle.instances = v;
            }
            let r = cmd_oracle_check(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            if !r.passed {
                anyhow::bail!("oracle check failed");
            }
        }
        Cmd::ExportMps => {
            let r = cmd_export_mps(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}
