use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biasaware::commands::{self, CHECKPOINT};
use biasaware::config::{Application, Overrides};
use biasaware::{CliError, Context, ExperimentConfig, Result};
use biasaware_core::household::{Scheme, Variant};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biasaware", version, about = "Simulation-based inference under selection bias")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "BIASAWARE_OUT", default_value = "runs")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Number of datasets / simulations / pairs, overriding the config.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Household inclusion scheme: random, child or adult.
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// Household virus variant: alpha or omicron.
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Fixed epoch (IDM) or round (prevalence), 1-based.
    #[arg(long, global = true)]
    epoch: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw parameter-dataset pairs from the joint model.
    Simulate,
    /// Train the posterior network on fresh simulations.
    Train,
    /// Posterior samples for every dataset in a manifest directory.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Simulation-based calibration.
    Sbc {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Classifier two-sample test of the amortised posterior.
    C2st {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Household MCMC baseline on simulated datasets.
    Mcmc {
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference check of the training gradient.
    Gradcheck {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// simulate, train, sbc and c2st in one go.
    Pipeline,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| format!("unknown scheme '{s}' (random, child, adult)"))
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    match s.to_ascii_lowercase().as_str() {
        "alpha" => Ok(Variant::Alpha),
        "omicron" => Ok(Variant::Omicron),
        _ => Err(format!("unknown variant '{s}' (alpha, omicron)")),
    }
}

fn context(g: &Global) -> Result<Context> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let ov = Overrides {
        seed: g.seed,
        variant: g.variant,
        scheme: g.scheme,
    };
    let cfg = ExperimentConfig::load(path, &ov)?;
    let condition = match cfg.application {
        Application::Household => {
            if g.epoch.is_some() {
                return Err(CliError::Config("--epoch does not apply to the household application".into()));
            }
            cfg.household.scheme.map(|s| s.code() as usize)
        }
        _ => {
            if g.scheme.is_some() || g.variant.is_some() {
                return Err(CliError::Config("--scheme and --variant apply to the household application only".into()));
            }
            match g.epoch {
                Some(0) => return Err(CliError::Config("--epoch is 1-based".into())),
                e => e.map(|e| e - 1),
            }
        }
    };
    Ok(Context {
        cfg,
        out: g.out.clone(),
        n: g.n,
        condition,
    })
}

fn sub(ctx: &Context, dir: &str) -> Context {
    Context {
        cfg: ctx.cfg.clone(),
        out: ctx.out.join(dir),
        n: None,
        condition: ctx.condition,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(w) = cli.global.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
    }
    let ctx = context(&cli.global)?;
    match cli.command {
        Command::Simulate => {
            let m = commands::simulate(&ctx)?;
            eprintln!("wrote {} datasets to {} ({} failures)", m.datasets.len(), ctx.out.display(), m.failures);
        }
        Command::Train => {
            let s = commands::cmd_train(&ctx)?;
            let best = s.report.smoothed_val_loss.last().copied().unwrap_or(f64::NAN);
            eprintln!("trained on {} pairs, best validation loss {best:.4}", s.n_pairs);
        }
        Command::Infer { checkpoint, data } => {
            let rows = commands::cmd_infer(&ctx, &checkpoint, &data)?;
            eprintln!("wrote {} posterior files", rows.len());
        }
        Command::Sbc { checkpoint } => {
            let r = commands::cmd_sbc(&ctx, checkpoint.as_deref())?;
            for c in &r.conditions {
                let out: Vec<&str> = c.verdicts.iter().filter(|v| !v.inside).map(|v| v.param.as_str()).collect();
                eprintln!("{}: {} simulations, outside band: {:?}", c.label, c.ranks.n_sims(), out);
            }
        }
        Command::C2st { checkpoint } => {
            let r = commands::cmd_c2st(&ctx, &checkpoint)?;
            eprintln!("c2st accuracy {:.3}, p = {:.4}", r.result.accuracy, r.result.p_value);
        }
        Command::Mcmc { data } => {
            let s = commands::cmd_mcmc(&ctx, &data)?;
            eprintln!("ran chains on {} datasets", s.len());
        }
        Command::Gradcheck { checkpoint } => {
            let r = commands::cmd_gradcheck(&ctx, checkpoint.as_deref())?;
            eprintln!("gradient check max relative error {:.3e}", r.max_rel_error);
        }
        Command::Pipeline => pipeline(&ctx)?,
    }
    Ok(())
}

fn pipeline(ctx: &Context) -> Result<()> {
    let data = sub(ctx, "data");
    let sim = Context { n: ctx.n.or(Some(ctx.cfg.run.sbc_simulations)), ..sub(ctx, "data") };
    commands::simulate(&sim)?;
    let train = sub(ctx, "train");
    commands::cmd_train(&train)?;
    let ck: &Path = &train.out.join(CHECKPOINT);
    commands::cmd_infer(&sub(ctx, "infer"), ck, &data.out)?;
    commands::cmd_sbc(&sub(ctx, "sbc"), Some(ck))?;
    commands::cmd_c2st(&sub(ctx, "c2st"), ck)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
