//! `gradflow`: drive gradient-flow simulations and certification audits
//! from config files or built-in presets.

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use gradflow_cli::{config, experiments};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gradflow",
    about = "Gradient flows in metric spaces: solvers, certificates, decay audits",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment config files (concurrently up to
    /// GRADFLOW_WORKERS).
    Run {
        /// Experiment config files.
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Evaluate the closed-form decay prediction for one parameter set.
    Rates {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        e0: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
    },
    /// Build a growth-function certificate from a sample cloud CSV
    /// (header `r,g[,dist]`).
    CertifyKl {
        cloud: PathBuf,
        /// Valley constant (must exceed 1).
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        /// Number of geometric entropy bins.
        #[arg(long, default_value_t = 12)]
        bins: usize,
        /// Entropy band upper edge; defaults to the cloud maximum.
        #[arg(long)]
        r_max: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = "gradflow-out")]
        outdir: String,
    },
    /// Total-variation flow from a preset or a config file.
    Tv {
        /// Boundary variant: dirichlet | neumann.
        variant: String,
        /// Preset name (disc, box, halfbox) or a config file path.
        preset_or_config: String,
        #[arg(long, default_value = "gradflow-out")]
        outdir: String,
    },
    /// Wasserstein flow of a free energy from a preset or a config file.
    Wflow {
        /// Preset name (fokker-planck, porous-medium) or a config path.
        preset_or_config: String,
        #[arg(long, default_value = "gradflow-out")]
        outdir: String,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(all_pass) => std::process::exit(if all_pass { 0 } else { 1 }),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn report_outcomes(outcomes: &[experiments::Outcome]) -> bool {
    let mut all = true;
    for o in outcomes {
        println!(
            "[{}] {} -> {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.dir.display()
        );
        all &= o.pass;
    }
    all
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { configs } => {
            let outcomes = experiments::run_batch(&configs)?;
            Ok(report_outcomes(&outcomes))
        }
        Command::Rates { p, alpha, c, e0, t0 } => {
            let pred = gradflow_core::rates::predict(p, alpha, c, t0, e0)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("{}", serde_json::to_string_pretty(&pred)?);
            Ok(true)
        }
        Command::CertifyKl {
            cloud,
            c,
            bins,
            r_max,
            outdir,
        } => {
            let mut text = format!(
                "[experiment]\nkind = certify-kl\nname = certify\noutdir = {outdir}\n\
                 [instance]\ncloud = {}\n[audit]\nbins = {bins}\nc = {c}\n",
                cloud.display()
            );
            if let Some(r) = r_max {
                text.push_str(&format!("r_max = {r}\n"));
            }
            let cfg = config::Config::parse(&text, "<certify-kl>")?;
            let outcome = experiments::run_config(&cfg)?;
            Ok(report_outcomes(&[outcome]))
        }
        Command::Tv {
            variant,
            preset_or_config,
            outdir,
        } => {
            let kind = match variant.as_str() {
                "dirichlet" => "tv-dirichlet",
                "neumann" => "tv-neumann",
                other => bail!("unknown variant `{other}` (use dirichlet or neumann)"),
            };
            let outcome = if PathBuf::from(&preset_or_config).exists() {
                experiments::run_config_path(&PathBuf::from(&preset_or_config))?
            } else {
                let cfg = experiments::preset_config(kind, &preset_or_config, &outdir)?;
                experiments::run_config(&cfg)?
            };
            Ok(report_outcomes(&[outcome]))
        }
        Command::Wflow {
            preset_or_config,
            outdir,
        } => {
            let outcome = if PathBuf::from(&preset_or_config).exists() {
                experiments::run_config_path(&PathBuf::from(&preset_or_config))?
            } else {
                let cfg = experiments::preset_config("wflow", &preset_or_config, &outdir)?;
                experiments::run_config(&cfg)?
            };
            Ok(report_outcomes(&[outcome]))
        }
    }
}
