use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use semiseg::manifest::Split;
use semiseg::run;

#[derive(Parser)]
#[command(name = "semiseg", version, about = "Semi-supervised segmentation of behavioral time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Run seed; wins over the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip one header row in every input CSV.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct Inference {
    #[command(flatten)]
    common: Common,
    /// Trained model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Which split to process.
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset from a switching linear dynamical system.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on the training split of a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Print one line per epoch.
        #[arg(long)]
        verbose: bool,
    },
    /// Write per-frame class predictions and probabilities.
    Predict(Inference),
    /// Write per-frame latent representations.
    Latents(Inference),
    /// F1, confusion matrix and prediction entropies.
    Evaluate(Inference),
    /// k-means cluster quality of the latents.
    ClusterEval {
        #[command(flatten)]
        inference: Inference,
        /// Comma-separated cluster counts; defaults to K,2K,4K,8K.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
}

fn reject_config(c: &Common, cmd: &str) -> Result<()> {
    if c.config.is_some() || !c.overrides.is_empty() {
        anyhow::bail!("`{cmd}` takes its settings from the checkpoint; --config and --override are not used");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = run::load_sim_config(common.config.as_deref(), &common.overrides, common.seed)?;
            let files = run::simulate_to_dir(&cfg, &common.out)
                .with_context(|| format!("simulating into {}", common.out.display()))?;
            println!("wrote {} files to {}", files.len() + 1, common.out.display());
        }
        Command::Train {
            common,
            manifest,
            verbose,
        } => {
            let cfg = run::load_run_config(common.config.as_deref(), &common.overrides, common.seed)?;
            print!("{}", cfg.to_key_values().to_text());
            let model = run::train_to_dir(&cfg, &manifest, common.header, &common.out, |r| {
                if verbose {
                    eprintln!(
                        "epoch {:>4}  loss {:.6}  recon {:.4}  z_kl {:.4}  y_kl {:.4}  ce {:.4}",
                        r.epoch, r.loss, r.reconstruction, r.z_kl, r.y_kl, r.classification
                    );
                }
            })
            .context("training failed")?;
            if let Some(last) = model.history.last() {
                println!("final loss {:.6}", last.loss);
            }
            println!("checkpoint {}", common.out.join(run::CHECKPOINT).display());
        }
        Command::Predict(i) => {
            reject_config(&i.common, "predict")?;
            let files = run::predict_to_dir(&i.checkpoint, &i.manifest, i.split, i.common.header, &i.common.out)?;
            println!("wrote {} files to {}", files.len(), i.common.out.display());
        }
        Command::Latents(i) => {
            reject_config(&i.common, "latents")?;
            let files = run::latents_to_dir(&i.checkpoint, &i.manifest, i.split, i.common.header, &i.common.out)?;
            println!("wrote {} files to {}", files.len(), i.common.out.display());
        }
        Command::Evaluate(i) => {
            reject_config(&i.common, "evaluate")?;
            let r = run::evaluate_to_dir(&i.checkpoint, &i.manifest, i.split, i.common.header, &i.common.out)?;
            println!("macro_f1 = {}", r.macro_f1);
        }
        Command::ClusterEval { inference: i, grid } => {
            reject_config(&i.common, "cluster-eval")?;
            let r = run::cluster_eval_to_dir(
                &i.checkpoint,
                &i.manifest,
                i.split,
                grid,
                i.common.seed.unwrap_or(0),
                i.common.header,
                &i.common.out,
            )?;
            for (k, h) in r.n_clusters.iter().zip(&r.homogeneity) {
                println!("n_clusters {k}: homogeneity {h:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
