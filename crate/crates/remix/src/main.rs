//! Command line front end: train one plan or sweep the relabeling
//! threshold, writing all results as files into an output directory.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use remix::imbalance::{DeferMode, DeferredSchedule, ImbalanceKind, ImbalanceSpec};
use remix::model::{Activation, OptimSpec};
use remix::train::outputs::persist_run;
use remix::train::sweep::{run_tau_sweep, write_sweep_csv};
use remix::train::{run_training, DatasetKind, Method, TrainPlan};
use remix::{Error, Result};

#[derive(Parser)]
#[command(
    name = "remix",
    version,
    about = "Train small classifiers under class imbalance with mixing regularizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training plan and write metrics, confusion matrix,
    /// boundary raster (2D), and the final model into --out.
    Train(PlanArgs),
    /// Train the same remix plan once per τ value and tabulate final
    /// top-1 accuracy into tau_sweep.csv.
    TauSweep(SweepArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Dataset: two_moons, two_circles, two_blobs, or cifar10.
    #[arg(long, default_value = "two_moons")]
    dataset: String,

    /// Imbalance profile: longtail or step.
    #[arg(long, default_value = "step")]
    imbalance: String,

    /// Imbalance ratio: largest class size over smallest.
    #[arg(long, default_value_t = 10.0)]
    rho: f64,

    /// Fraction of classes that are minority under step imbalance.
    #[arg(long, default_value_t = 0.5)]
    mu: f64,

    /// Method: erm, mixup, remix, cutmix, remix_cutmix, manifold_mixup,
    /// or remix_manifold.
    #[arg(long, default_value = "remix")]
    method: String,

    /// Beta(α, α) parameter for the feature mixing factor.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,

    /// Relabeling threshold on the feature factor.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,

    /// Class-count ratio at which one side of a pair counts as majority.
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,

    #[arg(long, default_value_t = 200)]
    epochs: usize,

    #[arg(long, default_value_t = 64)]
    batch_size: usize,

    /// Base learning rate.
    #[arg(long, default_value_t = 0.1)]
    lr: f64,

    #[arg(long, default_value_t = 0.9)]
    momentum: f64,

    #[arg(long, default_value_t = 2e-4)]
    weight_decay: f64,

    /// Learning-rate decay milestones as "epoch:multiplier,..." ("none"
    /// disables decay).
    #[arg(long, default_value = "100:0.1,150:0.1")]
    milestones: String,

    /// Deferred countermeasure: none, drw (re-weighting), or drs
    /// (re-sampling).
    #[arg(long, default_value = "none")]
    defer: String,

    /// First epoch of the deferred phase.
    #[arg(long, default_value_t = 100)]
    defer_epoch: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,

    /// Directory with CIFAR-10 binary batch files (cifar10 only).
    #[arg(long)]
    data_dir: Option<PathBuf>,

    /// Balanced per-class pool size generated before subsampling; also
    /// the size of the largest class after subsampling.
    #[arg(long, default_value_t = 500)]
    n_per_class: usize,

    /// Gaussian noise added by the synthetic generators.
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    plan: PlanArgs,

    /// Comma-separated τ values, one training run each.
    #[arg(long, default_value = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    taus: String,
}

impl PlanArgs {
    fn to_plan(&self) -> Result<TrainPlan> {
        let dataset: DatasetKind = self.dataset.parse()?;
        let classes = if dataset == DatasetKind::Cifar10 { 10 } else { 2 };
        Ok(TrainPlan {
            method: self.method.parse::<Method>()?,
            alpha: self.alpha,
            tau: self.tau,
            kappa: self.kappa,
            per_pair_lambda: false,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optim: OptimSpec {
                learning_rate: self.lr,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                milestones: parse_milestones(&self.milestones)?,
            },
            deferred: DeferredSchedule {
                mode: self.defer.parse::<DeferMode>()?,
                phase_boundary_epoch: self.defer_epoch,
            },
            imbalance: ImbalanceSpec {
                kind: self.imbalance.parse::<ImbalanceKind>()?,
                rho: self.rho,
                mu: self.mu,
                classes,
                n_max: self.n_per_class,
            },
            dataset,
            data_dir: self.data_dir.clone(),
            n_per_class: self.n_per_class,
            noise_sd: self.noise_sd,
            eval_n_per_class: 500,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            seed: self.seed,
            out_dir: Some(self.out.clone()),
        })
    }
}

fn parse_milestones(text: &str) -> Result<Vec<(usize, f64)>> {
    if text.is_empty() || text == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|pair| {
            let (epoch, multiplier) = pair.split_once(':').ok_or_else(|| {
                Error::Parameter(format!(
                    "milestone {pair:?} is not of the form epoch:multiplier"
                ))
            })?;
            let epoch = epoch
                .parse::<usize>()
                .map_err(|e| Error::Parameter(format!("milestone epoch {epoch:?}: {e}")))?;
            let multiplier = multiplier
                .parse::<f64>()
                .map_err(|e| Error::Parameter(format!("milestone multiplier {multiplier:?}: {e}")))?;
            Ok((epoch, multiplier))
        })
        .collect()
}

fn parse_taus(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parameter(format!("tau {t:?}: {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let plan = args.to_plan()?;
            let outcome = run_training(&plan)?;
            persist_run(&outcome, &plan, &args.out)?;
            let last = outcome.final_report();
            println!(
                "{} on {}: top1 {:.4} after {} epochs; outputs in {}",
                plan.method,
                plan.dataset,
                last.top1,
                plan.epochs,
                args.out.display()
            );
        }
        Command::TauSweep(args) => {
            let plan = args.plan.to_plan()?;
            let taus = parse_taus(&args.taus)?;
            let cells = run_tau_sweep(&plan, &taus)?;
            std::fs::create_dir_all(&args.plan.out)
                .map_err(|e| Error::io(&args.plan.out, e))?;
            let table = args.plan.out.join("tau_sweep.csv");
            write_sweep_csv(&cells, &table)?;
            let failed = cells.iter().filter(|c| c.top1.is_none()).count();
            println!(
                "swept {} values of tau ({} failed); table in {}",
                cells.len(),
                failed,
                table.display()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
