//! File emission for finished runs: metrics and confusion CSVs, the
//! resolved plan echo, the serialized model, and for 2D runs the decision
//! boundary raster and training points.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model_io::save_model;
use crate::train::boundary::{
    dataset_bounds, export_boundary_raster, write_boundary_csv, write_boundary_pgm,
};
use crate::train::{EvalReport, TrainPlan, TrainedRun};

/// Grid resolution of the boundary raster written by [`persist_run`].
pub const BOUNDARY_RESOLUTION: usize = 200;

/// Write one row per epoch: `epoch,top1,recall_0,…,recall_{C-1}`.
pub fn write_metrics_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Data("no evaluation reports to write".into()))?;
    let classes = first.per_class_recall.len();
    let mut out = String::from("epoch,top1");
    for c in 0..classes {
        out.push_str(&format!(",recall_{c}"));
    }
    out.push('\n');
    for report in reports {
        out.push_str(&format!("{},{}", report.epoch, report.top1));
        for r in &report.per_class_recall {
            out.push_str(&format!(",{r}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write a confusion matrix as CSV, one row per true class.
pub fn write_confusion_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let classes = report.confusion.len();
    let mut out = String::from("true_class");
    for c in 0..classes {
        out.push_str(&format!(",pred_{c}"));
    }
    out.push('\n');
    for (i, row) in report.confusion.iter().enumerate() {
        out.push_str(&i.to_string());
        for count in row {
            out.push_str(&format!(",{count}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Echo the fully resolved plan as `key=value` lines.
pub fn write_plan_txt(plan: &TrainPlan, path: &Path) -> Result<()> {
    fs::write(path, plan_text(plan)).map_err(|e| Error::io(path, e))
}

fn plan_text(plan: &TrainPlan) -> String {
    let milestones = if plan.optim.milestones.is_empty() {
        "none".to_string()
    } else {
        plan.optim
            .milestones
            .iter()
            .map(|(e, m)| format!("{e}:{m}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let hidden = plan
        .hidden
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let data_dir = plan
        .data_dir
        .as_ref()
        .map_or("none".to_string(), |p| p.display().to_string());
    format!(
        "method={}\n\
         dataset={}\n\
         imbalance={}\n\
         rho={}\n\
         mu={}\n\
         classes={}\n\
         n_max={}\n\
         n_per_class={}\n\
         eval_n_per_class={}\n\
         noise_sd={}\n\
         alpha={}\n\
         tau={}\n\
         kappa={}\n\
         per_pair_lambda={}\n\
         epochs={}\n\
         batch_size={}\n\
         lr={}\n\
         momentum={}\n\
         weight_decay={}\n\
         milestones={}\n\
         defer={}\n\
         defer_epoch={}\n\
         hidden={}\n\
         activation={}\n\
         seed={}\n\
         data_dir={}\n",
        plan.method,
        plan.dataset,
        plan.imbalance.kind,
        plan.imbalance.rho,
        plan.imbalance.mu,
        plan.imbalance.classes,
        plan.imbalance.n_max,
        plan.n_per_class,
        plan.eval_n_per_class,
        plan.noise_sd,
        plan.alpha,
        plan.tau,
        plan.kappa,
        plan.per_pair_lambda,
        plan.epochs,
        plan.batch_size,
        plan.optim.learning_rate,
        plan.optim.momentum,
        plan.optim.weight_decay,
        milestones,
        plan.deferred.mode,
        plan.deferred.phase_boundary_epoch,
        hidden,
        plan.activation,
        plan.seed,
        data_dir,
    )
}

/// Write everything a run produces into `dir`: `plan.txt`, `metrics.csv`,
/// `confusion_final.csv`, `model.rmxm`, and for 2D runs `boundary.csv`,
/// `boundary.pgm`, and `train_points.csv`.
pub fn persist_run(run: &TrainedRun, plan: &TrainPlan, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_plan_txt(plan, &dir.join("plan.txt"))?;
    write_metrics_csv(&run.reports, &dir.join("metrics.csv"))?;
    write_confusion_csv(run.final_report(), &dir.join("confusion_final.csv"))?;
    save_model(&run.state, &dir.join("model.rmxm"))?;
    if run.train.feature_len() == 2 {
        crate::data::write_xy_csv(&run.train, &dir.join("train_points.csv"))?;
        let bounds = dataset_bounds(&run.train)?;
        let raster = export_boundary_raster(&run.state, bounds, BOUNDARY_RESOLUTION)?;
        write_boundary_csv(&raster, &dir.join("boundary.csv"))?;
        write_boundary_pgm(&raster, run.train.num_classes(), &dir.join("boundary.pgm"))?;
    }
    Ok(())
}
