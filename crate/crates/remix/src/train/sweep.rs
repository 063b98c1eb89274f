//! Threshold sweep: rerun one remix plan across a list of τ values, each
//! cell with the same seed, and tabulate final balanced top-1.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::par;
use crate::train::{run_training, TrainPlan};

/// One sweep row. `top1` is `None` when that cell's run aborted with a
/// training fault.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub tau: f64,
    pub top1: Option<f64>,
}

/// Train `base_plan` once per τ (cells run in parallel, same seed each) and
/// return one row per τ in input order. Training faults mark their cell
/// failed and the sweep continues; configuration and data errors abort.
pub fn run_tau_sweep(base_plan: &TrainPlan, taus: &[f64]) -> Result<Vec<SweepCell>> {
    if !base_plan.method.is_remix() {
        return Err(Error::Parameter(format!(
            "the threshold sweep needs a remix method, got {}",
            base_plan.method
        )));
    }
    let cells = par::map(taus, |&tau| {
        let plan = TrainPlan {
            tau,
            out_dir: None,
            ..base_plan.clone()
        };
        match run_training(&plan) {
            Ok(run) => Ok(SweepCell {
                tau,
                top1: Some(run.final_report().top1),
            }),
            Err(Error::TrainingFault { .. }) => Ok(SweepCell { tau, top1: None }),
            Err(other) => Err(other),
        }
    });
    cells.into_iter().collect()
}

/// Write the sweep table as CSV with `NA` marking failed cells.
pub fn write_sweep_csv(cells: &[SweepCell], path: &Path) -> Result<()> {
    let mut out = String::from("tau,top1\n");
    for cell in cells {
        match cell.top1 {
            Some(top1) => out.push_str(&format!("{},{}\n", cell.tau, top1)),
            None => out.push_str(&format!("{},NA\n", cell.tau)),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
