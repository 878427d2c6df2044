//! The verification suite: every catalog oracle plus the fast module checks.

use super::{experiments, run, Experiment, ExperimentConfig, ExperimentReport, Run};
use crate::bforms::{exceptional_data, BForm1};
use crate::error::Result;
use crate::fields::Point;
use crate::vecmath::dot;

/// `max |ι_R ω_Z − d(f|_Z)|` over points of `Z`, with `R` supplied by the caller.
pub fn prop22_residual(a: &BForm1, reeb: impl Fn(&[f64]) -> Vec<f64>, pts: &[Vec<f64>]) -> Result<f64> {
    let chart = a.base().chart().clone();
    let mut res = 0.0f64;
    for x in pts {
        let ex = exceptional_data(a, &Point::new(&chart, x)?)?;
        let r = reeb(x);
        let c = [dot(&r, &ex.basis[0]), dot(&r, &ex.basis[1])];
        for b in 0..2 {
            let lhs = c[0] * ex.omega[0][b] + c[1] * ex.omega[1][b];
            res = res.max((lhs - ex.dh[b]).abs());
        }
    }
    Ok(res)
}

pub(super) fn suite_into(r: &mut Run) -> Result<()> {
    r.files = false;
    experiments::catalog(r)?;
    experiments::verify_forms(r)?;
    experiments::bhopf_algebra(r)?;
    experiments::foliation(r)?;
    experiments::glue(r)?;
    experiments::break_scaling(r)?;
    experiments::seifert(r)?;
    experiments::torus_separatrix(r)?;
    r.files = true;
    Ok(())
}

/// Run the suite and return its report.
pub fn verify_suite(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run(Experiment::Verify, cfg)
}
