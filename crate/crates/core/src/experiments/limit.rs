use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{bool_value, column_of, mc_drive, median, Experiment, ExperimentReport, Flag, ReplicaRow, Table};
use crate::blowup::blowup_time_estimate;
use crate::error::{Error, Result};
use crate::integrator::{run, SolverConfig, Status};
use crate::lattice::{Boundary, LatticeDomain};
use crate::model::{osgood_time, ModelSpec, OsgoodTime};
use crate::noise::NoiseSource;

/// Flat data `u₀ ≡ c` on periodic `[0, 1)` with `σ` scaled by each factor;
/// blowup times against the ODE time `∫_c^∞ dx/b(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicLimit {
    pub model: ModelSpec,
    pub initial_value: f64,
    pub sigma_scales: Vec<f64>,
    pub epsilon: f64,
    pub solver: SolverConfig,
    pub master_seed: u64,
}

impl DeterministicLimit {
    fn domain(&self) -> Result<LatticeDomain> {
        LatticeDomain::interval(0.0, 1.0, self.epsilon, Boundary::Periodic)
    }
}

impl Experiment for DeterministicLimit {
    fn name(&self) -> &'static str {
        "deterministic_limit"
    }

    fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn columns(&self) -> Vec<String> {
        (0..self.sigma_scales.len())
            .flat_map(|k| [format!("tau_cap_{k}"), format!("tau_extrapolated_{k}")])
            .collect()
    }

    fn preflight(&self) -> Result<Vec<Flag>> {
        if self.sigma_scales.is_empty() {
            return Err(Error::contract("need at least one sigma scale"));
        }
        if !(self.initial_value > 0.0) {
            return Err(Error::contract("initial value must be positive"));
        }
        self.solver.validate(&self.domain()?)?;
        Ok(Vec::new())
    }

    /// `NaN` for scales whose run did not reach the cap.
    fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
        let d = self.domain()?;
        let noise = NoiseSource::new(self.master_seed, self.epsilon, self.solver.dt, replica)?.coupled_view(&d)?;
        let u0 = vec![self.initial_value; d.n_sites()];
        let mut row = Vec::new();
        for &s in &self.sigma_scales {
            let model = self.model.with_sigma_scale(s);
            let tr = run(&d, &model, &noise, &self.solver, &u0, None)?;
            match tr.status() {
                Status::BlownUp { overflow: false, .. } => {
                    let (cap, extrap) = blowup_time_estimate(&tr, &model, self.solver.field_cap)?;
                    row.extend([cap, extrap]);
                }
                _ => row.extend([f64::NAN, f64::NAN]),
            }
        }
        Ok(row)
    }

    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
        let ode = match osgood_time(&self.model, self.initial_value)? {
            OsgoodTime::Finite(t) => t,
            OsgoodTime::Infinite => f64::INFINITY,
        };
        report.push_summary("osgood_time", ode);
        let mut table = Table::new(
            "scales",
            &[
                "sigma_scale",
                "blowup_fraction",
                "median_tau_cap",
                "median_tau_extrapolated",
                "relative_error",
            ],
        );
        for (k, &s) in self.sigma_scales.iter().enumerate() {
            let extrap = column_of(rows, 2 * k + 1);
            let frac = extrap.iter().filter(|t| t.is_finite()).count() as f64 / rows.len() as f64;
            let med = median(&extrap);
            let rel = (med - ode).abs() / ode;
            table
                .rows
                .push(vec![s, frac, median(&column_of(rows, 2 * k)), med, rel]);
            report.push_summary(format!("median_tau_extrapolated_{k}"), med);
            report.push_summary(format!("blowup_fraction_{k}"), frac);
        }
        report.push_summary("osgood_finite", bool_value(ode.is_finite()));
        report.tables.push(table);
        Ok(())
    }
}

pub fn deterministic_limit(cfg: &DeterministicLimit, replicas: Range<u32>, workers: usize) -> Result<ExperimentReport> {
    mc_drive(cfg, replicas, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarFn;

    fn limit(b: ScalarFn, c: f64, t_end: f64) -> DeterministicLimit {
        let eps = 1.0 / 8.0;
        DeterministicLimit {
            model: ModelSpec::new("m", b, ScalarFn::linear(1.0)),
            initial_value: c,
            sigma_scales: vec![0.0],
            epsilon: eps,
            solver: SolverConfig {
                dt: 1e-3,
                ..SolverConfig::euler(eps, t_end)
            },
            master_seed: 0,
        }
    }

    #[test]
    fn noiseless_quadratic_matches_ode() {
        let r = deterministic_limit(&limit(ScalarFn::power(1.0, 2.0), 2.0, 1.0), 0..1, 1).unwrap();
        assert!((r.summary_value("osgood_time").unwrap() - 0.5).abs() < 1e-9);
        let tau = r.summary_value("median_tau_extrapolated_0").unwrap();
        assert!((tau - 0.5).abs() < 0.025, "{tau}");
    }

    #[test]
    fn divergent_drift_stays_bounded() {
        // u' = u from 1: e^2 at t = 2, far below the cap
        let r = deterministic_limit(&limit(ScalarFn::linear(1.0), 1.0, 2.0), 0..1, 1).unwrap();
        assert!(r.summary_value("median_tau_extrapolated_0").unwrap().is_nan());
        assert_eq!(r.summary_value("osgood_finite"), Some(0.0));
    }
}
