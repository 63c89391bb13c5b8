use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{column_of, mc_drive, Experiment, ExperimentReport, Flag, ReplicaRow, Table};
use crate::blowup::ls_slope;
use crate::error::{Error, Result};
use crate::integrator::{
    euler_step_with_increments, initial_profile, FieldState, InitialProfile, Scheme, SolverConfig,
};
use crate::lattice::{Boundary, LatticeDomain};
use crate::model::ModelSpec;
use crate::noise::NoiseSource;

/// The same white noise resolved at each spacing of `epsilons` on periodic
/// `[0, 1)`, all stepped with one common `dt`.
///
/// Consecutive resolutions are compared at time `t_end` cell by cell: the
/// coarse value at site `g` against the mean of the fine sites it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonConvergence {
    pub model: ModelSpec,
    /// Strictly coarse to fine (repeats allowed); each a power-of-two multiple
    /// of the last.
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    /// Common step; `None` uses `ε_min² / 4`.
    pub dt: Option<f64>,
    pub initial: InitialProfile,
    /// Moment `p` of the `Lᵖ(Ω)` distance.
    pub p: u32,
    pub master_seed: u64,
}

impl EpsilonConvergence {
    fn finest(&self) -> f64 {
        *self.epsilons.last().expect("validated nonempty")
    }

    pub fn step(&self) -> f64 {
        self.dt.unwrap_or_else(|| 0.25 * self.finest() * self.finest())
    }

    fn n_pairs(&self) -> usize {
        self.epsilons.len().saturating_sub(1)
    }

    /// Coarsening factor of each level relative to the finest.
    fn factors(&self) -> Result<Vec<usize>> {
        if self.epsilons.is_empty() {
            return Err(Error::contract("need at least one spacing"));
        }
        let fine = self.finest();
        let mut out = Vec::new();
        for &e in &self.epsilons {
            let r = e / fine;
            let k = r.log2().round();
            if !(0.0..20.0).contains(&k) || (r - 2f64.powi(k as i32)).abs() > 1e-9 * r {
                return Err(Error::contract(format!(
                    "spacing {e} is not a power-of-two multiple of the finest spacing {fine}"
                )));
            }
            out.push(1usize << k as u32);
        }
        if out.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::contract("spacings must run from coarse to fine"));
        }
        Ok(out)
    }

    fn cfg(&self) -> SolverConfig {
        SolverConfig {
            dt: self.step(),
            ..SolverConfig::euler(self.finest(), self.t_end)
        }
    }
}

impl Experiment for EpsilonConvergence {
    fn name(&self) -> &'static str {
        "epsilon_convergence"
    }

    fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn columns(&self) -> Vec<String> {
        (0..self.n_pairs()).map(|k| format!("moment_{k}")).collect()
    }

    fn preflight(&self) -> Result<Vec<Flag>> {
        self.factors()?;
        if !(self.p >= 1) {
            return Err(Error::contract("moment p must be at least 1"));
        }
        let cfg = self.cfg();
        debug_assert_eq!(cfg.scheme, Scheme::EulerMaruyama);
        for &e in &self.epsilons {
            cfg.validate(&LatticeDomain::interval(0.0, 1.0, e, Boundary::Periodic)?)?;
        }
        Ok(Vec::new())
    }

    /// Per pair, the site average of `|U^(ε) − U^(ε/2)|ᵖ`.
    fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
        let factors = self.factors()?;
        let cfg = self.cfg();
        let fine = self.finest();
        let source = NoiseSource::new(self.master_seed, fine, cfg.dt, replica)?;
        let fine_domain = LatticeDomain::interval(0.0, 1.0, fine, Boundary::Periodic)?;
        let domains: Vec<LatticeDomain> = self
            .epsilons
            .iter()
            .map(|&e| LatticeDomain::interval(0.0, 1.0, e, Boundary::Periodic))
            .collect::<Result<_>>()?;
        let mut states: Vec<FieldState> = domains
            .iter()
            .map(|d| FieldState::new(initial_profile(&self.initial, d)))
            .collect();
        let mut fine_inc = vec![0.0; fine_domain.n_sites()];
        let mut incs: Vec<Vec<f64>> = domains.iter().map(|d| vec![0.0; d.n_sites()]).collect();
        let noisy = self.model.diffusion != crate::model::ScalarFn::Zero;
        for step in 0..cfg.n_steps()? {
            if noisy {
                for (i, z) in fine_inc.iter_mut().enumerate() {
                    *z = source.site_increment(fine_domain.global_index(i), step);
                }
                // same summation order as a coarse NoiseView
                for (inc, &f) in incs.iter_mut().zip(&factors) {
                    let norm = 1.0 / (f as f64).sqrt();
                    for (g, out) in inc.iter_mut().enumerate() {
                        let cell: f64 = fine_inc[g * f..(g + 1) * f].iter().fold(0.0, |a, &x| a + x);
                        *out = if f == 1 { cell } else { norm * cell };
                    }
                }
            }
            for ((state, d), inc) in states.iter_mut().zip(&domains).zip(&incs) {
                euler_step_with_increments(state, d, &self.model, inc, &cfg)?;
                if !state.is_running() {
                    return Err(Error::numeric(
                        format!("field reached the cap at ε = {} before t_end", d.epsilon),
                        None,
                    ));
                }
            }
        }
        let p = self.p as i32;
        Ok((0..self.n_pairs())
            .map(|k| {
                let r = factors[k] / factors[k + 1];
                let (coarse, finer) = (&states[k].values, &states[k + 1].values);
                let total: f64 = coarse
                    .iter()
                    .enumerate()
                    .map(|(g, &c)| {
                        let mean = finer[g * r..(g + 1) * r].iter().sum::<f64>() / r as f64;
                        (c - mean).abs().powi(p)
                    })
                    .sum();
                total / coarse.len() as f64
            })
            .collect())
    }

    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
        let mut table = Table::new("levels", &["epsilon", "lp_distance"]);
        let mut pts = Vec::new();
        for k in 0..self.n_pairs() {
            let m = column_of(rows, k).iter().sum::<f64>() / rows.len() as f64;
            let dist = m.powf(1.0 / self.p as f64);
            let eps = self.epsilons[k];
            table.rows.push(vec![eps, dist]);
            report.push_summary(format!("lp_distance_{k}"), dist);
            if dist > 0.0 {
                pts.push((eps.log2(), dist.log2()));
            }
        }
        report.push_summary("slope", ls_slope(&pts).unwrap_or(f64::NAN));
        report.tables.push(table);
        Ok(())
    }
}

pub fn epsilon_convergence(cfg: &EpsilonConvergence, replicas: Range<u32>, workers: usize) -> Result<ExperimentReport> {
    mc_drive(cfg, replicas, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::run;
    use crate::model::ScalarFn;

    fn gbm() -> ModelSpec {
        ModelSpec::new("gbm", ScalarFn::Zero, ScalarFn::linear(1.0))
    }

    #[test]
    fn lockstep_matches_standalone_runs() {
        let exp = EpsilonConvergence {
            model: gbm(),
            epsilons: vec![0.25, 0.125],
            t_end: 0.01,
            dt: None,
            initial: InitialProfile::Constant { value: 1.0 },
            p: 2,
            master_seed: 9,
        };
        let row = exp.run_replica(2).unwrap();
        let cfg = exp.cfg();
        let src = NoiseSource::new(9, 0.125, cfg.dt, 2).unwrap();
        let fin: Vec<Vec<f64>> = [0.25, 0.125]
            .iter()
            .map(|&e| {
                let d = LatticeDomain::interval(0.0, 1.0, e, Boundary::Periodic).unwrap();
                let tr = run(
                    &d,
                    &exp.model,
                    &src.refine(e).unwrap(),
                    &cfg,
                    &vec![1.0; d.n_sites()],
                    None,
                )
                .unwrap();
                tr.final_state.values
            })
            .collect();
        let direct: f64 = fin[0]
            .iter()
            .enumerate()
            .map(|(g, c)| (c - 0.5 * (fin[1][2 * g] + fin[1][2 * g + 1])).powi(2))
            .sum::<f64>()
            / 4.0;
        assert_eq!(row[0].to_bits(), direct.to_bits());
    }

    #[test]
    fn repeated_spacing_has_zero_distance() {
        let exp = EpsilonConvergence {
            model: gbm(),
            epsilons: vec![0.125, 0.125],
            t_end: 0.01,
            dt: None,
            initial: InitialProfile::Constant { value: 1.0 },
            p: 2,
            master_seed: 9,
        };
        assert_eq!(exp.run_replica(0).unwrap(), vec![0.0]);
        let bad = EpsilonConvergence {
            epsilons: vec![0.125, 0.1],
            ..exp
        };
        assert!(matches!(bad.preflight(), Err(Error::Contract(_))));
    }
}
