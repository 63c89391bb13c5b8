use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{bool_value, column_of, dt_levels, mc_drive, median, Experiment, ExperimentReport, ReplicaRow, Table};
use crate::error::{Error, Result};
use crate::integrator::{initial_profile, run_truncated_family, InitialProfile, SolverConfig};
use crate::lattice::LatticeDomain;
use crate::model::ModelSpec;
use crate::noise::NoiseSource;

/// Drift-capped solutions `u^(J)` for ascending `J` on shared noise, at
/// `dt, dt/2, …, dt/2^dt_halvings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JMonotonicity {
    pub model: ModelSpec,
    pub domain: LatticeDomain,
    pub solver: SolverConfig,
    pub dt_halvings: u32,
    pub caps: Vec<f64>,
    pub initial: InitialProfile,
    pub master_seed: u64,
}

impl JMonotonicity {
    pub fn dt_levels(&self) -> Vec<f64> {
        dt_levels(self.solver.dt, self.dt_halvings)
    }

    fn n_levels(&self) -> usize {
        self.dt_halvings as usize + 1
    }
}

impl Experiment for JMonotonicity {
    fn name(&self) -> &'static str {
        "j_monotonicity"
    }

    fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = (0..self.n_levels())
            .flat_map(|k| [format!("violation_{k}"), format!("violating_fraction_{k}")])
            .collect();
        cols.extend((0..self.caps.len()).map(|i| format!("blown_up_{i}")));
        cols
    }

    fn preflight(&self) -> Result<Vec<super::Flag>> {
        if self.caps.is_empty() || self.caps.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::contract("drift caps must be nonempty and strictly ascending"));
        }
        for &dt in &self.dt_levels() {
            SolverConfig {
                dt,
                ..self.solver.clone()
            }
            .validate(&self.domain)?;
        }
        Ok(Vec::new())
    }

    fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
        let levels = self.dt_levels();
        let finest = *levels.last().expect("at least one level");
        let source = NoiseSource::new(self.master_seed, self.domain.epsilon, finest, replica)?;
        let u0 = initial_profile(&self.initial, &self.domain);
        let mut row = Vec::new();
        let mut blown = Vec::new();
        for &dt in &levels {
            let cfg = SolverConfig {
                dt,
                ..self.solver.clone()
            };
            let noise = source.view(self.domain.epsilon, dt)?;
            let fam = run_truncated_family(&self.domain, &self.model, &noise, &cfg, &u0, &self.caps, None)?;
            let viol = fam.max_violation.iter().cloned().fold(0.0, f64::max);
            let frac = fam.violation_fraction.iter().cloned().fold(0.0, f64::max);
            row.extend([viol, frac]);
            blown = fam
                .trajectories
                .iter()
                .map(|t| bool_value(t.status().blowup_time().is_some()))
                .collect();
        }
        row.extend(blown);
        Ok(row)
    }

    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
        let mut levels = Table::new(
            "levels",
            &["level", "dt", "median_violation", "max_violation", "violating_fraction"],
        );
        let mut medians = Vec::new();
        for (k, &dt) in self.dt_levels().iter().enumerate() {
            let viol = column_of(rows, 2 * k);
            let fracs = column_of(rows, 2 * k + 1);
            let med = median(&viol);
            let max = viol.iter().cloned().fold(0.0, f64::max);
            let frac = fracs.iter().sum::<f64>() / rows.len() as f64;
            levels.rows.push(vec![k as f64, dt, med, max, frac]);
            report.push_summary(format!("median_violation_{k}"), med);
            medians.push(med);
            report.max_violation = Some(max);
            report.violating_fraction = Some(frac);
        }
        report.push_summary(
            "median_violation_nonincreasing",
            bool_value(medians.windows(2).all(|w| w[1] <= w[0])),
        );
        let base = 2 * self.n_levels();
        let mut caps = Table::new("caps", &["cap", "blowup_fraction"]);
        let mut fractions = Vec::new();
        for (i, &j) in self.caps.iter().enumerate() {
            let f = column_of(rows, base + i).iter().sum::<f64>() / rows.len() as f64;
            caps.rows.push(vec![j, f]);
            report.push_summary(format!("blowup_fraction_{i}"), f);
            fractions.push(f);
        }
        report.push_summary(
            "blowup_fraction_nondecreasing",
            bool_value(fractions.windows(2).all(|w| w[1] >= w[0])),
        );
        report.tables.push(levels);
        report.tables.push(caps);
        Ok(())
    }
}

pub fn j_monotonicity(cfg: &JMonotonicity, replicas: Range<u32>, workers: usize) -> Result<ExperimentReport> {
    mc_drive(cfg, replicas, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use crate::model::ScalarFn;

    #[test]
    fn flat_noiseless_ordering_is_exact() {
        let d = LatticeDomain::interval(0.0, 1.0, 0.25, Boundary::Periodic).unwrap();
        let mut solver = SolverConfig::euler(0.25, 1.5);
        solver.dt = 1.0 / 512.0;
        let exp = JMonotonicity {
            model: ModelSpec::new("q", ScalarFn::power(1.0, 2.0), ScalarFn::Zero),
            domain: d,
            solver,
            dt_halvings: 1,
            caps: vec![2.0, 8.0, 1e6],
            initial: InitialProfile::Constant { value: 1.0 },
            master_seed: 5,
        };
        let r = j_monotonicity(&exp, 0..1, 1).unwrap();
        assert_eq!(r.max_violation, Some(0.0));
        // capped drift grows at most exponentially; the uncapped one blows up
        assert_eq!(r.column("blown_up_0").unwrap(), vec![0.0]);
        assert_eq!(r.column("blown_up_2").unwrap(), vec![1.0]);
        assert_eq!(r.summary_value("blowup_fraction_nondecreasing"), Some(1.0));
    }

    #[test]
    fn rejects_unsorted_caps() {
        let d = LatticeDomain::interval(0.0, 1.0, 0.25, Boundary::Periodic).unwrap();
        let exp = JMonotonicity {
            model: ModelSpec::new("q", ScalarFn::power(1.0, 2.0), ScalarFn::Zero),
            domain: d,
            solver: SolverConfig::euler(0.25, 0.1),
            dt_halvings: 0,
            caps: vec![4.0, 2.0],
            initial: InitialProfile::Constant { value: 1.0 },
            master_seed: 5,
        };
        assert!(matches!(j_monotonicity(&exp, 0..1, 1), Err(Error::Contract(_))));
    }
}
