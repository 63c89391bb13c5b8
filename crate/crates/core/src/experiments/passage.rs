use serde::{Deserialize, Serialize};

use super::{bool_value, column_of, median, Experiment, ExperimentReport, Flag, FlagKind, ReplicaRow, Table};
use crate::blowup::{blowup_probability, passage_stats_from_samples, CrossingSpec};
use crate::error::{Error, Result};
use crate::integrator::{initial_profile, run, InitialProfile, SolverConfig, Status};
use crate::lattice::LatticeDomain;
use crate::model::ModelSpec;
use crate::noise::NoiseSource;

/// Passage times `t(Up n) − t(Up n−1)` for `n ∈ [level_lo, level_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageTimeStudy {
    pub model: ModelSpec,
    pub domain: LatticeDomain,
    pub solver: SolverConfig,
    pub initial: InitialProfile,
    pub crossing: CrossingSpec,
    pub level_lo: i32,
    pub level_hi: i32,
    pub master_seed: u64,
}

impl PassageTimeStudy {
    fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.level_lo..=self.level_hi
    }
}

impl Experiment for PassageTimeStudy {
    fn name(&self) -> &'static str {
        "passage_time"
    }

    fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = self.levels().map(|n| format!("passage_{n}")).collect();
        c.push("blowup_time".into());
        c
    }

    fn preflight(&self) -> Result<Vec<Flag>> {
        if self.level_lo > self.level_hi {
            return Err(Error::contract("empty level range"));
        }
        self.solver.validate(&self.domain)?;
        Ok(Vec::new())
    }

    fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
        let noise = NoiseSource::new(self.master_seed, self.domain.epsilon, self.solver.dt, replica)?
            .coupled_view(&self.domain)?;
        let u0 = initial_profile(&self.initial, &self.domain);
        let tr = run(
            &self.domain,
            &self.model,
            &noise,
            &self.solver,
            &u0,
            Some(&self.crossing),
        )?;
        let mut row: Vec<f64> = self
            .levels()
            .map(|n| tr.crossings.passage_time(n).unwrap_or(f64::NAN))
            .collect();
        row.push(tr.status().blowup_time().unwrap_or(f64::NAN));
        Ok(row)
    }

    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
        let samples = self
            .levels()
            .enumerate()
            .map(|(j, n)| (n, column_of(rows, j)))
            .collect();
        let stats = passage_stats_from_samples(samples, &self.model)?;
        let mut table = Table::new("passage", &["n", "count", "median", "q25", "q75", "t_n", "ratio"]);
        for r in &stats.rows {
            table
                .rows
                .push(vec![r.n as f64, r.count as f64, r.median, r.q25, r.q75, r.t_n, r.ratio]);
        }
        report.push_summary("slope", stats.slope.unwrap_or(f64::NAN));
        report.push_summary("theory_slope", stats.theory_slope.unwrap_or(f64::NAN));
        let bt = column_of(rows, rows[0].values.len() - 1);
        report.push_summary("median_blowup_time", median(&bt));
        report.tables.push(table);
        Ok(())
    }
}

/// Blowup by time `horizon` from `2^n₀ · 1[lo, hi]` for each `n₀`, replicas
/// sharing noise across `n₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupProbabilityStudy {
    pub model: ModelSpec,
    pub domain: LatticeDomain,
    /// `t_end` is replaced by `horizon`.
    pub solver: SolverConfig,
    pub amplitudes: Vec<i32>,
    pub support: (f64, f64),
    pub horizon: f64,
    pub master_seed: u64,
}

impl BlowupProbabilityStudy {
    fn cfg(&self) -> SolverConfig {
        SolverConfig {
            t_end: self.horizon,
            ..self.solver.clone()
        }
    }
}

impl Experiment for BlowupProbabilityStudy {
    fn name(&self) -> &'static str {
        "blowup_probability"
    }

    fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn columns(&self) -> Vec<String> {
        self.amplitudes
            .iter()
            .flat_map(|n| [format!("blown_up_{n}"), format!("blowup_time_{n}")])
            .collect()
    }

    fn preflight(&self) -> Result<Vec<Flag>> {
        if self.amplitudes.is_empty() || self.amplitudes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::contract("amplitudes must be nonempty and strictly ascending"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::contract("horizon must be positive"));
        }
        self.cfg().validate(&self.domain)?;
        Ok(Vec::new())
    }

    fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
        let cfg = self.cfg();
        let noise =
            NoiseSource::new(self.master_seed, self.domain.epsilon, cfg.dt, replica)?.coupled_view(&self.domain)?;
        let mut row = Vec::new();
        for &n in &self.amplitudes {
            let u0 = initial_profile(
                &InitialProfile::Indicator {
                    lo: self.support.0,
                    hi: self.support.1,
                    height: 2f64.powi(n),
                },
                &self.domain,
            );
            let tr = run(&self.domain, &self.model, &noise, &cfg, &u0, None)?;
            let t = tr.status().blowup_time();
            row.extend([bool_value(t.is_some()), t.unwrap_or(f64::NAN)]);
        }
        Ok(row)
    }

    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
        let mut table = Table::new("probability", &["n0", "replicas", "blown_up", "p_hat", "lo", "hi"]);
        let mut est = Vec::new();
        for (k, &n) in self.amplitudes.iter().enumerate() {
            let statuses: Vec<Status> = column_of(rows, 2 * k + 1)
                .into_iter()
                .map(|t| {
                    if t.is_finite() {
                        Status::BlownUp {
                            t,
                            site: 0,
                            overflow: false,
                        }
                    } else {
                        Status::Finished
                    }
                })
                .collect();
            let e = blowup_probability(&statuses, self.horizon)?;
            table.rows.push(vec![
                n as f64,
                e.n_replicas as f64,
                e.blown_up as f64,
                e.p_hat,
                e.lo,
                e.hi,
            ]);
            report.push_summary(format!("p_hat_{n}"), e.p_hat);
            est.push(e);
        }
        let monotone = est.windows(2).all(|w| w[1].p_hat >= w[0].p_hat);
        let (first, last) = (est[0], est[est.len() - 1]);
        let separated = last.p_hat > first.p_hat && !last.overlaps(&first);
        report.push_summary("nondecreasing", bool_value(monotone));
        report.push_summary("separated", bool_value(separated));
        if !(monotone && separated) {
            report.flags.push(Flag::new(
                FlagKind::Inconclusive,
                format!(
                    "blowup probabilities {:?} are not nondecreasing with separated 95% intervals at the extremes",
                    est.iter().map(|e| e.p_hat).collect::<Vec<_>>()
                ),
            ));
        }
        report.tables.push(table);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::mc_drive;
    use crate::lattice::Boundary;
    use crate::model::ScalarFn;

    #[test]
    fn noiseless_passage_times_follow_the_ode() {
        let d = LatticeDomain::interval(0.0, 1.0, 0.25, Boundary::Periodic).unwrap();
        let exp = PassageTimeStudy {
            model: ModelSpec::new("q", ScalarFn::power(1.0, 2.0), ScalarFn::Zero),
            domain: d,
            solver: SolverConfig {
                dt: 1.0 / 65536.0,
                ..SolverConfig::euler(0.25, 0.5)
            },
            initial: InitialProfile::Constant { value: 4.0 },
            crossing: CrossingSpec::sup_over_domain(),
            level_lo: 3,
            level_hi: 6,
            master_seed: 1,
        };
        let r = mc_drive(&exp, 0..1, 1).unwrap();
        for n in 3..=6 {
            let t = r.column(&format!("passage_{n}")).unwrap()[0];
            let ode = 2f64.powi(-n - 1);
            assert!((t - ode).abs() < 0.05 * ode + 2.0 / 65536.0, "{n}: {t} vs {ode}");
        }
        assert!((r.summary_value("slope").unwrap() + 1.0).abs() < 0.1);
    }

    #[test]
    fn larger_data_blow_up_first() {
        let d = LatticeDomain::interval(0.0, 1.0, 0.125, Boundary::Dirichlet).unwrap();
        let exp = BlowupProbabilityStudy {
            model: ModelSpec::new("q", ScalarFn::power(1.0, 2.0), ScalarFn::Zero),
            domain: d,
            solver: SolverConfig::euler(0.125, 1.0),
            amplitudes: vec![0, 8],
            support: (1.0 / 3.0, 2.0 / 3.0),
            horizon: 0.5,
            master_seed: 1,
        };
        let r = mc_drive(&exp, 0..8, 1).unwrap();
        assert_eq!(r.summary_value("p_hat_0"), Some(0.0));
        assert_eq!(r.summary_value("p_hat_8"), Some(1.0));
        assert_eq!(r.summary_value("separated"), Some(1.0));
        assert!(r.flags.is_empty());
    }
}
