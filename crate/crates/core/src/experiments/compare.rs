use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{
    bool_value, column_of, dt_levels, mc_drive, median, Experiment, ExperimentReport, Flag, FlagKind, ReplicaRow,
    Table, DEFAULT_LEAK_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::integrator::{initial_profile, InitialProfile, Simulation, SolverConfig};
use crate::lattice::{Boundary, LatticeDomain};
use crate::model::ModelSpec;
use crate::noise::NoiseSource;

/// The dominating solution of a comparison; the dominated one always lives on
/// Dirichlet `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpperDomain {
    /// Free-truncated `[−R, 1 + R]`, standing in for the line.
    Line { half_width: f64 },
    /// `[0, 1]` with another boundary rule.
    Interval { boundary: Boundary },
}

/// Coupled pair `u` (upper) and `v` (Dirichlet) driven by identical noise on
/// shared sites, at `dt, dt/2, …, dt/2^dt_halvings` with refined noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub upper: UpperDomain,
    pub model: ModelSpec,
    pub epsilon: f64,
    /// `dt` is the coarsest step of the sweep.
    pub solver: SolverConfig,
    pub dt_halvings: u32,
    pub initial: InitialProfile,
    /// Initial data of `v`; defaults to `initial`.
    pub lower_initial: Option<InitialProfile>,
    pub master_seed: u64,
    pub leak_threshold: f64,
}

impl Comparison {
    pub fn new(
        upper: UpperDomain,
        model: ModelSpec,
        epsilon: f64,
        solver: SolverConfig,
        initial: InitialProfile,
        master_seed: u64,
    ) -> Self {
        Comparison {
            upper,
            model,
            epsilon,
            solver,
            dt_halvings: 0,
            initial,
            lower_initial: None,
            master_seed,
            leak_threshold: DEFAULT_LEAK_THRESHOLD,
        }
    }

    /// Truncation half-width `24·√t_end`, rounded up to the lattice.
    pub fn default_half_width(t_end: f64, epsilon: f64) -> f64 {
        (24.0 * t_end.sqrt() / epsilon).ceil().max(1.0) * epsilon
    }

    pub fn domains(&self) -> Result<(LatticeDomain, LatticeDomain)> {
        let lower = LatticeDomain::interval(0.0, 1.0, self.epsilon, Boundary::Dirichlet)?;
        let upper = match self.upper {
            UpperDomain::Line { half_width } => {
                if !(half_width > 0.0) {
                    return Err(Error::contract(format!(
                        "half-width must be positive, got {half_width}"
                    )));
                }
                LatticeDomain::interval(-half_width, 1.0 + half_width, self.epsilon, Boundary::FreeTruncated)?
            }
            UpperDomain::Interval { boundary } => LatticeDomain::interval(0.0, 1.0, self.epsilon, boundary)?,
        };
        Ok((upper, lower))
    }

    pub fn dt_levels(&self) -> Vec<f64> {
        dt_levels(self.solver.dt, self.dt_halvings)
    }

    fn lower_profile(&self) -> &InitialProfile {
        self.lower_initial.as_ref().unwrap_or(&self.initial)
    }

    fn tracks_leak(&self) -> bool {
        matches!(self.upper, UpperDomain::Line { .. })
    }

    fn level_run(&self, replica: u32, dt: f64, finest: f64) -> Result<LevelOutcome> {
        let (upper, lower) = self.domains()?;
        let cfg = SolverConfig {
            dt,
            ..self.solver.clone()
        };
        let source = NoiseSource::new(self.master_seed, self.epsilon, finest, replica)?;
        let noise = source.view(self.epsilon, dt)?;
        let mut u = Simulation::new(upper, &self.model, noise, &cfg, initial_profile(&self.initial, &upper))?;
        let mut v = Simulation::new(
            lower,
            &self.model,
            noise,
            &cfg,
            initial_profile(self.lower_profile(), &lower),
        )?;
        let shared: Vec<(usize, usize)> = (0..lower.n_sites())
            .filter_map(|j| upper.local_index(lower.global_index(j)).map(|i| (i, j)))
            .collect();
        let mut out = LevelOutcome::default();
        let compare = |u: &Simulation, v: &Simulation, out: &mut LevelOutcome| {
            for &(i, j) in &shared {
                let d = u.state.values[i] - v.state.values[j];
                out.worst = out.worst.min(d);
                out.compared += 1;
                if d < 0.0 {
                    out.violating += 1;
                }
            }
        };
        compare(&u, &v, &mut out);
        while u.is_running() && v.is_running() {
            u.step()?;
            v.step()?;
            if u.state.status.blowup_time().is_some() || v.state.status.blowup_time().is_some() {
                break;
            }
            compare(&u, &v, &mut out);
        }
        out.leak = u.state.diagnostics.boundary_leak;
        Ok(out)
    }
}

#[derive(Debug, Default)]
struct LevelOutcome {
    worst: f64,
    violating: u64,
    compared: u64,
    leak: f64,
}

const PER_LEVEL: [&str; 4] = ["violation", "violating", "compared", "leak"];

impl Experiment for Comparison {
    fn name(&self) -> &'static str {
        match self.upper {
            UpperDomain::Line { .. } => "compare_line",
            UpperDomain::Interval { .. } => "compare_boundary",
        }
    }

    fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn columns(&self) -> Vec<String> {
        (0..=self.dt_halvings)
            .flat_map(|k| PER_LEVEL.iter().map(move |c| format!("{c}_{k}")))
            .collect()
    }

    fn preflight(&self) -> Result<Vec<Flag>> {
        let (upper, lower) = self.domains()?;
        for &dt in &self.dt_levels() {
            let cfg = SolverConfig {
                dt,
                ..self.solver.clone()
            };
            cfg.validate(&upper)?;
            cfg.validate(&lower)?;
        }
        let mut flags = Vec::new();
        let u0 = initial_profile(&self.initial, &upper);
        let v0 = initial_profile(self.lower_profile(), &lower);
        if self.tracks_leak() {
            let (x0, x1) = lower.extent();
            let outside = (0..upper.n_sites())
                .filter(|&i| lower.local_index(upper.global_index(i)).is_none())
                .find(|&i| u0[i] != 0.0);
            if let Some(i) = outside {
                flags.push(Flag::new(
                    FlagKind::HypothesisViolation,
                    format!(
                        "initial profile is {} at x = {}, outside the support interval [{x0}, {x1}]",
                        u0[i],
                        upper.x(i)
                    ),
                ));
            }
        }
        let below = (0..lower.n_sites()).find(|&j| match upper.local_index(lower.global_index(j)) {
            Some(i) => u0[i] < v0[j],
            None => v0[j] > 0.0,
        });
        if let Some(j) = below {
            flags.push(Flag::new(
                FlagKind::HypothesisViolation,
                format!(
                    "initial data of the dominated solution exceed the dominating one at x = {}",
                    lower.x(j)
                ),
            ));
        }
        Ok(flags)
    }

    fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
        let levels = self.dt_levels();
        let finest = *levels.last().expect("at least one level");
        let mut row = Vec::with_capacity(levels.len() * PER_LEVEL.len());
        for &dt in &levels {
            let o = self.level_run(replica, dt, finest)?;
            row.extend([(-o.worst).max(0.0), o.violating as f64, o.compared as f64, o.leak]);
        }
        Ok(row)
    }

    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
        let mut table = Table::new(
            "levels",
            &[
                "level",
                "dt",
                "median_violation",
                "max_violation",
                "violating_fraction",
                "max_leak",
            ],
        );
        let mut medians = Vec::new();
        let mut max_leak = 0.0_f64;
        for (k, &dt) in self.dt_levels().iter().enumerate() {
            let base = k * PER_LEVEL.len();
            let viol = column_of(rows, base);
            let violating: f64 = column_of(rows, base + 1).iter().sum();
            let compared: f64 = column_of(rows, base + 2).iter().sum();
            let leak = column_of(rows, base + 3).iter().cloned().fold(0.0, f64::max);
            let med = median(&viol);
            let max = viol.iter().cloned().fold(0.0, f64::max);
            let frac = if compared > 0.0 { violating / compared } else { 0.0 };
            table.rows.push(vec![k as f64, dt, med, max, frac, leak]);
            report.push_summary(format!("median_violation_{k}"), med);
            report.push_summary(format!("violating_fraction_{k}"), frac);
            medians.push(med);
            max_leak = max_leak.max(leak);
            report.max_violation = Some(max);
            report.violating_fraction = Some(frac);
        }
        let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
        report.push_summary("median_violation_nonincreasing", bool_value(monotone));
        if self.tracks_leak() {
            report.push_summary("max_leak", max_leak);
            if max_leak > self.leak_threshold {
                report.flags.push(Flag::new(
                    FlagKind::TruncationLeak,
                    format!(
                        "mass {max_leak:e} absorbed at the truncation ends exceeds {:e}; widen the domain",
                        self.leak_threshold
                    ),
                ));
            }
        }
        report.tables.push(table);
        Ok(())
    }
}

/// Line (free-truncated) against Dirichlet `[0, 1]`.
pub fn compare_line_vs_dirichlet(cfg: &Comparison, replicas: Range<u32>, workers: usize) -> Result<ExperimentReport> {
    if !matches!(cfg.upper, UpperDomain::Line { .. }) {
        return Err(Error::contract("expected a line comparison"));
    }
    mc_drive(cfg, replicas, workers)
}

/// Periodic or Neumann `[0, 1]` against Dirichlet `[0, 1]`.
pub fn compare_boundary_conditions(cfg: &Comparison, replicas: Range<u32>, workers: usize) -> Result<ExperimentReport> {
    if !matches!(cfg.upper, UpperDomain::Interval { .. }) {
        return Err(Error::contract("expected a boundary comparison"));
    }
    mc_drive(cfg, replicas, workers)
}
