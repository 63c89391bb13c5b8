use serde::{Deserialize, Serialize};

use super::{column_of, median, Experiment, ExperimentReport, Flag, ReplicaRow, Table};
use crate::blowup::{blowup_probability, CrossingSpec};
use crate::error::Result;
use crate::integrator::{initial_profile, run, InitialProfile, SolverConfig, Status, Trajectory};
use crate::lattice::LatticeDomain;
use crate::model::ModelSpec;
use crate::noise::NoiseSource;

/// Independent trajectories of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateExperiment {
    pub model: ModelSpec,
    pub domain: LatticeDomain,
    pub solver: SolverConfig,
    pub initial: InitialProfile,
    /// `None` tracks the sup over the domain.
    pub crossing: Option<CrossingSpec>,
    pub master_seed: u64,
}

const COLUMNS: [&str; 7] = [
    "status",
    "blowup_time",
    "sup_value",
    "last_up_level",
    "clamp_count",
    "clamp_mass",
    "boundary_leak",
];

impl SimulateExperiment {
    pub fn trajectory(&self, replica: u32) -> Result<Trajectory> {
        let noise = NoiseSource::new(self.master_seed, self.domain.epsilon, self.solver.dt, replica)?
            .coupled_view(&self.domain)?;
        let u0 = initial_profile(&self.initial, &self.domain);
        run(
            &self.domain,
            &self.model,
            &noise,
            &self.solver,
            &u0,
            self.crossing.as_ref(),
        )
    }
}

/// 0 finished, 1 reached the cap, 2 overflowed.
pub fn status_code(s: &Status) -> f64 {
    match s {
        Status::BlownUp { overflow: true, .. } => 2.0,
        Status::BlownUp { .. } => 1.0,
        _ => 0.0,
    }
}

impl Experiment for SimulateExperiment {
    fn name(&self) -> &'static str {
        "simulate"
    }

    fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn columns(&self) -> Vec<String> {
        COLUMNS.iter().map(|c| c.to_string()).collect()
    }

    fn preflight(&self) -> Result<Vec<Flag>> {
        self.solver.validate(&self.domain)?;
        Ok(Vec::new())
    }

    fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
        let tr = self.trajectory(replica)?;
        let s = tr.status();
        let d = tr.final_state.diagnostics;
        Ok(vec![
            status_code(&s),
            s.blowup_time().unwrap_or(f64::NAN),
            d.sup_value,
            tr.last_up_level().map_or(f64::NAN, f64::from),
            d.clamp_count as f64,
            d.clamp_mass,
            d.boundary_leak,
        ])
    }

    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
        let times = column_of(rows, 1);
        let statuses: Vec<Status> = times
            .iter()
            .map(|&t| {
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
        let p = blowup_probability(&statuses, self.solver.t_end)?;
        let mut table = Table::new("probability", &["replicas", "blown_up", "p_hat", "lo", "hi"]);
        table
            .rows
            .push(vec![p.n_replicas as f64, p.blown_up as f64, p.p_hat, p.lo, p.hi]);
        report.push_summary("blowup_fraction", p.p_hat);
        report.push_summary("median_blowup_time", median(&times));
        report.push_summary("median_sup_value", median(&column_of(rows, 2)));
        report.push_summary(
            "max_boundary_leak",
            column_of(rows, 6).iter().cloned().fold(0.0, f64::max),
        );
        report.tables.push(table);
        Ok(())
    }
}
