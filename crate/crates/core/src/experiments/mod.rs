//! Monte Carlo studies on top of the integrator: coupled domain and boundary
//! comparisons, drift-cap monotonicity, refinement in ε, the σ → 0 limit,
//! passage times and blowup probabilities.
//!
//! Each replica is a pure function of `(master_seed, experiment, replica)`,
//! and [`mc_drive`] reduces replicas in replica order, so reports do not
//! depend on the number of workers.

mod compare;
mod convergence;
mod limit;
mod monotone;
mod passage;
mod simulate;

pub use compare::{compare_boundary_conditions, compare_line_vs_dirichlet, Comparison, UpperDomain};
pub use convergence::{epsilon_convergence, EpsilonConvergence};
pub use limit::{deterministic_limit, DeterministicLimit};
pub use monotone::{j_monotonicity, JMonotonicity};
pub use passage::{BlowupProbabilityStudy, PassageTimeStudy};
pub use simulate::{status_code, SimulateExperiment};

use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use statrs::statistics::{Data, OrderStatistics};

use crate::config::digest_of;
use crate::error::{Error, Result};

/// Default bound on mass absorbed at truncation ends.
pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaRow {
    pub replica: u32,
    /// One value per report column; `NaN` marks "not observed".
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingReplica {
    pub replica: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// Initial data break the hypothesis of the claim under test.
    HypothesisViolation,
    /// Mass lost at truncation ends exceeded the threshold.
    TruncationLeak,
    MissingReplicas,
    /// The expected separation was not resolved at this sample size.
    Inconclusive,
}

impl FlagKind {
    pub fn name(self) -> &'static str {
        match self {
            FlagKind::HypothesisViolation => "hypothesis_violation",
            FlagKind::TruncationLeak => "truncation_leak",
            FlagKind::MissingReplicas => "missing_replicas",
            FlagKind::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub kind: FlagKind,
    pub message: String,
}

impl Flag {
    pub fn new(kind: FlagKind, message: impl Into<String>) -> Self {
        Flag {
            kind,
            message: message.into(),
        }
    }
}

/// A named numeric table, written as one delimited file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub columns: Vec<String>,
    /// Sorted by replica id.
    pub replicas: Vec<ReplicaRow>,
    pub missing: Vec<MissingReplica>,
    pub summary: Vec<(String, f64)>,
    pub tables: Vec<Table>,
    pub max_violation: Option<f64>,
    pub violating_fraction: Option<f64>,
    pub flags: Vec<Flag>,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub runtime: f64,
}

impl ExperimentReport {
    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Per-replica values of a column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.replicas.iter().map(|r| r.values[j]).collect())
    }

    pub fn has_flag(&self, kind: FlagKind) -> bool {
        self.flags.iter().any(|f| f.kind == kind)
    }

    /// 1 for a hypothesis violation, 3 for an invalid experiment, 2 for
    /// missing replicas, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.has_flag(FlagKind::HypothesisViolation) {
            1
        } else if self.has_flag(FlagKind::TruncationLeak) {
            3
        } else if self.has_flag(FlagKind::MissingReplicas) {
            2
        } else {
            0
        }
    }

    fn push_summary(&mut self, key: impl Into<String>, value: f64) {
        self.summary.push((key.into(), value));
    }
}

/// A replica-parallel study.
pub trait Experiment: Serialize + Sync {
    fn name(&self) -> &'static str;

    fn master_seed(&self) -> u64;

    /// Hash of every parameter of the experiment.
    fn digest(&self) -> String {
        digest_of(&(self.name(), self))
    }

    fn columns(&self) -> Vec<String>;

    /// Parameter and hypothesis checks, run once before any replica.
    fn preflight(&self) -> Result<Vec<Flag>> {
        Ok(Vec::new())
    }

    fn run_replica(&self, replica: u32) -> Result<Vec<f64>>;

    /// Fill summary, tables and violation fields from the surviving rows.
    fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()>;
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

/// Run `replicas` on a pool of `workers` threads and aggregate.
///
/// A failing or panicking replica is listed in `missing` and flagged; if
/// every replica fails the first error is returned.
pub fn mc_drive<E: Experiment>(exp: &E, replicas: Range<u32>, workers: usize) -> Result<ExperimentReport> {
    if replicas.is_empty() {
        return Err(Error::contract("need at least one replica"));
    }
    let start = Instant::now();
    let mut flags = exp.preflight()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<(u32, Result<Vec<f64>>)> = pool.install(|| {
        replicas
            .clone()
            .into_par_iter()
            .map(|r| {
                let out = match catch_unwind(AssertUnwindSafe(|| exp.run_replica(r))) {
                    Ok(res) => res,
                    Err(p) => Err(Error::numeric(
                        format!("replica {r} panicked: {}", panic_message(p)),
                        None,
                    )),
                };
                (r, out)
            })
            .collect()
    });
    let n_cols = exp.columns().len();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    let mut first_err = None;
    for (replica, out) in outcomes {
        match out {
            Ok(values) => {
                debug_assert_eq!(values.len(), n_cols);
                rows.push(ReplicaRow { replica, values });
            }
            Err(e) => {
                missing.push(MissingReplica {
                    replica,
                    reason: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if rows.is_empty() {
        return Err(first_err.expect("nonempty range"));
    }
    if !missing.is_empty() {
        flags.push(Flag::new(
            FlagKind::MissingReplicas,
            format!("{} of {} replicas failed", missing.len(), replicas.len()),
        ));
    }
    let mut report = ExperimentReport {
        name: exp.name().to_string(),
        config_digest: exp.digest(),
        master_seed: exp.master_seed(),
        columns: exp.columns(),
        replicas: Vec::new(),
        missing,
        summary: Vec::new(),
        tables: Vec::new(),
        max_violation: None,
        violating_fraction: None,
        flags,
        runtime: 0.0,
    };
    exp.aggregate(&rows, &mut report)?;
    report.replicas = rows;
    report.runtime = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Median of the finite values, `NaN` if there are none.
pub fn median(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    Data::new(v).median()
}

fn column_of(rows: &[ReplicaRow], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r.values[j]).collect()
}

fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn dt_levels(dt: f64, halvings: u32) -> Vec<f64> {
    (0..=halvings).map(|k| dt / f64::from(1u32 << k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Toy {
        fail_on: Option<u32>,
        panic_on: Option<u32>,
    }

    impl Experiment for Toy {
        fn name(&self) -> &'static str {
            "toy"
        }
        fn master_seed(&self) -> u64 {
            7
        }
        fn columns(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn run_replica(&self, replica: u32) -> Result<Vec<f64>> {
            if self.fail_on == Some(replica) {
                return Err(Error::numeric("no convergence", None));
            }
            if self.panic_on == Some(replica) {
                panic!("boom");
            }
            Ok(vec![crate::noise::keyed_normal(7, replica, 0, 0)])
        }
        fn aggregate(&self, rows: &[ReplicaRow], report: &mut ExperimentReport) -> Result<()> {
            let s: f64 = rows.iter().map(|r| r.values[0]).sum();
            report.push_summary("sum", s);
            Ok(())
        }
    }

    #[test]
    fn worker_count_does_not_change_content() {
        let toy = Toy {
            fail_on: None,
            panic_on: None,
        };
        let a = mc_drive(&toy, 0..64, 1).unwrap();
        let b = mc_drive(&toy, 0..64, 4).unwrap();
        assert_eq!(a.replicas, b.replicas);
        assert_eq!(
            a.summary_value("sum").unwrap().to_bits(),
            b.summary_value("sum").unwrap().to_bits()
        );
        assert_eq!(a.config_digest, b.config_digest);
        assert_eq!(a.exit_code(), 0);
    }

    #[test]
    fn failures_are_listed() {
        let toy = Toy {
            fail_on: Some(3),
            panic_on: Some(5),
        };
        let r = mc_drive(&toy, 0..8, 2).unwrap();
        assert_eq!(r.replicas.len(), 6);
        let ids: Vec<u32> = r.missing.iter().map(|m| m.replica).collect();
        assert_eq!(ids, vec![3, 5]);
        assert!(r.missing[1].reason.contains("boom"));
        assert_eq!(r.exit_code(), 2);
        assert!(mc_drive(&toy, 0..0, 1).is_err());
        let all_fail = Toy {
            fail_on: Some(0),
            panic_on: None,
        };
        assert!(matches!(mc_drive(&all_fail, 0..1, 1), Err(Error::Numeric { .. })));
    }

    #[test]
    fn digest_tracks_parameters() {
        let a = Toy {
            fail_on: None,
            panic_on: None,
        };
        let b = Toy {
            fail_on: Some(1),
            panic_on: None,
        };
        assert_eq!(a.digest(), a.digest());
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn median_ignores_missing() {
        assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
        assert!(median(&[f64::NAN]).is_nan());
        assert_eq!(dt_levels(1.0, 2), vec![1.0, 0.5, 0.25]);
    }
}
