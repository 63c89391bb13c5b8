//! Fixtures shared by the benchmarks.

use shelab_core::experiments::SimulateExperiment;
use shelab_core::model::ScalarFn;
use shelab_core::{Boundary, CrossingSpec, InitialProfile, LatticeDomain, ModelSpec, SolverConfig};

/// `b(x) = x²`, `σ(x) = x`.
pub fn quadratic_model() -> ModelSpec {
    ModelSpec::new("x^2|linear", ScalarFn::power(1.0, 2.0), ScalarFn::linear(1.0))
}

/// Dirichlet `[0, 1]` with `2^k + 1` sites.
pub fn unit_interval(k: i32) -> LatticeDomain {
    LatticeDomain::interval(0.0, 1.0, 2f64.powi(-k), Boundary::Dirichlet).expect("valid lattice")
}

/// Indicator data of height 4 on a 65-site lattice up to `t_end`.
pub fn small_simulation(t_end: f64) -> SimulateExperiment {
    let domain = unit_interval(6);
    SimulateExperiment {
        model: quadratic_model(),
        solver: SolverConfig::euler(domain.epsilon, t_end),
        domain,
        initial: InitialProfile::Indicator {
            lo: 1.0 / 3.0,
            hi: 2.0 / 3.0,
            height: 4.0,
        },
        crossing: Some(CrossingSpec::default()),
        master_seed: 1,
    }
}
