use std::sync::Arc;

use serde::Serialize;

use super::{alternating_step, euler_step, FieldState, Scheme, SolverConfig, Status};
use crate::blowup::{CrossingLog, CrossingSpec, CrossingTracker, Direction};
use crate::error::{Error, Result};
use crate::lattice::{kernel_matrix, KernelMatrix, LatticeDomain};
use crate::model::ModelSpec;
use crate::noise::NoiseView;

/// A stepper owning one trajectory's state.
pub struct Simulation<'a> {
    pub domain: LatticeDomain,
    pub model: &'a ModelSpec,
    pub noise: NoiseView,
    pub cfg: &'a SolverConfig,
    kernel: Option<Arc<KernelMatrix>>,
    pub state: FieldState,
    n_steps: u64,
    steps_done: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        domain: LatticeDomain,
        model: &'a ModelSpec,
        noise: NoiseView,
        cfg: &'a SolverConfig,
        u0: Vec<f64>,
    ) -> Result<Self> {
        let kernel = match cfg.scheme {
            Scheme::Alternating => {
                cfg.validate(&domain)?;
                let h = cfg.splitting_interval.expect("validated");
                Some(Arc::new(kernel_matrix(h, &domain)?))
            }
            Scheme::EulerMaruyama => None,
        };
        Self::build(domain, model, noise, cfg, u0, kernel)
    }

    /// As [`Simulation::new`], reusing a kernel built for the splitting interval.
    pub fn with_kernel(
        domain: LatticeDomain,
        model: &'a ModelSpec,
        noise: NoiseView,
        cfg: &'a SolverConfig,
        u0: Vec<f64>,
        kernel: Arc<KernelMatrix>,
    ) -> Result<Self> {
        Self::build(domain, model, noise, cfg, u0, Some(kernel))
    }

    fn build(
        domain: LatticeDomain,
        model: &'a ModelSpec,
        noise: NoiseView,
        cfg: &'a SolverConfig,
        u0: Vec<f64>,
        kernel: Option<Arc<KernelMatrix>>,
    ) -> Result<Self> {
        cfg.validate(&domain)?;
        if u0.len() != domain.n_sites() {
            return Err(Error::contract(format!(
                "initial field has {} values, domain has {} sites",
                u0.len(),
                domain.n_sites()
            )));
        }
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        if !rel(noise.epsilon(), domain.epsilon) || !rel(noise.dt(), cfg.dt) {
            return Err(Error::contract(format!(
                "noise provider resolution (ε = {}, dt = {}) does not match the solver (ε = {}, dt = {})",
                noise.epsilon(),
                noise.dt(),
                domain.epsilon,
                cfg.dt
            )));
        }
        if !noise.covers(&domain) {
            return Err(Error::contract("domain exceeds the 32-bit noise site range"));
        }
        let mut u0 = u0;
        for (i, v) in u0.iter_mut().enumerate() {
            if domain.is_pinned(i) {
                *v = 0.0;
            }
        }
        let n_steps = cfg.n_steps()?;
        let mut state = FieldState::new(u0);
        if let Some(i) = state.values.iter().position(|&v| !(v < cfg.field_cap)) {
            state.status = Status::BlownUp {
                t: 0.0,
                site: i,
                overflow: !state.values[i].is_finite(),
            };
        } else if n_steps == 0 {
            state.status = Status::Finished;
        }
        Ok(Simulation {
            domain,
            model,
            noise,
            cfg,
            kernel,
            state,
            n_steps,
            steps_done: 0,
        })
    }

    pub fn is_running(&self) -> bool {
        self.state.is_running()
    }

    /// Steps taken in scheme units (dt or splitting intervals).
    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    /// Advance by one `dt` (Euler) or one splitting interval (alternating).
    /// No-op once the state is frozen or finished.
    pub fn step(&mut self) -> Result<()> {
        if !self.is_running() {
            return Ok(());
        }
        match &self.kernel {
            None => euler_step(&mut self.state, &self.domain, self.model, &self.noise, self.cfg)?,
            Some(k) => alternating_step(&mut self.state, &self.domain, self.model, &self.noise, k, self.cfg)?,
        }
        self.steps_done += 1;
        if self.is_running() && self.steps_done >= self.n_steps {
            self.state.status = Status::Finished;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.is_running() {
            self.step()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Up,
    Down,
    Blowup,
    Overflow,
    Finished,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Up => "up",
            EventKind::Down => "down",
            EventKind::Blowup => "blowup",
            EventKind::Overflow => "overflow",
            EventKind::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub level: Option<i32>,
    pub site: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub step: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub domain: LatticeDomain,
    pub records: Vec<Record>,
    pub events: Vec<Event>,
    pub crossings: CrossingLog,
    pub final_state: FieldState,
}

impl Trajectory {
    pub fn status(&self) -> Status {
        self.final_state.status
    }

    /// Highest level `n` with an up-crossing.
    pub fn last_up_level(&self) -> Option<i32> {
        self.crossings
            .records
            .iter()
            .filter(|r| r.direction == Direction::Up)
            .map(|r| r.n)
            .max()
    }
}

fn record(sim: &Simulation) -> Record {
    Record {
        t: sim.state.t,
        step: sim.state.step,
        values: sim.state.values.clone(),
    }
}

/// Step to `t_end` or blowup, recording every `record_every` steps, at each
/// crossing, and at the end. With `crossing = None` the sup over the domain is
/// tracked.
pub fn run(
    domain: &LatticeDomain,
    model: &ModelSpec,
    noise: &NoiseView,
    cfg: &SolverConfig,
    u0: &[f64],
    crossing: Option<&CrossingSpec>,
) -> Result<Trajectory> {
    let sim = Simulation::new(*domain, model, *noise, cfg, u0.to_vec())?;
    drive(sim, crossing)
}

pub(crate) fn drive(mut sim: Simulation, crossing: Option<&CrossingSpec>) -> Result<Trajectory> {
    let spec = crossing.cloned().unwrap_or_else(CrossingSpec::sup_over_domain);
    let mut tracker = CrossingTracker::new(spec, &sim.domain)?;
    tracker.observe(sim.state.t, &sim.state.values);
    let mut records = vec![record(&sim)];
    let mut events = Vec::new();
    while sim.is_running() {
        sim.step()?;
        let new = tracker.observe(sim.state.t, &sim.state.values);
        for c in &new {
            events.push(Event {
                t: c.t,
                kind: match c.direction {
                    Direction::Up => EventKind::Up,
                    Direction::Down => EventKind::Down,
                },
                level: Some(c.n),
                site: Some(c.site),
            });
        }
        let periodic = sim.cfg.record_every > 0 && sim.steps_done().is_multiple_of(sim.cfg.record_every);
        if periodic || !new.is_empty() || !sim.is_running() {
            records.push(record(&sim));
        }
    }
    let crossings = tracker.finish();
    let last_up = crossings
        .records
        .iter()
        .filter(|r| r.direction == Direction::Up)
        .map(|r| r.n)
        .max();
    match sim.state.status {
        Status::BlownUp { t, site, overflow } => events.push(Event {
            t,
            kind: if overflow {
                EventKind::Overflow
            } else {
                EventKind::Blowup
            },
            level: last_up,
            site: Some(site),
        }),
        _ => events.push(Event {
            t: sim.state.t,
            kind: EventKind::Finished,
            level: None,
            site: None,
        }),
    }
    if records.len() == 1 && records[0].step != sim.state.step {
        records.push(record(&sim));
    }
    Ok(Trajectory {
        domain: sim.domain,
        records,
        events,
        crossings,
        final_state: sim.state,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncatedFamily {
    pub caps: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// For consecutive caps `J₁ < J₂`: `max` over sites and common running
    /// times of `U^(J₁) − U^(J₂)`; `≤ 0` means the ordering held.
    pub max_violation: Vec<f64>,
    /// Fraction of compared site-times with `U^(J₁) > U^(J₂)`.
    pub violation_fraction: Vec<f64>,
}

/// Solutions with drift `b(u ∧ J)` for each `J`, driven by the same noise.
pub fn run_truncated_family(
    domain: &LatticeDomain,
    model: &ModelSpec,
    noise: &NoiseView,
    cfg: &SolverConfig,
    u0: &[f64],
    caps: &[f64],
    crossing: Option<&CrossingSpec>,
) -> Result<TruncatedFamily> {
    if caps.is_empty() || caps.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::contract("drift caps must be nonempty and strictly ascending"));
    }
    let cfgs: Vec<SolverConfig> = caps
        .iter()
        .map(|&j| SolverConfig {
            drift_cap: Some(j),
            ..cfg.clone()
        })
        .collect();
    let kernel = match cfg.scheme {
        Scheme::Alternating => {
            cfg.validate(domain)?;
            Some(Arc::new(kernel_matrix(
                cfg.splitting_interval.expect("validated"),
                domain,
            )?))
        }
        Scheme::EulerMaruyama => None,
    };
    let spec = crossing.cloned().unwrap_or_else(CrossingSpec::sup_over_domain);
    let mut sims = Vec::with_capacity(caps.len());
    let mut trackers = Vec::with_capacity(caps.len());
    let mut records: Vec<Vec<Record>> = Vec::with_capacity(caps.len());
    let mut events: Vec<Vec<Event>> = vec![Vec::new(); caps.len()];
    for c in &cfgs {
        let sim = match &kernel {
            Some(k) => Simulation::with_kernel(*domain, model, *noise, c, u0.to_vec(), k.clone())?,
            None => Simulation::new(*domain, model, *noise, c, u0.to_vec())?,
        };
        let mut tr = CrossingTracker::new(spec.clone(), domain)?;
        tr.observe(sim.state.t, &sim.state.values);
        records.push(vec![record(&sim)]);
        trackers.push(tr);
        sims.push(sim);
    }
    let pairs = caps.len().saturating_sub(1);
    let mut max_violation = vec![0.0_f64; pairs];
    let mut violations = vec![0u64; pairs];
    let mut compared = vec![0u64; pairs];
    while sims.iter().any(|s| s.is_running()) {
        for (k, sim) in sims.iter_mut().enumerate() {
            if !sim.is_running() {
                continue;
            }
            sim.step()?;
            let new = trackers[k].observe(sim.state.t, &sim.state.values);
            for c in &new {
                events[k].push(Event {
                    t: c.t,
                    kind: match c.direction {
                        Direction::Up => EventKind::Up,
                        Direction::Down => EventKind::Down,
                    },
                    level: Some(c.n),
                    site: Some(c.site),
                });
            }
            let periodic = cfg.record_every > 0 && sim.steps_done() % cfg.record_every == 0;
            if periodic || !new.is_empty() || !sim.is_running() {
                records[k].push(record(sim));
            }
        }
        for p in 0..pairs {
            let (a, b) = (&sims[p].state, &sims[p + 1].state);
            // compare only while both are unfrozen and at the same time
            if a.step != b.step || b.status.blowup_time().is_some() || a.status.blowup_time().is_some() {
                continue;
            }
            for (x, y) in a.values.iter().zip(&b.values) {
                let d = x - y;
                max_violation[p] = max_violation[p].max(d);
                compared[p] += 1;
                if d > 0.0 {
                    violations[p] += 1;
                }
            }
        }
    }
    let trajectories = sims
        .into_iter()
        .zip(trackers)
        .zip(records.into_iter().zip(events))
        .map(|((sim, tr), (recs, mut evs))| {
            let crossings = tr.finish();
            let last_up = crossings
                .records
                .iter()
                .filter(|r| r.direction == Direction::Up)
                .map(|r| r.n)
                .max();
            evs.push(match sim.state.status {
                Status::BlownUp { t, site, overflow } => Event {
                    t,
                    kind: if overflow {
                        EventKind::Overflow
                    } else {
                        EventKind::Blowup
                    },
                    level: last_up,
                    site: Some(site),
                },
                _ => Event {
                    t: sim.state.t,
                    kind: EventKind::Finished,
                    level: None,
                    site: None,
                },
            });
            Trajectory {
                domain: sim.domain,
                records: recs,
                events: evs,
                crossings,
                final_state: sim.state,
            }
        })
        .collect();
    Ok(TruncatedFamily {
        caps: caps.to_vec(),
        trajectories,
        max_violation,
        violation_fraction: violations
            .iter()
            .zip(&compared)
            .map(|(&v, &c)| if c == 0 { 0.0 } else { v as f64 / c as f64 })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{initial_profile, InitialProfile};
    use crate::lattice::Boundary;
    use crate::model::ScalarFn;
    use crate::noise::NoiseSource;

    fn view(d: &LatticeDomain, dt: f64, seed: u64) -> NoiseView {
        NoiseSource::new(seed, d.epsilon, dt, 0)
            .unwrap()
            .coupled_view(d)
            .unwrap()
    }

    #[test]
    fn zero_horizon_records_initial_state() {
        let d = LatticeDomain::new(0.1, 0, 9, Boundary::Periodic).unwrap();
        let cfg = SolverConfig::euler(0.1, 0.0);
        let m = ModelSpec::new("m", ScalarFn::power(1.0, 2.0), ScalarFn::linear(1.0));
        let tr = run(&d, &m, &view(&d, cfg.dt, 1), &cfg, &[1.0; 10], None).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.records[0].values, vec![1.0; 10]);
        assert_eq!(tr.status(), Status::Finished);
    }

    #[test]
    fn dirichlet_heat_mass_decreases_and_matches_kernel() {
        let d = LatticeDomain::interval(0.0, 1.0, 1.0 / 16.0, Boundary::Dirichlet).unwrap();
        let mut cfg = SolverConfig::euler(d.epsilon, 0.05);
        cfg.dt /= 16.0;
        cfg.record_every = 1;
        let zero = ModelSpec::new("heat", ScalarFn::Zero, ScalarFn::Zero);
        let mut u0 = vec![0.0; d.n_sites()];
        u0[8] = 16.0;
        let tr = run(&d, &zero, &view(&d, cfg.dt, 1), &cfg, &u0, None).unwrap();
        let masses: Vec<f64> = tr.records.iter().map(|r| r.values.iter().sum::<f64>()).collect();
        assert!(masses.windows(2).all(|w| w[1] <= w[0]));
        assert!(masses.last().unwrap() < &masses[0]);
        let last = &tr.records.last().unwrap().values;
        // the step is exactly (I + dt·Q)^k applied to u0
        let q = crate::lattice::generator_matrix(&d);
        let step = nalgebra::DMatrix::identity(d.n_sites(), d.n_sites()) + q * cfg.dt;
        let mut v = nalgebra::DVector::from_vec(u0.clone());
        for _ in 0..tr.final_state.step {
            v = &step * v;
        }
        let err = v.iter().zip(last).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        // and approximates exp(tQ) to O(dt)
        let exact = kernel_matrix(cfg.t_end, &d).unwrap().apply(&u0);
        let err = exact.iter().zip(last).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn deterministic_blowup_time() {
        let d = LatticeDomain::interval(0.0, 1.0, 1.0 / 8.0, Boundary::Periodic).unwrap();
        let cfg = SolverConfig {
            dt: 1e-4,
            ..SolverConfig::euler(d.epsilon, 2.0)
        };
        let m = ModelSpec::new("ode", ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        let tr = run(&d, &m, &view(&d, cfg.dt, 1), &cfg, &[1.0; 8], None).unwrap();
        let t = tr.status().blowup_time().unwrap();
        assert!((t - 1.0).abs() < 0.05, "{t}");
        // up-crossing of 2^(n+1) near 1 − 2^(−n−1)
        for r in tr.crossings.records.iter().take(8) {
            let expected = 1.0 - 2f64.powi(-r.n - 1);
            assert!((r.t - expected).abs() < 5e-3, "n={} t={}", r.n, r.t);
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let d = LatticeDomain::interval(0.0, 1.0, 1.0 / 16.0, Boundary::Dirichlet).unwrap();
        let mut cfg = SolverConfig::euler(d.epsilon, 0.05);
        cfg.record_every = 7;
        let m = ModelSpec::new("m", ScalarFn::power(1.0, 2.0), ScalarFn::linear(1.0));
        let u0 = initial_profile(&InitialProfile::Constant { value: 2.0 }, &d);
        let a = run(&d, &m, &view(&d, cfg.dt, 9), &cfg, &u0, None).unwrap();
        let b = run(&d, &m, &view(&d, cfg.dt, 9), &cfg, &u0, None).unwrap();
        assert_eq!(a.records, b.records);
        let c = run(&d, &m, &view(&d, cfg.dt, 10), &cfg, &u0, None).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn truncated_family_single_site_ordering() {
        // Neumann with a flat field has no Laplacian contribution
        let d = LatticeDomain::new(0.1, 0, 2, Boundary::Neumann).unwrap();
        let cfg = SolverConfig {
            dt: 1e-3,
            field_cap: 1e6,
            ..SolverConfig::euler(0.1, 2.0)
        };
        let m = ModelSpec::new("m", ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        let fam = run_truncated_family(&d, &m, &view(&d, cfg.dt, 1), &cfg, &[1.0; 3], &[10.0, 100.0], None).unwrap();
        assert!(fam.max_violation[0] <= 0.0);
        assert_eq!(fam.violation_fraction[0], 0.0);

        // inactive cap: identical to the uncapped run
        let big = run_truncated_family(&d, &m, &view(&d, cfg.dt, 1), &cfg, &[1.0; 3], &[1e9], None).unwrap();
        let free = run(&d, &m, &view(&d, cfg.dt, 1), &cfg, &[1.0; 3], None).unwrap();
        assert_eq!(big.trajectories[0].final_state.values, free.final_state.values);
        assert!(run_truncated_family(&d, &m, &view(&d, cfg.dt, 1), &cfg, &[1.0; 3], &[5.0, 5.0], None).is_err());
    }
}
