//! Time-steppers for the lattice system
//! `dU = (1/2ε²)ΔU dt + b(U ∧ J) dt + σ(U) ε^(−1/2) dB`.

mod initial;
mod run;

pub use initial::{initial_profile, InitialProfile};
pub use run::{run, run_truncated_family, Event, EventKind, Record, Simulation, Trajectory, TruncatedFamily};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, KernelMatrix, LatticeDomain};
use crate::model::ModelSpec;
use crate::noise::NoiseView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    /// Per-site SDE substeps over each splitting interval, then kernel mixing.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativityPolicy {
    ClampToZero,
    Allow,
}

/// Default numerical blowup threshold.
pub const DEFAULT_FIELD_CAP: f64 = 1_073_741_824.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// `J` in `b(u ∧ J)`; `None` leaves the drift uncapped.
    pub drift_cap: Option<f64>,
    pub field_cap: f64,
    pub negativity: NegativityPolicy,
    /// Record a snapshot every this many steps; 0 records only the initial
    /// state, crossing events and the final state.
    pub record_every: u64,
    /// Splitting interval `1/n` of the alternating scheme.
    pub splitting_interval: Option<f64>,
}

impl SolverConfig {
    /// Euler–Maruyama with `dt = ε²/4` and default caps.
    pub fn euler(epsilon: f64, t_end: f64) -> Self {
        SolverConfig {
            dt: 0.25 * epsilon * epsilon,
            t_end,
            scheme: Scheme::EulerMaruyama,
            drift_cap: None,
            field_cap: DEFAULT_FIELD_CAP,
            negativity: NegativityPolicy::ClampToZero,
            record_every: 0,
            splitting_interval: None,
        }
    }

    /// Alternating scheme with interval `h` and `dt = h/8`.
    pub fn alternating(h: f64, t_end: f64) -> Self {
        SolverConfig {
            dt: h / 8.0,
            scheme: Scheme::Alternating,
            splitting_interval: Some(h),
            ..SolverConfig::euler(1.0, t_end)
        }
    }

    /// Number of `dt` substeps per splitting interval.
    pub fn substeps(&self) -> Result<u64> {
        let h = self
            .splitting_interval
            .ok_or_else(|| Error::contract("alternating scheme needs a splitting interval"))?;
        let m = (h / self.dt).round();
        if !(m >= 1.0) || (h / self.dt - m).abs() > 1e-9 * m {
            return Err(Error::contract(format!(
                "splitting interval {h} is not an integer multiple of dt = {}",
                self.dt
            )));
        }
        Ok(m as u64)
    }

    /// Total number of steps (of `dt` for Euler, of the splitting interval
    /// for the alternating scheme).
    pub fn n_steps(&self) -> Result<u64> {
        let unit = match self.scheme {
            Scheme::EulerMaruyama => self.dt,
            Scheme::Alternating => self.splitting_interval.unwrap_or(self.dt),
        };
        let r = self.t_end / unit;
        let n = r.round();
        if (r - n).abs() > 1e-9 * n.max(1.0) {
            if self.scheme == Scheme::Alternating {
                return Err(Error::contract(format!(
                    "t_end = {} is not a multiple of the splitting interval {unit}",
                    self.t_end
                )));
            }
            return Ok(r.ceil() as u64);
        }
        Ok(n as u64)
    }

    pub fn validate(&self, domain: &LatticeDomain) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::contract(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::contract(format!("t_end must be ≥ 0, got {}", self.t_end)));
        }
        if !(self.field_cap > 0.0) {
            return Err(Error::contract("field_cap must be positive"));
        }
        if let Some(j) = self.drift_cap {
            if !(j > 0.0) {
                return Err(Error::contract(format!("drift cap must be positive, got {j}")));
            }
        }
        match self.scheme {
            Scheme::EulerMaruyama => {
                let bound = 0.5 * domain.epsilon * domain.epsilon;
                if self.dt > bound * (1.0 + 1e-12) {
                    return Err(Error::contract(format!(
                        "dt = {} exceeds the stability bound ε²/2 = {bound}",
                        self.dt
                    )));
                }
            }
            Scheme::Alternating => {
                self.substeps()?;
            }
        }
        self.n_steps()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Running,
    /// First time some site reached the field cap; `overflow` marks a
    /// non-finite value.
    BlownUp {
        t: f64,
        site: usize,
        overflow: bool,
    },
    Finished,
}

impl Status {
    pub fn blowup_time(&self) -> Option<f64> {
        match self {
            Status::BlownUp { t, .. } => Some(*t),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::BlownUp { .. } => "blown_up",
            Status::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Number of site updates clamped to zero.
    pub clamp_count: u64,
    /// `ε · Σ |clamped value|`
    pub clamp_mass: f64,
    /// Mass `ε · Σ` absorbed at truncation ends (free-truncated domains).
    pub boundary_leak: f64,
    /// Largest site value seen so far.
    pub sup_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldState {
    pub t: f64,
    /// Steps of `dt` taken so far; doubles as the noise step index.
    pub step: u64,
    pub values: Vec<f64>,
    pub status: Status,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    scratch: Vec<f64>,
}

impl FieldState {
    pub fn new(values: Vec<f64>) -> Self {
        let sup = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let n = values.len();
        FieldState {
            t: 0.0,
            step: 0,
            values,
            status: Status::Running,
            diagnostics: Diagnostics {
                sup_value: sup,
                ..Default::default()
            },
            scratch: vec![0.0; n],
        }
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }
}

#[inline]
fn capped(u: f64, cap: Option<f64>) -> f64 {
    match cap {
        Some(j) => u.min(j),
        None => u,
    }
}

/// Negativity policy, then cap check, for a freshly updated site.
#[inline]
fn settle(v: &mut f64, site: usize, cfg: &SolverConfig, eps: f64, diag: &mut Diagnostics) -> Option<Status> {
    if cfg.negativity == NegativityPolicy::ClampToZero && *v < 0.0 {
        diag.clamp_count += 1;
        diag.clamp_mass += eps * -*v;
        *v = 0.0;
    }
    if !v.is_finite() {
        return Some(Status::BlownUp {
            t: 0.0,
            site,
            overflow: true,
        });
    }
    if *v > diag.sup_value {
        diag.sup_value = *v;
    }
    (*v >= cfg.field_cap).then_some(Status::BlownUp {
        t: 0.0,
        site,
        overflow: false,
    })
}

fn stamp(status: Option<Status>, t: f64) -> Status {
    match status {
        Some(Status::BlownUp { site, overflow, .. }) => Status::BlownUp { t, site, overflow },
        _ => Status::Running,
    }
}

fn require_running(state: &FieldState, domain: &LatticeDomain) -> Result<()> {
    if !state.is_running() {
        return Err(Error::contract("cannot step a state that is not running"));
    }
    if state.values.len() != domain.n_sites() {
        return Err(Error::contract(format!(
            "state has {} sites, domain has {}",
            state.values.len(),
            domain.n_sites()
        )));
    }
    Ok(())
}

/// One explicit Euler–Maruyama step of size `cfg.dt`.
///
/// The diffusion part `(1 − 2c)u + c(a + b)`, `c = dt/2ε²`, is clamped into
/// `[min, max]` of `(u, a, b)`, so with `b = σ = 0` the step obeys the
/// discrete maximum principle exactly in floating point.
pub fn euler_step(
    state: &mut FieldState,
    domain: &LatticeDomain,
    model: &ModelSpec,
    noise: &NoiseView,
    cfg: &SolverConfig,
) -> Result<()> {
    let step = state.step;
    euler_step_by(state, domain, model, cfg, |i| {
        noise.increment(domain.global_index(i), step)
    })
}

/// As [`euler_step`] with precomputed increments `ΔB` per local site.
pub fn euler_step_with_increments(
    state: &mut FieldState,
    domain: &LatticeDomain,
    model: &ModelSpec,
    increments: &[f64],
    cfg: &SolverConfig,
) -> Result<()> {
    if increments.len() != domain.n_sites() {
        return Err(Error::contract(format!(
            "{} increments for {} sites",
            increments.len(),
            domain.n_sites()
        )));
    }
    euler_step_by(state, domain, model, cfg, |i| increments[i])
}

fn euler_step_by(
    state: &mut FieldState,
    domain: &LatticeDomain,
    model: &ModelSpec,
    cfg: &SolverConfig,
    mut increment: impl FnMut(usize) -> f64,
) -> Result<()> {
    require_running(state, domain)?;
    let n = domain.n_sites();
    let eps = domain.epsilon;
    let dt = cfg.dt;
    let c = dt / (2.0 * eps * eps);
    let inv_sqrt_eps = 1.0 / eps.sqrt();
    let absorbing = domain.boundary.is_absorbing();
    let u = &state.values;
    let out = &mut state.scratch;
    let mut blow = None;
    for i in 0..n {
        let ui = u[i];
        let (a, b) = match domain.boundary {
            Boundary::Periodic => (u[(i + n - 1) % n], u[(i + 1) % n]),
            Boundary::Neumann => (
                if i == 0 { ui } else { u[i - 1] },
                if i + 1 == n { ui } else { u[i + 1] },
            ),
            Boundary::Dirichlet | Boundary::FreeTruncated => (
                if i <= 1 { 0.0 } else { u[i - 1] },
                if i + 2 >= n { 0.0 } else { u[i + 1] },
            ),
        };
        if absorbing && (i == 0 || i + 1 == n) {
            // mass the walk deposits on the absorbing site during this step
            let inflow = c * if i == 0 { u[1] } else { u[n - 2] };
            if domain.boundary == Boundary::FreeTruncated {
                state.diagnostics.boundary_leak += eps * inflow.abs();
            }
            out[i] = 0.0;
            continue;
        }
        let lo = ui.min(a).min(b);
        let hi = ui.max(a).max(b);
        let mut v = ((1.0 - 2.0 * c) * ui + c * (a + b)).clamp(lo, hi);
        v += dt * model.b(capped(ui, cfg.drift_cap));
        let s = model.sigma(ui);
        if s != 0.0 {
            v += s * inv_sqrt_eps * increment(i);
        }
        out[i] = v;
        if let Some(st) = settle(&mut out[i], i, cfg, eps, &mut state.diagnostics) {
            blow.get_or_insert(st);
        }
    }
    std::mem::swap(&mut state.values, &mut state.scratch);
    state.step += 1;
    state.t = state.step as f64 * dt;
    state.status = stamp(blow, state.t);
    Ok(())
}

/// One splitting interval of the alternating scheme: `m = h/dt` per-site SDE
/// substeps, then `U ← K_h U`. Stops early if a substep reaches the cap.
pub fn alternating_step(
    state: &mut FieldState,
    domain: &LatticeDomain,
    model: &ModelSpec,
    noise: &NoiseView,
    kernel: &KernelMatrix,
    cfg: &SolverConfig,
) -> Result<()> {
    require_running(state, domain)?;
    let m = cfg.substeps()?;
    let h = cfg.splitting_interval.expect("checked by substeps");
    if (kernel.time - h).abs() > 1e-12 * h || kernel.n() != domain.n_sites() {
        return Err(Error::contract(format!(
            "kernel time {} does not match the splitting interval {h}",
            kernel.time
        )));
    }
    let eps = domain.epsilon;
    let dt = cfg.dt;
    let inv_sqrt_eps = 1.0 / eps.sqrt();
    for _ in 0..m {
        let step = state.step;
        let mut blow = None;
        for i in 0..domain.n_sites() {
            if domain.is_pinned(i) {
                continue;
            }
            let x = state.values[i];
            let mut v = x + dt * model.b(capped(x, cfg.drift_cap));
            let s = model.sigma(x);
            if s != 0.0 {
                v += s * inv_sqrt_eps * noise.increment(domain.global_index(i), step);
            }
            state.values[i] = v;
            if let Some(st) = settle(&mut state.values[i], i, cfg, eps, &mut state.diagnostics) {
                blow.get_or_insert(st);
            }
        }
        state.step += 1;
        state.t = state.step as f64 * dt;
        if blow.is_some() {
            state.status = stamp(blow, state.t);
            return Ok(());
        }
    }
    kernel.apply_into(&state.values, &mut state.scratch);
    if domain.boundary == Boundary::FreeTruncated {
        let before: f64 = state.values.iter().sum();
        let after: f64 = state.scratch.iter().sum();
        state.diagnostics.boundary_leak += eps * (before - after).abs();
    }
    std::mem::swap(&mut state.values, &mut state.scratch);
    let mut blow = None;
    for i in 0..domain.n_sites() {
        if let Some(st) = settle(&mut state.values[i], i, cfg, eps, &mut state.diagnostics) {
            blow.get_or_insert(st);
        }
    }
    state.status = stamp(blow, state.t);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::kernel_matrix;
    use crate::model::ScalarFn;
    use crate::noise::NoiseSource;

    fn view(d: &LatticeDomain, dt: f64) -> NoiseView {
        NoiseSource::new(11, d.epsilon, dt, 0).unwrap().coupled_view(d).unwrap()
    }

    fn model(b: ScalarFn, s: ScalarFn) -> ModelSpec {
        ModelSpec::new("m", b, s)
    }

    #[test]
    fn pure_diffusion_keeps_constants_and_max_principle() {
        let d = LatticeDomain::new(0.1, 0, 19, Boundary::Periodic).unwrap();
        let cfg = SolverConfig {
            dt: 0.005,
            ..SolverConfig::euler(0.1, 1.0)
        };
        let m = model(ScalarFn::Zero, ScalarFn::Zero);
        let mut s = FieldState::new(vec![0.3; 20]);
        euler_step(&mut s, &d, &m, &view(&d, cfg.dt), &cfg).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.3));

        let init: Vec<f64> = (0..20).map(|i| ((i * 7919) % 13) as f64 * 0.17 + 0.01).collect();
        let (lo, hi) = init
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mut s = FieldState::new(init);
        for _ in 0..50 {
            euler_step(&mut s, &d, &m, &view(&d, cfg.dt), &cfg).unwrap();
            assert!(s.values.iter().all(|&v| v >= lo && v <= hi));
        }
    }

    #[test]
    fn euler_drift_arithmetic() {
        let d = LatticeDomain::new(0.1, 0, 2, Boundary::Periodic).unwrap();
        let cfg = SolverConfig {
            dt: 1e-3,
            ..SolverConfig::euler(0.1, 1.0)
        };
        let m = model(ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        let mut s = FieldState::new(vec![1.0; 3]);
        euler_step(&mut s, &d, &m, &view(&d, cfg.dt), &cfg).unwrap();
        assert!(s.values.iter().all(|&v| v == 1.0 + 1e-3));
        assert_eq!(s.t, 1e-3);
    }

    #[test]
    fn dirichlet_ends_stay_zero_and_leak_is_tracked() {
        let mut d = LatticeDomain::new(0.1, 0, 10, Boundary::Dirichlet).unwrap();
        let cfg = SolverConfig::euler(0.1, 1.0);
        let m = model(ScalarFn::power(1.0, 2.0), ScalarFn::linear(1.0));
        let mut s = FieldState::new(vec![1.0; 11]);
        for _ in 0..20 {
            euler_step(&mut s, &d, &m, &view(&d, cfg.dt), &cfg).unwrap();
            assert_eq!(s.values[0], 0.0);
            assert_eq!(s.values[10], 0.0);
            assert!(s.values.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(s.diagnostics.boundary_leak, 0.0);
        d.boundary = Boundary::FreeTruncated;
        let mut s = FieldState::new(vec![1.0; 11]);
        euler_step(&mut s, &d, &m, &view(&d, cfg.dt), &cfg).unwrap();
        assert!(s.diagnostics.boundary_leak > 0.0);
    }

    #[test]
    fn blowup_freezes_state() {
        let d = LatticeDomain::new(0.1, 0, 2, Boundary::Periodic).unwrap();
        let cfg = SolverConfig {
            dt: 1e-3,
            field_cap: 1.5,
            ..SolverConfig::euler(0.1, 10.0)
        };
        let m = model(ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        let mut s = FieldState::new(vec![1.0; 3]);
        while s.is_running() {
            euler_step(&mut s, &d, &m, &view(&d, cfg.dt), &cfg).unwrap();
        }
        assert!(matches!(s.status, Status::BlownUp { overflow: false, .. }));
        assert!(euler_step(&mut s, &d, &m, &view(&d, cfg.dt), &cfg).is_err());
    }

    #[test]
    fn stability_and_alignment_validation() {
        let d = LatticeDomain::new(0.1, 0, 10, Boundary::Periodic).unwrap();
        let mut cfg = SolverConfig::euler(0.1, 1.0);
        cfg.validate(&d).unwrap();
        cfg.dt = 0.006;
        assert!(cfg.validate(&d).is_err());
        let mut alt = SolverConfig::alternating(0.01, 1.0);
        alt.validate(&d).unwrap();
        alt.dt = 0.003;
        assert!(matches!(alt.validate(&d), Err(Error::Contract(_))));
        let alt = SolverConfig::alternating(0.3, 1.0);
        assert!(alt.validate(&d).is_err());
    }

    #[test]
    fn alternating_degenerates_to_scalar_euler() {
        let d = LatticeDomain::new(0.1, 0, 4, Boundary::Periodic).unwrap();
        let cfg = SolverConfig::alternating(0.01, 0.1);
        let m = model(ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        let mut k = kernel_matrix(0.01, &d).unwrap();
        k.entries = nalgebra::DMatrix::identity(5, 5);
        let init = vec![1.0, 0.5, 0.25, 2.0, 0.0];
        let mut s = FieldState::new(init.clone());
        alternating_step(&mut s, &d, &m, &view(&d, cfg.dt), &k, &cfg).unwrap();
        for (i, &x0) in init.iter().enumerate() {
            let mut x: f64 = x0;
            for _ in 0..8 {
                x += cfg.dt * x * x;
            }
            assert_eq!(s.values[i], x);
        }

        // b = σ = 0: pure kernel mixing preserves constants
        let k = kernel_matrix(0.01, &d).unwrap();
        let zero = model(ScalarFn::Zero, ScalarFn::Zero);
        let mut s = FieldState::new(vec![0.7; 5]);
        alternating_step(&mut s, &d, &zero, &view(&d, cfg.dt), &k, &cfg).unwrap();
        assert!(s.values.iter().all(|v| (v - 0.7).abs() < 1e-14));
        let wrong = kernel_matrix(0.02, &d).unwrap();
        assert!(alternating_step(&mut s, &d, &zero, &view(&d, cfg.dt), &wrong, &cfg).is_err());
    }

    #[test]
    fn alternating_site_sde_is_geometric_brownian_motion() {
        // σ(u) = u, b = 0, one interval: log U is approximately normal with
        // variance h/ε (the ε^(−1/2) noise scaling)
        let eps = 0.25;
        let d = LatticeDomain::new(eps, 0, 3, Boundary::Periodic).unwrap();
        let h = 0.01;
        let cfg = SolverConfig {
            dt: h / 64.0,
            negativity: NegativityPolicy::Allow,
            ..SolverConfig::alternating(h, h)
        };
        let m = model(ScalarFn::Zero, ScalarFn::linear(1.0));
        let mut k = kernel_matrix(h, &d).unwrap();
        k.entries = nalgebra::DMatrix::identity(4, 4);
        let src = NoiseSource::new(5, eps, cfg.dt, 0).unwrap();
        let reps = 10_000;
        let logs: Vec<f64> = (0..reps)
            .map(|r| {
                let v = src.with_replica(r).coupled_view(&d).unwrap();
                let mut s = FieldState::new(vec![1.0; 4]);
                alternating_step(&mut s, &d, &m, &v, &k, &cfg).unwrap();
                s.values[0].ln()
            })
            .collect();
        let mean = logs.iter().sum::<f64>() / reps as f64;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let target = h / eps;
        assert!((var / target - 1.0).abs() < 0.05, "{var} vs {target}");
    }
}
