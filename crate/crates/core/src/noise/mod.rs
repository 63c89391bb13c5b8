//! Keyed Gaussian increments for every (replica, site, step).
//!
//! A draw is a pure function of `(master_seed, replica, site, step)`:
//!
//! * key     = `[seed as u32, (seed >> 32) as u32]`
//! * counter = `[step as u32, (step >> 32) as u32, site as i32 as u32, replica]`
//! * `w = philox4x32_10(counter, key)`, `bits = (w[1] as u64) << 32 | w[0]`
//! * `u = ((bits >> 12) + 0.5) · 2⁻⁵² ∈ (0, 1)`, exact in `f64`; `z = Φ⁻¹(u)`
//! * increment `ΔB = √dt_base · z`
//!
//! Sites are absolute lattice indices at the finest spacing, so domains that
//! overlap in space read identical noise on shared sites.

mod philox;

pub use philox::philox4x32_10;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lattice::LatticeDomain;

/// `u ∈ (0, 1)` from 64 random bits.
#[inline]
pub fn bits_to_uniform(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[inline]
pub fn uniform_to_normal(u: f64) -> f64 {
    // construction with fixed valid parameters cannot fail
    thread_local!(static STD: Normal = Normal::standard());
    STD.with(|n| n.inverse_cdf(u))
}

/// Raw 64-bit draw for a key.
#[inline]
pub fn keyed_bits(seed: u64, replica: u32, site: i32, step: u64) -> u64 {
    let w = philox4x32_10(
        [step as u32, (step >> 32) as u32, site as u32, replica],
        [seed as u32, (seed >> 32) as u32],
    );
    (w[1] as u64) << 32 | w[0] as u64
}

/// Standard normal for a key.
#[inline]
pub fn keyed_normal(seed: u64, replica: u32, site: i32, step: u64) -> f64 {
    uniform_to_normal(bits_to_uniform(keyed_bits(seed, replica, site, step)))
}

/// Noise at the finest resolution `(base_epsilon, base_dt)` for one replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub master_seed: u64,
    pub base_epsilon: f64,
    pub base_dt: f64,
    pub replica_id: u32,
}

fn dyadic_factor(ratio: f64) -> Option<u32> {
    let k = ratio.log2().round();
    ((0.0..31.0).contains(&k) && (ratio - 2f64.powi(k as i32)).abs() <= 1e-9 * ratio).then_some(k as u32)
}

fn integer_factor(ratio: f64) -> Option<u64> {
    let m = ratio.round();
    (m >= 1.0 && (ratio - m).abs() <= 1e-9 * ratio && m < 1e15).then_some(m as u64)
}

impl NoiseSource {
    pub fn new(master_seed: u64, base_epsilon: f64, base_dt: f64, replica_id: u32) -> Result<Self> {
        if !(base_epsilon > 0.0 && base_dt > 0.0) {
            return Err(Error::contract("base spacing and step must be positive"));
        }
        Ok(NoiseSource {
            master_seed,
            base_epsilon,
            base_dt,
            replica_id,
        })
    }

    pub fn with_replica(&self, replica_id: u32) -> Self {
        NoiseSource { replica_id, ..*self }
    }

    /// `ΔB ~ N(0, base_dt)` at an absolute fine site and fine step.
    #[inline]
    pub fn site_increment(&self, site: i64, step: u64) -> f64 {
        self.base_dt.sqrt() * self.standard_normal(site, step)
    }

    #[inline]
    pub fn standard_normal(&self, site: i64, step: u64) -> f64 {
        keyed_normal(self.master_seed, self.replica_id, site as i32, step)
    }

    /// Provider for a domain at the base spacing and base step.
    pub fn coupled_view(&self, domain: &LatticeDomain) -> Result<NoiseView> {
        if (domain.epsilon - self.base_epsilon).abs() > 1e-12 * self.base_epsilon {
            return Err(Error::contract(format!(
                "domain spacing {} differs from the noise base spacing {}",
                domain.epsilon, self.base_epsilon
            )));
        }
        self.view(domain.epsilon, self.base_dt)
    }

    /// Provider at spacing `2^k · base_epsilon` and the base step.
    pub fn refine(&self, coarse_epsilon: f64) -> Result<NoiseView> {
        self.view(coarse_epsilon, self.base_dt)
    }

    /// Provider at spacing `epsilon = 2^k · base_epsilon` and step
    /// `dt = m · base_dt` for integers `k ≥ 0`, `m ≥ 1`.
    pub fn view(&self, epsilon: f64, dt: f64) -> Result<NoiseView> {
        let k = dyadic_factor(epsilon / self.base_epsilon).ok_or_else(|| {
            Error::contract(format!(
                "spacing {epsilon} is not a power-of-two multiple of {}",
                self.base_epsilon
            ))
        })?;
        let m = integer_factor(dt / self.base_dt)
            .ok_or_else(|| Error::contract(format!("step {dt} is not an integer multiple of {}", self.base_dt)))?;
        Ok(NoiseView {
            source: *self,
            space_factor: 1 << k,
            time_factor: m,
            space_norm: 1.0 / ((1u64 << k) as f64).sqrt(),
        })
    }
}

/// Increments `ΔB ~ N(0, dt)` for coarse site `g` (covering fine sites
/// `g·2^k .. g·2^k + 2^k − 1`) and coarse step `s` (covering fine steps
/// `s·m .. s·m + m − 1`):
/// `ΔB = 2^(−k/2) Σ_fine-sites Σ_fine-steps ΔB_fine`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseView {
    pub source: NoiseSource,
    pub space_factor: u32,
    pub time_factor: u64,
    space_norm: f64,
}

impl NoiseView {
    pub fn epsilon(&self) -> f64 {
        self.source.base_epsilon * self.space_factor as f64
    }

    pub fn dt(&self) -> f64 {
        self.source.base_dt * self.time_factor as f64
    }

    pub fn with_replica(&self, replica_id: u32) -> Self {
        NoiseView {
            source: self.source.with_replica(replica_id),
            ..*self
        }
    }

    /// Increment at absolute coarse site `site` and coarse step `step`.
    #[inline]
    pub fn increment(&self, site: i64, step: u64) -> f64 {
        if self.space_factor == 1 && self.time_factor == 1 {
            return self.source.site_increment(site, step);
        }
        let f0 = site * self.space_factor as i64;
        let s0 = step * self.time_factor;
        let mut total = 0.0;
        for r in 0..self.time_factor {
            let mut cell = 0.0;
            for q in 0..self.space_factor as i64 {
                cell += self.source.site_increment(f0 + q, s0 + r);
            }
            total += cell;
        }
        self.space_norm * total
    }

    /// Whether every fine site under `domain` fits the 32-bit site key.
    pub fn covers(&self, domain: &LatticeDomain) -> bool {
        let f = self.space_factor as i64;
        let lo = domain.origin_index * f;
        let hi = domain.end_index * f + f - 1;
        lo >= i32::MIN as i64 && hi <= i32::MAX as i64
    }

    /// Increments for every site of `domain` at `step`.
    pub fn fill_increments(&self, domain: &LatticeDomain, step: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), domain.n_sites());
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.increment(domain.global_index(i), step);
        }
    }
}
