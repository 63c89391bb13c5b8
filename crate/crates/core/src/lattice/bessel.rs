//! Exponentially scaled modified Bessel functions `e^(−τ) I_j(τ)` for integer
//! order, which are exactly the transition probabilities of the rate-1
//! continuous-time simple random walk.

use crate::error::{Error, Result};

/// Above this argument the asymptotic forms replace the backward recurrence.
pub const ASYMPTOTIC_THRESHOLD: f64 = 700.0;

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::numeric(
            format!("walk time tau = {tau} is not a finite nonnegative number"),
            None,
        ));
    }
    Ok(())
}

fn miller_start(jmax: usize, tau: f64) -> usize {
    jmax + 10 + (20.0 * (tau + 1.0).sqrt()).ceil() as usize
}

/// `e^(−τ) I_j(τ)` for `j = 0..=jmax` by Miller's backward recurrence
/// `I_{k−1} = (2k/τ) I_k + I_{k+1}`, normalized with `Σ_{j∈ℤ} e^(−τ) I_j(τ) = 1`.
pub fn miller(jmax: usize, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let mut out = vec![0.0; jmax + 1];
    if tau == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let start = miller_start(jmax, tau);
    let (mut next, mut cur) = (0.0_f64, 1e-300_f64);
    // sum accumulates I_0 + 2 Σ_{k≥1} I_k, in the same (unnormalized) scale
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        if k <= jmax {
            out[k] = cur;
        }
        sum += 2.0 * cur;
        let prev = (2.0 * k as f64 / tau) * cur + next;
        next = cur;
        cur = prev;
        if cur > RESCALE_ABOVE {
            cur *= RESCALE_BY;
            next *= RESCALE_BY;
            sum *= RESCALE_BY;
            for v in out.iter_mut() {
                *v *= RESCALE_BY;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

/// `e^(−τ) I_0(τ)` from the Hankel expansion, valid for large `τ`.
pub fn hankel_i0(tau: f64) -> f64 {
    // term_k = ((2k−1)!!)^2 / (k! (8τ)^k)
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        let odd = (2 * k - 1) as f64;
        let next = term * odd * odd / (k as f64 * 8.0 * tau);
        if next > term || next < 1e-17 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    sum / (2.0 * std::f64::consts::PI * tau).sqrt()
}

/// `e^(−τ) I_ν(τ)` from the Debye uniform expansion in `ν ≥ 1`, through the
/// fourth correction polynomial.
pub fn debye(nu: f64, tau: f64) -> f64 {
    let root = (nu * nu + tau * tau).sqrt();
    let p = nu / root;
    // ν·η(z) − τ, written without cancellation
    let exponent = nu * nu / (root + tau) + nu * (tau / (nu + root)).ln();
    let p2 = p * p;
    let u1 = p * (3.0 - 5.0 * p2) / 24.0;
    let u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
    let u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2 * p2 - 425425.0 * p2 * p2 * p2) / 414720.0;
    let u4 = p2
        * p2
        * (4465125.0 - 94121676.0 * p2 + 349922430.0 * p2 * p2 - 446185740.0 * p2 * p2 * p2
            + 185910725.0 * p2 * p2 * p2 * p2)
        / 39813120.0;
    let series = 1.0 + u1 / nu + u2 / (nu * nu) + u3 / (nu * nu * nu) + u4 / (nu * nu * nu * nu);
    // 1/(√(2πν)(1+z²)^{1/4}) = √(p/(2πν)) with z = τ/ν
    exponent.exp() * (p / (2.0 * std::f64::consts::PI * nu)).sqrt() * series
}

/// `e^(−τ) I_j(τ)` for `j = 0..=jmax`.
pub fn scaled_bessel_i_table(jmax: usize, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if tau <= ASYMPTOTIC_THRESHOLD {
        return miller(jmax, tau);
    }
    Ok((0..=jmax)
        .map(|j| if j == 0 { hankel_i0(tau) } else { debye(j as f64, tau) })
        .collect())
}

/// `e^(−τ) I_|j|(τ)`.
pub fn scaled_bessel_i(j: i64, tau: f64) -> Result<f64> {
    let j = j.unsigned_abs() as usize;
    check_tau(tau)?;
    if tau > ASYMPTOTIC_THRESHOLD {
        return Ok(if j == 0 { hankel_i0(tau) } else { debye(j as f64, tau) });
    }
    Ok(miller(j, tau)?[j])
}
