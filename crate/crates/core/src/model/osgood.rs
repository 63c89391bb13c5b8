//! Osgood integral `∫ dx / b(x)`, its dyadic-sum equivalent `Σ 2ⁿ / b(2ⁿ)`,
//! and the deterministic blowup time `T* = ∫_c^∞ dx / b(x)`.
//!
//! Integrals are computed in the variable `s = ln x`, where the integrand is
//! `e^s / b(e^s)`, so that ranges spanning hundreds of decades stay cheap.

use serde::Serialize;

use super::quadrature::{self, QuadError};
use super::ModelSpec;
use crate::error::{Error, Result};

/// Ratio bound for geometric decay of consecutive terms.
pub const GEOMETRIC_RATIO_MAX: f64 = 0.95;
/// Number of trailing increments examined by the tail classifier.
pub const TAIL_WINDOW: usize = 10;
/// Power-law decay exponent above which a series is declared convergent.
pub const POWER_CONVERGENT_MIN: f64 = 1.5;
/// Power-law decay exponent below which a series is declared divergent.
pub const POWER_DIVERGENT_MAX: f64 = 1.2;

const MAX_DYADIC_INDEX: i64 = 1000;
const QUAD_SEGMENTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Convergent => "convergent",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Outcome of the finite-data convergence heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesClass {
    pub verdict: Verdict,
    /// Fitted `q` in `aₙ ~ n^(-q)`, when the power-law branch was used.
    pub decay_exponent: Option<f64>,
    /// Estimated sum of the terms beyond the last one supplied.
    pub tail_estimate: Option<f64>,
}

/// Classify a nonnegative series from its trailing terms.
///
/// Terms are indexed `first_index, first_index + 1, …`. The rules, applied in
/// order to the last [`TAIL_WINDOW`] increments:
/// 1. trailing zero term: convergent, tail 0;
/// 2. every consecutive ratio `≤ 0.95`: convergent, geometric tail;
/// 3. last term `≥` the term ten indices earlier: divergent;
/// 4. otherwise fit `ln aₙ` against `ln n` over the upper half of the indices;
///    `q ≥ 1.5` convergent, `q ≤ 1.2` divergent, anything between inconclusive.
pub fn classify_series(terms: &[f64], first_index: i64) -> SeriesClass {
    let inconclusive = SeriesClass {
        verdict: Verdict::Inconclusive,
        decay_exponent: None,
        tail_estimate: None,
    };
    let n = terms.len();
    if n < TAIL_WINDOW + 2 {
        return inconclusive;
    }
    let last = terms[n - 1];
    if last == 0.0 {
        return SeriesClass {
            verdict: Verdict::Convergent,
            decay_exponent: None,
            tail_estimate: Some(0.0),
        };
    }
    let window = &terms[n - 1 - TAIL_WINDOW..];
    let ratios: Vec<f64> = window.windows(2).map(|w| w[1] / w[0]).collect();
    let r_max = ratios.iter().cloned().fold(0.0_f64, f64::max);
    if r_max <= GEOMETRIC_RATIO_MAX {
        return SeriesClass {
            verdict: Verdict::Convergent,
            decay_exponent: None,
            tail_estimate: Some(last * r_max / (1.0 - r_max)),
        };
    }
    if last >= window[0] {
        return SeriesClass {
            verdict: Verdict::Divergent,
            decay_exponent: None,
            tail_estimate: None,
        };
    }

    let last_index = first_index + n as i64 - 1;
    let lo = (last_index / 2).max(first_index).max(1);
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in lo..=last_index {
        let a = terms[(k - first_index) as usize];
        if a <= 0.0 {
            continue;
        }
        let (x, y) = ((k as f64).ln(), a.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        m += 1.0;
    }
    let denom = m * sxx - sx * sx;
    if m < 3.0 || denom <= 0.0 {
        return inconclusive;
    }
    let q = -(m * sxy - sx * sy) / denom;
    let tail = (q > 1.0).then(|| last * last_index as f64 / (q - 1.0));
    let verdict = if q >= POWER_CONVERGENT_MIN {
        Verdict::Convergent
    } else if q <= POWER_DIVERGENT_MAX {
        Verdict::Divergent
    } else {
        Verdict::Inconclusive
    };
    SeriesClass {
        verdict,
        decay_exponent: Some(q),
        tail_estimate: tail,
    }
}

/// Partial sums of `Σ 2ⁿ / b(2ⁿ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsgoodSum {
    pub first_index: i64,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub class: SeriesClass,
}

impl OsgoodSum {
    pub fn verdict(&self) -> Verdict {
        self.class.verdict
    }

    pub fn last(&self) -> f64 {
        *self.partial_sums.last().expect("at least one term")
    }
}

pub fn osgood_sum(model: &ModelSpec, n_max: u32) -> Result<OsgoodSum> {
    osgood_sum_from(model, 0, n_max as i64)
}

/// Partial sums `S_N = Σ_{n=n_min}^{N} 2ⁿ / b(2ⁿ)` for `N = n_min..=n_max`.
pub fn osgood_sum_from(model: &ModelSpec, n_min: i64, n_max: i64) -> Result<OsgoodSum> {
    if n_max < n_min {
        return Err(Error::contract(format!("n_max {n_max} < n_min {n_min}")));
    }
    if n_min < -MAX_DYADIC_INDEX || n_max > MAX_DYADIC_INDEX {
        return Err(Error::contract(format!(
            "dyadic indices must lie in [-{MAX_DYADIC_INDEX}, {MAX_DYADIC_INDEX}]"
        )));
    }
    let mut terms = Vec::with_capacity((n_max - n_min + 1) as usize);
    let mut partial_sums = Vec::with_capacity(terms.capacity());
    let mut acc = 0.0;
    for n in n_min..=n_max {
        let x = 2f64.powi(n as i32);
        let bx = model.b(x);
        if !(bx > 0.0) {
            return Err(Error::domain(format!("b(2^{n}) = {bx} is not positive")));
        }
        let term = x / bx;
        acc += term;
        terms.push(term);
        partial_sums.push(acc);
    }
    let class = classify_series(&terms, n_min);
    Ok(OsgoodSum {
        first_index: n_min,
        terms,
        partial_sums,
        class,
    })
}

fn log_integrand(model: &ModelSpec) -> impl FnMut(f64) -> f64 + '_ {
    move |s| match model.inv_f_at_log(s) {
        Ok(v) if v > 0.0 || v.is_nan() => v,
        // b vanishing or negative: surface as non-finite so the caller sees it
        Ok(_) => f64::INFINITY,
        Err(_) => f64::NAN,
    }
}

fn map_quad_err(model: &ModelSpec, e: QuadError) -> Error {
    match e {
        QuadError::NonFinite { x, value } => Error::domain(format!(
            "1/b is not finite at x = e^{x} (value {value}) for drift '{}'",
            model.drift.describe()
        )),
        QuadError::Budget(r) => Error::numeric(
            format!(
                "Osgood quadrature did not reach tolerance (estimate {} ± {})",
                r.value, r.error
            ),
            Some(r.value),
        ),
    }
}

/// `∫_lower^upper dx / b(x)` with absolute error at most `tol`.
pub fn osgood_integral(model: &ModelSpec, lower: f64, upper: f64, tol: f64) -> Result<f64> {
    if !(lower > 0.0 && upper > lower) {
        return Err(Error::contract(format!(
            "need 0 < lower < upper, got [{lower}, {upper}]"
        )));
    }
    osgood_integral_log(model, lower.ln(), upper.ln(), tol)
}

/// `∫_{e^log_lower}^{e^log_upper} dx / b(x)`; bounds are given as logarithms so
/// that ranges beyond `f64` can be handled for drifts with a log-space form.
pub fn osgood_integral_log(model: &ModelSpec, log_lower: f64, log_upper: f64, tol: f64) -> Result<f64> {
    if !(log_upper > log_lower) || !(tol > 0.0) {
        return Err(Error::contract("need log_lower < log_upper and tol > 0"));
    }
    quadrature::integrate(log_integrand(model), log_lower, log_upper, tol, QUAD_SEGMENTS)
        .map(|r| r.value)
        .map_err(|e| map_quad_err(model, e))
}

/// Dyadic blocks `Iₙ = ∫_{2ⁿ}^{2ⁿ⁺¹} dx / b(x)`, classified as a series. This
/// is the integral-side counterpart of [`osgood_sum`]. `tol` is absolute for
/// blocks of size up to 1 and relative beyond.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsgoodBlocks {
    pub first_index: i64,
    pub blocks: Vec<f64>,
    pub class: SeriesClass,
}

pub fn osgood_blocks(model: &ModelSpec, n_min: i64, n_max: i64, tol: f64) -> Result<OsgoodBlocks> {
    if n_max < n_min || n_min < -MAX_DYADIC_INDEX || n_max >= MAX_DYADIC_INDEX {
        return Err(Error::contract("invalid dyadic block range"));
    }
    let ln2 = std::f64::consts::LN_2;
    let blocks = (n_min..=n_max)
        .map(|n| {
            let a = n as f64 * ln2;
            let scale = (ln2 * model.inv_f_at_log(a + 0.5 * ln2)?).max(1.0);
            quadrature::integrate(log_integrand(model), a, a + ln2, tol * scale, QUAD_SEGMENTS)
                .map(|r| r.value)
                .map_err(|e| map_quad_err(model, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let class = classify_series(&blocks, n_min);
    Ok(OsgoodBlocks {
        first_index: n_min,
        blocks,
        class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OsgoodTime {
    Finite(f64),
    Infinite,
}

impl OsgoodTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            OsgoodTime::Finite(t) => Some(t),
            OsgoodTime::Infinite => None,
        }
    }
}

impl std::fmt::Display for OsgoodTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OsgoodTime::Finite(t) => write!(f, "{t}"),
            OsgoodTime::Infinite => f.write_str("inf"),
        }
    }
}

/// Blowup time `∫_c^∞ dx / b(x)` of the noiseless ODE `u' = b(u)`, `u(0) = c`.
///
/// Integrates dyadic blocks up to `2^1000` and adds the tail estimated from
/// the block sequence; returns [`OsgoodTime::Infinite`] when the blocks do not
/// decay summably.
pub fn osgood_time(model: &ModelSpec, c: f64) -> Result<OsgoodTime> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::contract(format!("start value must be positive, got {c}")));
    }
    let tol = 1e-15;
    let first = c.log2().ceil() as i64;
    if first >= MAX_DYADIC_INDEX - 20 {
        return Err(Error::contract(format!("start value {c} too large")));
    }
    let head = if (first as f64) > c.log2() {
        quadrature::integrate(
            log_integrand(model),
            c.ln(),
            first as f64 * std::f64::consts::LN_2,
            tol,
            QUAD_SEGMENTS,
        )
        .map_err(|e| map_quad_err(model, e))?
        .value
    } else {
        0.0
    };
    let blocks = osgood_blocks(model, first, MAX_DYADIC_INDEX - 1, tol)?;
    let finite = match blocks.class.verdict {
        Verdict::Divergent => None,
        Verdict::Convergent | Verdict::Inconclusive => blocks.class.tail_estimate,
    };
    Ok(match finite {
        Some(tail) => {
            let body: f64 = blocks.blocks.iter().sum();
            OsgoodTime::Finite(head + body + tail)
        }
        None => OsgoodTime::Infinite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog_models, ScalarFn};

    fn drift(b: ScalarFn) -> ModelSpec {
        ModelSpec::new("t", b, ScalarFn::Zero)
    }

    #[test]
    fn integral_closed_forms() {
        let sq = drift(ScalarFn::power(1.0, 2.0));
        let v = osgood_integral(&sq, 1.0, 1e6, 1e-12).unwrap();
        assert!((v - (1.0 - 1e-6)).abs() < 1e-12);

        let lin = drift(ScalarFn::linear(1.0));
        let v = osgood_integral(&lin, 1.0, 10f64.exp(), 1e-10).unwrap();
        assert!((v - 10.0).abs() < 1e-10);

        // x (ln x)^2 from e to e^(10^6): substitution u = ln x gives ∫_1^{10^6} du/u^2
        let xlog2 = drift(ScalarFn::XLogPow {
            coef: 1.0,
            power: 2.0,
            shift: 0.0,
        });
        let v = osgood_integral_log(&xlog2, 1.0, 1e6, 1e-10).unwrap();
        assert!((v - (1.0 - 1e-6)).abs() < 1e-10, "{v}");
    }

    #[test]
    fn integral_errors() {
        let zero_at_origin = drift(ScalarFn::power(1.0, 2.0));
        assert!(matches!(
            osgood_integral(&zero_at_origin, 0.0, 1.0, 1e-8),
            Err(Error::Contract(_))
        ));
        let vanishing = drift(ScalarFn::expr("max(x - 2, 0)").unwrap());
        assert!(matches!(
            osgood_integral(&vanishing, 1.0, 4.0, 1e-8),
            Err(Error::Domain(_))
        ));
        // slowly converging integrand with an impossible tolerance and tiny budget
        let slow = drift(ScalarFn::expr("x*log(x)^1.01").unwrap());
        let r = quadrature::integrate(log_integrand(&slow), 1e-9, 300.0, 1e-300, 4);
        assert!(matches!(r, Err(QuadError::Budget(_))));
        assert!(matches!(
            map_quad_err(&slow, r.unwrap_err()),
            Error::Numeric {
                best_estimate: Some(_),
                ..
            }
        ));
    }

    #[test]
    fn dyadic_sum_closed_forms() {
        let sq = drift(ScalarFn::power(1.0, 2.0));
        let s = osgood_sum(&sq, 50).unwrap();
        assert_eq!(s.last(), 2.0 - 2f64.powi(-50));
        assert_eq!(s.verdict(), Verdict::Convergent);

        let lin = drift(ScalarFn::linear(1.0));
        let s = osgood_sum(&lin, 50).unwrap();
        assert_eq!(s.last(), 51.0);
        assert_eq!(s.verdict(), Verdict::Divergent);
    }

    #[test]
    fn dyadic_sum_log_squared_matches_brute_force() {
        // b(x) = x (log2 x)^2 (ln 2)^2 = x (ln x)^2, so 2^n/b(2^n) = 1/(n ln 2)^2.
        let m = drift(ScalarFn::XLogPow {
            coef: 1.0,
            power: 2.0,
            shift: 0.0,
        });
        assert!(matches!(osgood_sum(&m, 50), Err(Error::Domain(_))));
        let s = osgood_sum_from(&m, 1, 50).unwrap();
        assert_eq!(s.verdict(), Verdict::Convergent);
        let ln2 = std::f64::consts::LN_2;
        let brute50: f64 = (1..=50).map(|n| 1.0 / (n as f64 * ln2).powi(2)).sum();
        assert!((s.last() - brute50).abs() < 1e-12);
        let brute_inf: f64 = (1..=1_000_000u64).map(|n| 1.0 / (n as f64 * ln2).powi(2)).sum();
        assert!(s.last() < brute_inf);
        let q = s.class.decay_exponent.unwrap();
        assert!((q - 2.0).abs() < 0.05, "{q}");
        // the power-law tail estimate recovers most of the missing mass
        let est = s.last() + s.class.tail_estimate.unwrap();
        assert!((est - brute_inf).abs() / brute_inf < 0.01, "{est} vs {brute_inf}");
    }

    #[test]
    fn classifier_branches() {
        let geo: Vec<f64> = (0..20).map(|n| 0.5f64.powi(n)).collect();
        let c = classify_series(&geo, 0);
        assert_eq!(c.verdict, Verdict::Convergent);
        assert!((c.tail_estimate.unwrap() - 0.5f64.powi(19)).abs() < 1e-12);

        let harmonic: Vec<f64> = (1..60).map(|n| 1.0 / n as f64).collect();
        assert_eq!(classify_series(&harmonic, 1).verdict, Verdict::Divergent);

        let borderline: Vec<f64> = (1..60).map(|n| (n as f64).powf(-1.35)).collect();
        assert_eq!(classify_series(&borderline, 1).verdict, Verdict::Inconclusive);

        assert_eq!(classify_series(&[1.0; 5], 0).verdict, Verdict::Inconclusive);
        let growing: Vec<f64> = (0..20).map(|n| n as f64).collect();
        assert_eq!(classify_series(&growing, 0).verdict, Verdict::Divergent);
    }

    #[test]
    fn osgood_time_closed_forms() {
        let sq = drift(ScalarFn::power(1.0, 2.0));
        let t1 = osgood_time(&sq, 1.0).unwrap().finite().unwrap();
        assert!((t1 - 1.0).abs() < 1e-12, "{t1}");
        let t2 = osgood_time(&sq, 2.0).unwrap().finite().unwrap();
        assert!((t2 - 0.5).abs() < 1e-12);
        let t3 = osgood_time(&sq, 3.0).unwrap().finite().unwrap();
        assert!((t3 - 1.0 / 3.0).abs() < 1e-12);
        let cap = 2f64.powi(30);
        let tc = osgood_time(&sq, cap).unwrap().finite().unwrap();
        assert!((tc - 1.0 / cap).abs() < 1e-20);

        let xlog = drift(ScalarFn::XLogPow {
            coef: 1.0,
            power: 1.0,
            shift: std::f64::consts::E,
        });
        assert_eq!(osgood_time(&xlog, std::f64::consts::E).unwrap(), OsgoodTime::Infinite);
    }

    #[test]
    fn power_law_integral_limit() {
        for p in [1.5_f64, 2.0, 3.0] {
            let m = drift(ScalarFn::power(1.0, p));
            let s = osgood_sum(&m, 60).unwrap();
            assert_eq!(s.verdict(), Verdict::Convergent);
            for upper in [1e3_f64, 1e6] {
                let v = osgood_integral(&m, 1.0, upper, 1e-11).unwrap();
                let limit = 1.0 / (p - 1.0);
                assert!((v - limit).abs() <= 1e-11 + upper.powf(1.0 - p) / (p - 1.0) + 1e-12);
            }
        }
    }

    #[test]
    fn sum_and_block_verdicts_agree_on_catalog() {
        for m in catalog_models() {
            let s = osgood_sum(&m, 60).unwrap();
            let b = osgood_blocks(&m, 0, 60, 1e-13).unwrap();
            assert_eq!(s.verdict(), b.class.verdict, "{}", m.name);
            assert_ne!(s.verdict(), Verdict::Inconclusive, "{}", m.name);
        }
    }
}
