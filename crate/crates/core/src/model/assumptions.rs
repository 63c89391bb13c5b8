//! Grid-based estimation of the growth hypotheses on `f = b/x` and `g = σ/x`
//! and of the constants `D₁ = sup 3b(64x)/(2b(x))`, `D₂ = sup g(512·D₁·x)/g(x)`.
//!
//! These are falsification tools: a finite sup over a finite grid can refute
//! a hypothesis but never prove it.

use serde::{Deserialize, Serialize};

use super::{ModelSpec, ScalarFn};
use crate::error::{Error, Result};

/// Logarithmic sample grid `xᵢ = lo · 10^(i/points_per_decade)`, `xᵢ ≤ hi`.
///
/// Grids with the same `lo` are nested whenever one `points_per_decade`
/// divides the other, which makes sup estimates monotone under refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points_per_decade: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: 1.0,
            hi: 1e8,
            points_per_decade: 10_000,
        }
    }
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points_per_decade: u32) -> Self {
        GridSpec {
            lo,
            hi,
            points_per_decade,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) || self.points_per_decade == 0 {
            return Err(Error::contract(format!("invalid grid {self:?}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        let decades = (self.hi / self.lo).log10();
        // tolerate rounding so that an endpoint on a grid line is included
        (decades * self.points_per_decade as f64 + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let ppd = self.points_per_decade as f64;
        (0..self.len()).map(move |i| self.lo * 10f64.powf(i as f64 / ppd))
    }

    pub fn describe(&self) -> String {
        format!(
            "log grid [{}, {}], {} points/decade, {} points",
            self.lo,
            self.hi,
            self.points_per_decade,
            self.len()
        )
    }
}

/// Estimate `sup_{x ≥ γ, C ∈ c_values} |h(Cx)/h(x)|` over the grid points
/// `≥ γ`, with `γ` itself always sampled.
pub fn check_ratio_condition<H: Fn(f64) -> f64>(h: H, gamma: f64, c_values: &[f64], grid: &GridSpec) -> Result<f64> {
    grid.check()?;
    if !(gamma > 0.0) {
        return Err(Error::contract(format!("gamma must be positive, got {gamma}")));
    }
    if c_values.is_empty() || c_values.iter().any(|&c| !(c >= 1.0)) {
        return Err(Error::contract("C values must be nonempty and ≥ 1"));
    }
    let xs = std::iter::once(gamma).chain(grid.points().filter(|&x| x >= gamma));
    let mut sup = 0.0_f64;
    for x in xs {
        let hx = h(x);
        if hx == 0.0 || !hx.is_finite() {
            return Err(Error::domain(format!("h({x}) = {hx}; ratio undefined")));
        }
        for &c in c_values {
            let r = (h(c * x) / hx).abs();
            if r.is_nan() {
                return Err(Error::domain(format!("h({})/h({x}) is NaN", c * x)));
            }
            sup = sup.max(r);
        }
    }
    Ok(sup)
}

/// `max |g(x)| / f(x)^(1/4 − η)` over grid points `≥ 1`; `ok` when the maximum
/// is finite and at most `bound`.
pub fn check_growth_bound(model: &ModelSpec, eta: f64, grid: &GridSpec, bound: f64) -> Result<(bool, f64)> {
    grid.check()?;
    if !(eta > 0.0 && eta < 0.25) {
        return Err(Error::contract(format!("eta must lie in (0, 1/4), got {eta}")));
    }
    let exponent = 0.25 - eta;
    let mut worst = 0.0_f64;
    for x in grid.points().filter(|&x| x >= 1.0) {
        let fx = model.f(x);
        if !(fx > 0.0) {
            return Err(Error::domain(format!("f({x}) = {fx} is not positive")));
        }
        let r = model.g(x).abs() / fx.powf(exponent);
        if r.is_nan() {
            return Err(Error::domain(format!("growth ratio is NaN at x = {x}")));
        }
        worst = worst.max(r);
    }
    Ok((worst.is_finite() && worst <= bound, worst))
}

fn sup_ratio<F: Fn(f64) -> f64>(num: F, den: impl Fn(f64) -> f64, grid: &GridSpec) -> Result<f64> {
    let mut sup = 0.0_f64;
    for x in grid.points() {
        let d = den(x);
        if !(d > 0.0) {
            return Err(Error::domain(format!("denominator {d} at x = {x} is not positive")));
        }
        let r = num(x) / d;
        if !r.is_finite() {
            return Err(Error::domain(format!("ratio is not finite at x = {x}")));
        }
        sup = sup.max(r);
    }
    Ok(sup)
}

/// Grid estimates of `(D₁, D₂)`.
pub fn compute_d1_d2(model: &ModelSpec, grid: &GridSpec) -> Result<(f64, f64)> {
    grid.check()?;
    let d1 = 1.5 * sup_ratio(|x| model.b(64.0 * x), |x| model.b(x), grid)?;
    let d2 = sup_ratio(|x| model.g(512.0 * d1 * x), |x| model.g(x), grid)?;
    Ok((d1, d2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub gamma: f64,
    pub c_values: Vec<f64>,
    pub ratio_sup_f: f64,
    /// `None` when `σ ≡ 0`, where the condition on `g` is vacuous.
    pub ratio_sup_g: Option<f64>,
    pub growth_exponent_ok: bool,
    pub growth_worst_ratio: f64,
    pub eta_used: f64,
    pub d1: f64,
    /// `None` when `σ ≡ 0`.
    pub d2: Option<f64>,
    pub grid_used: String,
}

/// Bound applied to the growth ratio by [`assumption_report`].
pub const DEFAULT_GROWTH_BOUND: f64 = 10.0;

pub fn assumption_report(
    model: &ModelSpec,
    gamma: f64,
    c_values: &[f64],
    eta: f64,
    grid: &GridSpec,
) -> Result<AssumptionReport> {
    let ratio_sup_f = check_ratio_condition(|x| model.f(x), gamma, c_values, grid)?;
    let sigma_zero = model.diffusion == ScalarFn::Zero;
    let ratio_sup_g = if sigma_zero {
        None
    } else {
        Some(check_ratio_condition(|x| model.g(x), gamma, c_values, grid)?)
    };
    let (growth_exponent_ok, growth_worst_ratio) = check_growth_bound(model, eta, grid, DEFAULT_GROWTH_BOUND)?;
    let (d1, d2) = if sigma_zero {
        let d1 = 1.5 * sup_ratio(|x| model.b(64.0 * x), |x| model.b(x), grid)?;
        (d1, None)
    } else {
        let (d1, d2) = compute_d1_d2(model, grid)?;
        (d1, Some(d2))
    };
    Ok(AssumptionReport {
        gamma,
        c_values: c_values.to_vec(),
        ratio_sup_f,
        ratio_sup_g,
        growth_exponent_ok,
        growth_worst_ratio,
        eta_used: eta,
        d1,
        d2,
        grid_used: grid.describe(),
    })
}

/// One row of a `γ` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub ratio_sup_f: f64,
    pub ratio_sup_g: Option<f64>,
}

/// Ratio-condition sups for each `γ`; no single `γ` is preferred.
pub fn gamma_sensitivity(
    model: &ModelSpec,
    gammas: &[f64],
    c_values: &[f64],
    grid: &GridSpec,
) -> Result<Vec<GammaRow>> {
    let sigma_zero = model.diffusion == ScalarFn::Zero;
    gammas
        .iter()
        .map(|&gamma| {
            Ok(GammaRow {
                gamma,
                ratio_sup_f: check_ratio_condition(|x| model.f(x), gamma, c_values, grid)?,
                ratio_sup_g: if sigma_zero {
                    None
                } else {
                    Some(check_ratio_condition(|x| model.g(x), gamma, c_values, grid)?)
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog_models;

    fn small() -> GridSpec {
        GridSpec::new(1.0, 1e6, 200)
    }

    #[test]
    fn grid_is_nested_and_hits_endpoints() {
        let g = GridSpec::new(1.0, 1e8, 10);
        let pts: Vec<f64> = g.points().collect();
        assert_eq!(pts.len(), 81);
        assert!((pts[80] - 1e8).abs() / 1e8 < 1e-12);
        let fine: Vec<f64> = GridSpec::new(1.0, 1e8, 30).points().collect();
        for (i, p) in pts.iter().enumerate() {
            assert!((fine[3 * i] - p).abs() / p < 1e-12);
        }
        assert_eq!(GridSpec::default().len(), 80_001);
    }

    #[test]
    fn ratio_condition_examples() {
        let c = [1.0, 2.0, 64.0];
        let v = check_ratio_condition(|x| x, 1.0, &c, &small()).unwrap();
        assert!((v - 64.0).abs() < 1e-9);
        let v = check_ratio_condition(|_| 1.0, 1.0, &c, &small()).unwrap();
        assert_eq!(v, 1.0);

        let v = check_ratio_condition(|x: f64| x.ln(), 2.0, &[64.0], &small()).unwrap();
        // brute force over the same sample set
        let oracle = std::iter::once(2.0)
            .chain(small().points().filter(|&x| x >= 2.0))
            .map(|x: f64| (64.0 * x).ln() / x.ln())
            .fold(0.0, f64::max);
        assert_eq!(v, oracle);
        assert!((v - 7.0).abs() < 1e-12);

        assert!(matches!(
            check_ratio_condition(|x: f64| x.ln(), 1.0, &[2.0], &small()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ratio_condition_is_scale_invariant() {
        let h = |x: f64| x.sqrt() * (1.0 + x).ln();
        let base = check_ratio_condition(h, 1.0, &[3.0, 64.0], &small()).unwrap();
        for lambda in [-2.5, 1e-3, 7.0] {
            let v = check_ratio_condition(|x| lambda * h(x), 1.0, &[3.0, 64.0], &small()).unwrap();
            assert!((v - base).abs() / base < 1e-12);
        }
    }

    #[test]
    fn growth_bound_examples() {
        let m = ModelSpec::new("m", ScalarFn::power(1.0, 5.0), ScalarFn::linear(1.0));
        let (ok, w) = check_growth_bound(&m, 0.125, &small(), 10.0).unwrap();
        assert!(ok);
        assert_eq!(w, 1.0);

        let m = ModelSpec::new("m", ScalarFn::power(1.0, 2.0), ScalarFn::linear(1.0));
        for eta in [0.01, 0.1, 0.24] {
            let (ok, w) = check_growth_bound(&m, eta, &small(), 10.0).unwrap();
            assert!(ok && w <= 1.0);
        }

        let m = ModelSpec::new("m", ScalarFn::power(1.0, 2.0), ScalarFn::power(1.0, 2.0));
        let (ok, w1) = check_growth_bound(&m, 0.125, &small(), 10.0).unwrap();
        assert!(!ok);
        let (_, w2) = check_growth_bound(&m, 0.125, &GridSpec::new(1.0, 1e8, 200), 10.0).unwrap();
        assert!(w2 > w1 * 10.0);
        assert!((w1 - 1e6f64.powf(0.875)).abs() / w1 < 1e-9);
    }

    #[test]
    fn d1_d2_examples() {
        let m = ModelSpec::new("m", ScalarFn::power(1.0, 2.0), ScalarFn::linear(0.7));
        let (d1, d2) = compute_d1_d2(&m, &small()).unwrap();
        assert_eq!(d1, 6144.0);
        assert_eq!(d2, 1.0);

        let m = ModelSpec::new(
            "xlog2",
            ScalarFn::XLogPow {
                coef: 1.0,
                power: 2.0,
                shift: 0.0,
            },
            ScalarFn::linear(1.0),
        );
        let grid = GridSpec::new(2.0, 1e8, 500);
        let (d1, d2) = compute_d1_d2(&m, &grid).unwrap();
        let b = |x: f64| x * x.ln().powi(2);
        let oracle = grid
            .points()
            .map(|x| 3.0 * b(64.0 * x) / (2.0 * b(x)))
            .fold(0.0, f64::max);
        assert!((d1 - oracle).abs() / oracle < 1e-12);
        // ratio decreases in x, so the sup is at the left end
        assert!((d1 - 1.5 * 64.0 * (128f64.ln() / 2f64.ln()).powi(2)).abs() < 1e-9);
        assert_eq!(d2, 1.0);
    }

    #[test]
    fn d1_bounds_and_refinement() {
        for m in catalog_models() {
            let mut prev = (0.0, 0.0);
            for ppd in [5, 20, 80] {
                let (d1, d2) = compute_d1_d2(&m, &GridSpec::new(1.0, 1e6, ppd)).unwrap();
                assert!(d1 >= 1.5, "{}", m.name);
                assert!(d1 >= prev.0 && d2 >= prev.1, "{}", m.name);
                prev = (d1, d2);
            }
        }
    }

    #[test]
    fn report_and_gamma_sweep() {
        let m = ModelSpec::new("m", ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        let r = assumption_report(&m, 1.0, &[1.0, 64.0], 0.1, &small()).unwrap();
        assert!(r.ratio_sup_g.is_none() && r.d2.is_none());
        assert!(r.growth_exponent_ok);
        assert!((r.ratio_sup_f - 64.0).abs() < 1e-9);

        let m = ModelSpec::new(
            "xlog",
            ScalarFn::XLogPow {
                coef: 1.0,
                power: 1.0,
                shift: 0.0,
            },
            ScalarFn::linear(1.0),
        );
        let rows = gamma_sensitivity(&m, &[2.0, 10.0, 100.0], &[64.0], &small()).unwrap();
        assert!(rows.windows(2).all(|w| w[1].ratio_sup_f <= w[0].ratio_sup_f));
    }
}
