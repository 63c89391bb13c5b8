//! Drift `b` and diffusion `σ` of the equation `∂ₜu = ½∂²ₓu + b(u) + σ(u)Ẇ`,
//! together with the Osgood blowup criteria and grid-based checks of the
//! structural growth assumptions on `f(x) = b(x)/x` and `g(x) = σ(x)/x`.

mod assumptions;
mod expr;
mod osgood;
pub mod quadrature;

pub use assumptions::{
    assumption_report, check_growth_bound, check_ratio_condition, compute_d1_d2, gamma_sensitivity, AssumptionReport,
    GridSpec,
};
pub use expr::{Expr, ExprError};
pub use osgood::{
    classify_series, osgood_blocks, osgood_integral, osgood_integral_log, osgood_sum, osgood_sum_from, osgood_time,
    OsgoodBlocks, OsgoodSum, OsgoodTime, SeriesClass, Verdict,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar function of one real variable, either from the built-in catalog or
/// a user expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Zero,
    /// `coef · sign(x)·|x|^exponent`
    Power {
        coef: f64,
        exponent: f64,
    },
    /// `coef · x · ln(shift + x)^power` for `x > 0`, zero otherwise.
    XLogPow {
        coef: f64,
        power: f64,
        shift: f64,
    },
    /// KPP-type saturating reaction `coef · x / (1 + x)`.
    Saturating {
        coef: f64,
    },
    /// Square-root growth smoothed near the origin: `coef · x / sqrt(delta + |x|)`.
    SqrtSmoothed {
        coef: f64,
        delta: f64,
    },
    /// Bounded: `coef · tanh(x)`.
    Tanh {
        coef: f64,
    },
    Scaled {
        factor: f64,
        inner: Box<ScalarFn>,
    },
    Expr {
        expr: Expr,
    },
}

impl ScalarFn {
    pub fn power(coef: f64, exponent: f64) -> Self {
        ScalarFn::Power { coef, exponent }
    }

    pub fn linear(coef: f64) -> Self {
        ScalarFn::Power { coef, exponent: 1.0 }
    }

    pub fn expr(src: &str) -> std::result::Result<Self, ExprError> {
        Ok(ScalarFn::Expr {
            expr: Expr::parse(src)?,
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Power { coef, exponent } => {
                if *exponent == 1.0 {
                    coef * x
                } else if *exponent == 2.0 {
                    coef * x * x.abs()
                } else {
                    coef * x.signum() * x.abs().powf(*exponent)
                }
            }
            ScalarFn::XLogPow { coef, power, shift } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let l = (shift + x).ln();
                    let lp = if *power == 2.0 {
                        l * l
                    } else if *power == 1.0 {
                        l
                    } else {
                        l.powf(*power)
                    };
                    coef * x * lp
                }
            }
            ScalarFn::Saturating { coef } => coef * x / (1.0 + x.abs()),
            ScalarFn::SqrtSmoothed { coef, delta } => coef * x / (delta + x.abs()).sqrt(),
            ScalarFn::Tanh { coef } => coef * x.tanh(),
            ScalarFn::Scaled { factor, inner } => {
                if *factor == 0.0 {
                    0.0
                } else {
                    factor * inner.eval(x)
                }
            }
            ScalarFn::Expr { expr } => expr.eval(x),
        }
    }

    /// `h(x) / x`, exact for power laws.
    pub fn ratio(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Power { coef, exponent } => {
                if *exponent == 1.0 {
                    *coef
                } else if *exponent == 2.0 {
                    coef * x.abs()
                } else {
                    coef * x.abs().powf(exponent - 1.0)
                }
            }
            ScalarFn::Scaled { factor, inner } => factor * inner.ratio(x),
            _ => self.eval(x) / x,
        }
    }

    /// `x / h(x)` at `x = e^s`, evaluated without forming `e^s` where the
    /// closed form allows it. `None` when no log-space form is known.
    fn inv_ratio_at_log(&self, s: f64) -> Option<f64> {
        match self {
            ScalarFn::Power { coef, exponent } => Some((-(exponent - 1.0) * s).exp() / coef),
            ScalarFn::XLogPow { coef, power, shift } => {
                let l = s + (shift * (-s).exp()).ln_1p();
                Some(1.0 / (coef * l.powf(*power)))
            }
            ScalarFn::Saturating { coef } => Some((1.0 + s.exp()) / coef),
            ScalarFn::Scaled { factor, inner } => inner.inv_ratio_at_log(s).map(|v| v / factor),
            _ => None,
        }
    }

    /// A short human-readable formula.
    pub fn describe(&self) -> String {
        match self {
            ScalarFn::Zero => "0".into(),
            ScalarFn::Power { coef, exponent } => format!("{coef}*x^{exponent}"),
            ScalarFn::XLogPow { coef, power, shift } => {
                format!("{coef}*x*log({shift}+x)^{power}")
            }
            ScalarFn::Saturating { coef } => format!("{coef}*x/(1+x)"),
            ScalarFn::SqrtSmoothed { coef, delta } => format!("{coef}*x/sqrt({delta}+x)"),
            ScalarFn::Tanh { coef } => format!("{coef}*tanh(x)"),
            ScalarFn::Scaled { factor, inner } => format!("{factor}*({})", inner.describe()),
            ScalarFn::Expr { expr } => expr.source().to_string(),
        }
    }
}

/// The pair `(b, σ)` with metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
    pub drift_monotone: bool,
    pub sigma_global_lipschitz: bool,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, drift: ScalarFn, diffusion: ScalarFn) -> Self {
        let sigma_global_lipschitz = matches!(
            diffusion,
            ScalarFn::Zero
                | ScalarFn::Power { exponent: 1.0, .. }
                | ScalarFn::Tanh { .. }
                | ScalarFn::SqrtSmoothed { .. }
        );
        ModelSpec {
            name: name.into(),
            drift,
            diffusion,
            drift_monotone: true,
            sigma_global_lipschitz,
        }
    }

    /// Drift, evaluated on the nonnegative part of its argument.
    #[inline]
    pub fn b(&self, x: f64) -> f64 {
        self.drift.eval(x.max(0.0))
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.diffusion.eval(x)
    }

    pub fn f(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.drift.ratio(x)
        } else {
            self.b(x) / x
        }
    }

    pub fn g(&self, x: f64) -> f64 {
        self.diffusion.ratio(x)
    }

    /// `e^s / b(e^s)`.
    pub fn inv_f_at_log(&self, s: f64) -> Result<f64> {
        if let Some(v) = self.drift.inv_ratio_at_log(s) {
            return Ok(v);
        }
        if s > 709.0 {
            return Err(Error::domain(format!(
                "drift '{}' has no log-space form; cannot evaluate at e^{s}",
                self.drift.describe()
            )));
        }
        let x = s.exp();
        Ok(x / self.b(x))
    }

    /// Same model with `σ` multiplied by `factor`.
    pub fn with_sigma_scale(&self, factor: f64) -> ModelSpec {
        let diffusion = if factor == 0.0 {
            ScalarFn::Zero
        } else if factor == 1.0 {
            self.diffusion.clone()
        } else {
            ScalarFn::Scaled {
                factor,
                inner: Box::new(self.diffusion.clone()),
            }
        };
        ModelSpec {
            name: format!("{}[sigma*{factor}]", self.name),
            diffusion,
            ..self.clone()
        }
    }

    /// Sampled check of the standing hypotheses: `b ≥ 0`, `σ(0) = 0`, and
    /// monotone `b` when flagged.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let s0 = self.sigma(0.0);
        if s0 != 0.0 {
            return Err(Error::domain(format!("sigma(0) = {s0}, expected 0")));
        }
        let mut prev: Option<(f64, f64)> = None;
        for x in std::iter::once(0.0).chain(grid.points()) {
            let bx = self.b(x);
            if !(bx >= 0.0) {
                return Err(Error::domain(format!("b({x}) = {bx} is not nonnegative")));
            }
            if self.drift_monotone {
                if let Some((px, pb)) = prev {
                    if bx < pb {
                        return Err(Error::domain(format!(
                            "b is flagged monotone but b({x}) = {bx} < b({px}) = {pb}"
                        )));
                    }
                }
            }
            prev = Some((x, bx));
        }
        Ok(())
    }
}

/// Built-in drift catalog, keyed by name. Covers convergent and divergent
/// Osgood regimes.
pub fn drift_catalog() -> Vec<(&'static str, ScalarFn)> {
    vec![
        ("x^2", ScalarFn::power(1.0, 2.0)),
        ("x^3", ScalarFn::power(1.0, 3.0)),
        ("x^1.5", ScalarFn::power(1.0, 1.5)),
        (
            "x*log(e+x)^2",
            ScalarFn::XLogPow {
                coef: 1.0,
                power: 2.0,
                shift: std::f64::consts::E,
            },
        ),
        (
            "x*log(e+x)",
            ScalarFn::XLogPow {
                coef: 1.0,
                power: 1.0,
                shift: std::f64::consts::E,
            },
        ),
        ("x", ScalarFn::linear(1.0)),
        ("kpp", ScalarFn::Saturating { coef: 1.0 }),
    ]
}

/// Built-in diffusion catalog.
pub fn sigma_catalog() -> Vec<(&'static str, ScalarFn)> {
    vec![
        ("linear", ScalarFn::linear(1.0)),
        ("sqrt", ScalarFn::SqrtSmoothed { coef: 1.0, delta: 1.0 }),
        ("bounded", ScalarFn::Tanh { coef: 1.0 }),
    ]
}

/// Every catalog drift paired with linear `σ`.
pub fn catalog_models() -> Vec<ModelSpec> {
    drift_catalog()
        .into_iter()
        .map(|(name, b)| ModelSpec::new(name, b, ScalarFn::linear(1.0)))
        .collect()
}
