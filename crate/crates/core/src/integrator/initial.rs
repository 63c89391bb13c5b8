use serde::{Deserialize, Serialize};

use crate::lattice::LatticeDomain;
use crate::model::Expr;

/// Initial condition `u₀(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    Constant {
        value: f64,
    },
    /// `height · 1[lo, hi](x)`
    Indicator {
        lo: f64,
        hi: f64,
        height: f64,
    },
    Expr {
        expr: Expr,
    },
}

// 8-point Gauss–Legendre on [-1, 1]
#[allow(clippy::excessive_precision)]
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
#[allow(clippy::excessive_precision)]
const GL_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

impl InitialProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialProfile::Constant { value } => *value,
            InitialProfile::Indicator { lo, hi, height } => {
                if x >= *lo && x <= *hi {
                    *height
                } else {
                    0.0
                }
            }
            InitialProfile::Expr { expr } => expr.eval(x),
        }
    }

    /// `(1/ε) ∫_x^{x+ε} u₀`.
    pub fn cell_average(&self, x: f64, epsilon: f64) -> f64 {
        match self {
            InitialProfile::Constant { value } => *value,
            InitialProfile::Indicator { lo, hi, height } => {
                let overlap = (x + epsilon).min(*hi) - x.max(*lo);
                height * overlap.max(0.0) / epsilon
            }
            InitialProfile::Expr { expr } => {
                let (c, h) = (x + 0.5 * epsilon, 0.5 * epsilon);
                let s: f64 = GL_X
                    .iter()
                    .zip(&GL_W)
                    .map(|(&g, &w)| w * (expr.eval(c - h * g) + expr.eval(c + h * g)))
                    .sum();
                0.5 * s
            }
        }
    }
}

/// Per-site cell averages of `u₀`; pinned sites are set to 0.
pub fn initial_profile(u0: &InitialProfile, domain: &LatticeDomain) -> Vec<f64> {
    (0..domain.n_sites())
        .map(|i| {
            if domain.is_pinned(i) {
                0.0
            } else {
                u0.cell_average(domain.x(i), domain.epsilon)
            }
        })
        .collect()
}
