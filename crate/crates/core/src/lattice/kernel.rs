use nalgebra::DMatrix;
use serde::Serialize;

use super::{bessel, Boundary, LatticeDomain};
use crate::error::{Error, Result};

/// Largest site count for which dense kernels are built.
pub const DENSE_SITE_CAP: usize = 4096;

/// `P_t^ε(jε) = e^(−τ) I_|j|(τ)` with `τ = t/ε²`: the law at time `t` of `ε`
/// times a rate-1 simple random walk run for time `t/ε²`.
pub fn walk_kernel(t: f64, epsilon: f64, j: i64) -> Result<f64> {
    check_time(t, epsilon)?;
    bessel::scaled_bessel_i(j, t / (epsilon * epsilon))
}

/// `P_t^ε(jε)` for `j = 0..=jmax`.
pub fn walk_kernel_table(t: f64, epsilon: f64, jmax: usize) -> Result<Vec<f64>> {
    check_time(t, epsilon)?;
    bessel::scaled_bessel_i_table(jmax, t / (epsilon * epsilon))
}

fn check_time(t: f64, epsilon: f64) -> Result<()> {
    if !(t >= 0.0) || !(epsilon > 0.0) {
        return Err(Error::contract(format!(
            "need t ≥ 0 and epsilon > 0, got t = {t}, epsilon = {epsilon}"
        )));
    }
    Ok(())
}

/// Generator `Q` of the walk on the domain's sites, so that `Q·U` is the
/// discrete Laplacian. Rows and columns of pinned sites are zero.
pub fn generator_matrix(domain: &LatticeDomain) -> DMatrix<f64> {
    let n = domain.n_sites();
    let c = 0.5 / (domain.epsilon * domain.epsilon);
    let mut q = DMatrix::zeros(n, n);
    match domain.boundary {
        Boundary::Periodic => {
            for i in 0..n {
                q[(i, i)] = -2.0 * c;
                q[(i, (i + 1) % n)] += c;
                q[(i, (i + n - 1) % n)] += c;
            }
        }
        Boundary::Neumann => {
            for i in 0..n {
                if i > 0 {
                    q[(i, i - 1)] = c;
                    q[(i, i)] -= c;
                }
                if i + 1 < n {
                    q[(i, i + 1)] = c;
                    q[(i, i)] -= c;
                }
            }
        }
        Boundary::Dirichlet | Boundary::FreeTruncated => {
            for i in 1..n - 1 {
                q[(i, i)] = -2.0 * c;
                if i > 1 {
                    q[(i, i - 1)] = c;
                }
                if i + 2 < n {
                    q[(i, i + 1)] = c;
                }
            }
        }
    }
    q
}

/// Dense transition kernel `exp(tQ)` on a lattice domain.
///
/// Entries are nonnegative and symmetric. For absorbing boundaries and
/// `t > 0`, rows and columns of the pinned sites are zero (a walk started
/// there is already killed).
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub time: f64,
    pub domain: LatticeDomain,
    pub entries: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.entries.row(i).sum()
    }

    /// `out = K · input`.
    pub fn apply_into(&self, input: &[f64], out: &mut [f64]) {
        let n = self.n();
        assert_eq!(input.len(), n, "field length does not match kernel");
        assert_eq!(out.len(), n, "output length does not match kernel");
        // column i equals row i by symmetry, and columns are contiguous
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.entries.column(i).iter().zip(input).map(|(k, v)| k * v).sum();
        }
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        self.apply_into(input, &mut out);
        out
    }
}

pub fn kernel_matrix(t: f64, domain: &LatticeDomain) -> Result<KernelMatrix> {
    kernel_matrix_with_cap(t, domain, DENSE_SITE_CAP)
}

/// `exp(tQ)` by Padé scaling and squaring, refusing domains above `cap` sites.
pub fn kernel_matrix_with_cap(t: f64, domain: &LatticeDomain, cap: usize) -> Result<KernelMatrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::contract(format!("kernel time must be finite and ≥ 0, got {t}")));
    }
    let n = domain.n_sites();
    if n > cap {
        return Err(Error::Resource(format!(
            "{n} sites exceed the dense kernel cap of {cap}"
        )));
    }
    if t == 0.0 {
        return Ok(KernelMatrix {
            time: t,
            domain: *domain,
            entries: DMatrix::identity(n, n),
        });
    }
    let q = generator_matrix(domain);
    let mut k = if domain.boundary.is_absorbing() {
        let inner = (q.view((1, 1), (n - 2, n - 2)) * t).exp();
        let mut k = DMatrix::zeros(n, n);
        k.view_mut((1, 1), (n - 2, n - 2)).copy_from(&inner);
        k
    } else {
        (q * t).exp()
    };
    for i in 0..n {
        for j in i..n {
            let v = (0.5 * (k[(i, j)] + k[(j, i)])).max(0.0);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        time: t,
        domain: *domain,
        entries: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Row {
    pub s: f64,
    /// `Σ_j [P_s^ε(jε)/ε]² · ε`
    pub l2_mass: f64,
    /// `l2_mass · √s`
    pub bound_ratio: f64,
}

/// Discrete `L²` mass of the rescaled walk kernel against the `1/√s` bound.
pub fn kernel_l2_bound_check(epsilon: f64, s_values: &[f64]) -> Result<Vec<L2Row>> {
    s_values
        .iter()
        .map(|&s| {
            if !(s > 0.0) {
                return Err(Error::contract(format!("s must be positive, got {s}")));
            }
            let tau = s / (epsilon * epsilon);
            let jmax = (40.0 * (tau + 1.0).sqrt()) as usize + 40;
            let p = walk_kernel_table(s, epsilon, jmax)?;
            let sq = p[0] * p[0] + 2.0 * p[1..].iter().map(|v| v * v).sum::<f64>();
            let l2_mass = sq / epsilon;
            Ok(L2Row {
                s,
                l2_mass,
                bound_ratio: l2_mass * s.sqrt(),
            })
        })
        .collect()
}
