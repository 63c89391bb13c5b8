//! Lattice domains `{iε}`, boundary rules, the nearest-neighbour generator
//! `(1/2ε²)(U(i−1) + U(i+1) − 2U(i))` and its transition kernels.

pub mod bessel;
mod kernel;
pub mod spectral;

pub use kernel::{
    generator_matrix, kernel_l2_bound_check, kernel_matrix, kernel_matrix_with_cap, walk_kernel, walk_kernel_table,
    KernelMatrix, L2Row, DENSE_SITE_CAP,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Endpoint sites pinned to zero; the walk is killed on reaching them.
    Dirichlet,
    /// Reflecting: the ghost site beyond each end carries the end site's value.
    Neumann,
    /// Sites `origin..=end` on a ring; `end + 1` wraps to `origin`.
    Periodic,
    /// Truncation of the infinite lattice: absorbing like Dirichlet, with mass
    /// lost at the ends reported as a diagnostic.
    FreeTruncated,
}

impl Boundary {
    pub fn is_absorbing(self) -> bool {
        matches!(self, Boundary::Dirichlet | Boundary::FreeTruncated)
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Neumann => "neumann",
            Boundary::Periodic => "periodic",
            Boundary::FreeTruncated => "free_truncated",
        }
    }
}

/// Sites `x = iε` for `i ∈ [origin_index, end_index]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeDomain {
    pub epsilon: f64,
    pub origin_index: i64,
    pub end_index: i64,
    pub boundary: Boundary,
}

fn snap(x: f64, epsilon: f64) -> Result<i64> {
    let r = x / epsilon;
    let i = r.round();
    if (r - i).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(Error::contract(format!(
            "{x} is not a multiple of the lattice spacing {epsilon}"
        )));
    }
    Ok(i as i64)
}

impl LatticeDomain {
    pub fn new(epsilon: f64, origin_index: i64, end_index: i64, boundary: Boundary) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::contract(format!("epsilon must be positive, got {epsilon}")));
        }
        if end_index - origin_index < 2 {
            return Err(Error::contract(format!(
                "need at least three sites, got indices {origin_index}..={end_index}"
            )));
        }
        Ok(LatticeDomain {
            epsilon,
            origin_index,
            end_index,
            boundary,
        })
    }

    /// Lattice covering the physical interval `[x0, x1]`, or `[x0, x1)` for
    /// periodic domains so that `x1` is identified with `x0`.
    pub fn interval(x0: f64, x1: f64, epsilon: f64, boundary: Boundary) -> Result<Self> {
        if !(x1 > x0) {
            return Err(Error::contract(format!("empty interval [{x0}, {x1}]")));
        }
        let i0 = snap(x0, epsilon)?;
        let mut i1 = snap(x1, epsilon)?;
        if boundary == Boundary::Periodic {
            i1 -= 1;
        }
        Self::new(epsilon, i0, i1, boundary)
    }

    pub fn n_sites(&self) -> usize {
        (self.end_index - self.origin_index + 1) as usize
    }

    /// Absolute lattice index of local site `local`.
    pub fn global_index(&self, local: usize) -> i64 {
        self.origin_index + local as i64
    }

    pub fn local_index(&self, global: i64) -> Option<usize> {
        (global >= self.origin_index && global <= self.end_index).then(|| (global - self.origin_index) as usize)
    }

    pub fn x(&self, local: usize) -> f64 {
        self.global_index(local) as f64 * self.epsilon
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|i| self.x(i)).collect()
    }

    /// Whether `local` is a pinned endpoint.
    pub fn is_pinned(&self, local: usize) -> bool {
        self.boundary.is_absorbing() && (local == 0 || local + 1 == self.n_sites())
    }

    /// Physical extent `(x0, x1)`; for periodic domains `x1` is the identified
    /// endpoint one spacing past the last site.
    pub fn extent(&self) -> (f64, f64) {
        let hi = match self.boundary {
            Boundary::Periodic => self.end_index + 1,
            _ => self.end_index,
        };
        (self.origin_index as f64 * self.epsilon, hi as f64 * self.epsilon)
    }

    /// Local indices of sites with `lo ≤ x ≤ hi`.
    pub fn sites_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let tol = 1e-9 * self.epsilon;
        let first = ((lo - tol) / self.epsilon).ceil() as i64;
        let last = ((hi + tol) / self.epsilon).floor() as i64;
        let a = first.max(self.origin_index) - self.origin_index;
        let b = last.min(self.end_index) - self.origin_index + 1;
        if b <= a {
            0..0
        } else {
            a as usize..b as usize
        }
    }

    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        LatticeDomain { boundary, ..*self }
    }
}

/// `(1/2ε²)(U(i−1) + U(i+1) − 2U(i))` with the domain's boundary rule.
///
/// Pinned sites of absorbing domains map to 0 and are treated as 0 when they
/// appear as neighbours, so the operator matches [`generator_matrix`].
pub fn discrete_laplacian_apply(domain: &LatticeDomain, field: &[f64]) -> Result<Vec<f64>> {
    let n = domain.n_sites();
    if field.len() != n {
        return Err(Error::contract(format!(
            "field has {} values, domain has {n} sites",
            field.len()
        )));
    }
    let c = 0.5 / (domain.epsilon * domain.epsilon);
    let mut out = vec![0.0; n];
    match domain.boundary {
        Boundary::Periodic => {
            for i in 0..n {
                let l = field[(i + n - 1) % n];
                let r = field[(i + 1) % n];
                out[i] = c * (l + r - 2.0 * field[i]);
            }
        }
        Boundary::Neumann => {
            for i in 0..n {
                let l = if i == 0 { field[0] } else { field[i - 1] };
                let r = if i + 1 == n { field[n - 1] } else { field[i + 1] };
                out[i] = c * (l + r - 2.0 * field[i]);
            }
        }
        Boundary::Dirichlet | Boundary::FreeTruncated => {
            for i in 1..n - 1 {
                let l = if i == 1 { 0.0 } else { field[i - 1] };
                let r = if i + 2 == n { 0.0 } else { field[i + 1] };
                out[i] = c * (l + r - 2.0 * field[i]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_geometry() {
        let d = LatticeDomain::interval(0.0, 1.0, 0.25, Boundary::Dirichlet).unwrap();
        assert_eq!(d.n_sites(), 5);
        assert_eq!(d.positions(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(d.is_pinned(0) && d.is_pinned(4) && !d.is_pinned(2));

        let p = LatticeDomain::interval(0.0, 1.0, 0.25, Boundary::Periodic).unwrap();
        assert_eq!(p.n_sites(), 4);
        assert_eq!(p.extent(), (0.0, 1.0));
        assert!(!p.is_pinned(0));

        let w = LatticeDomain::interval(-2.0, 2.0, 0.25, Boundary::FreeTruncated).unwrap();
        assert_eq!(w.local_index(2), Some(10));
        assert_eq!(w.sites_in(0.0, 1.0), 8..13);
        assert!(LatticeDomain::interval(0.0, 0.3, 0.25, Boundary::Dirichlet).is_err());
        assert!(LatticeDomain::new(0.1, 0, 1, Boundary::Neumann).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let p = LatticeDomain::new(1.0, 0, 5, Boundary::Periodic).unwrap();
        let flat = discrete_laplacian_apply(&p, &[3.0; 6]).unwrap();
        assert!(flat.iter().all(|&v| v == 0.0));
        let spike = discrete_laplacian_apply(&p, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(spike, vec![0.5, -1.0, 0.5, 0.0, 0.0, 0.0]);

        let n = LatticeDomain::new(0.1, 0, 9, Boundary::Neumann).unwrap();
        let lin: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let l = discrete_laplacian_apply(&n, &lin).unwrap();
        assert!(l[1..9].iter().all(|v| v.abs() < 1e-12));

        assert!(matches!(
            discrete_laplacian_apply(&n, &[0.0; 3]),
            Err(Error::Contract(_))
        ));
    }
}
