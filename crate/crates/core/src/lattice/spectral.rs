//! Closed-form eigen-expansions of the lattice kernels, independent of the
//! matrix exponential. Costs `O(n³)`; intended for cross-validation.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{Boundary, LatticeDomain};

/// `exp(tQ)` assembled from the generator's known eigenbasis: Fourier modes
/// (periodic), half-shifted cosines (reflecting) or sines on the interior
/// (absorbing).
pub fn spectral_kernel(t: f64, domain: &LatticeDomain) -> DMatrix<f64> {
    let n = domain.n_sites();
    let e2 = domain.epsilon * domain.epsilon;
    let mut k = DMatrix::zeros(n, n);
    match domain.boundary {
        Boundary::Periodic => {
            let nf = n as f64;
            let decay: Vec<f64> = (0..n)
                .map(|m| (-t * (1.0 - (2.0 * PI * m as f64 / nf).cos()) / e2).exp())
                .collect();
            for i in 0..n {
                for j in 0..n {
                    let d = (i as f64) - (j as f64);
                    k[(i, j)] = (0..n)
                        .map(|m| decay[m] * (2.0 * PI * m as f64 * d / nf).cos())
                        .sum::<f64>()
                        / nf;
                }
            }
        }
        Boundary::Neumann => {
            let nf = n as f64;
            for m in 0..n {
                let theta = PI * m as f64 / nf;
                let w = (-t * (1.0 - theta.cos()) / e2).exp() * if m == 0 { 1.0 } else { 2.0 } / nf;
                let v: Vec<f64> = (0..n).map(|i| (theta * (i as f64 + 0.5)).cos()).collect();
                for i in 0..n {
                    for j in 0..n {
                        k[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
        }
        Boundary::Dirichlet | Boundary::FreeTruncated => {
            if t == 0.0 {
                return DMatrix::identity(n, n);
            }
            let m1 = (n - 1) as f64;
            for m in 1..n - 1 {
                let theta = PI * m as f64 / m1;
                let w = (-t * (1.0 - theta.cos()) / e2).exp() * 2.0 / m1;
                let v: Vec<f64> = (0..n).map(|i| (theta * i as f64).sin()).collect();
                for i in 1..n - 1 {
                    for j in 1..n - 1 {
                        k[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
        }
    }
    k
}
