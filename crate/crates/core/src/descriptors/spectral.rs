//! Smallest generalized eigenpairs of `(W, M)`: the cotangent stiffness and
//! the lumped mass.
//!
//! The pencil is reduced to the symmetric `A = M^{-1/2} W M^{-1/2}`. Small
//! meshes go through a dense eigensolver; larger ones use shift-invert
//! Lanczos with full reorthogonalization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LdlFactor};
use crate::mesh::{LaplaceBeltrami, SurfaceMesh};

/// Meshes up to this many vertices are solved densely.
const DENSE_LIMIT: usize = 600;
const RITZ_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    /// Columns are mass-orthonormal eigenfunctions.
    eigenvectors: DMatrix<f64>,
    mass: Vec<f64>,
}

impl SpectralBasis {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.mass.len()
    }

    /// Largest deviation of `ΦᵀMΦ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.len();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..=a {
                let s: f64 = (0..self.mass.len())
                    .map(|i| self.mass[i] * self.eigenvectors[(i, a)] * self.eigenvectors[(i, b)])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// Computes the `m` smallest eigenpairs of the Laplace-Beltrami operator of
/// `mesh`, in ascending order.
pub fn spectral_basis(mesh: &SurfaceMesh, m: usize) -> Result<SpectralBasis> {
    let n = mesh.num_vertices();
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs of a mesh with {n} vertices"
        )));
    }
    let lb = LaplaceBeltrami::new(mesh);
    let mass = lb.mass().to_vec();
    if let Some(i) = mass.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Validation(format!("vertex {i} has no incident area")));
    }
    let scale: Vec<f64> = mass.iter().map(|v| 1.0 / v.sqrt()).collect();
    let w = lb.stiffness();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let (cols, vals) = w.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| (j, scale[i] * v * scale[j])).collect()
        })
        .collect();
    let a = CsrMatrix::from_rows(n, rows);

    let (_, vectors) = if n <= DENSE_LIMIT {
        dense_smallest(&a, m)
    } else {
        lanczos_smallest(&a, m)?
    };

    let mut eigenvectors = DMatrix::zeros(n, m);
    let mut eigenvalues = Vec::with_capacity(m);
    for k in 0..m {
        let y = vectors.column(k);
        // Rayleigh quotient; more accurate than the Ritz value for λ ≈ 0.
        let ay = a.mul_vec(y.as_slice());
        let lambda = y.iter().zip(&ay).map(|(p, q)| p * q).sum::<f64>() / y.norm_squared();
        eigenvalues.push(lambda);
        let sign = if y.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[(i, k)] = sign * scale[i] * y[i] / y.norm();
        }
    }
    Ok(SpectralBasis {
        eigenvalues,
        eigenvectors,
        mass,
    })
}

fn dense_smallest(a: &CsrMatrix, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let d = a.to_dense();
    let d = 0.5 * (&d + d.transpose());
    let eig = d.symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]).then(p.cmp(&q)));
    let values = idx[..m].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), m, |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for q in basis {
            let c: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn lanczos_smallest(a: &CsrMatrix, m: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mean_diag = a.diagonal().iter().sum::<f64>() / n as f64;
    let sigma = 1e-3 * mean_diag.max(f64::MIN_POSITIVE);
    // (A + σI)⁻¹ has the wanted eigenvalues as its largest ones.
    let factor = LdlFactor::with_shift(a, sigma, "Laplace-Beltrami shift-invert")?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b5_1d3a);
    let random_unit = |rng: &mut ChaCha8Rng, basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut v, basis);
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (nv > 1e-10).then(|| v.iter().map(|x| x / nv).collect())
    };

    let mut basis: Vec<Vec<f64>> = vec![random_unit(&mut rng, &[]).expect("nonzero start")];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut target = (2 * m + 20).min(n);
    let mut attained;
    loop {
        while alpha.len() < target {
            let j = alpha.len();
            let mut w = factor.solve(&basis[j]);
            let aj: f64 = w.iter().zip(&basis[j]).map(|(p, q)| p * q).sum();
            alpha.push(aj);
            orthogonalize(&mut w, &basis);
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if alpha.len() == n {
                break;
            }
            if b > 1e-12 * aj.abs().max(1e-300) {
                beta.push(b);
                basis.push(w.iter().map(|x| x / b).collect());
            } else {
                // Invariant subspace found; continue from a fresh direction.
                match random_unit(&mut rng, &basis) {
                    Some(v) => {
                        beta.push(0.0);
                        basis.push(v);
                    }
                    None => break,
                }
            }
        }
        let k = alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = t.symmetric_eigen();
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]).then(p.cmp(&q)));
        let beta_k = if beta.len() >= k { beta[k - 1] } else { 0.0 };
        let theta_max = eig.eigenvalues[idx[0]].abs();
        attained = idx
            .iter()
            .take(m)
            .take_while(|&&i| {
                let res = (beta_k * eig.eigenvectors[(k - 1, i)]).abs();
                res <= RITZ_TOL * theta_max
            })
            .count();
        if attained >= m || k >= n {
            if attained < m && k < m {
                break;
            }
            let mut vectors = DMatrix::zeros(n, m);
            let mut values = Vec::with_capacity(m);
            for (c, &i) in idx.iter().take(m).enumerate() {
                let theta = eig.eigenvalues[i];
                values.push(1.0 / theta - sigma);
                let mut col = DVector::zeros(n);
                for (j, q) in basis.iter().take(k).enumerate() {
                    let s = eig.eigenvectors[(j, i)];
                    for r in 0..n {
                        col[r] += s * q[r];
                    }
                }
                vectors.set_column(c, &col);
            }
            return Ok((values, vectors));
        }
        if target >= n {
            break;
        }
        target = (target + m).min(n);
    }
    Err(Error::Eigen {
        requested: m,
        attained,
    })
}
