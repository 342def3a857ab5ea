//! Heat kernel signature.
//!
//! `HKS(x, t) = Σ_j exp(−λ_j t) φ_j(x)²`, divided per time slice by its
//! area-weighted mean over the surface. With the default time samples,
//! which scale with the spectrum, the result is invariant under uniform
//! scaling of the mesh.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::spectral::SpectralBasis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HksField {
    times: Vec<f64>,
    /// Vertices × time samples.
    values: DMatrix<f64>,
}

impl HksField {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn num_vertices(&self) -> usize {
        self.values.nrows()
    }

    /// Descriptor of vertex `i`.
    pub fn descriptor(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Euclidean distance between descriptor `i` of `self` and `j` of `other`.
    pub fn distance(&self, i: usize, other: &HksField, j: usize) -> f64 {
        (0..self.values.ncols())
            .map(|t| (self.values[(i, t)] - other.values[(j, t)]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Per-vertex CSV: `vertex,t=<time>,…`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("vertex");
        for t in &self.times {
            let _ = write!(s, ",t={t:.6e}");
        }
        s.push('\n');
        for i in 0..self.values.nrows() {
            let _ = write!(s, "{i}");
            for t in 0..self.values.ncols() {
                let _ = write!(s, ",{:.17e}", self.values[(i, t)]);
            }
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// `s` log-spaced times spanning `[4 ln 10 / λ_max, 4 ln 10 / λ₂]`.
pub fn default_times(basis: &SpectralBasis, s: usize) -> Result<Vec<f64>> {
    let ev = basis.eigenvalues();
    if ev.len() < 2 || s == 0 {
        return Err(Error::InvalidParameter(
            "default HKS times need at least two eigenvalues and one sample".into(),
        ));
    }
    let l2 = ev[1];
    let lm = ev[ev.len() - 1];
    if !(l2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "second eigenvalue {l2} is not positive; is the mesh connected?"
        )));
    }
    let c = 4.0 * std::f64::consts::LN_10;
    let (lo, hi) = ((c / lm).ln(), (c / l2).ln());
    Ok((0..s)
        .map(|k| {
            let f = if s == 1 { 0.0 } else { k as f64 / (s - 1) as f64 };
            (lo + f * (hi - lo)).exp()
        })
        .collect())
}

pub fn hks(basis: &SpectralBasis, times: &[f64]) -> Result<HksField> {
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(format!("HKS time must be positive, got {t}")));
    }
    let n = basis.num_vertices();
    let ev = basis.eigenvalues();
    let phi = basis.eigenvectors();
    let mass = basis.mass();
    let area: f64 = mass.iter().sum();
    let mut values = DMatrix::zeros(n, times.len());
    for (c, &t) in times.iter().enumerate() {
        let decay: Vec<f64> = ev.iter().map(|&l| (-l.max(0.0) * t).exp()).collect();
        for i in 0..n {
            values[(i, c)] = decay.iter().enumerate().map(|(j, d)| d * phi[(i, j)].powi(2)).sum();
        }
        let integral: f64 = (0..n).map(|i| mass[i] * values[(i, c)]).sum();
        let norm = area / integral;
        values.column_mut(c).iter_mut().for_each(|v| *v *= norm);
    }
    Ok(HksField {
        times: times.to_vec(),
        values,
    })
}
