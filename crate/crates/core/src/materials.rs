//! Hyperelastic material models: stored energy, Piola-Kirchhoff stresses
//! and the fourth-order tangent `∂²Ŵ/∂F²`.
//!
//! Fourth-order tensors are stored as 9×9 matrices with the pair `(i, j)`
//! flattened to `3i + j`, so `A[(3i+j, 3k+l)] = ∂T_ij/∂F_kl`.

use nalgebra::{Matrix3, SMatrix};

use crate::error::{Error, Result};

/// Flattened fourth-order tangent tensor.
pub type Tangent = SMatrix<f64, 9, 9>;

/// Smallest admissible `det F` for models that require orientation.
pub const MIN_DET: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialModel {
    /// Small-strain Hooke law, `ε = sym(F) − I`.
    Linear { lambda: f64, mu: f64 },
    /// Saint Venant-Kirchhoff, `E = (FᵀF − I)/2`.
    Svk { lambda: f64, mu: f64 },
    /// Compressible Neo-Hookean `α(I₁ − 3) + β(J − 1)²`.
    NeoHookean { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressPair {
    pub first_pk: Matrix3<f64>,
    pub second_pk: Matrix3<f64>,
}

/// Principal invariants `(trace, trace of cofactor, determinant)`.
pub fn invariants(c: &Matrix3<f64>) -> (f64, f64, f64) {
    let tr = c.trace();
    let tr2 = (c * c).trace();
    (tr, 0.5 * (tr * tr - tr2), c.determinant())
}

/// Reduced invariants `(I₁, I₂, J)` of a right Cauchy-Green tensor.
pub fn reduced_invariants(c: &Matrix3<f64>) -> Result<(f64, f64, f64)> {
    let (i1, i2, i3) = invariants(c);
    if !(i3 > 0.0) {
        return Err(Error::Domain { det: i3 });
    }
    Ok((i3.powf(-1.0 / 3.0) * i1, i3.powf(-2.0 / 3.0) * i2, i3.sqrt()))
}

fn check_det(f: &Matrix3<f64>) -> Result<f64> {
    let d = f.determinant();
    if d < MIN_DET || !d.is_finite() {
        Err(Error::Domain { det: d })
    } else {
        Ok(d)
    }
}

impl MaterialModel {
    pub fn linear(lambda: f64, mu: f64) -> Result<Self> {
        let m = MaterialModel::Linear { lambda, mu };
        m.validate().map(|_| m)
    }

    pub fn svk(lambda: f64, mu: f64) -> Result<Self> {
        let m = MaterialModel::Svk { lambda, mu };
        m.validate().map(|_| m)
    }

    pub fn neo_hookean(alpha: f64, beta: f64) -> Result<Self> {
        let m = MaterialModel::NeoHookean { alpha, beta };
        m.validate().map(|_| m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MaterialModel::Linear { lambda, mu } | MaterialModel::Svk { lambda, mu } => {
                if !(lambda >= 0.0 && mu >= 0.0 && lambda.is_finite() && mu.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "Lamé constants must be finite and nonnegative (lambda = {lambda}, mu = {mu})"
                    )));
                }
                if lambda == 0.0 && mu == 0.0 {
                    return Err(Error::InvalidParameter("Lamé constants are both zero".into()));
                }
            }
            MaterialModel::NeoHookean { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "Neo-Hookean constants must be positive (alpha = {alpha}, beta = {beta})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaterialModel::Linear { .. } => "linear",
            MaterialModel::Svk { .. } => "svk",
            MaterialModel::NeoHookean { .. } => "neo",
        }
    }

    /// Characteristic stress used to scale tolerances and spring weights:
    /// the small-strain shear modulus, μ (or λ if μ = 0) for the quadratic
    /// models and 2α for Neo-Hookean.
    pub fn stress_scale(&self) -> f64 {
        match *self {
            MaterialModel::Linear { lambda, mu } | MaterialModel::Svk { lambda, mu } => {
                if mu > 0.0 {
                    mu
                } else {
                    lambda
                }
            }
            MaterialModel::NeoHookean { alpha, .. } => 2.0 * alpha,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, MaterialModel::Linear { .. })
    }

    pub fn energy(&self, f: &Matrix3<f64>) -> Result<f64> {
        let id = Matrix3::identity();
        match *self {
            MaterialModel::Linear { lambda, mu } => {
                let eps = 0.5 * (f + f.transpose()) - id;
                let tr = eps.trace();
                Ok(0.5 * lambda * tr * tr + mu * (eps * eps).trace())
            }
            MaterialModel::Svk { lambda, mu } => {
                check_det(f)?;
                let e = 0.5 * (f.transpose() * f - id);
                let tr = e.trace();
                Ok(0.5 * lambda * tr * tr + mu * (e * e).trace())
            }
            MaterialModel::NeoHookean { alpha, beta } => {
                let d = check_det(f)?;
                let i1 = f.norm_squared();
                let a = d.powf(-2.0 / 3.0);
                Ok(alpha * (a * i1 - 3.0) + beta * (d - 1.0) * (d - 1.0))
            }
        }
    }

    /// First Piola-Kirchhoff stress `T = ∂Ŵ/∂F`.
    pub fn first_pk(&self, f: &Matrix3<f64>) -> Result<Matrix3<f64>> {
        let id = Matrix3::identity();
        match *self {
            MaterialModel::Linear { lambda, mu } => {
                let eps = 0.5 * (f + f.transpose()) - id;
                Ok(id * (lambda * eps.trace()) + 2.0 * mu * eps)
            }
            MaterialModel::Svk { .. } => {
                check_det(f)?;
                Ok(f * self.svk_sigma(f))
            }
            MaterialModel::NeoHookean { alpha, beta } => {
                let d = check_det(f)?;
                let g = inverse_transpose(f, d);
                let i1 = f.norm_squared();
                let a = d.powf(-2.0 / 3.0);
                Ok(2.0 * alpha * a * f + (-(2.0 / 3.0) * alpha * a * i1 + 2.0 * beta * (d - 1.0) * d) * g)
            }
        }
    }

    fn svk_sigma(&self, f: &Matrix3<f64>) -> Matrix3<f64> {
        let (lambda, mu) = match *self {
            MaterialModel::Svk { lambda, mu } => (lambda, mu),
            _ => unreachable!("SVK helper on another model"),
        };
        let e = 0.5 * (f.transpose() * f - Matrix3::identity());
        Matrix3::identity() * (lambda * e.trace()) + 2.0 * mu * e
    }

    /// Second Piola-Kirchhoff stress `Σ = F⁻¹ T`.
    pub fn second_pk(&self, f: &Matrix3<f64>) -> Result<Matrix3<f64>> {
        match *self {
            MaterialModel::Linear { .. } => {
                let d = f.determinant();
                if d.abs() < MIN_DET {
                    return Err(Error::Domain { det: d });
                }
                let finv = f.try_inverse().ok_or(Error::Domain { det: d })?;
                Ok(finv * self.first_pk(f)?)
            }
            MaterialModel::Svk { .. } => {
                check_det(f)?;
                Ok(self.svk_sigma(f))
            }
            MaterialModel::NeoHookean { alpha, beta } => {
                let d = check_det(f)?;
                let c = f.transpose() * f;
                let cinv = c.try_inverse().ok_or(Error::Domain { det: d })?;
                let cinv = 0.5 * (cinv + cinv.transpose());
                let i1 = c.trace();
                let a = d.powf(-2.0 / 3.0);
                Ok(2.0 * alpha * a * Matrix3::identity()
                    + (-(2.0 / 3.0) * alpha * a * i1 + 2.0 * beta * (d - 1.0) * d) * cinv)
            }
        }
    }

    pub fn stresses(&self, f: &Matrix3<f64>) -> Result<StressPair> {
        Ok(StressPair {
            first_pk: self.first_pk(f)?,
            second_pk: self.second_pk(f)?,
        })
    }

    /// Tangent `∂²Ŵ/∂F²` in flattened form.
    pub fn tangent(&self, f: &Matrix3<f64>) -> Result<Tangent> {
        let mut a = Tangent::zeros();
        match *self {
            MaterialModel::Linear { lambda, mu } => {
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
                                a[(3 * i + j, 3 * k + l)] =
                                    lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                            }
                        }
                    }
                }
            }
            MaterialModel::Svk { lambda, mu } => {
                check_det(f)?;
                let s = self.svk_sigma(f);
                let ff = f * f.transpose();
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                let mut v = lambda * f[(i, j)] * f[(k, l)] + mu * f[(i, l)] * f[(k, j)];
                                if i == k {
                                    v += s[(l, j)];
                                }
                                if j == l {
                                    v += mu * ff[(i, k)];
                                }
                                a[(3 * i + j, 3 * k + l)] = v;
                            }
                        }
                    }
                }
            }
            MaterialModel::NeoHookean { alpha, beta } => {
                let d = check_det(f)?;
                let g = inverse_transpose(f, d);
                let i1 = f.norm_squared();
                let pa = d.powf(-2.0 / 3.0);
                let coeff_g = -(2.0 / 3.0) * alpha * pa * i1 + 2.0 * beta * (d - 1.0) * d;
                for k in 0..3 {
                    for l in 0..3 {
                        // Directional derivative of T along H = e_k e_lᵀ.
                        let gh = g[(k, l)];
                        let da = -(2.0 / 3.0) * pa * gh;
                        let dd = d * gh;
                        let di1 = 2.0 * f[(k, l)];
                        // dG = −G Hᵀ G, with Hᵀ = e_l e_kᵀ: dG_ij = −G_il G_kj.
                        let dg = Matrix3::from_fn(|i, j| -g[(i, l)] * g[(k, j)]);
                        let dcoeff = -(2.0 / 3.0) * alpha * (da * i1 + pa * di1)
                            + 2.0 * beta * (2.0 * d - 1.0) * dd;
                        let mut dt = 2.0 * alpha * da * f + dcoeff * g + coeff_g * dg;
                        dt[(k, l)] += 2.0 * alpha * pa;
                        for i in 0..3 {
                            for j in 0..3 {
                                a[(3 * i + j, 3 * k + l)] = dt[(i, j)];
                            }
                        }
                    }
                }
                // Exact in theory; remove rounding asymmetry.
                a = 0.5 * (a + a.transpose());
            }
        }
        Ok(a)
    }

    /// Energy, first Piola-Kirchhoff stress and tangent in one call.
    pub fn evaluate(&self, f: &Matrix3<f64>) -> Result<(f64, Matrix3<f64>, Tangent)> {
        Ok((self.energy(f)?, self.first_pk(f)?, self.tangent(f)?))
    }
}

fn inverse_transpose(f: &Matrix3<f64>, det: f64) -> Matrix3<f64> {
    // Cofactor matrix divided by the determinant.
    let c = |r: usize, s: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (s1, s2) = ((s + 1) % 3, (s + 2) % 3);
        f[(r1, s1)] * f[(r2, s2)] - f[(r1, s2)] * f[(r2, s1)]
    };
    Matrix3::from_fn(|i, j| c(i, j) / det)
}

/// Contraction `A : H` giving the stress increment for a gradient increment.
pub fn contract(a: &Tangent, h: &Matrix3<f64>) -> Matrix3<f64> {
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    s += a[(3 * i + j, 3 * k + l)] * h[(k, l)];
                }
            }
            out[(i, j)] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_of_simple_matrices() {
        assert_eq!(invariants(&Matrix3::identity()), (3.0, 3.0, 1.0));
        assert_eq!(invariants(&Matrix3::from_diagonal(&nalgebra::Vector3::new(4.0, 1.0, 1.0))), (6.0, 9.0, 4.0));
        let (i1, i2, j) = reduced_invariants(&(Matrix3::identity() * 2.5)).unwrap();
        assert!((i1 - 3.0).abs() < 1e-14 && (i2 - 3.0).abs() < 1e-14);
        assert!((j - 2.5f64.powf(1.5)).abs() < 1e-13);
    }

    #[test]
    fn svk_second_pk_direct() {
        let m = MaterialModel::svk(2.0, 3.0).unwrap();
        // E = diag(1, 0, 0) ⇔ C = diag(3, 1, 1).
        let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(3f64.sqrt(), 1.0, 1.0));
        let s = m.second_pk(&f).unwrap();
        let expect = Matrix3::from_diagonal(&nalgebra::Vector3::new(8.0, 2.0, 2.0));
        assert!((s - expect).norm() < 1e-12);
    }

    #[test]
    fn svk_energy_direct() {
        let m = MaterialModel::svk(1.0, 1.0).unwrap();
        let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.1, 1.0, 1.0));
        let e: f64 = 0.105;
        let expect = 0.5 * e * e + e * e;
        assert!((m.energy(&f).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn rest_state_is_stress_free() {
        for m in [
            MaterialModel::linear(1.0, 1.0).unwrap(),
            MaterialModel::svk(1.0, 1.0).unwrap(),
            MaterialModel::neo_hookean(1.0, 1.0).unwrap(),
        ] {
            let id = Matrix3::identity();
            assert!(m.energy(&id).unwrap().abs() < 1e-15);
            assert!(m.first_pk(&id).unwrap().norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_inverted_gradient() {
        let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
        let m = MaterialModel::neo_hookean(1.0, 1.0).unwrap();
        assert!(matches!(m.energy(&f), Err(Error::Domain { .. })));
        assert!(MaterialModel::svk(-1.0, 1.0).is_err());
    }
}
