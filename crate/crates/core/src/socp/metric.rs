//! Anisotropic spring metric `Qᵢ = wᵢ (λ_n nnᵀ + λ_t (I − nnᵀ))`.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::mesh::geometry::tangent_frame;
use crate::mesh::Vec3;

/// One spring: a fine source vertex pulled toward a target point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringPoint {
    pub vertex: usize,
    pub target: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricEntry {
    pub vertex: usize,
    pub target: Vec3,
    pub normal: Vec3,
    pub t1: Vec3,
    pub t2: Vec3,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpringMetric {
    entries: Vec<MetricEntry>,
    lambda_n: f64,
    lambda_t: f64,
}

/// Builds the metric; points with zero confidence are dropped.
pub fn build_metric(points: &[SpringPoint], lambda_n: f64, lambda_t: f64, confidences: &[f64]) -> Result<SpringMetric> {
    if !(lambda_n > 0.0 && lambda_t > 0.0 && lambda_n.is_finite() && lambda_t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "metric weights must be positive, got lambda_n = {lambda_n}, lambda_t = {lambda_t}"
        )));
    }
    if confidences.len() != points.len() {
        return Err(Error::Dimension {
            context: "build_metric: confidences",
            expected: points.len(),
            got: confidences.len(),
        });
    }
    let mut entries = Vec::with_capacity(points.len());
    for (i, (p, &w)) in points.iter().zip(confidences).enumerate() {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter(format!("confidence {w} of point {i} outside [0, 1]")));
        }
        let len = p.normal.norm();
        if !(len > 1e-12) || !len.is_finite() {
            return Err(Error::InvalidParameter(format!("zero normal at spring point {i}")));
        }
        if w == 0.0 {
            continue;
        }
        let n = p.normal / len;
        let (t1, t2) = tangent_frame(&n);
        entries.push(MetricEntry {
            vertex: p.vertex,
            target: p.target,
            normal: n,
            t1,
            t2,
            weight: w,
        });
    }
    Ok(SpringMetric {
        entries,
        lambda_n,
        lambda_t,
    })
}

impl SpringMetric {
    pub fn entries(&self) -> &[MetricEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda_n
    }

    pub fn lambda_t(&self) -> f64 {
        self.lambda_t
    }

    /// Multiplies each weight by `f(vertex)`; used for area weighting.
    pub fn scale_weights(&mut self, f: impl Fn(usize) -> f64) {
        for e in &mut self.entries {
            e.weight *= f(e.vertex);
        }
    }

    /// `Qᵢ`.
    pub fn q(&self, i: usize) -> Matrix3<f64> {
        let e = &self.entries[i];
        let nn = e.normal * e.normal.transpose();
        e.weight * (self.lambda_n * nn + self.lambda_t * (Matrix3::identity() - nn))
    }

    /// Symmetric square root `Rᵢ` with `RᵢᵀRᵢ = Qᵢ`.
    pub fn r(&self, i: usize) -> Matrix3<f64> {
        let e = &self.entries[i];
        let nn = e.normal * e.normal.transpose();
        e.weight.sqrt() * (self.lambda_n.sqrt() * nn + self.lambda_t.sqrt() * (Matrix3::identity() - nn))
    }

    /// `Σᵢ (xᵢ − targetᵢ)ᵀ Qᵢ (xᵢ − targetᵢ)` for fine positions `x`.
    pub fn energy(&self, positions: &[Vec3]) -> f64 {
        (0..self.entries.len())
            .map(|i| {
                let e = &self.entries[i];
                let d = positions[e.vertex] - e.target;
                d.dot(&(self.q(i) * d))
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(n: Vec3) -> SpringPoint {
        SpringPoint {
            vertex: 0,
            target: Vec3::zeros(),
            normal: n,
        }
    }

    #[test]
    fn isotropic_is_identity() {
        let m = build_metric(&[point(Vec3::new(0.3, -0.2, 0.9))], 1.0, 1.0, &[1.0]).unwrap();
        assert!((m.q(0) - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn axis_normal() {
        let m = build_metric(&[point(Vec3::z())], 4.0, 1.0, &[1.0]).unwrap();
        assert!((m.q(0) - Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, 4.0))).norm() < 1e-14);
        let r = m.r(0);
        assert!((r.transpose() * r - m.q(0)).norm() < 1e-12);
    }

    #[test]
    fn zero_confidence_dropped_and_zero_normal_rejected() {
        let m = build_metric(&[point(Vec3::x()), point(Vec3::y())], 2.0, 1.0, &[0.0, 0.5]).unwrap();
        assert_eq!(m.len(), 1);
        assert!(build_metric(&[point(Vec3::zeros())], 1.0, 1.0, &[1.0]).is_err());
    }
}
