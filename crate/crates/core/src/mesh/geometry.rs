use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Closest point on triangle `abc` to `p` with its barycentric weights
/// `(u, v, w)` relative to `(a, b, c)`.
///
/// Region-based evaluation (vertex, edge, face regions) so the weights are
/// exactly zero outside the face region and always sum to one.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let u = 1.0 - v - w;
    (a + ab * v + ac * w, [u, v, w])
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Signed volume of the tetrahedron `abcd` (positive for right-handed order).
pub fn tet_signed_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

/// Any unit vector orthogonal to `n` (unit input), plus the third axis.
pub fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        let n = 400;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let u = i as f64 / n as f64;
                let v = j as f64 / n as f64;
                let q = a * (1.0 - u - v) + b * u + c * v;
                best = best.min((q - p).norm());
            }
        }
        best
    }

    #[test]
    fn closest_point_regions_match_sampling() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.1);
        let c = Vec3::new(0.2, 1.0, -0.1);
        let probes = [
            Vec3::new(0.3, 0.3, 0.5),
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(2.0, -0.1, 0.0),
            Vec3::new(0.5, -0.5, 0.2),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(-0.5, 0.5, -0.3),
        ];
        for p in &probes {
            let (q, w) = closest_point_on_triangle(p, &a, &b, &c);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(w.iter().all(|&x| x >= 0.0));
            let recon = a * w[0] + b * w[1] + c * w[2];
            assert!((recon - q).norm() < 1e-14);
            let d = (q - p).norm();
            let bf = brute_force(p, &a, &b, &c);
            assert!(d <= bf + 1e-12 && bf - d < 5e-3, "{d} vs {bf}");
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        let n = Vec3::new(0.3, -0.5, 0.8).normalize();
        let (t1, t2) = tangent_frame(&n);
        assert!(t1.dot(&n).abs() < 1e-15 && t2.dot(&n).abs() < 1e-15);
        assert!((t1.norm() - 1.0).abs() < 1e-15 && (t2.norm() - 1.0).abs() < 1e-15);
        assert!(t1.dot(&t2).abs() < 1e-15);
    }
}
