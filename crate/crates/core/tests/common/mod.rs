//! Small meshes shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use forcematch::linalg::CsrMatrix;
use forcematch::mesh::{SurfaceMesh, TetMesh, Vec3};
use forcematch::socp::ConicProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Unit cube split into five tets around the central tet (1, 2, 4, 7).
pub fn five_tet_cube() -> TetMesh {
    let nodes = (0..8).map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)).collect();
    TetMesh::new(nodes, vec![[1, 2, 4, 7], [0, 1, 2, 4], [3, 1, 2, 7], [5, 1, 4, 7], [6, 2, 4, 7]]).unwrap()
}

/// The five-tet cube with its central tet split at the centroid, which adds
/// one interior node.
pub fn cube_with_interior_node() -> TetMesh {
    let cube = five_tet_cube();
    let mut nodes = cube.nodes().to_vec();
    let c = [1, 2, 4, 7].iter().map(|&i| nodes[i]).sum::<Vec3>() / 4.0;
    nodes.push(c);
    let tets = vec![
        [8, 2, 4, 7],
        [1, 8, 4, 7],
        [1, 2, 8, 7],
        [1, 2, 4, 8],
        [0, 1, 2, 4],
        [3, 1, 2, 7],
        [5, 1, 4, 7],
        [6, 2, 4, 7],
    ];
    TetMesh::new(nodes, tets).unwrap()
}

/// Unit icosphere; `levels = 4` gives 2562 vertices.
pub fn icosphere(levels: usize) -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(4 * f.len());
        for &[a, b, c] in &f {
            let mut m = |x: usize, y: usize| {
                *mid.entry((x.min(y), x.max(y))).or_insert_with(|| {
                    v.push(((v[x] + v[y]) / 2.0).normalize());
                    v.len() - 1
                })
            };
            let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    SurfaceMesh::new(v, f).unwrap()
}

/// Regular `nx × ny` grid on `[0, w] × [0, h]` in the z = 0 plane.
pub fn grid(nx: usize, ny: usize, w: f64, h: f64) -> SurfaceMesh {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut v = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Vec3::new(w * i as f64 / nx as f64, h * j as f64 / ny as f64, 0.0));
        }
    }
    let mut f = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    SurfaceMesh::new(v, f).unwrap()
}

pub struct RandomProgram {
    pub problem: ConicProblem,
    /// Strictly feasible primal point.
    pub x0: Vec<f64>,
}

/// Random program with a strictly feasible primal and dual, hence a finite
/// optimum, and at most `max_vars` variables.
pub fn random_program(rng: &mut ChaCha8Rng, max_vars: usize) -> RandomProgram {
    let n = rng.random_range(2..=max_vars);
    let p = rng.random_range(0..=2.min(n - 1));
    let mut cones = Vec::new();
    let mut m = 0;
    while m < n + 2 || cones.len() < 2 {
        let d = rng.random_range(1..=5);
        cones.push(d);
        m += d;
    }
    let mut normal = || rng.random_range(-1.0..1.0f64) + rng.random_range(-1.0..1.0f64);
    let gd = DMatrix::from_fn(m, n, |_, _| normal());
    let ad = DMatrix::from_fn(p, n, |_, _| normal());
    let x0 = DVector::from_fn(n, |_, _| normal());
    let mut interior = |cones: &[usize]| -> DVector<f64> {
        let mut v = Vec::new();
        for &d in cones {
            let tail: Vec<f64> = (1..d).map(|_| normal()).collect();
            let t = tail.iter().map(|x| x * x).sum::<f64>().sqrt() + 0.1 + normal().abs();
            v.push(t);
            v.extend(tail);
        }
        DVector::from_vec(v)
    };
    let s0 = interior(&cones);
    let z0 = interior(&cones);
    let y0 = DVector::from_fn(p, |_, _| normal());
    let h = &gd * &x0 + s0;
    let b = &ad * &x0;
    let c = -(gd.transpose() * z0) - ad.transpose() * y0;
    let to_csr = |d: &DMatrix<f64>| {
        let trip: Vec<(usize, usize, f64)> = (0..d.nrows()).flat_map(|i| (0..d.ncols()).map(move |j| (i, j, d[(i, j)]))).collect();
        CsrMatrix::from_triplets(d.nrows(), d.ncols(), &trip)
    };
    let problem = ConicProblem::new(c.as_slice().to_vec(), to_csr(&ad), b.as_slice().to_vec(), to_csr(&gd), h.as_slice().to_vec(), cones).unwrap();
    RandomProgram { problem, x0: x0.as_slice().to_vec() }
}

/// Reference solution by a primal log-barrier path-following method with
/// equality-constrained Newton steps, run until the duality bound `ν / t`
/// is below `1e-11`.
pub fn barrier_reference(rp: &RandomProgram) -> f64 {
    let pr = &rp.problem;
    let gd = pr.g.to_dense();
    let ad = pr.a.to_dense();
    let n = pr.num_vars();
    let p = pr.b.len();
    let c = DVector::from_column_slice(&pr.c);
    let h = DVector::from_column_slice(&pr.h);
    let nu: f64 = pr.cones.iter().map(|&d| if d == 1 { 1.0 } else { 2.0 }).sum();
    let barrier = |s: &DVector<f64>| -> Option<f64> {
        let mut v = 0.0;
        let mut o = 0;
        for &d in &pr.cones {
            let q = if d == 1 { s[o] } else { s[o] * s[o] - s.rows(o + 1, d - 1).norm_squared() };
            if !(q > 0.0 && s[o] > 0.0) {
                return None;
            }
            v -= q.ln();
            o += d;
        }
        Some(v)
    };
    let derivs = |s: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let m = s.len();
        let mut g = DVector::zeros(m);
        let mut hs = DMatrix::zeros(m, m);
        let mut o = 0;
        for &d in &pr.cones {
            if d == 1 {
                g[o] = -1.0 / s[o];
                hs[(o, o)] = 1.0 / (s[o] * s[o]);
            } else {
                let q = s[o] * s[o] - s.rows(o + 1, d - 1).norm_squared();
                let mut js = DVector::zeros(d);
                js[0] = s[o];
                for i in 1..d {
                    js[i] = -s[o + i];
                }
                for i in 0..d {
                    g[o + i] = -2.0 * js[i] / q;
                    for j in 0..d {
                        let jd = if i == j { if i == 0 { 1.0 } else { -1.0 } } else { 0.0 };
                        hs[(o + i, o + j)] = -2.0 * jd / q + 4.0 * js[i] * js[j] / (q * q);
                    }
                }
            }
            o += d;
        }
        (g, hs)
    };
    let mut x = DVector::from_column_slice(&rp.x0);
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let s = &h - &gd * &x;
            let (gs, hs) = derivs(&s);
            let grad = &c * t - gd.transpose() * gs;
            let hess = gd.transpose() * hs * &gd;
            let mut kkt = DMatrix::zeros(n + p, n + p);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
            kkt.view_mut((0, n), (n, p)).copy_from(&ad.transpose());
            kkt.view_mut((n, 0), (p, n)).copy_from(&ad);
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            let Some(sol) = kkt.lu().solve(&rhs) else { break };
            let dx = sol.rows(0, n).into_owned();
            let decrement = -grad.dot(&dx);
            if decrement < 1e-14 {
                break;
            }
            let f0 = t * c.dot(&x) + barrier(&s).unwrap();
            let mut step = 1.0;
            loop {
                let xn = &x + &dx * step;
                if let Some(bv) = barrier(&(&h - &gd * &xn)) {
                    if t * c.dot(&xn) + bv <= f0 - 0.25 * step * decrement {
                        x = xn;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-20 {
                    break;
                }
            }
            if step < 1e-20 {
                break;
            }
        }
        if nu / t < 1e-11 {
            return c.dot(&x);
        }
        t *= 8.0;
    }
}
