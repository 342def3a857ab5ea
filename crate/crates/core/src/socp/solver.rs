//! Primal-dual interior-point method for second-order cone programs
//!
//! ```text
//! minimize    cᵀx
//! subject to  Ax = b,  h − Gx ∈ K₁ × … × K_q
//! ```
//!
//! where each `K_i` is a second-order cone `{(t, u) : ‖u‖ ≤ t}`; a cone of
//! dimension one is the nonnegative half-line. The method is an infeasible
//! start Mehrotra predictor-corrector with Nesterov-Todd scaling. Newton
//! systems are reduced to the dense normal matrix `Gᵀ W⁻² G`, factored by
//! Cholesky, with the equalities handled through a Schur complement.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Cones at least this large get their tail Gram matrix precomputed.
const BIG_CONE: usize = 32;
/// Rows with at most this many nonzeros are accumulated as sparse outer
/// products; denser rows go through a dense product.
const SPARSE_ROW: usize = 4;
const STEP_FRACTION: f64 = 0.99;
/// Refinement sweeps on the unreduced Newton system.
const KKT_REFINE: usize = 2;

#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub c: Vec<f64>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub g: CsrMatrix,
    pub h: Vec<f64>,
    /// Cone dimensions; they partition the rows of `g`.
    pub cones: Vec<usize>,
}

impl ConicProblem {
    pub fn new(
        c: Vec<f64>,
        a: CsrMatrix,
        b: Vec<f64>,
        g: CsrMatrix,
        h: Vec<f64>,
        cones: Vec<usize>,
    ) -> Result<Self> {
        let n = c.len();
        let checks = [
            ("ConicProblem: columns of A", n, a.ncols()),
            ("ConicProblem: rows of A vs b", a.nrows(), b.len()),
            ("ConicProblem: columns of G", n, g.ncols()),
            ("ConicProblem: rows of G vs h", g.nrows(), h.len()),
            ("ConicProblem: cone dimensions vs rows of G", g.nrows(), cones.iter().sum()),
        ];
        for (context, expected, got) in checks {
            if expected != got {
                return Err(Error::Dimension {
                    context,
                    expected,
                    got,
                });
            }
        }
        if cones.contains(&0) {
            return Err(Error::InvalidParameter("cone of dimension zero".into()));
        }
        if cones.is_empty() {
            return Err(Error::InvalidParameter("program has no cone constraints".into()));
        }
        Ok(ConicProblem { c, a, b, g, h, cones })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_cone_rows(&self) -> usize {
        self.h.len()
    }

    fn cone_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.cones.len() + 1);
        let mut acc = 0;
        starts.push(0);
        for &d in &self.cones {
            acc += d;
            starts.push(acc);
        }
        starts
    }

    /// Writes the program in the conic benchmark format (CBF version 3),
    /// with the cone rows as `h − Gx ∈ K` followed by the equalities
    /// `Ax − b = 0`.
    pub fn write_cbf(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::new();
        let n = self.num_vars();
        let m = self.num_cone_rows();
        let p = self.b.len();
        let _ = writeln!(s, "VER\n3\n\nOBJSENSE\nMIN\n\nVAR\n{n} 1\nF {n}\n");
        // Consecutive one-dimensional cones merge into a single L+ block.
        let mut blocks: Vec<(String, usize)> = Vec::new();
        for &d in &self.cones {
            if d == 1 {
                match blocks.last_mut() {
                    Some((kind, count)) if kind == "L+" => *count += 1,
                    _ => blocks.push(("L+".into(), 1)),
                }
            } else {
                blocks.push(("Q".into(), d));
            }
        }
        if p > 0 {
            blocks.push(("L=".into(), p));
        }
        let _ = writeln!(s, "CON\n{} {}", m + p, blocks.len());
        for (kind, d) in &blocks {
            let _ = writeln!(s, "{kind} {d}");
        }
        let obj: Vec<(usize, f64)> = self.c.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect();
        let _ = writeln!(s, "\nOBJACOORD\n{}", obj.len());
        for (j, v) in obj {
            let _ = writeln!(s, "{j} {v:.17e}");
        }
        let mut acoord = Vec::new();
        for i in 0..m {
            let (cols, vals) = self.g.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                acoord.push((i, j, -v));
            }
        }
        for i in 0..p {
            let (cols, vals) = self.a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                acoord.push((m + i, j, v));
            }
        }
        let _ = writeln!(s, "\nACOORD\n{}", acoord.len());
        for (i, j, v) in acoord {
            let _ = writeln!(s, "{i} {j} {v:.17e}");
        }
        let bc: Vec<(usize, f64)> = self
            .h
            .iter()
            .copied()
            .chain(self.b.iter().map(|v| -v))
            .enumerate()
            .filter(|e| e.1 != 0.0)
            .collect();
        let _ = writeln!(s, "\nBCOORD\n{}", bc.len());
        for (i, v) in bc {
            let _ = writeln!(s, "{i} {v:.17e}");
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Reads a CBF file with free variables, a minimization objective and
    /// `Q`, `L+` and `L=` constraint blocks, as written by
    /// [`ConicProblem::write_cbf`].
    pub fn read_cbf(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let bad = |line: usize, msg: &str| Error::parse(path, line, msg);
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(0, &format!("missing {what}")));
        fn nums<T: std::str::FromStr>(l: &str) -> Option<Vec<T>> {
            l.split_whitespace().map(|t| t.parse().ok()).collect()
        }

        let mut n = 0;
        let mut blocks: Vec<(String, usize)> = Vec::new();
        let mut obj: Vec<(usize, f64)> = Vec::new();
        let mut acoord: Vec<(usize, usize, f64)> = Vec::new();
        let mut bcoord: Vec<(usize, f64)> = Vec::new();
        while let Ok((ln, key)) = next("section") {
            match key {
                "VER" => {
                    let (ln, v) = next("version")?;
                    if v != "3" {
                        return Err(bad(ln, "only CBF version 3 is supported"));
                    }
                }
                "OBJSENSE" => {
                    let (ln, v) = next("objective sense")?;
                    if v != "MIN" {
                        return Err(bad(ln, "only minimization is supported"));
                    }
                }
                "VAR" => {
                    let (ln, v) = next("variable header")?;
                    let h: Vec<usize> = nums(v).filter(|h: &Vec<usize>| h.len() == 2).ok_or_else(|| bad(ln, "bad VAR header"))?;
                    n = h[0];
                    for _ in 0..h[1] {
                        let (ln, v) = next("variable block")?;
                        if !v.starts_with("F ") {
                            return Err(bad(ln, "only free variables are supported"));
                        }
                    }
                }
                "CON" => {
                    let (ln, v) = next("constraint header")?;
                    let h: Vec<usize> = nums(v).filter(|h: &Vec<usize>| h.len() == 2).ok_or_else(|| bad(ln, "bad CON header"))?;
                    for _ in 0..h[1] {
                        let (ln, v) = next("constraint block")?;
                        let mut it = v.split_whitespace();
                        let kind = it.next().unwrap_or_default().to_string();
                        let d: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(ln, "bad block"))?;
                        if !matches!(kind.as_str(), "Q" | "L+" | "L=") {
                            return Err(bad(ln, "unsupported cone type"));
                        }
                        blocks.push((kind, d));
                    }
                }
                "OBJACOORD" | "ACOORD" | "BCOORD" => {
                    let (ln, v) = next("entry count")?;
                    let count: usize = v.parse().map_err(|_| bad(ln, "bad entry count"))?;
                    for _ in 0..count {
                        let (ln, v) = next("entry")?;
                        let f: Vec<f64> = nums(v).ok_or_else(|| bad(ln, "bad entry"))?;
                        match (key, f.as_slice()) {
                            ("ACOORD", &[i, j, x]) => acoord.push((i as usize, j as usize, x)),
                            ("OBJACOORD" | "BCOORD", &[i, x]) => {
                                if key == "BCOORD" { bcoord.push((i as usize, x)) } else { obj.push((i as usize, x)) }
                            }
                            _ => return Err(bad(ln, "bad entry")),
                        }
                    }
                }
                "OBJBCOORD" => {
                    next("objective constant")?;
                }
                _ => return Err(bad(ln, &format!("unsupported section {key}"))),
            }
        }

        // Map constraint rows to cone rows or equality rows.
        let mut kind_of = Vec::new();
        let mut cones = Vec::new();
        let (mut m, mut p) = (0, 0);
        for (kind, d) in &blocks {
            for _ in 0..*d {
                if kind == "L=" {
                    kind_of.push((false, p));
                    p += 1;
                } else {
                    kind_of.push((true, m));
                    m += 1;
                }
            }
            match kind.as_str() {
                "Q" => cones.push(*d),
                "L+" => cones.extend(std::iter::repeat_n(1, *d)),
                _ => {}
            }
        }
        let row = |i: usize| kind_of.get(i).copied().ok_or_else(|| bad(0, "constraint index out of range"));
        let mut c = vec![0.0; n];
        for (j, v) in obj {
            *c.get_mut(j).ok_or_else(|| bad(0, "variable index out of range"))? += v;
        }
        let (mut gt, mut at) = (Vec::new(), Vec::new());
        for (i, j, v) in acoord {
            if j >= n {
                return Err(bad(0, "variable index out of range"));
            }
            match row(i)? {
                (true, r) => gt.push((r, j, -v)),
                (false, r) => at.push((r, j, v)),
            }
        }
        let (mut h, mut b) = (vec![0.0; m], vec![0.0; p]);
        for (i, v) in bcoord {
            match row(i)? {
                (true, r) => h[r] += v,
                (false, r) => b[r] -= v,
            }
        }
        ConicProblem::new(
            c,
            CsrMatrix::from_triplets(p, n, &at),
            b,
            CsrMatrix::from_triplets(m, n, &gt),
            h,
            cones,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for relative gap and relative residuals.
    pub tol: f64,
    /// Absolute gap accepted when the objective is near zero.
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            abs_tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `sᵀz`.
    pub gap: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

/// Optimality residuals of a primal-dual pair, each relative to the size of
/// the data it involves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `max(‖Ax − b‖ / max(1, ‖b‖), ‖Gx + s − h‖ / max(1, ‖h‖))`.
    pub primal: f64,
    /// `‖Gᵀz + Aᵀy + c‖ / max(1, ‖c‖)`.
    pub dual: f64,
    /// `|sᵀz| / max(1, |cᵀx|)`.
    pub complementarity: f64,
    /// Largest distance of `s` or `z` outside its cone.
    pub cone_violation: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Computes [`KktResiduals`] for `sol`.
pub fn kkt_residuals(p: &ConicProblem, sol: &ConicSolution) -> KktResiduals {
    let ax = p.a.mul_vec(&sol.x);
    let ry: Vec<f64> = ax.iter().zip(&p.b).map(|(a, b)| a - b).collect();
    let gx = p.g.mul_vec(&sol.x);
    let rz: Vec<f64> = (0..gx.len()).map(|i| gx[i] + sol.s[i] - p.h[i]).collect();
    let gtz = p.g.tr_mul_vec(&sol.z);
    let aty = p.a.tr_mul_vec(&sol.y);
    let rx: Vec<f64> = (0..p.c.len()).map(|j| gtz[j] + aty[j] + p.c[j]).collect();
    let starts = p.cone_starts();
    let mut viol = 0.0f64;
    for k in 0..p.cones.len() {
        let r = starts[k]..starts[k + 1];
        for v in [&sol.s[r.clone()], &sol.z[r]] {
            viol = viol.max(norm(&v[1..]) - v[0]);
        }
    }
    KktResiduals {
        primal: (norm(&ry) / norm(&p.b).max(1.0)).max(norm(&rz) / norm(&p.h).max(1.0)),
        dual: norm(&rx) / norm(&p.c).max(1.0),
        complementarity: dot(&sol.s, &sol.z).abs() / dot(&p.c, &sol.x).abs().max(1.0),
        cone_violation: viol.max(0.0),
    }
}

/// Nesterov-Todd scaling of one cone: `W = η [w₀ w₁ᵀ; w₁ I + w₁w₁ᵀ/(1+w₀)]`.
#[derive(Debug, Clone)]
struct ConeScaling {
    eta: f64,
    w: Vec<f64>,
}

/// `uᵀ J u` for `J = diag(1, −1, …, −1)`, factored to limit cancellation.
fn jnorm2(u: &[f64]) -> f64 {
    let t = norm(&u[1..]);
    (u[0] - t) * (u[0] + t)
}

impl ConeScaling {
    fn identity(d: usize) -> Self {
        let mut w = vec![0.0; d];
        w[0] = 1.0;
        ConeScaling { eta: 1.0, w }
    }

    fn new(s: &[f64], z: &[f64]) -> Option<Self> {
        let ss = jnorm2(s);
        let zz = jnorm2(z);
        if !(ss > 0.0 && zz > 0.0) {
            return None;
        }
        let (sn, zn) = (ss.sqrt(), zz.sqrt());
        let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
        let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
        let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
        let mut w: Vec<f64> = sb.iter().zip(&zb).map(|(a, b)| -b + a).collect();
        w[0] = sb[0] + zb[0];
        for v in &mut w {
            *v /= 2.0 * gamma;
        }
        // wᵀJw = 1 in exact arithmetic. Renormalize when the computed value
        // is trustworthy; for strongly skewed pairs it is pure cancellation.
        let wn = jnorm2(&w);
        if (wn - 1.0).abs() < 1e-3 {
            let wn = wn.sqrt();
            w.iter_mut().for_each(|v| *v /= wn);
        }
        Some(ConeScaling {
            eta: (ss / zz).sqrt().sqrt(),
            w,
        })
    }

    /// `W x` (or `W⁻¹ x` when `inverse`).
    fn apply(&self, x: &[f64], inverse: bool, out: &mut [f64]) {
        let w0 = self.w[0];
        let w1 = &self.w[1..];
        let wx1 = dot(w1, &x[1..]);
        let (sign, scale) = if inverse { (-1.0, 1.0 / self.eta) } else { (1.0, self.eta) };
        out[0] = scale * (w0 * x[0] + sign * wx1);
        let coef = wx1 / (1.0 + w0) + sign * x[0];
        for k in 1..x.len() {
            out[k] = scale * (x[k] + coef * w1[k - 1]);
        }
    }
}

#[derive(Debug, Clone)]
struct Scaling {
    cones: Vec<ConeScaling>,
    starts: Vec<usize>,
}

impl Scaling {
    fn apply(&self, x: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (k, c) in self.cones.iter().enumerate() {
            let r = self.starts[k]..self.starts[k + 1];
            c.apply(&x[r.clone()], inverse, &mut out[r]);
        }
        out
    }

    fn w(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x, false)
    }

    fn winv(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x, true)
    }

    fn winv2(&self, x: &[f64]) -> Vec<f64> {
        self.winv(&self.winv(x))
    }
}

/// Jordan product `u ∘ v` cone by cone.
fn jordan(u: &[f64], v: &[f64], starts: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for k in 0..starts.len() - 1 {
        let (a, b) = (starts[k], starts[k + 1]);
        out[a] = dot(&u[a..b], &v[a..b]);
        for i in a + 1..b {
            out[i] = u[a] * v[i] + v[a] * u[i];
        }
    }
    out
}

/// Solves `λ ∘ x = d` cone by cone.
fn jordan_solve(lambda: &[f64], d: &[f64], starts: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for k in 0..starts.len() - 1 {
        let (a, b) = (starts[k], starts[k + 1]);
        let l0 = lambda[a];
        let l1 = &lambda[a + 1..b];
        let d0 = d[a];
        let d1 = &d[a + 1..b];
        let x0 = (l0 * d0 - dot(l1, d1)) / jnorm2(&lambda[a..b]);
        out[a] = x0;
        for i in a + 1..b {
            out[i] = (d[i] - x0 * lambda[i]) / l0;
        }
    }
    out
}

/// Largest `α` with `x + α d` in the closed cone, for `x` interior.
/// Infinite when the ray never leaves the cone.
pub(crate) fn max_cone_step(x: &[f64], d: &[f64]) -> f64 {
    if x.len() == 1 {
        return if d[0] < 0.0 { -x[0] / d[0] } else { f64::INFINITY };
    }
    // f(α) = (x₀ + αd₀)² − ‖x₁ + αd₁‖² = qa α² + qb α + qc, qc > 0.
    let qa = jnorm2(d);
    let qb = 2.0 * (x[0] * d[0] - dot(&x[1..], &d[1..]));
    let qc = jnorm2(x);
    let mut best = f64::INFINITY;
    if qa == 0.0 {
        if qb < 0.0 {
            best = -qc / qb;
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let q = -0.5 * (qb + qb.signum() * disc.sqrt());
            for r in [q / qa, if q != 0.0 { qc / q } else { f64::INFINITY }] {
                if r > 0.0 && r < best {
                    best = r;
                }
            }
        }
    }
    // The ray may also leave through the negative half of the double cone's
    // axis; guard the linear condition x₀ + αd₀ ≥ 0.
    if d[0] < 0.0 {
        best = best.min(-x[0] / d[0]);
    }
    best
}

fn max_step(x: &[f64], d: &[f64], starts: &[usize]) -> f64 {
    (0..starts.len() - 1)
        .map(|k| max_cone_step(&x[starts[k]..starts[k + 1]], &d[starts[k]..starts[k + 1]]))
        .fold(f64::INFINITY, f64::min)
}

/// Distance by which `x` must be shifted along `e` to enter the cone
/// (`max_k ‖x_k1‖ − x_k0`).
fn cone_depth(x: &[f64], starts: &[usize]) -> f64 {
    (0..starts.len() - 1)
        .map(|k| {
            let (a, b) = (starts[k], starts[k + 1]);
            norm(&x[a + 1..b]) - x[a]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn strictly_interior(x: &[f64], starts: &[usize]) -> bool {
    (0..starts.len() - 1).all(|k| {
        let c = &x[starts[k]..starts[k + 1]];
        c[0] > 0.0 && jnorm2(c) > 0.0
    })
}

/// Precomputed structure of `G` for normal-matrix assembly.
struct GStructure {
    starts: Vec<usize>,
    /// Tail Gram matrices of big cones.
    big_gram: Vec<Option<DMatrix<f64>>>,
}

impl GStructure {
    fn new(p: &ConicProblem) -> Self {
        let starts = p.cone_starts();
        let n = p.num_vars();
        let big_gram = p
            .cones
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                (d >= BIG_CONE).then(|| {
                    let mut gram = DMatrix::zeros(n, n);
                    for r in starts[k] + 1..starts[k + 1] {
                        let (cols, vals) = p.g.row(r);
                        for (&i, &vi) in cols.iter().zip(vals) {
                            for (&j, &vj) in cols.iter().zip(vals) {
                                gram[(i, j)] += vi * vj;
                            }
                        }
                    }
                    gram
                })
            })
            .collect();
        GStructure { starts, big_gram }
    }
}

/// Factored reduced Newton system for one scaling.
struct NormalSystem {
    h: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `L⁻¹ Aᵀ` and the Cholesky factor of `A H̃⁻¹ Aᵀ`, if there are equalities.
    schur: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

fn build_normal(p: &ConicProblem, gs: &GStructure, sc: &Scaling) -> Result<NormalSystem> {
    let n = p.num_vars();
    let ncones = p.cones.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    // Per Lorentz cone, with g₀ the first row of Gᵢ, G₁ the rest, ŵ = w₁/‖w₁‖
    // and p = G₁ᵀŵ:
    //   η² Gᵢᵀ W⁻² Gᵢ = G₁ᵀG₁ − p pᵀ + a aᵀ + d dᵀ,
    //   a = w₀ g₀ − ‖w₁‖ p,   d = w₀ p − ‖w₁‖ g₀.
    // Every term but the projected Gram is a PSD outer product, so the sum
    // stays semidefinite however skewed the scaling gets.
    let mut pos_cols = DMatrix::<f64>::zeros(n, 2 * ncones);
    let mut neg_cols = DMatrix::<f64>::zeros(n, ncones);
    // Dense rows with their scale factor.
    let mut dense_pos: Vec<(usize, f64)> = Vec::new();

    let sparse_outer = |h: &mut DMatrix<f64>, r: usize, scale: f64| {
        let (cols, vals) = p.g.row(r);
        for (&i, &vi) in cols.iter().zip(vals) {
            for (&j, &vj) in cols.iter().zip(vals) {
                h[(i, j)] += scale * vi * vj;
            }
        }
    };

    let mut g0 = vec![0.0; n];
    let mut pv = vec![0.0; n];
    for (k, cs) in sc.cones.iter().enumerate() {
        let (a, b) = (gs.starts[k], gs.starts[k + 1]);
        let inv_eta2 = 1.0 / (cs.eta * cs.eta);
        if b - a == 1 {
            // Orthant: W⁻² = 1/η².
            if p.g.row(a).0.len() <= SPARSE_ROW {
                sparse_outer(&mut h, a, inv_eta2);
            } else {
                dense_pos.push((a, inv_eta2.sqrt()));
            }
            continue;
        }
        let w0 = cs.w[0];
        let nw1 = norm(&cs.w[1..]);
        g0.iter_mut().for_each(|v| *v = 0.0);
        pv.iter_mut().for_each(|v| *v = 0.0);
        let (cols, vals) = p.g.row(a);
        for (&j, &g) in cols.iter().zip(vals) {
            g0[j] += g;
        }
        if nw1 > 0.0 {
            for r in a + 1..b {
                let v = cs.w[r - a] / nw1;
                if v == 0.0 {
                    continue;
                }
                let (cols, vals) = p.g.row(r);
                for (&j, &g) in cols.iter().zip(vals) {
                    pv[j] += v * g;
                }
            }
        }
        let f = 1.0 / cs.eta;
        for j in 0..n {
            pos_cols[(j, 2 * k)] = f * (w0 * g0[j] - nw1 * pv[j]);
            pos_cols[(j, 2 * k + 1)] = f * (w0 * pv[j] - nw1 * g0[j]);
            neg_cols[(j, k)] = f * pv[j];
        }
        if let Some(gram) = &gs.big_gram[k] {
            h.zip_apply(gram, |a, b| *a += inv_eta2 * b);
        } else {
            for r in a + 1..b {
                if p.g.row(r).0.len() <= SPARSE_ROW {
                    sparse_outer(&mut h, r, inv_eta2);
                } else {
                    dense_pos.push((r, inv_eta2.sqrt()));
                }
            }
        }
    }

    if !dense_pos.is_empty() {
        let rows = &dense_pos;
        // Compress to the union of column supports.
        let mut support: Vec<usize> = rows.iter().flat_map(|&(r, _)| p.g.row(r).0.iter().copied()).collect();
        support.sort_unstable();
        support.dedup();
        let mut pos = vec![usize::MAX; n];
        for (k, &j) in support.iter().enumerate() {
            pos[j] = k;
        }
        let mut m = DMatrix::<f64>::zeros(rows.len(), support.len());
        for (i, &(r, scale)) in rows.iter().enumerate() {
            let (cols, vals) = p.g.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, pos[j])] = scale * v;
            }
        }
        let gram = m.transpose() * &m;
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                h[(i, j)] += gram[(a, b)];
            }
        }
    }
    h.gemm(1.0, &pos_cols, &pos_cols.transpose(), 1.0);
    h.gemm(-1.0, &neg_cols, &neg_cols.transpose(), 1.0);

    let mut hp = h.clone();
    if p.b.is_empty() {
        // Nothing to add.
    } else {
        let ad = p.a.to_dense();
        hp += ad.tr_mul(&ad);
    }
    let hp = 0.5 * (&hp + hp.transpose());
    let chol = cholesky_regularized(hp)?;
    let schur = if p.b.is_empty() {
        None
    } else {
        let ad = p.a.to_dense();
        let x = chol.solve(&ad.transpose());
        let s = &ad * x;
        let s = 0.5 * (&s + s.transpose());
        Some(cholesky_regularized(s)?)
    };
    Ok(NormalSystem { h, chol, schur })
}

fn cholesky_regularized(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if let Some(c) = nalgebra::Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let mut delta = 1e-13 * scale;
    for _ in 0..8 {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += delta;
        }
        if let Some(c) = nalgebra::Cholesky::new(r) {
            return Ok(c);
        }
        delta *= 100.0;
    }
    Err(Error::SocpNumerical("normal matrix is not positive definite".into()))
}

impl NormalSystem {
    /// Solves `H dx + Aᵀ dy = q`, `A dx = by` with two refinement sweeps.
    fn solve(&self, p: &ConicProblem, q: &[f64], by: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut dx, mut dy) = self.solve_once(p, q, by);
        for _ in 0..2 {
            let hdx = &self.h * DVector::from_column_slice(&dx);
            let aty = p.a.tr_mul_vec(&dy);
            let r1: Vec<f64> = (0..q.len()).map(|i| q[i] - hdx[i] - aty[i]).collect();
            let adx = p.a.mul_vec(&dx);
            let r2: Vec<f64> = (0..by.len()).map(|i| by[i] - adx[i]).collect();
            let (cx, cy) = self.solve_once(p, &r1, &r2);
            dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
        }
        (dx, dy)
    }

    fn solve_once(&self, p: &ConicProblem, q: &[f64], by: &[f64]) -> (Vec<f64>, Vec<f64>) {
        // (H + AᵀA) dx + Aᵀ dy = q + Aᵀ by is equivalent given A dx = by.
        let mut rhs = DVector::from_column_slice(q);
        let atb = p.a.tr_mul_vec(by);
        for (r, v) in rhs.iter_mut().zip(&atb) {
            *r += v;
        }
        match &self.schur {
            None => (self.chol.solve(&rhs).as_slice().to_vec(), Vec::new()),
            Some(s) => {
                let hq = self.chol.solve(&rhs);
                let ahq = p.a.mul_vec(hq.as_slice());
                let t: Vec<f64> = ahq.iter().zip(by).map(|(a, b)| a - b).collect();
                let dy = s.solve(&DVector::from_vec(t));
                let aty = p.a.tr_mul_vec(dy.as_slice());
                let mut r2 = rhs.clone();
                for (r, v) in r2.iter_mut().zip(&aty) {
                    *r -= v;
                }
                (self.chol.solve(&r2).as_slice().to_vec(), dy.as_slice().to_vec())
            }
        }
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
}

/// Solves the linearized KKT system
/// `Aᵀdy + Gᵀdz = bx`, `A dx = by`, `G dx + ds = bz`,
/// `λ ∘ (W⁻¹ds + W dz) = bs`.
#[allow(clippy::too_many_arguments)]
fn kkt_solve_once(
    p: &ConicProblem,
    ns: &NormalSystem,
    sc: &Scaling,
    lambda: &[f64],
    bx: &[f64],
    by: &[f64],
    bz: &[f64],
    bs: &[f64],
) -> Direction {
    let u = jordan_solve(lambda, bs, &sc.starts);
    let wu = sc.w(&u);
    let t: Vec<f64> = bz.iter().zip(&wu).map(|(a, b)| a - b).collect();
    let gt = p.g.tr_mul_vec(&sc.winv2(&t));
    let q: Vec<f64> = bx.iter().zip(&gt).map(|(a, b)| a + b).collect();
    let (dx, dy) = ns.solve(p, &q, by);
    let gdx = p.g.mul_vec(&dx);
    let r: Vec<f64> = (0..gdx.len()).map(|i| gdx[i] + wu[i] - bz[i]).collect();
    let dz = sc.winv2(&r);
    let wdz = sc.w(&dz);
    let v: Vec<f64> = u.iter().zip(&wdz).map(|(a, b)| a - b).collect();
    let ds = sc.w(&v);
    Direction { dx, dy, ds, dz }
}

/// [`kkt_solve_once`] followed by iterative refinement on the full system.
/// The normal matrix loses accuracy as the scaling degenerates; residuals
/// of the unreduced equations are evaluated with the exact operators.
#[allow(clippy::too_many_arguments)]
fn kkt_solve(
    p: &ConicProblem,
    ns: &NormalSystem,
    sc: &Scaling,
    lambda: &[f64],
    bx: &[f64],
    by: &[f64],
    bz: &[f64],
    bs: &[f64],
) -> Direction {
    let mut d = kkt_solve_once(p, ns, sc, lambda, bx, by, bz, bs);
    for _ in 0..KKT_REFINE {
        let aty = p.a.tr_mul_vec(&d.dy);
        let gtz = p.g.tr_mul_vec(&d.dz);
        let ex: Vec<f64> = (0..bx.len()).map(|i| bx[i] - aty[i] - gtz[i]).collect();
        let adx = p.a.mul_vec(&d.dx);
        let ey: Vec<f64> = (0..by.len()).map(|i| by[i] - adx[i]).collect();
        let gdx = p.g.mul_vec(&d.dx);
        let ez: Vec<f64> = (0..bz.len()).map(|i| bz[i] - gdx[i] - d.ds[i]).collect();
        let mut t = sc.winv(&d.ds);
        let wdz = sc.w(&d.dz);
        t.iter_mut().zip(&wdz).for_each(|(a, b)| *a += b);
        let lt = jordan(lambda, &t, &sc.starts);
        let es: Vec<f64> = (0..bs.len()).map(|i| bs[i] - lt[i]).collect();
        let c = kkt_solve_once(p, ns, sc, lambda, &ex, &ey, &ez, &es);
        for (a, b) in [(&mut d.dx, &c.dx), (&mut d.dy, &c.dy), (&mut d.ds, &c.ds), (&mut d.dz, &c.dz)] {
            a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
        }
    }
    d
}

struct Residuals {
    rx: Vec<f64>,
    ry: Vec<f64>,
    rz: Vec<f64>,
    pres: f64,
    dres: f64,
    pcost: f64,
    dcost: f64,
    gap: f64,
    relgap: f64,
}

fn residuals(p: &ConicProblem, x: &[f64], y: &[f64], s: &[f64], z: &[f64]) -> Residuals {
    let gtz = p.g.tr_mul_vec(z);
    let aty = p.a.tr_mul_vec(y);
    let rx: Vec<f64> = (0..x.len()).map(|j| gtz[j] + aty[j] + p.c[j]).collect();
    let ax = p.a.mul_vec(x);
    let ry: Vec<f64> = ax.iter().zip(&p.b).map(|(a, b)| a - b).collect();
    let gx = p.g.mul_vec(x);
    let rz: Vec<f64> = (0..gx.len()).map(|i| s[i] + gx[i] - p.h[i]).collect();
    let gap = dot(s, z);
    let pcost = dot(&p.c, x);
    // Lagrangian lower bound; equals −hᵀz − bᵀy at dual feasibility.
    let dcost = dot(x, &rx) - dot(&p.b, y) - dot(&p.h, z);
    let relgap = if pcost < 0.0 {
        gap / -pcost
    } else if dcost > 0.0 {
        gap / dcost
    } else {
        f64::INFINITY
    };
    let pres = (norm(&ry) / norm(&p.b).max(1.0)).max(norm(&rz) / norm(&p.h).max(1.0));
    let dres = norm(&rx) / norm(&p.c).max(1.0);
    Residuals {
        rx,
        ry,
        rz,
        pres,
        dres,
        pcost,
        dcost,
        gap,
        relgap,
    }
}

/// Solves `p` to the tolerances in `opts`.
pub fn solve(p: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution> {
    let n = p.num_vars();
    let m = p.num_cone_rows();
    let gs = GStructure::new(p);
    let starts = gs.starts.clone();
    let ncones = p.cones.len() as f64;

    // Starting point from two least-squares problems with W = I.
    let ident = Scaling {
        cones: p.cones.iter().map(|&d| ConeScaling::identity(d)).collect(),
        starts: starts.clone(),
    };
    let ns0 = build_normal(p, &gs, &ident)?;
    let (x, y0) = ns0.solve(p, &p.g.tr_mul_vec(&p.h), &p.b);
    let gx = p.g.mul_vec(&x);
    let mut s: Vec<f64> = (0..m).map(|i| p.h[i] - gx[i]).collect();
    let negc: Vec<f64> = p.c.iter().map(|v| -v).collect();
    let (xd, y) = ns0.solve(p, &negc, &vec![0.0; p.b.len()]);
    let _ = y0;
    let mut z = p.g.mul_vec(&xd);
    for v in [&mut s, &mut z] {
        let depth = cone_depth(v, &starts);
        if depth >= -1e-8 * norm(v).max(1.0) {
            for k in 0..p.cones.len() {
                v[starts[k]] += 1.0 + depth;
            }
        }
    }
    let mut x = x;
    let mut y = y;

    let mut best: Option<ConicSolution> = None;
    let mut best_score = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        let res = residuals(p, &x, &y, &s, &z);
        if !(res.pres.is_finite() && res.dres.is_finite() && res.gap.is_finite()) {
            return Err(Error::SocpNumerical(format!("non-finite iterate at iteration {iter}")));
        }
        let current = ConicSolution {
            x: x.clone(),
            y: y.clone(),
            s: s.clone(),
            z: z.clone(),
            primal_objective: res.pcost,
            dual_objective: res.dcost,
            gap: res.gap,
            relative_gap: res.relgap,
            primal_infeasibility: res.pres,
            dual_infeasibility: res.dres,
            iterations: iter,
        };
        if res.pres <= opts.tol && res.dres <= opts.tol && (res.gap <= opts.abs_tol || res.relgap <= opts.tol) {
            return Ok(current);
        }
        let score = res.pres.max(res.dres).max(res.relgap.min(res.gap));
        if score < best_score {
            best_score = score;
            best = Some(current);
        }
        if iter == opts.max_iter {
            break;
        }

        let cones: Option<Vec<ConeScaling>> = (0..p.cones.len())
            .map(|k| ConeScaling::new(&s[starts[k]..starts[k + 1]], &z[starts[k]..starts[k + 1]]))
            .collect();
        let Some(cones) = cones else {
            return Err(Error::SocpNumerical(format!("iterate left the cone interior at iteration {iter}")));
        };
        let sc = Scaling {
            cones,
            starts: starts.clone(),
        };
        let lambda = sc.w(&z);
        let ns = build_normal(p, &gs, &sc)?;
        let mu = res.gap / ncones;

        let bx: Vec<f64> = res.rx.iter().map(|v| -v).collect();
        let by: Vec<f64> = res.ry.iter().map(|v| -v).collect();
        let bz: Vec<f64> = res.rz.iter().map(|v| -v).collect();
        let ll = jordan(&lambda, &lambda, &starts);
        let bs_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let aff = kkt_solve(p, &ns, &sc, &lambda, &bx, &by, &bz, &bs_aff);

        let ds_s = sc.winv(&aff.ds);
        let dz_s = sc.w(&aff.dz);
        let a_aff = max_step(&lambda, &ds_s, &starts)
            .min(max_step(&lambda, &dz_s, &starts))
            .min(1.0);
        let sigma = (1.0 - a_aff).powi(3);

        let corr = jordan(&ds_s, &dz_s, &starts);
        let mut bs: Vec<f64> = (0..m).map(|i| -ll[i] - corr[i]).collect();
        for k in 0..p.cones.len() {
            bs[starts[k]] += sigma * mu;
        }
        let dir = kkt_solve(p, &ns, &sc, &lambda, &bx, &by, &bz, &bs);
        let ds_s = sc.winv(&dir.ds);
        let dz_s = sc.w(&dir.dz);
        let a_max = max_step(&lambda, &ds_s, &starts).min(max_step(&lambda, &dz_s, &starts));
        let mut alpha = (STEP_FRACTION * a_max).min(1.0);
        // The step bound is computed in the scaled space; guard against
        // roundoff pushing the unscaled iterate onto the cone boundary.
        let mut tries = 0;
        let (s_new, z_new) = loop {
            let sn: Vec<f64> = (0..m).map(|i| s[i] + alpha * dir.ds[i]).collect();
            let zn: Vec<f64> = (0..m).map(|i| z[i] + alpha * dir.dz[i]).collect();
            if strictly_interior(&sn, &starts) && strictly_interior(&zn, &starts) {
                break (sn, zn);
            }
            tries += 1;
            if tries > 40 {
                return Err(Error::SocpNumerical(format!(
                    "no interior step found at iteration {iter}"
                )));
            }
            alpha *= 0.5;
        };
        s = s_new;
        z = z_new;
        for j in 0..n {
            x[j] += alpha * dir.dx[j];
        }
        for (v, d) in y.iter_mut().zip(&dir.dy) {
            *v += alpha * d;
        }
    }
    let best = best.expect("at least one iterate");
    Err(Error::SocpMaxIterations {
        iterations: opts.max_iter,
        gap: best.relative_gap.min(best.gap),
        best: Box::new(best),
    })
}
