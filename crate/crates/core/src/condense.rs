//! Static condensation of the linearized equilibrium equations onto the
//! boundary degrees of freedom.
//!
//! Linearizing the internal forces at Φ₀ gives `G(Φ) ≈ B + KΦ` with
//! `B = r(Φ₀) − KΦ₀`. Requiring the interior rows to vanish and eliminating
//! the interior unknowns leaves the affine boundary map
//! `G̃_B(Φ_B) = offset + S Φ_B` with the Schur complement
//! `S = K_BB − K_BI K_II⁻¹ K_IB`.

use std::io::{Read as _, Write as _};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fem::{AssembledSystem, FemSpace, NodalField};
use crate::linalg::{CsrMatrix, LdlFactor};
use crate::mesh::Vec3;

/// File magic of the binary dump.
pub const DUMP_MAGIC: [u8; 8] = *b"FMSCHUR1";

#[derive(Debug, Clone)]
pub struct CondensedSystem {
    schur: DMatrix<f64>,
    offset: Vec<f64>,
    /// `r_B − K_BI K_II⁻¹ r_I`: condensed force at the base boundary state.
    base_force: Vec<f64>,
    base_deformation: NodalField,
    base_boundary: Vec<f64>,
    interior_factor: Option<LdlFactor>,
    k_ib: CsrMatrix,
    r_i: Vec<f64>,
    interior_dofs: Vec<usize>,
    boundary_nodes: Vec<usize>,
}

/// Condenses `sys`, assembled at `phi0`, onto the boundary of `space`'s mesh.
pub fn condense(space: &FemSpace, sys: &AssembledSystem, phi0: &NodalField) -> Result<CondensedSystem> {
    let n = space.num_dofs();
    if sys.tangent.nrows() != n || sys.residual.len() != n || phi0.len() != n {
        return Err(Error::Dimension {
            context: "condense",
            expected: n,
            got: sys.tangent.nrows().min(sys.residual.len()).min(phi0.len()),
        });
    }
    let interior = space.interior_dofs();
    let boundary = space.boundary_dofs();
    let nb = boundary.len();
    let ni = interior.len();
    let mut b_map = vec![usize::MAX; n];
    for (k, &d) in boundary.iter().enumerate() {
        b_map[d] = k;
    }
    let mut i_map = vec![usize::MAX; n];
    for (k, &d) in interior.iter().enumerate() {
        i_map[d] = k;
    }

    let k = &sys.tangent;
    let k_bb = k.select(boundary, &b_map, nb);
    let k_bi = k.select(boundary, &i_map, ni);
    let k_ib = k.select(interior, &b_map, nb);
    let r_b: Vec<f64> = boundary.iter().map(|&d| sys.residual[d]).collect();
    let r_i: Vec<f64> = interior.iter().map(|&d| sys.residual[d]).collect();
    let kphi = k.mul_vec(phi0.as_slice());
    let bb: Vec<f64> = boundary.iter().map(|&d| sys.residual[d] - kphi[d]).collect();
    let bi: Vec<f64> = interior.iter().map(|&d| sys.residual[d] - kphi[d]).collect();

    let mut schur = k_bb.to_dense();
    let mut offset = bb;
    let mut base_force = r_b;
    let interior_factor = if ni > 0 {
        let factor = LdlFactor::new_with_fallback_shift(&space.interior_block(k), "K_II")?;
        // X = K_II⁻¹ K_IB, one column at a time.
        let k_ib_t = k_ib.transpose();
        let mut x = DMatrix::zeros(ni, nb);
        let mut col = vec![0.0; ni];
        for j in 0..nb {
            col.iter_mut().for_each(|c| *c = 0.0);
            let (rows, vals) = k_ib_t.row(j);
            for (&r, &v) in rows.iter().zip(vals) {
                col[r] = v;
            }
            factor.solve_in_place(&mut col);
            x.column_mut(j).copy_from_slice(&col);
        }
        for j in 0..nb {
            let xj = x.column(j);
            for i in 0..nb {
                let (cols, vals) = k_bi.row(i);
                let s: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * xj[c]).sum();
                schur[(i, j)] -= s;
            }
        }
        let y_b = factor.solve(&bi);
        let corr = k_bi.mul_vec(&y_b);
        for (o, c) in offset.iter_mut().zip(&corr) {
            *o -= c;
        }
        let y_r = factor.solve(&r_i);
        let corr = k_bi.mul_vec(&y_r);
        for (o, c) in base_force.iter_mut().zip(&corr) {
            *o -= c;
        }
        Some(factor)
    } else {
        None
    };
    // Symmetric in exact arithmetic.
    let schur = 0.5 * (&schur + schur.transpose());

    Ok(CondensedSystem {
        schur,
        offset,
        base_force,
        base_deformation: phi0.clone(),
        base_boundary: phi0.boundary_values(space.mesh()),
        interior_factor,
        k_ib,
        r_i,
        interior_dofs: interior.to_vec(),
        boundary_nodes: space.mesh().boundary_nodes().to_vec(),
    })
}

impl CondensedSystem {
    /// Number of boundary nodes K.
    pub fn num_boundary(&self) -> usize {
        self.offset.len() / 3
    }

    /// Dense symmetric Schur complement (3K × 3K).
    pub fn schur(&self) -> &DMatrix<f64> {
        &self.schur
    }

    /// `B_B − K_BI K_II⁻¹ B_I`.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Condensed force when the boundary stays at its base state.
    pub fn base_force(&self) -> &[f64] {
        &self.base_force
    }

    pub fn base_deformation(&self) -> &NodalField {
        &self.base_deformation
    }

    /// Base deformation restricted to the boundary (boundary order).
    pub fn base_boundary(&self) -> &[f64] {
        &self.base_boundary
    }

    fn check(&self, phi_b: &[f64], context: &'static str) -> Result<()> {
        if phi_b.len() != self.offset.len() {
            return Err(Error::Dimension {
                context,
                expected: self.offset.len(),
                got: phi_b.len(),
            });
        }
        Ok(())
    }

    /// Flattened `G̃_B(φ_B)`, evaluated as `base_force + S (φ_B − Φ₀_B)`,
    /// which equals `offset + S φ_B` without the cancellation.
    pub fn boundary_force_flat(&self, phi_b: &[f64]) -> Result<Vec<f64>> {
        self.check(phi_b, "CondensedSystem::boundary_force")?;
        let d: Vec<f64> = phi_b.iter().zip(&self.base_boundary).map(|(a, b)| a - b).collect();
        let sd = &self.schur * nalgebra::DVector::from_column_slice(&d);
        Ok(self.base_force.iter().zip(sd.iter()).map(|(a, b)| a + b).collect())
    }

    /// Per-node condensed boundary forces.
    pub fn boundary_force(&self, phi_b: &[f64]) -> Result<Vec<Vec3>> {
        let flat = self.boundary_force_flat(phi_b)?;
        Ok(flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
    }

    /// Completes the interior nodes so that the interior rows of the
    /// linearized system vanish.
    pub fn complete_interior(&self, phi_b: &[f64]) -> Result<NodalField> {
        self.check(phi_b, "CondensedSystem::complete_interior")?;
        let mut out = self.base_deformation.clone();
        for (k, &node) in self.boundary_nodes.iter().enumerate() {
            out.as_mut_slice()[3 * node..3 * node + 3].copy_from_slice(&phi_b[3 * k..3 * k + 3]);
        }
        if let Some(factor) = &self.interior_factor {
            let d: Vec<f64> = phi_b.iter().zip(&self.base_boundary).map(|(a, b)| a - b).collect();
            let kd = self.k_ib.mul_vec(&d);
            let rhs: Vec<f64> = self.r_i.iter().zip(&kd).map(|(r, k)| -(r + k)).collect();
            let dx = factor.solve(&rhs);
            for (k, &dof) in self.interior_dofs.iter().enumerate() {
                out.as_mut_slice()[dof] += dx[k];
            }
        }
        Ok(out)
    }

    /// Binary dump: 8-byte magic, u64 K, then S row-major and the offset,
    /// all little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let n = self.offset.len();
        let mut buf = Vec::with_capacity(16 + 8 * (n * n + n));
        buf.extend_from_slice(&DUMP_MAGIC);
        buf.extend_from_slice(&(self.num_boundary() as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..n {
                buf.extend_from_slice(&self.schur[(i, j)].to_le_bytes());
            }
        }
        for v in &self.offset {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Reads a dump written by [`CondensedSystem::write_binary`], returning
/// `(S, offset)`.
pub fn read_binary(path: &Path) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 16 || buf[..8] != DUMP_MAGIC {
        return Err(Error::parse(path, 0, "not a condensed-system dump"));
    }
    let k = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
    let n = 3 * k;
    if buf.len() != 16 + 8 * (n * n + n) {
        return Err(Error::parse(path, 0, format!("size mismatch for K = {k}")));
    }
    let mut vals = buf[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let schur = DMatrix::from_row_iterator(n, n, vals.by_ref().take(n * n));
    let offset = vals.collect();
    Ok((schur, offset))
}
