//! Seeded test fields that satisfy the boundary conditions by construction.
//!
//! A band-limited scalar `R(x) = Σ_k c_k Π_a cos(π k_a t_a)` (with `t` the
//! bounding-box coordinate in `[0, 1]`) is multiplied by a collar cutoff `χ`
//! that vanishes within `w` of `∂Ω`. Fields are then discrete derivatives of
//! the potential `χR` with central differences: the rotated gradient in 2D or
//! the curl of a vector potential in 3D for zero normal trace, the gradient
//! for zero tangential trace. Central differences commute, so the discrete
//! divergence (resp. curl) of these fields vanishes to roundoff.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{membership_mask, Grid, GridField, NodeClass};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::smooth::step_up;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// `ν·v = 0`.
    NormalZero,
    /// `ν×v = 0`.
    TangentialZero,
    None,
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal_zero" => Ok(Self::NormalZero),
            "tangential_zero" => Ok(Self::TangentialZero),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidParam(format!("unknown boundary condition `{other}`"))),
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NormalZero => "normal_zero",
            Self::TangentialZero => "tangential_zero",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    /// Cosine modes per axis.
    pub modes: usize,
    pub collar_width: f64,
    pub seed: u64,
}

/// Collar cutoff `χ = step_up((d̃ − w)/w)` at the nodes, with `d̃` a smooth
/// boundary distance; zero outside Ω.
pub fn collar_cutoff(dom: &Domain, grid: &Grid, mask: &[NodeClass], width: f64) -> Result<Vec<f64>> {
    if width < 2.0 * grid.h() {
        return Err(Error::InvalidParam(format!("collar width {width} below 2h = {}", 2.0 * grid.h())));
    }
    let inradius = dom.inradius_estimate();
    if 2.0 * width >= inradius {
        return Err(Error::CollarTooWide { collar: width, inradius });
    }
    let tau = 0.25 * width;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| {
            if mask[i] != NodeClass::Interior {
                return 0.0;
            }
            let d = dom.soft_boundary_distance(&grid.point(i), tau);
            step_up((d - width) / width)
        })
        .collect())
}

/// Tensor cosine basis on the bounding box, evaluated on a grid.
#[derive(Debug, Clone)]
pub struct CosineBasis {
    pub n: usize,
    pub modes: usize,
    /// `tables[a][i·modes + k] = cos(π k t_a(i))`.
    tables: [Vec<f64>; 3],
    grid: Grid,
}

impl CosineBasis {
    pub fn new(dom: &Domain, grid: &Grid, modes: usize) -> Self {
        let mut tables: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            let m = grid.dims[a];
            let mut t = vec![0.0; m * modes];
            for i in 0..m {
                let s = if a < grid.n {
                    (grid.coord(a, i) - dom.bbox.lo[a]) / (dom.bbox.hi[a] - dom.bbox.lo[a])
                } else {
                    0.0
                };
                for k in 0..modes {
                    t[i * modes + k] = (std::f64::consts::PI * k as f64 * s).cos();
                }
            }
            tables[a] = t;
        }
        CosineBasis { n: grid.n, modes, tables, grid: *grid }
    }

    pub fn len(&self) -> usize {
        self.modes.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.modes == 0
    }

    /// Multi-index of coefficient `k` (`k₀` fastest).
    pub fn multi_index(&self, k: usize) -> [usize; 3] {
        let m = self.modes;
        let mut r = [0; 3];
        let mut q = k;
        for a in 0..self.n {
            r[a] = q % m;
            q /= m;
        }
        r
    }

    /// `Σ_k c_k Π cos(π k_a t_a)` at every node, by separable summation.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let m = self.modes;
        let g = &self.grid;
        let [nx, ny, nz] = g.dims;
        let mut out = vec![0.0; g.len()];
        let (tx, ty, tz) = (&self.tables[0], &self.tables[1], &self.tables[2]);
        let m2 = if self.n == 3 { m } else { 1 };
        out.par_chunks_mut(nx).enumerate().for_each(|(row, o)| {
            let j = row % ny;
            let k = row / ny;
            debug_assert!(k < nz);
            // Collapse the y and z sums: g[k0] = Σ_{k1,k2} c cos_y cos_z.
            let mut gk = vec![0.0; m];
            for k2 in 0..m2 {
                let cz = if self.n == 3 { tz[k * m + k2] } else { 1.0 };
                for k1 in 0..m {
                    let w = cz * ty[j * m + k1];
                    let base = (k2 * m + k1) * m;
                    for k0 in 0..m {
                        gk[k0] += w * coeffs[base + k0];
                    }
                }
            }
            for (i, v) in o.iter_mut().enumerate() {
                let row = &tx[i * m..(i + 1) * m];
                *v = row.iter().zip(&gk).map(|(a, b)| a * b).sum();
            }
        });
        out
    }
}

/// Draws `count` coefficients `N(0,1)/(1+|k|²)` per potential component.
pub fn random_coefficients(basis: &CosineBasis, components: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(components * basis.len());
    for _ in 0..components {
        for k in 0..basis.len() {
            let mi = basis.multi_index(k);
            let k2: usize = mi.iter().map(|x| x * x).sum();
            let z: f64 = StandardNormal.sample(&mut rng);
            out.push(z / (1.0 + k2 as f64));
        }
    }
    out
}

/// Central difference of a node array along `axis`, zero-padded at the grid edge.
#[inline]
fn central(grid: &Grid, u: &[f64], idx: usize, i: [usize; 3], axis: usize) -> f64 {
    let s = grid.stride(axis);
    let up = if i[axis] + 1 < grid.dims[axis] { u[idx + s] } else { 0.0 };
    let dn = if i[axis] > 0 { u[idx - s] } else { 0.0 };
    (up - dn) / (2.0 * grid.h())
}

/// Linear map from potential coefficients to grid fields, with the collar
/// cutoff and cosine tables cached.
#[derive(Debug, Clone)]
pub struct FieldGenerator {
    pub bc: BoundaryCondition,
    pub grid: Grid,
    pub mask: Arc<Vec<NodeClass>>,
    pub basis: CosineBasis,
    pub chi: Option<Vec<f64>>,
}

impl FieldGenerator {
    pub fn new(dom: &Domain, grid: Grid, bc: BoundaryCondition, modes: usize, collar_width: f64) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParam("modes must be positive".into()));
        }
        let mask = membership_mask(&grid, dom);
        let chi = match bc {
            BoundaryCondition::None => None,
            _ => Some(collar_cutoff(dom, &grid, &mask, collar_width)?),
        };
        let basis = CosineBasis::new(dom, &grid, modes);
        Ok(FieldGenerator { bc, grid, mask, basis, chi })
    }

    /// Number of scalar potentials.
    pub fn potentials(&self) -> usize {
        match (self.bc, self.grid.n) {
            (BoundaryCondition::NormalZero, 3) | (BoundaryCondition::None, _) => self.grid.n,
            _ => 1,
        }
    }

    /// Length of the coefficient vector.
    pub fn dim(&self) -> usize {
        self.potentials() * self.basis.len()
    }

    fn potential(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut u = self.basis.synthesize(coeffs);
        if let Some(chi) = &self.chi {
            u.iter_mut().zip(chi).for_each(|(a, c)| *a *= c);
        }
        u
    }

    /// The field with the given coefficients.
    pub fn field(&self, coeffs: &[f64]) -> Result<GridField> {
        if coeffs.len() != self.dim() {
            return Err(Error::InvalidParam(format!("expected {} coefficients, got {}", self.dim(), coeffs.len())));
        }
        let g = self.grid;
        let n = g.n;
        let b = self.basis.len();
        let pots: Vec<Vec<f64>> = (0..self.potentials()).map(|c| self.potential(&coeffs[c * b..(c + 1) * b])).collect();
        let mut out = GridField::zeros(g, n, self.mask.clone());
        let mask = self.mask.clone();
        let bc = self.bc;
        out.values.par_chunks_mut(n).enumerate().for_each(|(idx, o)| {
            if mask[idx] != NodeClass::Interior {
                return;
            }
            let i = g.unflat(idx);
            let d = |p: usize, a: usize| central(&g, &pots[p], idx, i, a);
            match (bc, n) {
                (BoundaryCondition::None, _) => {
                    for a in 0..n {
                        o[a] = pots[a][idx];
                    }
                }
                (BoundaryCondition::TangentialZero, _) => {
                    for a in 0..n {
                        o[a] = d(0, a);
                    }
                }
                (BoundaryCondition::NormalZero, 2) => {
                    o[0] = -d(0, 1);
                    o[1] = d(0, 0);
                }
                (BoundaryCondition::NormalZero, _) => {
                    o[0] = d(2, 1) - d(1, 2);
                    o[1] = d(0, 2) - d(2, 0);
                    o[2] = d(1, 0) - d(0, 1);
                }
            }
        });
        Ok(out)
    }

    /// Field of the `k`-th unit coefficient vector.
    pub fn column(&self, k: usize) -> Result<GridField> {
        let mut c = vec![0.0; self.dim()];
        c[k] = 1.0;
        self.field(&c)
    }

    pub fn random(&self, seed: u64) -> Result<GridField> {
        let c = random_coefficients(&self.basis, self.potentials(), seed);
        self.field(&c)
    }
}

/// Seeded test field on `grid` with the requested boundary behaviour.
pub fn generate_test_field(dom: &Domain, grid: Grid, bc: BoundaryCondition, spec: &FieldSpec) -> Result<GridField> {
    FieldGenerator::new(dom, grid, bc, spec.modes, spec.collar_width)?.random(spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::gallery_level;

    #[test]
    fn separable_synthesis_matches_direct_sum() {
        let dom = gallery_level("l_shape", None).unwrap();
        let grid = Grid::covering(&dom, 4);
        let basis = CosineBasis::new(&dom, &grid, 3);
        let c = random_coefficients(&basis, 1, 9);
        let u = basis.synthesize(&c);
        for idx in (0..grid.len()).step_by(7) {
            let x = grid.point(idx);
            let mut s = 0.0;
            for (k, ck) in c.iter().enumerate() {
                let mi = basis.multi_index(k);
                let mut p = 1.0;
                for a in 0..2 {
                    let t = (x[a] - dom.bbox.lo[a]) / (dom.bbox.hi[a] - dom.bbox.lo[a]);
                    p *= (std::f64::consts::PI * mi[a] as f64 * t).cos();
                }
                s += ck * p;
            }
            assert!((s - u[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn collar_errors() {
        let dom = gallery_level("unit_square", None).unwrap();
        let grid = Grid::covering(&dom, 5);
        let r = FieldGenerator::new(&dom, grid, BoundaryCondition::NormalZero, 4, 0.3);
        assert!(matches!(r, Err(Error::CollarTooWide { .. })));
        let r = FieldGenerator::new(&dom, grid, BoundaryCondition::NormalZero, 4, 0.01);
        assert!(matches!(r, Err(Error::InvalidParam(_))));
    }
}
