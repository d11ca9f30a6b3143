//! Exact `p = 2` Gaffney constant on the collar space: the largest value of
//! `(‖v‖² + ‖∇v‖²) / (‖div v‖² + ‖curl v‖²)` over all fields built by central
//! differences from a potential supported where the collar cutoff is positive.
//!
//! The potential is free at every such node, so this space contains every
//! sampled collar field of the same grid and collar width.

use serde::{Deserialize, Serialize};

use super::linalg::{dense_top_eigen, top_eigen, Banded};
use crate::error::{Error, Result};
use crate::field::generate::{collar_cutoff, BoundaryCondition};
use crate::field::{membership_mask, Grid, GridField, NodeClass};
use crate::geometry::Domain;

type Row = Vec<(usize, f64)>;

fn tidy(mut r: Row) -> Row {
    r.sort_unstable_by_key(|e| e.0);
    let mut out: Row = Vec::with_capacity(r.len());
    for (k, v) in r {
        match out.last_mut() {
            Some((j, w)) if *j == k => *w += v,
            _ => out.push((k, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

fn combine(a: &Row, sa: f64, b: &Row, sb: f64) -> Row {
    tidy(a.iter().map(|&(k, v)| (k, sa * v)).chain(b.iter().map(|&(k, v)| (k, sb * v))).collect())
}

/// Both quadratic forms over the free potential values.
pub struct CollarForms {
    pub grid: Grid,
    pub mask: std::sync::Arc<Vec<NodeClass>>,
    pub bc: BoundaryCondition,
    /// Grid node of each unknown.
    pub free: Vec<usize>,
    /// `‖v‖² + ‖∇v‖²`.
    pub a: Banded,
    /// `‖div v‖² + ‖curl v‖²`.
    pub b: Banded,
    v_rows: Vec<(usize, Vec<Row>)>,
}

impl CollarForms {
    pub fn assemble(dom: &Domain, grid: Grid, bc: BoundaryCondition, collar_width: f64) -> Result<Self> {
        let n = grid.n;
        match (bc, n) {
            (BoundaryCondition::None, _) => {
                return Err(Error::InvalidParam("the oracle needs a boundary condition".into()))
            }
            (BoundaryCondition::NormalZero, 3) => {
                return Err(Error::SingularConstraint(
                    "curl of a vector potential has a gradient null space in 3D".into(),
                ))
            }
            _ => {}
        }
        let mask = membership_mask(&grid, dom);
        let chi = collar_cutoff(dom, &grid, &mask, collar_width)?;
        let mut unknown = vec![usize::MAX; grid.len()];
        let mut free = Vec::new();
        for i in 0..grid.len() {
            if chi[i] > 0.0 {
                unknown[i] = free.len();
                free.push(i);
            }
        }
        if free.is_empty() {
            return Err(Error::SingularConstraint("collar leaves no free nodes".into()));
        }
        let h = grid.h();
        let step = |i: usize, a: usize, s: i64| -> Option<usize> {
            let mut p = grid.unflat(i);
            let k = p[a] as i64 + s;
            if k < 0 || k >= grid.dims[a] as i64 {
                return None;
            }
            p[a] = k as usize;
            Some(grid.flat(p))
        };
        let pot = |i: Option<usize>| -> Row {
            match i {
                Some(i) if unknown[i] != usize::MAX => vec![(unknown[i], 1.0)],
                _ => Vec::new(),
            }
        };
        let d_pot = |i: usize, a: usize| -> Row {
            combine(&pot(step(i, a, 1)), 0.5 / h, &pot(step(i, a, -1)), -0.5 / h)
        };
        let v_at = |i: usize| -> Vec<Row> {
            match bc {
                BoundaryCondition::NormalZero => {
                    vec![d_pot(i, 1).into_iter().map(|(k, v)| (k, -v)).collect(), d_pot(i, 0)]
                }
                _ => (0..n).map(|a| d_pot(i, a)).collect(),
            }
        };
        // Nodes where v, then ∇v, can be nonzero.
        let mut near = vec![0u8; grid.len()];
        for &f in &free {
            near[f] = 1;
        }
        for pass in 2..=3u8 {
            let cur: Vec<usize> = (0..grid.len()).filter(|&i| near[i] == pass - 1).collect();
            for i in cur {
                for a in 0..n {
                    for s in [-1, 1] {
                        if let Some(j) = step(i, a, s) {
                            if near[j] == 0 {
                                near[j] = pass;
                            }
                        }
                    }
                }
            }
        }
        let support: Vec<usize> = (0..grid.len()).filter(|&i| near[i] > 0).collect();
        if support.iter().any(|&i| mask[i] != NodeClass::Interior) {
            return Err(Error::InvalidParam(format!(
                "collar width {collar_width} is too narrow for h = {h}: derivatives reach the boundary"
            )));
        }
        let mut v_rows: Vec<(usize, Vec<Row>)> = Vec::new();
        let mut v_index = vec![usize::MAX; grid.len()];
        for &i in &support {
            v_index[i] = v_rows.len();
            v_rows.push((i, v_at(i)));
        }
        let empty: Vec<Row> = vec![Vec::new(); n];
        let v_of = |j: Option<usize>| -> &Vec<Row> {
            match j {
                Some(j) if v_index[j] != usize::MAX => &v_rows[v_index[j]].1,
                _ => &empty,
            }
        };
        let w = grid.cell_volume();
        let mut a_rows: Vec<Row> = Vec::new();
        let mut b_rows: Vec<Row> = Vec::new();
        for &(i, ref vr) in &v_rows {
            a_rows.extend(vr.iter().cloned());
            let mut jac: Vec<Row> = vec![Vec::new(); n * n];
            for a in 0..n {
                let (p, m) = (v_of(step(i, a, 1)), v_of(step(i, a, -1)));
                for c in 0..n {
                    jac[c * n + a] = combine(&p[c], 0.5 / h, &m[c], -0.5 / h);
                }
            }
            let div = tidy((0..n).flat_map(|a| jac[a * n + a].clone()).collect());
            let diff = |c: usize, a: usize, d: usize, b: usize| combine(&jac[c * n + a], 1.0, &jac[d * n + b], -1.0);
            if n == 2 {
                b_rows.push(diff(1, 0, 0, 1));
            } else {
                b_rows.push(diff(2, 1, 1, 2));
                b_rows.push(diff(0, 2, 2, 0));
                b_rows.push(diff(1, 0, 0, 1));
            }
            b_rows.push(div);
            a_rows.extend(jac);
        }
        let bw = a_rows
            .iter()
            .chain(&b_rows)
            .filter(|r| !r.is_empty())
            .map(|r| r.last().unwrap().0 - r[0].0)
            .max()
            .unwrap_or(0);
        let mut am = Banded::zeros(free.len(), bw);
        let mut bm = Banded::zeros(free.len(), bw);
        for r in &a_rows {
            am.add_outer(r, w);
        }
        for r in &b_rows {
            bm.add_outer(r, w);
        }
        Ok(CollarForms { grid, mask, bc, free, a: am, b: bm, v_rows })
    }

    /// The field of a potential vector.
    pub fn field(&self, psi: &[f64]) -> GridField {
        let n = self.grid.n;
        let mut f = GridField::zeros(self.grid, n, self.mask.clone());
        for (i, rows) in &self.v_rows {
            for c in 0..n {
                f.values[i * n + c] = rows[c].iter().map(|&(k, x)| x * psi[k]).sum();
            }
        }
        f
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult {
    /// `sqrt` of the top generalised eigenvalue.
    pub gaffney_constant_p2: f64,
    pub eigenvalue: f64,
    pub unknowns: usize,
    pub bandwidth: usize,
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip)]
    pub eigenfield: Option<GridField>,
}

/// Largest `p = 2` Gaffney ratio on the collar space of `grid`.
pub fn spectral_oracle_p2(dom: &Domain, grid: Grid, bc: BoundaryCondition, collar_width: f64) -> Result<SpectralResult> {
    let forms = CollarForms::assemble(dom, grid, bc, collar_width)?;
    let top = top_eigen(&forms.a, &forms.b, 1e-9, 120)?;
    Ok(SpectralResult {
        gaffney_constant_p2: top.value.sqrt(),
        eigenvalue: top.value,
        unknowns: forms.free.len(),
        bandwidth: forms.a.bw,
        iterations: top.iterations,
        residual: top.residual,
        eigenfield: Some(forms.field(&top.vector)),
    })
}

/// Same constant by a dense eigensolve; for small grids only.
pub fn dense_oracle_p2(dom: &Domain, grid: Grid, bc: BoundaryCondition, collar_width: f64) -> Result<f64> {
    let forms = CollarForms::assemble(dom, grid, bc, collar_width)?;
    if forms.free.len() > 4000 {
        return Err(Error::InvalidParam(format!("{} unknowns is too many for a dense solve", forms.free.len())));
    }
    Ok(dense_top_eigen(&forms.a.to_dense(), &forms.b.to_dense())?.sqrt())
}
