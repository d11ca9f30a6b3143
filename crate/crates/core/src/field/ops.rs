//! Masked finite differences and grid norms.
//!
//! A partial derivative at a node uses the central difference when both axis
//! neighbours are selected, the second-order one-sided formula when two
//! consecutive neighbours on one side are, and the first-order difference
//! otherwise. A node with no selected neighbour along some axis is isolated;
//! its derivative along that axis is reported as zero and the node is listed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Grid, GridField, Region, Selector};
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone)]
pub struct Derivative {
    pub field: GridField,
    /// Selected nodes lacking a selected neighbour along some axis.
    pub isolated: Vec<usize>,
}

impl Derivative {
    /// Fails with the isolated node list if there is one.
    pub fn strict(self) -> Result<GridField> {
        if self.isolated.is_empty() {
            Ok(self.field)
        } else {
            Err(Error::IsolatedNodes(self.isolated))
        }
    }
}

#[inline]
fn selected(f: &GridField, sel: &Selector, i: [usize; 3], axis: usize, off: i64) -> Option<usize> {
    let g = &f.grid;
    let k = i[axis] as i64 + off;
    if k < 0 || k >= g.dims[axis] as i64 {
        return None;
    }
    let mut j = i;
    j[axis] = k as usize;
    let idx = g.flat(j);
    sel.admits(j, f.mask[idx]).then_some(idx)
}

/// `∂_axis` of every component at node `idx` into `out[c]`. Returns `false`
/// when the node has no selected neighbour along `axis`.
#[inline]
fn partial(f: &GridField, sel: &Selector, idx: usize, i: [usize; 3], axis: usize, out: &mut [f64]) -> bool {
    let nc = f.ncomp;
    let h = f.grid.h();
    let v = |k: usize, c: usize| f.values[k * nc + c];
    let p1 = selected(f, sel, i, axis, 1);
    let m1 = selected(f, sel, i, axis, -1);
    match (m1, p1) {
        (Some(m), Some(p)) => {
            for c in 0..nc {
                out[c] = (v(p, c) - v(m, c)) / (2.0 * h);
            }
        }
        (None, Some(p)) => match selected(f, sel, i, axis, 2) {
            Some(p2) => {
                for c in 0..nc {
                    out[c] = (-3.0 * v(idx, c) + 4.0 * v(p, c) - v(p2, c)) / (2.0 * h);
                }
            }
            None => {
                for c in 0..nc {
                    out[c] = (v(p, c) - v(idx, c)) / h;
                }
            }
        },
        (Some(m), None) => match selected(f, sel, i, axis, -2) {
            Some(m2) => {
                for c in 0..nc {
                    out[c] = (3.0 * v(idx, c) - 4.0 * v(m, c) + v(m2, c)) / (2.0 * h);
                }
            }
            None => {
                for c in 0..nc {
                    out[c] = (v(idx, c) - v(m, c)) / h;
                }
            }
        },
        (None, None) => {
            out[..nc].fill(0.0);
            return false;
        }
    }
    true
}

/// Jacobian at a selected node: `out[c·n + a] = ∂_a v_c`. Returns `false` if
/// the node is isolated along some axis.
pub fn jacobian_at(f: &GridField, sel: &Selector, idx: usize, out: &mut [f64]) -> bool {
    let n = f.grid.n;
    let nc = f.ncomp;
    let i = f.grid.unflat(idx);
    let mut col = [0.0; 9];
    let mut ok = true;
    for a in 0..n {
        ok &= partial(f, sel, idx, i, a, &mut col[..nc]);
        for c in 0..nc {
            out[c * n + a] = col[c];
        }
    }
    ok
}

/// Divergence from a Jacobian of a field with `n` components.
#[inline]
pub fn div_of(jac: &[f64], n: usize) -> f64 {
    (0..n).map(|a| jac[a * n + a]).sum()
}

/// Curl from a Jacobian: the scalar `∂₁v₂ − ∂₂v₁` in 2D, the vector in 3D.
/// Returns the number of components written.
#[inline]
pub fn curl_of(jac: &[f64], n: usize, out: &mut [f64; 3]) -> usize {
    let d = |c: usize, a: usize| jac[c * n + a];
    if n == 2 {
        out[0] = d(1, 0) - d(0, 1);
        1
    } else {
        out[0] = d(2, 1) - d(1, 2);
        out[1] = d(0, 2) - d(2, 0);
        out[2] = d(1, 0) - d(0, 1);
        3
    }
}

pub fn curl_components(n: usize) -> usize {
    if n == 2 { 1 } else { 3 }
}

/// Applies `op(jacobian, out)` at every selected node.
fn map_jacobian(
    f: &GridField,
    sel: &Selector,
    ncomp_out: usize,
    op: impl Fn(&[f64], &mut [f64]) + Sync,
) -> Derivative {
    let n = f.grid.n;
    let mut out = GridField::zeros(f.grid, ncomp_out, f.mask.clone());
    let isolated: Vec<usize> = out
        .values
        .par_chunks_mut(ncomp_out)
        .enumerate()
        .filter_map(|(idx, o)| {
            let i = f.grid.unflat(idx);
            if !sel.admits(i, f.mask[idx]) {
                return None;
            }
            let mut jac = [0.0; 9];
            let ok = jacobian_at(f, sel, idx, &mut jac[..f.ncomp * n]);
            op(&jac[..f.ncomp * n], o);
            (!ok).then_some(idx)
        })
        .collect();
    Derivative { field: out, isolated }
}

/// Gradient with `ncomp·n` components, `∂_a v_c` at component `c·n + a`.
pub fn discrete_grad(f: &GridField, sel: &Selector) -> Derivative {
    let m = f.ncomp * f.grid.n;
    map_jacobian(f, sel, m, |j, o| o.copy_from_slice(j))
}

pub fn discrete_div(f: &GridField, sel: &Selector) -> Result<Derivative> {
    let n = f.grid.n;
    if f.ncomp != n {
        return Err(Error::GridMismatch(format!("divergence needs {n} components, got {}", f.ncomp)));
    }
    Ok(map_jacobian(f, sel, 1, move |j, o| o[0] = div_of(j, n)))
}

pub fn discrete_curl(f: &GridField, sel: &Selector) -> Result<Derivative> {
    let n = f.grid.n;
    if f.ncomp != n {
        return Err(Error::GridMismatch(format!("curl needs {n} components, got {}", f.ncomp)));
    }
    Ok(map_jacobian(f, sel, curl_components(n), move |j, o| {
        let mut c = [0.0; 3];
        let k = curl_of(j, n, &mut c);
        o.copy_from_slice(&c[..k]);
    }))
}

/// Running `Σ |g|^p` or `max |g|`.
#[derive(Debug, Clone, Copy)]
pub struct Accum {
    pub p: f64,
    pub sum: f64,
}

impl Accum {
    pub fn new(p: f64) -> Self {
        Accum { p, sum: 0.0 }
    }

    /// Adds a pointwise Euclidean magnitude.
    #[inline]
    pub fn add(&mut self, mag: f64) {
        if self.p.is_infinite() {
            self.sum = self.sum.max(mag);
        } else if mag > 0.0 {
            self.sum += mag.powf(self.p);
        }
    }

    #[inline]
    pub fn merge(mut self, o: Accum) -> Accum {
        if self.p.is_infinite() {
            self.sum = self.sum.max(o.sum);
        } else {
            self.sum += o.sum;
        }
        self
    }

    /// The norm, with volume element `vol`.
    pub fn norm(&self, vol: f64) -> f64 {
        if self.p.is_infinite() {
            self.sum
        } else {
            (self.sum * vol).powf(1.0 / self.p)
        }
    }
}

#[inline]
pub fn magnitude(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("norm exponent must lie in [1, ∞], got {p}")))
    }
}

/// `(Σ |g|^p hⁿ)^{1/p}` over the selected nodes, or the max for `p = ∞`.
pub fn lp_norm(g: &GridField, p: f64, sel: &Selector) -> Result<f64> {
    check_p(p)?;
    let grid = g.grid;
    let (acc, count) = (0..grid.len())
        .into_par_iter()
        .filter(|&idx| sel.admits(grid.unflat(idx), g.mask[idx]))
        .fold(|| (Accum::new(p), 0usize), |(mut a, c), idx| {
            a.add(magnitude(g.at(idx)));
            (a, c + 1)
        })
        .reduce(|| (Accum::new(p), 0), |(a, c), (b, d)| (a.merge(b), c + d));
    if count == 0 {
        return Err(Error::EmptyRegion(format!("{:?}", sel.region)));
    }
    Ok(acc.norm(grid.cell_volume()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// Exponent; `None` stands for ∞.
    pub p: Option<f64>,
    pub lp_field: f64,
    pub lp_div: f64,
    pub lp_curl: f64,
    pub lp_grad: f64,
    pub w1p: f64,
    pub nodes: usize,
    pub isolated: usize,
}

/// `‖v‖_{W^{1,p}}` from the two pieces: `(a^p + b^p)^{1/p}`, or the max.
#[inline]
pub fn w1p_combine(field: f64, grad: f64, p: f64) -> f64 {
    if p.is_infinite() {
        field.max(grad)
    } else {
        (field.powf(p) + grad.powf(p)).powf(1.0 / p)
    }
}

/// All norms of a vector field in one streamed pass.
pub fn norm_report(f: &GridField, p: f64, sel: &Selector) -> Result<NormReport> {
    check_p(p)?;
    let n = f.grid.n;
    if f.ncomp != n {
        return Err(Error::GridMismatch(format!("norm report needs {n} components, got {}", f.ncomp)));
    }
    let grid = f.grid;
    let zero = || ([Accum::new(p); 4], 0usize, 0usize);
    let (acc, nodes, isolated) = (0..grid.len())
        .into_par_iter()
        .filter(|&idx| sel.admits(grid.unflat(idx), f.mask[idx]))
        .fold(zero, |(mut a, c, iso), idx| {
            let mut jac = [0.0; 9];
            let ok = jacobian_at(f, sel, idx, &mut jac[..n * n]);
            let mut cu = [0.0; 3];
            let k = curl_of(&jac, n, &mut cu);
            a[0].add(magnitude(f.at(idx)));
            a[1].add(div_of(&jac, n).abs());
            a[2].add(magnitude(&cu[..k]));
            a[3].add(magnitude(&jac[..n * n]));
            (a, c + 1, iso + (!ok) as usize)
        })
        .reduce(zero, |(a, c, i), (b, d, j)| {
            ([a[0].merge(b[0]), a[1].merge(b[1]), a[2].merge(b[2]), a[3].merge(b[3])], c + d, i + j)
        });
    if nodes == 0 {
        return Err(Error::EmptyRegion(format!("{:?}", sel.region)));
    }
    let vol = grid.cell_volume();
    let lp_field = acc[0].norm(vol);
    let lp_grad = acc[3].norm(vol);
    Ok(NormReport {
        p: p.is_finite().then_some(p),
        lp_field,
        lp_div: acc[1].norm(vol),
        lp_curl: acc[2].norm(vol),
        lp_grad,
        w1p: w1p_combine(lp_field, lp_grad, p),
        nodes,
        isolated,
    })
}

/// `|Σ (u·∇v + v div u) hⁿ|` over the interior nodes. `grad_v` supplies `∇v`;
/// when absent the discrete gradient of `v` is used, in which case summation
/// by parts makes the residual vanish to roundoff for collar fields.
pub fn discrete_green_residual(u: &GridField, v: &GridField, grad_v: Option<&GridField>) -> Result<f64> {
    let n = u.grid.n;
    if v.grid != u.grid || v.ncomp != 1 || u.ncomp != n {
        return Err(Error::GridMismatch("green residual needs a vector u and a scalar v on one grid".into()));
    }
    let sel = Selector::whole(&u.grid, Region::Interior);
    let div = discrete_div(u, &sel)?.field;
    let own;
    let gv = match grad_v {
        Some(g) => {
            if g.grid != u.grid || g.ncomp != n {
                return Err(Error::GridMismatch("gradient of v has the wrong shape".into()));
            }
            g
        }
        None => {
            own = discrete_grad(v, &sel).field;
            &own
        }
    };
    let s: f64 = (0..u.grid.len())
        .into_par_iter()
        .filter(|&i| u.mask[i] == super::NodeClass::Interior)
        .map(|i| {
            let uu = u.at(i);
            let g = gv.at(i);
            (0..n).map(|a| uu[a] * g[a]).sum::<f64>() + v.values[i] * div.values[i]
        })
        .sum();
    Ok((s * u.grid.cell_volume()).abs())
}

/// Samples an analytic scalar and its gradient on the interior nodes.
pub fn sample_scalar_with_gradient(
    grid: Grid,
    mask: std::sync::Arc<Vec<super::NodeClass>>,
    f: impl Fn(&Point) -> (f64, Point) + Sync,
) -> (GridField, GridField) {
    let n = grid.n;
    let v = GridField::from_fn(grid, 1, mask.clone(), Region::Interior, |x, o| o[0] = f(x).0);
    let g = GridField::from_fn(grid, n, mask, Region::Interior, |x, o| o.copy_from_slice(&f(x).1[..n]));
    (v, g)
}
