//! Affine fields `P_S(u)(x) = a + B(x − x̄)` fitted on a cube or on two
//! touching cubes, and the local measurements built on them.
//!
//! `a` is the mean of `u` over the grid nodes of `S`, `B` the symmetric part of
//! the mean discrete Jacobian with differences restricted to `S`, and `x̄` the
//! barycentre of the same nodes. With these choices the mean of `u − P_S(u)`
//! and `div P_S(u) − mean(div u)` vanish to roundoff.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ops::{curl_of, div_of, jacobian_at, magnitude, Accum};
use crate::field::{GridField, NodeClass, Region, Selector};
use crate::geometry::Point;
use crate::quad::gauss_legendre;
use crate::whitney::DyadicCube;

/// A cube or a union of two touching cubes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineRegion {
    pub first: DyadicCube,
    pub second: Option<DyadicCube>,
}

impl AffineRegion {
    pub fn cube(c: DyadicCube) -> Self {
        AffineRegion { first: c, second: None }
    }

    pub fn pair(a: DyadicCube, b: DyadicCube, n: usize) -> Result<Self> {
        if !a.touches(&b, n) || a.overlaps(&b, n) {
            return Err(Error::InvalidParam("a two-cube region needs touching, non-overlapping cubes".into()));
        }
        Ok(AffineRegion { first: a, second: Some(b) })
    }

    pub fn selector(&self, f: &GridField, region: Region) -> Selector {
        let n = f.grid.n;
        let s = Selector::boxed(&f.grid, region, &self.first.lo(n), &self.first.hi(n));
        match self.second {
            Some(b) => s.with_box(&f.grid, &b.lo(n), &b.hi(n)),
            None => s,
        }
    }

    /// Diameter of the region's bounding box.
    pub fn diameter(&self, n: usize) -> f64 {
        let mut lo = self.first.lo(n);
        let mut hi = self.first.hi(n);
        if let Some(b) = self.second {
            let (l, h) = (b.lo(n), b.hi(n));
            for a in 0..n {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(h[a]);
            }
        }
        (0..n).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePolynomial {
    pub n: usize,
    pub a: [f64; 3],
    /// Symmetric: `b[i][j] == b[j][i]` bit for bit.
    pub b: [[f64; 3]; 3],
    pub xbar: Point,
    /// Mean discrete divergence over the nodes; equals `tr B` up to roundoff.
    pub mean_div: f64,
    pub nodes: usize,
    /// Some grid nodes of the region lie outside the interior mask.
    pub partial: bool,
    /// Nodes with no neighbour in the region along some axis.
    pub isolated: usize,
}

impl AffinePolynomial {
    pub fn zero(n: usize) -> Self {
        AffinePolynomial {
            n,
            a: [0.0; 3],
            b: [[0.0; 3]; 3],
            xbar: [0.0; 3],
            mean_div: 0.0,
            nodes: 0,
            partial: false,
            isolated: 0,
        }
    }

    /// `a + B(x − x̄)`.
    #[inline]
    pub fn eval(&self, x: &Point) -> [f64; 3] {
        let mut out = self.a;
        for i in 0..self.n {
            for j in 0..self.n {
                out[i] += self.b[i][j] * (x[j] - self.xbar[j]);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.b[i][i]).sum()
    }

    /// Frobenius norm of `B`, the pointwise magnitude of `∇P`.
    pub fn grad_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.b[i][j] * self.b[i][j];
            }
        }
        s.sqrt()
    }

    /// Difference of two polynomials as a polynomial about `self.xbar`.
    pub fn minus(&self, other: &AffinePolynomial) -> AffinePolynomial {
        let mut d = *self;
        let o = other.eval(&self.xbar);
        for i in 0..self.n {
            d.a[i] -= o[i];
            for j in 0..self.n {
                d.b[i][j] -= other.b[i][j];
            }
        }
        d
    }

    /// Curl of the polynomial, from the antisymmetric part of `B` (zero).
    pub fn curl(&self) -> [f64; 3] {
        let b = &self.b;
        if self.n == 2 {
            [b[1][0] - b[0][1], 0.0, 0.0]
        } else {
            [b[2][1] - b[1][2], b[0][2] - b[2][0], b[1][0] - b[0][1]]
        }
    }
}

/// Fits `P_S(u)` from the interior nodes of `S`.
pub fn fit_affine(u: &GridField, s: &AffineRegion) -> Result<AffinePolynomial> {
    let n = u.grid.n;
    if u.ncomp != n {
        return Err(Error::GridMismatch(format!("affine fit needs {n} components, got {}", u.ncomp)));
    }
    let sel = s.selector(u, Region::Interior);
    let nodes = sel.nodes(&u.grid, &u.mask);
    if nodes.is_empty() {
        return Err(Error::EmptyRegion("no interior grid nodes in the fitting region; refine the grid".into()));
    }
    let mut a = [0.0; 3];
    let mut xbar = [0.0; 3];
    let mut jm = [0.0; 9];
    let mut isolated = 0;
    for &idx in &nodes {
        let x = u.grid.point(idx);
        let v = u.at(idx);
        let mut jac = [0.0; 9];
        if !jacobian_at(u, &sel, idx, &mut jac[..n * n]) {
            isolated += 1;
        }
        for i in 0..n {
            a[i] += v[i];
            xbar[i] += x[i];
        }
        for k in 0..n * n {
            jm[k] += jac[k];
        }
    }
    let m = nodes.len() as f64;
    for i in 0..n {
        a[i] /= m;
        xbar[i] /= m;
    }
    jm.iter_mut().for_each(|x| *x /= m);
    let mut b = [[0.0; 3]; 3];
    for i in 0..n {
        for j in i..n {
            let s = 0.5 * (jm[i * n + j] + jm[j * n + i]);
            b[i][j] = s;
            b[j][i] = s;
        }
    }
    Ok(AffinePolynomial {
        n,
        a,
        b,
        xbar,
        mean_div: div_of(&jm, n),
        nodes: nodes.len(),
        partial: nodes.len() < sel.box_nodes(),
        isolated,
    })
}

/// Exact identities of a fitted polynomial, measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub symmetric: bool,
    pub curl_free: bool,
    /// `|tr B − mean div u|`.
    pub trace_defect: f64,
    /// Largest component of the mean of `u − P` over the nodes.
    pub mean_residual: f64,
}

pub fn check_identities(u: &GridField, s: &AffineRegion, p: &AffinePolynomial) -> IdentityCheck {
    let n = p.n;
    let sel = s.selector(u, Region::Interior);
    let nodes = sel.nodes(&u.grid, &u.mask);
    let mut mean = [0.0; 3];
    for &idx in &nodes {
        let q = p.eval(&u.grid.point(idx));
        for i in 0..n {
            mean[i] += u.at(idx)[i] - q[i];
        }
    }
    let m = nodes.len().max(1) as f64;
    IdentityCheck {
        symmetric: (0..n).all(|i| (0..n).all(|j| p.b[i][j] == p.b[j][i])),
        curl_free: p.curl().iter().all(|c| *c == 0.0),
        trace_defect: (p.trace() - p.mean_div).abs(),
        mean_residual: mean.iter().map(|x| (x / m).abs()).fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub mean_residual: [f64; 3],
    pub lp_residual: f64,
    /// `‖u − P‖ / (diam S · (‖curl u‖ + ‖div u‖))`; `None` for a zero denominator.
    pub poincare_ratio: Option<f64>,
    /// Zero denominator with a nonzero residual.
    pub violation: bool,
}

/// Relative size below which a residual counts as zero.
pub const ZERO_TOL: f64 = 1e-12;

pub fn residual_report(u: &GridField, s: &AffineRegion, p_exp: f64) -> Result<ResidualReport> {
    let poly = fit_affine(u, s)?;
    let n = u.grid.n;
    let sel = s.selector(u, Region::Interior);
    let nodes = sel.nodes(&u.grid, &u.mask);
    let (mut res, mut div, mut curl) = (Accum::new(p_exp), Accum::new(p_exp), Accum::new(p_exp));
    let mut mean = [0.0; 3];
    let mut umax: f64 = 0.0;
    for &idx in &nodes {
        let q = poly.eval(&u.grid.point(idx));
        let mut r = [0.0; 3];
        for i in 0..n {
            r[i] = u.at(idx)[i] - q[i];
            mean[i] += r[i];
        }
        umax = umax.max(magnitude(u.at(idx)));
        res.add(magnitude(&r[..n]));
        let mut jac = [0.0; 9];
        jacobian_at(u, &sel, idx, &mut jac[..n * n]);
        div.add(div_of(&jac, n).abs());
        let mut c = [0.0; 3];
        let k = curl_of(&jac, n, &mut c);
        curl.add(magnitude(&c[..k]));
    }
    let m = nodes.len() as f64;
    mean.iter_mut().for_each(|x| *x /= m);
    let vol = u.grid.cell_volume();
    let lp_residual = res.norm(vol);
    let den = s.diameter(n) * (curl.norm(vol) + div.norm(vol));
    let (poincare_ratio, violation) = if den > 0.0 {
        (Some(lp_residual / den), false)
    } else {
        (None, lp_residual > ZERO_TOL * umax.max(f64::MIN_POSITIVE) * m.powf(1.0 / p_exp.min(1e6)))
    };
    Ok(ResidualReport { mean_residual: mean, lp_residual, poincare_ratio, violation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientComparison {
    /// `‖∇(u − P)‖_p / ‖∇u‖_p`.
    pub ratio: f64,
    /// `‖∇P‖_∞ / ‖∇u‖_∞`, at most 1.
    pub ratio_inf: f64,
}

pub fn gradient_comparison(u: &GridField, s: &AffineRegion, p_exp: f64) -> Result<GradientComparison> {
    let poly = fit_affine(u, s)?;
    let n = u.grid.n;
    let sel = s.selector(u, Region::Interior);
    let (mut du, mut dr) = (Accum::new(p_exp), Accum::new(p_exp));
    let mut gmax: f64 = 0.0;
    for idx in sel.nodes(&u.grid, &u.mask) {
        let mut jac = [0.0; 9];
        jacobian_at(u, &sel, idx, &mut jac[..n * n]);
        let g = magnitude(&jac[..n * n]);
        gmax = gmax.max(g);
        du.add(g);
        let mut r = [0.0; 9];
        for i in 0..n {
            for j in 0..n {
                r[i * n + j] = jac[i * n + j] - poly.b[i][j];
            }
        }
        dr.add(magnitude(&r[..n * n]));
    }
    let vol = u.grid.cell_volume();
    let gu = du.norm(vol);
    if gu == 0.0 || gmax == 0.0 {
        return Ok(GradientComparison { ratio: 0.0, ratio_inf: 0.0 });
    }
    Ok(GradientComparison { ratio: dr.norm(vol) / gu, ratio_inf: poly.grad_norm() / gmax })
}

/// `L^p` norm over the cube of an affine field, by a tensor Gauss rule that is
/// exact for `p = 2` and converged to roundoff for other exponents used here.
pub fn affine_lp_on_cube(p: &AffinePolynomial, cube: &DyadicCube, p_exp: f64) -> f64 {
    let n = p.n;
    let lo = cube.lo(n);
    let e = cube.edge();
    if p_exp.is_infinite() {
        // Affine: the maximum of |P| sits at a vertex.
        let mut m: f64 = 0.0;
        for corner in 0..(1usize << n) {
            let mut x = [0.0; 3];
            for a in 0..n {
                x[a] = lo[a] + e * ((corner >> a) & 1) as f64;
            }
            m = m.max(magnitude(&p.eval(&x)[..n]));
        }
        return m;
    }
    let (gx, gw) = gauss_legendre(8);
    let k = gx.len();
    let mut s = 0.0;
    let total = k.pow(n as u32);
    for t in 0..total {
        let mut x = [0.0; 3];
        let mut w = 1.0;
        let mut q = t;
        for a in 0..n {
            let i = q % k;
            q /= k;
            x[a] = lo[a] + 0.5 * e * (gx[i] + 1.0);
            w *= 0.5 * e * gw[i];
        }
        s += w * magnitude(&p.eval(&x)[..n]).powf(p_exp);
    }
    s.powf(1.0 / p_exp)
}

/// Norms of a field over the interior nodes of one cube, with derivatives
/// restricted to Ω. Slots: field, div, curl, gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalNorms {
    pub p: f64,
    pub nodes: usize,
    pub sum: [f64; 4],
    pub max: [f64; 4],
}

pub const FIELD: usize = 0;
pub const DIV: usize = 1;
pub const CURL: usize = 2;
pub const GRAD: usize = 3;

impl LocalNorms {
    pub fn empty(p: f64) -> Self {
        LocalNorms { p, nodes: 0, sum: [0.0; 4], max: [0.0; 4] }
    }

    pub fn merge(&mut self, o: &LocalNorms) {
        self.nodes += o.nodes;
        for k in 0..4 {
            self.sum[k] += o.sum[k];
            self.max[k] = self.max[k].max(o.max[k]);
        }
    }

    pub fn lp(&self, slot: usize, vol: f64) -> f64 {
        if self.p.is_infinite() {
            self.max[slot]
        } else {
            (self.sum[slot] * vol).powf(1.0 / self.p)
        }
    }

    pub fn linf(&self, slot: usize) -> f64 {
        self.max[slot]
    }
}

pub fn local_norms(v: &GridField, cube: &DyadicCube, p: f64) -> LocalNorms {
    let n = v.grid.n;
    let whole = Selector::whole(&v.grid, Region::Interior);
    let boxed = Selector::boxed(&v.grid, Region::Interior, &cube.lo(n), &cube.hi(n));
    let mut out = LocalNorms::empty(p);
    for idx in boxed.nodes(&v.grid, &v.mask) {
        let mut jac = [0.0; 9];
        jacobian_at(v, &whole, idx, &mut jac[..n * n]);
        let mut c = [0.0; 3];
        let k = curl_of(&jac, n, &mut c);
        let vals = [magnitude(v.at(idx)), div_of(&jac, n).abs(), magnitude(&c[..k]), magnitude(&jac[..n * n])];
        out.nodes += 1;
        for s in 0..4 {
            if p.is_finite() && vals[s] > 0.0 {
                out.sum[s] += vals[s].powf(p);
            }
            out.max[s] = out.max[s].max(vals[s]);
        }
    }
    out
}

/// Both sides of the chain estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainDifference {
    pub len: usize,
    /// `‖P_{S₁} − P_{S_m}‖_{L^p(S₁)}`.
    pub lhs: f64,
    /// `ℓ(S₁)(‖curl v‖ + ‖div v‖)` over the union of the chain.
    pub rhs_factor: f64,
    pub ratio: Option<f64>,
    /// `‖P_{S₁} − P_{S_m}‖_{L^∞(S₁)}`.
    pub lhs_inf: f64,
    /// `ℓ(S₁)‖∇v‖_{L^∞}` over the union of the chain.
    pub rhs_inf: f64,
    pub ratio_inf: Option<f64>,
    pub violation: bool,
}

/// Ratio with the zero conventions shared by every report: `0/0 → 0`,
/// `x/0 → None` (a violation candidate when `x` is not negligible).
pub fn safe_ratio(lhs: f64, rhs: f64, scale: f64) -> (Option<f64>, bool) {
    if rhs > 0.0 {
        (Some(lhs / rhs), false)
    } else if lhs <= ZERO_TOL * scale {
        (Some(0.0), false)
    } else {
        (None, true)
    }
}

/// Chain estimate from fitted polynomials and per-cube norms of `v`
/// (`fits[i]`, `norms[i]` belong to `cubes[i]`).
pub fn chain_difference(
    cubes: &[DyadicCube],
    fits: &[AffinePolynomial],
    norms: &[LocalNorms],
    p: f64,
    vol: f64,
) -> ChainDifference {
    let m = cubes.len();
    let first = &fits[0];
    let d = first.minus(&fits[m - 1]);
    let lhs = if m == 1 { 0.0 } else { affine_lp_on_cube(&d, &cubes[0], p) };
    let lhs_inf = if m == 1 { 0.0 } else { affine_lp_on_cube(&d, &cubes[0], f64::INFINITY) };
    let mut u = LocalNorms::empty(p);
    for nm in norms {
        u.merge(nm);
    }
    let l = cubes[0].edge();
    let rhs_factor = l * (u.lp(CURL, vol) + u.lp(DIV, vol));
    let rhs_inf = l * u.linf(GRAD);
    let scale = affine_lp_on_cube(first, &cubes[0], p).max(f64::MIN_POSITIVE);
    let (ratio, v1) = safe_ratio(lhs, rhs_factor, scale);
    let (ratio_inf, v2) = safe_ratio(lhs_inf, rhs_inf, scale);
    ChainDifference { len: m, lhs, rhs_factor, ratio, lhs_inf, rhs_inf, ratio_inf, violation: v1 || v2 }
}

/// Jones' norm comparison for degree-one polynomials: the largest observed
/// `‖P‖_{L^p(F)} / ‖P‖_{L^p(G)}` over random boxes `F, G ⊂ [0,1]ⁿ` of volume
/// at least `γ`, with coefficients drawn from `N(0,1)`.
pub fn polynomial_norm_comparison(n: usize, gamma: f64, p: f64, trials: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParam(format!("gamma must lie in (0,1], got {gamma}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (gx, gw) = gauss_legendre(8);
    let norm = |poly: &AffinePolynomial, lo: &Point, hi: &Point| {
        let k = gx.len();
        let mut s = 0.0;
        for t in 0..k.pow(n as u32) {
            let mut x = [0.0; 3];
            let mut w = 1.0;
            let mut q = t;
            for a in 0..n {
                let i = q % k;
                q /= k;
                x[a] = lo[a] + 0.5 * (hi[a] - lo[a]) * (gx[i] + 1.0);
                w *= 0.5 * (hi[a] - lo[a]) * gw[i];
            }
            s += w * magnitude(&poly.eval(&x)[..n]).powf(p);
        }
        s.powf(1.0 / p)
    };
    let boxed = |rng: &mut rand_chacha::ChaCha8Rng| -> (Point, Point) {
        // Side lengths with product ≥ γ: each side at least γ^{1/n}.
        let smin = gamma.powf(1.0 / n as f64);
        let (mut lo, mut hi) = ([0.0; 3], [0.0; 3]);
        for a in 0..n {
            let s = smin + (1.0 - smin) * rng.random::<f64>();
            lo[a] = (1.0 - s) * rng.random::<f64>();
            hi[a] = lo[a] + s;
        }
        (lo, hi)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut poly = AffinePolynomial::zero(n);
        for i in 0..n {
            poly.a[i] = StandardNormal.sample(&mut rng);
            for j in 0..n {
                poly.b[i][j] = StandardNormal.sample(&mut rng);
            }
            poly.xbar[i] = 0.5;
        }
        let (fl, fh) = boxed(&mut rng);
        let (gl, gh) = boxed(&mut rng);
        worst = worst.max(norm(&poly, &fl, &fh) / norm(&poly, &gl, &gh));
    }
    Ok(worst)
}

/// Fits every cube in parallel; cubes without interior nodes are errors.
pub fn fit_cubes(v: &GridField, cubes: &[DyadicCube]) -> Result<Vec<AffinePolynomial>> {
    cubes.par_iter().map(|c| fit_affine(v, &AffineRegion::cube(*c))).collect()
}

/// Interior-node count of a cube (zero when the grid is too coarse).
pub fn interior_nodes(v: &GridField, cube: &DyadicCube) -> usize {
    let n = v.grid.n;
    Selector::boxed(&v.grid, Region::Interior, &cube.lo(n), &cube.hi(n))
        .nodes(&v.grid, &v.mask)
        .iter()
        .filter(|&&i| v.mask[i] == NodeClass::Interior)
        .count()
}

/// CSV dump with one row per fitted cube: id, level, `a`, the upper triangle
/// of `B`, barycentre and fit diagnostics.
pub fn write_fits_csv<W: std::io::Write>(out: W, ids: &[usize], cubes: &[DyadicCube], fits: &[AffinePolynomial]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = fits.first().map_or(2, |f| f.n);
    let mut header = vec!["cube".to_string(), "level".to_string()];
    header.extend((0..n).map(|i| format!("a{}", i + 1)));
    for i in 0..n {
        for j in i..n {
            header.push(format!("b{}{}", i + 1, j + 1));
        }
    }
    header.extend((0..n).map(|i| format!("xbar{}", i + 1)));
    header.extend(["mean_div", "nodes", "partial", "isolated"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for ((id, c), f) in ids.iter().zip(cubes).zip(fits) {
        let mut rec = vec![id.to_string(), c.level.to_string()];
        rec.extend(f.a[..n].iter().map(|x| format!("{x:.17e}")));
        for i in 0..n {
            for j in i..n {
                rec.push(format!("{:.17e}", f.b[i][j]));
            }
        }
        rec.extend(f.xbar[..n].iter().map(|x| format!("{x:.17e}")));
        rec.push(format!("{:.17e}", f.mean_div));
        rec.push(f.nodes.to_string());
        rec.push((f.partial as u8).to_string());
        rec.push(f.isolated.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
