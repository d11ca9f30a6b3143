//! The extension `Ev`: `v` on Ω and `Σ_j φ_j P_j` on the complement, where
//! `P_j` is the affine fit of `v` on the reflected cube `Q_j*`.
//!
//! Grid values of `Ev` are assembled node by node. Norms over the complement
//! are computed from the closed form by composite Gauss rules on each
//! complement cube, since the bumps ramp over `ℓ/32` and no practical grid
//! resolves that.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::{fit_affine, local_norms, safe_ratio, AffinePolynomial, AffineRegion, LocalNorms, CURL, DIV, FIELD, GRAD};
use crate::error::{Error, Result};
use crate::field::ops::{curl_of, div_of, magnitude, norm_report, w1p_combine};
use crate::field::{membership_mask, Grid, GridField, NodeClass, Region, Selector};
use crate::geometry::{Domain, Point};
use crate::partition::{build_partition, PartitionOfUnity, PhiValue, PLATEAU, SUPPORT};
use crate::quad::{composite, gauss_legendre};
use crate::reflection::{build_chains, build_reflection, overlap_statistic, w3_partners, ChainSet, OverlapStatistic, ReflectionMap};
use crate::whitney::{select_w3_ids, whitney_decompose, DyadicCube, Side, WhitneyDecomposition};

/// Field-independent part of the construction.
#[derive(Debug)]
pub struct Scaffold {
    pub dom: Domain,
    pub max_level: u8,
    pub w1: WhitneyDecomposition,
    pub w2: WhitneyDecomposition,
    /// W₃ as ids into `w2`.
    pub w3_ids: Vec<usize>,
    pub w3: Vec<DyadicCube>,
    /// Position in W₃ of each `w2` cube.
    pub w3_pos: Vec<Option<usize>>,
    pub refl: ReflectionMap,
    pub partners: Vec<Vec<usize>>,
    pub chains: ChainSet,
    pub overlap: OverlapStatistic,
    pub pu: PartitionOfUnity,
    /// `F(Q_j)` as W₁ ids, per W₃ position.
    pub f_sets: Vec<Vec<usize>>,
    /// W₃ positions whose bump is nonzero somewhere in each `w2` cube.
    pub contributors: Vec<Vec<usize>>,
    /// W₃ positions touching each `w2` cube.
    pub touching: Vec<Vec<usize>>,
    rules: Vec<Option<CubeRule>>,
}

/// Tensor-product rule on one complement cube.
#[derive(Debug, Clone)]
struct CubeRule {
    x: [Vec<f64>; 3],
    w: [Vec<f64>; 3],
}

/// Gauss points on the ramp layers and on the remaining pieces of an axis.
fn points_per_piece(n: usize) -> (usize, usize) {
    if n == 2 {
        (6, 4)
    } else {
        (3, 2)
    }
}

impl Scaffold {
    pub fn build(dom: &Domain, max_level: u8) -> Result<Self> {
        let n = dom.n;
        let w1 = whitney_decompose(dom, Side::Interior, max_level)?;
        let w2 = whitney_decompose(dom, Side::Complement, max_level)?;
        let w3_ids = select_w3_ids(&w2, dom);
        if w3_ids.is_empty() {
            return Err(Error::EmptyW3);
        }
        let w3: Vec<DyadicCube> = w3_ids.iter().map(|&i| w2.cubes[i]).collect();
        let mut w3_pos = vec![None; w2.len()];
        for (p, &id) in w3_ids.iter().enumerate() {
            w3_pos[id] = Some(p);
        }
        let refl = build_reflection(&w1, &w3)?;
        let partners = w3_partners(&w2, &w3_ids);
        let chains = build_chains(&refl, &w1, &partners)?;
        let overlap = overlap_statistic(&chains, &refl, w1.len());
        let pu = build_partition(&w3, n);
        let f_sets: Vec<Vec<usize>> = (0..w3.len()).map(|j| chains.union_for(j, &refl)).collect();

        let (layer, core) = points_per_piece(n);
        let table = [gauss_legendre(core), gauss_legendre(layer)];
        let per_cube: Vec<(Vec<usize>, Vec<usize>, Option<CubeRule>)> = (0..w2.len())
            .into_par_iter()
            .map(|k| {
                let q = w2.cubes[k];
                let (lo, hi) = (q.lo(n), q.hi(n));
                let contrib = pu.meeting_box(&lo, &hi);
                let mut touch: Vec<usize> =
                    w2.adjacency[k].iter().filter_map(|&o| w3_pos[o as usize]).collect();
                if let Some(p) = w3_pos[k] {
                    touch.push(p);
                }
                touch.sort_unstable();
                if contrib.is_empty() {
                    return (contrib, touch, None);
                }
                let l = q.edge();
                let mut rule = CubeRule { x: Default::default(), w: Default::default() };
                for a in 0..n {
                    let mut br: Vec<f64> = Vec::new();
                    for &j in &contrib {
                        let b = &pu.bumps[j];
                        for r in [PLATEAU, SUPPORT] {
                            for s in [-1.0, 1.0] {
                                let t = b.center[a] + s * r * b.edge;
                                if t > lo[a] && t < hi[a] {
                                    br.push(t);
                                }
                            }
                        }
                    }
                    br.sort_by(f64::total_cmp);
                    br.dedup();
                    composite(lo[a], hi[a], &br, &table, |len| usize::from(len < 0.1 * l), &mut rule.x[a], &mut rule.w[a]);
                }
                (contrib, touch, Some(rule))
            })
            .collect();
        let mut contributors = Vec::with_capacity(w2.len());
        let mut touching = Vec::with_capacity(w2.len());
        let mut rules = Vec::with_capacity(w2.len());
        for (c, t, r) in per_cube {
            contributors.push(c);
            touching.push(t);
            rules.push(r);
        }
        Ok(Scaffold {
            dom: dom.clone(),
            max_level,
            w1,
            w2,
            w3_ids,
            w3,
            w3_pos,
            refl,
            partners,
            chains,
            overlap,
            pu,
            f_sets,
            contributors,
            touching,
            rules,
        })
    }

    /// Distinct reflected cubes (W₁ ids), ascending.
    pub fn stars(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.refl.pairs.iter().map(|p| p.star).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Quadrature points of the complement cubes that carry any bump.
    pub fn quadrature_points(&self) -> usize {
        let n = self.dom.n;
        self.rules.iter().flatten().map(|r| (0..n).map(|a| r.x[a].len()).product::<usize>()).sum()
    }
}

/// `Ev` and everything needed to measure it.
#[derive(Debug, Clone)]
pub struct ExtensionAssembly {
    pub scaffold: Arc<Scaffold>,
    pub v: GridField,
    /// `P_j` per W₃ position.
    pub fits: Vec<AffinePolynomial>,
    /// `Ev` on the grid of `v`; the mask marks shell nodes.
    pub ev: GridField,
    pub shell_nodes: usize,
    /// Fits whose reflected cube reaches outside the interior mask.
    pub partial_fits: usize,
}

/// Builds the scaffold at `max_level` and extends `v`.
pub fn extend(v: &GridField, dom: &Domain, max_level: u8) -> Result<ExtensionAssembly> {
    let sc = Arc::new(Scaffold::build(dom, max_level)?);
    extend_with(&sc, v)
}

/// `Σ_j φ_j(x) P_j(x)` and its Jacobian (`jac[c·n + a] = ∂_a Ev_c`).
#[inline]
fn assemble(phis: &[PhiValue], fits: &[AffinePolynomial], n: usize, x: &Point, ev: &mut [f64; 3], jac: &mut [f64; 9]) {
    *ev = [0.0; 3];
    *jac = [0.0; 9];
    for ph in phis {
        let p = &fits[ph.j];
        let pv = p.eval(x);
        for c in 0..n {
            ev[c] += ph.value * pv[c];
            for a in 0..n {
                jac[c * n + a] += pv[c] * ph.grad[a] + ph.value * p.b[c][a];
            }
        }
    }
}

pub fn extend_with(sc: &Arc<Scaffold>, v: &GridField) -> Result<ExtensionAssembly> {
    let n = sc.dom.n;
    let g = v.grid;
    if g.n != n || v.ncomp != n {
        return Err(Error::GridMismatch(format!("field is {}-dimensional with {} components, domain is {n}-dimensional", g.n, v.ncomp)));
    }
    if g != Grid::covering(&sc.dom, g.level) {
        return Err(Error::GridMismatch("field grid does not cover the domain frame".into()));
    }
    if g.level <= sc.max_level {
        return Err(Error::GridMismatch(format!(
            "grid level {} must exceed max_level {} so every cube holds at least two nodes per axis",
            g.level, sc.max_level
        )));
    }
    let m = membership_mask(&g, &sc.dom);
    if m.iter().zip(v.mask.iter()).any(|(a, b)| (*a == NodeClass::Interior) != (*b == NodeClass::Interior)) {
        return Err(Error::GridMismatch("field mask does not match the domain".into()));
    }
    let stars = sc.stars();
    let fitted: Vec<Result<(usize, AffinePolynomial)>> = stars
        .par_iter()
        .map(|&s| fit_affine(v, &AffineRegion::cube(sc.w1.cubes[s])).map(|p| (s, p)))
        .collect();
    let mut by_star = HashMap::with_capacity(stars.len());
    for r in fitted {
        let (s, p) = r?;
        by_star.insert(s, p);
    }
    let fits: Vec<AffinePolynomial> = sc.refl.pairs.iter().map(|p| by_star[&p.star]).collect();
    let partial_fits = by_star.values().filter(|p| p.partial).count();

    let cells: Vec<(NodeClass, [f64; 3])> = (0..g.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            if v.mask[i] == NodeClass::Interior {
                let mut out = [0.0; 3];
                out[..n].copy_from_slice(v.at(i));
                return (NodeClass::Interior, out);
            }
            let x = g.point(i);
            let class = if sc.w2.locate(&x).is_some() { NodeClass::Exterior } else { NodeClass::Shell };
            sc.pu.eval_into(&x, buf);
            let (mut e, mut j) = ([0.0; 3], [0.0; 9]);
            assemble(buf, &fits, n, &x, &mut e, &mut j);
            (class, e)
        })
        .collect();
    let mut values = Vec::with_capacity(g.len() * n);
    let mut mask = Vec::with_capacity(g.len());
    for (c, e) in &cells {
        mask.push(*c);
        values.extend_from_slice(&e[..n]);
    }
    let shell_nodes = mask.iter().filter(|&&c| c == NodeClass::Shell).count();
    let ev = GridField { grid: g, ncomp: n, values, mask: Arc::new(mask) };
    Ok(ExtensionAssembly { scaffold: sc.clone(), v: v.clone(), fits, ev, shell_nodes, partial_fits })
}

/// Norms of `Ev` on every complement cube for several assemblies sharing one
/// scaffold, in one pass over the quadrature points. Result `[field][cube]`;
/// sums carry the quadrature weights, so read them with `lp(slot, 1.0)`.
pub fn exterior_norms_batch(asms: &[&ExtensionAssembly], p: f64) -> Result<Vec<Vec<LocalNorms>>> {
    let Some(first) = asms.first() else { return Ok(Vec::new()) };
    let sc = &first.scaffold;
    if asms.iter().any(|a| !Arc::ptr_eq(&a.scaffold, sc)) {
        return Err(Error::InvalidParam("batched assemblies must share one scaffold".into()));
    }
    let n = sc.dom.n;
    let per_cube: Vec<Vec<LocalNorms>> = (0..sc.w2.len())
        .into_par_iter()
        .map(|k| {
            let mut out = vec![LocalNorms::empty(p); asms.len()];
            let Some(rule) = &sc.rules[k] else { return out };
            let dims: Vec<usize> = (0..n).map(|a| rule.x[a].len()).collect();
            let total: usize = dims.iter().product();
            let mut buf = Vec::new();
            for t in 0..total {
                let mut x = [0.0; 3];
                let mut w = 1.0;
                let mut q = t;
                for a in 0..n {
                    let i = q % dims[a];
                    q /= dims[a];
                    x[a] = rule.x[a][i];
                    w *= rule.w[a][i];
                }
                sc.pu.eval_into(&x, &mut buf);
                for (f, asm) in asms.iter().enumerate() {
                    let (mut e, mut jac) = ([0.0; 3], [0.0; 9]);
                    assemble(&buf, &asm.fits, n, &x, &mut e, &mut jac);
                    let mut c = [0.0; 3];
                    let kc = curl_of(&jac, n, &mut c);
                    let vals = [magnitude(&e[..n]), div_of(&jac, n).abs(), magnitude(&c[..kc]), magnitude(&jac[..n * n])];
                    let o = &mut out[f];
                    o.nodes += 1;
                    for s in 0..4 {
                        if p.is_finite() && vals[s] > 0.0 {
                            o.sum[s] += w * vals[s].powf(p);
                        }
                        o.max[s] = o.max[s].max(vals[s]);
                    }
                }
            }
            out
        })
        .collect();
    let mut res = vec![Vec::with_capacity(sc.w2.len()); asms.len()];
    for cube in per_cube {
        for (f, nm) in cube.into_iter().enumerate() {
            res[f].push(nm);
        }
    }
    Ok(res)
}

/// Local estimate measurements on one complement cube. Slots follow
/// [`W3_TAGS`] or [`FAR_TAGS`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeReport {
    /// Id in W₂.
    pub id: usize,
    pub in_w3: bool,
    pub level: u8,
    pub lhs: [f64; 4],
    pub rhs: [f64; 4],
    pub ratio: [Option<f64>; 4],
    pub violation: bool,
    /// W₃ cubes entering the right-hand side.
    pub contributors: usize,
    /// Smallest `ℓ(Q_j)/ℓ(Q₀)` over contributors (1 when there are none).
    pub min_size_ratio: f64,
}

pub const W3_TAGS: [&str; 4] = ["(stima1)", "(stima2)", "(stima3)", "(stima4)"];
pub const FAR_TAGS: [&str; 4] = ["(stima1comp)", "(stima2comp)", "(stima3comp)", "(stima4comp)"];

/// Per-W₁-cube norms of `v` for the cubes any report needs.
pub fn source_norms(asm: &ExtensionAssembly, p: f64) -> HashMap<usize, LocalNorms> {
    let sc = &asm.scaffold;
    let mut ids: Vec<usize> = sc.f_sets.iter().flatten().copied().collect();
    ids.extend(sc.refl.pairs.iter().map(|q| q.star));
    ids.sort_unstable();
    ids.dedup();
    ids.par_iter().map(|&i| (i, local_norms(&asm.v, &sc.w1.cubes[i], p))).collect()
}

fn lhs_of(e: &LocalNorms) -> [f64; 4] {
    [e.lp(FIELD, 1.0), e.lp(CURL, 1.0) + e.lp(DIV, 1.0), e.linf(FIELD), e.linf(GRAD)]
}

/// Roundoff in `Σ_j c ∇φ_j` scales like `|c|` times the bump gradients,
/// which reach `n/(ℓ·ramp)` with a ramp of `1/32`.
fn derivative_scale(scale: f64, edge: f64, n: usize) -> f64 {
    scale * 32.0 * n as f64 / edge
}

#[allow(clippy::too_many_arguments)]
fn finish(id: usize, in_w3: bool, q0: &DyadicCube, n: usize, lhs: [f64; 4], rhs: [f64; 4], scale: f64, contributors: usize, min_size_ratio: f64) -> CubeReport {
    let level = q0.level;
    let ds = derivative_scale(scale, q0.edge(), n);
    let mut ratio = [None; 4];
    let mut violation = false;
    for s in 0..4 {
        let (r, v) = safe_ratio(lhs[s], rhs[s], if s % 2 == 1 { ds } else { scale });
        ratio[s] = r;
        violation |= v;
    }
    CubeReport { id, in_w3, level, lhs, rhs, ratio, violation, contributors, min_size_ratio }
}

/// Measurements for `Q₀ ∈ W₃` at position `j`.
pub fn per_cube_report_w3(asm: &ExtensionAssembly, ext: &[LocalNorms], src: &HashMap<usize, LocalNorms>, j: usize, p: f64) -> CubeReport {
    let sc = &asm.scaffold;
    let vol = asm.v.grid.cell_volume();
    let id = sc.w3_ids[j];
    let q0 = sc.w3[j];
    let star = &src[&sc.refl.pairs[j].star];
    let mut f = LocalNorms::empty(p);
    for i in &sc.f_sets[j] {
        f.merge(&src[i]);
    }
    let l = q0.edge();
    let dc = f.lp(CURL, vol) + f.lp(DIV, vol);
    let rhs = [star.lp(FIELD, vol) + l * dc, dc, star.linf(FIELD) + l * f.linf(GRAD), f.linf(GRAD)];
    let scale = f.linf(FIELD).max(f64::MIN_POSITIVE);
    finish(id, true, &q0, sc.dom.n, lhs_of(&ext[id]), rhs, scale, sc.touching[id].len(), 1.0)
}

/// Measurements for `Q₀ ∈ W₂∖W₃` with W₂ id `k`. With no touching W₃ cube
/// the cube must carry no bump at all, which is checked.
pub fn per_cube_report_far(asm: &ExtensionAssembly, ext: &[LocalNorms], src: &HashMap<usize, LocalNorms>, k: usize) -> CubeReport {
    let sc = &asm.scaffold;
    let vol = asm.v.grid.cell_volume();
    let q0 = sc.w2.cubes[k];
    let touch = &sc.touching[k];
    let lhs = lhs_of(&ext[k]);
    if touch.is_empty() {
        let zero = sc.contributors[k].is_empty() && lhs.iter().all(|x| *x == 0.0);
        let mut r = finish(k, false, &q0, sc.dom.n, lhs, [0.0; 4], 1.0, 0, 1.0);
        r.violation |= !zero;
        return r;
    }
    let (mut r1, mut r3, mut scale) = (0.0, 0.0, f64::MIN_POSITIVE);
    let mut min_size: f64 = f64::INFINITY;
    for &j in touch {
        let s = &src[&sc.refl.pairs[j].star];
        r1 += s.lp(FIELD, vol) + s.lp(CURL, vol) + s.lp(DIV, vol);
        r3 += s.linf(FIELD) + s.linf(GRAD);
        scale = scale.max(s.linf(FIELD));
        min_size = min_size.min(sc.w3[j].edge() / q0.edge());
    }
    let mut r = finish(k, false, &q0, sc.dom.n, lhs, [r1, r1, r3, r3], scale, touch.len(), min_size);
    // Every bump reaching the cube belongs to a touching W₃ cube.
    r.violation |= sc.contributors[k].iter().any(|j| touch.binary_search(j).is_err());
    r
}

/// `Ev` norms over the complement against `v` norms over Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub p: f64,
    /// `‖Ev‖ + ‖div Ev‖ + ‖curl Ev‖` over the covered complement.
    pub corol1_lhs: f64,
    /// `‖v‖ + ‖div v‖ + ‖curl v‖` over Ω.
    pub corol1_rhs: f64,
    pub corol1_ratio: Option<f64>,
    pub corol2_lhs: f64,
    pub corol2_rhs: f64,
    pub corol2_ratio: Option<f64>,
    pub violation: bool,
    /// Both sides vanish; the ratios are reported as 0 by convention.
    pub degenerate: bool,
}

pub fn global_report(asm: &ExtensionAssembly, ext: &[LocalNorms], p: f64) -> Result<GlobalReport> {
    let mut e = LocalNorms::empty(p);
    for nm in ext {
        e.merge(nm);
    }
    let lhs1 = e.lp(FIELD, 1.0) + e.lp(DIV, 1.0) + e.lp(CURL, 1.0);
    let lhs2 = w1p_combine(e.linf(FIELD), e.linf(GRAD), f64::INFINITY);
    let sel = Selector::whole(&asm.v.grid, Region::Interior);
    let rp = norm_report(&asm.v, p, &sel)?;
    let ri = norm_report(&asm.v, f64::INFINITY, &sel)?;
    let rhs1 = rp.lp_field + rp.lp_div + rp.lp_curl;
    let rhs2 = ri.w1p;
    let (c1, v1) = safe_ratio(lhs1, rhs1, 1.0);
    let (c2, v2) = safe_ratio(lhs2, rhs2, 1.0);
    Ok(GlobalReport {
        p,
        corol1_lhs: lhs1,
        corol1_rhs: rhs1,
        corol1_ratio: c1,
        corol2_lhs: lhs2,
        corol2_rhs: rhs2,
        corol2_ratio: c2,
        violation: v1 || v2,
        degenerate: rhs1 == 0.0 && rhs2 == 0.0,
    })
}

/// Largest ratio of one estimate and the cube attaining it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioExtreme {
    pub tag: String,
    pub max_ratio: f64,
    pub cube: Option<usize>,
    pub cubes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationLedger {
    pub shell_nodes: usize,
    pub truncated_interior_cells: usize,
    pub truncated_complement_cells: usize,
    pub partial_fits: usize,
    pub isolated_fit_nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub p: f64,
    pub w1_cubes: usize,
    pub w2_cubes: usize,
    pub w3_cubes: usize,
    pub max_chain_len: usize,
    pub overlap_max: usize,
    pub extremes: Vec<RatioExtreme>,
    pub global: GlobalReport,
    pub violations: Vec<usize>,
    /// Far cubes with a contributor smaller than a quarter of their size.
    pub size_bound_failures: Vec<usize>,
    pub truncation: TruncationLedger,
}

/// Relative floor under which a right-hand side is treated as noise when
/// taking the per-cube maximum.
pub const RHS_FLOOR: f64 = 1e-6;

fn extremes(reports: &[CubeReport], tags: &[&str; 4]) -> Vec<RatioExtreme> {
    (0..4)
        .map(|s| {
            let top = reports.iter().map(|r| r.rhs[s]).fold(0.0, f64::max);
            let mut best = RatioExtreme { tag: tags[s].to_string(), max_ratio: 0.0, cube: None, cubes: reports.len() };
            for r in reports {
                if r.rhs[s] < RHS_FLOOR * top {
                    continue;
                }
                if let Some(x) = r.ratio[s] {
                    if x > best.max_ratio {
                        best.max_ratio = x;
                        best.cube = Some(r.id);
                    }
                }
            }
            best
        })
        .collect()
}

impl ExtensionAssembly {
    pub fn cube_reports(&self, ext: &[LocalNorms], p: f64) -> (Vec<CubeReport>, Vec<CubeReport>) {
        let sc = &self.scaffold;
        let src = source_norms(self, p);
        let near: Vec<CubeReport> =
            (0..sc.w3.len()).into_par_iter().map(|j| per_cube_report_w3(self, ext, &src, j, p)).collect();
        let far: Vec<CubeReport> = (0..sc.w2.len())
            .into_par_iter()
            .filter(|&k| sc.w3_pos[k].is_none())
            .map(|k| per_cube_report_far(self, ext, &src, k))
            .collect();
        (near, far)
    }

    pub fn report_with(&self, ext: &[LocalNorms], p: f64) -> Result<ExtensionReport> {
        let sc = &self.scaffold;
        let (near, far) = self.cube_reports(ext, p);
        let mut ex = extremes(&near, &W3_TAGS);
        ex.extend(extremes(&far, &FAR_TAGS));
        let violations = near.iter().chain(&far).filter(|r| r.violation).map(|r| r.id).collect();
        let size_bound_failures = far.iter().filter(|r| r.min_size_ratio < 0.25).map(|r| r.id).collect();
        Ok(ExtensionReport {
            p,
            w1_cubes: sc.w1.len(),
            w2_cubes: sc.w2.len(),
            w3_cubes: sc.w3.len(),
            max_chain_len: sc.chains.max_len,
            overlap_max: sc.overlap.max_multiplicity,
            extremes: ex,
            global: global_report(self, ext, p)?,
            violations,
            size_bound_failures,
            truncation: TruncationLedger {
                shell_nodes: self.shell_nodes,
                truncated_interior_cells: sc.w1.truncated.len(),
                truncated_complement_cells: sc.w2.truncated.len(),
                partial_fits: self.partial_fits,
                isolated_fit_nodes: self.fits.iter().map(|f| f.isolated).sum(),
            },
        })
    }

    pub fn exterior_norms(&self, p: f64) -> Result<Vec<LocalNorms>> {
        Ok(exterior_norms_batch(&[self], p)?.pop().unwrap_or_default())
    }

    pub fn report(&self, p: f64) -> Result<ExtensionReport> {
        let ext = self.exterior_norms(p)?;
        self.report_with(&ext, p)
    }

    /// Value of `Ev` at any point (`v` itself is not interpolated: points of Ω
    /// are rejected).
    pub fn eval_outside(&self, x: &Point) -> Result<[f64; 3]> {
        if self.scaffold.dom.contains(x) {
            return Err(Error::InvalidParam("point lies in the domain".into()));
        }
        let phis = self.scaffold.pu.eval(x);
        let (mut e, mut j) = ([0.0; 3], [0.0; 9]);
        assemble(&phis, &self.fits, self.scaffold.dom.n, x, &mut e, &mut j);
        Ok(e)
    }
}
