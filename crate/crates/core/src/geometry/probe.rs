//! Empirical check of the (ε, δ) condition.
//!
//! For sampled pairs `x, y` with `|x − y| < δ` a handful of candidate arcs is
//! tried: the straight segment, tents over the segment, and a shortest path
//! through the touching-cube graph of an interior Whitney decomposition (raw
//! and greedily straightened). Each admissible arc `γ` implies
//! `ε(γ) = min(|x−y|/ℓ(γ), min_z d(z)|x−y| / (|x−z||y−z|))`; the best arc is
//! kept per pair and the worst pair is reported. The result bounds the
//! achievable ε from above; it certifies nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Domain, Point};
use crate::error::{Error, Result};
use crate::whitney::{Side, WhitneyDecomposition};

/// Samples taken on each polyline segment when evaluating the cigar ratio.
const CIGAR_SAMPLES: usize = 48;
const TENT_DEGREES: [f64; 3] = [15.0, 30.0, 45.0];
/// Ring radius, in finest cells, searched for a cube near an uncovered point.
const LOCATE_RADIUS: i64 = 6;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProbeWitness {
    pub x: Point,
    pub y: Point,
    pub distance: f64,
    pub path: String,
    pub length_ratio: f64,
    pub cigar_epsilon: f64,
    pub implied_epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProbeReport {
    pub pairs: usize,
    /// Largest `ℓ(γ)/|x−y|` over the pairs, for the arc chosen per pair.
    pub worst_length_ratio: f64,
    /// Smallest cigar ε over the pairs, for the arc chosen per pair.
    pub worst_cigar_ratio: f64,
    /// Smallest `min(1/length ratio, cigar ε)` over the pairs.
    pub implied_epsilon: f64,
    /// Pairs for which no candidate arc stayed inside the domain.
    pub unresolved: usize,
    /// The five worst pairs, worst first.
    pub witnesses: Vec<ProbeWitness>,
}

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn lerp(a: &Point, b: &Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

fn polyline_len(p: &[Point]) -> f64 {
    p.windows(2).map(|w| dist(&w[0], &w[1])).sum()
}

fn admissible(dom: &Domain, p: &[Point]) -> bool {
    p.windows(2).all(|w| dom.segment_inside(&w[0], &w[1]))
}

/// `min_z d(z)|x−y| / (|x−z||y−z|)` over samples of the polyline.
fn cigar(dom: &Domain, p: &[Point]) -> f64 {
    let x = p[0];
    let y = *p.last().unwrap();
    let dxy = dist(&x, &y);
    let mut worst = f64::INFINITY;
    for w in p.windows(2) {
        for s in 0..=CIGAR_SAMPLES {
            let z = lerp(&w[0], &w[1], s as f64 / CIGAR_SAMPLES as f64);
            let denom = dist(&x, &z) * dist(&y, &z);
            if denom > 0.0 {
                worst = worst.min(dom.boundary_distance(&z) * dxy / denom);
            }
        }
    }
    worst
}

/// Greedy shortcutting: from each vertex jump to the farthest visible one.
fn straighten(dom: &Domain, p: &[Point]) -> Vec<Point> {
    let mut out = vec![p[0]];
    let mut i = 0;
    while i + 1 < p.len() {
        let mut j = p.len() - 1;
        while j > i + 1 && !dom.segment_inside(&p[i], &p[j]) {
            j -= 1;
        }
        out.push(p[j]);
        i = j;
    }
    out
}

fn perpendiculars(n: usize, d: &Point) -> Vec<Point> {
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let u = [d[0] / len, d[1] / len, d[2] / len];
    if n == 2 {
        return vec![[-u[1], u[0], 0.0], [u[1], -u[0], 0.0]];
    }
    // Any unit vector not parallel to u, orthogonalized, plus u × v.
    let seed = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = seed[0] * u[0] + seed[1] * u[1] + seed[2] * u[2];
    let mut v = [seed[0] - dot * u[0], seed[1] - dot * u[1], seed[2] - dot * u[2]];
    let vl = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.iter_mut().for_each(|c| *c /= vl);
    let w = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let neg = |a: Point| [-a[0], -a[1], -a[2]];
    vec![v, neg(v), w, neg(w)]
}

fn nearest_cube(w: &WhitneyDecomposition, p: &Point) -> Option<usize> {
    if let Some(c) = w.locate(p) {
        return Some(c);
    }
    let s = (1i64 << w.max_level) as f64;
    let mut c = [0i64; 3];
    for a in 0..w.n {
        c[a] = (p[a] * s).floor() as i64;
    }
    let zr = if w.n == 3 { 1 } else { 0 };
    for r in 1..=LOCATE_RADIUS {
        let mut best: Option<(f64, usize)> = None;
        for dz in -r * zr..=r * zr {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    if let Some(id) = w.owner_of_cell([c[0] + dx, c[1] + dy, c[2] + dz]) {
                        let d = dist(p, &w.cubes[id].center(w.n));
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, id));
                        }
                    }
                }
            }
        }
        if let Some((_, id)) = best {
            return Some(id);
        }
    }
    None
}

fn sample_point(dom: &Domain, rng: &mut ChaCha8Rng) -> Point {
    loop {
        let mut p = [0.0; 3];
        for a in 0..dom.n {
            p[a] = dom.bbox.lo[a] + (dom.bbox.hi[a] - dom.bbox.lo[a]) * rng.random::<f64>();
        }
        if dom.contains(&p) {
            return p;
        }
    }
}

fn best_arc(dom: &Domain, w: &WhitneyDecomposition, x: Point, y: Point) -> Option<ProbeWitness> {
    let dxy = dist(&x, &y);
    let mut cands: Vec<(String, Vec<Point>)> = vec![("segment".into(), vec![x, y])];
    let mid = lerp(&x, &y, 0.5);
    let d = [y[0] - x[0], y[1] - x[1], y[2] - x[2]];
    for deg in TENT_DEGREES {
        let h = 0.5 * dxy * deg.to_radians().tan();
        for (k, nrm) in perpendiculars(dom.n, &d).iter().enumerate() {
            let apex = [mid[0] + h * nrm[0], mid[1] + h * nrm[1], mid[2] + h * nrm[2]];
            cands.push((format!("tent{deg}/{k}"), vec![x, apex, y]));
        }
    }
    if let (Some(a), Some(b)) = (nearest_cube(w, &x), nearest_cube(w, &y)) {
        if let Ok(path) = w.path(a, b) {
            let mut pts = vec![x];
            pts.extend(path.iter().map(|&c| w.cubes[c].center(w.n)));
            pts.push(y);
            let straight = straighten(dom, &pts);
            cands.push(("cube_path".into(), pts));
            cands.push(("cube_path_straightened".into(), straight));
        }
    }
    let mut best: Option<ProbeWitness> = None;
    for (name, p) in cands {
        if !admissible(dom, &p) {
            continue;
        }
        let length_ratio = polyline_len(&p) / dxy;
        let cigar_epsilon = cigar(dom, &p);
        let implied = (1.0 / length_ratio).min(cigar_epsilon);
        if best.as_ref().is_none_or(|b| implied > b.implied_epsilon) {
            best = Some(ProbeWitness {
                x,
                y,
                distance: dxy,
                path: name,
                length_ratio,
                cigar_epsilon,
                implied_epsilon: implied,
            });
        }
    }
    best
}

/// Samples `pair_count` pairs with `|x − y| < δ` and reports the worst
/// empirical ε. `w` must be an interior decomposition of `dom`.
pub fn epsilon_delta_probe(
    dom: &Domain,
    w: &WhitneyDecomposition,
    pair_count: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if pair_count == 0 {
        return Err(Error::InvalidParam("pair_count must be at least 1".into()));
    }
    if w.side != Side::Interior || w.is_empty() || w.n != dom.n {
        return Err(Error::NoDecomposition("the probe needs a non-empty interior decomposition".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(pair_count);
    while pairs.len() < pair_count {
        let x = sample_point(dom, &mut rng);
        let y = sample_point(dom, &mut rng);
        let d = dist(&x, &y);
        if d > 0.0 && d < dom.delta {
            pairs.push((x, y));
        }
    }
    let results: Vec<Option<ProbeWitness>> =
        pairs.par_iter().map(|&(x, y)| best_arc(dom, w, x, y)).collect();
    let unresolved = results.iter().filter(|r| r.is_none()).count();
    let mut found: Vec<ProbeWitness> = results.into_iter().flatten().collect();
    let worst_length_ratio = found.iter().map(|r| r.length_ratio).fold(0.0, f64::max);
    let worst_cigar_ratio = found.iter().map(|r| r.cigar_epsilon).fold(f64::INFINITY, f64::min);
    let implied_epsilon = found.iter().map(|r| r.implied_epsilon).fold(f64::INFINITY, f64::min);
    found.sort_by(|a, b| a.implied_epsilon.total_cmp(&b.implied_epsilon));
    found.truncate(5);
    Ok(ProbeReport {
        pairs: pair_count,
        worst_length_ratio,
        worst_cigar_ratio,
        implied_epsilon: if unresolved > 0 { 0.0 } else { implied_epsilon },
        unresolved,
        witnesses: found,
    })
}
