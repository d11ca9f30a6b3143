//! Whitney decompositions of the domain and of its complement inside the
//! bounding box, built from exact dyadic cubes.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};

/// Cube `2^-L · ([k₁, k₁+1] × … × [kₙ, kₙ+1])`. Unused axes have index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u8,
    pub index: [i64; 3],
}

#[inline]
pub fn dyadic(level: u8) -> f64 {
    0.5f64.powi(level as i32)
}

impl DyadicCube {
    pub fn new(level: u8, index: [i64; 3]) -> Self {
        DyadicCube { level, index }
    }

    /// Edge length `2^-L`.
    #[inline]
    pub fn edge(&self) -> f64 {
        dyadic(self.level)
    }

    #[inline]
    pub fn lo(&self, n: usize) -> Point {
        let l = self.edge();
        let mut p = [0.0; 3];
        for a in 0..n {
            p[a] = self.index[a] as f64 * l;
        }
        p
    }

    #[inline]
    pub fn hi(&self, n: usize) -> Point {
        let l = self.edge();
        let mut p = [0.0; 3];
        for a in 0..n {
            p[a] = (self.index[a] + 1) as f64 * l;
        }
        p
    }

    /// Barycenter.
    #[inline]
    pub fn center(&self, n: usize) -> Point {
        let l = self.edge();
        let mut p = [0.0; 3];
        for a in 0..n {
            p[a] = (self.index[a] as f64 + 0.5) * l;
        }
        p
    }

    pub fn children(&self, n: usize) -> Vec<DyadicCube> {
        let mut out = Vec::with_capacity(1 << n);
        for m in 0..(1usize << n) {
            let mut idx = [0i64; 3];
            for a in 0..n {
                idx[a] = 2 * self.index[a] + ((m >> a) & 1) as i64;
            }
            out.push(DyadicCube::new(self.level + 1, idx));
        }
        out
    }

    /// Integer extent `[lo, hi)` in units of `2^-level`, for `level >= self.level`.
    #[inline]
    pub fn span_at(&self, level: u8, n: usize) -> ([i64; 3], [i64; 3]) {
        let s = 1i64 << (level - self.level);
        let mut lo = [0i64; 3];
        let mut hi = [1i64; 3];
        for a in 0..n {
            lo[a] = self.index[a] * s;
            hi[a] = (self.index[a] + 1) * s;
        }
        (lo, hi)
    }

    /// Squared gap between two closed cubes, in units of `2^-level` where
    /// `level` is the finer of the two.
    pub fn gap2(&self, other: &DyadicCube, n: usize) -> i64 {
        let f = self.level.max(other.level);
        let (alo, ahi) = self.span_at(f, n);
        let (blo, bhi) = other.span_at(f, n);
        let mut s = 0i64;
        for a in 0..n {
            let g = (blo[a] - ahi[a]).max(alo[a] - bhi[a]).max(0);
            s += g * g;
        }
        s
    }

    /// Euclidean distance between the closed cubes.
    pub fn distance(&self, other: &DyadicCube, n: usize) -> f64 {
        let f = self.level.max(other.level);
        (self.gap2(other, n) as f64).sqrt() * dyadic(f)
    }

    /// Closed cubes intersect (faces, edges and corners count).
    pub fn touches(&self, other: &DyadicCube, n: usize) -> bool {
        self.gap2(other, n) == 0
    }

    /// Interiors overlap.
    pub fn overlaps(&self, other: &DyadicCube, n: usize) -> bool {
        let f = self.level.max(other.level);
        let (alo, ahi) = self.span_at(f, n);
        let (blo, bhi) = other.span_at(f, n);
        (0..n).all(|a| alo[a] < bhi[a] && blo[a] < ahi[a])
    }

    pub fn contains_point(&self, p: &Point, n: usize) -> bool {
        let (lo, hi) = (self.lo(n), self.hi(n));
        (0..n).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Decompose Ω.
    Interior,
    /// Decompose the interior of Ωᶜ within the bounding box.
    Complement,
}

const NONE: u32 = u32::MAX;

/// Dense map from finest-level cells to the cube covering them.
#[derive(Debug, Clone)]
pub struct OwnerGrid {
    pub level: u8,
    lo: [i64; 3],
    dims: [usize; 3],
    cells: Vec<u32>,
}

impl OwnerGrid {
    fn new(dom: &Domain, level: u8) -> Self {
        let s = (1i64 << level) as f64;
        let mut lo = [0i64; 3];
        let mut dims = [1usize; 3];
        for a in 0..dom.n {
            lo[a] = (dom.bbox.lo[a] * s).floor() as i64 - 1;
            let hi = (dom.bbox.hi[a] * s).ceil() as i64 + 1;
            dims[a] = (hi - lo[a]) as usize;
        }
        OwnerGrid { level, lo, dims, cells: vec![NONE; dims[0] * dims[1] * dims[2]] }
    }

    #[inline]
    fn slot(&self, c: [i64; 3]) -> Option<usize> {
        let mut off = [0usize; 3];
        for a in 0..3 {
            let r = c[a] - self.lo[a];
            if r < 0 || r >= self.dims[a] as i64 {
                return None;
            }
            off[a] = r as usize;
        }
        Some((off[2] * self.dims[1] + off[1]) * self.dims[0] + off[0])
    }

    /// Owner of the finest cell with integer index `c`.
    #[inline]
    pub fn get(&self, c: [i64; 3]) -> Option<usize> {
        self.slot(c).and_then(|s| {
            let v = self.cells[s];
            (v != NONE).then_some(v as usize)
        })
    }

    /// Writes `id` on every cell of `cube` inside the grid; returns how many
    /// cells were already owned.
    fn fill(&mut self, cube: &DyadicCube, id: u32, n: usize) -> usize {
        let (lo, hi) = cube.span_at(self.level, n);
        let mut clashes = 0;
        for z in lo[2].max(self.lo[2])..hi[2].min(self.lo[2] + self.dims[2] as i64) {
            for y in lo[1].max(self.lo[1])..hi[1].min(self.lo[1] + self.dims[1] as i64) {
                for x in lo[0].max(self.lo[0])..hi[0].min(self.lo[0] + self.dims[0] as i64) {
                    let s = self.slot([x, y, z]).unwrap();
                    if self.cells[s] != NONE {
                        clashes += 1;
                    }
                    self.cells[s] = id;
                }
            }
        }
        clashes
    }
}

#[derive(Debug, Clone)]
pub struct WhitneyDecomposition {
    pub n: usize,
    pub side: Side,
    pub max_level: u8,
    pub min_level: u8,
    /// Accepted cubes sorted by `(level, index)`.
    pub cubes: Vec<DyadicCube>,
    /// Exact distance from each cube to `∂Ω`.
    pub dist: Vec<f64>,
    /// Touching cubes (closed intersection), ascending ids.
    pub adjacency: Vec<Vec<u32>>,
    /// Cells at `max_level` that would need further subdivision.
    pub truncated: Vec<DyadicCube>,
    /// Finest cells claimed by two cubes while filling the owner grid.
    pub overlap_cells: usize,
    owner: OwnerGrid,
    lookup: HashMap<DyadicCube, u32>,
}

enum Verdict {
    Accept,
    Discard,
    Truncate,
    Split,
}

/// Builds a Whitney decomposition by dyadic refinement down to `max_level`.
///
/// A cell is accepted when its center lies on the requested side and
/// `d(center) ≥ (1 + √n/2)·ℓ`; a cell whose center lies on the other side with
/// `d(center) ≥ √n·ℓ/2` is discarded; anything else is split, or logged as
/// truncated at `max_level`.
pub fn whitney_decompose(dom: &Domain, side: Side, max_level: u8) -> Result<WhitneyDecomposition> {
    let n = dom.n;
    let cap = if n == 2 { 13 } else { 8 };
    if max_level < 2 || max_level > cap {
        return Err(Error::InvalidParam(format!("max_level must lie in [2, {cap}] for n = {n}, got {max_level}")));
    }
    let rn = (n as f64).sqrt();
    let mut roots = Vec::new();
    let (mut lo, mut hi) = ([0i64; 3], [1i64; 3]);
    for a in 0..n {
        lo[a] = dom.bbox.lo[a].floor() as i64;
        hi[a] = dom.bbox.hi[a].ceil() as i64;
    }
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            for x in lo[0]..hi[0] {
                roots.push(DyadicCube::new(0, [x, y, z]));
            }
        }
    }
    let meets_bbox = |c: &DyadicCube| {
        let (l, h) = (c.lo(n), c.hi(n));
        (0..n).all(|a| l[a] < dom.bbox.hi[a] && h[a] > dom.bbox.lo[a])
    };
    let mut frontier: Vec<DyadicCube> = roots.into_iter().filter(meets_bbox).collect();
    let mut accepted = Vec::new();
    let mut truncated = Vec::new();
    let mut level = 0u8;
    while !frontier.is_empty() {
        let verdicts: Vec<Verdict> = frontier
            .par_iter()
            .map(|c| {
                let l = c.edge();
                let p = c.center(n);
                let on_side = dom.contains(&p) == (side == Side::Interior);
                let d = dom.boundary_distance(&p);
                if on_side && d >= (1.0 + 0.5 * rn) * l {
                    Verdict::Accept
                } else if !on_side && d >= 0.5 * rn * l {
                    Verdict::Discard
                } else if level == max_level {
                    Verdict::Truncate
                } else {
                    Verdict::Split
                }
            })
            .collect();
        let mut next = Vec::new();
        for (c, v) in frontier.iter().zip(verdicts) {
            match v {
                Verdict::Accept => accepted.push(*c),
                Verdict::Discard => {}
                Verdict::Truncate => truncated.push(*c),
                Verdict::Split => next.extend(c.children(n).into_iter().filter(meets_bbox)),
            }
        }
        frontier = next;
        level += 1;
    }
    accepted.sort();
    truncated.sort();
    if accepted.is_empty() {
        return Err(Error::NoDecomposition(format!(
            "no cube accepted for {:?} side of {} at max_level {max_level}",
            side,
            dom.label()
        )));
    }
    let dist: Vec<f64> = accepted
        .par_iter()
        .map(|c| dom.box_boundary_distance(&c.lo(n), &c.hi(n)))
        .collect();
    if let Some(i) = dist.iter().position(|&d| d <= 0.0) {
        return Err(Error::InconsistentMembership(format!(
            "accepted cube {:?} meets the boundary",
            accepted[i]
        )));
    }
    let mut owner = OwnerGrid::new(dom, max_level);
    let mut overlap_cells = 0;
    for (i, c) in accepted.iter().enumerate() {
        overlap_cells += owner.fill(c, i as u32, n);
    }
    let adjacency = build_adjacency(&accepted, &owner, n);
    let lookup = accepted.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
    let min_level = accepted.iter().map(|c| c.level).min().unwrap_or(0);
    Ok(WhitneyDecomposition {
        n,
        side,
        max_level,
        min_level,
        cubes: accepted,
        dist,
        adjacency,
        truncated,
        overlap_cells,
        owner,
        lookup,
    })
}

fn build_adjacency(cubes: &[DyadicCube], owner: &OwnerGrid, n: usize) -> Vec<Vec<u32>> {
    cubes
        .par_iter()
        .enumerate()
        .map(|(id, c)| {
            let (lo, hi) = c.span_at(owner.level, n);
            let mut nb = Vec::new();
            let mut push = |cell: [i64; 3]| {
                if let Some(o) = owner.get(cell) {
                    if o != id {
                        nb.push(o as u32);
                    }
                }
            };
            // Enumerate the one-cell halo around the cube's footprint.
            let zr = if n == 3 { (lo[2] - 1)..(hi[2] + 1) } else { 0..1 };
            for z in zr {
                let zin = n == 2 || (z >= lo[2] && z < hi[2]);
                for y in (lo[1] - 1)..(hi[1] + 1) {
                    let yin = y >= lo[1] && y < hi[1];
                    if zin && yin {
                        push([lo[0] - 1, y, z]);
                        push([hi[0], y, z]);
                    } else {
                        for x in (lo[0] - 1)..(hi[0] + 1) {
                            push([x, y, z]);
                        }
                    }
                }
            }
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect()
}

/// Result of re-checking (w1)–(w3) on a decomposition.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WhitneyCheck {
    pub cubes: usize,
    pub min_dist_ratio: f64,
    pub max_dist_ratio: f64,
    /// Cubes violating `1 ≤ dist/ℓ ≤ 4√n`.
    pub w1_violations: Vec<usize>,
    /// Finest cells covered twice.
    pub w2_violations: usize,
    /// Touching pairs with size ratio outside `[1/4, 4]`.
    pub w3_violations: Vec<(usize, usize)>,
    /// Adjacency entries that fail the exact touch test.
    pub adjacency_errors: usize,
}

impl WhitneyCheck {
    pub fn ok(&self) -> bool {
        self.w1_violations.is_empty()
            && self.w2_violations == 0
            && self.w3_violations.is_empty()
            && self.adjacency_errors == 0
    }

    /// Labels of the violated properties.
    pub fn violated_tags(&self) -> Vec<&'static str> {
        let mut t = Vec::new();
        if !self.w1_violations.is_empty() {
            t.push("(w1)");
        }
        if self.w2_violations > 0 {
            t.push("(w2)");
        }
        if !self.w3_violations.is_empty() || self.adjacency_errors > 0 {
            t.push("(w3)");
        }
        t
    }
}

/// Relative slack allowed on the (w1) bounds for floating distance evaluation.
pub const W1_TOL: f64 = 1e-12;

impl WhitneyDecomposition {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn id_of(&self, c: &DyadicCube) -> Option<usize> {
        self.lookup.get(c).map(|&i| i as usize)
    }

    /// Cube containing `p` (points on shared faces resolve to one of them).
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let s = (1i64 << self.owner.level) as f64;
        let mut c = [0i64; 3];
        for a in 0..self.n {
            c[a] = (p[a] * s).floor() as i64;
        }
        self.owner.get(c)
    }

    /// Owner of a finest-level cell index.
    pub fn owner_of_cell(&self, cell: [i64; 3]) -> Option<usize> {
        self.owner.get(cell)
    }

    pub fn cubes_per_level(&self) -> Vec<(u8, usize)> {
        let mut m = std::collections::BTreeMap::new();
        for c in &self.cubes {
            *m.entry(c.level).or_insert(0) += 1;
        }
        m.into_iter().collect()
    }

    /// Re-verifies (w1)–(w3) with exact box distances and exact touch tests.
    pub fn check(&self) -> WhitneyCheck {
        let n = self.n;
        let upper = 4.0 * (n as f64).sqrt();
        let mut chk = WhitneyCheck {
            cubes: self.cubes.len(),
            min_dist_ratio: f64::INFINITY,
            max_dist_ratio: 0.0,
            w2_violations: self.overlap_cells,
            ..Default::default()
        };
        for (i, c) in self.cubes.iter().enumerate() {
            let r = self.dist[i] / c.edge();
            chk.min_dist_ratio = chk.min_dist_ratio.min(r);
            chk.max_dist_ratio = chk.max_dist_ratio.max(r);
            if r < 1.0 - W1_TOL || r > upper * (1.0 + W1_TOL) {
                chk.w1_violations.push(i);
            }
            for &j in &self.adjacency[i] {
                let j = j as usize;
                let d = &self.cubes[j];
                if !c.touches(d, n) {
                    chk.adjacency_errors += 1;
                }
                if i < j && (c.level as i32 - d.level as i32).abs() > 2 {
                    chk.w3_violations.push((i, j));
                }
                if c.overlaps(d, n) {
                    chk.w2_violations += 1;
                }
            }
        }
        chk
    }

    /// Shortest path in the touching-cube graph, as cube ids from `a` to `b`.
    pub fn path(&self, a: usize, b: usize) -> Result<Vec<usize>> {
        if a == b {
            return Ok(vec![a]);
        }
        let mut parent = vec![u32::MAX; self.cubes.len()];
        parent[a] = a as u32;
        let mut q = VecDeque::from([a]);
        while let Some(u) = q.pop_front() {
            for &v in &self.adjacency[u] {
                let v = v as usize;
                if parent[v] == u32::MAX {
                    parent[v] = u as u32;
                    if v == b {
                        let mut path = vec![b];
                        let mut w = b;
                        while w != a {
                            w = parent[w] as usize;
                            path.push(w);
                        }
                        path.reverse();
                        return Ok(path);
                    }
                    q.push_back(v);
                }
            }
        }
        Err(Error::Disconnected)
    }

    /// Test hook: shrinks one cube with neighbours to an eighth of its size,
    /// leaving the adjacency stale so that the checker sees the size jump.
    pub fn inject_size_fault(&mut self) -> Option<usize> {
        let i = (0..self.cubes.len()).find(|&i| !self.adjacency[i].is_empty())?;
        let c = self.cubes[i];
        let mut idx = c.index;
        for a in 0..self.n {
            idx[a] *= 8;
        }
        self.cubes[i] = DyadicCube::new(c.level + 3, idx);
        Some(i)
    }

    /// CSV dump with one row per cube: level, indices, ℓ, distance, W₃ flag.
    pub fn write_csv<W: Write>(&self, out: W, in_w3: &dyn Fn(usize) -> bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let axes = ["k1", "k2", "k3"];
        let mut header = vec!["level".to_string()];
        header.extend(axes[..self.n].iter().map(|s| s.to_string()));
        header.extend(["edge", "dist_to_boundary", "in_w3"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (i, c) in self.cubes.iter().enumerate() {
            let mut rec = vec![c.level.to_string()];
            rec.extend(c.index[..self.n].iter().map(|k| k.to_string()));
            rec.push(format!("{:e}", c.edge()));
            rec.push(format!("{:.17e}", self.dist[i]));
            rec.push((in_w3(i) as u8).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Size threshold `εδ/(16n)` defining W₃.
pub fn w3_threshold(dom: &Domain) -> f64 {
    dom.epsilon * dom.delta / (16.0 * dom.n as f64)
}

/// Ids of the cubes of `w2` with `ℓ ≤ εδ/(16n)`, in decomposition order.
pub fn select_w3_ids(w2: &WhitneyDecomposition, dom: &Domain) -> Vec<usize> {
    assert_eq!(w2.side, Side::Complement, "W3 is selected from the complement decomposition");
    let t = w3_threshold(dom);
    (0..w2.cubes.len()).filter(|&i| w2.cubes[i].edge() <= t).collect()
}

/// The cubes of `w2` with `ℓ ≤ εδ/(16n)`.
pub fn select_w3(w2: &WhitneyDecomposition, dom: &Domain) -> Vec<DyadicCube> {
    select_w3_ids(w2, dom).into_iter().map(|i| w2.cubes[i]).collect()
}
