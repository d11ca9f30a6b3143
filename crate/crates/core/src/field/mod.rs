//! Grid-sampled fields, discrete differential operators, norms and test-field
//! generators.

pub mod generate;
pub mod io;
pub mod ops;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};

/// Uniform node-centred grid aligned with the dyadic cells of `level`:
/// node `i` along an axis sits at `(start + i + ½)·h`, `h = 2^-level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub level: u8,
    pub start: [i64; 3],
    pub dims: [usize; 3],
}

impl Grid {
    /// Smallest grid of this level whose cells cover the bounding box.
    pub fn covering(dom: &Domain, level: u8) -> Self {
        let s = (1i64 << level) as f64;
        let mut start = [0i64; 3];
        let mut dims = [1usize; 3];
        for a in 0..dom.n {
            start[a] = (dom.bbox.lo[a] * s).floor() as i64;
            let end = (dom.bbox.hi[a] * s).ceil() as i64;
            dims[a] = (end - start[a]) as usize;
        }
        Grid { n: dom.n, level, start, dims }
    }

    #[inline]
    pub fn h(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Volume element `hⁿ`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    #[inline]
    pub fn flat(&self, i: [usize; 3]) -> usize {
        (i[2] * self.dims[1] + i[1]) * self.dims[0] + i[0]
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let r = idx / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Coordinate of node `i` along `axis`; exact in binary arithmetic.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if axis >= self.n {
            return 0.0;
        }
        (2 * (self.start[axis] + i as i64) + 1) as f64 * (0.5 * self.h())
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let i = self.unflat(idx);
        [self.coord(0, i[0]), self.coord(1, i[1]), self.coord(2, i[2])]
    }

    /// Coordinate of node 0.
    pub fn origin(&self) -> Point {
        [self.coord(0, 0), self.coord(1, 0), self.coord(2, 0)]
    }

    /// Index of the dyadic cell of `level <= self.level` containing node `idx`.
    #[inline]
    pub fn cell_of(&self, idx: usize, level: u8) -> [i64; 3] {
        let i = self.unflat(idx);
        let shift = self.level - level;
        let mut c = [0i64; 3];
        for a in 0..self.n {
            c[a] = (self.start[a] + i[a] as i64) >> shift;
        }
        c
    }

    /// Node index range `[lo, hi)` of the nodes inside the closed box, clipped.
    pub fn node_range(&self, lo: &Point, hi: &Point) -> ([usize; 3], [usize; 3]) {
        let mut a0 = [0usize; 3];
        let mut a1 = [1usize; 3];
        let h = self.h();
        for a in 0..self.n {
            let first = ((lo[a] / h - 0.5).ceil() as i64 - self.start[a]).max(0);
            let last = ((hi[a] / h - 0.5).floor() as i64 - self.start[a]).min(self.dims[a] as i64 - 1);
            a0[a] = first as usize;
            a1[a] = (last + 1).max(first) as usize;
        }
        (a0, a1)
    }

    /// Domain membership of every node, by row scans.
    pub fn membership(&self, dom: &Domain) -> Vec<bool> {
        let mut out = vec![false; self.len()];
        let nx = self.dims[0];
        let h = self.h();
        out.par_chunks_mut(nx).enumerate().for_each(|(row, chunk)| {
            let j = row % self.dims[1];
            let k = row / self.dims[1];
            dom.classify_row(self.coord(1, j), self.coord(2, k), self.coord(0, 0), h, chunk);
        });
        out
    }
}

/// Classification of grid nodes relative to the domain and the complement cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    /// In Ω.
    Interior,
    /// Outside Ω and covered by a complement Whitney cube (or any outside node
    /// when no decomposition is attached).
    Exterior,
    /// Outside Ω in the uncovered truncation shell.
    Shell,
}

/// Which node classes take part in a difference stencil or a norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Interior,
    Exterior,
    /// Interior or exterior; shell excluded.
    Covered,
    All,
}

impl Region {
    #[inline]
    pub fn admits(self, c: NodeClass) -> bool {
        match self {
            Region::Interior => c == NodeClass::Interior,
            Region::Exterior => c == NodeClass::Exterior,
            Region::Covered => c != NodeClass::Shell,
            Region::All => true,
        }
    }
}

/// A node selection: a class filter intersected with a box of node indices,
/// optionally united with a second box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selector {
    pub region: Region,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub alt: Option<([usize; 3], [usize; 3])>,
}

#[inline]
fn in_box(i: [usize; 3], lo: &[usize; 3], hi: &[usize; 3]) -> bool {
    (0..3).all(|a| i[a] >= lo[a] && i[a] < hi[a])
}

impl Selector {
    pub fn whole(grid: &Grid, region: Region) -> Self {
        Selector { region, lo: [0; 3], hi: grid.dims, alt: None }
    }

    /// Nodes of the region inside the closed box `[lo, hi]`.
    pub fn boxed(grid: &Grid, region: Region, lo: &Point, hi: &Point) -> Self {
        let (a, b) = grid.node_range(lo, hi);
        Selector { region, lo: a, hi: b, alt: None }
    }

    /// Adds the nodes inside a second closed box.
    pub fn with_box(mut self, grid: &Grid, lo: &Point, hi: &Point) -> Self {
        self.alt = Some(grid.node_range(lo, hi));
        self
    }

    #[inline]
    pub fn admits(&self, i: [usize; 3], class: NodeClass) -> bool {
        self.region.admits(class)
            && (in_box(i, &self.lo, &self.hi) || self.alt.is_some_and(|(l, h)| in_box(i, &l, &h)))
    }

    /// Flat indices of the selected nodes, in node order.
    pub fn nodes(&self, grid: &Grid, mask: &[NodeClass]) -> Vec<usize> {
        let mut out = Vec::new();
        let boxes = std::iter::once((self.lo, self.hi)).chain(self.alt);
        for (lo, hi) in boxes {
            for z in lo[2]..hi[2] {
                for y in lo[1]..hi[1] {
                    for x in lo[0]..hi[0] {
                        let idx = grid.flat([x, y, z]);
                        if self.region.admits(mask[idx]) {
                            out.push(idx);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Number of grid nodes in the boxes, regardless of class.
    pub fn box_nodes(&self) -> usize {
        let vol = |lo: [usize; 3], hi: [usize; 3]| (0..3).map(|a| hi[a].saturating_sub(lo[a])).product::<usize>();
        vol(self.lo, self.hi) + self.alt.map_or(0, |(l, h)| vol(l, h))
    }
}

#[derive(Debug, Clone)]
pub struct GridField {
    pub grid: Grid,
    pub ncomp: usize,
    /// Node-major: component `c` of node `i` is `values[i * ncomp + c]`.
    pub values: Vec<f64>,
    pub mask: Arc<Vec<NodeClass>>,
}

/// Node classes from domain membership alone.
pub fn membership_mask(grid: &Grid, dom: &Domain) -> Arc<Vec<NodeClass>> {
    Arc::new(
        grid.membership(dom)
            .into_iter()
            .map(|m| if m { NodeClass::Interior } else { NodeClass::Exterior })
            .collect(),
    )
}

impl GridField {
    pub fn zeros(grid: Grid, ncomp: usize, mask: Arc<Vec<NodeClass>>) -> Self {
        assert_eq!(mask.len(), grid.len());
        GridField { grid, ncomp, values: vec![0.0; grid.len() * ncomp], mask }
    }

    /// Samples `f` at every node of the domain mask; other nodes are zero.
    pub fn from_fn(
        grid: Grid,
        ncomp: usize,
        mask: Arc<Vec<NodeClass>>,
        region: Region,
        f: impl Fn(&Point, &mut [f64]) + Sync,
    ) -> Self {
        let mut out = Self::zeros(grid, ncomp, mask);
        let mask = out.mask.clone();
        out.values.par_chunks_mut(ncomp).enumerate().for_each(|(i, v)| {
            if region.admits(mask[i]) {
                f(&grid.point(i), v);
            }
        });
        out
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.ncomp..(idx + 1) * self.ncomp]
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self ← self + s·other`.
    pub fn axpy(&mut self, s: f64, other: &GridField) -> Result<()> {
        if other.grid != self.grid || other.ncomp != self.ncomp {
            return Err(Error::GridMismatch("axpy operands differ".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    /// Zeroes every node outside `region`.
    pub fn restrict(&mut self, region: Region) {
        let nc = self.ncomp;
        for (i, c) in self.mask.iter().enumerate() {
            if !region.admits(*c) {
                self.values[i * nc..(i + 1) * nc].fill(0.0);
            }
        }
    }

    pub fn count(&self, region: Region) -> usize {
        self.mask.iter().filter(|c| region.admits(**c)).count()
    }

    /// Largest absolute value over the interior nodes.
    pub fn max_abs(&self, region: Region) -> f64 {
        let nc = self.ncomp;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, c)| region.admits(**c))
            .flat_map(|(i, _)| self.values[i * nc..(i + 1) * nc].iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::gallery_level;

    #[test]
    fn grid_covers_bbox_and_matches_membership() {
        let dom = gallery_level("koch_snowflake", Some(2)).unwrap();
        let g = Grid::covering(&dom, 6);
        let h = g.h();
        for a in 0..2 {
            assert!(g.coord(a, 0) - 0.5 * h <= dom.bbox.lo[a]);
            assert!(g.coord(a, g.dims[a] - 1) + 0.5 * h >= dom.bbox.hi[a]);
        }
        let m = g.membership(&dom);
        for (i, &b) in m.iter().enumerate() {
            assert_eq!(b, dom.contains(&g.point(i)));
        }
    }

    #[test]
    fn node_ranges_and_cells() {
        let dom = gallery_level("unit_square", None).unwrap();
        let g = Grid::covering(&dom, 5);
        let (lo, hi) = g.node_range(&[0.0, 0.0, 0.0], &[0.25, 0.5, 0.0]);
        assert_eq!(hi[0] - lo[0], 8);
        assert_eq!(hi[1] - lo[1], 16);
        let idx = g.flat([lo[0], lo[1], 0]);
        assert_eq!(g.cell_of(idx, 2), [0, 0, 0]);
        assert_eq!(g.cell_of(g.flat([hi[0] - 1, hi[1] - 1, 0]), 2), [0, 1, 0]);
    }
}
