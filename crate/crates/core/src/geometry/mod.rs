//! Computational domains: membership, boundary distances, boundary sampling
//! and the shipped gallery.

pub mod dset;
pub mod polygon;
pub mod probe;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use polygon::LatticePolygon;

/// Points are stored with three coordinates; the third is zero in 2D.
pub type Point = [f64; 3];

/// Axis-aligned box. In 2D the third axis is collapsed to `[0, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn contains(&self, p: &Point, n: usize) -> bool {
        (0..n).all(|a| p[a] > self.lo[a] && p[a] < self.hi[a])
    }

    pub fn max_extent(&self, n: usize) -> f64 {
        (0..n).map(|a| self.hi[a] - self.lo[a]).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    /// The open unit cube `(0,1)^n`.
    UnitCube,
    Polygon(LatticePolygon),
    /// Polygon cross-section extruded over `z ∈ (0,1)`.
    Prism(LatticePolygon),
}

/// Serializable description of a domain: gallery tag, parameters and the
/// (ε, δ, d) constants attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub tag: String,
    #[serde(default)]
    pub params: BTreeMap<String, i64>,
    pub epsilon: f64,
    pub delta: f64,
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub n: usize,
    pub shape: Shape,
    pub bbox: Aabb,
    pub epsilon: f64,
    pub delta: f64,
    pub boundary_dim: f64,
    pub descriptor: Descriptor,
}

pub const GALLERY_TAGS: [&str; 5] =
    ["unit_square", "l_shape", "koch_snowflake", "koch_cylinder_3d", "unit_cube"];

const KOCH_DIM: f64 = 1.261_859_507_142_914_9; // ln 4 / ln 3

/// Builds a gallery domain. `params` may carry `level` for the Koch entries.
pub fn gallery(tag: &str, params: &BTreeMap<String, i64>) -> Result<Domain> {
    let level = || -> Result<u32> {
        let k = params.get("level").copied().unwrap_or(0);
        if k < 0 {
            return Err(Error::InvalidParam(format!("level must be >= 0, got {k}")));
        }
        if k > 8 {
            return Err(Error::InvalidParam(format!("level {k} too large (max 8)")));
        }
        Ok(k as u32)
    };
    for key in params.keys() {
        if key != "level" {
            return Err(Error::InvalidParam(format!("unknown parameter `{key}`")));
        }
    }
    let (n, shape, epsilon, delta, d) = match tag {
        "unit_square" => (2, Shape::UnitCube, 0.4, 2f64.sqrt(), 1.0),
        "l_shape" => (2, Shape::Polygon(LatticePolygon::l_shape()), 0.2, 2f64.sqrt(), 1.0),
        "koch_snowflake" => {
            let p = LatticePolygon::koch_snowflake(level()?);
            let diam = p.diameter();
            (2, Shape::Polygon(p), 0.2, diam, KOCH_DIM)
        }
        "koch_cylinder_3d" | "koch_cylinder" => {
            let p = LatticePolygon::koch_snowflake(level()?);
            (3, Shape::Prism(p), 0.2, 8.0, 1.0 + KOCH_DIM)
        }
        "unit_cube" => (3, Shape::UnitCube, 0.4, 8.0, 2.0),
        other => return Err(Error::UnknownTag(other.to_string())),
    };
    let mut stored = BTreeMap::new();
    if tag.starts_with("koch") {
        stored.insert("level".to_string(), level()? as i64);
    }
    let tag = if tag == "koch_cylinder" { "koch_cylinder_3d" } else { tag };
    let descriptor =
        Descriptor { tag: tag.to_string(), params: stored, epsilon, delta, d };
    Ok(Domain::new(n, shape, descriptor))
}

/// Shorthand for `gallery` with an optional level.
pub fn gallery_level(tag: &str, level: Option<i64>) -> Result<Domain> {
    let mut p = BTreeMap::new();
    if let Some(k) = level {
        p.insert("level".to_string(), k);
    }
    gallery(tag, &p)
}

impl Domain {
    fn new(n: usize, shape: Shape, descriptor: Descriptor) -> Self {
        let (mut lo, mut hi) = ([0.0; 3], [0.0; 3]);
        match &shape {
            Shape::UnitCube => {
                for a in 0..n {
                    lo[a] = 0.0;
                    hi[a] = 1.0;
                }
            }
            Shape::Polygon(p) | Shape::Prism(p) => {
                let (l, h) = p.bounds();
                lo[..2].copy_from_slice(&l);
                hi[..2].copy_from_slice(&h);
                if n == 3 {
                    lo[2] = 0.0;
                    hi[2] = 1.0;
                }
            }
        }
        let ext = (0..n).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        for a in 0..n {
            lo[a] -= 0.1 * ext;
            hi[a] += 0.1 * ext;
        }
        Domain {
            n,
            shape,
            bbox: Aabb { lo, hi },
            epsilon: descriptor.epsilon,
            delta: descriptor.delta,
            boundary_dim: descriptor.d,
            descriptor,
        }
    }

    /// Rebuilds a domain from a descriptor file, keeping its (ε, δ, d).
    pub fn from_descriptor(desc: &Descriptor) -> Result<Self> {
        if !(desc.epsilon > 0.0 && desc.epsilon <= 1.0) {
            return Err(Error::InvalidParam(format!("epsilon must lie in (0,1], got {}", desc.epsilon)));
        }
        if !(desc.delta > 0.0) {
            return Err(Error::InvalidParam(format!("delta must be positive, got {}", desc.delta)));
        }
        let mut dom = gallery(&desc.tag, &desc.params)?;
        if !(desc.d > 0.0 && desc.d <= dom.n as f64) {
            return Err(Error::InvalidParam(format!("d must lie in (0,n], got {}", desc.d)));
        }
        dom.epsilon = desc.epsilon;
        dom.delta = desc.delta;
        dom.boundary_dim = desc.d;
        dom.descriptor.epsilon = desc.epsilon;
        dom.descriptor.delta = desc.delta;
        dom.descriptor.d = desc.d;
        Ok(dom)
    }

    pub fn label(&self) -> String {
        match self.descriptor.params.get("level") {
            Some(k) => format!("{}({k})", self.descriptor.tag),
            None => self.descriptor.tag.clone(),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match &self.shape {
            Shape::UnitCube => (0..self.n).all(|a| p[a] > 0.0 && p[a] < 1.0),
            Shape::Polygon(poly) => poly.contains([p[0], p[1]]),
            Shape::Prism(poly) => p[2] > 0.0 && p[2] < 1.0 && poly.contains([p[0], p[1]]),
        }
    }

    /// Membership of the nodes `(x0 + i·h, y, z)`; agrees exactly with [`contains`](Self::contains).
    pub fn classify_row(&self, y: f64, z: f64, x0: f64, h: f64, out: &mut [bool]) {
        match &self.shape {
            Shape::UnitCube => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.contains(&[x0 + i as f64 * h, y, z]);
                }
            }
            Shape::Polygon(poly) => poly.classify_row(y, x0, h, out),
            Shape::Prism(poly) => {
                if z > 0.0 && z < 1.0 {
                    poly.classify_row(y, x0, h, out)
                } else {
                    out.fill(false)
                }
            }
        }
    }

    /// Whether the closed segment `[a, b]` lies in Ω.
    pub fn segment_inside(&self, a: &Point, b: &Point) -> bool {
        match &self.shape {
            Shape::UnitCube => self.contains(a) && self.contains(b),
            Shape::Polygon(poly) => poly.segment_inside([a[0], a[1]], [b[0], b[1]]),
            Shape::Prism(poly) => {
                let zs = |z: f64| z > 0.0 && z < 1.0;
                zs(a[2]) && zs(b[2]) && poly.segment_inside([a[0], a[1]], [b[0], b[1]])
            }
        }
    }

    /// Distance from any point to `∂Ω`.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        self.box_boundary_distance(p, p)
    }

    /// `d(x) = dist(x, Ωᶜ)` for a point of the domain.
    pub fn distance_to_complement(&self, p: &Point) -> Result<f64> {
        if !self.contains(p) {
            return Err(Error::NotInDomain(*p));
        }
        Ok(self.boundary_distance(p))
    }

    /// Exact distance between the closed box `[lo, hi]` and `∂Ω`
    /// (zero when the box meets the boundary).
    pub fn box_boundary_distance(&self, lo: &Point, hi: &Point) -> f64 {
        let n = self.n;
        match &self.shape {
            Shape::UnitCube => {
                let mut inside = true;
                let mut gap2 = 0.0;
                let mut inner = f64::INFINITY;
                for a in 0..n {
                    let g = (0.0 - hi[a]).max(lo[a] - 1.0).max(0.0);
                    gap2 += g * g;
                    if !(lo[a] > 0.0 && hi[a] < 1.0) {
                        inside = false;
                    }
                    inner = inner.min(lo[a]).min(1.0 - hi[a]);
                }
                if gap2 > 0.0 {
                    gap2.sqrt()
                } else if inside {
                    inner
                } else {
                    0.0
                }
            }
            Shape::Polygon(poly) => poly.box_boundary_distance([lo[0], lo[1]], [hi[0], hi[1]]),
            Shape::Prism(poly) => {
                let dxy = poly.box_boundary_distance([lo[0], lo[1]], [hi[0], hi[1]]);
                // Distance in z from the box interval to [0,1] and to each cap plane.
                let dz_slab = (0.0 - hi[2]).max(lo[2] - 1.0).max(0.0);
                let lateral = (dxy * dxy + dz_slab * dz_slab).sqrt();
                let to_plane = |c: f64| (lo[2] - c).max(c - hi[2]).max(0.0);
                // Distance from the xy-box to the closed cross-section.
                let dxy_solid = if dxy == 0.0 {
                    0.0
                } else {
                    let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                    if poly.contains(c) { 0.0 } else { dxy }
                };
                let cap = |c: f64| {
                    let dz = to_plane(c);
                    (dxy_solid * dxy_solid + dz * dz).sqrt()
                };
                lateral.min(cap(0.0)).min(cap(1.0))
            }
        }
    }

    /// Soft-min of the distances to the boundary pieces (faces, edges) with
    /// temperature `tau`. Never exceeds [`boundary_distance`](Self::boundary_distance)
    /// and is C∞ away from the pieces themselves.
    pub fn soft_boundary_distance(&self, p: &Point, tau: f64) -> f64 {
        let mut ds: Vec<f64> = Vec::with_capacity(8);
        match &self.shape {
            Shape::UnitCube => {
                for a in 0..self.n {
                    ds.push(p[a].abs());
                    ds.push((1.0 - p[a]).abs());
                }
            }
            Shape::Polygon(poly) | Shape::Prism(poly) => {
                let q = [p[0], p[1]];
                let d0 = poly.boundary_distance(q);
                poly.edges_within(q, d0 + 40.0 * tau, |_, d2| ds.push(d2.sqrt()));
                if let Shape::Prism(_) = &self.shape {
                    ds.push(p[2].abs());
                    ds.push((1.0 - p[2]).abs());
                }
            }
        }
        soft_min(&ds, tau)
    }

    /// `count` points on `∂Ω` distributed by boundary measure. 2D boundaries are
    /// stratified in arclength (deterministic); surfaces are sampled with a seeded RNG.
    pub fn sample_boundary(&self, count: usize, seed: u64) -> Vec<Point> {
        match (&self.shape, self.n) {
            (Shape::UnitCube, 2) => {
                let sq = LatticePolygon::unit_square();
                stratified(&sq, count)
            }
            (Shape::Polygon(poly), _) => stratified(poly, count),
            (Shape::UnitCube, _) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        let f: usize = rng.random_range(0..6);
                        let mut p = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                        p[f / 2] = (f % 2) as f64;
                        p
                    })
                    .collect()
            }
            (Shape::Prism(poly), _) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let lat = poly.perimeter();
                let cap = poly.area();
                let (lo, hi) = poly.bounds();
                (0..count)
                    .map(|_| {
                        let u = rng.random::<f64>() * (lat + 2.0 * cap);
                        if u < lat {
                            let q = poly.point_at_arclength(u);
                            [q[0], q[1], rng.random::<f64>()]
                        } else {
                            let z = if u < lat + cap { 0.0 } else { 1.0 };
                            loop {
                                let q = [
                                    lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
                                    lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
                                ];
                                if poly.contains(q) {
                                    break [q[0], q[1], z];
                                }
                            }
                        }
                    })
                    .collect()
            }
        }
    }

    /// Largest `d(x)` over a uniform probe lattice of the bounding box.
    pub fn inradius_estimate(&self) -> f64 {
        let m = if self.n == 2 { 128 } else { 40 };
        let mut best: f64 = 0.0;
        let nz = if self.n == 3 { m } else { 1 };
        for k in 0..nz {
            for j in 0..m {
                for i in 0..m {
                    let idx = [i, j, k];
                    let mut p = [0.0; 3];
                    for a in 0..self.n {
                        p[a] = self.bbox.lo[a]
                            + (idx[a] as f64 + 0.5) / m as f64 * (self.bbox.hi[a] - self.bbox.lo[a]);
                    }
                    if self.contains(&p) {
                        best = best.max(self.boundary_distance(&p));
                    }
                }
            }
        }
        best
    }

    /// Diameter of the closure.
    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::UnitCube => (self.n as f64).sqrt(),
            Shape::Polygon(p) => p.diameter(),
            Shape::Prism(p) => (p.diameter().powi(2) + 1.0).sqrt(),
        }
    }

    /// Boundary measure: length in 2D, area in 3D.
    pub fn boundary_measure(&self) -> f64 {
        match (&self.shape, self.n) {
            (Shape::UnitCube, 2) => 4.0,
            (Shape::UnitCube, _) => 6.0,
            (Shape::Polygon(p), _) => p.perimeter(),
            (Shape::Prism(p), _) => p.perimeter() + 2.0 * p.area(),
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::UnitCube => 1.0,
            Shape::Polygon(p) | Shape::Prism(p) => p.area(),
        }
    }
}

fn stratified(poly: &LatticePolygon, count: usize) -> Vec<Point> {
    let len = poly.perimeter();
    (0..count)
        .map(|i| {
            let q = poly.point_at_arclength((i as f64 + 0.5) / count as f64 * len);
            [q[0], q[1], 0.0]
        })
        .collect()
}

/// `−τ·ln Σ exp(−dᵢ/τ)`, evaluated relative to the minimum for stability.
pub fn soft_min(ds: &[f64], tau: f64) -> f64 {
    let m = ds.iter().copied().fold(f64::INFINITY, f64::min);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = ds.iter().map(|d| (-(d - m) / tau).exp()).sum();
    m - tau * s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use polygon::point_segment_dist2;

    #[test]
    fn unit_square_basics() {
        let d = gallery_level("unit_square", None).unwrap();
        assert_eq!(d.n, 2);
        for a in 0..2 {
            assert!((d.bbox.lo[a] + 0.1).abs() < 1e-15);
            assert!((d.bbox.hi[a] - 1.1).abs() < 1e-15);
        }
        assert!(d.contains(&[0.5, 0.5, 0.0]));
        assert!(!d.contains(&[1.5, 0.5, 0.0]));
        assert_eq!(d.distance_to_complement(&[0.5, 0.5, 0.0]).unwrap(), 0.5);
        assert!((d.distance_to_complement(&[0.1, 0.3, 0.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(d.distance_to_complement(&[1.5, 0.5, 0.0]), Err(Error::NotInDomain(_))));
    }

    #[test]
    fn gallery_errors() {
        assert!(matches!(gallery_level("torus", None), Err(Error::UnknownTag(_))));
        assert!(matches!(gallery_level("koch_snowflake", Some(-1)), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn koch_level_zero_is_triangle() {
        let d = gallery_level("koch_snowflake", Some(0)).unwrap();
        assert!(d.contains(&[0.5, 3f64.sqrt() / 6.0, 0.0]));
    }

    #[test]
    fn koch_distance_matches_segments() {
        let d = gallery_level("koch_snowflake", Some(2)).unwrap();
        let Shape::Polygon(p) = &d.shape else { panic!() };
        let c = [0.5, 3f64.sqrt() / 6.0, 0.0];
        let brute = p
            .segments()
            .iter()
            .map(|s| point_segment_dist2([c[0], c[1]], s[0], s[1]))
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        assert!((d.distance_to_complement(&c).unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn koch_samples_near_previous_level() {
        let d3 = gallery_level("koch_snowflake", Some(3)).unwrap();
        let Shape::Polygon(p2) = gallery_level("koch_snowflake", Some(2)).unwrap().shape else {
            panic!()
        };
        for q in d3.sample_boundary(1000, 0) {
            let brute = p2
                .segments()
                .iter()
                .map(|s| point_segment_dist2([q[0], q[1]], s[0], s[1]))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert!(brute <= 3f64.powi(-3) + 1e-12);
        }
    }

    #[test]
    fn bbox_strictly_contains_members() {
        for tag in GALLERY_TAGS {
            let d = gallery_level(tag, Some(2)).unwrap();
            let n = d.n;
            let m = 30;
            for k in 0..if n == 3 { m } else { 1 } {
                for j in 0..m {
                    for i in 0..m {
                        let mut p = [0.0; 3];
                        let idx = [i, j, k];
                        for a in 0..n {
                            p[a] = -1.0 + 3.0 * (idx[a] as f64 + 0.37) / m as f64;
                        }
                        if d.contains(&p) {
                            assert!(d.bbox.contains(&p, n));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_samples_separate_inside_from_outside() {
        let h = 1e-6;
        for tag in GALLERY_TAGS {
            let d = gallery_level(tag, Some(2)).unwrap();
            for q in d.sample_boundary(200, 7) {
                let mut seen_in = false;
                let mut seen_out = false;
                for s in 0..64 {
                    let t = s as f64 * std::f64::consts::TAU / 64.0;
                    let u = (s as f64 * 0.7).sin();
                    let dir = if d.n == 2 {
                        [t.cos(), t.sin(), 0.0]
                    } else {
                        let r = (1.0 - u * u).sqrt();
                        [r * t.cos(), r * t.sin(), u]
                    };
                    let p = [q[0] + h * dir[0], q[1] + h * dir[1], q[2] + h * dir[2]];
                    if d.contains(&p) {
                        seen_in = true
                    } else {
                        seen_out = true
                    }
                }
                assert!(seen_in && seen_out, "{tag} sample {q:?}");
            }
        }
    }

    #[test]
    fn box_distance_for_prism_and_cube() {
        let cube = gallery_level("unit_cube", None).unwrap();
        assert!((cube.box_boundary_distance(&[0.2, 0.3, 0.4], &[0.3, 0.4, 0.5]) - 0.2).abs() < 1e-15);
        let d = cube.box_boundary_distance(&[1.1, 1.2, 0.5], &[1.2, 1.3, 0.6]);
        assert!((d - (0.01f64 + 0.04).sqrt()).abs() < 1e-15);
        assert_eq!(cube.box_boundary_distance(&[0.9, 0.5, 0.5], &[1.1, 0.6, 0.6]), 0.0);

        let cyl = gallery_level("koch_cylinder_3d", Some(1)).unwrap();
        let c = [0.5, 3f64.sqrt() / 6.0, 0.5];
        let dxy = cyl.boundary_distance(&[c[0], c[1], 0.5]);
        let Shape::Prism(p) = &cyl.shape else { panic!() };
        assert!((dxy - p.boundary_distance([c[0], c[1]]).min(0.5)).abs() < 1e-15);
        // Above the top cap: the nearest boundary point is on the cap.
        let above = cyl.boundary_distance(&[c[0], c[1], 1.25]);
        assert!((above - 0.25).abs() < 1e-15);
        // Box beside the lateral face and above the slab.
        let out = [0.5, -0.5, 1.2];
        let dlat = p.boundary_distance([0.5, -0.5]);
        assert!((cyl.boundary_distance(&out) - (dlat * dlat + 0.04).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn soft_distance_is_a_lower_bound() {
        for tag in GALLERY_TAGS {
            let d = gallery_level(tag, Some(2)).unwrap();
            for s in 0..300 {
                let t = s as f64 / 300.0;
                let p = [
                    d.bbox.lo[0] + (d.bbox.hi[0] - d.bbox.lo[0]) * t,
                    d.bbox.lo[1] + (d.bbox.hi[1] - d.bbox.lo[1]) * (t * 7.3).fract(),
                    if d.n == 3 { (t * 3.1).fract() } else { 0.0 },
                ];
                if d.contains(&p) {
                    let hard = d.boundary_distance(&p);
                    let soft = d.soft_boundary_distance(&p, 0.01);
                    assert!(soft <= hard + 1e-15);
                    assert!(soft >= hard - 0.01 * 200f64.ln());
                }
            }
        }
    }

    #[test]
    fn descriptor_roundtrip() {
        let d = gallery_level("koch_snowflake", Some(3)).unwrap();
        let s = serde_json::to_string(&d.descriptor).unwrap();
        let back: Descriptor = serde_json::from_str(&s).unwrap();
        let d2 = Domain::from_descriptor(&back).unwrap();
        assert_eq!(d2.descriptor, d.descriptor);
        assert_eq!(d2.label(), "koch_snowflake(3)");
    }
}
