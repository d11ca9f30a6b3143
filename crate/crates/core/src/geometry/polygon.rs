//! Simple polygons with integer lattice vertices mapped through an affine frame.
//!
//! Membership is decided by even–odd ray casting in lattice coordinates, where
//! every vertex is an exact integer. Distances are evaluated in world
//! coordinates through a bounding-volume hierarchy over the edges.

/// A 2D point in world coordinates.
pub type P2 = [f64; 2];

#[inline]
fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Squared distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_dist2(p: P2, a: P2, b: P2) -> f64 {
    let d = sub(b, a);
    let w = sub(p, a);
    let len2 = dot(d, d);
    let t = if len2 > 0.0 {
        (dot(w, d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    dot(q, q)
}

/// Squared distance from `p` to the closed box `[lo, hi]`.
#[inline]
pub fn point_box_dist2(p: P2, lo: P2, hi: P2) -> f64 {
    let mut s = 0.0;
    for a in 0..2 {
        let g = (lo[a] - p[a]).max(p[a] - hi[a]).max(0.0);
        s += g * g;
    }
    s
}

/// Liang–Barsky test: does the closed segment meet the closed box?
pub fn segment_hits_box(a: P2, b: P2, lo: P2, hi: P2) -> bool {
    let d = sub(b, a);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for ax in 0..2 {
        if d[ax] == 0.0 {
            if a[ax] < lo[ax] || a[ax] > hi[ax] {
                return false;
            }
        } else {
            let inv = 1.0 / d[ax];
            let mut ta = (lo[ax] - a[ax]) * inv;
            let mut tb = (hi[ax] - a[ax]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Squared distance between the closed segment `[a, b]` and the closed box.
pub fn segment_box_dist2(a: P2, b: P2, lo: P2, hi: P2) -> f64 {
    if segment_hits_box(a, b, lo, hi) {
        return 0.0;
    }
    let mut best = point_box_dist2(a, lo, hi).min(point_box_dist2(b, lo, hi));
    for c in [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]] {
        best = best.min(point_segment_dist2(c, a, b));
    }
    best
}

#[inline]
fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Do the closed segments `[a, b]` and `[c, d]` meet?
pub fn segments_meet(a: P2, b: P2, c: P2, d: P2) -> bool {
    let o1 = cross(sub(b, a), sub(c, a));
    let o2 = cross(sub(b, a), sub(d, a));
    let o3 = cross(sub(d, c), sub(a, c));
    let o4 = cross(sub(d, c), sub(b, c));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    // Touching or collinear cases.
    (o1 == 0.0 && point_segment_dist2(c, a, b) == 0.0)
        || (o2 == 0.0 && point_segment_dist2(d, a, b) == 0.0)
        || (o3 == 0.0 && point_segment_dist2(a, c, d) == 0.0)
        || (o4 == 0.0 && point_segment_dist2(b, c, d) == 0.0)
}

#[derive(Debug, Clone)]
struct Node {
    lo: P2,
    hi: P2,
    // Leaf when `count > 0`: segments `first..first+count` of the permuted order.
    first: usize,
    count: usize,
    left: usize,
    right: usize,
}

/// Bounding-volume hierarchy over a fixed list of segments.
#[derive(Debug, Clone)]
pub struct SegmentBvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF: usize = 4;

impl SegmentBvh {
    pub fn build(segs: &[[P2; 2]]) -> Self {
        let mut order: Vec<usize> = (0..segs.len()).collect();
        let mut nodes = Vec::with_capacity(2 * segs.len() / LEAF + 1);
        if !segs.is_empty() {
            Self::build_rec(segs, &mut order, 0, segs.len(), &mut nodes);
        }
        SegmentBvh { nodes, order }
    }

    fn build_rec(
        segs: &[[P2; 2]],
        order: &mut [usize],
        first: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &i in &order[first..end] {
            for p in segs[i] {
                for a in 0..2 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        let id = nodes.len();
        nodes.push(Node { lo, hi, first, count: end - first, left: 0, right: 0 });
        if end - first <= LEAF {
            return id;
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        let mid = (first + end) / 2;
        let key = |i: &usize| segs[*i][0][axis] + segs[*i][1][axis];
        order[first..end].select_nth_unstable_by(mid - first, |a, b| key(a).total_cmp(&key(b)));
        let left = Self::build_rec(segs, order, first, mid, nodes);
        let right = Self::build_rec(segs, order, mid, end, nodes);
        let node = &mut nodes[id];
        node.count = 0;
        node.left = left;
        node.right = right;
        id
    }

    /// Smallest squared distance from the closed box to any segment.
    pub fn box_dist2(&self, segs: &[[P2; 2]], lo: P2, hi: P2) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if box_box_dist2(n.lo, n.hi, lo, hi) >= best {
                continue;
            }
            if n.count > 0 {
                for &i in &self.order[n.first..n.first + n.count] {
                    let d = segment_box_dist2(segs[i][0], segs[i][1], lo, hi);
                    if d < best {
                        best = d;
                    }
                }
            } else {
                let (l, r) = (n.left, n.right);
                let dl = box_box_dist2(self.nodes[l].lo, self.nodes[l].hi, lo, hi);
                let dr = box_box_dist2(self.nodes[r].lo, self.nodes[r].hi, lo, hi);
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }

    /// Calls `f(i, dist2)` for every segment within distance `r` of `p`.
    pub fn for_each_within(&self, segs: &[[P2; 2]], p: P2, r: f64, mut f: impl FnMut(usize, f64)) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = r * r;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if point_box_dist2(p, n.lo, n.hi) > r2 {
                continue;
            }
            if n.count > 0 {
                for &i in &self.order[n.first..n.first + n.count] {
                    let d = point_segment_dist2(p, segs[i][0], segs[i][1]);
                    if d <= r2 {
                        f(i, d);
                    }
                }
            } else {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
    }
}

#[inline]
fn box_box_dist2(alo: P2, ahi: P2, blo: P2, bhi: P2) -> f64 {
    let mut s = 0.0;
    for a in 0..2 {
        let g = (alo[a] - bhi[a]).max(blo[a] - ahi[a]).max(0.0);
        s += g * g;
    }
    s
}

/// Polygon whose vertices are integer lattice points `q`, placed in the plane
/// at `origin + q[0]·e1 + q[1]·e2`.
///
/// The frame must have `e1` horizontal so that the lattice ordinate depends on
/// the world `y` alone; row scans rely on this.
#[derive(Debug, Clone)]
pub struct LatticePolygon {
    verts: Vec<[i64; 2]>,
    origin: P2,
    e1: P2,
    e2: P2,
    inv: [[f64; 2]; 2],
    segs: Vec<[P2; 2]>,
    bvh: SegmentBvh,
}

impl LatticePolygon {
    pub fn new(verts: Vec<[i64; 2]>, origin: P2, e1: P2, e2: P2) -> Self {
        assert!(verts.len() >= 3, "polygon needs at least three vertices");
        assert!(e1[1] == 0.0, "first frame vector must be horizontal");
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        assert!(det != 0.0, "degenerate frame");
        let inv = [[e2[1] / det, -e2[0] / det], [-e1[1] / det, e1[0] / det]];
        let world = |q: [i64; 2]| {
            [
                origin[0] + q[0] as f64 * e1[0] + q[1] as f64 * e2[0],
                origin[1] + q[0] as f64 * e1[1] + q[1] as f64 * e2[1],
            ]
        };
        let m = verts.len();
        let segs: Vec<[P2; 2]> = (0..m).map(|i| [world(verts[i]), world(verts[(i + 1) % m])]).collect();
        let bvh = SegmentBvh::build(&segs);
        LatticePolygon { verts, origin, e1, e2, inv, segs, bvh }
    }

    /// Unit square `(0,1)²` as a lattice polygon.
    pub fn unit_square() -> Self {
        Self::new(vec![[0, 0], [1, 0], [1, 1], [0, 1]], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0])
    }

    /// L-shaped region `(0,1)² ∖ [½,1)²`.
    pub fn l_shape() -> Self {
        Self::new(
            vec![[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]],
            [0.0, 0.0],
            [0.5, 0.0],
            [0.0, 0.5],
        )
    }

    /// Koch snowflake prefractal of the given level, grown outward from the
    /// counter-clockwise equilateral triangle with vertices (0,0), (1,0), (½,√3/2).
    pub fn koch_snowflake(level: u32) -> Self {
        let verts = koch_lattice(level);
        let s = 3f64.powi(-(level as i32));
        Self::new(verts, [0.0, 0.0], [s, 0.0], [0.5 * s, 0.5 * 3f64.sqrt() * s])
    }

    pub fn lattice_vertices(&self) -> &[[i64; 2]] {
        &self.verts
    }

    pub fn segments(&self) -> &[[P2; 2]] {
        &self.segs
    }

    pub fn vertices(&self) -> Vec<P2> {
        self.segs.iter().map(|s| s[0]).collect()
    }

    /// World to lattice coordinates.
    #[inline]
    pub fn to_lattice(&self, p: P2) -> P2 {
        let x = p[0] - self.origin[0];
        let y = p[1] - self.origin[1];
        [self.inv[0][0] * x + self.inv[0][1] * y, self.inv[1][0] * x + self.inv[1][1] * y]
    }

    /// Lattice abscissas where the horizontal lattice line at ordinate `qy`
    /// crosses the boundary, sorted ascending.
    pub fn crossings(&self, qy: f64) -> Vec<f64> {
        let m = self.verts.len();
        let mut xs = Vec::new();
        for i in 0..m {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % m];
            let (ay, by) = (a[1] as f64, b[1] as f64);
            if (ay > qy) != (by > qy) {
                let t = (qy - ay) / (by - ay);
                xs.push(a[0] as f64 + t * (b[0] - a[0]) as f64);
            }
        }
        xs.sort_by(f64::total_cmp);
        xs
    }

    /// Open-set membership by even–odd ray casting toward +x in lattice space.
    pub fn contains(&self, p: P2) -> bool {
        let q = self.to_lattice(p);
        let xs = self.crossings(q[1]);
        count_above(&xs, q[0]) % 2 == 1
    }

    /// Membership of the nodes `(x0 + i·h, y)` for `i in 0..out.len()`.
    /// Agrees exactly with [`contains`](Self::contains).
    pub fn classify_row(&self, y: f64, x0: f64, h: f64, out: &mut [bool]) {
        let qy = self.to_lattice([x0, y])[1];
        let xs = self.crossings(qy);
        for (i, o) in out.iter_mut().enumerate() {
            let q = self.to_lattice([x0 + i as f64 * h, y]);
            debug_assert_eq!(q[1], qy);
            *o = count_above(&xs, q[0]) % 2 == 1;
        }
    }

    /// Distance from a point to the boundary.
    pub fn boundary_distance(&self, p: P2) -> f64 {
        self.bvh.box_dist2(&self.segs, p, p).sqrt()
    }

    /// Distance from the closed box `[lo, hi]` to the boundary (0 if they meet).
    pub fn box_boundary_distance(&self, lo: P2, hi: P2) -> f64 {
        self.bvh.box_dist2(&self.segs, lo, hi).sqrt()
    }

    /// Calls `f(segment index, squared distance)` for every edge within `r` of `p`.
    pub fn edges_within(&self, p: P2, r: f64, f: impl FnMut(usize, f64)) {
        self.bvh.for_each_within(&self.segs, p, r, f)
    }

    /// Whether the closed segment `[a, b]` lies in the open polygon.
    pub fn segment_inside(&self, a: P2, b: P2) -> bool {
        if !self.contains(a) {
            return false;
        }
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let r = 0.5 * dot(sub(b, a), sub(b, a)).sqrt() * (1.0 + 1e-12) + 1e-15;
        let mut clear = true;
        self.bvh.for_each_within(&self.segs, m, r, |i, _| {
            if clear && segments_meet(a, b, self.segs[i][0], self.segs[i][1]) {
                clear = false;
            }
        });
        clear
    }

    pub fn perimeter(&self) -> f64 {
        self.segs.iter().map(|s| dot(sub(s[1], s[0]), sub(s[1], s[0])).sqrt()).sum()
    }

    pub fn area(&self) -> f64 {
        let m = self.verts.len();
        let mut twice: i128 = 0;
        for i in 0..m {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % m];
            twice += a[0] as i128 * b[1] as i128 - b[0] as i128 * a[1] as i128;
        }
        let det = self.e1[0] * self.e2[1] - self.e1[1] * self.e2[0];
        (twice as f64 * 0.5 * det).abs()
    }

    /// World-space bounds of the vertices.
    pub fn bounds(&self) -> (P2, P2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for s in &self.segs {
            for a in 0..2 {
                lo[a] = lo[a].min(s[0][a]);
                hi[a] = hi[a].max(s[0][a]);
            }
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let v = self.vertices();
        let mut best: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let d = sub(v[i], v[j]);
                best = best.max(dot(d, d));
            }
        }
        best.sqrt()
    }

    /// Point at arclength `s` along the boundary, starting from the first vertex.
    pub fn point_at_arclength(&self, mut s: f64) -> P2 {
        for seg in &self.segs {
            let d = sub(seg[1], seg[0]);
            let len = dot(d, d).sqrt();
            if s <= len {
                let t = s / len;
                return [seg[0][0] + t * d[0], seg[0][1] + t * d[1]];
            }
            s -= len;
        }
        self.segs[self.segs.len() - 1][1]
    }
}

#[inline]
fn count_above(sorted: &[f64], x: f64) -> usize {
    sorted.len() - sorted.partition_point(|&c| c <= x)
}

/// Integer vertices of the level-`k` Koch snowflake, in lattice units of `3^-k`.
pub fn koch_lattice(level: u32) -> Vec<[i64; 2]> {
    let mut v: Vec<[i64; 2]> = vec![[0, 0], [1, 0], [0, 1]];
    for _ in 0..level {
        let m = v.len();
        let mut next = Vec::with_capacity(4 * m);
        for i in 0..m {
            let p = [3 * v[i][0], 3 * v[i][1]];
            let q = [3 * v[(i + 1) % m][0], 3 * v[(i + 1) % m][1]];
            let d = [(q[0] - p[0]) / 3, (q[1] - p[1]) / 3];
            // Clockwise rotation by 60° in the (e1, e2) lattice: outward for a CCW boundary.
            let r = [d[0] + d[1], -d[0]];
            let a = [p[0] + d[0], p[1] + d[1]];
            next.push(p);
            next.push(a);
            next.push([a[0] + r[0], a[1] + r[1]]);
            next.push([p[0] + 2 * d[0], p[1] + 2 * d[1]]);
        }
        v = next;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_distance(poly: &LatticePolygon, p: P2) -> f64 {
        poly.segments()
            .iter()
            .map(|s| point_segment_dist2(p, s[0], s[1]))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    #[test]
    fn koch_vertex_counts_and_area() {
        for k in 0..5 {
            let p = LatticePolygon::koch_snowflake(k);
            assert_eq!(p.lattice_vertices().len(), 3 * 4usize.pow(k));
            // Perimeter of the level-k prefractal is 3·(4/3)^k.
            let per = 3.0 * (4.0f64 / 3.0).powi(k as i32);
            assert!((p.perimeter() - per).abs() < 1e-12 * per);
        }
        // Level 1 is the hexagram: triangle area times 4/3.
        let tri = 3f64.sqrt() / 4.0;
        let star = LatticePolygon::koch_snowflake(1);
        assert!((star.area() - tri * 4.0 / 3.0).abs() < 1e-12);
        // Level k adds 3·4^(i-1) triangles of area 9^-i: 1 + (3/5)(1 − (4/9)^k).
        let a4 = LatticePolygon::koch_snowflake(4).area();
        assert!((a4 / tri - (1.0 + 0.6 * (1.0 - (4.0f64 / 9.0).powi(4)))).abs() < 1e-12);
    }

    #[test]
    fn triangle_membership() {
        let p = LatticePolygon::koch_snowflake(0);
        let c = [0.5, 3f64.sqrt() / 6.0];
        assert!(p.contains(c));
        assert!(!p.contains([0.5, -0.01]));
        assert!(!p.contains([1.1, 0.1]));
        let d = p.boundary_distance(c);
        assert!((d - 3f64.sqrt() / 6.0).abs() < 1e-14);
    }

    #[test]
    fn l_shape_membership() {
        let p = LatticePolygon::l_shape();
        assert!(p.contains([0.25, 0.75]));
        assert!(p.contains([0.75, 0.25]));
        assert!(!p.contains([0.75, 0.75]));
        assert!(!p.contains([1.25, 0.25]));
        assert!((p.area() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn row_scan_agrees_with_pointwise() {
        let p = LatticePolygon::koch_snowflake(3);
        let h = 1.0 / 97.0;
        let mut row = vec![false; 150];
        for j in 0..140 {
            let y = -0.4 + j as f64 * h;
            p.classify_row(y, -0.3, h, &mut row);
            for (i, &r) in row.iter().enumerate() {
                assert_eq!(r, p.contains([-0.3 + i as f64 * h, y]));
            }
        }
    }

    #[test]
    fn bvh_distance_matches_brute_force() {
        let p = LatticePolygon::koch_snowflake(3);
        let mut s = 0.123f64;
        for _ in 0..500 {
            s = (s * 9301.0 + 49297.0) % 233280.0;
            let x = -0.4 + 1.8 * s / 233280.0;
            s = (s * 9301.0 + 49297.0) % 233280.0;
            let y = -0.5 + 1.6 * s / 233280.0;
            let a = p.boundary_distance([x, y]);
            let b = brute_distance(&p, [x, y]);
            assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn box_distance_is_set_distance() {
        let p = LatticePolygon::l_shape();
        // Box inside the lower arm.
        let d = p.box_boundary_distance([0.2, 0.2], [0.3, 0.3]);
        assert!((d - 0.2).abs() < 1e-15);
        // Box straddling the re-entrant corner.
        assert_eq!(p.box_boundary_distance([0.4, 0.4], [0.6, 0.6]), 0.0);
        // Box in the notch; the nearest features are the notch edges.
        let d = p.box_boundary_distance([0.8, 0.8], [0.9, 0.9]);
        assert!((d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn edges_within_radius() {
        let p = LatticePolygon::unit_square();
        let mut hits = Vec::new();
        p.edges_within([0.1, 0.5], 0.2, |i, d2| hits.push((i, d2)));
        assert_eq!(hits.len(), 1);
        assert!((hits[0].1 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn segments_inside_l_shape() {
        let l = LatticePolygon::l_shape();
        assert!(l.segment_inside([0.1, 0.1], [0.9, 0.4]));
        assert!(l.segment_inside([0.1, 0.9], [0.4, 0.1]));
        // Crosses the notch.
        assert!(!l.segment_inside([0.9, 0.4], [0.4, 0.9]));
        // Touches the reentrant corner.
        assert!(!l.segment_inside([0.25, 0.75], [0.75, 0.25]));
        assert!(!l.segment_inside([0.5, 0.5], [0.2, 0.2]));
        assert!(segments_meet([0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]));
        assert!(!segments_meet([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]));
    }
}
