//! Smooth partition of unity subordinate to W₃.
//!
//! Each cube `Q_j` carries a tensor-product bump `ψ_j` equal to 1 on `Q_j` and
//! vanishing outside `(17/16)Q_j`. With `Φ = Σ ψ_k` the partition is
//! `φ_j = ψ_j / m(Φ)`, where `m` is a smooth maximum of `Φ` and 1 that equals
//! `Φ` whenever `Φ ≥ 1`. Hence `Σ φ_j = 1` wherever `Φ ≥ 1`, which includes
//! every `Q_j`, and `0 ≤ φ_j ≤ 1` everywhere.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::smooth::{step_down, step_down_deriv};
use crate::whitney::{dyadic, DyadicCube};

/// Half-width of the plateau of `ψ_j`, in units of `ℓ(Q_j)`.
pub const PLATEAU: f64 = 0.5;
/// Half-width of the support of `ψ_j`, in units of `ℓ(Q_j)`.
pub const SUPPORT: f64 = 17.0 / 32.0;

const RAMP: f64 = SUPPORT - PLATEAU;

/// One-dimensional factor of `ψ` as a function of `|t|/ℓ` and its derivative.
#[inline]
pub fn profile(u: f64) -> (f64, f64) {
    let t = (u - PLATEAU) / RAMP;
    (step_down(t), step_down_deriv(t) / RAMP)
}

/// Smooth maximum used in the denominator: `m(Φ) = Φ` for `Φ ≥ 1`, `m = 1` for
/// `Φ ≤ ½`. Returns `(m, dm/dΦ)`.
#[inline]
pub fn smooth_max(phi: f64) -> (f64, f64) {
    let s = 1.0 - phi;
    if s <= 0.0 {
        return (phi, 1.0);
    }
    // H(s) = 1 − step_down(2s) rises from 0 at s = 0 to 1 at s = ½.
    let h = 1.0 - step_down(2.0 * s);
    let dh = -2.0 * step_down_deriv(2.0 * s);
    (phi + s * h, 1.0 - h - s * dh)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bump {
    pub cube: DyadicCube,
    pub center: Point,
    pub edge: f64,
}

#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub n: usize,
    pub bumps: Vec<Bump>,
    key_level: u8,
    index: HashMap<[i64; 3], Vec<u32>>,
}

/// Value and gradient of one `φ_j` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub j: usize,
    pub value: f64,
    pub grad: Point,
}

pub fn build_partition(w3: &[DyadicCube], n: usize) -> PartitionOfUnity {
    let bumps: Vec<Bump> =
        w3.iter().map(|c| Bump { cube: *c, center: c.center(n), edge: c.edge() }).collect();
    let key_level = w3.iter().map(|c| c.level).min().unwrap_or(0);
    let s = 1.0 / dyadic(key_level);
    let mut index: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    for (j, b) in bumps.iter().enumerate() {
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..n {
            lo[a] = ((b.center[a] - SUPPORT * b.edge) * s).floor() as i64;
            hi[a] = ((b.center[a] + SUPPORT * b.edge) * s).floor() as i64;
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    index.entry([x, y, z]).or_default().push(j as u32);
                }
            }
        }
    }
    PartitionOfUnity { n, bumps, key_level, index }
}

impl PartitionOfUnity {
    pub fn len(&self) -> usize {
        self.bumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bumps.is_empty()
    }

    /// `ψ_j(x)` and its gradient.
    #[inline]
    pub fn psi(&self, j: usize, x: &Point) -> (f64, Point) {
        let b = &self.bumps[j];
        let mut f = [1.0; 3];
        let mut df = [0.0; 3];
        for a in 0..self.n {
            let t = x[a] - b.center[a];
            let (v, dv) = profile(t.abs() / b.edge);
            if v == 0.0 {
                return (0.0, [0.0; 3]);
            }
            f[a] = v;
            df[a] = dv * t.signum() / b.edge;
        }
        let val = f[0] * f[1] * f[2];
        let mut g = [0.0; 3];
        for a in 0..self.n {
            let mut p = df[a];
            for c in 0..self.n {
                if c != a {
                    p *= f[c];
                }
            }
            g[a] = p;
        }
        (val, g)
    }

    /// Bumps whose support box may contain `x`.
    pub fn candidates(&self, x: &Point) -> &[u32] {
        let s = 1.0 / dyadic(self.key_level);
        let mut k = [0i64; 3];
        for a in 0..self.n {
            k[a] = (x[a] * s).floor() as i64;
        }
        self.index.get(&k).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// All `φ_j` that are nonzero at `x`, with analytic gradients.
    pub fn eval(&self, x: &Point) -> Vec<PhiValue> {
        let mut out = Vec::new();
        self.eval_into(x, &mut out);
        out
    }

    /// As [`eval`](Self::eval), reusing `out`.
    pub fn eval_into(&self, x: &Point, out: &mut Vec<PhiValue>) {
        out.clear();
        let mut total = 0.0;
        let mut gtotal = [0.0; 3];
        for &j in self.candidates(x) {
            let (v, g) = self.psi(j as usize, x);
            if v > 0.0 {
                total += v;
                for a in 0..3 {
                    gtotal[a] += g[a];
                }
                out.push(PhiValue { j: j as usize, value: v, grad: g });
            }
        }
        if out.is_empty() {
            return;
        }
        let (m, dm) = smooth_max(total);
        let inv = 1.0 / m;
        for p in out.iter_mut() {
            let psi = p.value;
            p.value = psi * inv;
            for a in 0..3 {
                p.grad[a] = p.grad[a] * inv - psi * dm * gtotal[a] * inv * inv;
            }
        }
    }

    /// Bumps whose open support box meets the open box `(lo, hi)`.
    pub fn meeting_box(&self, lo: &Point, hi: &Point) -> Vec<usize> {
        let s = 1.0 / dyadic(self.key_level);
        let (mut a, mut b) = ([0i64; 3], [0i64; 3]);
        for k in 0..self.n {
            a[k] = (lo[k] * s).floor() as i64;
            b[k] = (hi[k] * s).floor() as i64;
        }
        let mut out = Vec::new();
        for z in a[2]..=b[2] {
            for y in a[1]..=b[1] {
                for x in a[0]..=b[0] {
                    if let Some(v) = self.index.get(&[x, y, z]) {
                        out.extend(v.iter().map(|&j| j as usize));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&j| {
            let c = &self.bumps[j];
            (0..self.n).all(|k| {
                let r = SUPPORT * c.edge;
                c.center[k] - r < hi[k] && lo[k] < c.center[k] + r
            })
        });
        out
    }

    /// `Σ_j φ_j(x)`.
    pub fn sum(&self, x: &Point) -> f64 {
        self.eval(x).iter().map(|p| p.value).sum()
    }

    /// Whether `x` lies in the closed support box `(17/16)Q_j`.
    pub fn in_support(&self, j: usize, x: &Point) -> bool {
        let b = &self.bumps[j];
        (0..self.n).all(|a| (x[a] - b.center[a]).abs() <= SUPPORT * b.edge)
    }
}
