//! Box-counting check of the d-set property of `∂Ω`.
//!
//! The boundary measure of a ball `B(P, r)` is estimated from a dense boundary
//! sample as `count · μ(∂Ω) / N`. The exponent is the least-squares slope of
//! the mean log-measure against `log r`; `c1`, `c2` are the extreme values of
//! `μ(B(P,r)∩∂Ω) / r^d` over all centres and radii.

use serde::{Deserialize, Serialize};

use super::{Domain, Point};
use crate::error::{Error, Result};

/// Smallest mean sample count per ball accepted at the smallest radius.
pub const MIN_MEAN_COUNT: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DSetReport {
    pub estimated_d: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub radii_tested: Vec<f64>,
    /// `per_point_counts[i][k]`: samples within `radii_tested[k]` of centre `i`.
    pub per_point_counts: Vec<Vec<usize>>,
    pub samples: usize,
}

/// Runs the check with `points` centres drawn from the boundary and `samples`
/// boundary points for the measure estimate.
pub fn dset_check(dom: &Domain, radii: &[f64], points: usize, samples: usize, seed: u64) -> Result<DSetReport> {
    if radii.len() < 2 {
        return Err(Error::InsufficientRadii);
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParam("radii must be positive and strictly descending".into()));
    }
    if points == 0 || samples == 0 {
        return Err(Error::InvalidParam("points and samples must be positive".into()));
    }
    let mut pts = dom.sample_boundary(samples, seed);
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let centres: Vec<Point> = dom.sample_boundary(points, seed ^ 0x9e37_79b9_7f4a_7c15);
    let weight = dom.boundary_measure() / samples as f64;
    let rmax = radii[0];
    let counts: Vec<Vec<usize>> = centres
        .iter()
        .map(|p| {
            let lo = pts.partition_point(|q| q[0] < p[0] - rmax);
            let hi = pts.partition_point(|q| q[0] <= p[0] + rmax);
            let mut c = vec![0usize; radii.len()];
            for q in &pts[lo..hi] {
                let d2 = (0..3).map(|a| (q[a] - p[a]).powi(2)).sum::<f64>();
                for (k, r) in radii.iter().enumerate() {
                    if d2 <= r * r {
                        c[k] += 1;
                    } else {
                        break;
                    }
                }
            }
            c
        })
        .collect();
    let last = radii.len() - 1;
    let mean_last = counts.iter().map(|c| c[last] as f64).sum::<f64>() / counts.len() as f64;
    if mean_last < MIN_MEAN_COUNT {
        return Err(Error::Undersampled { radius: radii[last], mean_count: mean_last });
    }
    // Least squares on (log r, mean log μ).
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = (0..radii.len())
        .map(|k| {
            let logs: Vec<f64> =
                counts.iter().filter(|c| c[k] > 0).map(|c| (c[k] as f64 * weight).ln()).collect();
            logs.iter().sum::<f64>() / logs.len().max(1) as f64
        })
        .collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let d = sxy / sxx;
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    for c in &counts {
        for (k, r) in radii.iter().enumerate() {
            let v = c[k] as f64 * weight / r.powf(d);
            c1 = c1.min(v);
            c2 = c2.max(v);
        }
    }
    Ok(DSetReport {
        estimated_d: d,
        c1_hat: c1,
        c2_hat: c2,
        radii_tested: radii.to_vec(),
        per_point_counts: counts,
        samples,
    })
}

/// `count` radii spaced geometrically from `rmax` down to `rmin`.
pub fn geometric_radii(rmax: f64, rmin: f64, count: usize) -> Vec<f64> {
    let q = (rmin / rmax).powf(1.0 / (count.max(2) - 1) as f64);
    (0..count).map(|k| rmax * q.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::gallery_level;

    #[test]
    fn single_radius_is_rejected() {
        let dom = gallery_level("unit_square", None).unwrap();
        assert!(matches!(dset_check(&dom, &[0.1], 10, 1000, 0), Err(Error::InsufficientRadii)));
        assert!(dset_check(&dom, &[0.1, 0.2], 10, 1000, 0).is_err());
    }

    #[test]
    fn sparse_sampling_is_flagged() {
        let dom = gallery_level("unit_square", None).unwrap();
        let r = dset_check(&dom, &[0.1, 0.001], 10, 400, 0);
        assert!(matches!(r, Err(Error::Undersampled { .. })));
    }

    #[test]
    fn radii_are_geometric() {
        let r = geometric_radii(0.5, 0.005, 5);
        assert_eq!(r.len(), 5);
        assert!((r[4] - 0.005).abs() < 1e-15);
        assert!((r[1] / r[0] - r[2] / r[1]).abs() < 1e-12);
    }
}
