//! Gauss–Legendre rules.

/// Nodes and weights of the `m`-point rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_m.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 { 1.0 } else if m == 1 { z } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * pm - pm1) / (z * z - 1.0);
            let dz = pm / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite rule on `[a, b]` split at `breaks` (sorted, inside `[a, b]`),
/// with `pick(len)` points on each piece. Appends to `xs`, `ws`.
pub fn composite(
    a: f64,
    b: f64,
    breaks: &[f64],
    rules: &[(Vec<f64>, Vec<f64>)],
    pick: impl Fn(f64) -> usize,
    xs: &mut Vec<f64>,
    ws: &mut Vec<f64>,
) {
    let mut lo = a;
    for &t in breaks.iter().chain(std::iter::once(&b)) {
        if t > lo {
            let (gx, gw) = &rules[pick(t - lo)];
            let c = 0.5 * (lo + t);
            let r = 0.5 * (t - lo);
            for (x, w) in gx.iter().zip(gw) {
                xs.push(c + r * x);
                ws.push(r * w);
            }
            lo = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for m in 1..=8 {
            let (x, w) = gauss_legendre(m);
            for deg in 0..2 * m {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "m={m} deg={deg}");
            }
        }
    }

    #[test]
    fn composite_pieces() {
        let rules = vec![gauss_legendre(2), gauss_legendre(3)];
        let (mut xs, mut ws) = (vec![], vec![]);
        composite(0.0, 1.0, &[0.25, 0.25, 0.5], &rules, |len| if len < 0.3 { 1 } else { 0 }, &mut xs, &mut ws);
        assert_eq!(xs.len(), 3 + 3 + 2);
        let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(3)).sum();
        assert!((q - 0.25).abs() < 1e-15);
    }
}
