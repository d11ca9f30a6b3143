//! Symmetric banded matrices, their Cholesky factor, and a Lanczos iteration
//! for the top eigenpair of a definite pencil.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band: `band[i][d] = M[i][i−d]`.
#[derive(Debug, Clone)]
pub struct Banded {
    pub n: usize,
    pub bw: usize,
    band: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Banded { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn slot(&self, i: usize, d: usize) -> usize {
        i * (self.bw + 1) + d
    }

    /// Adds `v` to `M[i][j]` (and its mirror).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        assert!(d <= self.bw, "entry outside the band");
        let s = self.slot(i, d);
        self.band[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.band[self.slot(i, i - j)]
        }
    }

    /// Adds `w · s sᵀ` for a sparse vector `s`.
    pub fn add_outer(&mut self, s: &[(usize, f64)], w: f64) {
        for &(i, a) in s {
            for &(j, b) in s {
                if j <= i {
                    let d = i - j;
                    let k = self.slot(i, d);
                    self.band[k] += w * a * b;
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.band[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut acc = row[0] * x[i];
            for j in lo..i {
                let m = row[i - j];
                acc += m * x[j];
                y[j] += m * x[i];
            }
            y[i] += acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// In-place Cholesky `M = L Lᵀ`; `L` keeps the band.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.band[self.slot(i, i - j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= self.band[self.slot(i, i - k)] * self.band[self.slot(j, j - k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::SingularConstraint(format!("pivot {s:e} at row {i}")));
                    }
                    let k = self.slot(i, 0);
                    self.band[k] = s.sqrt();
                } else {
                    let k = self.slot(i, i - j);
                    self.band[k] = s / self.band[self.slot(j, 0)];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: Banded,
}

impl BandedCholesky {
    /// `x ← L⁻¹ x`.
    pub fn solve_lower(&self, x: &mut [f64]) {
        let l = &self.l;
        for i in 0..l.n {
            let lo = i.saturating_sub(l.bw);
            let mut s = x[i];
            for k in lo..i {
                s -= l.band[l.slot(i, i - k)] * x[k];
            }
            x[i] = s / l.band[l.slot(i, 0)];
        }
    }

    /// `x ← L⁻ᵀ x`.
    pub fn solve_upper(&self, x: &mut [f64]) {
        let l = &self.l;
        for i in (0..l.n).rev() {
            x[i] /= l.band[l.slot(i, 0)];
            let xi = x[i];
            let lo = i.saturating_sub(l.bw);
            for k in lo..i {
                x[k] -= l.band[l.slot(i, i - k)] * xi;
            }
        }
    }
}

/// Top eigenpair of `A x = λ B x` with `B` positive definite.
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `‖A x − λ B x‖ / (λ ‖B x‖)` for the returned pair.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lanczos with full reorthogonalisation on `L⁻¹ A L⁻ᵀ`, restarted from the
/// current Ritz vector until the relative residual drops below `tol`.
pub fn top_eigen(a: &Banded, b: &Banded, tol: f64, max_steps: usize) -> Result<TopEigen> {
    let n = a.n;
    if n == 0 {
        return Err(Error::SingularConstraint("no free unknowns".into()));
    }
    let chol = b.clone().cholesky()?;
    let op = |x: &[f64], out: &mut Vec<f64>| {
        let mut y = x.to_vec();
        chol.solve_upper(&mut y);
        out.resize(n, 0.0);
        a.matvec(&y, out);
        chol.solve_lower(out);
    };
    let m = max_steps.min(n).max(1);
    // Deterministic start with every component excited.
    let mut start: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 104_729) as f64 / 104_729.0).collect();
    let mut total = 0;
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    for _restart in 0..20 {
        let nrm = dot(&start, &start).sqrt();
        let mut q: Vec<Vec<f64>> = vec![start.iter().map(|x| x / nrm).collect()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut w = Vec::new();
        for k in 0..m {
            op(&q[k], &mut w);
            total += 1;
            let al = dot(&w, &q[k]);
            alpha.push(al);
            for qi in &q {
                let c = dot(&w, qi);
                w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
            for qi in &q {
                let c = dot(&w, qi);
                w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
            let bt = dot(&w, &w).sqrt();
            if k + 1 == m || bt < 1e-14 * al.abs().max(1e-300) {
                break;
            }
            beta.push(bt);
            q.push(w.iter().map(|x| x / bt).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (top, _) = eig.eigenvalues.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        let theta = eig.eigenvalues[top];
        let mut u = vec![0.0; n];
        for (i, qi) in q.iter().take(k).enumerate() {
            let s = eig.eigenvectors[(i, top)];
            u.iter_mut().zip(qi).for_each(|(x, y)| *x += s * y);
        }
        op(&u, &mut w);
        let res = w.iter().zip(&u).map(|(x, y)| (x - theta * y).powi(2)).sum::<f64>().sqrt() / theta.abs().max(1e-300);
        best = (theta, u.clone());
        if res < tol {
            let mut x = u;
            chol.solve_upper(&mut x);
            return Ok(TopEigen { value: theta, vector: x, iterations: total, residual: res });
        }
        start = u;
    }
    Err(Error::Numerical(format!("Lanczos did not converge; last Ritz value {}", best.0)))
}

/// Dense reference: top eigenvalue of `A x = λ B x` via `B = L Lᵀ`.
pub fn dense_top_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let l = b.clone().cholesky().ok_or_else(|| Error::SingularConstraint("dense form not positive definite".into()))?;
    let linv = l.l().try_inverse().ok_or_else(|| Error::Numerical("singular factor".into()))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(SymmetricEigen::new(c).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> Banded {
        let mut m = Banded::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
        }
        m
    }

    #[test]
    fn cholesky_solves() {
        let m = laplacian(20);
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; 20];
        m.matvec(&x, &mut b);
        let c = m.cholesky().unwrap();
        c.solve_lower(&mut b);
        c.solve_upper(&mut b);
        for i in 0..20 {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lanczos_matches_closed_form() {
        // Eigenvalues of the 1D Dirichlet Laplacian: 2 − 2cos(kπ/(n+1)).
        let n = 60;
        let a = laplacian(n);
        let mut b = Banded::zeros(n, 0);
        for i in 0..n {
            b.add(i, i, 1.0 + (i % 3) as f64);
        }
        let top = top_eigen(&a, &b, 1e-10, 80).unwrap();
        let dense = dense_top_eigen(&a.to_dense(), &b.to_dense()).unwrap();
        assert!((top.value - dense).abs() < 1e-9 * dense);
        let mut plain = Banded::zeros(n, 0);
        for i in 0..n {
            plain.add(i, i, 1.0);
        }
        let t = top_eigen(&a, &plain, 1e-10, 80).unwrap();
        let want = 2.0 - 2.0 * (n as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((t.value - want).abs() < 1e-9);
    }

    #[test]
    fn indefinite_form_is_rejected() {
        let mut m = Banded::zeros(3, 1);
        m.add(0, 0, 1.0);
        m.add(1, 0, 2.0);
        m.add(1, 1, 1.0);
        m.add(2, 2, 1.0);
        assert!(matches!(m.cholesky(), Err(Error::SingularConstraint(_))));
    }
}
