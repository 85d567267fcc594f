//! Complex tridiagonal matrices: partial-pivoting LU, solves with the matrix
//! and its conjugate transpose, a 1-norm condition estimate, and Sturm
//! counts for the real symmetric case.

use nalgebra::DMatrix;
use num_complex::Complex64;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Rows `i` hold `dl[i-1], d[i], du[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiag {
    pub dl: Vec<C>,
    pub d: Vec<C>,
    pub du: Vec<C>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self { dl: vec![ZERO; off], d: vec![ZERO; n], du: vec![ZERO; off] }
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn matvec(&self, x: &[C]) -> Vec<C> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.d[i] * x[i];
                if i > 0 {
                    s += self.dl[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.du[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// `A^H x`.
    pub fn matvec_h(&self, x: &[C]) -> Vec<C> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.d[i].conj() * x[i];
                if i > 0 {
                    s += self.du[i - 1].conj() * x[i - 1];
                }
                if i + 1 < n {
                    s += self.dl[i].conj() * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// `self + s * diag(w)`.
    pub fn shifted(&self, s: C, w: &[f64]) -> Tridiag {
        let mut t = self.clone();
        t.d.iter_mut().zip(w).for_each(|(d, &wi)| *d += s * wi);
        t
    }

    pub fn adjoint(&self) -> Tridiag {
        Tridiag {
            dl: self.du.iter().map(|v| v.conj()).collect(),
            d: self.d.iter().map(|v| v.conj()).collect(),
            du: self.dl.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn norm1(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|j| {
                let mut s = self.d[j].norm();
                if j > 0 {
                    s += self.du[j - 1].norm();
                }
                if j + 1 < n {
                    s += self.dl[j].norm();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C> {
        let n = self.n();
        let mut m = DMatrix::from_element(n, n, ZERO);
        for i in 0..n {
            m[(i, i)] = self.d[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.du[i];
                m[(i + 1, i)] = self.dl[i];
            }
        }
        m
    }

    pub fn factor(&self) -> Option<TridiagLu> {
        TridiagLu::new(self)
    }
}

/// LU factors in the layout of LAPACK `gttrf`.
#[derive(Clone, Debug)]
pub struct TridiagLu {
    dl: Vec<C>,
    d: Vec<C>,
    du: Vec<C>,
    du2: Vec<C>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    /// `None` when a pivot is exactly zero.
    pub fn new(a: &Tridiag) -> Option<Self> {
        let n = a.n();
        let (mut dl, mut d, mut du) = (a.dl.clone(), a.d.clone(), a.du.clone());
        let mut du2 = vec![ZERO; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].norm() >= dl[i].norm() {
                if d[i] != ZERO {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d.iter().any(|v| *v == ZERO || !v.is_finite()) {
            return None;
        }
        Some(Self { dl, d, du, du2, swapped })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Overwrite `b` with `A^{-1} b`.
    pub fn solve_in_place(&self, b: &mut [C]) {
        let n = self.n();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - self.dl[i] * b[i];
            } else {
                b[i + 1] = b[i + 1] - self.dl[i] * b[i];
            }
        }
        if n == 0 {
            return;
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    /// Overwrite `b` with `A^{-H} b`.
    pub fn solve_h_in_place(&self, b: &mut [C]) {
        let n = self.n();
        if n == 0 {
            return;
        }
        b[0] /= self.d[0].conj();
        if n > 1 {
            b[1] = (b[1] - self.du[0].conj() * b[0]) / self.d[1].conj();
        }
        for i in 2..n {
            b[i] = (b[i] - self.du[i - 1].conj() * b[i - 1] - self.du2[i - 2].conj() * b[i - 2])
                / self.d[i].conj();
        }
        for i in (0..n - 1).rev() {
            if self.swapped[i] {
                let t = b[i + 1];
                b[i + 1] = b[i] - self.dl[i].conj() * t;
                b[i] = t;
            } else {
                b[i] = b[i] - self.dl[i].conj() * b[i + 1];
            }
        }
    }

    pub fn solve(&self, b: &[C]) -> Vec<C> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_h(&self, b: &[C]) -> Vec<C> {
        let mut x = b.to_vec();
        self.solve_h_in_place(&mut x);
        x
    }

    /// Hager-Higham estimate of `||A^{-1}||_1`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        let norm1 = |v: &[C]| v.iter().map(|z| z.norm()).sum::<f64>();
        let mut x = vec![C::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            let e = norm1(&y);
            if e <= est {
                break;
            }
            est = e;
            let sgn: Vec<C> = y
                .iter()
                .map(|z| if z.norm() > 0.0 { z / z.norm() } else { C::new(1.0, 0.0) })
                .collect();
            let z = self.solve_h(&sgn);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if j == last_j || zmax <= zx {
                break;
            }
            last_j = j;
            x = vec![ZERO; n];
            x[j] = C::new(1.0, 0.0);
        }
        let alt: Vec<C> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                C::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let alt_est = 2.0 * norm1(&self.solve(&alt)) / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// Number of eigenvalues below `sigma` of the real symmetric tridiagonal
/// matrix with diagonal `d` and off-diagonal `e`, from the signs of the
/// LDL^T pivots of `T - sigma I`.
pub fn sturm_count(d: &[f64], e: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] };
        q = d[i] - sigma - if i == 0 { 0.0 } else { off / q };
        if q == 0.0 {
            q = f64::EPSILON * (d[i].abs() + sigma.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvalue with index `k` (ascending) of a symmetric tridiagonal matrix, by bisection.
pub fn tridiag_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tridiag(n: usize, rng: &mut ChaCha8Rng, diag_boost: f64) -> Tridiag {
        let mut r = || C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mut t = Tridiag::zeros(n);
        for i in 0..n {
            t.d[i] = r() + diag_boost;
            if i + 1 < n {
                t.dl[i] = r();
                t.du[i] = r();
            }
        }
        t
    }

    #[test]
    fn solves_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[1usize, 2, 3, 10, 40] {
            // No diagonal boost, so pivoting is exercised.
            let t = random_tridiag(n, &mut rng, 0.0);
            let lu = t.factor().unwrap();
            let b: Vec<C> = (0..n).map(|i| C::new(i as f64, 1.0)).collect();
            let x = lu.solve(&b);
            let r = t.matvec(&x);
            let err = r.iter().zip(&b).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} err={err}");
            let xh = lu.solve_h(&b);
            let rh = t.matvec_h(&xh);
            let err = rh.iter().zip(&b).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "adjoint n={n} err={err}");
        }
    }

    #[test]
    fn condition_estimate_is_a_lower_bound_close_to_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tridiag(30, &mut rng, 0.5);
        let inv = t.to_dense().try_inverse().unwrap();
        let exact = (0..30)
            .map(|j| inv.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let est = t.factor().unwrap().inverse_norm1_estimate();
        assert!(est <= exact * (1.0 + 1e-10));
        assert!(est >= 0.3 * exact, "est {est} exact {exact}");
    }

    #[test]
    fn bisection_matches_dense_eigenvalues() {
        let d: Vec<f64> = (0..20).map(|i| 2.0 + (i as f64).sin()).collect();
        let e: Vec<f64> = (0..19).map(|i| 0.5 + 0.1 * i as f64).collect();
        let m = DMatrix::from_fn(20, 20, |i, j| {
            if i == j {
                d[i]
            } else if i + 1 == j {
                e[i]
            } else if j + 1 == i {
                e[j]
            } else {
                0.0
            }
        });
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for k in [0, 7, 19] {
            assert!((tridiag_eigenvalue(&d, &e, k) - ev[k]).abs() < 1e-12);
        }
    }
}
