// The frequency-by-frequency solve against one monolithic solve in physical
// space. The x derivatives are explicit trigonometric sums, the y operator is
// the shared 1-d assembly, and the coupled system is block tridiagonal in y.

use std::f64::consts::PI;
use std::sync::Arc;

use degenop::multiplier::{ModeOperators, ModelPieces};
use degenop::{make_grid, Complex64 as C, Field, ModelParams, XBox};
use nalgebra::DMatrix;

/// `(D_x)_{il}` and `(D_xx)_{il}` from `(1/N) sum_k s(xi_k) e^{i xi_k (x_i - x_l)}`.
pub fn spectral_matrices(nx: usize, length: f64) -> (DMatrix<C>, DMatrix<C>) {
    let xi: Vec<f64> = (0..nx)
        .map(|k| {
            let kk = if k < nx / 2 { k as f64 } else { k as f64 - nx as f64 };
            2.0 * PI * kk / length
        })
        .collect();
    let h = length / nx as f64;
    let mut d1 = DMatrix::from_element(nx, nx, C::new(0.0, 0.0));
    let mut d2 = d1.clone();
    for i in 0..nx {
        for l in 0..nx {
            for &k in &xi {
                let e = C::from_polar(1.0 / nx as f64, k * (i as f64 - l as f64) * h);
                d1[(i, l)] += C::new(0.0, k) * e;
                d2[(i, l)] += -k * k * e;
            }
        }
    }
    (d1, d2)
}

/// Solve the block tridiagonal system `A u = b` by block elimination.
pub fn block_thomas(lower: &[DMatrix<C>], diag: &[DMatrix<C>], upper: &[DMatrix<C>], rhs: &[Vec<C>]) -> Vec<Vec<C>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut b: Vec<nalgebra::DVector<C>> = rhs.iter().map(|r| nalgebra::DVector::from_vec(r.clone())).collect();
    for j in 1..n {
        let lu = d[j - 1].clone().lu();
        let m = lower[j - 1].clone() * lu.solve(&DMatrix::identity(d[j - 1].nrows(), d[j - 1].nrows())).unwrap();
        d[j] = &d[j] - &m * &upper[j - 1];
        b[j] = &b[j] - &m * &b[j - 1];
    }
    let mut x = vec![nalgebra::DVector::zeros(0); n];
    x[n - 1] = d[n - 1].clone().lu().solve(&b[n - 1]).unwrap();
    for j in (0..n - 1).rev() {
        x[j] = d[j].clone().lu().solve(&(&b[j] - &upper[j] * &x[j + 1])).unwrap();
    }
    x.into_iter().map(|v| v.iter().copied().collect()).collect()
}

pub fn monolithic(model: &ModelParams, grid: Arc<degenop::Grid>, lambda: C, f: &Field) -> Field {
    let bx = grid.x_box.unwrap();
    let (nx, j) = (bx.nx, grid.j());
    let pieces = ModelPieces::new(model, grid.clone()).unwrap();
    let (d1, d2) = spectral_matrices(nx, bx.length);
    let a = model.a[0];
    let eye = DMatrix::<C>::identity(nx, nx);
    // Symbol K(xi) = K_B - 2i a xi T + xi^2 P, so i xi -> D_x and xi^2 -> -D_xx.
    let diag: Vec<DMatrix<C>> = (0..j)
        .map(|r| {
            &eye * (pieces.kb.d[r] + lambda * pieces.w[r]) - &d1 * (pieces.t.d[r] * 2.0 * a) - &d2 * C::from(pieces.p[r])
        })
        .collect();
    let upper: Vec<DMatrix<C>> = (0..j - 1).map(|r| &eye * pieces.kb.du[r] - &d1 * (pieces.t.du[r] * 2.0 * a)).collect();
    let lower: Vec<DMatrix<C>> = (0..j - 1).map(|r| &eye * pieces.kb.dl[r] - &d1 * (pieces.t.dl[r] * 2.0 * a)).collect();
    let rhs: Vec<Vec<C>> = (0..j).map(|r| (0..nx).map(|ix| f.slice(ix)[r] * pieces.w[r]).collect()).collect();
    let sol = block_thomas(&lower, &diag, &upper, &rhs);
    let mut values = vec![C::new(0.0, 0.0); nx * j];
    for (r, row) in sol.iter().enumerate() {
        for ix in 0..nx {
            values[ix * j + r] = row[ix];
        }
    }
    Field::new(grid, values).unwrap()
}

pub fn relative_gap(a: &Field, b: &Field) -> f64 {
    let num: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.values.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Relative gap between the split and monolithic solves, N = 1, Nx = 32, J = 128.
pub fn compare(model: ModelParams, lambda: C) -> f64 {
    let g = Arc::new(make_grid(128, 4.0, 1.0, Some(XBox { length: 2.0 * PI, nx: 32, dim: 1 })).unwrap());
    let f = Field::from_fn(g.clone(), |x, y| {
        let s = (x[0]).sin() + 0.5 * (3.0 * x[0]).cos() + 0.2 * (7.0 * x[0]).sin();
        C::new(s * (-y * y).exp(), 0.3 * (2.0 * x[0]).cos() * y * (-y).exp())
    });
    let split = ModeOperators::model(&model, g.clone()).unwrap().solve(lambda, &f).unwrap();
    let whole = monolithic(&model, g, lambda, &f);
    assert!(whole.max_abs() > 0.1);
    relative_gap(&split, &whole)
}

