// Discretisations against closed forms and dense linear algebra.

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use degenop::bessel1d::{assemble, assemble_model, FormSpec};
use degenop::grid::lp_norm;
use degenop::multiplier::ModeOperators;
use degenop::params::beta_map;
use degenop::semigroup::{evolve, uniform_times, Forcing, Scheme};
use degenop::transforms::apply_power;
use degenop::{make_grid, Complex64 as C, Field, ModelParams, XBox};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

fn neumann_eigenvalues(c: f64, j: usize) -> Vec<f64> {
    let g = Arc::new(make_grid(j, 1.0, 1.0, None).unwrap());
    let op = assemble(&FormSpec::bessel(c), g).unwrap();
    let n = op.j();
    let k = op.k.to_dense();
    let s = DMatrix::from_fn(n, n, |a, b| k[(a, b)].re / (op.w[a] * op.w[b]).sqrt());
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn radial_laplacian_eigenvalues_on_the_unit_interval() {
    // y u'' + u' with u'(1) = 0: J0(k y), k the first zero of J1.
    let ev = neumann_eigenvalues(1.0, 400);
    assert!(ev[0].abs() < 1e-10);
    assert_relative_eq!(ev[1], 3.831_705_970_207_512_f64.powi(2), max_relative = 1e-3);
    // y^2 u'' + 2 y u': sin(k y)/(k y), k the first positive root of tan k = k.
    let ev = neumann_eigenvalues(2.0, 400);
    assert_relative_eq!(ev[1], 4.493_409_457_909_064_f64.powi(2), max_relative = 1e-3);
}

#[test]
fn flat_neumann_eigenvalues_are_cosine_modes() {
    let ev = neumann_eigenvalues(0.0, 400);
    for n in 1..4 {
        assert_relative_eq!(ev[n], (n as f64 * PI).powi(2), max_relative = 1e-4);
    }
}

#[test]
fn weighted_norm_of_exponential() {
    // int_0^inf y e^{-2y} dy = 1/4.
    let g = Arc::new(make_grid(4000, 30.0, 1.0, None).unwrap());
    let u = Field::from_fn(g, |_, y| C::new((-y).exp(), 0.0));
    assert_relative_eq!(lp_norm(&u, 2.0, 1.0), 0.5, max_relative = 1e-4);
    // int_0^inf y^{1/2} e^{-3y} dy = Gamma(3/2) / 3^{3/2}.
    let want = (PI.sqrt() / 2.0 / 3f64.powf(1.5)).powf(1.0 / 3.0);
    assert_relative_eq!(lp_norm(&u, 3.0, 0.5), want, max_relative = 1e-3);
}

#[test]
fn power_map_preserves_the_closed_form_norm() {
    // T_1 e^{-s} = sqrt(2) e^{-y^2}; the source weight is beta_map(1, m).m.
    let m_target = 1.0;
    let m_source = beta_map(1.0, 0.0, 0.0, 0.0, m_target).unwrap().m;
    assert_eq!(m_source, 0.0);
    // Grading 2 makes the target mesh uniform.
    let g = Arc::new(make_grid(2000, 25.0, 2.0, None).unwrap());
    let u = Field::from_fn(g, |_, s| C::new((-s).exp(), 0.0));
    let tu = apply_power(&u, 1.0, 2.0).unwrap();
    assert_relative_eq!(tu.grid.y_max, 5.0, max_relative = 1e-14);
    for (y, v) in tu.grid.y_nodes.iter().zip(&tu.values).step_by(97) {
        assert_relative_eq!(v.re, 2f64.sqrt() * (-y * y).exp(), max_relative = 1e-12, epsilon = 1e-300);
    }
    assert_relative_eq!(lp_norm(&u, 2.0, m_source), 0.5f64.sqrt(), max_relative = 1e-4);
    assert_relative_eq!(lp_norm(&tu, 2.0, m_target), 0.5f64.sqrt(), max_relative = 1e-4);
}

#[test]
fn model_resolvent_matches_dense_solve() {
    let m = ModelParams::new(vec![0.3], 0.5, 1.0, 0.0, 2.0).unwrap();
    let g = Arc::new(make_grid(96, 4.0, 4.0 / 3.0, None).unwrap());
    let op = assemble_model(&m, &[1.3], g.clone()).unwrap();
    let f: Vec<C> = g.y_nodes.iter().map(|&y| C::new((-y).exp(), y.sin())).collect();
    let lambda = C::new(0.2, 3.0);
    let u = op.resolve(lambda, &f).unwrap();
    let a = DMatrix::<C>::identity(96, 96) * lambda - op.matrix().to_dense();
    let want = a.lu().solve(&DVector::from_vec(f)).unwrap();
    for (x, y) in u.iter().zip(want.iter()) {
        assert!((x - y).norm() <= 1e-11 * want.camax(), "{x} vs {y}");
    }
}

#[test]
fn time_steppers_match_dense_step_matrices() {
    let m = ModelParams::new(vec![0.3], 0.5, 1.0, 0.0, 2.0).unwrap();
    let g = Arc::new(make_grid(48, 3.0, 4.0 / 3.0, Some(XBox { length: 2.0 * PI, nx: 4, dim: 1 })).unwrap());
    let ops = ModeOperators::model(&m, g.clone()).unwrap();
    let u0 = Field::from_fn(g.clone(), |x, y| C::new((x[0]).cos() * (-y * y).exp(), (2.0 * x[0]).sin() * y * (-y).exp()));
    let (t_end, steps) = (0.4, 10);
    let dt = t_end / steps as f64;
    let modes = u0.to_modes();
    let j = g.j();
    let scale = modes.max_abs();
    for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
        let run = evolve(&u0, &Forcing::None, &ops, scheme, &uniform_times(t_end, steps), |_| false).unwrap();
        let got = run.last().to_modes();
        for (k, op) in ops.ops.iter().enumerate() {
            let mm = op.matrix().to_dense();
            let id = DMatrix::<C>::identity(j, j);
            let step = match scheme {
                Scheme::BackwardEuler => (&id - &mm * C::from(dt)).try_inverse().unwrap(),
                Scheme::CrankNicolson => {
                    (&id - &mm * C::from(dt / 2.0)).try_inverse().unwrap() * (&id + &mm * C::from(dt / 2.0))
                }
            };
            let mut v = DVector::from_column_slice(&modes.values[k * j..(k + 1) * j]);
            for _ in 0..steps {
                v = &step * v;
            }
            for (a, b) in got.values[k * j..(k + 1) * j].iter().zip(v.iter()) {
                assert!((a - b).norm() <= 1e-10 * scale, "{scheme:?} mode {k}: {a} vs {b}");
            }
        }
    }
}
