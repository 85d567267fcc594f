use degenop::params::{beta_map, compose_beta, inverse_beta, shear_map, window};
use degenop::OperatorSpec;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

proptest! {
    #[test]
    fn power_maps_compose_like_their_exponents(
        b1 in -0.9f64..3.0, b2 in -0.9f64..3.0,
        a1 in -1.0f64..1.9, a2 in -1.0f64..1.9, c in -0.5f64..4.0, m in -0.5f64..3.0,
    ) {
        let inner = beta_map(b2, a1, a2, c, m).unwrap();
        let twice = beta_map(b1, inner.alpha1, inner.alpha2, inner.c, inner.m).unwrap();
        let once = beta_map(compose_beta(b1, b2), a1, a2, c, m).unwrap();
        prop_assert!(close(twice.alpha1, once.alpha1));
        prop_assert!(close(twice.alpha2, once.alpha2));
        prop_assert!(close(twice.c, once.c));
        prop_assert!(close(twice.m, once.m));
    }

    #[test]
    fn inverse_exponent_undoes_the_map(b in -0.9f64..3.0, a1 in -1.0f64..1.9, a2 in -1.0f64..1.9, c in -0.5f64..4.0, m in -0.5f64..3.0) {
        let img = beta_map(b, a1, a2, c, m).unwrap();
        let back = beta_map(inverse_beta(b), img.alpha1, img.alpha2, img.c, img.m).unwrap();
        prop_assert!(close(back.alpha1, a1) && close(back.alpha2, a2) && close(back.c, c) && close(back.m, m));
        prop_assert!(close(compose_beta(b, inverse_beta(b)), 0.0));
    }

    #[test]
    fn window_scales_by_the_power(b in -0.9f64..3.0, a1 in -1.0f64..1.9, a2 in -1.0f64..1.9, c in -0.5f64..4.0, m in -0.5f64..3.0, p in 1.1f64..6.0) {
        let w = window(a1, a2, c, p, m);
        let img = beta_map(b, a1, a2, c, m).unwrap();
        let wi = window(img.alpha1, img.alpha2, img.c, p, img.m);
        let k = b + 1.0;
        prop_assert!(close(wi.lower * k, w.lower));
        prop_assert!(close(wi.value * k, w.value));
        prop_assert!(close(wi.upper * k, w.upper));
    }

    #[test]
    fn shear_is_a_congruence_of_the_coefficient_block(
        q12 in -0.3f64..0.3, qv in prop::collection::vec(-0.4f64..0.4, 2),
        b in prop::collection::vec(-1.0f64..1.0, 2), c in 0.3f64..3.0, alpha in -0.5f64..1.5,
    ) {
        let spec = OperatorSpec::new(2, vec![1.0, q12, q12, 1.5], qv, 1.2, b.clone(), c, alpha, alpha).unwrap();
        let sheared = shear_map(&spec).unwrap();
        // x -> x - (b/c) y acts on the gradient (D_x, D_y) by an upper unitriangular matrix.
        let mut t = DMatrix::<f64>::identity(3, 3);
        t[(2, 0)] = -b[0] / c;
        t[(2, 1)] = -b[1] / c;
        let want = t.transpose() * spec.block_matrix() * &t;
        let got = sheared.block_matrix();
        for (x, y) in got.iter().zip(want.iter()) {
            prop_assert!(close(*x, *y), "{got} vs {want}");
        }
        prop_assert!(sheared.drift_b.iter().all(|&v| v == 0.0));
        prop_assert!(close(spec.block_matrix().determinant(), got.determinant()));
    }
}

#[test]
fn window_examples_by_hand() {
    // Laplacian in L^2: 0 < 1/2 < 1.
    let w = window(0.0, 0.0, 0.0, 2.0, 0.0);
    assert!(w.pass && w.lower == 0.0 && w.value == 0.5 && w.upper == 1.0);
    // Negative alpha1 lifts the lower end.
    let w = window(-0.5, -0.5, 0.0, 2.0, 0.5);
    assert!(!window(-0.5, -0.5, 0.0, 2.0, 0.0).pass);
    assert!(w.pass && w.lower == 0.5 && w.upper == 1.5);
    // (m+1)/p = 1.2 sits above c + 1 - alpha2 = 1.
    assert!(!window(0.0, 0.0, 0.0, 2.0, 1.4).pass);
}
