//! Seeded random probes and power-iteration norm estimates in weighted
//! inner products.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::jet::Profile;

type C = Complex64;

/// Generator for one named stream under a base seed. Streams with different
/// names are independent and do not depend on scheduling order.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a of the name, folded into the seed.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h.rotate_left(17))
}

/// Entries uniform in the unit square of the complex plane, centred.
pub fn random_vector(rng: &mut impl Rng, n: usize) -> Vec<C> {
    (0..n)
        .map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// A random smooth profile supported in `[0, support]`, flat near 0.
pub fn random_profile(rng: &mut impl Rng, support: f64) -> Profile {
    let r1 = support * rng.random_range(0.4..1.0);
    let r0 = r1 * rng.random_range(0.05..0.6);
    let width = 0.3 * (r1 - r0);
    Profile {
        height: rng.random_range(0.5..1.5),
        r0,
        r1,
        bump: rng.random_range(-0.8..0.8),
        center: 0.5 * (r0 + r1),
        width,
    }
}

/// `(s (2 - s))^2` with `s = y / eps` on `[0, 2 eps]`, zero beyond.
pub fn bump(y: f64, eps: f64) -> f64 {
    let s = y / eps;
    if s < 2.0 { (s * (2.0 - s)).powi(2) } else { 0.0 }
}

/// Bump widths for boundary probes: three fixed ones and three tied to the
/// mesh (the 2nd, 4th and 8th node), so that refinement reaches finer scales.
pub fn boundary_scales(y_nodes: &[f64], y_max: f64) -> Vec<f64> {
    let mut s = vec![0.125 * y_max, 0.0625 * y_max, 0.025 * y_max];
    s.extend([2usize, 4, 8].iter().filter(|&&k| k < y_nodes.len()).map(|&k| y_nodes[k]));
    s
}

pub fn weighted_norm(u: &[C], w: &[f64]) -> f64 {
    u.iter().zip(w).map(|(a, w)| a.norm_sqr() * w).sum::<f64>().sqrt()
}

/// Estimate `||A||` in `L^2(w)` from `probes` random starts refined by
/// `steps` rounds of power iteration on `A* A`. `adjoint` must be the
/// adjoint in the same weighted product. The result is a lower bound that
/// is sharp when the top singular vector is reachable.
pub fn operator_norm(
    apply: impl Fn(&[C]) -> Vec<C>,
    adjoint: impl Fn(&[C]) -> Vec<C>,
    w: &[f64],
    rng: &mut impl Rng,
    probes: usize,
    steps: usize,
) -> f64 {
    let n = w.len();
    let mut best: f64 = 0.0;
    for _ in 0..probes {
        let mut x = random_vector(rng, n);
        for step in 0..=steps {
            let nx = weighted_norm(&x, w);
            if nx == 0.0 || !nx.is_finite() {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            let ax = apply(&x);
            let r = weighted_norm(&ax, w);
            if !r.is_finite() {
                return f64::INFINITY;
            }
            best = best.max(r);
            if step < steps {
                x = adjoint(&ax);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<C> = random_vector(&mut stream(7, "x"), 4);
        let b: Vec<C> = random_vector(&mut stream(7, "x"), 4);
        let c: Vec<C> = random_vector(&mut stream(7, "y"), 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn diagonal_norm_is_found() {
        let w = vec![1.0, 2.0, 0.5, 1.0];
        let d = [0.3, -2.0, 1.1, 0.2];
        let f = |x: &[C]| x.iter().zip(&d).map(|(a, b)| a * *b).collect::<Vec<_>>();
        let est = operator_norm(f, f, &w, &mut stream(1, "t"), 4, 10);
        assert!((est - 2.0).abs() < 1e-6, "{est}");
    }
}
