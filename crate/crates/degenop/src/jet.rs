//! Second-order forward jets for exact derivatives of test functions, and
//! the smooth compactly supported profiles that are constant near `y = 0`.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// `(f, f', f'')` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 { v: 0.0, d: 0.0, dd: 0.0 };

    pub fn var(x: f64) -> Self {
        Self { v: x, d: 1.0, dd: 0.0 }
    }

    pub fn cst(c: f64) -> Self {
        Self { v: c, d: 0.0, dd: 0.0 }
    }

    /// Compose with a scalar function given its value and two derivatives at `self.v`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Self {
            v: f0,
            d: f1 * self.d,
            dd: f2 * self.d * self.d + f1 * self.dd,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.v;
        self.chain(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }

    pub fn powi(self, n: i32) -> Self {
        let x = self.v;
        let f = n as f64;
        let f1 = if n == 0 { 0.0 } else { f * x.powi(n - 1) };
        let f2 = if n < 2 && n >= 0 { 0.0 } else { f * (f - 1.0) * x.powi(n - 2) };
        self.chain(x.powi(n), f1, f2)
    }

    pub fn sqrt(self) -> Self {
        self.powf(0.5)
    }

    pub fn scale(self, s: f64) -> Self {
        Self { v: s * self.v, d: s * self.d, dd: s * self.dd }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 { v: self.v + o.v, d: self.d + o.d, dd: self.dd + o.dd }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2 { v: self.v - o.v, d: self.d - o.d, dd: self.dd - o.dd }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        let inv = o.chain(1.0 / o.v, -1.0 / (o.v * o.v), 2.0 / (o.v * o.v * o.v));
        self * inv
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, c: f64) -> Jet2 {
        Jet2 { v: self.v + c, ..self }
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(self, c: f64) -> Jet2 {
        Jet2 { v: self.v - c, ..self }
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        self.scale(c)
    }
}

/// `exp(-1/t)` for `t > 0`, zero otherwise. Flat to all orders at 0.
fn flat(t: Jet2) -> Jet2 {
    if t.v <= 0.0 {
        Jet2::ZERO
    } else {
        (-(Jet2::cst(1.0) / t)).exp()
    }
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step(t: Jet2) -> Jet2 {
    if t.v <= 0.0 {
        return Jet2::ZERO;
    }
    if t.v >= 1.0 {
        return Jet2::cst(1.0);
    }
    let a = flat(t);
    let b = flat(Jet2::cst(1.0) - t);
    a / (a + b)
}

/// One of the y-profiles used in the check panels. All are smooth,
/// constant on `[0, r0]` and vanish for `y >= r1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Profile {
    pub height: f64,
    pub r0: f64,
    pub r1: f64,
    /// Relative amplitude of an interior bump on `[center - width, center + width]`.
    pub bump: f64,
    pub center: f64,
    pub width: f64,
}

impl Profile {
    pub fn plateau(r0: f64, r1: f64) -> Self {
        Self { height: 1.0, r0, r1, bump: 0.0, center: 0.5 * (r0 + r1), width: 0.0 }
    }

    pub fn jet(&self, y: f64) -> Jet2 {
        let t = (Jet2::var(y) - self.r0) * (1.0 / (self.r1 - self.r0));
        let mut u = (Jet2::cst(1.0) - smooth_step(t)) * self.height;
        if self.bump != 0.0 && self.width > 0.0 {
            let s = (Jet2::var(y) - self.center) * (1.0 / self.width);
            let w = Jet2::cst(1.0) - s * s;
            if w.v > 0.0 {
                let b = (-(Jet2::cst(1.0) / w)).exp() * std::f64::consts::E;
                u = u * (b * self.bump + 1.0);
            }
        }
        u
    }

    pub fn value(&self, y: f64) -> f64 {
        self.jet(y).v
    }

    /// `B u = u'' + (c/y) u'`; finite at every `y > 0` since `u' = 0` near 0.
    pub fn bessel(&self, y: f64, c: f64) -> f64 {
        let j = self.jet(y);
        j.dd + c / y * j.d
    }
}

/// A deterministic panel of `n` profiles, all supported in `[0, support]`.
pub fn profile_panel(n: usize, support: f64) -> Vec<Profile> {
    (0..n)
        .map(|k| {
            let f = k as f64 / n.max(1) as f64;
            let r1 = support * (0.55 + 0.45 * ((k * 7 % n.max(1)) as f64 / n.max(1) as f64));
            let r0 = r1 * (0.1 + 0.5 * f);
            let (bump, center, width) = if k % 3 == 0 {
                (0.0, 0.0, 0.0)
            } else {
                let w = 0.2 * (r1 - r0);
                (0.6 * (if k % 2 == 0 { 1.0 } else { -0.7 }), 0.5 * (r0 + r1), w)
            };
            Profile { height: 1.0 + 0.25 * (k % 4) as f64, r0, r1, bump, center, width }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-4;
        ((f(x + h) - f(x - h)) / (2.0 * h), (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h))
    }

    #[test]
    fn jet_arithmetic_matches_differences() {
        let f = |y: Jet2| (y * y + 1.0).ln() * y.sin() / (y.exp() + 2.0) + y.powf(1.5);
        for &x in &[0.3, 1.1, 2.7] {
            let j = f(Jet2::var(x));
            let (d, dd) = fd(|t| f(Jet2::cst(t)).v, x);
            assert!((j.d - d).abs() < 1e-6, "{} {}", j.d, d);
            assert!((j.dd - dd).abs() < 1e-4, "{} {}", j.dd, dd);
        }
    }

    #[test]
    fn profiles_are_flat_and_supported() {
        for p in profile_panel(20, 1.0) {
            let j = p.jet(0.5 * p.r0);
            assert_eq!((j.d, j.dd), (0.0, 0.0));
            assert_eq!(p.value(p.r1 + 1e-9), 0.0);
            assert!(p.r1 <= 1.0 + 1e-15);
            let x = 0.5 * (p.r0 + p.r1);
            let (d, dd) = fd(|t| p.value(t), x);
            let j = p.jet(x);
            assert!((j.d - d).abs() < 1e-5 * (1.0 + d.abs()));
            assert!((j.dd - dd).abs() < 1e-3 * (1.0 + dd.abs()));
        }
    }
}
