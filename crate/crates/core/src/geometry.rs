//! Poincaré disc of curvature `-k`: Möbius algebra, log/exp maps, distances
//! and radius conversions.
//!
//! Points and tangent vectors share the plain [`Vec2`] representation. The
//! checked free functions validate their inputs; the methods on
//! [`Curvature`] skip validation and are meant for hot loops over points that
//! were already checked.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points with `k‖x‖²` above `1 - BOUNDARY_BAND` are rejected.
pub const BOUNDARY_BAND: f64 = 1e-12;

/// A pair of reals. Used both for disc coordinates and tangent vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

/// A point of the disc.
pub type DiscPoint = Vec2;

/// A tangent vector; the base point is carried separately by the caller.
pub type Tangent = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Vec2::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Quarter turn counter-clockwise.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Angle in `[0, 2π)`; the origin maps to 0.
    pub fn principal_angle(self) -> f64 {
        if self.x == 0.0 && self.y == 0.0 {
            return 0.0;
        }
        let a = self.y.atan2(self.x);
        if a < 0.0 {
            let w = a + 2.0 * PI;
            // a tiny negative angle can round up to exactly 2π
            if w >= 2.0 * PI {
                0.0
            } else {
                w
            }
        } else {
            a
        }
    }

    /// Unit vector in the same direction, or zero.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, a: f64) -> Vec2 {
        Vec2::new(self.x * a, self.y * a)
    }
}

/// Curvature magnitude `k > 0` together with `s = 1/√k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature {
    k: f64,
    sqrt_k: f64,
    s: f64,
}

impl TryFrom<f64> for Curvature {
    type Error = Error;
    fn try_from(k: f64) -> Result<Self> {
        Curvature::new(k)
    }
}

impl From<Curvature> for f64 {
    fn from(c: Curvature) -> f64 {
        c.k
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature::UNIT
    }
}

impl Curvature {
    pub const UNIT: Curvature = Curvature { k: 1.0, sqrt_k: 1.0, s: 1.0 };

    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter(format!("curvature must be positive, got {k}")));
        }
        let sqrt_k = k.sqrt();
        Ok(Curvature { k, sqrt_k, s: 1.0 / sqrt_k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sqrt_k(&self) -> f64 {
        self.sqrt_k
    }

    /// Radius of the disc, `1/√k`.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// True when `x` is a usable disc point.
    pub fn contains(&self, x: DiscPoint) -> bool {
        x.is_finite() && self.k * x.norm_sq() <= 1.0 - BOUNDARY_BAND
    }

    pub fn check(&self, x: DiscPoint) -> Result<DiscPoint> {
        if self.contains(x) {
            Ok(x)
        } else {
            Err(Error::OutsideDisc { x: x.x, y: x.y, k: self.k })
        }
    }

    /// Validated constructor for a disc point.
    pub fn point(&self, x: f64, y: f64) -> Result<DiscPoint> {
        self.check(Vec2::new(x, y))
    }

    /// `1 - k‖x‖²`.
    fn lambda_inv(&self, x: DiscPoint) -> f64 {
        1.0 - self.k * x.norm_sq()
    }

    /// Möbius addition `x ⊕ y`.
    pub fn add(&self, x: DiscPoint, y: DiscPoint) -> DiscPoint {
        let k = self.k;
        let xy = x.dot(y);
        let x2 = x.norm_sq();
        let y2 = y.norm_sq();
        let a = 1.0 + 2.0 * k * xy + k * y2;
        let b = 1.0 - k * x2;
        let den = 1.0 + 2.0 * k * xy + k * k * x2 * y2;
        (x * a + y * b) * (1.0 / den)
    }

    /// Logarithmic map at `p`; zero when `x == p`.
    pub fn log(&self, p: DiscPoint, x: DiscPoint) -> Tangent {
        let u = self.add(-p, x);
        let nu = u.norm();
        if nu == 0.0 {
            return Vec2::ZERO;
        }
        let scale = self.lambda_inv(p) / self.sqrt_k * (self.sqrt_k * nu).atanh() / nu;
        u * scale
    }

    /// Exponential map at `p`; returns `p` for the zero vector.
    pub fn exp(&self, p: DiscPoint, v: Tangent) -> DiscPoint {
        let nv = v.norm();
        if nv == 0.0 {
            return p;
        }
        let t = (self.sqrt_k * nv / self.lambda_inv(p)).tanh();
        self.add(p, v * (t / (self.sqrt_k * nv)))
    }

    /// Geodesic distance.
    ///
    /// Uses the `asinh` form of the distance, which keeps full relative
    /// precision for nearby points.
    pub fn dist(&self, x: DiscPoint, y: DiscPoint) -> f64 {
        let diff = (x - y).norm();
        if diff == 0.0 {
            return 0.0;
        }
        let den = (self.lambda_inv(x) * self.lambda_inv(y)).sqrt();
        2.0 * self.s * (self.sqrt_k * diff / den).asinh()
    }

    /// Geodesic distance through Möbius addition, `2/√k · atanh(√k‖(-x)⊕y‖)`.
    pub fn dist_mobius(&self, x: DiscPoint, y: DiscPoint) -> f64 {
        2.0 * self.s * (self.sqrt_k * self.add(-x, y).norm()).atanh()
    }

    /// Point halfway along the geodesic from `x` to `y`.
    pub fn midpoint(&self, x: DiscPoint, y: DiscPoint) -> DiscPoint {
        if x == y {
            return x;
        }
        self.exp(x, self.log(x, y) * 0.5)
    }

    /// Euclidean radius to hyperbolic radius.
    pub fn hyp_radius(&self, r: f64) -> f64 {
        2.0 * self.s * (r / self.s).atanh()
    }

    /// Hyperbolic radius to Euclidean radius.
    pub fn euc_radius(&self, r_h: f64) -> f64 {
        self.s * (r_h / (2.0 * self.s)).tanh()
    }

    /// Length of a circle of hyperbolic radius `r_h`.
    pub fn circumference(&self, r_h: f64) -> f64 {
        2.0 * PI * self.s * (r_h / self.s).sinh()
    }

    /// Area of a disc of hyperbolic radius `r_h`.
    pub fn area(&self, r_h: f64) -> f64 {
        let sh = (r_h / (2.0 * self.s)).sinh();
        4.0 * PI * self.s * self.s * sh * sh
    }

    /// Beltrami–Klein coordinates of a disc point. Geodesics become straight
    /// chords, so convexity questions reduce to the Euclidean ones.
    pub fn to_klein(&self, x: DiscPoint) -> Vec2 {
        x * (2.0 / (1.0 + self.k * x.norm_sq()))
    }
}

pub fn mobius_add(x: DiscPoint, y: DiscPoint, c: Curvature) -> Result<DiscPoint> {
    c.check(x)?;
    c.check(y)?;
    Ok(c.add(x, y))
}

pub fn log_map(p: DiscPoint, x: DiscPoint, c: Curvature) -> Result<Tangent> {
    c.check(p)?;
    c.check(x)?;
    Ok(c.log(p, x))
}

pub fn exp_map(p: DiscPoint, v: Tangent, c: Curvature) -> Result<DiscPoint> {
    c.check(p)?;
    if !v.is_finite() {
        return Err(Error::InvalidParameter("tangent vector is not finite".into()));
    }
    Ok(c.exp(p, v))
}

pub fn dist(x: DiscPoint, y: DiscPoint, c: Curvature) -> Result<f64> {
    c.check(x)?;
    c.check(y)?;
    Ok(c.dist(x, y))
}

pub fn geodesic_midpoint(x: DiscPoint, y: DiscPoint, c: Curvature) -> Result<DiscPoint> {
    c.check(x)?;
    c.check(y)?;
    Ok(c.midpoint(x, y))
}

/// Hyperbolic radius of a Euclidean radius `r` in a disc of radius `s`.
pub fn hyp_radius(r: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) || !(0.0..s).contains(&r) {
        return Err(Error::InvalidParameter(format!("need 0 <= R < s, got R={r}, s={s}")));
    }
    Ok(s * ((s + r) / (s - r)).ln())
}

/// Euclidean radius of a hyperbolic radius `r_h` in a disc of radius `s`.
pub fn euc_radius(r_h: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) || !(r_h >= 0.0) {
        return Err(Error::InvalidParameter(format!("need R_H >= 0 and s > 0, got {r_h}, {s}")));
    }
    Ok(s * (r_h / (2.0 * s)).tanh())
}

pub fn circumference(r_h: f64, s: f64) -> f64 {
    2.0 * PI * s * (r_h / s).sinh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const C: Curvature = Curvature::UNIT;

    fn random_point(rng: &mut ChaCha8Rng, c: Curvature, rmax: f64) -> DiscPoint {
        let r = c.s() * rmax * rng.gen::<f64>().sqrt();
        Vec2::from_polar(r, rng.gen::<f64>() * 2.0 * PI)
    }

    #[test]
    fn mobius_examples() {
        let x = Vec2::new(0.3, 0.0);
        assert_eq!(mobius_add(x, Vec2::ZERO, C).unwrap(), x);
        let z = C.add(Vec2::new(-0.3, -0.2), Vec2::new(0.3, 0.2));
        assert!(z.norm() < 1e-12);
        let r = mobius_add(x, Vec2::new(0.4, 0.0), C).unwrap();
        assert_abs_diff_eq!(r.x, 0.625, epsilon = 1e-15);
        assert_eq!(r.y, 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(mobius_add(Vec2::new(1.0, 0.0), Vec2::ZERO, C).is_err());
        assert!(log_map(Vec2::ZERO, Vec2::new(0.0, 1.2), C).is_err());
        assert!(C.point(0.6, 0.8).is_err());
        assert!(Curvature::new(0.0).is_err());
        assert!(hyp_radius(1.0, 1.0).is_err());
    }

    #[test]
    fn log_exp_examples() {
        let v = log_map(Vec2::ZERO, Vec2::new(0.5, 0.0), C).unwrap();
        assert_abs_diff_eq!(v.x, 0.5f64.atanh(), epsilon = 1e-15);
        let p = Vec2::new(0.1, -0.4);
        assert_eq!(log_map(p, p, C).unwrap(), Vec2::ZERO);
        let e = exp_map(Vec2::ZERO, Vec2::new(0.5, 0.0), C).unwrap();
        assert_abs_diff_eq!(e.x, 0.5f64.tanh(), epsilon = 1e-15);
        assert_eq!(exp_map(p, Vec2::ZERO, C).unwrap(), p);
    }

    #[test]
    fn inverse_pair_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &k in &[1.0, 0.25, 3.0] {
            let c = Curvature::new(k).unwrap();
            for _ in 0..10_000 {
                let p = random_point(&mut rng, c, 0.95);
                let x = random_point(&mut rng, c, 0.95);
                let back = c.exp(p, c.log(p, x));
                assert!((back - x).norm() < 1e-9, "k={k} p={p:?} x={x:?} back={back:?}");
            }
            for _ in 0..1000 {
                let p = random_point(&mut rng, c, 0.9);
                let scale = 1.0 - c.k() * p.norm_sq();
                let v = Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)) * scale;
                let w = c.log(p, c.exp(p, v));
                assert!((w - v).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn distance_examples() {
        let x = Vec2::new(0.3, 0.0);
        assert_eq!(dist(x, x, C).unwrap(), 0.0);
        assert_abs_diff_eq!(dist(Vec2::ZERO, x, C).unwrap(), 2.0 * 0.3f64.atanh(), epsilon = 1e-14);
        assert_abs_diff_eq!(dist(x, -x, C).unwrap(), 1.238_07, epsilon = 1e-5);
        assert_abs_diff_eq!(C.dist(x, -x), C.dist_mobius(x, -x), epsilon = 1e-14);
    }

    #[test]
    fn distance_forms_agree_and_metric_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = Curvature::new(2.0).unwrap();
        for _ in 0..10_000 {
            let x = random_point(&mut rng, c, 0.97);
            let y = random_point(&mut rng, c, 0.97);
            let z = random_point(&mut rng, c, 0.97);
            let dxy = c.dist(x, y);
            assert_eq!(dxy, c.dist(y, x));
            assert!((dxy - c.dist_mobius(x, y)).abs() < 1e-9 * (1.0 + dxy));
            assert!(dxy <= c.dist(x, z) + c.dist(z, y) + 1e-9);
            let angle = rng.gen::<f64>() * 2.0 * PI;
            assert!((c.dist(x.rotate(angle), y.rotate(angle)) - dxy).abs() < 1e-9);
        }
    }

    #[test]
    fn midpoint_examples() {
        let m = geodesic_midpoint(Vec2::ZERO, Vec2::new(0.6, 0.0), C).unwrap();
        assert_abs_diff_eq!(m.x, 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.y, 0.0, epsilon = 1e-15);
        let x = Vec2::new(0.2, 0.7);
        assert_eq!(C.midpoint(x, x), x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let x = random_point(&mut rng, C, 0.95);
            let y = random_point(&mut rng, C, 0.95);
            let m = C.midpoint(x, y);
            let (a, b) = (C.dist(x, m), C.dist(m, y));
            assert!((a - b).abs() < 1e-9);
            assert!((a + b - C.dist(x, y)).abs() < 1e-9);
            assert!((m - C.midpoint(y, x)).norm() < 1e-9);
        }
    }

    #[test]
    fn radius_conversions() {
        assert_eq!(hyp_radius(0.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(hyp_radius(0.5, 1.0).unwrap(), 3f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(hyp_radius(0.95, 1.0).unwrap(), 39f64.ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(C.hyp_radius(0.95), 39f64.ln(), epsilon = 1e-13);
        for &s in &[0.5, 1.0, 2.0] {
            for i in 0..=1000 {
                let rh = 10.0 * s * i as f64 / 1000.0;
                let back = hyp_radius(euc_radius(rh, s).unwrap(), s).unwrap();
                assert!((back - rh).abs() < 1e-12 * (1.0 + rh), "s={s} rh={rh} back={back}");
            }
        }
    }

    #[test]
    fn circumference_examples() {
        assert_eq!(circumference(0.0, 1.0), 0.0);
        assert_abs_diff_eq!(circumference(1.0, 1.0), 2.0 * std::f64::consts::PI * 1f64.sinh(), epsilon = 1e-12);
        assert_abs_diff_eq!(circumference(1.0, 1.0), 7.3840, epsilon = 1e-4);
        assert_abs_diff_eq!(circumference(3.6636, 1.0), 122.44, epsilon = 2e-2);
        assert_abs_diff_eq!(C.circumference(2.0), circumference(2.0, 1.0));
    }

    #[test]
    fn klein_map_straightens_geodesics() {
        let c = Curvature::new(1.5).unwrap();
        let a = Vec2::new(0.3, -0.5);
        let b = Vec2::new(-0.6, 0.2);
        let v = c.log(a, b);
        let (ka, kb) = (c.to_klein(a), c.to_klein(b));
        for i in 1..10 {
            let m = c.to_klein(c.exp(a, v * (i as f64 / 10.0)));
            assert!((m - ka).cross(kb - ka).abs() < 1e-12);
        }
    }
}
