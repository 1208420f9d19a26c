//! Angular × radial quantization of the disc, uniform sampling and
//! quantized hulls.
//!
//! Bins are half-open in angle and in hyperbolic radius; the outermost ring
//! also holds points at exactly the grid radius. Bins are numbered ring by
//! ring from the centre, counter-clockwise from angle 0 within a ring.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Curvature, DiscPoint, Vec2};
use crate::hull::{graham_scan, ConvexHull};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Any two points of a bin are within the distance margin.
    #[default]
    DistanceMargin,
    /// Every bin has the same hyperbolic area.
    EqualArea,
}

/// Quantization grid over the disc of Euclidean radius `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantGrid {
    /// Distance margin; `None` for grids built from explicit bin counts.
    pub epsilon: Option<f64>,
    pub r: f64,
    pub r_h: f64,
    pub curvature: Curvature,
    pub n_theta: u64,
    pub n_rh: u64,
    pub mode: GridMode,
}

/// Position of a bin: angular index `n1`, radial index `n2` (both from 1)
/// and the linear index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinIndex {
    pub n1: u64,
    pub n2: u64,
    pub linear: u64,
}

fn validate_radius(r: f64, c: Curvature) -> Result<()> {
    if !(r > 0.0 && r < c.s()) {
        return Err(Error::InvalidParameter(format!("grid radius must lie in (0, {}), got {r}", c.s())));
    }
    Ok(())
}

/// Largest bin count per axis; keeps the linear index well inside `u64`.
const MAX_BINS_PER_AXIS: f64 = 1e9;

fn count(x: f64) -> Result<u64> {
    let n = x.ceil();
    if n.is_nan() || n > MAX_BINS_PER_AXIS {
        return Err(Error::InvalidParameter(format!("grid too fine: {x} bins on one axis")));
    }
    Ok((n as u64).max(1))
}

/// Distance-margin grid for margin `epsilon`.
pub fn build_grid(epsilon: f64, r: f64, c: Curvature) -> Result<QuantGrid> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    validate_radius(r, c)?;
    let r_h = c.hyp_radius(r);
    let n_theta = count(2.0 * c.circumference(r_h) / epsilon)?;
    let n_rh = count(2.0 * r_h / epsilon)?;
    Ok(QuantGrid { epsilon: Some(epsilon), r, r_h, curvature: c, n_theta, n_rh, mode: GridMode::DistanceMargin })
}

/// Grid whose bins all have the same hyperbolic area.
pub fn build_equal_area_grid(n_theta: u64, n_rh: u64, r: f64, c: Curvature) -> Result<QuantGrid> {
    if n_theta == 0 || n_rh == 0 {
        return Err(Error::InvalidParameter("bin counts must be positive".into()));
    }
    validate_radius(r, c)?;
    let r_h = c.hyp_radius(r);
    Ok(QuantGrid { epsilon: None, r, r_h, curvature: c, n_theta, n_rh, mode: GridMode::EqualArea })
}

/// Hyperbolic radius enclosing fraction `f` of the area within `r_h`.
fn equal_area_radius(f: f64, r_h: f64, c: Curvature) -> f64 {
    if f >= 1.0 {
        return r_h;
    }
    let s = c.s();
    2.0 * s * (f.sqrt() * (r_h / (2.0 * s)).sinh()).asinh()
}

impl QuantGrid {
    /// Total number of bins.
    pub fn num_bins(&self) -> u64 {
        self.n_theta * self.n_rh
    }

    /// Hyperbolic radius of the boundary between rings `i` and `i + 1`.
    pub fn ring_boundary(&self, i: u64) -> f64 {
        if i >= self.n_rh {
            return self.r_h;
        }
        let f = i as f64 / self.n_rh as f64;
        match self.mode {
            GridMode::DistanceMargin => f * self.r_h,
            GridMode::EqualArea => equal_area_radius(f, self.r_h, self.curvature),
        }
    }

    pub fn angle_boundary(&self, i: u64) -> f64 {
        if i >= self.n_theta {
            2.0 * PI
        } else {
            i as f64 * 2.0 * PI / self.n_theta as f64
        }
    }

    pub fn index(&self, n1: u64, n2: u64) -> Result<BinIndex> {
        if !(1..=self.n_theta).contains(&n1) || !(1..=self.n_rh).contains(&n2) {
            return Err(Error::InvalidParameter(format!("bin ({n1}, {n2}) outside the grid")));
        }
        Ok(BinIndex { n1, n2, linear: (n2 - 1) * self.n_theta + n1 })
    }

    pub fn from_linear(&self, linear: u64) -> Result<BinIndex> {
        if linear == 0 || linear > self.num_bins() {
            return Err(Error::InvalidParameter(format!("linear bin {linear} outside 1..={}", self.num_bins())));
        }
        let n2 = (linear - 1) / self.n_theta + 1;
        let n1 = (linear - 1) % self.n_theta + 1;
        Ok(BinIndex { n1, n2, linear })
    }

    /// Bin containing `x`.
    pub fn bin_of(&self, x: DiscPoint) -> Result<BinIndex> {
        let c = self.curvature;
        let radius = x.norm();
        let tol = 1e-12 * self.r.max(1e-300);
        if !(radius <= self.r + tol) || !c.contains(x) {
            return Err(Error::OutOfRange { radius, limit: self.r });
        }
        let theta = x.principal_angle();
        let mut n1 = ((theta / (2.0 * PI) * self.n_theta as f64).floor() as u64 + 1).clamp(1, self.n_theta);
        while n1 > 1 && theta < self.angle_boundary(n1 - 1) {
            n1 -= 1;
        }
        while n1 < self.n_theta && theta >= self.angle_boundary(n1) {
            n1 += 1;
        }

        let rh = c.hyp_radius(radius).min(self.r_h);
        let guess = match self.mode {
            GridMode::DistanceMargin => rh / self.r_h * self.n_rh as f64,
            GridMode::EqualArea => {
                let s = c.s();
                let f = (rh / (2.0 * s)).sinh() / (self.r_h / (2.0 * s)).sinh();
                f * f * self.n_rh as f64
            }
        };
        let mut n2 = (guess.floor() as u64 + 1).clamp(1, self.n_rh);
        while n2 > 1 && rh < self.ring_boundary(n2 - 1) {
            n2 -= 1;
        }
        while n2 < self.n_rh && rh >= self.ring_boundary(n2) {
            n2 += 1;
        }
        self.index(n1, n2)
    }

    /// Representative point of a bin: mid-angle, and the hyperbolic radius
    /// halfway across the ring (by distance or by area, per the grid mode).
    pub fn bin_center(&self, b: BinIndex) -> DiscPoint {
        let angle = (self.angle_boundary(b.n1 - 1) + self.angle_boundary(b.n1)) / 2.0;
        let rh = match self.mode {
            GridMode::DistanceMargin => (self.ring_boundary(b.n2 - 1) + self.ring_boundary(b.n2)) / 2.0,
            GridMode::EqualArea => {
                equal_area_radius((b.n2 as f64 - 0.5) / self.n_rh as f64, self.r_h, self.curvature)
            }
        };
        Vec2::from_polar(self.curvature.euc_radius(rh), angle)
    }

    pub fn quantize_point(&self, x: DiscPoint) -> Result<DiscPoint> {
        Ok(self.bin_center(self.bin_of(x)?))
    }
}

pub fn bin_of(x: DiscPoint, grid: &QuantGrid) -> Result<BinIndex> {
    grid.bin_of(x)
}

pub fn bin_center(b: BinIndex, grid: &QuantGrid) -> DiscPoint {
    grid.bin_center(b)
}

pub fn quantize_point(x: DiscPoint, grid: &QuantGrid) -> Result<DiscPoint> {
    grid.quantize_point(x)
}

/// Hull of the quantized extreme points of `points`.
pub fn epsilon_minimal_hull(points: &[DiscPoint], grid: &QuantGrid, c: Curvature) -> Result<ConvexHull> {
    let hull = graham_scan(points, c)?;
    let quantized = hull.extremes.iter().map(|&x| grid.quantize_point(x)).collect::<Result<Vec<_>>>()?;
    graham_scan(&quantized, c)
}

/// `n` points drawn uniformly (by hyperbolic area) from the disc of
/// Euclidean radius `r`.
pub fn uniform_sample(n: usize, r: f64, c: Curvature, seed: u64) -> Result<Vec<DiscPoint>> {
    validate_radius(r, c)?;
    let mut rng = seed::rng(seed, "uniform-sample", 0);
    let r_h = c.hyp_radius(r);
    Ok((0..n).map(|_| sample_one(&mut rng, r_h, c)).collect())
}

/// One uniform point given `eta ∈ (0, 1]` and angle `zeta ∈ (0, 2π]`.
pub fn sample_from_uniforms(eta: f64, zeta: f64, r_h: f64, c: Curvature) -> DiscPoint {
    let s = c.s();
    let tau = 2.0 * s * (eta.sqrt() * (r_h / (2.0 * s)).sinh()).asinh();
    Vec2::from_polar(c.euc_radius(tau), zeta)
}

pub(crate) fn sample_one<R: Rng>(rng: &mut R, r_h: f64, c: Curvature) -> DiscPoint {
    let eta = 1.0 - rng.gen::<f64>();
    let zeta = 2.0 * PI * (1.0 - rng.gen::<f64>());
    sample_from_uniforms(eta, zeta, r_h, c)
}
