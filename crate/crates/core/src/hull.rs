//! Minimal convex hulls in the Poincaré disc.
//!
//! [`graham_scan`] sorts the points by the direction of their log-map image
//! at the point farthest from the origin and runs the usual stack pass with a
//! hyperbolic orientation test. [`brute_force_hull`] is a slow reference
//! implementation used to validate it.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Curvature, DiscPoint, Vec2};

/// Orientation values with magnitude below this count as collinear.
pub const CCW_BAND: f64 = 1e-12;

/// Largest input accepted by [`brute_force_hull`].
pub const BRUTE_FORCE_CAP: usize = 60;

/// Extreme points in counter-clockwise order, starting at the point farthest
/// from the origin.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexHull {
    pub extremes: Vec<DiscPoint>,
}

impl ConvexHull {
    pub fn len(&self) -> usize {
        self.extremes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extremes.is_empty()
    }

    /// Vertices sorted lexicographically, for order-free comparisons.
    pub fn sorted_vertices(&self) -> Vec<DiscPoint> {
        let mut v = self.extremes.clone();
        v.sort_by(cmp_points);
        v
    }

    /// Whether `q` lies inside or on the hull, using orientation signs
    /// against every edge.
    pub fn contains(&self, q: DiscPoint, c: Curvature) -> bool {
        let e = &self.extremes;
        match e.len() {
            0 => false,
            1 => (e[0] - q).norm() <= 1e-12,
            2 => on_segment(e[0], e[1], q, c),
            n => (0..n).all(|i| {
                let (a, b) = (e[i], e[(i + 1) % n]);
                a == q || b == q || orient(a, b, q, c) >= -1e-9
            }),
        }
    }
}

/// Total order on points: by x, then y.
pub fn cmp_points(a: &DiscPoint, b: &DiscPoint) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Orientation of `c` relative to the geodesic from `a` to `b`: the 2-D
/// cross product of the unit log-map images of `b` and `c` at `a`.
pub fn ccw(a: DiscPoint, b: DiscPoint, c: DiscPoint, curv: Curvature) -> Result<f64> {
    if a == b || a == c {
        return Err(Error::Degenerate("orientation test with coincident points"));
    }
    Ok(orient(a, b, c, curv))
}

/// Unchecked orientation; zero when `b` or `c` coincides with `a`.
pub fn orient(a: DiscPoint, b: DiscPoint, c: DiscPoint, curv: Curvature) -> f64 {
    let u = curv.log(a, b).normalized();
    let v = curv.log(a, c).normalized();
    u.cross(v)
}

fn on_segment(a: DiscPoint, b: DiscPoint, q: DiscPoint, c: Curvature) -> bool {
    if q == a || q == b {
        return true;
    }
    if orient(a, b, q, c).abs() > CCW_BAND {
        return false;
    }
    // q sits between a and b when the directions towards them are opposite
    c.log(q, a).dot(c.log(q, b)) < 0.0
}

fn dedup(points: &[DiscPoint]) -> Vec<DiscPoint> {
    let mut v = points.to_vec();
    v.sort_by(cmp_points);
    v.dedup();
    v
}

/// Point farthest from the origin; ties go to the smaller principal angle,
/// then to the smaller first coordinate.
fn anchor(points: &[DiscPoint]) -> usize {
    let mut best = 0;
    for i in 1..points.len() {
        let (p, q) = (points[i], points[best]);
        let ord = p
            .norm_sq()
            .total_cmp(&q.norm_sq())
            .then_with(|| q.principal_angle().total_cmp(&p.principal_angle()))
            .then_with(|| q.x.total_cmp(&p.x));
        if ord == Ordering::Greater {
            best = i;
        }
    }
    best
}

/// Outward unit normal at the anchor and its counter-clockwise tangent.
fn anchor_frame(b: DiscPoint, c: Curvature) -> (Vec2, Vec2) {
    let n = (-c.log(b, Vec2::ZERO)).normalized();
    let n = if n == Vec2::ZERO { Vec2::new(1.0, 0.0) } else { n };
    (n, n.perp())
}

/// Angle in `[0, π]` of a log-map image measured from the tangent `t`.
fn sweep_angle(v: Vec2, n: Vec2, t: Vec2) -> f64 {
    let inward = v.dot(-n);
    // every point lies on the inner side; clamp rounding noise (and -0.0)
    let inward = if inward <= 0.0 { 0.0 } else { inward };
    inward.atan2(v.dot(t))
}

/// Minimal convex hull by the Graham scan adapted to the disc.
pub fn graham_scan(points: &[DiscPoint], c: Curvature) -> Result<ConvexHull> {
    if points.is_empty() {
        return Err(Error::EmptyInput("convex hull of no points"));
    }
    for &p in points {
        c.check(p)?;
    }
    let pts = dedup(points);
    if pts.len() <= 2 {
        return Ok(ConvexHull { extremes: pts });
    }
    let b = pts[anchor(&pts)];

    let (n, t) = anchor_frame(b, c);

    let mut keyed: Vec<(f64, f64, DiscPoint)> = pts
        .iter()
        .filter(|&&x| x != b)
        .map(|&x| {
            let v = c.log(b, x);
            (sweep_angle(v, n, t), v.norm_sq(), x)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // among equal angles only the farthest point can be extreme
    let mut sorted: Vec<DiscPoint> = Vec::with_capacity(keyed.len());
    for i in 0..keyed.len() {
        if i + 1 < keyed.len() && keyed[i + 1].0 == keyed[i].0 {
            continue;
        }
        sorted.push(keyed[i].2);
    }

    let mut stack: Vec<DiscPoint> = vec![b];
    for &x in &sorted {
        while stack.len() >= 2 && orient(stack[stack.len() - 2], stack[stack.len() - 1], x, c) <= CCW_BAND {
            stack.pop();
        }
        stack.push(x);
    }
    // drop trailing points that are collinear with the closing edge
    while stack.len() >= 3 && orient(stack[stack.len() - 2], stack[stack.len() - 1], b, c) <= CCW_BAND {
        stack.pop();
    }
    Ok(ConvexHull { extremes: stack })
}

/// Reference hull: a point is dropped when it lies inside or on a triangle
/// of three other points, or on the geodesic segment between two others.
/// Output is ordered like [`graham_scan`].
pub fn brute_force_hull(points: &[DiscPoint], c: Curvature) -> Result<ConvexHull> {
    if points.is_empty() {
        return Err(Error::EmptyInput("convex hull of no points"));
    }
    if points.len() > BRUTE_FORCE_CAP {
        return Err(Error::SizeCap { what: "brute-force hull", size: points.len(), cap: BRUTE_FORCE_CAP });
    }
    for &p in points {
        c.check(p)?;
    }
    let pts = dedup(points);
    let n = pts.len();
    if n <= 2 {
        return Ok(ConvexHull { extremes: pts });
    }
    // dir[a][b]: unit log-map image of b at a, so orientations reduce to
    // cross products
    let dir: Vec<Vec<Vec2>> = (0..n).map(|a| (0..n).map(|b| c.log(pts[a], pts[b]).normalized()).collect()).collect();
    let orient_ix = |a: usize, b: usize, q: usize| dir[a][b].cross(dir[a][q]);
    let on_segment_ix = |a: usize, b: usize, q: usize| orient_ix(a, b, q).abs() <= CCW_BAND && dir[q][a].dot(dir[q][b]) < 0.0;
    let in_triangle_ix = |a: usize, b: usize, cc: usize, q: usize| {
        let o = orient_ix(a, b, cc);
        if o.abs() <= CCW_BAND {
            return false;
        }
        let (b, cc) = if o > 0.0 { (b, cc) } else { (cc, b) };
        orient_ix(a, b, q) >= -CCW_BAND && orient_ix(b, cc, q) >= -CCW_BAND && orient_ix(cc, a, q) >= -CCW_BAND
    };
    let mut extreme = vec![true; n];
    'outer: for q in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != q).collect();
        for (ia, &a) in others.iter().enumerate() {
            for (ib, &b) in others.iter().enumerate().skip(ia + 1) {
                if on_segment_ix(a, b, q) {
                    extreme[q] = false;
                    continue 'outer;
                }
                for &cc in others.iter().skip(ib + 1) {
                    if in_triangle_ix(a, b, cc, q) {
                        extreme[q] = false;
                        continue 'outer;
                    }
                }
            }
        }
    }
    let kept: Vec<DiscPoint> = (0..n).filter(|&i| extreme[i]).map(|i| pts[i]).collect();
    Ok(ConvexHull { extremes: order_ccw(kept, c) })
}

/// Orders extreme points counter-clockwise starting at the anchor.
fn order_ccw(points: Vec<DiscPoint>, c: Curvature) -> Vec<DiscPoint> {
    if points.len() <= 2 {
        return points;
    }
    let b = points[anchor(&points)];
    let (n, t) = anchor_frame(b, c);
    let mut rest: Vec<(f64, DiscPoint)> =
        points.into_iter().filter(|&x| x != b).map(|x| (sweep_angle(c.log(b, x), n, t), x)).collect();
    rest.sort_by(|a, b| a.0.total_cmp(&b.0));
    std::iter::once(b).chain(rest.into_iter().map(|r| r.1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use std::f64::consts::PI;

    const C: Curvature = Curvature::UNIT;

    fn random_points(n: usize, seed: u64, r: f64) -> Vec<DiscPoint> {
        let mut rng = seed::rng(seed, "hull-test", 0);
        (0..n)
            .map(|_| Vec2::from_polar(r * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * 2.0 * PI))
            .collect()
    }

    /// Euclidean hull of the Klein images (monotone chain), mapped back.
    fn klein_hull(points: &[DiscPoint], c: Curvature) -> Vec<DiscPoint> {
        let mut pts: Vec<(Vec2, DiscPoint)> = points.iter().map(|&p| (c.to_klein(p), p)).collect();
        pts.sort_by(|a, b| cmp_points(&a.0, &b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        if pts.len() <= 2 {
            return pts.into_iter().map(|p| p.1).collect();
        }
        let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).cross(b - o);
        let mut lower: Vec<(Vec2, DiscPoint)> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2].0, lower[lower.len() - 1].0, p.0) <= 1e-13 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<(Vec2, DiscPoint)> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2].0, upper[upper.len() - 1].0, p.0) <= 1e-13 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.into_iter().chain(upper).map(|p| p.1).collect()
    }

    fn as_set(mut v: Vec<DiscPoint>) -> Vec<DiscPoint> {
        v.sort_by(cmp_points);
        v
    }

    #[test]
    fn ccw_examples() {
        let (a, b) = (Vec2::ZERO, Vec2::new(0.5, 0.0));
        assert_eq!(ccw(a, b, Vec2::new(0.7, 0.0), C).unwrap(), 0.0);
        assert!(ccw(a, b, Vec2::new(0.0, 0.5), C).unwrap() > 0.0);
        let (p, q, r) = (Vec2::new(0.1, 0.3), Vec2::new(-0.4, 0.2), Vec2::new(0.5, -0.6));
        assert_eq!(ccw(p, q, r, C).unwrap(), -ccw(p, r, q, C).unwrap());
        assert!(ccw(a, a, b, C).is_err());
    }

    #[test]
    fn small_inputs() {
        assert!(graham_scan(&[], C).is_err());
        let one = [Vec2::new(0.1, 0.1)];
        assert_eq!(graham_scan(&one, C).unwrap().extremes, one.to_vec());
        let tri = [Vec2::new(0.1, 0.0), Vec2::new(0.0, 0.5), Vec2::new(-0.3, -0.3)];
        let h = graham_scan(&tri, C).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(h.extremes[0], Vec2::new(0.0, 0.5));
        let e = &h.extremes;
        assert!(orient(e[0], e[1], e[2], C) > 0.0);
    }

    #[test]
    fn interior_and_collinear_points_removed() {
        let pts = [Vec2::new(0.5, 0.0), Vec2::new(-0.3, 0.4), Vec2::new(-0.3, -0.4), Vec2::new(0.0, 0.05)];
        let h = graham_scan(&pts, C).unwrap();
        assert_eq!(as_set(h.extremes), as_set(pts[..3].to_vec()));

        let line = [Vec2::new(0.2, 0.0), Vec2::new(0.5, 0.0), Vec2::new(0.8, 0.0)];
        let h = graham_scan(&line, C).unwrap();
        assert_eq!(as_set(h.extremes), vec![Vec2::new(0.2, 0.0), Vec2::new(0.8, 0.0)]);

        let square = [
            Vec2::new(0.5, 0.0),
            Vec2::new(0.0, 0.5),
            Vec2::new(-0.5, 0.0),
            Vec2::new(0.0, -0.5),
            Vec2::ZERO,
        ];
        assert_eq!(graham_scan(&square, C).unwrap().len(), 4);
        assert_eq!(brute_force_hull(&square, C).unwrap().len(), 4);
    }

    #[test]
    fn duplicates_are_merged() {
        let pts = [Vec2::new(0.1, 0.2), Vec2::new(0.1, 0.2), Vec2::new(-0.4, 0.0), Vec2::new(0.3, -0.5)];
        assert_eq!(graham_scan(&pts, C).unwrap().len(), 3);
    }

    #[test]
    fn matches_brute_force() {
        for trial in 0..200u64 {
            let n = 4 + (trial as usize * 7) % 47;
            let pts = random_points(n, trial, 0.95);
            let g = graham_scan(&pts, C).unwrap();
            let b = brute_force_hull(&pts, C).unwrap();
            assert_eq!(as_set(g.extremes.clone()), as_set(b.extremes.clone()), "trial {trial}");
            assert_eq!(g.extremes, b.extremes, "ordering differs in trial {trial}");
        }
        assert!(brute_force_hull(&random_points(61, 0, 0.5), C).is_err());
    }

    #[test]
    fn matches_klein_hull_on_large_inputs() {
        for &k in &[1.0, 0.5, 4.0] {
            let c = Curvature::new(k).unwrap();
            for trial in 0..10u64 {
                let pts = random_points(5000, trial + 100, 0.999 * c.s());
                let g = graham_scan(&pts, c).unwrap();
                assert_eq!(as_set(g.extremes), as_set(klein_hull(&pts, c)), "k={k} trial {trial}");
            }
        }
    }

    #[test]
    fn containment_and_idempotence() {
        for trial in 0..20u64 {
            let pts = random_points(300, trial + 7, 0.9);
            let h = graham_scan(&pts, C).unwrap();
            for &p in &pts {
                assert!(h.contains(p, C));
            }
            let again = graham_scan(&h.extremes, C).unwrap();
            assert_eq!(again, h);
            let e = &h.extremes;
            for i in 0..e.len() {
                let o = orient(e[i], e[(i + 1) % e.len()], e[(i + 2) % e.len()], C);
                assert!(o > CCW_BAND, "consecutive vertices not strictly convex");
            }
        }
    }

    #[test]
    fn anchor_tie_break() {
        let pts = [Vec2::new(0.0, 0.5), Vec2::new(0.5, 0.0), Vec2::new(-0.5, 0.0)];
        assert_eq!(pts[anchor(&pts)], Vec2::new(0.5, 0.0));
    }
}
