//! Linear SVMs in the tangent plane of a reference point, a Euclidean
//! baseline, Platt calibration and one-vs-rest multi-class models.
//!
//! Both SVMs minimize `½‖w‖² + λ Σ max(0, 1 − y⟨u, w⟩)` over feature vectors
//! `u`. Separable problems are solved exactly through a minimum-norm point,
//! the rest by Newton steps on a smoothed hinge. For the hyperbolic model the
//! features are `log_p(x)`; the Euclidean model uses `(x, y, 1)` so its
//! bias is the last weight.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Curvature, DiscPoint, Tangent, Vec2};
use crate::hull::{graham_scan, ConvexHull};

/// Soft-margin weight that makes the soft problem act as a hard-margin one.
pub const HARD_MARGIN_LAMBDA: f64 = 20_000.0;

/// Margin slack allowed when certifying a hard-margin fit.
pub const HARD_MARGIN_TOL: f64 = 1e-6;

/// Stopping rule and caps for the smoothed Newton solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative objective gain below which a smoothing level ends; also the
    /// relative smoothing error accepted at the last level.
    pub tol: f64,
    /// Cap on Newton steps over all levels.
    pub max_steps: usize,
    /// Cap on point evaluations (passes times points).
    pub max_evaluations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_steps: 2_000, max_evaluations: 200_000_000 }
    }
}

impl SolverOptions {
    /// Cheaper settings for screening reference-point candidates.
    pub fn quick() -> Self {
        SolverOptions { tol: 1e-4, max_steps: 100, max_evaluations: 20_000_000 }
    }
}

/// Result of the linear solver.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit<const D: usize> {
    pub w: [f64; D],
    pub objective: f64,
    /// Best primal objective seen at each checkpoint (once per Newton step).
    pub checkpoints: Vec<f64>,
    pub converged: bool,
}

fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `½‖w‖² + λ Σ hinge(1 − y⟨u, w⟩)`.
pub fn primal_objective<const D: usize>(w: &[f64; D], features: &[[f64; D]], labels: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = features.iter().zip(labels).map(|(u, y)| (1.0 - y * dot(u, w)).max(0.0)).sum();
    0.5 * dot(w, w) + lambda * hinge
}

/// Minimum-norm point of the convex hull of `points` by Wolfe's algorithm,
/// with its convex weights. Returns `None` if the iteration cap is hit or a
/// corral system turns singular.
pub fn min_norm_point<const D: usize>(points: &[[f64; D]]) -> Option<([f64; D], Vec<f64>)> {
    let n = points.len();
    if n == 0 {
        return None;
    }
    let scale = points.iter().map(|v| dot(v, v)).fold(0.0, f64::max).max(1e-300);
    let combine = |set: &[usize], lam: &[f64]| -> [f64; D] {
        let mut x = [0.0; D];
        for (&i, &l) in set.iter().zip(lam) {
            for d in 0..D {
                x[d] += l * points[i][d];
            }
        }
        x
    };
    let first = (0..n).min_by(|&a, &b| dot(&points[a], &points[a]).total_cmp(&dot(&points[b], &points[b])))?;
    let mut set = vec![first];
    let mut lam = vec![1.0];
    let mut x = points[first];
    for _ in 0..10_000 {
        let j = (0..n).min_by(|&a, &b| dot(&points[a], &x).total_cmp(&dot(&points[b], &x)))?;
        if dot(&x, &x) - dot(&points[j], &x) <= 1e-15 * scale || set.contains(&j) {
            let mut weights = vec![0.0; n];
            for (&i, &l) in set.iter().zip(&lam) {
                weights[i] = l;
            }
            return Some((x, weights));
        }
        set.push(j);
        lam.push(0.0);
        loop {
            let mu = affine_min_norm(points, &set)?;
            if mu.iter().all(|&m| m > 1e-14) {
                lam = mu;
                x = combine(&set, &lam);
                break;
            }
            let mut theta = 1.0f64;
            for (l, m) in lam.iter().zip(&mu) {
                if *m <= 1e-14 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, m) in lam.iter_mut().zip(&mu) {
                *l = theta * m + (1.0 - theta) * *l;
            }
            let keep: Vec<usize> = (0..set.len()).filter(|&k| lam[k] > 1e-14).collect();
            set = keep.iter().map(|&k| set[k]).collect();
            lam = keep.iter().map(|&k| lam[k]).collect();
            let total: f64 = lam.iter().sum();
            lam.iter_mut().for_each(|l| *l /= total);
            x = combine(&set, &lam);
            if set.len() == 1 {
                break;
            }
        }
    }
    None
}

/// Weights summing to 1 that minimize the norm of the affine combination of
/// the points in `set`.
fn affine_min_norm<const D: usize>(points: &[[f64; D]], set: &[usize]) -> Option<Vec<f64>> {
    let m = set.len();
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for (r, &i) in set.iter().enumerate() {
        for (c, &j) in set.iter().enumerate() {
            a[(r, c)] = dot(&points[i], &points[j]);
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
    }
    rhs[m] = 1.0;
    let sol = a.lu().solve(&rhs)?;
    let mu: Vec<f64> = sol.iter().take(m).copied().collect();
    mu.iter().all(|v| v.is_finite()).then_some(mu)
}

/// Soft-margin SVM without bias.
///
/// Separable data whose hard-margin solution already satisfies the box
/// `α ≤ λ` is solved exactly through the minimum-norm point of `{y u}`;
/// anything else goes to the smoothed Newton solver.
pub fn solve_linear<const D: usize>(
    features: &[[f64; D]],
    labels: &[f64],
    lambda: f64,
    opts: SolverOptions,
) -> Result<LinearFit<D>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidParameter("features and labels differ in length".into()));
    }
    if let Some(fit) = solve_separable(features, labels, lambda) {
        return Ok(fit);
    }
    solve_smoothed_newton(features, labels, lambda, opts)
}

fn solve_separable<const D: usize>(features: &[[f64; D]], labels: &[f64], lambda: f64) -> Option<LinearFit<D>> {
    let signed: Vec<[f64; D]> = features.iter().zip(labels).map(|(u, &y)| u.map(|v| v * y)).collect();
    let (z, weights) = min_norm_point(&signed)?;
    let zz = dot(&z, &z);
    let scale = signed.iter().map(|v| dot(v, v)).fold(0.0, f64::max);
    if !(zz > 1e-12 * scale) {
        return None;
    }
    // dual variables of the hard-margin solution
    if weights.iter().any(|&b| b / zz > lambda) {
        return None;
    }
    let w = z.map(|v| v / zz);
    if signed.iter().any(|v| dot(v, &w) < 1.0 - 1e-9) {
        return None;
    }
    let start = lambda * features.len() as f64;
    let objective = primal_objective(&w, features, labels, lambda);
    Some(LinearFit { w, objective, checkpoints: vec![start, objective.min(start)], converged: true })
}

/// Soft-margin objective with the hinge replaced by its quadratically
/// smoothed version of width `delta`, evaluated together with the exact
/// objective.
fn smoothed_objective<const D: usize>(w: &[f64; D], signed: &[[f64; D]], lambda: f64, delta: f64) -> (f64, f64) {
    let (mut smooth, mut exact) = (0.0, 0.0);
    for a in signed {
        let z = 1.0 - dot(a, w);
        if z > 0.0 {
            exact += z;
            smooth += if z < delta { z * z / (2.0 * delta) } else { z - delta / 2.0 };
        }
    }
    let reg = 0.5 * dot(w, w);
    (reg + lambda * smooth, reg + lambda * exact)
}

/// Newton's method on the smoothed objective, shrinking the smoothing width
/// tenfold per level until the smoothing error `λ n δ / 2` is negligible.
/// The primal has only `D` unknowns, so each step is one pass over the data
/// and a `D × D` solve.
fn solve_smoothed_newton<const D: usize>(
    features: &[[f64; D]],
    labels: &[f64],
    lambda: f64,
    opts: SolverOptions,
) -> Result<LinearFit<D>> {
    let n = features.len();
    let signed: Vec<[f64; D]> = features.iter().zip(labels).map(|(u, &y)| u.map(|v| v * y)).collect();
    let mut w = [0.0; D];
    let mut best_w = w;
    let mut best = lambda * n as f64;
    let mut checkpoints = vec![best];
    let mut passes = 0usize;
    let max_passes = (opts.max_evaluations / n.max(1)).max(1);
    let mut steps = 0usize;
    let mut delta = 1.0;
    let mut converged = false;
    'levels: loop {
        let last_level = lambda * n as f64 * delta / 2.0 <= opts.tol * best.max(1.0);
        let (mut f, _) = smoothed_objective(&w, &signed, lambda, delta);
        passes += 1;
        loop {
            if steps >= opts.max_steps || passes >= max_passes {
                break 'levels;
            }
            steps += 1;
            let mut grad = DVector::from_column_slice(&w);
            let mut hess = DMatrix::<f64>::identity(D, D);
            for a in &signed {
                let z = 1.0 - dot(a, &w);
                if z <= 0.0 {
                    continue;
                }
                let slope = if z < delta { z / delta } else { 1.0 };
                for r in 0..D {
                    grad[r] -= lambda * slope * a[r];
                }
                if z < delta {
                    let c = lambda / delta;
                    for r in 0..D {
                        for s in 0..D {
                            hess[(r, s)] += c * a[r] * a[s];
                        }
                    }
                }
            }
            passes += 1;
            let dir = match hess.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => -grad.clone(),
            };
            let slope0 = grad.dot(&dir);
            if !(slope0 < 0.0) {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut cand = w;
                for r in 0..D {
                    cand[r] += t * dir[r];
                }
                let (fc, exact) = smoothed_objective(&cand, &signed, lambda, delta);
                passes += 1;
                if fc <= f + 1e-4 * t * slope0 {
                    if exact < best {
                        best = exact;
                        best_w = cand;
                    }
                    let gain = f - fc;
                    w = cand;
                    f = fc;
                    moved = gain > opts.tol * f.abs().max(1.0);
                    break;
                }
                t *= 0.5;
            }
            checkpoints.push(best);
            if !moved {
                break;
            }
        }
        if last_level {
            converged = true;
            break;
        }
        delta *= 0.1;
    }
    Ok(LinearFit { w: best_w, objective: best, checkpoints, converged })
}

fn signed(labels: &[i64]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&l| match l {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            _ => Err(Error::InvalidParameter(format!("binary labels must be ±1, got {l}"))),
        })
        .collect()
}

/// Sigmoid `1 / (1 + exp(a·score + b))` fitted to classifier scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibration {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl PlattCalibration {
    pub fn apply(&self, score: f64) -> f64 {
        platt_apply(self, score)
    }
}

pub fn platt_apply(cal: &PlattCalibration, score: f64) -> f64 {
    let f = cal.a * score + cal.b;
    // both branches avoid overflow in exp
    if f >= 0.0 {
        let e = (-f).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + f.exp())
    }
}

/// Maximum-likelihood sigmoid for scores with ±1 labels (targets 1 and 0),
/// by Newton's method with backtracking, at most 100 iterations.
pub fn platt_fit(scores: &[f64], labels: &[i64]) -> Result<PlattCalibration> {
    let y = signed(labels)?;
    if scores.len() != y.len() {
        return Err(Error::InvalidParameter("scores and labels differ in length".into()));
    }
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::Degenerate("calibration needs both classes"));
    }
    let t: Vec<f64> = y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    // negative log-likelihood with p = 1 / (1 + exp(f)), f = a s + b
    let nll = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&t)
            .map(|(&s, &ti)| {
                let f = a * s + b;
                if f >= 0.0 {
                    ti * f + (1.0 + (-f).exp()).ln()
                } else {
                    (ti - 1.0) * f + (1.0 + f.exp()).ln()
                }
            })
            .sum()
    };
    let n_neg = (y.len() - n_pos) as f64;
    let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos as f64 + 1.0)).ln());
    let mut value = nll(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&s, &ti) in scores.iter().zip(&t) {
            let f = a * s + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = ti - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nv = nll(na, nb);
            if nv < value + 1e-4 * step * gd {
                a = na;
                b = nb;
                value = nv;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    Ok(PlattCalibration { a, b })
}

/// Decision rule `sign ⟨log_p(x), w⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicSvmModel {
    pub p: DiscPoint,
    pub w: Tangent,
    pub curvature: Curvature,
    pub lambda: f64,
    pub platt: Option<PlattCalibration>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    k: f64,
    p: [f64; 2],
    w: [f64; 2],
    lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    platt: Option<PlattCalibration>,
}

impl HyperbolicSvmModel {
    pub fn score(&self, x: DiscPoint) -> f64 {
        score(self, x)
    }

    pub fn predict(&self, x: DiscPoint) -> i64 {
        predict(self, x)
    }

    pub fn to_json(&self) -> Result<String> {
        let m = ModelJson {
            k: self.curvature.k(),
            p: [self.p.x, self.p.y],
            w: [self.w.x, self.w.y],
            lambda: self.lambda,
            platt: self.platt,
        };
        Ok(serde_json::to_string(&m)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelJson = serde_json::from_str(text)?;
        let curvature = Curvature::new(m.k)?;
        let p = curvature.point(m.p[0], m.p[1])?;
        Ok(HyperbolicSvmModel { p, w: Vec2::new(m.w[0], m.w[1]), curvature, lambda: m.lambda, platt: m.platt })
    }
}

pub fn score(model: &HyperbolicSvmModel, x: DiscPoint) -> f64 {
    if x == model.p {
        return 0.0;
    }
    model.curvature.log(model.p, x).dot(model.w)
}

/// Sign of the score; a score of exactly 0 predicts +1.
pub fn predict(model: &HyperbolicSvmModel, x: DiscPoint) -> i64 {
    if score(model, x) >= 0.0 {
        1
    } else {
        -1
    }
}

fn tangent_features(points: &[DiscPoint], p: DiscPoint, c: Curvature) -> Result<Vec<[f64; 2]>> {
    c.check(p)?;
    points
        .iter()
        .map(|&x| {
            c.check(x)?;
            let u = if x == p { Vec2::ZERO } else { c.log(p, x) };
            Ok([u.x, u.y])
        })
        .collect()
}

/// Fit with the full objective trace.
pub fn fit_soft_traced(
    points: &[DiscPoint],
    labels: &[i64],
    p: DiscPoint,
    c: Curvature,
    lambda: f64,
    opts: SolverOptions,
) -> Result<(HyperbolicSvmModel, LinearFit<2>)> {
    let y = signed(labels)?;
    let feats = tangent_features(points, p, c)?;
    let fit = solve_linear(&feats, &y, lambda, opts)?;
    let model = HyperbolicSvmModel { p, w: Vec2::new(fit.w[0], fit.w[1]), curvature: c, lambda, platt: None };
    Ok((model, fit))
}

/// Soft-margin fit with reference point `p`.
pub fn fit_soft(points: &[DiscPoint], labels: &[i64], p: DiscPoint, c: Curvature, lambda: f64) -> Result<HyperbolicSvmModel> {
    fit_soft_traced(points, labels, p, c, lambda, SolverOptions::default()).map(|(m, _)| m)
}

/// Objective of `model` on the data.
pub fn soft_objective(model: &HyperbolicSvmModel, points: &[DiscPoint], labels: &[i64]) -> Result<f64> {
    let y = signed(labels)?;
    let feats = tangent_features(points, model.p, model.curvature)?;
    Ok(primal_objective(&[model.w.x, model.w.y], &feats, &y, model.lambda))
}

/// Smallest `y ⟨log_p(x), w⟩` over the data.
pub fn min_margin(model: &HyperbolicSvmModel, points: &[DiscPoint], labels: &[i64]) -> f64 {
    points.iter().zip(labels).map(|(&x, &l)| l as f64 * score(model, x)).fold(f64::INFINITY, f64::min)
}

/// Hard-margin fit: a soft fit with a very large weight, rejected unless
/// every margin reaches 1 within [`HARD_MARGIN_TOL`].
pub fn fit_hard(points: &[DiscPoint], labels: &[i64], p: DiscPoint, c: Curvature) -> Result<HyperbolicSvmModel> {
    let model = fit_soft(points, labels, p, c, HARD_MARGIN_LAMBDA)?;
    let m = min_margin(&model, points, labels);
    if m < 1.0 - HARD_MARGIN_TOL {
        return Err(Error::NotSeparable(format!("smallest margin {m:.3e} after fitting; use a soft-margin fit")));
    }
    Ok(model)
}

/// A reference-point candidate: the geodesic midpoint of a close pair of
/// vertices from opposite hulls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceCandidate {
    pub point: DiscPoint,
    pub pair_distance: f64,
    /// The midpoint falls inside one of the hulls (possible when the classes
    /// overlap).
    pub inside_hull: bool,
}

/// Midpoints of the `n_candidates` closest cross-hull vertex pairs, closest
/// first.
pub fn select_reference_point(
    hull_plus: &ConvexHull,
    hull_minus: &ConvexHull,
    c: Curvature,
    n_candidates: usize,
) -> Result<Vec<ReferenceCandidate>> {
    if hull_plus.is_empty() || hull_minus.is_empty() {
        return Err(Error::EmptyInput("reference point needs two nonempty hulls"));
    }
    let mut pairs: Vec<(f64, DiscPoint, DiscPoint)> = Vec::with_capacity(hull_plus.len() * hull_minus.len());
    for &a in &hull_plus.extremes {
        for &b in &hull_minus.extremes {
            pairs.push((c.dist(a, b), a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(pairs
        .iter()
        .take(n_candidates.max(1))
        .map(|&(d, a, b)| {
            let point = c.midpoint(a, b);
            let inside_hull = strictly_inside(hull_plus, point, c) || strictly_inside(hull_minus, point, c);
            ReferenceCandidate { point, pair_distance: d, inside_hull }
        })
        .collect())
}

fn strictly_inside(h: &ConvexHull, x: DiscPoint, c: Curvature) -> bool {
    h.len() >= 3 && !h.extremes.contains(&x) && h.contains(x, c)
}

pub fn accuracy(model: &HyperbolicSvmModel, points: &[DiscPoint], labels: &[i64]) -> f64 {
    if points.is_empty() {
        return f64::NAN;
    }
    points.iter().zip(labels).filter(|(&x, &l)| predict(model, x) == l).count() as f64 / points.len() as f64
}

/// Hulls of the two classes of a ±1 data set.
pub fn class_hulls(points: &[DiscPoint], labels: &[i64], c: Curvature) -> Result<(ConvexHull, ConvexHull)> {
    let pick = |want: i64| -> Vec<DiscPoint> {
        points.iter().zip(labels).filter(|(_, &l)| l == want).map(|(&x, _)| x).collect()
    };
    let (plus, minus) = (pick(1), pick(-1));
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::EmptyInput("both classes need points"));
    }
    Ok((graham_scan(&plus, c)?, graham_scan(&minus, c)?))
}

/// Screens the reference candidates of the two hulls with quick fits, keeps
/// the one with the best training accuracy (earliest on ties) and refits.
pub fn fit_with_reference_search(
    points: &[DiscPoint],
    labels: &[i64],
    hull_plus: &ConvexHull,
    hull_minus: &ConvexHull,
    c: Curvature,
    lambda: f64,
    n_candidates: usize,
) -> Result<HyperbolicSvmModel> {
    let candidates = select_reference_point(hull_plus, hull_minus, c, n_candidates)?;
    let mut best: Option<(f64, DiscPoint)> = None;
    for cand in &candidates {
        let (m, _) = fit_soft_traced(points, labels, cand.point, c, lambda, SolverOptions::quick())?;
        let acc = accuracy(&m, points, labels);
        if best.map_or(true, |(b, _)| acc > b) {
            best = Some((acc, cand.point));
        }
    }
    let p = best.expect("at least one candidate").1;
    fit_soft(points, labels, p, c, lambda)
}

/// Plane classifier `sign(⟨w, x⟩ + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuclideanSvmModel {
    pub w: [f64; 2],
    pub b: f64,
}

impl EuclideanSvmModel {
    pub fn score(&self, x: Vec2) -> f64 {
        self.w[0] * x.x + self.w[1] * x.y + self.b
    }

    pub fn predict(&self, x: Vec2) -> i64 {
        if self.score(x) >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn accuracy(&self, points: &[Vec2], labels: &[i64]) -> f64 {
        if points.is_empty() {
            return f64::NAN;
        }
        points.iter().zip(labels).filter(|(&x, &l)| self.predict(x) == l).count() as f64 / points.len() as f64
    }
}

pub fn fit_euclidean(points: &[Vec2], labels: &[i64], lambda: f64) -> Result<EuclideanSvmModel> {
    let y = signed(labels)?;
    let feats: Vec<[f64; 3]> = points.iter().map(|x| [x.x, x.y, 1.0]).collect();
    let fit = solve_linear(&feats, &y, lambda, SolverOptions::default())?;
    Ok(EuclideanSvmModel { w: [fit.w[0], fit.w[1]], b: fit.w[2] })
}

/// One calibrated one-vs-rest model per class.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassModel {
    pub classes: Vec<i64>,
    pub models: Vec<HyperbolicSvmModel>,
}

impl MulticlassModel {
    /// Calibrated probability of each class.
    pub fn probabilities(&self, x: DiscPoint) -> Vec<f64> {
        self.models
            .iter()
            .map(|m| match &m.platt {
                Some(cal) => platt_apply(cal, m.score(x)),
                None => m.score(x),
            })
            .collect()
    }

    /// Most probable class; ties go to the smallest label.
    pub fn predict(&self, x: DiscPoint) -> i64 {
        let probs = self.probabilities(x);
        let mut best = 0;
        for j in 1..probs.len() {
            if probs[j] > probs[best] || (probs[j] == probs[best] && self.classes[j] < self.classes[best]) {
                best = j;
            }
        }
        self.classes[best]
    }

    pub fn accuracy(&self, points: &[DiscPoint], labels: &[i64]) -> f64 {
        if points.is_empty() {
            return f64::NAN;
        }
        points.iter().zip(labels).filter(|(&x, &l)| self.predict(x) == l).count() as f64 / points.len() as f64
    }
}

/// One calibrated one-vs-rest plane classifier per class.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanMulticlassModel {
    pub classes: Vec<i64>,
    pub models: Vec<(EuclideanSvmModel, PlattCalibration)>,
}

impl EuclideanMulticlassModel {
    pub fn predict(&self, x: Vec2) -> i64 {
        let probs: Vec<f64> = self.models.iter().map(|(m, cal)| platt_apply(cal, m.score(x))).collect();
        let mut best = 0;
        for j in 1..probs.len() {
            if probs[j] > probs[best] || (probs[j] == probs[best] && self.classes[j] < self.classes[best]) {
                best = j;
            }
        }
        self.classes[best]
    }

    pub fn accuracy(&self, points: &[Vec2], labels: &[i64]) -> f64 {
        if points.is_empty() {
            return f64::NAN;
        }
        points.iter().zip(labels).filter(|(&x, &l)| self.predict(x) == l).count() as f64 / points.len() as f64
    }
}

pub fn fit_euclidean_multiclass(points: &[Vec2], labels: &[i64], lambda: f64) -> Result<EuclideanMulticlassModel> {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("multi-class fit needs at least 2 classes".into()));
    }
    let mut models = Vec::with_capacity(classes.len());
    for &cls in &classes {
        let y: Vec<i64> = labels.iter().map(|&l| if l == cls { 1 } else { -1 }).collect();
        let m = fit_euclidean(points, &y, lambda)?;
        let scores: Vec<f64> = points.iter().map(|&x| m.score(x)).collect();
        models.push((m, platt_fit(&scores, &y)?));
    }
    Ok(EuclideanMulticlassModel { classes, models })
}

pub fn fit_multiclass(points: &[DiscPoint], labels: &[i64], c: Curvature, lambda: f64) -> Result<MulticlassModel> {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("multi-class fit needs at least 2 classes".into()));
    }
    let mut models = Vec::with_capacity(classes.len());
    for &cls in &classes {
        let y: Vec<i64> = labels.iter().map(|&l| if l == cls { 1 } else { -1 }).collect();
        let (hp, hm) = class_hulls(points, &y, c)?;
        let mut m = fit_with_reference_search(points, &y, &hp, &hm, c, lambda, 3)?;
        let scores: Vec<f64> = points.iter().map(|&x| m.score(x)).collect();
        m.platt = Some(platt_fit(&scores, &y)?);
        models.push(m);
    }
    Ok(MulticlassModel { classes, models })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};
    use approx::assert_abs_diff_eq;
    use crate::seed;
    use rand::Rng;
    use std::f64::consts::PI;

    /// Minimum-norm point of the hull of `pts` (Frank–Wolfe with exact line
    /// search, then polished on the two active vertices).
    fn pairwise_min_norm(pts: &[[f64; 2]]) -> [f64; 2] {
        let mut best = pts[0];
        let mut best_n = dot(&best, &best);
        for a in pts {
            for b in pts {
                let d = [b[0] - a[0], b[1] - a[1]];
                let dd = dot(&d, &d);
                let t = if dd > 0.0 { (-dot(a, &d) / dd).clamp(0.0, 1.0) } else { 0.0 };
                let z = [a[0] + t * d[0], a[1] + t * d[1]];
                let n = dot(&z, &z);
                if n < best_n {
                    best_n = n;
                    best = z;
                }
            }
        }
        best
    }

    #[test]
    fn two_point_solution() {
        let c = Curvature::UNIT;
        let p = Vec2::new(0.1, 0.2);
        let u = Vec2::new(0.3, -0.4);
        let xp = c.exp(p, u);
        let xm = c.exp(p, -u);
        let m = fit_hard(&[xp, xm], &[1, -1], p, c).unwrap();
        let expect = u * (1.0 / u.norm_sq());
        assert_abs_diff_eq!(m.w.x, expect.x, epsilon = 1e-6);
        assert_abs_diff_eq!(m.w.y, expect.y, epsilon = 1e-6);
        assert_abs_diff_eq!(m.score(xp), 1.0, epsilon = 1e-6);
        assert_eq!(m.score(p), 0.0);
        assert_eq!(m.predict(p), 1);
    }

    #[test]
    fn hard_margin_matches_min_norm_oracle() {
        let c = Curvature::UNIT;
        let mut rng = seed::rng(4, "svm-hard", 0);
        for _ in 0..20 {
            let p = Vec2::from_polar(rng.gen_range(0.0..0.5), rng.gen_range(0.0..2.0 * PI));
            let dir = Vec2::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
            let mut pts = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..30 {
                let v = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let side = v.dot(dir);
                if side.abs() < 0.1 {
                    continue;
                }
                pts.push(c.exp(p, v));
                labels.push(if side > 0.0 { 1 } else { -1 });
            }
            if !labels.contains(&1) || !labels.contains(&-1) {
                continue;
            }
            let m = fit_hard(&pts, &labels, p, c).unwrap();
            assert!(min_margin(&m, &pts, &labels) >= 1.0 - HARD_MARGIN_TOL);
            let yu: Vec<[f64; 2]> = pts
                .iter()
                .zip(&labels)
                .map(|(&x, &l)| {
                    let u = c.log(p, x) * l as f64;
                    [u.x, u.y]
                })
                .collect();
            let z = pairwise_min_norm(&yu);
            let zn = dot(&z, &z);
            assert_abs_diff_eq!(m.w.x, z[0] / zn, epsilon = 1e-4 * (1.0 / zn.sqrt()));
            assert_abs_diff_eq!(m.w.y, z[1] / zn, epsilon = 1e-4 * (1.0 / zn.sqrt()));
        }
    }

    #[test]
    fn objective_is_monotone_and_bounded() {
        let c = Curvature::UNIT;
        let s = synth_generate(&SynthSpec { n: 400, gamma: 0.0, ..SynthSpec::default() }).unwrap();
        let (m, fit) =
            fit_soft_traced(&s.data.points, &s.data.labels, s.p, c, 1.0, SolverOptions::default()).unwrap();
        assert!(fit.checkpoints.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.objective <= s.data.len() as f64);
        assert_abs_diff_eq!(soft_objective(&m, &s.data.points, &s.data.labels).unwrap(), fit.objective, epsilon = 1e-9);
    }

    #[test]
    fn tiny_lambda_shrinks_w() {
        let c = Curvature::UNIT;
        let s = synth_generate(&SynthSpec { n: 200, gamma: 0.1, ..SynthSpec::default() }).unwrap();
        let m = fit_soft(&s.data.points, &s.data.labels, s.p, c, 1e-8).unwrap();
        assert!(m.w.norm() < 1e-5);
        assert!(soft_objective(&m, &s.data.points, &s.data.labels).unwrap() < 1e-5);
    }

    #[test]
    fn separable_synthetic_is_hard_separable() {
        let c = Curvature::UNIT;
        let s = synth_generate(&SynthSpec { n: 3000, gamma: 0.3, seed: 9, ..SynthSpec::default() }).unwrap();
        let m = fit_hard(&s.data.points, &s.data.labels, s.p, c).unwrap();
        assert!(min_margin(&m, &s.data.points, &s.data.labels) >= 1.0 - 1e-6);
        assert_eq!(accuracy(&m, &s.data.points, &s.data.labels), 1.0);
        let mut rev_pts = s.data.points.clone();
        let mut rev_labels = s.data.labels.clone();
        rev_pts.reverse();
        rev_labels.reverse();
        let m2 = fit_hard(&rev_pts, &rev_labels, s.p, c).unwrap();
        assert!((m.w - m2.w).norm() < 1e-4 * m.w.norm());
    }

    #[test]
    fn non_separable_hard_fit_errors() {
        let c = Curvature::UNIT;
        let pts = [Vec2::new(0.3, 0.0), Vec2::new(0.31, 0.0)];
        assert!(matches!(fit_hard(&pts, &[1, -1], Vec2::ZERO, c), Err(Error::NotSeparable(_))));
    }

    #[test]
    fn reference_candidates() {
        let c = Curvature::UNIT;
        let a = ConvexHull { extremes: vec![Vec2::new(0.4, 0.1)] };
        let b = ConvexHull { extremes: vec![Vec2::new(-0.2, 0.3)] };
        let cands = select_reference_point(&a, &b, c, 3).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].point, c.midpoint(a.extremes[0], b.extremes[0]));

        let plus = ConvexHull { extremes: vec![Vec2::new(0.3, 0.0), Vec2::new(0.6, 0.2), Vec2::new(0.6, -0.2)] };
        let minus = ConvexHull { extremes: plus.extremes.iter().map(|&x| -x).collect() };
        let cands = select_reference_point(&plus, &minus, c, 3).unwrap();
        assert!(cands[0].point.norm() < 1e-9);
        assert!(!cands[0].inside_hull);
        assert_eq!(cands.len(), 3);
        assert!(cands.windows(2).all(|w| w[0].pair_distance <= w[1].pair_distance));
    }

    #[test]
    fn flipping_w_negates_scores() {
        let c = Curvature::UNIT;
        let m = HyperbolicSvmModel { p: Vec2::new(0.2, 0.1), w: Vec2::new(1.5, -0.5), curvature: c, lambda: 1.0, platt: None };
        let neg = HyperbolicSvmModel { w: -m.w, ..m.clone() };
        let scaled = HyperbolicSvmModel { w: m.w * 3.0, ..m.clone() };
        for x in [Vec2::new(0.5, 0.5), Vec2::new(-0.3, 0.1), Vec2::new(0.0, -0.7)] {
            assert_eq!(neg.score(x), -m.score(x));
            assert_eq!(scaled.predict(x), m.predict(x));
        }
    }

    #[test]
    fn model_json_round_trip() {
        let m = HyperbolicSvmModel {
            p: Vec2::new(0.2, 0.1),
            w: Vec2::new(1.5, -0.5),
            curvature: Curvature::new(2.0).unwrap(),
            lambda: 3.0,
            platt: Some(PlattCalibration { a: -2.0, b: 0.5 }),
        };
        let text = m.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["platt"]["A"], -2.0);
        assert_eq!(v["k"], 2.0);
        assert_eq!(HyperbolicSvmModel::from_json(&text).unwrap(), m);
        let bare = HyperbolicSvmModel { platt: None, ..m };
        assert!(!bare.to_json().unwrap().contains("platt"));
    }

    #[test]
    fn euclidean_fits() {
        let pts = [Vec2::new(0.1, 0.5), Vec2::new(0.2, 0.6), Vec2::new(0.1, -0.5), Vec2::new(0.3, -0.4)];
        let m = fit_euclidean(&pts, &[1, 1, -1, -1], 100.0).unwrap();
        assert_eq!(m.accuracy(&pts, &[1, 1, -1, -1]), 1.0);
        let xor = [Vec2::new(0.3, 0.3), Vec2::new(-0.3, -0.3), Vec2::new(0.3, -0.3), Vec2::new(-0.3, 0.3)];
        let m = fit_euclidean(&xor, &[1, 1, -1, -1], 100.0).unwrap();
        assert!(m.accuracy(&xor, &[1, 1, -1, -1]) <= 0.75);
    }

    #[test]
    fn euclidean_agrees_near_origin() {
        let c = Curvature::UNIT;
        let mut rng = seed::rng(6, "near-origin", 0);
        let pts: Vec<Vec2> = (0..2000)
            .map(|_| Vec2::from_polar(0.1 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI)))
            .collect();
        let dir = Vec2::new(0.6, 0.8);
        let labels: Vec<i64> = pts.iter().map(|x| if x.dot(dir) >= 0.0 { 1 } else { -1 }).collect();
        let e = fit_euclidean(&pts, &labels, 10.0).unwrap();
        let h = fit_soft(&pts, &labels, Vec2::ZERO, c, 10.0).unwrap();
        let agree = pts.iter().filter(|&&x| e.predict(x) == h.predict(x)).count();
        assert!(agree as f64 >= 0.99 * pts.len() as f64, "agree {agree}");
    }

    #[test]
    fn platt_calibration() {
        let scores = [-10.0, -9.0, -8.0, 8.0, 9.0, 10.0];
        let labels = [-1, -1, -1, 1, 1, 1];
        let cal = platt_fit(&scores, &labels).unwrap();
        assert!(platt_apply(&cal, 10.0) >= 0.99);
        assert!(platt_apply(&cal, -10.0) <= 0.01);
        let cross = -cal.b / cal.a;
        assert_abs_diff_eq!(platt_apply(&cal, cross), 0.5, epsilon = 1e-6);
        let mut prev = 0.0;
        for i in -50..=50 {
            let p = platt_apply(&cal, i as f64 * 0.3);
            assert!(p > 0.0 && p < 1.0 || p == 1.0 || p == 0.0);
            assert!(p >= prev);
            prev = p;
        }
        assert!(platt_fit(&[1.0, 2.0], &[1, 1]).is_err());

        let noisy = platt_fit(&[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 0.2, -0.2], &[-1, -1, 1, 1, 1, 1, -1, -1]).unwrap();
        assert!(noisy.a < 0.0);
        let p = platt_apply(&noisy, 0.7);
        assert_eq!(p + (1.0 - p), 1.0);
    }

    fn clusters(n: usize, seed: u64) -> (Vec<DiscPoint>, Vec<i64>) {
        let mut rng = seed::rng(seed, "clusters", 0);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let cls = (i % 3) as i64;
            let angle = cls as f64 * 2.0 * PI / 3.0 + rng.gen_range(-0.4..0.4);
            pts.push(Vec2::from_polar(rng.gen_range(0.3..0.9), angle));
            labels.push(cls + 1);
        }
        (pts, labels)
    }

    #[test]
    fn multiclass_on_angular_clusters() {
        let c = Curvature::UNIT;
        let (pts, labels) = clusters(600, 1);
        let m = fit_multiclass(&pts, &labels, c, 100.0).unwrap();
        let (tp, tl) = clusters(300, 2);
        assert!(m.accuracy(&tp, &tl) >= 0.95);
        // relabeling the classes relabels the predictions
        let relabeled: Vec<i64> = labels.iter().map(|&l| 4 - l).collect();
        let m2 = fit_multiclass(&pts, &relabeled, c, 100.0).unwrap();
        let agree = tp.iter().filter(|&&x| m2.predict(x) == 4 - m.predict(x)).count();
        assert!(agree as f64 >= 0.99 * tp.len() as f64);
        assert!(fit_multiclass(&pts, &vec![1; pts.len()], c, 1.0).is_err());
        let e = fit_euclidean_multiclass(&pts, &labels, 100.0).unwrap();
        assert!(e.accuracy(&tp, &tl) >= 0.95);
    }

    #[test]
    fn binary_consistency_of_multiclass() {
        let c = Curvature::UNIT;
        let s = synth_generate(&SynthSpec { n: 2000, gamma: 0.2, seed: 3, ..SynthSpec::default() }).unwrap();
        let (hp, hm) = class_hulls(&s.data.points, &s.data.labels, c).unwrap();
        let bin = fit_with_reference_search(&s.data.points, &s.data.labels, &hp, &hm, c, 100.0, 3).unwrap();
        let multi = fit_multiclass(&s.data.points, &s.data.labels, c, 100.0).unwrap();
        let test = synth_generate(&SynthSpec { n: 2000, gamma: 0.2, seed: 3, ..SynthSpec::default() }).unwrap();
        let agree = test.data.points.iter().filter(|&&x| bin.predict(x) == multi.predict(x)).count();
        assert!(agree as f64 >= 0.99 * test.data.len() as f64);
    }
}
