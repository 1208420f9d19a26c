//! Labeled point sets: synthetic generation around a random hyperplane,
//! train/test splitting, client partitioning and CSV I/O.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Curvature, DiscPoint, Tangent, Vec2};
use crate::quantize::uniform_sample;
use crate::seed;

/// Points in the disc with integer class labels (±1 in the binary case).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<DiscPoint>,
    pub labels: Vec<i64>,
    pub curvature: Curvature,
    /// Euclidean radius that bounds the data.
    pub radius: f64,
}

impl Dataset {
    pub fn new(points: Vec<DiscPoint>, labels: Vec<i64>, curvature: Curvature, radius: f64) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidParameter(format!("{} points but {} labels", points.len(), labels.len())));
        }
        for &x in &points {
            curvature.check(x)?;
        }
        Ok(Dataset { points, labels, curvature, radius })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<i64, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Distinct labels in increasing order.
    pub fn classes(&self) -> Vec<i64> {
        self.class_counts().into_keys().collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            curvature: self.curvature,
            radius: self.radius,
        }
    }

    /// Points carrying `label`.
    pub fn class_points(&self, label: i64) -> Vec<DiscPoint> {
        self.points.iter().zip(&self.labels).filter(|(_, &l)| l == label).map(|(&x, _)| x).collect()
    }
}

/// Random train/test split with `test_fraction` of the points held out.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut seed::rng(seed, "split", 0));
    let n_test = ((data.len() as f64) * test_fraction).round() as usize;
    let (test, train) = idx.split_at(n_test.min(data.len()));
    (data.subset(train), data.subset(test))
}

/// Shuffles the points and deals them into `clients` near-equal parts.
pub fn partition_clients(data: &Dataset, clients: usize, seed: u64) -> Vec<Dataset> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut seed::rng(seed, "clients", 0));
    let mut parts = vec![Vec::new(); clients];
    for (j, i) in idx.into_iter().enumerate() {
        parts[j % clients].push(i);
    }
    parts.iter().map(|p| data.subset(p)).collect()
}

/// Parameters of the synthetic two-class generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub radius: f64,
    pub curvature: Curvature,
    /// Reference point sits at Euclidean norm `mu * radius`.
    pub mu: f64,
    /// Points closer than this (hyperbolic distance) to the plane are dropped.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n: 20_000, radius: 0.95, curvature: Curvature::UNIT, mu: 0.4, gamma: 0.2, seed: 1 }
    }
}

/// A generated dataset with the plane that labels it.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub data: Dataset,
    pub p: DiscPoint,
    pub w: Tangent,
    /// Points drawn before the margin filter.
    pub drawn: usize,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Synthetic> {
    let c = spec.curvature;
    if !(spec.mu > 0.0 && spec.mu < 1.0) {
        return Err(Error::InvalidParameter(format!("mu must lie in (0, 1), got {}", spec.mu)));
    }
    if !(spec.gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {}", spec.gamma)));
    }
    let drawn = uniform_sample(spec.n, spec.radius, c, seed::derive(spec.seed, "synth-points", 0))?;
    let mut rng = seed::rng(spec.seed, "synth-plane", 0);
    let p = Vec2::from_polar(spec.mu * spec.radius, rng.gen_range(0.0..2.0 * PI));
    let w = Vec2::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
    let mut points = Vec::with_capacity(drawn.len());
    let mut labels = Vec::with_capacity(drawn.len());
    for &x in &drawn {
        if spec.gamma > 0.0 && point_to_plane_distance(x, p, w, c)? < spec.gamma {
            continue;
        }
        points.push(x);
        labels.push(if c.log(p, x).dot(w) >= 0.0 { 1 } else { -1 });
    }
    if points.is_empty() && spec.n > 0 {
        return Err(Error::InvalidParameter(format!("all points removed by the margin gamma = {}", spec.gamma)));
    }
    Ok(Synthetic { data: Dataset { points, labels, curvature: c, radius: spec.radius }, p, w, drawn: drawn.len() })
}

/// Hyperbolic distance from `x` to the geodesic through `p` normal to `w`.
pub fn point_to_plane_distance(x: DiscPoint, p: DiscPoint, w: Tangent, c: Curvature) -> Result<f64> {
    let wn = w.norm();
    if !(wn > 0.0) {
        return Err(Error::InvalidParameter("plane normal must be nonzero".into()));
    }
    c.check(x)?;
    c.check(p)?;
    let z = c.add(-p, x);
    let denom = (1.0 - c.k() * z.norm_sq()) * wn;
    Ok((2.0 * c.sqrt_k() * z.dot(w).abs() / denom).asinh() / c.sqrt_k())
}

/// The same distance by minimizing over points of the geodesic: a dense
/// scan followed by golden-section refinement.
pub fn numeric_plane_distance(x: DiscPoint, p: DiscPoint, w: Tangent, c: Curvature) -> Result<f64> {
    let wn = w.norm();
    if !(wn > 0.0) {
        return Err(Error::InvalidParameter("plane normal must be nonzero".into()));
    }
    c.check(x)?;
    c.check(p)?;
    let dir = w.perp() * (1.0 / wn);
    // exp_p scales tangent length by the conformal factor
    let lambda = 2.0 / (1.0 - c.k() * p.norm_sq());
    let reach = c.dist(p, x) + 1e-9;
    let at = |s: f64| c.dist(x, c.exp(p, dir * (s / lambda)));
    let steps = 2000;
    let h = 2.0 * reach / steps as f64;
    let mut best = (0..=steps).map(|i| -reach + i as f64 * h).min_by(|&a, &b| at(a).total_cmp(&at(b))).unwrap();
    let (mut lo, mut hi) = (best - h, best + h);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - ratio * (hi - lo);
        let m2 = lo + ratio * (hi - lo);
        if at(m1) < at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    best = (lo + hi) / 2.0;
    Ok(at(best))
}

/// Sidecar path holding `{k, R}` next to a CSV file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    k: f64,
    #[serde(rename = "R")]
    r: f64,
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(["x1", "x2", "label"]).map_err(|e| Error::Io(e.to_string()))?;
    for (x, l) in data.points.iter().zip(&data.labels) {
        w.write_record([x.x.to_string(), x.y.to_string(), l.to_string()]).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    let side = Sidecar { k: data.curvature.k(), r: data.radius };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Reads a dataset; without a sidecar, `k = 1` and `R = 0.95` are assumed.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let side = match std::fs::read_to_string(sidecar_path(path)) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Sidecar { k: 1.0, r: 0.95 },
        Err(e) => return Err(e.into()),
    };
    let c = Curvature::new(side.k)?;
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    if text.trim().is_empty() {
        return Ok(Dataset { points, labels, curvature: c, radius: side.r });
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["x1", "x2", "label"] {
        return Err(Error::Parse { row: 1, msg: format!("expected header x1,x2,label, got {}", header.iter().collect::<Vec<_>>().join(",")) });
    }
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if rec.len() != 3 {
            return Err(Error::Parse { row, msg: format!("expected 3 fields, got {}", rec.len()) });
        }
        let num = |j: usize| rec[j].trim().parse::<f64>().map_err(|e| Error::Parse { row, msg: format!("{}: {e}", &rec[j]) });
        let x = Vec2::new(num(0)?, num(1)?);
        let label = rec[2].trim().parse::<i64>().map_err(|e| Error::Parse { row, msg: format!("label {}: {e}", &rec[2]) })?;
        if !x.is_finite() || !c.contains(x) {
            return Err(Error::Parse { row, msg: format!("point ({}, {}) lies outside the disc", x.x, x.y) });
        }
        points.push(x);
        labels.push(label);
    }
    Ok(Dataset { points, labels, curvature: c, radius: side.r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_margin_keeps_everything() {
        let spec = SynthSpec { n: 500, gamma: 0.0, ..SynthSpec::default() };
        let s = synth_generate(&spec).unwrap();
        assert_eq!(s.data.len(), 500);
    }

    #[test]
    fn margin_and_labels_hold() {
        let spec = SynthSpec { n: 20_000, radius: 0.95, curvature: Curvature::UNIT, mu: 0.4, gamma: 0.2, seed: 5 };
        let s = synth_generate(&spec).unwrap();
        let counts = s.data.class_counts();
        assert_eq!(counts.len(), 2);
        let c = spec.curvature;
        for (&x, &l) in s.data.points.iter().zip(&s.data.labels) {
            assert!(point_to_plane_distance(x, s.p, s.w, c).unwrap() >= 0.2);
            let side = c.log(s.p, x).dot(s.w);
            assert_eq!(l, if side >= 0.0 { 1 } else { -1 });
        }
        assert!(s.data.len() < 20_000);
    }

    #[test]
    fn huge_margin_removes_everything() {
        let spec = SynthSpec { n: 100, gamma: 1e9, ..SynthSpec::default() };
        assert!(synth_generate(&spec).is_err());
    }

    #[test]
    fn distance_zero_on_the_plane() {
        let c = Curvature::UNIT;
        let p = Vec2::new(0.3, -0.2);
        let w = Vec2::new(0.5, 1.0);
        assert_eq!(point_to_plane_distance(p, p, w, c).unwrap(), 0.0);
        let on = c.exp(p, w.perp() * 0.7);
        assert_abs_diff_eq!(point_to_plane_distance(on, p, w, c).unwrap(), 0.0, epsilon = 1e-12);
        assert!(point_to_plane_distance(on, p, Vec2::ZERO, c).is_err());
    }

    #[test]
    fn closed_form_matches_numeric() {
        let mut rng = seed::rng(2, "plane-dist", 0);
        for k in [1.0, 0.5, 3.0] {
            let c = Curvature::new(k).unwrap();
            for _ in 0..50 {
                let lim = 0.9 * c.s();
                let x = Vec2::from_polar(rng.gen_range(0.0..lim), rng.gen_range(0.0..2.0 * PI));
                let p = Vec2::from_polar(rng.gen_range(0.0..lim), rng.gen_range(0.0..2.0 * PI));
                let w = Vec2::from_polar(rng.gen_range(0.1..2.0), rng.gen_range(0.0..2.0 * PI));
                let a = point_to_plane_distance(x, p, w, c).unwrap();
                let b = numeric_plane_distance(x, p, w, c).unwrap();
                assert!((a - b).abs() < 1e-6, "k={k} closed {a} numeric {b}");
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let s = synth_generate(&SynthSpec { n: 300, ..SynthSpec::default() }).unwrap();
        save_dataset(&path, &s.data).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(load_dataset(&path).unwrap(), s.data);
    }

    #[test]
    fn bad_rows_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,x2,label\n0.1,0.2,1\n0.9,0.9,-1\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Parse { row: 3, .. })));
        std::fs::write(&path, "x1,x2,label\n0.1,abc,1\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Parse { row: 2, .. })));
        std::fs::write(&path, "").unwrap();
        assert!(load_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn splitting_and_partitioning() {
        let s = synth_generate(&SynthSpec { n: 1000, gamma: 0.0, ..SynthSpec::default() }).unwrap();
        let (train, test) = train_test_split(&s.data, 0.1, 3);
        assert_eq!(test.len(), 100);
        assert_eq!(train.len(), 900);
        let parts = partition_clients(&train, 7, 3);
        assert_eq!(parts.iter().map(Dataset::len).sum::<usize>(), 900);
        assert!(parts.iter().all(|p| p.len() == 128 || p.len() == 129));
    }
}
