//! The one-round protocol and the experiment driver.
//!
//! Clients quantize their class hulls, tag hull bins with B_h labels and
//! send masked power sums. The server decodes the aggregate, splits the
//! label sums back into anonymous hulls, groups them into classes and
//! trains on the grouped vertices. Centralized baselines train on the raw
//! data or on its class hulls.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::bh::{smallest_bh, BhSequence};
use crate::codes::labels::{build_multiclass_label_vector, disambiguate, hull_bins, hull_from_bins, LabelVector};
use crate::codes::order::{label_positions, order_agreement};
use crate::codes::scma::{aggregate, generate_masks, protocol_field, scma_decode, scma_encode, MaskSet, ScmaShare};
use crate::codes::PrimeField;
use crate::data::{partition_clients, synth_generate, train_test_split, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::geometry::{Curvature, DiscPoint};
use crate::hull::{cmp_points, graham_scan, ConvexHull};
use crate::partition::{build_hull_graph, kernighan_lin_bisect, permute, spectral_group, Grouping};
use crate::quantize::{build_equal_area_grid, build_grid, epsilon_minimal_hull, GridMode, QuantGrid};
use crate::seed;
use crate::stats::{mean, mean_ci95, MeanCi};
use crate::svm::{
    class_hulls, fit_euclidean, fit_euclidean_multiclass, fit_multiclass, fit_with_reference_search, SolverOptions,
};

/// Training schemes compared by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Baseline {
    /// Centralized hyperbolic SVM on all training points.
    #[serde(rename = "CP")]
    CentralPoincare,
    /// Centralized Euclidean SVM on all training points.
    #[serde(rename = "CE")]
    CentralEuclidean,
    /// Centralized hyperbolic SVM on class-hull vertices only.
    #[serde(rename = "CH-CP")]
    HullPoincare,
    /// Centralized Euclidean SVM on class-hull vertices only.
    #[serde(rename = "CH-CE")]
    HullEuclidean,
    /// Federated protocol, hyperbolic SVM on the server.
    #[serde(rename = "FLP")]
    FederatedPoincare,
    /// Federated protocol, Euclidean SVM on the server.
    #[serde(rename = "FLE")]
    FederatedEuclidean,
}

impl Baseline {
    pub const ALL: [Baseline; 6] = [
        Baseline::CentralPoincare,
        Baseline::CentralEuclidean,
        Baseline::HullPoincare,
        Baseline::HullEuclidean,
        Baseline::FederatedPoincare,
        Baseline::FederatedEuclidean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::CentralPoincare => "CP",
            Baseline::CentralEuclidean => "CE",
            Baseline::HullPoincare => "CH-CP",
            Baseline::HullEuclidean => "CH-CE",
            Baseline::FederatedPoincare => "FLP",
            Baseline::FederatedEuclidean => "FLE",
        }
    }

    pub fn is_federated(self) -> bool {
        matches!(self, Baseline::FederatedPoincare | Baseline::FederatedEuclidean)
    }

    fn is_poincare(self) -> bool {
        matches!(self, Baseline::CentralPoincare | Baseline::HullPoincare | Baseline::FederatedPoincare)
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown baseline {s:?}")))
    }
}

/// Synthetic data settings used when no dataset is supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Points drawn before the margin filter; `None` means `mu · 100000`.
    pub n: Option<usize>,
    pub mu: f64,
    pub gamma: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { n: None, mu: 0.4, gamma: 0.3 }
    }
}

impl SynthParams {
    pub fn points(&self) -> usize {
        self.n.unwrap_or((self.mu * 100_000.0).round() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub clients: usize,
    pub classes: usize,
    /// Quantization margin (hyperbolic distance).
    pub epsilon: f64,
    pub radius: f64,
    pub curvature: Curvature,
    pub lambda: f64,
    /// Largest number of hulls that may share a bin; `None` picks the
    /// smallest value that works for the run.
    pub h: Option<usize>,
    pub seed: u64,
    pub grid_mode: GridMode,
    pub trials: usize,
    pub test_fraction: f64,
    pub baselines: Vec<Baseline>,
    /// Keep hulls of one client in different groups.
    pub separate_clients: bool,
    pub reference_candidates: usize,
    /// Give every client its own random mapping from local to global labels.
    pub label_switching: bool,
    pub switch_seed: u64,
    pub solver: SolverOptions,
    pub synth: SynthParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            clients: 10,
            classes: 2,
            epsilon: 0.01,
            radius: 0.95,
            curvature: Curvature::UNIT,
            lambda: 20_000.0,
            h: None,
            seed: 1,
            grid_mode: GridMode::DistanceMargin,
            trials: 10,
            test_fraction: 0.1,
            baselines: vec![
                Baseline::CentralPoincare,
                Baseline::CentralEuclidean,
                Baseline::FederatedPoincare,
                Baseline::FederatedEuclidean,
            ],
            separate_clients: true,
            reference_candidates: 3,
            label_switching: true,
            switch_seed: 0,
            solver: SolverOptions::default(),
            synth: SynthParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.clients < 1 {
            return bad("at least one client is needed".into());
        }
        if self.classes < 2 {
            return bad(format!("at least 2 classes are needed, got {}", self.classes));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.radius > 0.0 && self.radius < self.curvature.s()) {
            return bad(format!("radius {} must lie inside the disc", self.radius));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if matches!(self.h, Some(h) if h < 2) {
            return bad("h must be at least 2".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.trials == 0 {
            return bad("at least one trial is needed".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<QuantGrid> {
        let g = build_grid(self.epsilon, self.radius, self.curvature)?;
        match self.grid_mode {
            GridMode::DistanceMargin => Ok(g),
            GridMode::EqualArea => build_equal_area_grid(g.n_theta, g.n_rh, self.radius, self.curvature),
        }
    }
}

/// Quantized hull of each class, in the order of `classes`.
pub fn client_hulls(data: &Dataset, classes: &[i64], grid: &QuantGrid) -> Result<Vec<ConvexHull>> {
    classes
        .iter()
        .map(|&cls| {
            let pts = data.class_points(cls);
            if pts.is_empty() {
                return Err(Error::EmptyInput("a client holds no points of some class"));
            }
            epsilon_minimal_hull(&pts, grid, data.curvature)
        })
        .collect()
}

/// Public parameters every party agrees on before the round.
#[derive(Clone, Debug)]
pub struct ProtocolSetup {
    pub grid: QuantGrid,
    pub field: PrimeField,
    pub sequence: BhSequence,
    pub h: usize,
    pub classes: usize,
    pub clients: usize,
    /// Largest number of hull vertices held by one client.
    pub k_max: usize,
    pub n_sums: usize,
    pub max_support: usize,
}

impl ProtocolSetup {
    /// Parameters for the given client hulls. `k_max` and the automatic `h`
    /// use knowledge of all hulls, which a real deployment would have to
    /// agree on separately.
    pub fn new(hulls: &[Vec<ConvexHull>], grid: &QuantGrid, h: Option<usize>) -> Result<Self> {
        let clients = hulls.len();
        let classes = hulls.first().map_or(0, Vec::len);
        if clients == 0 || classes == 0 || hulls.iter().any(|c| c.len() != classes) {
            return Err(Error::InvalidParameter("every client needs one hull per class".into()));
        }
        let mut k_max = 0;
        let mut per_bin: HashMap<u64, usize> = HashMap::new();
        for client in hulls {
            let mut k = 0;
            for hull in client {
                let bins = hull_bins(hull, grid)?;
                k += bins.len();
                for b in bins {
                    *per_bin.entry(b).or_insert(0) += 1;
                }
            }
            k_max = k_max.max(k);
        }
        let crowd = per_bin.values().copied().max().unwrap_or(1);
        let h = h.unwrap_or(crowd.max(2));
        let sequence = smallest_bh(classes * clients, h)?;
        let field = protocol_field(clients, h, grid.num_bins(), sequence.total())?;
        Ok(ProtocolSetup {
            grid: grid.clone(),
            field,
            sequence,
            h,
            classes,
            clients,
            k_max,
            n_sums: 2 * clients * k_max,
            max_support: clients * k_max,
        })
    }
}

/// One client's view of the round.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    /// Position from order agreement, starting at 1.
    pub rank: usize,
    /// Global class of each local class index.
    pub local_classes: Vec<i64>,
    /// Quantized hull of each local class.
    pub hulls: Vec<ConvexHull>,
    /// B_h label of each local class.
    pub labels: Vec<u64>,
}

impl ClientState {
    pub fn label_vector(&self, grid: &QuantGrid) -> Result<LabelVector> {
        build_multiclass_label_vector(&self.hulls, &self.labels, grid)
    }
}

/// Masked share of one client.
pub fn client_round(client: &ClientState, setup: &ProtocolSetup, masks: &MaskSet) -> Result<ScmaShare> {
    let v = client.label_vector(&setup.grid)?;
    scma_encode(&v, masks, &setup.field, setup.n_sums)
}

/// Everything the server derives from the shares.
#[derive(Clone, Debug)]
pub struct ServerState {
    pub aggregate: ScmaShare,
    pub decoded: BTreeMap<u64, u64>,
    /// Reconstructed hulls, sorted by their vertices.
    pub hulls: Vec<ConvexHull>,
    /// Sequence index of the label behind each hull.
    pub hull_label: Vec<usize>,
    /// Anonymous sender of each hull (the label pair it came from).
    pub sender: Vec<usize>,
    pub grouping: Grouping,
}

fn cmp_hulls(a: &ConvexHull, b: &ConvexHull) -> std::cmp::Ordering {
    let (va, vb) = (a.sorted_vertices(), b.sorted_vertices());
    for (x, y) in va.iter().zip(&vb) {
        let o = cmp_points(x, y);
        if o.is_ne() {
            return o;
        }
    }
    va.len().cmp(&vb.len())
}

/// Decodes, disambiguates and groups.
pub fn server_round(shares: &[ScmaShare], setup: &ProtocolSetup, separate_clients: bool, seed: u64) -> Result<ServerState> {
    let agg = aggregate(shares, &setup.field)?;
    let decoded = scma_decode(&agg, &setup.field, setup.grid.num_bins(), setup.max_support)?;
    let bins = disambiguate(&decoded, &setup.sequence, setup.h)?;
    let c = setup.grid.curvature;
    let mut nodes = Vec::with_capacity(bins.len());
    for (j, b) in bins.iter().enumerate() {
        if b.is_empty() {
            return Err(Error::DecodeFailure(format!("no bins carry label {}", setup.sequence.elements[j])));
        }
        nodes.push((hull_from_bins(b, &setup.grid, c)?, j));
    }
    nodes.sort_by(|a, b| cmp_hulls(&a.0, &b.0).then(a.1.cmp(&b.1)));
    let hull_label: Vec<usize> = nodes.iter().map(|n| n.1).collect();
    let sender: Vec<usize> = hull_label.iter().map(|&j| j / setup.classes).collect();
    let hulls: Vec<ConvexHull> = nodes.into_iter().map(|n| n.0).collect();
    let graph = build_hull_graph(&hulls, c, &sender)?;
    let grouping = if setup.classes == 2 {
        let g = if separate_clients { graph.with_client_separation() } else { graph };
        kernighan_lin_bisect(&g)?
    } else {
        spectral_group(&graph, setup.classes, separate_clients, seed)?
    };
    Ok(ServerState { aggregate: agg, decoded, hulls, hull_label, sender, grouping })
}

/// Class of each group chosen to agree with the most hulls: exhaustive over
/// permutations up to 7 groups, greedy beyond.
pub fn align_groups(grouping: &Grouping, truth: &[i64], classes: &[i64]) -> Vec<i64> {
    let j = grouping.groups;
    let mut counts = vec![vec![0usize; classes.len()]; j];
    for (node, &g) in grouping.assignment.iter().enumerate() {
        if let Some(c) = classes.iter().position(|&c| c == truth[node]) {
            counts[g][c] += 1;
        }
    }
    if j == classes.len() && j <= 7 {
        let mut perm: Vec<usize> = (0..j).collect();
        let mut best = (0usize, perm.clone());
        let mut first = true;
        permute(&mut perm, 0, &mut |p| {
            let score: usize = (0..j).map(|g| counts[g][p[g]]).sum();
            if first || score > best.0 {
                best = (score, p.to_vec());
                first = false;
            }
        });
        best.1.iter().map(|&c| classes[c]).collect()
    } else {
        let mut out = vec![classes[0]; j];
        let mut cells: Vec<(usize, usize, usize)> =
            (0..j).flat_map(|g| (0..classes.len()).map(move |c| (g, c))).map(|(g, c)| (counts[g][c], g, c)).collect();
        cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_g = vec![false; j];
        let mut used_c = vec![false; classes.len()];
        for (_, g, c) in cells {
            if !used_g[g] && !used_c[c] {
                out[g] = classes[c];
                used_g[g] = true;
                used_c[c] = true;
            }
        }
        out
    }
}

/// Record of the messages of one round, for offline inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub q: u64,
    pub n_sums: usize,
    pub num_bins: u64,
    pub max_support: usize,
    pub h: usize,
    pub sequence: Vec<u64>,
    /// Wire bytes of each share, hex encoded.
    pub shares: Vec<String>,
    /// Unmasked aggregate, for checking a decode.
    pub truth: Vec<BinSum>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSum {
    pub bin: u64,
    pub sum: u64,
}

impl Transcript {
    pub fn decode_shares(&self) -> Result<Vec<ScmaShare>> {
        self.shares
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let bytes = hex::decode(h).map_err(|e| Error::Parse { row: i + 1, msg: format!("share {}: {e}", i + 1) })?;
                ScmaShare::from_bytes(&bytes)
            })
            .collect()
    }
}

/// Full result of one simulated round.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub setup: ProtocolSetup,
    pub clients: Vec<ClientState>,
    pub shares: Vec<ScmaShare>,
    pub server: ServerState,
    /// Ground-truth class of each server hull.
    pub hull_class: Vec<i64>,
    /// Class given to each group after alignment.
    pub group_class: Vec<i64>,
    /// Server hulls equal the client hulls as a multiset.
    pub lossless: bool,
    pub transcript: Transcript,
}

impl ProtocolRun {
    /// Vertices of the server hulls labeled by their group's class.
    pub fn training_set(&self) -> (Vec<DiscPoint>, Vec<i64>) {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (node, hull) in self.server.hulls.iter().enumerate() {
            let cls = self.group_class[self.server.grouping.assignment[node]];
            for &x in &hull.extremes {
                pts.push(x);
                labels.push(cls);
            }
        }
        (pts, labels)
    }

    /// Fraction of hulls whose group carries their true class.
    pub fn grouping_accuracy(&self) -> f64 {
        let a = &self.server.grouping.assignment;
        let ok = (0..a.len()).filter(|&i| self.group_class[a[i]] == self.hull_class[i]).count();
        ok as f64 / a.len() as f64
    }

    /// Sizes of all client hulls.
    pub fn hull_sizes(&self) -> Vec<usize> {
        self.clients.iter().flat_map(|c| c.hulls.iter().map(ConvexHull::len)).collect()
    }

    pub fn bits_per_client(&self) -> u64 {
        self.shares.first().map_or(0, ScmaShare::payload_bits)
    }
}

/// Local label order of each client: the identity, or a random bijection
/// when label switching is simulated.
fn local_orders(clients: usize, classes: &[i64], cfg: &RunConfig, seed: u64) -> Vec<Vec<i64>> {
    use rand::seq::SliceRandom;
    (0..clients)
        .map(|i| {
            let mut order = classes.to_vec();
            if cfg.label_switching {
                order.shuffle(&mut seed::rng(seed ^ cfg.switch_seed.rotate_left(17), "label-switch", i as u64));
            }
            order
        })
        .collect()
}

/// Runs the protocol on data already split across clients.
pub fn simulate_protocol(parts: &[Dataset], classes: &[i64], cfg: &RunConfig, seed: u64) -> Result<ProtocolRun> {
    let grid = cfg.grid()?;
    let orders = local_orders(parts.len(), classes, cfg, seed);
    let hulls: Vec<Vec<ConvexHull>> =
        parts.par_iter().zip(&orders).map(|(d, o)| client_hulls(d, o, &grid)).collect::<Result<_>>()?;
    let setup = ProtocolSetup::new(&hulls, &grid, cfg.h)?;
    let ranks = order_agreement(parts.len(), seed::derive(seed, "order", 0))?;
    let clients: Vec<ClientState> = hulls
        .into_iter()
        .zip(orders)
        .enumerate()
        .map(|(id, (h, local_classes))| {
            let labels = label_positions(ranks[id], setup.classes).map(|p| setup.sequence.elements[p]).collect();
            ClientState { id, rank: ranks[id], local_classes, hulls: h, labels }
        })
        .collect();
    let masks = if clients.len() >= 2 {
        generate_masks(clients.len(), setup.n_sums, &setup.field, seed::derive(seed, "masks", 0))?
    } else {
        vec![MaskSet::zero(setup.n_sums)]
    };
    let shares: Vec<ScmaShare> =
        clients.par_iter().zip(&masks).map(|(c, m)| client_round(c, &setup, m)).collect::<Result<_>>()?;

    let mut truth = LabelVector::default();
    for c in &clients {
        truth.merge(&c.label_vector(&grid)?);
    }
    let transcript = Transcript {
        q: setup.field.q(),
        n_sums: setup.n_sums,
        num_bins: grid.num_bins(),
        max_support: setup.max_support,
        h: setup.h,
        sequence: setup.sequence.elements.clone(),
        shares: shares.iter().map(|s| hex::encode(s.to_bytes())).collect(),
        truth: truth.entries.iter().map(|(&bin, &sum)| BinSum { bin, sum }).collect(),
    };

    let server = server_round(&shares, &setup, cfg.separate_clients, seed::derive(seed, "spectral", 0))?;

    // ground truth of each server hull, from the owner of its label
    let mut owner_of_label: HashMap<usize, (usize, usize)> = HashMap::new();
    for c in &clients {
        for (j, p) in label_positions(c.rank, setup.classes).enumerate() {
            owner_of_label.insert(p, (c.id, j));
        }
    }
    let hull_class: Vec<i64> = server
        .hull_label
        .iter()
        .map(|l| {
            let (id, j) = owner_of_label[l];
            clients[id].local_classes[j]
        })
        .collect();
    let group_class = align_groups(&server.grouping, &hull_class, classes);

    let mut sent: Vec<Vec<DiscPoint>> =
        clients.iter().flat_map(|c| c.hulls.iter().map(ConvexHull::sorted_vertices)).collect();
    let mut got: Vec<Vec<DiscPoint>> = server.hulls.iter().map(ConvexHull::sorted_vertices).collect();
    let key = |a: &Vec<DiscPoint>, b: &Vec<DiscPoint>| {
        cmp_hulls(&ConvexHull { extremes: a.clone() }, &ConvexHull { extremes: b.clone() })
    };
    sent.sort_by(key);
    got.sort_by(key);
    let lossless = sent == got;

    Ok(ProtocolRun { setup, clients, shares, server, hull_class, group_class, lossless, transcript })
}

/// Metrics of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub accuracy: BTreeMap<Baseline, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub errors: BTreeMap<Baseline, String>,
    pub n_train: usize,
    pub n_test: usize,
    /// Mean and largest quantized hull size over clients and classes.
    pub avg_hull: f64,
    pub max_hull: usize,
    /// Share size per client in bits, when the protocol ran.
    pub bits: Option<u64>,
    pub h: Option<usize>,
    pub q: Option<u64>,
    pub k_max: Option<usize>,
    pub lossless: Option<bool>,
    pub grouping_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub accuracy: BTreeMap<Baseline, MeanCi>,
    pub avg_hull: f64,
    pub max_hull: usize,
    pub bits: Option<f64>,
    pub failures: BTreeMap<Baseline, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: RunConfig,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
}

fn poincare_fit_accuracy(train_pts: &[DiscPoint], train_labels: &[i64], test: &Dataset, cfg: &RunConfig, binary: bool) -> Result<f64> {
    let c = cfg.curvature;
    if binary {
        let (hp, hm) = class_hulls(train_pts, train_labels, c)?;
        let m = fit_with_reference_search(train_pts, train_labels, &hp, &hm, c, cfg.lambda, cfg.reference_candidates)?;
        Ok(crate::svm::accuracy(&m, &test.points, &test.labels))
    } else {
        let m = fit_multiclass(train_pts, train_labels, c, cfg.lambda)?;
        Ok(m.accuracy(&test.points, &test.labels))
    }
}

fn euclidean_fit_accuracy(train_pts: &[DiscPoint], train_labels: &[i64], test: &Dataset, cfg: &RunConfig, binary: bool) -> Result<f64> {
    if binary {
        Ok(fit_euclidean(train_pts, train_labels, cfg.lambda)?.accuracy(&test.points, &test.labels))
    } else {
        Ok(fit_euclidean_multiclass(train_pts, train_labels, cfg.lambda)?.accuracy(&test.points, &test.labels))
    }
}

/// Vertices of the unquantized class hulls of `data`.
fn hull_vertices(data: &Dataset, classes: &[i64]) -> Result<(Vec<DiscPoint>, Vec<i64>)> {
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for &cls in classes {
        let h = graham_scan(&data.class_points(cls), data.curvature)?;
        labels.extend(std::iter::repeat(cls).take(h.len()));
        pts.extend(h.extremes);
    }
    Ok((pts, labels))
}

/// Data of one trial: the fixed dataset, or a fresh synthetic draw.
fn trial_data(cfg: &RunConfig, data: Option<&Dataset>, trial: usize) -> Result<Dataset> {
    match data {
        Some(d) => Ok(d.clone()),
        None => {
            let spec = SynthSpec {
                n: cfg.synth.points(),
                radius: cfg.radius,
                curvature: cfg.curvature,
                mu: cfg.synth.mu,
                gamma: cfg.synth.gamma,
                seed: seed::derive(cfg.seed, "trial-data", trial as u64),
            };
            Ok(synth_generate(&spec)?.data)
        }
    }
}

pub fn run_trial(cfg: &RunConfig, data: Option<&Dataset>, trial: usize) -> Result<TrialRecord> {
    cfg.validate()?;
    let full = trial_data(cfg, data, trial)?;
    let classes = full.classes();
    if classes.len() != cfg.classes {
        return Err(Error::InvalidParameter(format!(
            "data has {} classes but the configuration expects {}",
            classes.len(),
            cfg.classes
        )));
    }
    let binary = classes == [-1, 1];
    if classes.len() == 2 && !binary {
        return Err(Error::InvalidParameter("binary data must be labeled -1 and +1".into()));
    }
    let trial_seed = seed::derive(cfg.seed, "trial", trial as u64);
    let (train, test) = train_test_split(&full, cfg.test_fraction, trial_seed);
    let parts = partition_clients(&train, cfg.clients, trial_seed);

    let mut rec = TrialRecord {
        trial,
        accuracy: BTreeMap::new(),
        errors: BTreeMap::new(),
        n_train: train.len(),
        n_test: test.len(),
        avg_hull: f64::NAN,
        max_hull: 0,
        bits: None,
        h: None,
        q: None,
        k_max: None,
        lossless: None,
        grouping_accuracy: None,
    };

    let wants_fl = cfg.baselines.iter().any(|b| b.is_federated());
    let protocol = if wants_fl { Some(simulate_protocol(&parts, &classes, cfg, trial_seed)) } else { None };
    let sizes: Result<Vec<usize>> = match &protocol {
        Some(Ok(run)) => Ok(run.hull_sizes()),
        _ => {
            let grid = cfg.grid()?;
            let mut sizes = Vec::new();
            for p in &parts {
                for h in client_hulls(p, &classes, &grid)? {
                    sizes.push(h.len());
                }
            }
            Ok(sizes)
        }
    };
    if let Ok(sizes) = sizes {
        rec.avg_hull = mean(&sizes.iter().map(|&s| s as f64).collect::<Vec<_>>());
        rec.max_hull = sizes.iter().copied().max().unwrap_or(0);
    }
    if let Some(Ok(run)) = &protocol {
        rec.bits = Some(run.bits_per_client());
        rec.h = Some(run.setup.h);
        rec.q = Some(run.setup.field.q());
        rec.k_max = Some(run.setup.k_max);
        rec.lossless = Some(run.lossless);
        rec.grouping_accuracy = Some(run.grouping_accuracy());
    }
    let hull_set = if cfg.baselines.iter().any(|b| matches!(b, Baseline::HullPoincare | Baseline::HullEuclidean)) {
        Some(hull_vertices(&train, &classes))
    } else {
        None
    };

    for &b in &cfg.baselines {
        let outcome: Result<f64> = (|| {
            let (pts, labels): (Vec<DiscPoint>, Vec<i64>) = match b {
                Baseline::CentralPoincare | Baseline::CentralEuclidean => (train.points.clone(), train.labels.clone()),
                Baseline::HullPoincare | Baseline::HullEuclidean => hull_set.clone().expect("hull set computed")?,
                Baseline::FederatedPoincare | Baseline::FederatedEuclidean => {
                    match protocol.as_ref().expect("protocol ran") {
                        Ok(run) => run.training_set(),
                        Err(e) => return Err(e.clone()),
                    }
                }
            };
            if b.is_poincare() {
                poincare_fit_accuracy(&pts, &labels, &test, cfg, binary)
            } else {
                euclidean_fit_accuracy(&pts, &labels, &test, cfg, binary)
            }
        })();
        match outcome {
            Ok(a) => {
                rec.accuracy.insert(b, a);
            }
            Err(e) => {
                rec.errors.insert(b, e.to_string());
            }
        }
    }
    Ok(rec)
}

pub fn summarize(trials: &[TrialRecord], baselines: &[Baseline]) -> Summary {
    let mut accuracy = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for &b in baselines {
        let xs: Vec<f64> = trials.iter().filter_map(|t| t.accuracy.get(&b).copied()).collect();
        accuracy.insert(b, mean_ci95(&xs));
        let failed = trials.len() - xs.len();
        if failed > 0 {
            failures.insert(b, failed);
        }
    }
    let hulls: Vec<f64> = trials.iter().map(|t| t.avg_hull).filter(|v| v.is_finite()).collect();
    let bits: Vec<f64> = trials.iter().filter_map(|t| t.bits.map(|b| b as f64)).collect();
    Summary {
        trials: trials.len(),
        accuracy,
        avg_hull: mean(&hulls),
        max_hull: trials.iter().map(|t| t.max_hull).max().unwrap_or(0),
        bits: (!bits.is_empty()).then(|| mean(&bits)),
        failures,
    }
}

/// Runs every trial (in parallel when a pool is available) and summarizes.
pub fn run_experiment(cfg: &RunConfig, data: Option<&Dataset>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let trials: Vec<TrialRecord> =
        (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, data, t)).collect::<Result<_>>()?;
    let summary = summarize(&trials, &cfg.baselines);
    Ok(ExperimentResult { config: cfg.clone(), trials, summary })
}

#[derive(Serialize)]
struct TrialLine<'a> {
    record: &'static str,
    #[serde(flatten)]
    trial: &'a TrialRecord,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    record: &'static str,
    #[serde(flatten)]
    summary: &'a Summary,
    config: &'a RunConfig,
}

/// One JSON line per trial followed by a summary line, each carrying the
/// effective configuration.
pub fn metrics_jsonl(result: &ExperimentResult) -> Result<String> {
    let mut out = String::new();
    for t in &result.trials {
        out.push_str(&serde_json::to_string(&TrialLine { record: "trial", trial: t, config: &result.config })?);
        out.push('\n');
    }
    let s = SummaryLine { record: "summary", summary: &result.summary, config: &result.config };
    out.push_str(&serde_json::to_string(&s)?);
    out.push('\n');
    Ok(out)
}

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Epsilon,
    Mu,
    Gamma,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epsilon" | "eps" => Ok(SweepParam::Epsilon),
            "mu" => Ok(SweepParam::Mu),
            "gamma" => Ok(SweepParam::Gamma),
            _ => Err(Error::InvalidParameter(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

impl SweepParam {
    pub fn apply(self, cfg: &RunConfig, value: f64) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            SweepParam::Epsilon => c.epsilon = value,
            SweepParam::Mu => c.synth.mu = value,
            SweepParam::Gamma => c.synth.gamma = value,
        }
        c
    }
}

/// One cell of a sweep: a parameter value and its experiment, or the
/// reason it failed.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub value: f64,
    pub result: Result<ExperimentResult>,
}

pub fn run_sweep(cfg: &RunConfig, param: SweepParam, values: &[f64], data: Option<&Dataset>) -> Vec<SweepCell> {
    values
        .iter()
        .map(|&value| SweepCell { value, result: run_experiment(&param.apply(cfg, value), data) })
        .collect()
}

/// Long-format rows `param,baseline,trial,accuracy,avg_hull,max_hull,bits`;
/// failed cells and baselines get an empty accuracy.
pub fn write_sweep_csv<W: std::io::Write>(out: W, cells: &[SweepCell], baselines: &[Baseline]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "baseline", "trial", "accuracy", "avg_hull", "max_hull", "bits"]).map_err(io)?;
    for cell in cells {
        match &cell.result {
            Ok(res) => {
                for t in &res.trials {
                    for &b in baselines {
                        w.write_record([
                            cell.value.to_string(),
                            b.name().to_string(),
                            t.trial.to_string(),
                            t.accuracy.get(&b).map(|a| a.to_string()).unwrap_or_default(),
                            t.avg_hull.to_string(),
                            t.max_hull.to_string(),
                            t.bits.map(|x| x.to_string()).unwrap_or_default(),
                        ])
                        .map_err(io)?;
                    }
                }
            }
            Err(_) => {
                for &b in baselines {
                    w.write_record([cell.value.to_string(), b.name().to_string(), String::new(), String::new(), String::new(), String::new(), String::new()])
                        .map_err(io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Hull sizes of uniform samples and the fitted log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HullScaling {
    /// `(n, trial, hull size)` rows.
    pub rows: Vec<(usize, usize, usize)>,
    /// Fit of `ln(hull size)` on `ln(n)`; `None` with a single size.
    pub fit: Option<crate::stats::LineFit>,
}

/// Hull complexity of `trials` uniform samples of each size. With
/// `quantize_exponent = Some(a)`, points are quantized with margin `n^(-a)`
/// before taking the hull.
pub fn hull_scaling(
    sizes: &[usize],
    trials: usize,
    radius: f64,
    c: Curvature,
    seed: u64,
    quantize_exponent: Option<f64>,
) -> Result<HullScaling> {
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let rows: Vec<(usize, usize, usize)> = jobs
        .par_iter()
        .map(|&(n, t)| {
            let pts = crate::quantize::uniform_sample(n, radius, c, seed::derive(seed, "hull-scaling", (n as u64) << 20 | t as u64))?;
            let hull = match quantize_exponent {
                Some(a) => {
                    let grid = build_grid((n as f64).powf(-a), radius, c)?;
                    epsilon_minimal_hull(&pts, &grid, c)?
                }
                None => graham_scan(&pts, c)?,
            };
            Ok((n, t, hull.len()))
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| (r.0 as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (r.2.max(1) as f64).ln()).collect();
    let distinct = sizes.iter().collect::<std::collections::BTreeSet<_>>().len();
    let fit = if distinct >= 2 { Some(crate::stats::linear_fit(&xs, &ys)?) } else { None };
    Ok(HullScaling { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::quantize::uniform_sample;

    fn small_cfg() -> RunConfig {
        RunConfig {
            clients: 3,
            trials: 2,
            epsilon: 0.1,
            synth: SynthParams { n: Some(3000), mu: 0.4, gamma: 0.3 },
            baselines: Baseline::ALL.to_vec(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_defaults_and_json() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.epsilon, 0.01);
        assert_eq!(cfg.clients, 10);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"CP\""));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"clients": 4, "baselines": ["FLP", "CH-CE"]}"#).unwrap();
        assert_eq!(partial.clients, 4);
        assert_eq!(partial.baselines, vec![Baseline::FederatedPoincare, Baseline::HullEuclidean]);
        assert!(serde_json::from_str::<RunConfig>(r#"{"clientz": 4}"#).is_err());
        assert_eq!("ch-cp".parse::<Baseline>().unwrap(), Baseline::HullPoincare);
        assert!(RunConfig { h: Some(1), ..cfg }.validate().is_err());
    }

    #[test]
    fn protocol_is_lossless_and_groups_correctly() {
        let cfg = small_cfg();
        let s = synth_generate(&SynthSpec { n: 4000, gamma: 0.3, seed: 8, ..SynthSpec::default() }).unwrap();
        let parts = partition_clients(&s.data, 3, 8);
        let run = simulate_protocol(&parts, &[-1, 1], &cfg, 8).unwrap();
        assert!(run.lossless);
        assert_eq!(run.server.hulls.len(), 6);
        assert_eq!(run.grouping_accuracy(), 1.0);
        assert_eq!(run.shares[0].len(), 2 * 3 * run.setup.k_max);
        assert_eq!(run.bits_per_client(), run.shares[0].len() as u64 * (64 - (run.setup.field.q() - 1).leading_zeros()) as u64);
        let t = &run.transcript;
        let shares = t.decode_shares().unwrap();
        assert_eq!(shares, run.shares);
        let truth: BTreeMap<u64, u64> = t.truth.iter().map(|b| (b.bin, b.sum)).collect();
        assert_eq!(run.server.decoded, truth);
    }

    #[test]
    fn single_client_round_trip() {
        let cfg = RunConfig { clients: 1, epsilon: 0.1, ..RunConfig::default() };
        let s = synth_generate(&SynthSpec { n: 2000, gamma: 0.2, seed: 2, ..SynthSpec::default() }).unwrap();
        let run = simulate_protocol(&[s.data.clone()], &[-1, 1], &cfg, 3).unwrap();
        assert!(run.lossless);
        let client = &run.clients[0];
        for (j, hull) in client.hulls.iter().enumerate() {
            let node = run.server.hull_label.iter().position(|&l| l == j).unwrap();
            assert_eq!(run.server.hulls[node].sorted_vertices(), hull.sorted_vertices());
        }
    }

    #[test]
    fn singleton_classes_give_two_entries() {
        let c = Curvature::UNIT;
        let d = Dataset::new(vec![Vec2::new(0.3, 0.1), Vec2::new(-0.4, 0.2)], vec![1, -1], c, 0.95).unwrap();
        let grid = build_grid(0.1, 0.95, c).unwrap();
        let hulls = client_hulls(&d, &[-1, 1], &grid).unwrap();
        let client = ClientState { id: 0, rank: 1, local_classes: vec![-1, 1], hulls, labels: vec![1, 3] };
        assert_eq!(client.label_vector(&grid).unwrap().support(), 2);
        let one_class = Dataset::new(vec![Vec2::new(0.3, 0.1)], vec![1], c, 0.95).unwrap();
        assert!(client_hulls(&one_class, &[-1, 1], &grid).is_err());
    }

    #[test]
    fn label_switching_changes_nothing() {
        let base = RunConfig { trials: 1, ..small_cfg() };
        let a = run_trial(&base, None, 0).unwrap();
        for switch_seed in 1..4 {
            let b = run_trial(&RunConfig { switch_seed, ..base.clone() }, None, 0).unwrap();
            assert_eq!(a, b);
        }
        let off = run_trial(&RunConfig { label_switching: false, ..base.clone() }, None, 0).unwrap();
        assert_eq!(a, off);
    }

    #[test]
    fn client_order_does_not_matter() {
        let cfg = small_cfg();
        let s = synth_generate(&SynthSpec { n: 4000, gamma: 0.3, seed: 4, ..SynthSpec::default() }).unwrap();
        let parts = partition_clients(&s.data, 3, 4);
        let a = simulate_protocol(&parts, &[-1, 1], &cfg, 5).unwrap();
        let rev: Vec<Dataset> = parts.iter().rev().cloned().collect();
        let b = simulate_protocol(&rev, &[-1, 1], &cfg, 5).unwrap();
        let (pa, la) = a.training_set();
        let (pb, lb) = b.training_set();
        assert_eq!(pa, pb);
        assert_eq!(la, lb);
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = small_cfg();
        let a = run_experiment(&cfg, None).unwrap();
        let b = run_experiment(&cfg, None).unwrap();
        assert_eq!(metrics_jsonl(&a).unwrap(), metrics_jsonl(&b).unwrap());
        assert_eq!(a.trials.len(), 2);
        for t in &a.trials {
            assert_eq!(t.accuracy.len(), 6, "{:?}", t.errors);
            assert!(t.accuracy[&Baseline::CentralPoincare] >= 0.97);
            assert!(t.accuracy[&Baseline::FederatedPoincare] >= 0.97);
            assert!(t.accuracy[&Baseline::HullPoincare] >= t.accuracy[&Baseline::CentralPoincare] - 0.05);
            assert_eq!(t.lossless, Some(true));
        }
        let text = metrics_jsonl(&a).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["record"], "trial");
        assert_eq!(lines[2]["record"], "summary");
        assert_eq!(lines[2]["config"]["clients"], 3);
        assert!(lines[2]["accuracy"]["FLP"]["mean"].as_f64().unwrap() > 0.9);
    }

    #[test]
    fn sweep_csv_layout() {
        let cfg = RunConfig { trials: 1, baselines: vec![Baseline::CentralPoincare], ..small_cfg() };
        let cells = run_sweep(&cfg, SweepParam::Epsilon, &[0.1, -1.0], None);
        assert!(cells[1].result.is_err());
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &cells, &cfg.baselines).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "param,baseline,trial,accuracy,avg_hull,max_hull,bits");
        assert!(lines[1].starts_with("0.1,CP,0,"));
        assert_eq!(lines[2], "-1,CP,,,,,");
    }

    #[test]
    fn multiclass_protocol() {
        use std::f64::consts::PI;
        let c = Curvature::UNIT;
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let raw = uniform_sample(6000, 0.95, c, 3).unwrap();
        for x in raw {
            let a = x.principal_angle();
            let sector = (a / (2.0 * PI / 3.0)).floor() as i64;
            let offset = a - sector as f64 * 2.0 * PI / 3.0;
            if offset < 0.15 || offset > 2.0 * PI / 3.0 - 0.15 || x.norm() < 0.1 {
                continue;
            }
            pts.push(x);
            labels.push(sector + 1);
        }
        let data = Dataset::new(pts, labels, c, 0.95).unwrap();
        let cfg = RunConfig {
            classes: 3,
            clients: 3,
            trials: 1,
            epsilon: 0.1,
            lambda: 100.0,
            baselines: vec![Baseline::CentralPoincare, Baseline::FederatedPoincare, Baseline::FederatedEuclidean],
            ..RunConfig::default()
        };
        let rec = run_trial(&cfg, Some(&data), 0).unwrap();
        assert!(rec.errors.is_empty(), "{:?}", rec.errors);
        assert_eq!(rec.grouping_accuracy, Some(1.0));
        assert!(rec.accuracy[&Baseline::FederatedPoincare] >= 0.95);
    }

    #[test]
    fn hull_of_hulls_is_hull_of_union() {
        let c = Curvature::UNIT;
        for seed in 0..50 {
            let parts: Vec<Vec<DiscPoint>> = (0..4).map(|i| uniform_sample(30, 0.9, c, seed * 10 + i).unwrap()).collect();
            let mut vertices = Vec::new();
            for p in &parts {
                vertices.extend(graham_scan(p, c).unwrap().extremes);
            }
            let all: Vec<DiscPoint> = parts.concat();
            assert_eq!(graham_scan(&vertices, c).unwrap().sorted_vertices(), graham_scan(&all, c).unwrap().sorted_vertices());
        }
    }

    #[test]
    fn alignment_prefers_majority() {
        let g = Grouping { assignment: vec![0, 0, 0, 1, 1, 1], groups: 2 };
        assert_eq!(align_groups(&g, &[1, 1, -1, -1, -1, 1], &[-1, 1]), vec![1, -1]);
    }

    #[test]
    fn scaling_slope_is_sublinear() {
        let s = hull_scaling(&[100, 1000, 10_000], 5, 0.95, Curvature::UNIT, 1, None).unwrap();
        let fit = s.fit.unwrap();
        assert!(fit.slope > 0.1 && fit.slope < 0.6, "slope {}", fit.slope);
        let tiny = hull_scaling(&[3], 4, 0.95, Curvature::UNIT, 1, None).unwrap();
        assert!(tiny.fit.is_none());
        assert!(tiny.rows.iter().all(|r| r.2 <= 3));
    }
}
