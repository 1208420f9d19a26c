//! Grouping hulls into classes: a complete graph weighted by inverse mean
//! hull distance, cut into equal parts by Kernighan–Lin (two groups) or
//! spectral clustering (more groups).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Curvature;
use crate::hull::ConvexHull;
use crate::seed;

/// Smallest hull distance used for weights; keeps coincident hulls finite.
pub const MIN_HULL_DISTANCE: f64 = 1e-9;

/// Weight given to edges between hulls of the same client when the
/// separation heuristic is on.
pub const SAME_CLIENT_WEIGHT: f64 = 1e-12;

/// Pass cap for Kernighan–Lin.
pub const KL_MAX_PASSES: usize = 100;

/// Largest graph [`exhaustive_bisection`] accepts.
pub const EXHAUSTIVE_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct HullGraph {
    pub weights: DMatrix<f64>,
    /// Client that sent each node.
    pub client_of: Vec<usize>,
}

impl HullGraph {
    pub fn n(&self) -> usize {
        self.client_of.len()
    }

    /// Graph from a symmetric matrix of hull distances.
    pub fn from_distances(dist: &DMatrix<f64>, client_of: Vec<usize>) -> Result<Self> {
        let n = dist.nrows();
        if dist.ncols() != n || client_of.len() != n {
            return Err(Error::InvalidParameter("distance matrix and client map disagree in size".into()));
        }
        let mut weights = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = dist[(i, j)];
                    if !d.is_finite() || d < 0.0 {
                        return Err(Error::InvalidParameter(format!("distance {d} between nodes {i} and {j}")));
                    }
                    weights[(i, j)] = 1.0 / d.max(MIN_HULL_DISTANCE);
                }
            }
        }
        Ok(HullGraph { weights, client_of })
    }

    /// Copy with same-client edges damped to [`SAME_CLIENT_WEIGHT`].
    pub fn with_client_separation(&self) -> HullGraph {
        let mut g = self.clone();
        for i in 0..self.n() {
            for j in 0..self.n() {
                if i != j && self.client_of[i] == self.client_of[j] {
                    g.weights[(i, j)] = SAME_CLIENT_WEIGHT;
                }
            }
        }
        g
    }
}

/// Mean hyperbolic distance over all vertex pairs of two hulls.
pub fn mean_hull_distance(a: &ConvexHull, b: &ConvexHull, c: Curvature) -> f64 {
    let mut total = 0.0;
    for &x in &a.extremes {
        for &y in &b.extremes {
            total += c.dist(x, y);
        }
    }
    total / (a.len() * b.len()) as f64
}

pub fn build_hull_graph(hulls: &[ConvexHull], c: Curvature, client_of: &[usize]) -> Result<HullGraph> {
    if hulls.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 hulls, got {}", hulls.len())));
    }
    if hulls.iter().any(ConvexHull::is_empty) {
        return Err(Error::EmptyInput("hull graph node without vertices"));
    }
    let n = hulls.len();
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = mean_hull_distance(&hulls[i], &hulls[j], c);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    HullGraph::from_distances(&dist, client_of.to_vec())
}

/// Group of every node, numbered from 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grouping {
    pub assignment: Vec<usize>,
    pub groups: usize,
}

impl Grouping {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.groups];
        for &g in &self.assignment {
            s[g] += 1;
        }
        s
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == group).collect()
    }

    /// Whether no two nodes of one client share a group.
    pub fn separates_clients(&self, client_of: &[usize]) -> bool {
        let n = self.assignment.len();
        (0..n).all(|i| (i + 1..n).all(|j| client_of[i] != client_of[j] || self.assignment[i] != self.assignment[j]))
    }
}

/// Total weight of edges between different groups.
pub fn cut_weight(g: &HullGraph, assignment: &[usize]) -> f64 {
    let n = g.n();
    let mut cut = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if assignment[i] != assignment[j] {
                cut += g.weights[(i, j)];
            }
        }
    }
    cut
}

/// Balanced bisection by Kernighan–Lin from the alternating split.
pub fn kernighan_lin_bisect(g: &HullGraph) -> Result<Grouping> {
    kernighan_lin_trace(g).map(|(grouping, _)| grouping)
}

/// Like [`kernighan_lin_bisect`], also returning the cut weight before the
/// first pass and after each pass.
pub fn kernighan_lin_trace(g: &HullGraph) -> Result<(Grouping, Vec<f64>)> {
    let n = g.n();
    if n == 0 || n % 2 != 0 {
        return Err(Error::Grouping(format!("bisection needs an even, nonzero node count, got {n}")));
    }
    let w = &g.weights;
    let mut side: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut trace = vec![cut_weight(g, &side)];
    for _ in 0..KL_MAX_PASSES {
        // external minus internal cost per node
        let mut d: Vec<f64> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| if side[i] != side[j] { w[(i, j)] } else { -w[(i, j)] }).sum())
            .collect();
        let mut locked = vec![false; n];
        let mut swaps = Vec::with_capacity(n / 2);
        let mut gains = Vec::with_capacity(n / 2);
        for _ in 0..n / 2 {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in (0..n).filter(|&a| !locked[a] && side[a] == 0) {
                for b in (0..n).filter(|&b| !locked[b] && side[b] == 1) {
                    let gain = d[a] + d[b] - 2.0 * w[(a, b)];
                    if best.map_or(true, |(bg, _, _)| gain > bg) {
                        best = Some((gain, a, b));
                    }
                }
            }
            let (gain, a, b) = best.expect("both sides keep unlocked nodes");
            locked[a] = true;
            locked[b] = true;
            for x in (0..n).filter(|&x| !locked[x]) {
                if side[x] == 0 {
                    d[x] += 2.0 * w[(x, a)] - 2.0 * w[(x, b)];
                } else {
                    d[x] += 2.0 * w[(x, b)] - 2.0 * w[(x, a)];
                }
            }
            swaps.push((a, b));
            gains.push(gain);
        }
        let mut best_k = 0;
        let mut best_total = 0.0;
        let mut running = 0.0;
        for (k, &gain) in gains.iter().enumerate() {
            running += gain;
            if running > best_total {
                best_total = running;
                best_k = k + 1;
            }
        }
        let before = *trace.last().unwrap();
        if best_k == 0 || best_total <= 1e-12 * before.abs().max(1e-300) {
            break;
        }
        let mut next = side.clone();
        for &(a, b) in &swaps[..best_k] {
            next.swap(a, b);
        }
        let after = cut_weight(g, &next);
        if after >= before {
            // rounding ate the predicted gain
            break;
        }
        side = next;
        trace.push(after);
    }
    Ok((Grouping { assignment: side, groups: 2 }, trace))
}

/// Minimum balanced cut by enumeration.
pub fn exhaustive_bisection(g: &HullGraph) -> Result<(Grouping, f64)> {
    let n = g.n();
    if n == 0 || n % 2 != 0 {
        return Err(Error::Grouping(format!("bisection needs an even, nonzero node count, got {n}")));
    }
    if n > EXHAUSTIVE_CAP {
        return Err(Error::SizeCap { what: "exhaustive bisection", size: n, cap: EXHAUSTIVE_CAP });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    // node 0 always in group 0 to skip mirrored splits
    for mask in 0u32..(1 << (n - 1)) {
        if mask.count_ones() as usize != n / 2 {
            continue;
        }
        let side: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { ((mask >> (i - 1)) & 1) as usize }).collect();
        let cut = cut_weight(g, &side);
        if best.as_ref().map_or(true, |(_, c)| cut < *c) {
            best = Some((side, cut));
        }
    }
    let (assignment, cut) = best.unwrap();
    Ok((Grouping { assignment, groups: 2 }, cut))
}

/// `J` equal groups by spectral clustering of the normalized Laplacian.
///
/// With `separate_clients`, same-client edges are damped and every client's
/// nodes are sent to distinct groups; otherwise the k-means clusters are
/// rebalanced greedily to equal size.
pub fn spectral_group(g: &HullGraph, groups: usize, separate_clients: bool, seed: u64) -> Result<Grouping> {
    let n = g.n();
    if groups < 2 || n % groups != 0 {
        return Err(Error::Grouping(format!("{n} nodes cannot form {groups} equal groups")));
    }
    let size = n / groups;
    let mut clients: Vec<usize> = g.client_of.clone();
    clients.sort_unstable();
    clients.dedup();
    let members: Vec<Vec<usize>> =
        clients.iter().map(|&c| (0..n).filter(|&i| g.client_of[i] == c).collect()).collect();
    if separate_clients {
        if let Some(m) = members.iter().find(|m| m.len() > groups) {
            return Err(Error::Grouping(format!(
                "a client holds {} hulls but only {groups} groups exist",
                m.len()
            )));
        }
    }
    let graph = if separate_clients { g.with_client_separation() } else { g.clone() };
    let embedding = spectral_embedding(&graph, groups)?;
    let centroids = kmeans(&embedding, groups, seed);
    let cost = |i: usize, c: usize| sq_dist(&embedding[i], &centroids[c]);

    let assignment = if separate_clients && members.iter().all(|m| m.len() == groups) {
        let mut a = vec![0; n];
        for m in &members {
            for (&node, group) in m.iter().zip(best_matching(m, groups, &cost)) {
                a[node] = group;
            }
        }
        a
    } else if separate_clients {
        greedy_separated(&members, groups, size, &cost, n)?
    } else {
        rebalance(n, groups, size, &cost)
    };
    Ok(Grouping { assignment, groups })
}

/// Rows of the `k` eigenvectors of smallest eigenvalue of the normalized
/// Laplacian, scaled to unit length.
fn spectral_embedding(g: &HullGraph, k: usize) -> Result<Vec<Vec<f64>>> {
    let n = g.n();
    let deg: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| g.weights[(i, j)]).sum()).collect();
    if deg.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::Grouping("graph has an isolated or non-finite node".into()));
    }
    let mut lap = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            lap[(i, j)] = if i == j { 1.0 } else { -g.weights[(i, j)] / (deg[i] * deg[j]).sqrt() };
        }
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Ok((0..n)
        .map(|i| {
            let row: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd's algorithm from k-means++ starts; the best of several restarts.
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = points.len();
    let dim = points[0].len();
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for restart in 0..10 {
        let mut rng = seed::rng(seed, "kmeans", restart);
        let mut centers = vec![points[rng.gen_range(0..n)].clone()];
        while centers.len() < k {
            let d: Vec<f64> =
                points.iter().map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min)).collect();
            let total: f64 = d.iter().sum();
            let next = if total > 0.0 {
                let mut t = rng.gen_range(0.0..total);
                let mut pick = n - 1;
                for (i, &di) in d.iter().enumerate() {
                    if t < di {
                        pick = i;
                        break;
                    }
                    t -= di;
                }
                pick
            } else {
                rng.gen_range(0..n)
            };
            centers.push(points[next].clone());
        }
        let mut labels = vec![usize::MAX; n];
        for _ in 0..100 {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let c = (0..k).min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b]))).unwrap();
                if labels[i] != c {
                    labels[i] = c;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let mine: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if !mine.is_empty() {
                    *center = (0..dim).map(|d| mine.iter().map(|p| p[d]).sum::<f64>() / mine.len() as f64).collect();
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
        if best.as_ref().map_or(true, |(b, _)| inertia < *b) {
            best = Some((inertia, centers));
        }
    }
    best.unwrap().1
}

/// Assignment of `nodes` to distinct groups minimizing total cost:
/// exhaustive over permutations up to 7 groups, greedy beyond.
fn best_matching(nodes: &[usize], groups: usize, cost: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    if groups <= 7 {
        let mut perm: Vec<usize> = (0..groups).collect();
        let mut best = (f64::INFINITY, perm.clone());
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = nodes.iter().zip(p).map(|(&i, &c)| cost(i, c)).sum();
            if total < best.0 {
                best = (total, p.to_vec());
            }
        });
        best.1[..nodes.len()].to_vec()
    } else {
        let mut out = vec![usize::MAX; nodes.len()];
        let mut used = vec![false; groups];
        let mut pairs: Vec<(f64, usize, usize)> =
            (0..nodes.len()).flat_map(|a| (0..groups).map(move |c| (a, c))).map(|(a, c)| (cost(nodes[a], c), a, c)).collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, a, c) in pairs {
            if out[a] == usize::MAX && !used[c] {
                out[a] = c;
                used[c] = true;
            }
        }
        out
    }
}

/// Calls `visit` with every permutation of `v`.
pub(crate) fn permute(v: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

/// Cheapest feasible node-to-group moves until every group holds `size`
/// nodes, never putting two nodes of one client together.
fn greedy_separated(
    members: &[Vec<usize>],
    groups: usize,
    size: usize,
    cost: &dyn Fn(usize, usize) -> f64,
    n: usize,
) -> Result<Vec<usize>> {
    let mut a = vec![usize::MAX; n];
    let mut fill = vec![0usize; groups];
    let owner: Vec<usize> = {
        let mut o = vec![0; n];
        for (c, m) in members.iter().enumerate() {
            for &i in m {
                o[i] = c;
            }
        }
        o
    };
    let mut taken = vec![vec![false; groups]; members.len()];
    let mut pairs: Vec<(f64, usize, usize)> =
        (0..n).flat_map(|i| (0..groups).map(move |c| (i, c))).map(|(i, c)| (cost(i, c), i, c)).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (_, i, c) in pairs {
        if a[i] == usize::MAX && fill[c] < size && !taken[owner[i]][c] {
            a[i] = c;
            fill[c] += 1;
            taken[owner[i]][c] = true;
        }
    }
    if a.contains(&usize::MAX) {
        return Err(Error::Grouping("no balanced grouping keeps clients apart".into()));
    }
    Ok(a)
}

/// Nearest-centroid labels, then the cheapest moves out of overfull groups.
fn rebalance(n: usize, groups: usize, size: usize, cost: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut a: Vec<usize> =
        (0..n).map(|i| (0..groups).min_by(|&x, &y| cost(i, x).total_cmp(&cost(i, y))).unwrap()).collect();
    loop {
        let mut fill = vec![0usize; groups];
        for &g in &a {
            fill[g] += 1;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if fill[a[i]] <= size {
                continue;
            }
            for c in (0..groups).filter(|&c| fill[c] < size) {
                let extra = cost(i, c) - cost(i, a[i]);
                if best.map_or(true, |(b, _, _)| extra < b) {
                    best = Some((extra, i, c));
                }
            }
        }
        match best {
            Some((_, i, c)) => a[i] = c,
            None => return a,
        }
    }
}
