//! Simulated agreement on a client ordering: every client draws a number
//! from its own sub-seed and the ranks of the draws give the permutation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Ranks (from 1) of the draws: `result[i]` is the position of client `i`.
pub fn order_from_draws(draws: &[f64]) -> Result<Vec<usize>> {
    let mut idx: Vec<usize> = (0..draws.len()).collect();
    idx.sort_by(|&a, &b| draws[a].total_cmp(&draws[b]));
    if idx.windows(2).any(|w| draws[w[0]] == draws[w[1]]) {
        return Err(Error::Degenerate("tied draws"));
    }
    let mut rank = vec![0; draws.len()];
    for (pos, &i) in idx.iter().enumerate() {
        rank[i] = pos + 1;
    }
    Ok(rank)
}

/// Permutation of `1..=clients` derived from `seed`; collisions are redrawn
/// from the next sub-seed.
pub fn order_agreement(clients: usize, seed: u64) -> Result<Vec<usize>> {
    if clients < 1 {
        return Err(Error::InvalidParameter("need at least one client".into()));
    }
    for attempt in 0..64u64 {
        let draws: Vec<f64> = (0..clients)
            .map(|i| seed::rng(seed, "order", (attempt << 32) | i as u64).gen::<f64>())
            .collect();
        if let Ok(rank) = order_from_draws(&draws) {
            return Ok(rank);
        }
    }
    Err(Error::Internal("order agreement kept colliding".into()))
}

/// Zero-based sequence positions owned by the client at `rank` when each
/// client holds `per_client` consecutive labels.
pub fn label_positions(rank: usize, per_client: usize) -> std::ops::Range<usize> {
    per_client * (rank - 1)..per_client * rank
}
