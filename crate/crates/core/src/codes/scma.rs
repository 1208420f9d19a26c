//! Secure aggregation of label vectors by masked power sums.
//!
//! Client `i` sends `S_l = Σ_b v_b · b^(l-1) + z_l (mod q)` for
//! `l = 1..=n_sums`, with masks that cancel across clients. The server sums
//! the shares and recovers the aggregate vector from its power sums with
//! Berlekamp–Massey, a root search for the support and a Vandermonde solve
//! for the values.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::PrimeField;
use super::labels::LabelVector;
use super::poly::{self, berlekamp_massey, roots_exhaustive, roots_split};
use crate::error::{Error, Result};
use crate::seed;

/// Bytes in the share header (`q` and `n_sums`, little endian).
pub const SHARE_HEADER_BYTES: usize = 16;

/// Above this many locator evaluations the decoder switches from scanning
/// every bin to random splitting.
pub const EXHAUSTIVE_ROOT_BUDGET: u64 = 20_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScmaShare {
    pub q: u64,
    pub sums: Vec<u64>,
}

impl ScmaShare {
    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    /// Wire format: `q` and `n_sums` as u64 LE, then each element as u64 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SHARE_HEADER_BYTES + 8 * self.sums.len());
        out.extend_from_slice(&self.q.to_le_bytes());
        out.extend_from_slice(&(self.sums.len() as u64).to_le_bytes());
        for s in &self.sums {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Parse { row: 0, msg };
        if bytes.len() < SHARE_HEADER_BYTES {
            return Err(bad(format!("share of {} bytes is shorter than its header", bytes.len())));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let q = word(0);
        let n = word(8);
        let body = bytes.len() - SHARE_HEADER_BYTES;
        if body % 8 != 0 || (body / 8) as u64 != n {
            return Err(bad(format!("header announces {n} sums but the body holds {body} bytes")));
        }
        let sums: Vec<u64> = (0..n as usize).map(|i| word(SHARE_HEADER_BYTES + 8 * i)).collect();
        if let Some(s) = sums.iter().find(|&&s| s >= q) {
            return Err(bad(format!("element {s} is not reduced modulo {q}")));
        }
        Ok(ScmaShare { q, sums })
    }

    /// Bits on the wire when each element is packed to `ceil(log2 q)` bits.
    pub fn payload_bits(&self) -> u64 {
        let bits = 64 - self.q.saturating_sub(1).leading_zeros() as u64;
        self.sums.len() as u64 * bits
    }
}

/// Additive masks of one client, one per power sum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSet {
    pub masks: Vec<u64>,
}

impl MaskSet {
    pub fn zero(n_sums: usize) -> Self {
        MaskSet { masks: vec![0; n_sums] }
    }
}

/// Masks for `clients` parties whose per-position sums vanish modulo `q`.
/// All but the last client draw uniformly; the last one balances.
pub fn generate_masks(clients: usize, n_sums: usize, field: &PrimeField, seed: u64) -> Result<Vec<MaskSet>> {
    if clients < 2 {
        return Err(Error::InvalidParameter(format!("masking needs at least 2 clients, got {clients}")));
    }
    let mut out = Vec::with_capacity(clients);
    let mut total = vec![0u64; n_sums];
    for i in 0..clients - 1 {
        let mut rng = seed::rng(seed, "mask", i as u64);
        let masks: Vec<u64> = (0..n_sums).map(|_| rng.gen_range(0..field.q())).collect();
        for (t, &m) in total.iter_mut().zip(&masks) {
            *t = field.add(*t, m);
        }
        out.push(MaskSet { masks });
    }
    out.push(MaskSet { masks: total.iter().map(|&t| field.neg(t)).collect() });
    Ok(out)
}

/// Masked power sums of `v`.
pub fn scma_encode(v: &LabelVector, masks: &MaskSet, field: &PrimeField, n_sums: usize) -> Result<ScmaShare> {
    if masks.masks.len() != n_sums {
        return Err(Error::InvalidParameter(format!("{} masks for {n_sums} sums", masks.masks.len())));
    }
    let q = field.q();
    let mut sums: Vec<u64> = masks.masks.iter().map(|&m| field.reduce(m)).collect();
    for (&bin, &value) in &v.entries {
        if bin >= q {
            return Err(Error::FieldOverflow { index: bin, q });
        }
        let value = field.reduce(value);
        if value == 0 {
            continue;
        }
        let mut term = value;
        for s in sums.iter_mut() {
            *s = field.add(*s, term);
            term = field.mul(term, bin);
        }
    }
    Ok(ScmaShare { q, sums })
}

/// Element-wise sum of shares.
pub fn aggregate(shares: &[ScmaShare], field: &PrimeField) -> Result<ScmaShare> {
    let first = shares.first().ok_or(Error::EmptyInput("no shares to aggregate"))?;
    let mut sums = vec![0u64; first.len()];
    for s in shares {
        if s.q != field.q() || s.len() != first.len() {
            return Err(Error::InvalidParameter("shares disagree on field or length".into()));
        }
        for (acc, &x) in sums.iter_mut().zip(&s.sums) {
            *acc = field.add(*acc, x);
        }
    }
    Ok(ScmaShare { q: field.q(), sums })
}

/// Recovers the sparse vector `{bin: value}` with bins in `1..=num_bins`
/// from its unmasked power sums.
pub fn scma_decode(
    agg: &ScmaShare,
    field: &PrimeField,
    num_bins: u64,
    max_support: usize,
) -> Result<BTreeMap<u64, u64>> {
    if agg.q != field.q() {
        return Err(Error::InvalidParameter(format!("share modulus {} but field {}", agg.q, field.q())));
    }
    let s = &agg.sums;
    let (conn, len) = berlekamp_massey(s, field);
    if len == 0 {
        return Ok(BTreeMap::new());
    }
    if len > max_support || 2 * len > s.len() {
        return Err(Error::DecodeFailure(format!(
            "locator degree {len} exceeds the support bound {} (from {} sums)",
            max_support.min(s.len() / 2),
            s.len()
        )));
    }
    if conn[len] == 0 {
        return Err(Error::DecodeFailure("locator vanishes at zero".into()));
    }
    // reversing the connection polynomial gives the monic locator whose
    // roots are the support
    let locator: Vec<u64> = conn.iter().rev().copied().collect();

    let roots = if num_bins.saturating_mul(len as u64) <= EXHAUSTIVE_ROOT_BUDGET {
        roots_exhaustive(&locator, 1, num_bins.min(field.q() - 1), field)
    } else {
        let mut rng = seed::rng(s.first().copied().unwrap_or(0), "root-split", len as u64);
        roots_split(&locator, field, &mut rng)?
    };
    if roots.len() != len || roots.iter().any(|&r| r == 0 || r > num_bins) {
        return Err(Error::DecodeFailure(format!(
            "locator of degree {len} has {} roots among the {num_bins} bins",
            roots.iter().filter(|&&r| (1..=num_bins).contains(&r)).count()
        )));
    }

    let deriv: Vec<u64> = (1..locator.len()).map(|i| field.mul(locator[i], i as u64 % field.q())).collect();
    let mut out = BTreeMap::new();
    for &b in &roots {
        // quotient locator / (x - b) by synthetic division
        let mut quot = vec![0u64; len];
        let mut carry = 0u64;
        for i in (1..=len).rev() {
            carry = field.add(locator[i], field.mul(carry, b));
            quot[i - 1] = carry;
        }
        let mut num = 0u64;
        for (m, &c) in quot.iter().enumerate() {
            num = field.add(num, field.mul(c, s[m]));
        }
        let den = poly::eval(&deriv, b, field);
        if den == 0 {
            return Err(Error::Internal("singular Vandermonde system".into()));
        }
        let value = field.mul(num, field.inv(den));
        if value == 0 {
            return Err(Error::DecodeFailure(format!("bin {b} decoded to zero")));
        }
        out.insert(b, value);
    }
    Ok(out)
}

/// Smallest prime field that holds every bin index, every label sum and
/// the bound `(clients + 1)^h`.
pub fn protocol_field(clients: usize, h: usize, num_bins: u64, label_total: u64) -> Result<PrimeField> {
    let power = (clients as u64 + 1).checked_pow(h as u32).ok_or_else(|| {
        Error::LabelCode(format!("({clients} + 1)^{h} does not fit in 64 bits"))
    })?;
    let bound = power.max(num_bins.saturating_add(1)).max(label_total.saturating_add(1));
    PrimeField::at_least(bound)
}
