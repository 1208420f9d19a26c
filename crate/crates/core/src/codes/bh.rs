//! B_h sequences: integers whose multiset sums of at most `h` terms are all
//! distinct. Built with the Bose–Chowla construction over GF(q^h).

use std::collections::{HashMap, HashSet};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::galois::ExtField;
use crate::error::{Error, Result};

/// Limits of the exhaustive [`is_bh`] check.
pub const IS_BH_MAX_LEN: usize = 12;
pub const IS_BH_MAX_ORDER: usize = 4;

/// Largest value any element may take; keeps every sum of the whole
/// sequence below `2^62`.
const MAX_ELEMENT_TOTAL: u128 = 1 << 62;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BhSequence {
    pub h: usize,
    pub elements: Vec<u64>,
}

impl BhSequence {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Sum of all elements.
    pub fn total(&self) -> u64 {
        self.elements.iter().sum()
    }
}

/// `(p, l)` with `n = p^l`, if `n` is a prime power.
pub fn prime_power(n: u64) -> Option<(u64, usize)> {
    if n < 2 {
        return None;
    }
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            break;
        }
        p += 1;
    }
    if p * p > n {
        return Some((n, 1));
    }
    let (mut m, mut l) = (n, 0);
    while m % p == 0 {
        m /= p;
        l += 1;
    }
    (m == 1).then_some((p, l))
}

/// Bose–Chowla construction of an `m`-element B_h sequence over the field
/// with `p_power` elements (`p_power >= m + 1`).
///
/// With `θ` primitive in GF(p_power^h) and `α_0, …, α_m` distinct elements
/// of GF(p_power), the logarithms `log_θ(θ + α_i)` have distinct sums of `h`
/// terms. Shifting by the smallest one and dropping it leaves `m` positive
/// integers with distinct sums of at most `h` terms.
pub fn construct_bh(m: usize, h: usize, p_power: u64) -> Result<BhSequence> {
    if h < 1 || m < 1 {
        return Err(Error::InvalidParameter("need m >= 1 and h >= 1".into()));
    }
    let (p, l) = prime_power(p_power)
        .ok_or_else(|| Error::InvalidParameter(format!("{p_power} is not a prime power")))?;
    if p_power < m as u64 + 1 {
        return Err(Error::InvalidParameter(format!("field of size {p_power} is too small for {m} elements")));
    }
    let key = (m, h, p_power);
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u64), BhSequence>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(seq) = cache.lock().unwrap().get(&key) {
        return Ok(seq.clone());
    }

    let gf = ExtField::new(p, l * h)?;
    if !gf.logs_feasible() {
        return Err(Error::LabelCode(format!("discrete logarithms in GF({p_power}^{h}) are out of reach")));
    }
    let theta = gf.primitive_element();
    let alphas = gf.subfield(l, theta)?;
    let mut logs = Vec::with_capacity(m + 1);
    for &alpha in alphas.iter().take(m + 1) {
        logs.push(gf.discrete_log(theta, gf.add(theta, alpha))?);
    }
    logs.sort_unstable();
    let base = logs[0];
    let elements: Vec<u64> = logs[1..].iter().map(|&a| a - base).collect();
    let total: u128 = elements.iter().map(|&e| e as u128).sum();
    if total >= MAX_ELEMENT_TOTAL {
        return Err(Error::LabelCode(format!("B_{h} sequence over GF({p_power}) exceeds 62-bit sums")));
    }
    let seq = BhSequence { h, elements };
    cache.lock().unwrap().insert(key, seq.clone());
    Ok(seq)
}

/// The B_h sequence of `m` elements with the smallest field that works.
pub fn smallest_bh(m: usize, h: usize) -> Result<BhSequence> {
    let mut last_err = None;
    let mut candidate = m as u64 + 1;
    for _ in 0..64 {
        while prime_power(candidate).is_none() {
            candidate += 1;
        }
        // the elements are below candidate^h; stop once that is hopeless
        let bound = (candidate as u128).checked_pow(h as u32).unwrap_or(u128::MAX);
        if bound.saturating_mul(m as u128) >= MAX_ELEMENT_TOTAL * 4 {
            break;
        }
        match construct_bh(m, h, candidate) {
            Ok(seq) => return Ok(seq),
            Err(e) => last_err = Some(e),
        }
        candidate += 1;
    }
    Err(last_err.unwrap_or_else(|| {
        Error::LabelCode(format!("no B_{h} sequence of {m} elements fits in 62-bit arithmetic"))
    }))
}

/// Calls `visit` with every multiset (as sorted index lists) of exactly
/// `size` indices below `m`.
fn for_each_multiset(m: usize, size: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(m: usize, size: usize, start: usize, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if cur.len() == size {
            visit(cur);
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(m, size, i, cur, visit);
            cur.pop();
        }
    }
    rec(m, size, 0, &mut Vec::with_capacity(size), visit);
}

/// Exhaustive check that all multiset sums of exactly `h` terms are
/// distinct.
///
/// Sums of fewer terms are compared only among themselves through the
/// padding trick: `seq` has distinct sums of at most `h` terms (across all
/// sizes) iff `seq ∪ {0}` passes this check, see [`is_decodable`].
pub fn is_bh(seq: &[u64], h: usize) -> Result<bool> {
    check_caps(seq.len(), h)?;
    Ok(check_bh(seq, h))
}

/// Whether every multiset of at most `h` elements has a sum no other such
/// multiset shares, which is what label decoding needs.
pub fn is_decodable(seq: &[u64], h: usize) -> Result<bool> {
    check_caps(seq.len(), h)?;
    Ok(check_decodable(seq, h))
}

fn check_caps(len: usize, h: usize) -> Result<()> {
    if len > IS_BH_MAX_LEN {
        return Err(Error::SizeCap { what: "B_h check (length)", size: len, cap: IS_BH_MAX_LEN });
    }
    if h > IS_BH_MAX_ORDER {
        return Err(Error::SizeCap { what: "B_h check (order)", size: h, cap: IS_BH_MAX_ORDER });
    }
    Ok(())
}

pub(crate) fn check_bh(seq: &[u64], h: usize) -> bool {
    let mut seen = HashSet::new();
    let mut ok = true;
    for_each_multiset(seq.len(), h, &mut |idx| {
        let s: u128 = idx.iter().map(|&i| seq[i] as u128).sum();
        ok &= seen.insert(s);
    });
    ok
}

pub(crate) fn check_decodable(seq: &[u64], h: usize) -> bool {
    let mut padded = Vec::with_capacity(seq.len() + 1);
    padded.push(0);
    padded.extend_from_slice(seq);
    !seq.contains(&0) && check_bh(&padded, h)
}

/// Splits label sums back into sequence elements by meet-in-the-middle over
/// precomputed sums of up to `ceil(h/2)` terms.
pub struct BhDecomposer {
    elements: Vec<u64>,
    h: usize,
    /// `halves[k]` maps a sum of exactly `k` terms to its index multiset.
    halves: Vec<HashMap<u64, Vec<usize>>>,
    /// `lists[k]` enumerates the multisets of exactly `k` terms with sums.
    lists: Vec<Vec<(u64, Vec<usize>)>>,
    memo: HashMap<u64, Option<Vec<usize>>>,
}

impl BhDecomposer {
    pub fn new(seq: &BhSequence, h: usize) -> Self {
        let half = h.div_ceil(2);
        let m = seq.elements.len();
        let mut halves = Vec::with_capacity(half + 1);
        let mut lists = Vec::with_capacity(half + 1);
        for k in 0..=half {
            let mut map = HashMap::new();
            let mut list = Vec::new();
            for_each_multiset(m, k, &mut |idx| {
                let s: u64 = idx.iter().map(|&i| seq.elements[i]).sum();
                map.entry(s).or_insert_with(|| idx.to_vec());
                list.push((s, idx.to_vec()));
            });
            halves.push(map);
            lists.push(list);
        }
        BhDecomposer { elements: seq.elements.clone(), h, halves, lists, memo: HashMap::new() }
    }

    /// Indices (into the sequence) of the multiset summing to `sum`, using
    /// as few terms as possible, or `None`.
    pub fn indices(&mut self, sum: u64) -> Option<Vec<usize>> {
        if let Some(r) = self.memo.get(&sum) {
            return r.clone();
        }
        let found = self.search(sum);
        self.memo.insert(sum, found.clone());
        found
    }

    fn search(&self, sum: u64) -> Option<Vec<usize>> {
        for size in 1..=self.h {
            let small = size / 2;
            let large = size - small;
            for (s, left) in &self.lists[small] {
                if *s > sum {
                    continue;
                }
                if let Some(right) = self.halves[large].get(&(sum - s)) {
                    let mut all: Vec<usize> = left.iter().chain(right).copied().collect();
                    all.sort_unstable();
                    return Some(all);
                }
            }
        }
        None
    }

    pub fn values(&mut self, sum: u64) -> Option<Vec<u64>> {
        let idx = self.indices(sum)?;
        Some(idx.iter().map(|&i| self.elements[i]).collect())
    }
}

/// The unique multiset of at most `h` sequence elements summing to `sum`.
pub fn bh_decompose(sum: u64, seq: &BhSequence, h: usize) -> Result<Vec<u64>> {
    BhDecomposer::new(seq, h)
        .values(sum)
        .ok_or(Error::UnresolvableLabel { bin: 0, sum, h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_bh_examples() {
        assert!(!is_bh(&[1, 2, 3], 2).unwrap());
        assert!(is_bh(&[1, 3, 7, 12, 20, 30, 44], 2).unwrap());
        assert!(is_bh(&[1, 2], 2).unwrap());
        assert!(!is_decodable(&[1, 2], 2).unwrap());
        assert!(is_decodable(&[1, 3, 7, 12, 20, 30, 44], 2).unwrap());
        assert!(is_bh(&[9], 3).unwrap());
        assert!(is_bh(&[5], 4).unwrap());
        assert!(is_bh(&[0; 13], 2).is_err());
        assert!(is_bh(&[1, 2], 5).is_err());
    }

    #[test]
    fn prime_powers() {
        assert_eq!(prime_power(16), Some((2, 4)));
        assert_eq!(prime_power(23), Some((23, 1)));
        assert_eq!(prime_power(12), None);
        assert_eq!(prime_power(1), None);
    }

    #[test]
    fn constructions_pass_exhaustive_check() {
        for &(m, h, q) in &[(3usize, 2usize, 4u64), (4, 2, 5), (6, 2, 7), (4, 3, 5), (6, 3, 8), (10, 2, 11), (8, 4, 9)] {
            let seq = construct_bh(m, h, q).unwrap();
            assert_eq!(seq.len(), m);
            assert!(seq.elements.windows(2).all(|w| w[0] < w[1]));
            assert!(seq.elements[0] > 0);
            assert!(check_bh(&seq.elements, h) && check_decodable(&seq.elements, h), "m={m} h={h} q={q}: {:?}", seq.elements);
        }
        assert!(construct_bh(5, 2, 5).is_err());
        assert!(construct_bh(3, 2, 6).is_err());
    }

    #[test]
    fn larger_orders_pass() {
        let seq = smallest_bh(8, 5).unwrap();
        assert!(check_decodable(&seq.elements, 5));
        let seq = smallest_bh(20, 10).unwrap();
        assert_eq!(seq.len(), 20);
    }

    #[test]
    fn decompose_examples() {
        let seq = BhSequence { h: 2, elements: vec![1, 3, 7, 12, 20, 30, 44] };
        assert_eq!(bh_decompose(8, &seq, 2).unwrap(), vec![1, 7]);
        assert_eq!(bh_decompose(15, &seq, 2).unwrap(), vec![3, 12]);
        assert_eq!(bh_decompose(3, &seq, 2).unwrap(), vec![3]);
        assert_eq!(bh_decompose(88, &seq, 2).unwrap(), vec![44, 44]);
        assert_eq!(bh_decompose(2, &seq, 2).unwrap(), vec![1, 1]);
        assert!(bh_decompose(5, &seq, 2).is_err());
    }

    #[test]
    fn decompose_random_subsets() {
        let seq = smallest_bh(20, 10).unwrap();
        let mut dec = BhDecomposer::new(&seq, 10);
        let mut rng = crate::seed::rng(3, "bh", 0);
        use rand::seq::SliceRandom;
        for size in 1..=10 {
            for _ in 0..5 {
                let mut idx: Vec<usize> = (0..20).collect();
                idx.shuffle(&mut rng);
                let mut pick = idx[..size].to_vec();
                pick.sort_unstable();
                let sum = pick.iter().map(|&i| seq.elements[i]).sum();
                assert_eq!(dec.indices(sum).unwrap(), pick);
            }
        }
    }
}
