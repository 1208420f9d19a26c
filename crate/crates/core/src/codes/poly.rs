//! Dense polynomials over a prime field, Berlekamp–Massey and root finding.
//!
//! A polynomial is a coefficient vector, lowest degree first, with no
//! trailing zeros (the zero polynomial is empty).

use rand::Rng;

use super::field::PrimeField;
use crate::error::{Error, Result};

pub type Poly = Vec<u64>;

pub fn trim(p: &mut Poly) {
    while p.last() == Some(&0) {
        p.pop();
    }
}

/// Degree, or `None` for the zero polynomial.
pub fn degree(p: &[u64]) -> Option<usize> {
    p.iter().rposition(|&c| c != 0)
}

pub fn eval(p: &[u64], x: u64, f: &PrimeField) -> u64 {
    p.iter().rev().fold(0, |acc, &c| f.add(f.mul(acc, x), c))
}

pub fn make_monic(p: &mut Poly, f: &PrimeField) {
    trim(p);
    if let Some(&lead) = p.last() {
        let inv = f.inv(lead);
        for c in p.iter_mut() {
            *c = f.mul(*c, inv);
        }
    }
}

/// Operand length below which products use the schoolbook method.
const KARATSUBA_CUTOFF: usize = 48;

/// Full product by Karatsuba splitting; both inputs have the same length.
fn karatsuba(a: &[u64], b: &[u64], f: &PrimeField) -> Vec<u64> {
    let n = a.len();
    if n <= KARATSUBA_CUTOFF {
        return schoolbook(a, b, 2 * n - 1, f);
    }
    let m = n / 2;
    let (a0, a1) = a.split_at(m);
    let (b0, b1) = b.split_at(m);
    let h = n - m;
    let pad = |lo: &[u64], hi: &[u64]| -> Vec<u64> {
        (0..h).map(|i| f.add(lo.get(i).copied().unwrap_or(0), hi[i])).collect()
    };
    let low = karatsuba(a0, b0, f);
    let high = karatsuba(a1, b1, f);
    let mut mid = karatsuba(&pad(a0, a1), &pad(b0, b1), f);
    for (i, v) in mid.iter_mut().enumerate() {
        let l = low.get(i).copied().unwrap_or(0);
        *v = f.sub(f.sub(*v, l), high[i]);
    }
    let mut out = vec![0u64; 2 * n - 1];
    for (i, &v) in low.iter().enumerate() {
        out[i] = v;
    }
    for (i, &v) in high.iter().enumerate() {
        out[2 * m + i] = f.add(out[2 * m + i], v);
    }
    for (i, &v) in mid.iter().enumerate() {
        out[m + i] = f.add(out[m + i], v);
    }
    out
}

/// Product of `a` and `b` truncated to the first `len` coefficients.
fn mul_trunc(a: &[u64], b: &[u64], len: usize, f: &PrimeField) -> Poly {
    if a.is_empty() || b.is_empty() || len == 0 {
        return Vec::new();
    }
    let out_len = (a.len() + b.len() - 1).min(len);
    if a.len().min(b.len()) > 2 * KARATSUBA_CUTOFF {
        let n = a.len().max(b.len());
        let mut x = a.to_vec();
        let mut y = b.to_vec();
        x.resize(n, 0);
        y.resize(n, 0);
        let mut out = karatsuba(&x, &y, f);
        out.truncate(out_len);
        trim(&mut out);
        return out;
    }
    let mut out = schoolbook(a, b, out_len, f);
    trim(&mut out);
    out
}

/// Truncated product with lazy `u128` accumulation, untrimmed.
fn schoolbook(a: &[u64], b: &[u64], out_len: usize, f: &PrimeField) -> Vec<u64> {
    let mut acc = vec![0u128; out_len];
    let batch = f.lazy_terms();
    for (i, &ai) in a.iter().enumerate().take(out_len) {
        if ai != 0 {
            let ai = ai as u128;
            let lim = (out_len - i).min(b.len());
            for (slot, &bj) in acc[i..i + lim].iter_mut().zip(&b[..lim]) {
                *slot += ai * bj as u128;
            }
        }
        if (i + 1) % batch == 0 {
            for slot in acc.iter_mut() {
                *slot %= f.q() as u128;
            }
        }
    }
    acc.into_iter().map(|v| f.reduce_wide(v)).collect()
}

pub fn mul(a: &[u64], b: &[u64], f: &PrimeField) -> Poly {
    mul_trunc(a, b, usize::MAX, f)
}

pub fn sub(a: &[u64], b: &[u64], f: &PrimeField) -> Poly {
    let n = a.len().max(b.len());
    let mut out: Poly = (0..n)
        .map(|i| f.sub(a.get(i).copied().unwrap_or(0), b.get(i).copied().unwrap_or(0)))
        .collect();
    trim(&mut out);
    out
}

/// Quotient and remainder of `a / b`; `b` must be nonzero.
pub fn divrem(a: &[u64], b: &[u64], f: &PrimeField) -> (Poly, Poly) {
    let db = degree(b).expect("division by the zero polynomial");
    let mut r: Poly = a.to_vec();
    trim(&mut r);
    if r.len() <= db {
        return (Vec::new(), r);
    }
    let inv = f.inv(b[db]);
    let mut quot = vec![0u64; r.len() - db];
    for i in (db..r.len()).rev() {
        let c = f.mul(r[i], inv);
        if c == 0 {
            continue;
        }
        quot[i - db] = c;
        for j in 0..=db {
            let t = f.mul(c, b[j]);
            r[i - db + j] = f.sub(r[i - db + j], t);
        }
    }
    r.truncate(db);
    trim(&mut r);
    trim(&mut quot);
    (quot, r)
}

/// Monic greatest common divisor.
pub fn gcd(a: &[u64], b: &[u64], f: &PrimeField) -> Poly {
    let mut x: Poly = a.to_vec();
    let mut y: Poly = b.to_vec();
    trim(&mut x);
    trim(&mut y);
    while !y.is_empty() {
        let (_, r) = divrem(&x, &y, f);
        x = y;
        y = r;
    }
    make_monic(&mut x, f);
    x
}

/// Multiplication modulo a fixed monic polynomial, with reduction by a
/// precomputed inverse of the reversed modulus (two truncated products per
/// reduction, no divisions).
pub struct ModRing<'a> {
    f: &'a PrimeField,
    modulus: Poly,
    deg: usize,
    /// Inverse of the reversed modulus modulo `x^(deg-1)`.
    rev_inv: Poly,
}

impl<'a> ModRing<'a> {
    /// `modulus` must be monic of degree at least 1.
    pub fn new(modulus: &[u64], f: &'a PrimeField) -> Self {
        let mut m = modulus.to_vec();
        trim(&mut m);
        let deg = m.len() - 1;
        debug_assert_eq!(m[deg], 1);
        let rev: Poly = m.iter().rev().copied().collect();
        let n = deg.saturating_sub(1);
        // power-series inverse of rev (constant term 1) by Newton
        // iteration, doubling the precision each round
        let mut inv: Poly = if n > 0 { vec![1] } else { Vec::new() };
        let mut prec = 1;
        while prec < n {
            prec = (2 * prec).min(n);
            let mut e = mul_trunc(&rev[..prec.min(rev.len())], &inv, prec, f);
            e.resize(prec, 0);
            for c in e.iter_mut() {
                *c = f.neg(*c);
            }
            e[0] = f.add(e[0], 2);
            inv = mul_trunc(&inv, &e, prec, f);
        }
        inv.resize(n, 0);
        ModRing { f, modulus: m, deg, rev_inv: inv }
    }

    /// Reduces a polynomial of degree at most `2·deg - 2`.
    pub fn reduce(&self, a: &[u64]) -> Poly {
        let mut a = a.to_vec();
        trim(&mut a);
        if a.len() <= self.deg {
            return a;
        }
        debug_assert!(a.len() < 2 * self.deg);
        let f = self.f;
        let n = a.len() - self.deg; // quotient length
        // reversed top part of `a`
        let top: Poly = a[self.deg..].iter().rev().copied().collect();
        let rq = mul_trunc(&top, &self.rev_inv[..n.min(self.rev_inv.len())], n, f);
        let mut quot: Poly = vec![0; n];
        for (i, &c) in rq.iter().enumerate() {
            quot[n - 1 - i] = c;
        }
        trim(&mut quot);
        let prod = mul_trunc(&quot, &self.modulus, self.deg, f);
        let mut r: Poly = (0..self.deg)
            .map(|i| f.sub(a[i], prod.get(i).copied().unwrap_or(0)))
            .collect();
        trim(&mut r);
        r
    }

    pub fn mul(&self, a: &[u64], b: &[u64]) -> Poly {
        self.reduce(&mul(a, b, self.f))
    }

    /// `(x + shift)^e` modulo the modulus.
    pub fn pow_linear(&self, shift: u64, e: u64) -> Poly {
        let f = self.f;
        let mut acc: Poly = vec![1];
        if e == 0 {
            return self.reduce(&acc);
        }
        for bit in (0..64 - e.leading_zeros()).rev() {
            acc = self.mul(&acc, &acc);
            if (e >> bit) & 1 == 1 {
                // acc·(x + shift), then fold the single overflow term
                let mut next = vec![0u64; acc.len() + 1];
                for (i, &c) in acc.iter().enumerate() {
                    next[i + 1] = f.add(next[i + 1], c);
                    next[i] = f.add(next[i], f.mul(c, shift));
                }
                trim(&mut next);
                if next.len() > self.deg {
                    let lead = next[self.deg];
                    for j in 0..self.deg {
                        next[j] = f.sub(next[j], f.mul(lead, self.modulus[j]));
                    }
                    next.truncate(self.deg);
                    trim(&mut next);
                }
                acc = next;
            }
        }
        acc
    }
}

/// Shortest linear recurrence generating `s`: returns the connection
/// polynomial `C` (with `C(0) = 1`) and the recurrence length.
pub fn berlekamp_massey(s: &[u64], f: &PrimeField) -> (Poly, usize) {
    let mut c: Poly = vec![1];
    let mut b: Poly = vec![1];
    let mut len = 0usize;
    let mut m = 1usize;
    let mut bd = 1u64;
    for n in 0..s.len() {
        let mut d = s[n];
        for i in 1..=len.min(c.len() - 1) {
            d = f.add(d, f.mul(c[i], s[n - i]));
        }
        if d == 0 {
            m += 1;
            continue;
        }
        let coef = f.mul(d, f.inv(bd));
        let prev = c.clone();
        if c.len() < b.len() + m {
            c.resize(b.len() + m, 0);
        }
        for (i, &bi) in b.iter().enumerate() {
            c[i + m] = f.sub(c[i + m], f.mul(coef, bi));
        }
        if 2 * len <= n {
            len = n + 1 - len;
            b = prev;
            bd = d;
            m = 1;
        } else {
            m += 1;
        }
    }
    c.resize(len + 1, 0);
    (c, len)
}

/// All roots of `p` in `lo..=hi`, by evaluation.
pub fn roots_exhaustive(p: &[u64], lo: u64, hi: u64, f: &PrimeField) -> Vec<u64> {
    (lo..=hi).filter(|&x| eval(p, x, f) == 0).collect()
}

/// Roots of a monic polynomial that splits into distinct linear factors,
/// by random equal-degree splitting. Fails when some factor refuses to
/// split, which means the polynomial does not have that shape.
pub fn roots_split<R: Rng>(p: &[u64], f: &PrimeField, rng: &mut R) -> Result<Vec<u64>> {
    let mut p = p.to_vec();
    make_monic(&mut p, f);
    let mut roots = Vec::new();
    let mut stack = vec![p];
    let half = (f.q() - 1) / 2;
    while let Some(g) = stack.pop() {
        match g.len() {
            0 => return Err(Error::DecodeFailure("zero polynomial has no finite root set".into())),
            1 => continue,
            2 => {
                roots.push(f.neg(g[0]));
                continue;
            }
            _ => {}
        }
        let ring = ModRing::new(&g, f);
        let mut split = None;
        for _ in 0..64 {
            let shift = rng.gen_range(0..f.q());
            let mut t = ring.pow_linear(shift, half);
            if t.is_empty() {
                t.push(0);
            }
            t[0] = f.sub(t[0], 1);
            trim(&mut t);
            let d = gcd(&g, &t, f);
            if d.len() > 1 && d.len() < g.len() {
                split = Some(d);
                break;
            }
        }
        let d = split.ok_or_else(|| {
            Error::DecodeFailure(format!("locator factor of degree {} does not split into roots", g.len() - 1))
        })?;
        let (rest, r) = divrem(&g, &d, f);
        debug_assert!(r.is_empty());
        stack.push(d);
        stack.push(rest);
    }
    roots.sort_unstable();
    if roots.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DecodeFailure("locator has a repeated root".into()));
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn from_roots(roots: &[u64], f: &PrimeField) -> Poly {
        roots.iter().fold(vec![1], |acc, &r| mul(&acc, &[f.neg(r), 1], f))
    }

    #[test]
    fn karatsuba_matches_schoolbook() {
        let f = PrimeField::new(1_000_003).unwrap();
        let mut rng = seed::rng(3, "karatsuba", 0);
        for (la, lb) in [(97, 97), (300, 120), (257, 500), (1000, 999)] {
            let a: Poly = (0..la).map(|_| rng.gen_range(1..f.q())).collect();
            let b: Poly = (0..lb).map(|_| rng.gen_range(1..f.q())).collect();
            let mut expect = schoolbook(&a, &b, la + lb - 1, &f);
            trim(&mut expect);
            assert_eq!(mul(&a, &b, &f), expect);
            assert_eq!(mul_trunc(&a, &b, 150, &f), expect[..150].to_vec());
        }
    }

    #[test]
    fn division_identity() {
        let f = PrimeField::new(1_000_003).unwrap();
        let mut rng = seed::rng(1, "poly", 0);
        for _ in 0..50 {
            let a: Poly = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(0..f.q())).collect();
            let mut b: Poly = (0..rng.gen_range(1..20)).map(|_| rng.gen_range(0..f.q())).collect();
            trim(&mut b);
            if b.is_empty() {
                continue;
            }
            let (q, r) = divrem(&a, &b, &f);
            let mut back = mul(&q, &b, &f);
            back.resize(back.len().max(r.len()), 0);
            for (i, &c) in r.iter().enumerate() {
                back[i] = f.add(back[i], c);
            }
            let mut a2 = a.clone();
            trim(&mut a2);
            trim(&mut back);
            assert_eq!(back, a2);
            assert!(r.len() < b.len());
        }
    }

    #[test]
    fn mod_ring_matches_long_division() {
        for &q in &[97u64, 1_000_003, 4_611_686_018_427_387_847] {
            let f = PrimeField::new(q).unwrap();
            let mut rng = seed::rng(q, "ring", 0);
            for deg in [1usize, 2, 3, 7, 30] {
                let mut m: Poly = (0..deg).map(|_| rng.gen_range(0..q)).collect();
                m.push(1);
                let ring = ModRing::new(&m, &f);
                for _ in 0..10 {
                    let a: Poly = (0..deg).map(|_| rng.gen_range(0..q)).collect();
                    let b: Poly = (0..deg).map(|_| rng.gen_range(0..q)).collect();
                    let (_, expect) = divrem(&mul(&a, &b, &f), &m, &f);
                    assert_eq!(ring.mul(&a, &b), expect, "q={q} deg={deg}");
                }
                let e = rng.gen_range(0..1000u64);
                let mut naive: Poly = vec![1];
                for _ in 0..e {
                    naive = divrem(&mul(&naive, &[5, 1], &f), &m, &f).1;
                }
                let (_, naive) = divrem(&naive, &m, &f);
                assert_eq!(ring.pow_linear(5, e), naive);
            }
        }
    }

    #[test]
    fn berlekamp_massey_recovers_locator() {
        let f = PrimeField::new(10_007).unwrap();
        let roots = [3u64, 17, 500, 9999];
        let weights = [5u64, 1, 77, 10_000];
        let s: Vec<u64> = (0..10)
            .map(|l| roots.iter().zip(&weights).fold(0, |acc, (&b, &h)| f.add(acc, f.mul(h, f.pow(b, l)))))
            .collect();
        let (c, len) = berlekamp_massey(&s, &f);
        assert_eq!(len, 4);
        // reversed connection polynomial vanishes exactly at the roots
        let loc: Poly = c.iter().rev().copied().collect();
        assert_eq!(roots_exhaustive(&loc, 1, 10_006, &f), roots.to_vec());
        assert_eq!(berlekamp_massey(&[0, 0, 0], &f).1, 0);
    }

    #[test]
    fn splitting_finds_all_roots() {
        for &q in &[11u64, 65_537, 1_000_000_007, 4_611_686_018_427_387_847] {
            let f = PrimeField::new(q).unwrap();
            let mut rng = seed::rng(q, "split", 0);
            for size in [1usize, 2, 5, 10] {
                let mut roots: Vec<u64> = Vec::new();
                while roots.len() < size.min(q as usize - 1) {
                    let r = rng.gen_range(0..q);
                    if !roots.contains(&r) {
                        roots.push(r);
                    }
                }
                roots.sort_unstable();
                let p = from_roots(&roots, &f);
                assert_eq!(roots_split(&p, &f, &mut rng).unwrap(), roots);
            }
        }
        // x^2 + 1 is irreducible modulo 7
        let f = PrimeField::new(7).unwrap();
        let mut rng = seed::rng(0, "split", 1);
        assert!(roots_split(&[1, 0, 1], &f, &mut rng).is_err());
        // a repeated root never splits off
        assert!(roots_split(&from_roots(&[2, 2, 3], &f), &f, &mut rng).is_err());
    }
}
