//! Small extension fields GF(p^n) with discrete logarithms, as needed to
//! build B_h sequences.
//!
//! Elements are packed into a single integer `Σ c_i p^i`, which requires
//! `p^n < 2^63`.

use std::collections::HashMap;

use super::field::{factorize, PrimeField};
use super::poly::{self, Poly};
use crate::error::{Error, Result};

/// Largest prime factor of the group order that discrete logs will handle.
pub const MAX_LOG_FACTOR: u64 = 1 << 42;

#[derive(Clone, Debug)]
pub struct ExtField {
    base: PrimeField,
    n: usize,
    /// Monic irreducible modulus of degree `n`.
    modulus: Poly,
    order: u64,
    /// Factorization of `order - 1`.
    group: Vec<(u64, u32)>,
}

fn checked_pow(p: u64, n: usize) -> Option<u64> {
    let mut acc = 1u64;
    for _ in 0..n {
        acc = acc.checked_mul(p)?;
    }
    Some(acc)
}

impl ExtField {
    /// GF(p^n) with the lexicographically first irreducible modulus.
    pub fn new(p: u64, n: usize) -> Result<Self> {
        let base = PrimeField::new(p)?;
        if n == 0 {
            return Err(Error::InvalidParameter("extension degree must be positive".into()));
        }
        let order = checked_pow(p, n)
            .filter(|&o| o < (1 << 63))
            .ok_or_else(|| Error::LabelCode(format!("GF({p}^{n}) is too large")))?;
        let modulus = first_irreducible(&base, n);
        let group = factorize(order - 1);
        Ok(ExtField { base, n, modulus, order, group })
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn characteristic(&self) -> u64 {
        self.base.q()
    }

    fn unpack(&self, mut a: u64) -> Poly {
        let p = self.base.q();
        let mut v = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            v.push(a % p);
            a /= p;
        }
        poly::trim(&mut v);
        v
    }

    fn pack(&self, v: &[u64]) -> u64 {
        let p = self.base.q();
        v.iter().rev().fold(0, |acc, &c| acc * p + c)
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        let (x, y) = (self.unpack(a), self.unpack(b));
        let n = x.len().max(y.len());
        let s: Poly = (0..n)
            .map(|i| self.base.add(x.get(i).copied().unwrap_or(0), y.get(i).copied().unwrap_or(0)))
            .collect();
        self.pack(&s)
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        let prod = poly::mul(&self.unpack(a), &self.unpack(b), &self.base);
        let (_, r) = poly::divrem(&prod, &self.modulus, &self.base);
        self.pack(&r)
    }

    pub fn pow(&self, mut a: u64, mut e: u64) -> u64 {
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }

    /// Whether `g` generates the multiplicative group.
    fn is_generator(&self, g: u64) -> bool {
        let m = self.order - 1;
        g != 0 && self.group.iter().all(|&(r, _)| self.pow(g, m / r) != 1)
    }

    /// Smallest packed element that generates the multiplicative group.
    pub fn primitive_element(&self) -> u64 {
        (2..self.order).find(|&g| self.is_generator(g)).unwrap_or(1)
    }

    /// Whether the discrete logarithm is tractable for this field.
    pub fn logs_feasible(&self) -> bool {
        self.group.iter().all(|&(r, _)| r <= MAX_LOG_FACTOR)
    }

    /// `e` with `g^e = target`, for a generator `g` (Pohlig–Hellman with
    /// baby-step giant-step in each prime-order subgroup).
    pub fn discrete_log(&self, g: u64, target: u64) -> Result<u64> {
        if target == 0 {
            return Err(Error::InvalidParameter("logarithm of zero".into()));
        }
        let m = self.order - 1;
        let mut residues: Vec<(u128, u128)> = Vec::new();
        for &(r, e) in &self.group {
            if r > MAX_LOG_FACTOR {
                return Err(Error::LabelCode(format!("group order factor {r} too large for logarithms")));
            }
            let re = r.pow(e);
            let gamma = self.pow(g, m / r);
            let mut x = 0u64;
            let mut rk = 1u64;
            let ginv = self.pow(g, m - 1);
            for _ in 0..e {
                // strip the part already known, project into the order-r subgroup
                let h = self.mul(target, self.pow(ginv, x));
                let h = self.pow(h, m / (rk * r));
                let d = self.bsgs(gamma, h, r)?;
                x += d * rk;
                rk *= r;
            }
            residues.push((x as u128, re as u128));
        }
        let (mut x, mut modulus) = (0u128, 1u128);
        for (a, n) in residues {
            // combine x mod modulus with a mod n
            let inv = mod_inverse(modulus % n, n);
            let t = ((a + n - x % n) % n) * inv % n;
            x += modulus * t;
            modulus *= n;
        }
        Ok(x as u64)
    }

    fn bsgs(&self, gamma: u64, h: u64, r: u64) -> Result<u64> {
        let steps = (r as f64).sqrt().ceil() as u64 + 1;
        let mut table = HashMap::with_capacity(steps as usize);
        let mut cur = 1u64;
        for j in 0..steps {
            table.entry(cur).or_insert(j);
            cur = self.mul(cur, gamma);
        }
        // gamma has order r, so this is gamma^(-steps)
        let giant = self.pow(self.pow(gamma, steps), r - 1);
        let mut y = h;
        for i in 0..=steps {
            if let Some(&j) = table.get(&y) {
                return Ok((i * steps + j) % r);
            }
            y = self.mul(y, giant);
        }
        Err(Error::Internal("discrete logarithm not found".into()))
    }

    /// Elements of the subfield with `p^l` elements: zero first, then the
    /// powers of a subfield generator.
    pub fn subfield(&self, l: usize, g: u64) -> Result<Vec<u64>> {
        if l == 0 || self.n % l != 0 {
            return Err(Error::InvalidParameter(format!("no subfield of degree {l} in degree {}", self.n)));
        }
        let sub_order = checked_pow(self.base.q(), l).unwrap();
        let gen = self.pow(g, (self.order - 1) / (sub_order - 1));
        let mut out = vec![0u64];
        let mut cur = 1u64;
        for _ in 0..sub_order - 1 {
            out.push(cur);
            cur = self.mul(cur, gen);
        }
        Ok(out)
    }
}

fn mod_inverse(a: u128, n: u128) -> u128 {
    if n == 1 {
        return 0;
    }
    let (mut old_r, mut r) = (a as i128, n as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    old_s.rem_euclid(n as i128) as u128
}

/// Rabin's test: `m` (monic, degree `n`) is irreducible over GF(p).
fn is_irreducible(m: &[u64], f: &PrimeField) -> bool {
    let n = m.len() - 1;
    let p = f.q();
    let x: Poly = vec![0, 1];
    // x^(p^k) mod m for k = 1..=n
    let frob = |v: &Poly| -> Poly {
        let mut acc: Poly = vec![1];
        let mut base = v.clone();
        let mut e = p;
        while e > 0 {
            if e & 1 == 1 {
                acc = poly::divrem(&poly::mul(&acc, &base, f), m, f).1;
            }
            base = poly::divrem(&poly::mul(&base, &base, f), m, f).1;
            e >>= 1;
        }
        acc
    };
    let mut powers = Vec::with_capacity(n);
    let mut cur = x.clone();
    for _ in 0..n {
        cur = frob(&cur);
        powers.push(cur.clone());
    }
    if powers[n - 1] != poly::divrem(&x, m, f).1 {
        return false;
    }
    for (r, _) in factorize(n as u64) {
        let k = n / r as usize;
        let diff = poly::sub(&powers[k - 1], &x, f);
        if poly::gcd(m, &diff, f).len() != 1 {
            return false;
        }
    }
    true
}

fn first_irreducible(f: &PrimeField, n: usize) -> Poly {
    if n == 1 {
        return vec![0, 1];
    }
    let p = f.q();
    let mut counter = 0u64;
    loop {
        let mut m: Poly = Vec::with_capacity(n + 1);
        let mut c = counter;
        for _ in 0..n {
            m.push(c % p);
            c /= p;
        }
        m.push(1);
        if m[0] != 0 && is_irreducible(&m, f) {
            return m;
        }
        counter += 1;
    }
}
