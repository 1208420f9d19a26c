//! Arithmetic modulo a 64-bit prime, primality and factoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integers modulo a prime `q < 2^63`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    q: u64,
}

/// Fields are limited to this size so that sums of two elements never wrap.
pub const MAX_MODULUS: u64 = 1 << 63;

impl PrimeField {
    pub fn new(q: u64) -> Result<Self> {
        if q >= MAX_MODULUS || !is_prime(q) {
            return Err(Error::InvalidParameter(format!("{q} is not a prime below 2^63")));
        }
        Ok(PrimeField { q })
    }

    /// Smallest prime field with at least `bound` elements (and at least 3).
    pub fn at_least(bound: u64) -> Result<Self> {
        let q = next_prime(bound.max(3))
            .filter(|&q| q < MAX_MODULUS)
            .ok_or_else(|| Error::LabelCode(format!("no prime field of size >= {bound} fits in 63 bits")))?;
        Ok(PrimeField { q })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// Bits needed for one element.
    pub fn bits(&self) -> u32 {
        64 - (self.q - 1).leading_zeros()
    }

    pub fn reduce(&self, a: u64) -> u64 {
        a % self.q
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        if self.q <= 1 << 32 {
            (a * b) % self.q
        } else {
            ((a as u128 * b as u128) % self.q as u128) as u64
        }
    }

    pub fn pow(&self, mut base: u64, mut e: u64) -> u64 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `a` must be nonzero.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.q != 0);
        self.pow(a, self.q - 2)
    }

    pub(crate) fn reduce_wide(&self, a: u128) -> u64 {
        (a % self.q as u128) as u64
    }

    /// How many products of two elements fit in a `u128` accumulator on top
    /// of one reduced value.
    pub(crate) fn lazy_terms(&self) -> usize {
        let m = (self.q - 1) as u128;
        let per = m * m;
        if per == 0 {
            return usize::MAX;
        }
        (((u128::MAX - m) / per).min(usize::MAX as u128) as usize).max(1)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &SMALL {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= n`, if one fits in `u64`.
pub fn next_prime(n: u64) -> Option<u64> {
    let mut c = n.max(2);
    loop {
        if is_prime(c) {
            return Some(c);
        }
        c = c.checked_add(1)?;
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A nontrivial factor of an odd composite `n` (Pollard's rho, Brent's
/// cycle detection).
fn pollard_rho(n: u64) -> u64 {
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        let mut power = 1u64;
        let mut lam = 1u64;
        while d == 1 {
            if power == lam {
                x = y;
                power *= 2;
                lam = 0;
            }
            y = f(y);
            lam += 1;
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

/// Prime factorization as `(prime, exponent)` pairs in increasing order.
pub fn factorize(n: u64) -> Vec<(u64, u32)> {
    let mut primes = Vec::new();
    let mut rest = n;
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        while rest % p == 0 {
            primes.push(p);
            rest /= p;
        }
    }
    let mut stack = if rest > 1 { vec![rest] } else { vec![] };
    while let Some(m) = stack.pop() {
        if is_prime(m) {
            primes.push(m);
        } else {
            let d = pollard_rho(m);
            stack.push(d);
            stack.push(m / d);
        }
    }
    primes.sort_unstable();
    let mut out: Vec<(u64, u32)> = Vec::new();
    for p in primes {
        match out.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => out.push((p, 1)),
        }
    }
    out
}
