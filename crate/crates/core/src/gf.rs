//! Exact arithmetic over GF(p) and the brute-force task oracles.
//!
//! Everything the networks are asked to compute is defined here first, as a
//! plain integer function. The network code never computes labels on its own;
//! it always asks one of these oracles.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Largest modulus accepted anywhere. Products of two residues stay below 2^40,
/// far inside `u64`.
pub const MAX_MODULUS: u32 = 1 << 20;

/// Deterministic trial-division primality test.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n % 2 == 0 {
        return false;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn validate_modulus(p: u32) -> Result<(), FieldError> {
    if p < 3 || p >= MAX_MODULUS || !is_prime(p as u64) {
        return Err(FieldError::InvalidModulus(p as u64));
    }
    Ok(())
}

/// `base^exp mod m` by square-and-multiply. Intermediates stay below m².
pub fn mod_pow(base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut result = 1u64;
    let mut b = base % m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    result
}

/// Distinct prime factors of `n`, ascending.
fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Smallest generator of the multiplicative group of GF(p).
///
/// `g` has order exactly `p-1` iff `g^((p-1)/q) != 1` for every prime `q | p-1`.
pub fn find_primitive_root(p: u32) -> Result<u32, FieldError> {
    validate_modulus(p)?;
    let order = (p - 1) as u64;
    let factors = prime_factors(order);
    (2..p)
        .find(|&g| {
            factors
                .iter()
                .all(|&q| mod_pow(g as u64, order / q, p as u64) != 1)
        })
        .ok_or(FieldError::InvalidModulus(p as u64))
}

/// Prime modulus with its discrete exponential and logarithm tables.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldContext {
    p: u32,
    g: u32,
    exp_table: Vec<u32>,
    // `None` at index 0: the logarithm of zero is undefined.
    log_table: Vec<Option<u32>>,
}

impl FieldContext {
    pub fn new(p: u32) -> Result<Self, FieldError> {
        let g = find_primitive_root(p)?;
        let mut exp_table = Vec::with_capacity(p as usize - 1);
        let mut log_table = vec![None; p as usize];
        let mut x = 1u64;
        for r in 0..p - 1 {
            exp_table.push(x as u32);
            log_table[x as usize] = Some(r);
            x = x * g as u64 % p as u64;
        }
        Ok(Self {
            p,
            g,
            exp_table,
            log_table,
        })
    }

    pub fn modulus(&self) -> u32 {
        self.p
    }

    pub fn generator(&self) -> u32 {
        self.g
    }

    /// `g^r mod p`; `r` is reduced modulo `p-1`.
    pub fn exp(&self, r: u32) -> u32 {
        self.exp_table[(r % (self.p - 1)) as usize]
    }

    /// Discrete logarithm base `g`, `None` for zero.
    pub fn log(&self, m: u32) -> Option<u32> {
        self.log_table.get(m as usize).copied().flatten()
    }

    pub fn exp_table(&self) -> &[u32] {
        &self.exp_table
    }

    pub fn log_table(&self) -> &[Option<u32>] {
        &self.log_table
    }
}

fn check_residue(n: u32, p: u32) -> Result<(), FieldError> {
    if n >= p {
        Err(FieldError::ResidueOutOfRange { value: n, p })
    } else {
        Ok(())
    }
}

/// A labelled task: anything that maps a tuple of residues to a residue.
///
/// `label` assumes the tuple was already validated (arity and range); use the
/// checked `eval*` methods at API boundaries.
pub trait TaskOracle: Sync {
    fn modulus(&self) -> u32;
    fn arity(&self) -> usize;
    fn label(&self, ns: &[u32]) -> u32;

    fn checked_label(&self, ns: &[u32]) -> Result<u32, FieldError> {
        if ns.len() != self.arity() {
            return Err(FieldError::ArityMismatch {
                expected: self.arity(),
                got: ns.len(),
            });
        }
        for &n in ns {
            check_residue(n, self.modulus())?;
        }
        Ok(self.label(ns))
    }
}

/// One term `c · n1^a · n2^b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: u32,
    pub a: u32,
    pub b: u32,
}

/// Sum of monomials in two variables over GF(p). `0^0` is taken as 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModPolynomial {
    p: u32,
    terms: Vec<Monomial>,
}

impl ModPolynomial {
    /// Coefficients are reduced mod p; a term whose coefficient reduces to
    /// zero is an error.
    pub fn new(p: u32, terms: Vec<Monomial>) -> Result<Self, FieldError> {
        validate_modulus(p)?;
        if terms.is_empty() {
            return Err(FieldError::EmptyPolynomial);
        }
        let terms = terms
            .into_iter()
            .enumerate()
            .map(|(index, t)| {
                let coeff = t.coeff % p;
                if coeff == 0 {
                    Err(FieldError::ZeroCoefficient { index })
                } else {
                    Ok(Monomial { coeff, ..t })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { p, terms })
    }

    pub fn modulus(&self) -> u32 {
        self.p
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn eval(&self, n1: u32, n2: u32) -> Result<u32, FieldError> {
        check_residue(n1, self.p)?;
        check_residue(n2, self.p)?;
        Ok(self.eval_unchecked(n1, n2))
    }

    fn eval_unchecked(&self, n1: u32, n2: u32) -> u32 {
        let p = self.p as u64;
        let sum = self.terms.iter().fold(0u64, |acc, t| {
            let v = t.coeff as u64 * mod_pow(n1 as u64, t.a as u64, p) % p
                * mod_pow(n2 as u64, t.b as u64, p)
                % p;
            (acc + v) % p
        });
        sum as u32
    }
}

impl TaskOracle for ModPolynomial {
    fn modulus(&self) -> u32 {
        self.p
    }
    fn arity(&self) -> usize {
        2
    }
    fn label(&self, ns: &[u32]) -> u32 {
        self.eval_unchecked(ns[0], ns[1])
    }
}

/// `(c_1 n_1 + ... + c_S n_S) mod p` with every `c_s` nonzero and `S >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SumTask {
    p: u32,
    coeffs: Vec<u32>,
}

impl SumTask {
    pub fn new(p: u32, coeffs: Vec<u32>) -> Result<Self, FieldError> {
        validate_modulus(p)?;
        if coeffs.len() < 2 {
            return Err(FieldError::TooFewTerms(coeffs.len()));
        }
        let coeffs = coeffs
            .into_iter()
            .enumerate()
            .map(|(index, c)| {
                if c % p == 0 {
                    Err(FieldError::ZeroCoefficient { index })
                } else {
                    Ok(c % p)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { p, coeffs })
    }

    pub fn modulus(&self) -> u32 {
        self.p
    }

    pub fn coeffs(&self) -> &[u32] {
        &self.coeffs
    }

    pub fn eval(&self, ns: &[u32]) -> Result<u32, FieldError> {
        self.checked_label(ns)
    }
}

impl TaskOracle for SumTask {
    fn modulus(&self) -> u32 {
        self.p
    }
    fn arity(&self) -> usize {
        self.coeffs.len()
    }
    fn label(&self, ns: &[u32]) -> u32 {
        let p = self.p as u64;
        let sum = self
            .coeffs
            .iter()
            .zip(ns)
            .fold(0u64, |acc, (&c, &n)| (acc + c as u64 * n as u64) % p);
        sum as u32
    }
}

/// `h(g1(n1) + g2(n2)) mod p` given as lookup tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedTask {
    p: u32,
    g1: Vec<u32>,
    g2: Vec<u32>,
    h: Vec<u32>,
}

impl ComposedTask {
    pub fn new(p: u32, g1: Vec<u32>, g2: Vec<u32>, h: Vec<u32>) -> Result<Self, FieldError> {
        validate_modulus(p)?;
        for (name, table) in [("g1", &g1), ("g2", &g2), ("h", &h)] {
            if table.len() != p as usize {
                return Err(FieldError::MalformedTable {
                    name,
                    reason: format!("expected {} entries, got {}", p, table.len()),
                });
            }
            if let Some(&bad) = table.iter().find(|&&v| v >= p) {
                return Err(FieldError::MalformedTable {
                    name,
                    reason: format!("entry {bad} is not a residue mod {p}"),
                });
            }
        }
        Ok(Self { p, g1, g2, h })
    }

    /// Tables built from closures over residues.
    pub fn from_fns(
        p: u32,
        g1: impl Fn(u32) -> u32,
        g2: impl Fn(u32) -> u32,
        h: impl Fn(u32) -> u32,
    ) -> Result<Self, FieldError> {
        let table = |f: &dyn Fn(u32) -> u32| (0..p).map(|n| f(n) % p).collect::<Vec<_>>();
        Self::new(p, table(&g1), table(&g2), table(&h))
    }

    pub fn modulus(&self) -> u32 {
        self.p
    }

    pub fn eval(&self, n1: u32, n2: u32) -> Result<u32, FieldError> {
        check_residue(n1, self.p)?;
        check_residue(n2, self.p)?;
        Ok(self.label(&[n1, n2]))
    }
}

impl TaskOracle for ComposedTask {
    fn modulus(&self) -> u32 {
        self.p
    }
    fn arity(&self) -> usize {
        2
    }
    fn label(&self, ns: &[u32]) -> u32 {
        let inner = (self.g1[ns[0] as usize] + self.g2[ns[1] as usize]) % self.p;
        self.h[inner as usize]
    }
}
