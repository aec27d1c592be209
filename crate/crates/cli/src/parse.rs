//! Task strings such as `2n1^4n2 + n1^2n2^2 + 3n1n2^3 mod 97` or
//! `(4n1 + n2^2)^3 + n1n2 mod 23`.
//!
//! Grammar (whitespace is free, `*` between factors is optional):
//!
//! ```text
//! task    := sum [ "mod" INT ]
//! sum     := [sign] item { sign item }
//! item    := "(" inner ")" "^" INT      -- at most one, never nested
//!          | term
//! inner   := [sign] term { sign term }
//! term    := INT [ ["*"] factors ] | factors
//! factors := factor { ["*"] factor }
//! factor  := ("n1" | "n2") [ "^" INT ]
//! ```

use std::fmt;

use modpoly_core::gf::mod_pow;
use modpoly_core::{ComposedTask, FieldError, ModPolynomial, Monomial, TaskOracle};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error(
        "exponent 0 at position {pos}: monomial experts need strictly positive exponents \
         (drop the factor instead)"
    )]
    ZeroExponent { pos: usize },
    #[error("task says mod {text} but the config asks for mod {config}")]
    ModulusConflict { text: u32, config: u32 },
    #[error("no modulus given: add `mod p` to the task or set `p` in the config")]
    MissingModulus,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// One signed monomial `c · n1^a · n2^b`; an exponent of 0 means the variable
/// is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub coeff: i64,
    pub a: u32,
    pub b: u32,
}

/// `(inner)^exponent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wrapped {
    pub inner: Vec<Term>,
    pub exponent: u32,
}

/// Parsed task before reduction modulo p.
///
/// Printing with `Display` and parsing again gives back an equal value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskExpr {
    pub wrapped: Option<Wrapped>,
    /// Flat terms; next to a wrapper these are the additive perturbation.
    pub terms: Vec<Term>,
    pub modulus: Option<u32>,
}

/// A task ready for oracle evaluation.
#[derive(Debug, Clone)]
pub enum ParsedTask {
    Polynomial(ModPolynomial),
    Composed(ComposedTask),
}

impl ParsedTask {
    pub fn oracle(&self) -> &dyn TaskOracle {
        match self {
            ParsedTask::Polynomial(p) => p,
            ParsedTask::Composed(c) => c,
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    saw_wrapper: bool,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn keyword_mod(&mut self) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(b"mod") {
            self.pos += 3;
            true
        } else {
            false
        }
    }

    fn integer(&mut self) -> Result<u64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return self.err("expected an integer");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse().or_else(|_| {
            self.pos = start;
            self.err("integer too large")
        })
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        self.skip_ws();
        let pos = self.pos;
        let e = self.integer()?;
        if e == 0 {
            return Err(ParseError::ZeroExponent { pos });
        }
        u32::try_from(e).or_else(|_| {
            self.pos = pos;
            self.err("exponent too large")
        })
    }

    fn at_variable(&mut self) -> bool {
        self.peek() == Some(b'n')
    }

    /// `("n1" | "n2") ["^" INT]`, returning the slot and exponent.
    fn factor(&mut self) -> Result<(usize, u32), ParseError> {
        self.skip_ws();
        let slot = match self.src.get(self.pos..self.pos + 2) {
            Some(b"n1") => 0,
            Some(b"n2") => 1,
            _ => return self.err("expected `n1` or `n2`"),
        };
        self.pos += 2;
        if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
            return self.err("unknown variable");
        }
        let e = if self.eat(b'^') { self.exponent()? } else { 1 };
        Ok((slot, e))
    }

    fn term(&mut self, sign: i64) -> Result<Term, ParseError> {
        let mut coeff = 1i64;
        let mut has_coeff = false;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            let start = self.pos;
            let c = self.integer()?;
            if c == 0 {
                self.pos = start;
                return self.err("zero coefficient");
            }
            coeff = i64::try_from(c).or_else(|_| self.err("coefficient too large"))?;
            has_coeff = true;
        }
        let mut exps = [0u32; 2];
        let mut any_factor = false;
        loop {
            let star_pos = self.pos;
            let star = self.eat(b'*');
            if self.at_variable() {
                let (slot, e) = self.factor()?;
                exps[slot] = exps[slot]
                    .checked_add(e)
                    .map_or_else(|| self.err("exponent too large"), Ok)?;
                any_factor = true;
            } else if star {
                self.pos = star_pos;
                return self.err("`*` must be followed by `n1` or `n2`");
            } else {
                break;
            }
        }
        if !has_coeff && !any_factor {
            return self.err("expected a term");
        }
        Ok(Term {
            coeff: sign * coeff,
            a: exps[0],
            b: exps[1],
        })
    }

    fn sign(&mut self) -> Option<i64> {
        if self.eat(b'+') {
            Some(1)
        } else if self.eat(b'-') {
            Some(-1)
        } else {
            None
        }
    }

    fn inner(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut terms = Vec::new();
        let mut sign = self.sign().unwrap_or(1);
        loop {
            if self.peek() == Some(b'(') {
                return self.err("nested parentheses are not supported");
            }
            terms.push(self.term(sign)?);
            match self.sign() {
                Some(s) => sign = s,
                None => return Ok(terms),
            }
        }
    }

    fn task(&mut self) -> Result<TaskExpr, ParseError> {
        let mut wrapped = None;
        let mut terms = Vec::new();
        let mut sign = self.sign().unwrap_or(1);
        loop {
            if self.peek() == Some(b'(') {
                if self.saw_wrapper {
                    return self.err("only one parenthesised group is allowed");
                }
                if sign < 0 {
                    return self.err("a parenthesised group cannot be negated");
                }
                self.saw_wrapper = true;
                self.pos += 1;
                let inner = self.inner()?;
                self.expect(b')')?;
                self.expect(b'^')?;
                let exponent = self.exponent()?;
                wrapped = Some(Wrapped { inner, exponent });
            } else {
                terms.push(self.term(sign)?);
            }
            match self.sign() {
                Some(s) => sign = s,
                None => break,
            }
        }
        let modulus = if self.keyword_mod() {
            let start = self.pos;
            let p = self.integer()?;
            Some(u32::try_from(p).or_else(|_| {
                self.pos = start;
                self.err("modulus too large")
            })?)
        } else {
            None
        };
        if self.peek().is_some() {
            return self.err("unexpected trailing input");
        }
        Ok(TaskExpr {
            wrapped,
            terms,
            modulus,
        })
    }
}

/// Parses a task string.
pub fn parse_task(text: &str) -> Result<TaskExpr, ParseError> {
    Parser {
        src: text.as_bytes(),
        pos: 0,
        saw_wrapper: false,
    }
    .task()
}

/// Parses `text` and resolves it against modulus `p` (which may also come
/// from the trailing `mod` clause).
pub fn parse_polynomial(text: &str, p: Option<u32>) -> Result<ParsedTask, ParseError> {
    parse_task(text)?.to_task(p)
}

fn reduce(c: i64, p: u32) -> u32 {
    c.rem_euclid(p as i64) as u32
}

fn multinomial_expand(inner: &[Term], exponent: u32, p: u32) -> Vec<(u32, u32, u32)> {
    // Repeated multiplication with like terms merged; coefficients stay
    // reduced mod p and exponents stay exact.
    let mut acc: Vec<(u32, u32, u32)> = vec![(1, 0, 0)];
    for _ in 0..exponent {
        let mut next: Vec<(u32, u32, u32)> = Vec::new();
        for &(c, a, b) in &acc {
            for t in inner {
                let coeff = (c as u64 * reduce(t.coeff, p) as u64 % p as u64) as u32;
                let (na, nb) = (a + t.a, b + t.b);
                match next.iter_mut().find(|m| m.1 == na && m.2 == nb) {
                    Some(m) => m.0 = ((m.0 as u64 + coeff as u64) % p as u64) as u32,
                    None => next.push((coeff, na, nb)),
                }
            }
        }
        acc = next;
    }
    acc
}

impl TaskExpr {
    pub fn resolve_modulus(&self, p: Option<u32>) -> Result<u32, ParseError> {
        match (self.modulus, p) {
            (Some(text), Some(config)) if text != config => Err(ParseError::ModulusConflict { text, config }),
            (Some(m), _) | (None, Some(m)) => Ok(m),
            (None, None) => Err(ParseError::MissingModulus),
        }
    }

    /// Inner terms split into univariate parts, when every inner term
    /// depends on at most one variable.
    fn separable(&self) -> Option<(&Wrapped, Vec<Term>, Vec<Term>)> {
        let w = self.wrapped.as_ref()?;
        if !self.terms.is_empty() || w.inner.iter().any(|t| t.a > 0 && t.b > 0) {
            return None;
        }
        let (g2, g1): (Vec<Term>, Vec<Term>) = w.inner.iter().partition(|t| t.b > 0);
        Some((w, g1, g2))
    }

    /// The task as a flat polynomial; wrapped groups are expanded.
    pub fn to_polynomial(&self, p: Option<u32>) -> Result<ModPolynomial, ParseError> {
        let p = self.resolve_modulus(p)?;
        let mut merged: Vec<(u32, u32, u32)> = Vec::new();
        let mut add = |c: u32, a: u32, b: u32| match merged.iter_mut().find(|m| m.1 == a && m.2 == b) {
            Some(m) => m.0 = ((m.0 as u64 + c as u64) % p as u64) as u32,
            None => merged.push((c, a, b)),
        };
        if let Some(w) = &self.wrapped {
            for (c, a, b) in multinomial_expand(&w.inner, w.exponent, p) {
                add(c, a, b);
            }
        }
        for t in &self.terms {
            add(reduce(t.coeff, p), t.a, t.b);
        }
        let terms: Vec<Monomial> = merged
            .into_iter()
            .filter(|m| m.0 != 0)
            .map(|(coeff, a, b)| Monomial { coeff, a, b })
            .collect();
        Ok(ModPolynomial::new(p, terms)?)
    }

    /// Separable wrapped forms become a [`ComposedTask`]; everything else
    /// becomes a flat [`ModPolynomial`].
    pub fn to_task(&self, p: Option<u32>) -> Result<ParsedTask, ParseError> {
        let Some((w, g1, g2)) = self.separable() else {
            return self.to_polynomial(p).map(ParsedTask::Polynomial);
        };
        let p = self.resolve_modulus(p)?;
        let modp = p as u64;
        let table = |terms: &[Term], pick: fn(&Term) -> u32| -> Vec<u32> {
            (0..modp)
                .map(|n| {
                    terms.iter().fold(0u64, |acc, t| {
                        // A constant inner term is carried by the first table.
                        let v = match pick(t) {
                            0 => 1,
                            e => mod_pow(n, e as u64, modp),
                        };
                        (acc + reduce(t.coeff, p) as u64 * v) % modp
                    }) as u32
                })
                .collect()
        };
        let h = (0..modp).map(|m| mod_pow(m, w.exponent as u64, modp) as u32).collect();
        let task = ComposedTask::new(p, table(&g1, |t| t.a), table(&g2, |t| t.b), h)?;
        Ok(ParsedTask::Composed(task))
    }
}

struct TermFmt<'a>(&'a Term);

impl fmt::Display for TermFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.0;
        let c = t.coeff.unsigned_abs();
        if c != 1 || (t.a == 0 && t.b == 0) {
            write!(f, "{c}")?;
        }
        for (name, e) in [("n1", t.a), ("n2", t.b)] {
            match e {
                0 => {}
                1 => write!(f, "{name}")?,
                _ => write!(f, "{name}^{e}")?,
            }
        }
        Ok(())
    }
}

fn write_terms(f: &mut fmt::Formatter<'_>, terms: &[Term], mut first: bool) -> fmt::Result {
    for t in terms {
        match (first, t.coeff < 0) {
            (true, true) => write!(f, "-")?,
            (true, false) => {}
            (false, true) => write!(f, " - ")?,
            (false, false) => write!(f, " + ")?,
        }
        write!(f, "{}", TermFmt(t))?;
        first = false;
    }
    Ok(())
}

impl fmt::Display for TaskExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(w) = &self.wrapped {
            write!(f, "(")?;
            write_terms(f, &w.inner, true)?;
            write!(f, ")^{}", w.exponent)?;
        }
        write_terms(f, &self.terms, self.wrapped.is_none())?;
        if let Some(p) = self.modulus {
            write!(f, " mod {p}")?;
        }
        Ok(())
    }
}
