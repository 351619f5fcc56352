//! The scalar tower shared by every module: exact rationals, `f64`, and
//! multivariate polynomials with rational coefficients over named
//! indeterminates.
//!
//! Mixed-backend arithmetic is rejected. The `try_*` methods report a
//! [`ScalarError`]; the `std::ops` impls on references panic with the same
//! message and are meant for code that has already checked its inputs share
//! a backend (every [`crate::SkewMatrix`] does, by construction).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = BigRational;

/// Shorthand for an integer-valued rational.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Shorthand for `num / den`. Panics if `den == 0`.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Rational,
    Float,
    Polynomial,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Rational => f.write_str("rational"),
            Backend::Float => f.write_str("float"),
            Backend::Polynomial => f.write_str("polynomial"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("backend mismatch: {0} vs {1}")]
    BackendMismatch(Backend, Backend),
    #[error("division by exact zero")]
    DivisionByZero,
    #[error("polynomial division requires a constant divisor, got `{0}`")]
    NonConstantDivisor(String),
    #[error("`{0}` is not a constant; its sign is undefined")]
    NotConstant(String),
    #[error("operation not supported on the {0} backend")]
    Unsupported(Backend),
}

/// A monomial: a multiset of indeterminate names, stored as `(name, exponent)`
/// pairs sorted by name with every exponent positive.
///
/// Ordered graded-lexicographically: total degree first, then the monomial
/// with the larger exponent on the earliest indeterminate name wins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(String, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(name: &str) -> Self {
        Monomial(vec![(name.to_string(), 1)])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, name: &str) -> u32 {
        self.0
            .iter()
            .find(|(v, _)| v == name)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn factors(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(v, e)| (v.as_str(), *e))
    }

    /// The monomial with `name` removed.
    pub fn without(&self, name: &str) -> Monomial {
        Monomial(self.0.iter().filter(|(v, _)| v != name).cloned().collect())
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut merged: BTreeMap<&str, u32> = BTreeMap::new();
        for (v, e) in self.0.iter().chain(other.0.iter()) {
            *merged.entry(v.as_str()).or_default() += e;
        }
        Monomial(merged.into_iter().map(|(v, e)| (v.to_string(), e)).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match a.0.cmp(&b.0) {
                // `self` carries an earlier indeterminate that `other` lacks here.
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
                Ordering::Equal => match a.1.cmp(&b.1) {
                    Ordering::Equal => {}
                    ord => return ord,
                },
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for (i, (v, e)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Sparse multivariate polynomial with rational coefficients. Zero
/// coefficients are never stored, so structural equality is polynomial
/// equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(name: &str) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::var(name), Rational::one());
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, Rational)>>(terms: I) -> Self {
        let mut p = Poly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded-lexicographic order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    /// The constant value if the polynomial has empty indeterminate support.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn degree_in(&self, name: &str) -> u32 {
        self.terms.keys().map(|m| m.exponent(name)).max().unwrap_or(0)
    }

    /// Sorted set of indeterminate names appearing with nonzero coefficient.
    pub fn indeterminates(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .terms
            .keys()
            .flat_map(|m| m.factors().map(|(v, _)| v.to_string()))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Coefficients of the polynomial viewed as univariate in `name`:
    /// entry `i` is the coefficient of `name^i`.
    pub fn univariate_coefficients(&self, name: &str) -> Vec<Poly> {
        let deg = self.degree_in(name) as usize;
        let mut out = vec![Poly::zero(); deg + 1];
        for (m, c) in &self.terms {
            let e = m.exponent(name) as usize;
            out[e].add_term(m.without(name), c.clone());
        }
        out
    }

    /// Substitute `name := value`.
    pub fn substitute(&self, name: &str, value: &Rational) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exponent(name);
            let mut coeff = c.clone();
            for _ in 0..e {
                coeff *= value;
            }
            out.add_term(m.without(name), coeff);
        }
        out
    }

    /// Evaluate at a full assignment; indeterminates missing from the map are an error.
    pub fn evaluate(&self, values: &BTreeMap<String, Rational>) -> Option<Rational> {
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (v, e) in m.factors() {
                let x = values.get(v)?;
                for _ in 0..e {
                    term *= x;
                }
            }
            acc += term;
        }
        Some(acc)
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::constant(Rational::one());
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let negative = c.is_negative();
            let mag = c.abs();
            match (i, negative) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
        }
        Ok(())
    }
}

/// A value in one of the three backends.
#[derive(Debug, Clone)]
pub enum Scalar {
    Rational(Rational),
    Float(f64),
    Poly(Poly),
}

impl Scalar {
    pub fn zero(backend: Backend) -> Scalar {
        match backend {
            Backend::Rational => Scalar::Rational(Rational::zero()),
            Backend::Float => Scalar::Float(0.0),
            Backend::Polynomial => Scalar::Poly(Poly::zero()),
        }
    }

    pub fn one(backend: Backend) -> Scalar {
        match backend {
            Backend::Rational => Scalar::Rational(Rational::one()),
            Backend::Float => Scalar::Float(1.0),
            Backend::Polynomial => Scalar::Poly(Poly::constant(Rational::one())),
        }
    }

    /// The integer `k` in the given backend.
    pub fn from_int(k: i64, backend: Backend) -> Scalar {
        match backend {
            Backend::Rational => Scalar::Rational(rat(k)),
            Backend::Float => Scalar::Float(k as f64),
            Backend::Polynomial => Scalar::Poly(Poly::constant(rat(k))),
        }
    }

    pub fn var(name: &str) -> Scalar {
        Scalar::Poly(Poly::var(name))
    }

    pub fn backend(&self) -> Backend {
        match self {
            Scalar::Rational(_) => Backend::Rational,
            Scalar::Float(_) => Backend::Float,
            Scalar::Poly(_) => Backend::Polynomial,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Scalar::Float(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Rational(r) => r.is_zero(),
            Scalar::Float(x) => *x == 0.0,
            Scalar::Poly(p) => p.is_zero(),
        }
    }

    fn check(&self, other: &Scalar) -> Result<(), ScalarError> {
        if self.backend() == other.backend() {
            Ok(())
        } else {
            Err(ScalarError::BackendMismatch(self.backend(), other.backend()))
        }
    }

    pub fn try_add(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.check(other)?;
        Ok(match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Scalar::Rational(a + b),
            (Scalar::Float(a), Scalar::Float(b)) => Scalar::Float(a + b),
            (Scalar::Poly(a), Scalar::Poly(b)) => Scalar::Poly(a + b),
            _ => unreachable!(),
        })
    }

    pub fn try_sub(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.check(other)?;
        Ok(match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Scalar::Rational(a - b),
            (Scalar::Float(a), Scalar::Float(b)) => Scalar::Float(a - b),
            (Scalar::Poly(a), Scalar::Poly(b)) => Scalar::Poly(a - b),
            _ => unreachable!(),
        })
    }

    pub fn try_mul(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.check(other)?;
        Ok(match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Scalar::Rational(a * b),
            (Scalar::Float(a), Scalar::Float(b)) => Scalar::Float(a * b),
            (Scalar::Poly(a), Scalar::Poly(b)) => Scalar::Poly(a * b),
            _ => unreachable!(),
        })
    }

    /// Division. Polynomials may only be divided by nonzero constants.
    pub fn try_div(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.check(other)?;
        match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => {
                if b.is_zero() {
                    Err(ScalarError::DivisionByZero)
                } else {
                    Ok(Scalar::Rational(a / b))
                }
            }
            (Scalar::Float(a), Scalar::Float(b)) => Ok(Scalar::Float(a / b)),
            (Scalar::Poly(a), Scalar::Poly(b)) => match b.as_constant() {
                Some(c) if c.is_zero() => Err(ScalarError::DivisionByZero),
                Some(c) => Ok(Scalar::Poly(a.scale(&c.recip()))),
                None => Err(ScalarError::NonConstantDivisor(b.to_string())),
            },
            _ => unreachable!(),
        }
    }

    /// Sign of the value. Polynomials must be constant.
    pub fn signum(&self) -> Result<Ordering, ScalarError> {
        match self {
            Scalar::Rational(r) => Ok(r.cmp(&Rational::zero())),
            Scalar::Float(x) => Ok(x.partial_cmp(&0.0).unwrap_or(Ordering::Equal)),
            Scalar::Poly(p) => p
                .as_constant()
                .map(|c| c.cmp(&Rational::zero()))
                .ok_or_else(|| ScalarError::NotConstant(p.to_string())),
        }
    }

    pub fn is_positive(&self) -> Result<bool, ScalarError> {
        Ok(self.signum()? == Ordering::Greater)
    }

    /// Explicit conversion to `f64`; polynomials must be constant.
    pub fn to_float(&self) -> Result<f64, ScalarError> {
        match self {
            Scalar::Rational(r) => Ok(rational_to_f64(r)),
            Scalar::Float(x) => Ok(*x),
            Scalar::Poly(p) => p
                .as_constant()
                .map(|c| rational_to_f64(&c))
                .ok_or_else(|| ScalarError::NotConstant(p.to_string())),
        }
    }

    /// Exact value as a polynomial (rationals become constants).
    pub fn to_poly(&self) -> Result<Poly, ScalarError> {
        match self {
            Scalar::Rational(r) => Ok(Poly::constant(r.clone())),
            Scalar::Poly(p) => Ok(p.clone()),
            Scalar::Float(_) => Err(ScalarError::Unsupported(Backend::Float)),
        }
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self {
            Scalar::Rational(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        match self {
            Scalar::Poly(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Scalar::Float(x) => Some(*x),
            _ => None,
        }
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // numerator/denominator beyond f64 range individually
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Scalar) -> bool {
        match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => a == b,
            (Scalar::Float(a), Scalar::Float(b)) => a == b,
            (Scalar::Poly(a), Scalar::Poly(b)) => a == b,
            (Scalar::Rational(a), Scalar::Poly(p)) | (Scalar::Poly(p), Scalar::Rational(a)) => {
                p.as_constant().as_ref() == Some(a)
            }
            _ => false,
        }
    }
}

macro_rules! forward_op {
    ($trait:ident, $method:ident, $try:ident) => {
        impl $trait for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                self.$try(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
    };
}

forward_op!(Add, add, try_add);
forward_op!(Sub, sub, try_sub);
forward_op!(Mul, mul, try_mul);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Rational(a) => Scalar::Rational(-a.clone()),
            Scalar::Float(a) => Scalar::Float(-a),
            Scalar::Poly(a) => Scalar::Poly(-a),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Rational(r) => write!(f, "{r}"),
            Scalar::Float(x) => write!(f, "{x}"),
            Scalar::Poly(p) => write!(f, "{p}"),
        }
    }
}

impl From<Rational> for Scalar {
    fn from(r: Rational) -> Self {
        Scalar::Rational(r)
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Float(x)
    }
}

impl From<Poly> for Scalar {
    fn from(p: Poly) -> Self {
        Scalar::Poly(p)
    }
}

/// Rank over ℚ of a list of exact values, viewed as rows of their
/// coefficient matrix (columns are monomials, the constant monomial included).
pub fn rational_independence_rank(values: &[Scalar]) -> Result<usize, ScalarError> {
    Ok(independence_profile(values)?.iter().filter(|&&b| b).count())
}

/// For each value in order, whether it is ℚ-independent of the values before it.
pub fn independence_profile(values: &[Scalar]) -> Result<Vec<bool>, ScalarError> {
    let polys = values
        .iter()
        .map(Scalar::to_poly)
        .collect::<Result<Vec<_>, _>>()?;
    let mut columns: BTreeMap<Monomial, usize> = BTreeMap::new();
    for p in &polys {
        for (m, _) in p.terms() {
            let next = columns.len();
            columns.entry(m.clone()).or_insert(next);
        }
    }
    let width = columns.len();
    // Echelon basis kept as (pivot column, normalized row).
    let mut basis: Vec<(usize, Vec<Rational>)> = Vec::new();
    let mut profile = Vec::with_capacity(polys.len());
    for p in &polys {
        let mut row = vec![Rational::zero(); width];
        for (m, c) in p.terms() {
            row[columns[m]] = c.clone();
        }
        for (pivot, brow) in &basis {
            if !row[*pivot].is_zero() {
                let factor = row[*pivot].clone();
                for (x, b) in row.iter_mut().zip(brow) {
                    if !b.is_zero() {
                        *x -= &factor * b;
                    }
                }
            }
        }
        match row.iter().position(|x| !x.is_zero()) {
            Some(pivot) => {
                let inv = row[pivot].recip();
                for x in row.iter_mut() {
                    *x *= &inv;
                }
                basis.push((pivot, row));
                profile.push(true);
            }
            None => profile.push(false),
        }
    }
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty literal")]
    Empty,
    #[error("invalid rational literal `{0}`")]
    BadRational(String),
    #[error("invalid float literal `{0}`")]
    BadFloat(String),
    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),
    #[error("unexpected `{found}` at byte {pos} in `{text}`")]
    Unexpected { text: String, pos: usize, found: String },
    #[error("division in `{0}` must be by a nonzero constant")]
    BadDivision(String),
}

/// Parse `-?\d+(/\d+)?`.
pub fn parse_rational(text: &str) -> Result<Rational, ParseError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(ParseError::Empty);
    }
    let bad = || ParseError::BadRational(t.to_string());
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, t),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (body, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(num) || !den.is_none_or(digits) {
        return Err(bad());
    }
    let n: BigInt = num.parse().map_err(|_| bad())?;
    let d: BigInt = match den {
        Some(d) => d.parse().map_err(|_| bad())?,
        None => BigInt::one(),
    };
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(n * sign, d))
}

/// Parse a float literal; rational literals are accepted and converted.
pub fn parse_float(text: &str) -> Result<f64, ParseError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(ParseError::Empty);
    }
    if let Ok(r) = parse_rational(t) {
        return Ok(rational_to_f64(&r));
    }
    t.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ParseError::BadFloat(t.to_string()))
}

/// Parse a polynomial expression over the declared symbols, e.g.
/// `1/2 + 3*t12 - t13*t24`. Supports `+ - * / ^` and parentheses; division
/// is only by nonzero constants.
pub fn parse_polynomial(text: &str, symbols: &[String]) -> Result<Poly, ParseError> {
    let mut parser = PolyParser {
        text,
        bytes: text.as_bytes(),
        pos: 0,
        symbols,
    };
    parser.skip_ws();
    if parser.pos == parser.bytes.len() {
        return Err(ParseError::Empty);
    }
    let p = parser.expr()?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.unexpected());
    }
    Ok(p)
}

pub fn parse_scalar(text: &str, backend: Backend, symbols: &[String]) -> Result<Scalar, ParseError> {
    match backend {
        Backend::Rational => parse_rational(text).map(Scalar::Rational),
        Backend::Float => parse_float(text).map(Scalar::Float),
        Backend::Polynomial => parse_polynomial(text, symbols).map(Scalar::Poly),
    }
}

struct PolyParser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    symbols: &'a [String],
}

impl PolyParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn unexpected(&self) -> ParseError {
        let found = self
            .text
            .get(self.pos..)
            .and_then(|s| s.chars().next())
            .map(|c| c.to_string())
            .unwrap_or_else(|| "end of input".to_string());
        ParseError::Unexpected {
            text: self.text.to_string(),
            pos: self.pos,
            found,
        }
    }

    fn expr(&mut self) -> Result<Poly, ParseError> {
        let mut acc = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                -&self.term()?
            }
            Some(b'+') => {
                self.pos += 1;
                self.term()?
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Poly, ParseError> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = &acc * &self.power()?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    let d = self.power()?;
                    match d.as_constant() {
                        Some(c) if !c.is_zero() => acc = acc.scale(&c.recip()),
                        _ => return Err(ParseError::BadDivision(self.text.to_string())),
                    }
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<Poly, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let e: u32 = self.text[start..self.pos].parse().map_err(|_| self.unexpected())?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Poly, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.unexpected());
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'-') => {
                self.pos += 1;
                Ok(-&self.power()?)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let n: BigInt = self.text[start..self.pos].parse().map_err(|_| self.unexpected())?;
                Ok(Poly::constant(Rational::from_integer(n)))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = &self.text[start..self.pos];
                if !self.symbols.iter().any(|s| s == name) {
                    return Err(ParseError::UndeclaredSymbol(name.to_string()));
                }
                Ok(Poly::var(name))
            }
            _ => Err(self.unexpected()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn syms(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn poly(text: &str) -> Scalar {
        Scalar::Poly(parse_polynomial(text, &syms(&["t12", "t13", "t23", "t24", "t34", "t14", "t"])).unwrap())
    }

    #[test]
    fn rational_sum() {
        let a = Scalar::Rational(ratio(1, 2));
        let b = Scalar::Rational(ratio(1, 3));
        assert_eq!(a.try_add(&b).unwrap(), Scalar::Rational(ratio(5, 6)));
    }

    #[test]
    fn monomial_product() {
        let p = &poly("t12") * &poly("t34");
        let Scalar::Poly(p) = p else { panic!() };
        assert_eq!(p.num_terms(), 1);
        let m = Monomial::var("t12").mul(&Monomial::var("t34"));
        assert_eq!(p.coefficient(&m), rat(1));
    }

    #[test]
    fn additive_inverse() {
        assert!((&poly("t12") - &poly("t12")).is_zero());
    }

    #[test]
    fn constant_poly_equals_rational() {
        assert_eq!(poly("3/4"), Scalar::Rational(ratio(3, 4)));
        assert_eq!(Scalar::Rational(ratio(3, 4)), poly("3/4"));
        assert_ne!(poly("t12"), Scalar::Rational(rat(0)));
    }

    #[test]
    fn mixed_backends_are_rejected() {
        let a = Scalar::Rational(rat(1));
        let b = Scalar::Float(1.0);
        assert_eq!(
            a.try_add(&b),
            Err(ScalarError::BackendMismatch(Backend::Rational, Backend::Float))
        );
        assert!(a.try_mul(&poly("t12")).is_err());
        assert_ne!(a, b);
    }

    #[test]
    #[should_panic(expected = "backend mismatch")]
    fn operator_panics_on_mismatch() {
        let _ = &Scalar::Float(1.0) + &Scalar::Rational(rat(1));
    }

    #[test]
    fn division_rules() {
        let one = Scalar::Rational(rat(1));
        assert_eq!(one.try_div(&Scalar::Rational(rat(0))), Err(ScalarError::DivisionByZero));
        assert_eq!(poly("2*t12").try_div(&poly("2")).unwrap(), poly("t12"));
        assert!(matches!(
            poly("t12").try_div(&poly("t13")),
            Err(ScalarError::NonConstantDivisor(_))
        ));
        assert_eq!(poly("t12").try_div(&poly("0")), Err(ScalarError::DivisionByZero));
    }

    #[test]
    fn signs() {
        assert_eq!(Scalar::Rational(ratio(-1, 3)).signum().unwrap(), Ordering::Less);
        assert_eq!(poly("5").signum().unwrap(), Ordering::Greater);
        assert!(matches!(poly("t12").signum(), Err(ScalarError::NotConstant(_))));
    }

    #[test]
    fn display_order_is_descending_grlex() {
        let p = poly("t14*t23 - t13*t24 + t12*t34");
        assert_eq!(p.to_string(), "t12*t34 - t13*t24 + t14*t23");
        assert_eq!(poly("1/2 + 3*t12 - t13*t24").to_string(), "-t13*t24 + 3*t12 + 1/2");
        assert_eq!(poly("t12*t12 - 1/2*t13").to_string(), "t12^2 - 1/2*t13");
        assert_eq!(poly("0").to_string(), "0");
    }

    #[test]
    fn parse_errors() {
        let s = syms(&["a"]);
        assert!(matches!(parse_polynomial("b", &s), Err(ParseError::UndeclaredSymbol(_))));
        assert!(matches!(parse_polynomial("a +", &s), Err(ParseError::Unexpected { .. })));
        assert!(matches!(parse_polynomial("1/a", &s), Err(ParseError::BadDivision(_))));
        assert_eq!(parse_polynomial("", &s), Err(ParseError::Empty));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("1.5").is_err());
        assert!(parse_rational("--1").is_err());
        assert_eq!(parse_rational("-7/21").unwrap(), ratio(-1, 3));
        assert_eq!(parse_float("1/4").unwrap(), 0.25);
        assert_eq!(parse_float("-2.5e-1").unwrap(), -0.25);
        assert!(parse_float("nan").is_err());
    }

    #[test]
    fn univariate_view_and_substitution() {
        let Scalar::Poly(p) = poly("t^2 + 3*t*t12 - 1") else { panic!() };
        let c = p.univariate_coefficients("t");
        assert_eq!(c.len(), 3);
        assert_eq!(c[2], Poly::constant(rat(1)));
        assert_eq!(Scalar::Poly(c[1].clone()), poly("3*t12"));
        assert_eq!(Scalar::Poly(p.substitute("t", &rat(2))), poly("3 + 6*t12"));
    }

    #[test]
    fn independence_rank_examples() {
        let v = [poly("1"), poly("t12"), poly("t13"), poly("t23")];
        assert_eq!(rational_independence_rank(&v).unwrap(), 4);
        let v = [poly("1"), poly("1"), poly("1")];
        assert_eq!(rational_independence_rank(&v).unwrap(), 1);
        // rows (1,0), (2,0), (1,1) over columns (t12, t13): rank 2
        let v = [poly("t12"), poly("2*t12"), poly("t12 + t13")];
        assert_eq!(rational_independence_rank(&v).unwrap(), 2);
        assert_eq!(independence_profile(&v).unwrap(), vec![true, false, true]);
        assert!(rational_independence_rank(&[Scalar::Float(1.0)]).is_err());
    }

    fn small_rational() -> impl Strategy<Value = Rational> {
        (-20i64..20, 1i64..12).prop_map(|(n, d)| ratio(n, d))
    }

    fn small_poly() -> impl Strategy<Value = Poly> {
        let vars = ["a", "b", "c"];
        prop::collection::vec((small_rational(), 0usize..3, 0u32..3, 0usize..3, 0u32..2), 0..4).prop_map(
            move |terms| {
                Poly::from_terms(terms.into_iter().map(|(c, v1, e1, v2, e2)| {
                    let m = Monomial::var(vars[v1]);
                    let m = (0..e1).fold(Monomial::one(), |acc, _| acc.mul(&m));
                    let n = Monomial::var(vars[v2]);
                    let n = (0..e2).fold(Monomial::one(), |acc, _| acc.mul(&n));
                    (m.mul(&n), c)
                }))
            },
        )
    }

    proptest! {
        #[test]
        fn rational_field_axioms(a in small_rational(), b in small_rational(), c in small_rational()) {
            let (a, b, c) = (Scalar::Rational(a), Scalar::Rational(b), Scalar::Rational(c));
            prop_assert_eq!(&(&a + &b) - &b, a.clone());
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            if !b.is_zero() {
                prop_assert_eq!(&a.try_div(&b).unwrap() * &b, a.clone());
            }
        }

        #[test]
        fn polynomial_ring_axioms(a in small_poly(), b in small_poly(), c in small_poly()) {
            let (a, b, c) = (Scalar::Poly(a), Scalar::Poly(b), Scalar::Poly(c));
            prop_assert_eq!(&(&a + &b) - &b, a.clone());
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        }

        #[test]
        fn display_parse_roundtrip(a in small_poly()) {
            let text = a.to_string();
            let back = parse_polynomial(&text, &syms(&["a", "b", "c"])).unwrap();
            prop_assert_eq!(back, a);
        }

        #[test]
        fn rank_invariant_under_rational_combinations(
            polys in prop::collection::vec(small_poly(), 1..5),
            coeffs in prop::collection::vec(small_rational(), 5),
        ) {
            let values: Vec<Scalar> = polys.iter().cloned().map(Scalar::Poly).collect();
            let combo = polys
                .iter()
                .zip(&coeffs)
                .fold(Poly::zero(), |acc, (p, c)| &acc + &p.scale(c));
            let mut extended = values.clone();
            extended.push(Scalar::Poly(combo));
            prop_assert_eq!(
                rational_independence_rank(&values).unwrap(),
                rational_independence_rank(&extended).unwrap()
            );
        }
    }
}
