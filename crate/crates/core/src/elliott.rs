//! The trace-range lattice of a noncommutative torus: for every even subset
//! `j₁ < … < j₂ₘ` the signed sum over perfect matchings of the subset of the
//! products `θ_{j_a j_b}`, together with the generator `1`.
//!
//! The matching sum is evaluated literally (it is not routed through the
//! pfaffian recursion), so [`elliott_generator`] and
//! [`SkewMatrix::pfaffian_minor`] are two independent formulas for the same
//! value.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::MatrixError;
use crate::scalar::{independence_profile, Backend, Rational, Scalar, ScalarError};
use crate::skewmat::{even_subsets, permutation_sign, SkewMatrix, Subset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElliottError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("basis certificate needs a symbolic (polynomial) matrix, got the {0} backend")]
    NotSymbolic(Backend),
    #[error("lattice reduction needs rational generators, got the {0} backend")]
    NotRational(Backend),
}

/// Perfect matchings of `{0..2m}` in canonical order: the smallest unmatched
/// element is always paired first. Each matching is the flattened word
/// `ξ(1) ξ(2) … ξ(2m)` with `ξ(2s-1) < ξ(2s)` and `ξ(1) < ξ(3) < …`.
pub fn perfect_matchings(size: usize) -> Vec<Vec<usize>> {
    fn rec(free: &mut Vec<usize>, word: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if free.is_empty() {
            out.push(word.clone());
            return;
        }
        let first = free.remove(0);
        for k in 0..free.len() {
            let partner = free.remove(k);
            word.push(first);
            word.push(partner);
            rec(free, word, out);
            word.pop();
            word.pop();
            free.insert(k, partner);
        }
        free.insert(0, first);
    }
    assert!(size % 2 == 0, "perfect matchings need an even ground set");
    let mut out = Vec::new();
    rec(&mut (0..size).collect(), &mut Vec::with_capacity(size), &mut out);
    out
}

/// `(2m - 1)!!`, the number of perfect matchings of a `2m`-element set.
pub fn double_factorial_odd(m: usize) -> usize {
    (1..m.max(1) * 2).step_by(2).product::<usize>().max(1)
}

/// The generator attached to an even subset, together with the number of
/// matchings that were summed.
#[derive(Debug, Clone)]
pub struct MatchingSum {
    pub value: Scalar,
    pub terms: usize,
}

/// Signed matching sum `Σ_ξ (-1)^{|ξ|} ∏_s θ_{j_{ξ(2s-1)} j_{ξ(2s)}}` over the
/// constrained permutations `ξ` of the subset; the empty subset gives `1`.
pub fn elliott_generator(theta: &SkewMatrix, subset: &Subset) -> Result<Scalar, ElliottError> {
    Ok(elliott_matching_sum(theta, subset)?.value)
}

pub fn elliott_matching_sum(theta: &SkewMatrix, subset: &Subset) -> Result<MatchingSum, ElliottError> {
    subset.validate_even(theta.n())?;
    let backend = theta.backend();
    let idx = subset.indices();
    let matchings = perfect_matchings(idx.len());
    let mut acc = Scalar::zero(backend);
    for word in &matchings {
        let images: Vec<usize> = word.iter().map(|&w| w + 1).collect();
        let sign = permutation_sign(&images);
        let mut term = Scalar::one(backend);
        for pair in word.chunks(2) {
            term = &term * theta.get(idx[pair[0]] - 1, idx[pair[1]] - 1);
        }
        acc = if sign > 0 { &acc + &term } else { &acc - &term };
    }
    Ok(MatchingSum {
        value: acc,
        terms: matchings.len(),
    })
}

/// The ordered generator list of the trace range.
#[derive(Debug, Clone)]
pub struct TraceLattice {
    pub n: usize,
    pub backend: Backend,
    pub generators: Vec<(Subset, Scalar)>,
}

impl TraceLattice {
    pub fn values(&self) -> Vec<Scalar> {
        self.generators.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}

/// One generator per even subset, graded-lexicographically ordered, the
/// empty subset (value `1`) first.
pub fn trace_lattice(theta: &SkewMatrix) -> TraceLattice {
    let generators = even_subsets(theta.n())
        .into_iter()
        .map(|s| {
            let v = elliott_generator(theta, &s).expect("even subsets are valid");
            (s, v)
        })
        .collect();
    TraceLattice {
        n: theta.n(),
        backend: theta.backend(),
        generators,
    }
}

/// A finitely generated subgroup of ℚ written as `(num/den)·ℤ` in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicLattice {
    pub generator: Rational,
}

impl CyclicLattice {
    pub fn denominator(&self) -> BigInt {
        self.generator.denom().clone()
    }
}

impl fmt::Display for CyclicLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.generator.is_one() {
            f.write_str("Z")
        } else {
            write!(f, "({})Z", self.generator)
        }
    }
}

/// Reduce a rational trace lattice to its single positive generator
/// `gcd(numerators) / lcm(denominators)`.
pub fn rational_lattice_reduce(lattice: &TraceLattice) -> Result<CyclicLattice, ElliottError> {
    let mut values = Vec::with_capacity(lattice.len());
    for (_, v) in &lattice.generators {
        let r = v.as_rational().ok_or(ElliottError::NotRational(v.backend()))?;
        if !r.is_zero() {
            values.push(r);
        }
    }
    let den = values.iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
    let num = values
        .iter()
        .fold(BigInt::zero(), |acc, r| acc.gcd(&(r.numer() * (&den / r.denom()))));
    Ok(CyclicLattice {
        generator: Rational::new(num.abs(), den),
    })
}

/// Outcome of checking that the trace-range generators are ℚ-independent and
/// that supplied module traces reproduce them.
#[derive(Debug, Clone, Serialize)]
pub struct BasisCertificate {
    pub n: usize,
    pub expected_rank: usize,
    pub rank: usize,
    pub pass: bool,
    /// First subset whose generator lies in the ℚ-span of the earlier ones.
    pub dependent_witness: Option<String>,
    /// First subset whose module trace differs from its generator.
    pub trace_mismatch: Option<String>,
}

/// Certify the generators of the symbolic trace range as a basis: their rank
/// over ℚ must be `2^{n-1}`, and every `(subset, trace)` pair supplied in
/// `module_traces` must equal the matching generator exactly.
pub fn basis_certificate(
    theta: &SkewMatrix,
    module_traces: &[(Subset, Scalar)],
) -> Result<BasisCertificate, ElliottError> {
    if theta.backend() != Backend::Polynomial {
        return Err(ElliottError::NotSymbolic(theta.backend()));
    }
    let lattice = trace_lattice(theta);
    let profile = independence_profile(&lattice.values())?;
    let rank = profile.iter().filter(|&&b| b).count();
    let dependent_witness = profile
        .iter()
        .position(|&b| !b)
        .map(|k| lattice.generators[k].0.to_string());
    let mut trace_mismatch = None;
    for (subset, trace) in module_traces {
        let found = lattice.generators.iter().find(|(s, _)| s == subset);
        let ok = matches!(found, Some((_, g)) if g == trace);
        if !ok {
            trace_mismatch = Some(subset.to_string());
            break;
        }
    }
    let expected_rank = lattice.len();
    Ok(BasisCertificate {
        n: theta.n(),
        expected_rank,
        rank,
        pass: rank == expected_rank && trace_mismatch.is_none(),
        dependent_witness,
        trace_mismatch,
    })
}

/// Order subsets the way [`trace_lattice`] does.
pub fn graded_lex(a: &Subset, b: &Subset) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}
