//! Positivity shift: the matrix `Z` with every entry above the diagonal equal
//! to `1`, and the least integer `t ≥ 0` for which every nonempty pfaffian
//! minor of `A + tZ` is positive.
//!
//! Each size-`2l` minor of `A + tZ` is a monic degree-`l` polynomial in `t`,
//! so the Cauchy root bound `1 + max|cᵢ|` caps the search and the loop
//! always terminates with a certificate.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::cocycle::{cohomology_invariant, CocycleError};
use crate::linalg::MatrixError;
use crate::scalar::{Backend, Poly, Rational, Scalar};
use crate::skewmat::{SkewMatrix, Subset};

/// Indeterminate used for the shift in [`shift_polynomials`].
pub const SHIFT_SYMBOL: &str = "t";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizeError {
    #[error("Z needs n >= 1, got {0}")]
    EmptyDimension(usize),
    #[error("positivity shift needs exact rational entries, got the {0} backend")]
    NotRational(Backend),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
}

/// The skew matrix with `+1` above and `-1` below the diagonal.
pub fn z_matrix(n: usize, backend: Backend) -> Result<SkewMatrix, NormalizeError> {
    if n == 0 {
        return Err(NormalizeError::EmptyDimension(n));
    }
    Ok(SkewMatrix::from_upper_fn(n, backend, |_, _| Scalar::one(backend))?)
}

/// `A + tZ` for an integer `t`.
pub fn shifted(a: &SkewMatrix, t: i64) -> Result<SkewMatrix, NormalizeError> {
    if a.n() == 0 {
        return Ok(a.clone());
    }
    let z = z_matrix(a.n(), a.backend())?.scale(&Scalar::from_int(t, a.backend()))?;
    Ok(a.add(&z)?)
}

/// Every nonempty pfaffian minor of `A + tZ` as a polynomial in [`SHIFT_SYMBOL`].
pub fn shift_polynomials(a: &SkewMatrix) -> Result<Vec<(Subset, Poly)>, NormalizeError> {
    if a.backend() != Backend::Rational {
        return Err(NormalizeError::NotRational(a.backend()));
    }
    let t = Scalar::var(SHIFT_SYMBOL);
    let lifted = SkewMatrix::from_upper_fn(a.n(), Backend::Polynomial, |i, j| {
        let c = Scalar::Poly(Poly::constant(a.get(i, j).as_rational().unwrap().clone()));
        &c + &t
    })?;
    Ok(lifted
        .all_pfaffian_minors()
        .into_iter()
        .filter(|(s, _)| !s.is_empty())
        .map(|(s, v)| (s, v.as_poly().cloned().unwrap_or_default()))
        .collect())
}

/// Coefficients `c₀ … c_l` of a polynomial in [`SHIFT_SYMBOL`] alone.
pub fn shift_coefficients(poly: &Poly) -> Vec<Rational> {
    poly.univariate_coefficients(SHIFT_SYMBOL)
        .iter()
        .map(|c| c.as_constant().expect("shift polynomial of a rational matrix"))
        .collect()
}

/// `1 + max|cᵢ|` over the non-leading coefficients of a monic polynomial,
/// rounded up; every real root lies strictly below it.
pub fn cauchy_bound(coefficients: &[Rational]) -> BigInt {
    let (_, lower) = coefficients.split_last().expect("nonempty coefficient list");
    let max = lower.iter().map(Rational::abs).fold(Rational::zero(), |m, c| if c > m { c } else { m });
    (Rational::one() + max).ceil().to_integer()
}

/// Result of [`find_positive_shift`].
#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    /// Least non-negative integer shift.
    pub t: u64,
    /// Search cap from the Cauchy bound across all minors.
    pub cauchy_bound: u64,
    /// Every nonempty minor of `A + tZ` (label, value).
    #[serde(serialize_with = "serialize_minors")]
    pub minors: Vec<(Subset, Scalar)>,
    /// The minors as polynomials in the shift variable.
    #[serde(serialize_with = "serialize_polys")]
    pub polynomials: Vec<(Subset, Poly)>,
}

fn serialize_minors<S: serde::Serializer>(v: &[(Subset, Scalar)], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(v.len()))?;
    for (k, x) in v {
        map.serialize_entry(&k.to_string(), &x.to_string())?;
    }
    map.end()
}

fn serialize_polys<S: serde::Serializer>(v: &[(Subset, Poly)], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(v.len()))?;
    for (k, x) in v {
        map.serialize_entry(&k.to_string(), &x.to_string())?;
    }
    map.end()
}

/// Least `t ≥ 0` making every nonempty pfaffian minor of `A + tZ` positive.
pub fn find_positive_shift(a: &SkewMatrix) -> Result<ShiftReport, NormalizeError> {
    let polynomials = shift_polynomials(a)?;
    let coefficients: Vec<Vec<Rational>> = polynomials.iter().map(|(_, p)| shift_coefficients(p)).collect();
    let bound = coefficients
        .iter()
        .map(|c| cauchy_bound(c))
        .max()
        .unwrap_or_else(BigInt::zero);
    let bound_u64 = bound.to_u64().expect("Cauchy bound fits in u64");
    let positive_at = |t: &Rational| {
        coefficients.iter().all(|c| {
            // Horner
            let v = c.iter().rev().fold(Rational::zero(), |acc, ci| acc * t + ci);
            v.is_positive()
        })
    };
    let t = (0..=bound_u64)
        .find(|&t| positive_at(&Rational::from_integer(BigInt::from(t))))
        .expect("the Cauchy bound guarantees positivity");
    let minors = shifted(a, t as i64)?
        .all_pfaffian_minors()
        .into_iter()
        .filter(|(s, _)| !s.is_empty())
        .collect();
    Ok(ShiftReport {
        t,
        cauchy_bound: bound_u64,
        minors,
        polynomials,
    })
}

/// Whether `θ` and `θ + tZ` carry the same cocycle-class invariant.
pub fn shift_preserves_class(theta: &SkewMatrix, t: i64) -> Result<bool, NormalizeError> {
    let moved = shifted(theta, t)?;
    Ok(cohomology_invariant(theta)? == cohomology_invariant(&moved)?)
}

/// Lowest common multiple of the denominators of the entries (1 for an empty matrix).
pub fn common_denominator(a: &SkewMatrix) -> BigInt {
    a.upper()
        .iter()
        .filter_map(|x| x.as_rational().map(|r| r.denom().clone()))
        .fold(BigInt::one(), |acc, d| acc.lcm(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, ratio};
    use crate::skewmat::even_subsets;

    #[test]
    fn z_matrix_shape_and_minors() {
        let z = z_matrix(2, Backend::Rational).unwrap();
        assert_eq!(z.get(0, 1), &Scalar::Rational(rat(1)));
        assert_eq!(z.get(1, 0), &Scalar::Rational(rat(-1)));
        assert_eq!(z_matrix(4, Backend::Rational).unwrap().pfaffian(), Scalar::Rational(rat(1)));
        for n in 1..=8 {
            let z = z_matrix(n, Backend::Rational).unwrap();
            for (_, v) in z.all_pfaffian_minors() {
                assert_eq!(v, Scalar::Rational(rat(1)));
            }
        }
        assert_eq!(z_matrix(0, Backend::Rational), Err(NormalizeError::EmptyDimension(0)));
    }

    #[test]
    fn already_positive_needs_no_shift() {
        let a = z_matrix(4, Backend::Rational).unwrap().scale(&Scalar::Rational(rat(3))).unwrap();
        assert_eq!(find_positive_shift(&a).unwrap().t, 0);
    }

    #[test]
    fn zero_matrix_needs_shift_one() {
        for n in 2..=6 {
            let report = find_positive_shift(&SkewMatrix::zero(n, Backend::Rational)).unwrap();
            assert_eq!(report.t, 1);
            assert_eq!(report.minors.len(), (1 << (n - 1)) - 1);
        }
    }

    #[test]
    fn block_diagonal_j0_needs_shift_one() {
        let j = SkewMatrix::j0(2, Backend::Rational);
        let report = find_positive_shift(&j).unwrap();
        assert_eq!(report.t, 1);
        let at_zero = j.pfaffian_minor(&Subset::new(vec![1, 3])).unwrap();
        assert!(at_zero.is_zero());
        assert!(report.minors.iter().all(|(_, v)| v.is_positive().unwrap()));
    }

    #[test]
    fn two_by_two_polynomial() {
        let a = SkewMatrix::from_upper(2, Backend::Rational, vec![Scalar::Rational(ratio(-7, 3))]).unwrap();
        let polys = shift_polynomials(&a).unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(shift_coefficients(&polys[0].1), vec![ratio(-7, 3), rat(1)]);
        assert_eq!(polys[0].1.to_string(), "t - 7/3");
        assert_eq!(find_positive_shift(&a).unwrap().t, 3);
    }

    #[test]
    fn zero_matrix_polynomials_are_pure_powers() {
        let polys = shift_polynomials(&SkewMatrix::zero(6, Backend::Rational)).unwrap();
        for (s, p) in polys {
            let l = s.len() / 2;
            let mut expected = vec![rat(0); l + 1];
            expected[l] = rat(1);
            assert_eq!(shift_coefficients(&p), expected);
        }
    }

    #[test]
    fn rejects_non_rational() {
        assert!(matches!(
            find_positive_shift(&SkewMatrix::symbolic(3, "x")),
            Err(NormalizeError::NotRational(Backend::Polynomial))
        ));
    }

    #[test]
    fn shift_keeps_class() {
        let a = SkewMatrix::from_upper(3, Backend::Rational, vec![Scalar::Rational(ratio(1, 5)), Scalar::Rational(ratio(-2, 7)), Scalar::Rational(ratio(9, 4))]).unwrap();
        for t in -3..4 {
            assert!(shift_preserves_class(&a, t).unwrap());
        }
        assert_eq!(even_subsets(3).len(), 4);
    }

    #[test]
    fn cauchy_bound_examples() {
        assert_eq!(cauchy_bound(&[ratio(-7, 3), rat(1)]), BigInt::from(4));
        assert_eq!(cauchy_bound(&[rat(0), rat(0), rat(1)]), BigInt::from(1));
    }
}
