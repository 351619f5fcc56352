//! Phase-valued 2-cocycles on `ℤⁿ` and on the fibers of the continuous field.
//!
//! A cocycle value `e(φ)` is stored as its phase `φ ∈ ℝ/ℤ`. Rational
//! parameter matrices give exact phases, float ones give float phases.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_integer::Integer;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::field::FieldPath;
use crate::linalg::{Matrix, MatrixError};
use crate::scalar::{Backend, Rational, Scalar};
use crate::skewmat::SkewMatrix;

/// Tolerance on the circle distance between float phases.
pub const FLOAT_PHASE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CocycleError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cocycles need a rational or float parameter matrix, got {0}")]
    Unsupported(Backend),
    #[error("denominators too large for exact phase arithmetic")]
    Overflow,
    #[error("coboundary must vanish at the identity, f(0) = {0}")]
    NonzeroAtIdentity(Phase),
    #[error("the leading 2p x 2p block is singular")]
    SingularBlock,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// A point of `ℝ/ℤ`: an exact fraction `num/den` with `0 ≤ num < den`, or a
/// float in `[0, 1)`.
#[derive(Debug, Clone, Copy)]
pub enum Phase {
    Exact { num: i64, den: i64 },
    Float(f64),
}

impl Phase {
    pub const ZERO: Phase = Phase::Exact { num: 0, den: 1 };

    /// `num/den mod 1`; `den` must be positive.
    pub fn exact(num: i128, den: i128) -> Result<Phase, CocycleError> {
        assert!(den > 0, "phase denominator must be positive");
        let r = num.rem_euclid(den);
        let g = r.gcd(&den);
        let (r, d) = (r / g, den / g);
        Ok(Phase::Exact {
            num: i64::try_from(r).map_err(|_| CocycleError::Overflow)?,
            den: i64::try_from(d).map_err(|_| CocycleError::Overflow)?,
        })
    }

    pub fn float(x: f64) -> Phase {
        let r = x - x.floor();
        Phase::Float(if r >= 1.0 { 0.0 } else { r })
    }

    pub fn from_rational(r: &Rational) -> Result<Phase, CocycleError> {
        let num = r.numer().to_i128().ok_or(CocycleError::Overflow)?;
        let den = r.denom().to_i128().ok_or(CocycleError::Overflow)?;
        Phase::exact(num, den)
    }

    pub fn from_scalar(s: &Scalar) -> Result<Phase, CocycleError> {
        match s {
            Scalar::Rational(r) => Phase::from_rational(r),
            Scalar::Float(x) => Ok(Phase::float(*x)),
            Scalar::Poly(_) => Err(CocycleError::Unsupported(Backend::Polynomial)),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Phase::Exact { .. })
    }

    /// Representative in `[0, 1)`.
    pub fn value(&self) -> f64 {
        match *self {
            Phase::Exact { num, den } => num as f64 / den as f64,
            Phase::Float(x) => x,
        }
    }

    /// Distance to `0` on the circle, in `[0, 1/2]`.
    pub fn circle_norm(&self) -> f64 {
        let v = self.value();
        v.min(1.0 - v)
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Phase::Exact { num, .. } => num == 0,
            Phase::Float(_) => self.circle_norm() <= FLOAT_PHASE_TOL,
        }
    }

    pub fn add(self, other: Phase) -> Phase {
        match (self, other) {
            (Phase::Exact { num: a, den: b }, Phase::Exact { num: c, den: d }) => {
                let (a, b, c, d) = (a as i128, b as i128, c as i128, d as i128);
                let l = b.lcm(&d);
                Phase::exact(a * (l / b) + c * (l / d), l).expect("sum of in-range phases")
            }
            _ => Phase::float(self.value() + other.value()),
        }
    }

    pub fn neg(self) -> Phase {
        match self {
            Phase::Exact { num, den } => Phase::exact(-(num as i128), den as i128).expect("negated phase"),
            Phase::Float(x) => Phase::float(-x),
        }
    }

    pub fn sub(self, other: Phase) -> Phase {
        self.add(other.neg())
    }

    /// `e(φ) = exp(2πiφ)`.
    pub fn to_unit(&self) -> num_complex::Complex64 {
        num_complex::Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * self.value())
    }
}

impl PartialEq for Phase {
    fn eq(&self, other: &Phase) -> bool {
        match (*self, *other) {
            (Phase::Exact { num: a, den: b }, Phase::Exact { num: c, den: d }) => a == c && b == d,
            _ => self.sub(*other).is_zero(),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Phase::Exact { num, den: 1 } => write!(f, "{num}"),
            Phase::Exact { num, den } => write!(f, "{num}/{den}"),
            Phase::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// `(x, y) ↦ (x·Θy)/2 mod 1` with the form stored as integers over a common
/// denominator, or as floats.
#[derive(Debug, Clone, PartialEq)]
pub enum BilinearPhase {
    /// Phase is `xᵀNy mod den / den`, where `Θ/2 = N/den`.
    Exact { n: usize, numer: Vec<i64>, den: i64 },
    Float { n: usize, half: Vec<f64> },
}

impl BilinearPhase {
    pub fn new(theta: &SkewMatrix) -> Result<Self, CocycleError> {
        let n = theta.n();
        match theta.backend() {
            Backend::Rational => exact_form(theta.matrix()),
            Backend::Float => {
                let half = theta.matrix().entries().iter().map(|s| s.as_float().unwrap() / 2.0).collect();
                Ok(BilinearPhase::Float { n, half })
            }
            b => Err(CocycleError::Unsupported(b)),
        }
    }

    pub fn from_f64(theta: &DMatrix<f64>) -> Self {
        let n = theta.nrows();
        let half = (0..n * n).map(|k| theta[(k / n, k % n)] / 2.0).collect();
        BilinearPhase::Float { n, half }
    }

    pub fn n(&self) -> usize {
        match self {
            BilinearPhase::Exact { n, .. } | BilinearPhase::Float { n, .. } => *n,
        }
    }

    pub fn phase(&self, x: &[i64], y: &[i64]) -> Phase {
        match self {
            BilinearPhase::Exact { n, numer, den } => {
                let mut acc: i128 = 0;
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0 {
                        continue;
                    }
                    let row = &numer[i * n..(i + 1) * n];
                    let dot: i128 = row.iter().zip(y).map(|(&a, &b)| a as i128 * b as i128).sum();
                    acc += xi as i128 * dot;
                }
                let r = acc.rem_euclid(*den as i128);
                let g = r.gcd(&(*den as i128));
                Phase::Exact {
                    num: (r / g) as i64,
                    den: (*den as i128 / g) as i64,
                }
            }
            BilinearPhase::Float { n, half } => {
                let mut acc = 0.0;
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0 {
                        continue;
                    }
                    let row = &half[i * n..(i + 1) * n];
                    acc += xi as f64 * row.iter().zip(y).map(|(&a, &b)| a * b as f64).sum::<f64>();
                }
                Phase::float(acc)
            }
        }
    }
}

/// A phase-valued function on `ℤⁿ` used to twist a cocycle.
#[derive(Clone)]
pub struct Coboundary {
    n: usize,
    label: String,
    f: Arc<dyn Fn(&[i64]) -> Phase + Send + Sync>,
}

impl fmt::Debug for Coboundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coboundary").field("n", &self.n).field("label", &self.label).finish()
    }
}

impl Coboundary {
    pub fn from_fn(n: usize, label: &str, f: impl Fn(&[i64]) -> Phase + Send + Sync + 'static) -> Self {
        Coboundary {
            n,
            label: label.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::from_fn(n, "0", |_| Phase::ZERO)
    }

    /// `f(x) = (x·Sx)/2 mod 1` for a symmetric rational or float `S`.
    pub fn quadratic(s: &Matrix) -> Result<Self, CocycleError> {
        let n = s.rows();
        if s.cols() != n {
            return Err(MatrixError::NotSquare { rows: n, cols: s.cols() }.into());
        }
        let form = match s.backend() {
            Backend::Rational => exact_form(s)?,
            Backend::Float => BilinearPhase::from_f64(&s.to_f64()?),
            b => return Err(CocycleError::Unsupported(b)),
        };
        Ok(Self::from_fn(n, &format!("quadratic {s}"), move |x| form.phase(x, x)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[i64]) -> Phase {
        (self.f)(x)
    }

    /// `x ↦ -f(x)`.
    pub fn negated(&self) -> Coboundary {
        let f = self.f.clone();
        Coboundary {
            n: self.n,
            label: format!("-({})", self.label),
            f: Arc::new(move |x| f(x).neg()),
        }
    }
}

/// `M/2` as integers over a common denominator.
fn exact_form(m: &Matrix) -> Result<BilinearPhase, CocycleError> {
    let entries: Vec<&Rational> = m.entries().iter().map(|s| s.as_rational().unwrap()).collect();
    let lcm = entries
        .iter()
        .try_fold(1i128, |acc, r| r.denom().to_i128().map(|d| acc.lcm(&d)))
        .ok_or(CocycleError::Overflow)?;
    let numer = entries
        .iter()
        .map(|r| {
            let v = r.numer().to_i128()?.checked_mul(lcm / r.denom().to_i128()?)?;
            i64::try_from(v).ok()
        })
        .collect::<Option<Vec<i64>>>()
        .ok_or(CocycleError::Overflow)?;
    let den = i64::try_from(2 * lcm).map_err(|_| CocycleError::Overflow)?;
    Ok(BilinearPhase::Exact { n: m.rows(), numer, den })
}

/// A normalized 2-cocycle on `ℤⁿ`, valued in `ℝ/ℤ`.
#[derive(Debug, Clone)]
pub enum PhaseCocycle {
    /// `ω_θ(x, y) = (x·θy)/2`.
    Matrix { theta: SkewMatrix, form: BilinearPhase },
    /// `f(x) + f(y) - f(x+y) + ω(x, y)`.
    Twisted { base: Box<PhaseCocycle>, f: Coboundary },
    /// `base` with some values overwritten.
    Table { base: Box<PhaseCocycle>, overrides: HashMap<(Vec<i64>, Vec<i64>), Phase> },
    /// The field cocycle `Ω(·, ·, r) = (x·γ(r)y)/2` at one fiber.
    Fiber { path: Arc<FieldPath>, r: f64, form: BilinearPhase },
}

impl PhaseCocycle {
    pub fn from_matrix(theta: &SkewMatrix) -> Result<Self, CocycleError> {
        Ok(PhaseCocycle::Matrix {
            form: BilinearPhase::new(theta)?,
            theta: theta.clone(),
        })
    }

    /// The fiber of the field cocycle at `r`.
    pub fn field_fiber(path: Arc<FieldPath>, r: f64) -> Result<Self, CocycleError> {
        let gamma = path.gamma(r).map_err(|e| MatrixError::Dimension(e.to_string()))?;
        Ok(PhaseCocycle::Fiber {
            form: BilinearPhase::from_f64(&gamma),
            path,
            r,
        })
    }

    /// Overwrite selected values, e.g. to build a negative control.
    pub fn with_overrides(self, overrides: HashMap<(Vec<i64>, Vec<i64>), Phase>) -> Self {
        PhaseCocycle::Table {
            base: Box::new(self),
            overrides,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            PhaseCocycle::Matrix { form, .. } | PhaseCocycle::Fiber { form, .. } => form.n(),
            PhaseCocycle::Twisted { base, .. } | PhaseCocycle::Table { base, .. } => base.n(),
        }
    }

    /// The source parameter matrix, when the cocycle is one of the `ω_θ`.
    pub fn theta(&self) -> Option<&SkewMatrix> {
        match self {
            PhaseCocycle::Matrix { theta, .. } => Some(theta),
            _ => None,
        }
    }

    /// `ω(x, y)`; lengths are not checked (see [`PhaseCocycle::phase_checked`]).
    pub fn phase(&self, x: &[i64], y: &[i64]) -> Phase {
        match self {
            PhaseCocycle::Matrix { form, .. } | PhaseCocycle::Fiber { form, .. } => form.phase(x, y),
            PhaseCocycle::Twisted { base, f } => {
                let sum: Vec<i64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
                f.eval(x).add(f.eval(y)).sub(f.eval(&sum)).add(base.phase(x, y))
            }
            PhaseCocycle::Table { base, overrides } => match overrides.get(&(x.to_vec(), y.to_vec())) {
                Some(v) => *v,
                None => base.phase(x, y),
            },
        }
    }

    pub fn phase_checked(&self, x: &[i64], y: &[i64]) -> Result<Phase, CocycleError> {
        let n = self.n();
        for v in [x, y] {
            if v.len() != n {
                return Err(CocycleError::Dimension { expected: n, got: v.len() });
            }
        }
        Ok(self.phase(x, y))
    }
}

/// `(x·θy)/2 mod 1`.
pub fn cocycle_phase(theta: &SkewMatrix, x: &[i64], y: &[i64]) -> Result<Phase, CocycleError> {
    PhaseCocycle::from_matrix(theta)?.phase_checked(x, y)
}

/// Which condition a witness violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Identity,
    UnitLeft,
    UnitRight,
}

/// A sample on which the cocycle check fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub z: Vec<i64>,
    pub violation: Violation,
    /// `ω(x,y) + ω(x+y,z) - ω(x,y+z) - ω(y,z)` for identity failures, the
    /// offending value for unit failures.
    pub defect: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleCheck {
    pub pass: bool,
    pub checked: u64,
    pub witness: Option<Witness>,
}

struct Checker<'a> {
    omega: &'a PhaseCocycle,
    zero: Vec<i64>,
    xy: Vec<i64>,
    yz: Vec<i64>,
    checked: u64,
}

impl<'a> Checker<'a> {
    fn new(omega: &'a PhaseCocycle) -> Self {
        let n = omega.n();
        Checker {
            omega,
            zero: vec![0; n],
            xy: vec![0; n],
            yz: vec![0; n],
            checked: 0,
        }
    }

    fn check(&mut self, x: &[i64], y: &[i64], z: &[i64]) -> Option<Witness> {
        self.checked += 1;
        let w = self.omega;
        let witness = |violation, defect: Phase| Witness {
            x: x.to_vec(),
            y: y.to_vec(),
            z: z.to_vec(),
            violation,
            defect,
        };
        let right = w.phase(x, &self.zero);
        if !right.is_zero() {
            return Some(witness(Violation::UnitRight, right));
        }
        let left = w.phase(&self.zero, x);
        if !left.is_zero() {
            return Some(witness(Violation::UnitLeft, left));
        }
        for k in 0..x.len() {
            self.xy[k] = x[k] + y[k];
            self.yz[k] = y[k] + z[k];
        }
        let defect = w
            .phase(x, y)
            .add(w.phase(&self.xy, z))
            .sub(w.phase(x, &self.yz))
            .sub(w.phase(y, z));
        if defect.is_zero() {
            None
        } else {
            Some(witness(Violation::Identity, defect))
        }
    }
}

/// Check the cocycle identity and unit normalization on every sample; stops at
/// the first failure and reports it.
pub fn verify_cocycle<'s, I>(omega: &PhaseCocycle, samples: I) -> Result<CocycleCheck, CocycleError>
where
    I: IntoIterator<Item = (&'s [i64], &'s [i64], &'s [i64])>,
{
    let n = omega.n();
    let mut checker = Checker::new(omega);
    for (x, y, z) in samples {
        for v in [x, y, z] {
            if v.len() != n {
                return Err(CocycleError::Dimension { expected: n, got: v.len() });
            }
        }
        if let Some(w) = checker.check(x, y, z) {
            return Ok(CocycleCheck {
                pass: false,
                checked: checker.checked,
                witness: Some(w),
            });
        }
    }
    Ok(CocycleCheck {
        pass: true,
        checked: checker.checked,
        witness: None,
    })
}

/// All points of `{-radius..radius}ⁿ`.
pub fn box_points(n: usize, radius: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (-radius..=radius).map(move |c| {
                    let mut w = v.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
    }
    out
}

/// [`verify_cocycle`] on every triple from `{-radius..radius}ⁿ`.
pub fn verify_cocycle_box(omega: &PhaseCocycle, radius: i64) -> Result<CocycleCheck, CocycleError> {
    if let Some(check) = exact_box_check(omega, radius) {
        return Ok(check);
    }
    let points = box_points(omega.n(), radius);
    let pts = &points;
    let triples = pts
        .iter()
        .flat_map(move |x| pts.iter().flat_map(move |y| pts.iter().map(move |z| (x.as_slice(), y.as_slice(), z.as_slice()))));
    verify_cocycle(omega, triples)
}

/// Exhaustive box check for exact cocycles: every phase needed is tabulated as
/// a numerator over one common denominator, so each triple costs four lookups.
/// Returns `None` when a phase is a float or the denominators overflow.
fn exact_box_check(omega: &PhaseCocycle, radius: i64) -> Option<CocycleCheck> {
    let n = omega.n();
    let small = box_points(n, radius);
    let big = box_points(n, 2 * radius);
    let zero = vec![0i64; n];
    let mut checker = Checker::new(omega);
    for x in &small {
        if let Some(w) = checker.check(x, &zero, &zero) {
            return Some(CocycleCheck {
                pass: false,
                checked: checker.checked,
                witness: Some(w),
            });
        }
    }
    // first pass: common denominator of every tabulated phase
    let mut den: i64 = 1;
    for u in &big {
        for z in &small {
            for ph in [omega.phase(u, z), omega.phase(z, u)] {
                match ph {
                    Phase::Exact { den: d, .. } => den = i128::from(den).lcm(&i128::from(d)).try_into().ok()?,
                    Phase::Float(_) => return None,
                }
            }
        }
    }
    let lift = |ph: Phase| match ph {
        Phase::Exact { num, den: d } => num * (den / d),
        Phase::Float(_) => unreachable!("checked in the first pass"),
    };
    // big_by_small[u][z] = ω(u, z), small_by_big[x][v] = ω(x, v)
    let (nb, ns) = (big.len(), small.len());
    let mut big_by_small = vec![0i64; nb * ns];
    let mut small_by_big = vec![0i64; ns * nb];
    for (iu, u) in big.iter().enumerate() {
        for (iz, z) in small.iter().enumerate() {
            big_by_small[iu * ns + iz] = lift(omega.phase(u, z));
            small_by_big[iz * nb + iu] = lift(omega.phase(z, u));
        }
    }
    // linear part of the big-box index, so idx(a + b) = lin(a) + lin(b) + offset
    let side = 4 * radius + 1;
    let lin: Vec<i64> = small.iter().map(|v| v.iter().fold(0, |acc, &c| acc * side + c)).collect();
    let offset = (0..n).fold(0i64, |acc, _| acc * side + 2 * radius);
    let mut checked = 0u64;
    for ix in 0..ns {
        let row_x = &small_by_big[ix * nb..(ix + 1) * nb];
        for iy in 0..ns {
            let xy = (lin[ix] + lin[iy] + offset) as usize;
            let a = row_x[(lin[iy] + offset) as usize];
            let row_xy = &big_by_small[xy * ns..(xy + 1) * ns];
            let row_y = &small_by_big[iy * nb..(iy + 1) * nb];
            for iz in 0..ns {
                let yz = (lin[iy] + lin[iz] + offset) as usize;
                let d = a + row_xy[iz] - row_x[yz] - row_y[(lin[iz] + offset) as usize];
                checked += 1;
                if d.rem_euclid(den) != 0 {
                    let witness = checker.check(&small[ix], &small[iy], &small[iz]);
                    return Some(CocycleCheck {
                        pass: false,
                        checked,
                        witness,
                    });
                }
            }
        }
    }
    Some(CocycleCheck {
        pass: true,
        checked,
        witness: None,
    })
}

/// The cohomologous cocycle `f(x) + f(y) - f(x+y) + ω(x, y)`.
pub fn twist_by_coboundary(omega: &PhaseCocycle, f: &Coboundary) -> Result<PhaseCocycle, CocycleError> {
    if f.n() != omega.n() {
        return Err(CocycleError::Dimension {
            expected: omega.n(),
            got: f.n(),
        });
    }
    let at_zero = f.eval(&vec![0; f.n()]);
    if !at_zero.is_zero() {
        return Err(CocycleError::NonzeroAtIdentity(at_zero));
    }
    Ok(PhaseCocycle::Twisted {
        base: Box::new(omega.clone()),
        f: f.clone(),
    })
}

/// `θ_jk mod 1` for `j < k`, lexicographic.
pub fn cohomology_invariant(theta: &SkewMatrix) -> Result<Vec<Phase>, CocycleError> {
    theta.upper().iter().map(Phase::from_scalar).collect()
}

/// `ω(e_j, e_k) - ω(e_k, e_j)` for `j < k`: the class of any cocycle in the
/// same coordinates as [`cohomology_invariant`].
pub fn cocycle_class(omega: &PhaseCocycle) -> Vec<Phase> {
    let n = omega.n();
    let unit = |j: usize| {
        let mut e = vec![0; n];
        e[j] = 1;
        e
    };
    let mut out = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let (ej, ek) = (unit(j), unit(k));
            out.push(omega.phase(&ej, &ek).sub(omega.phase(&ek, &ej)));
        }
    }
    out
}

/// The dual parameter
/// `[[γ₁₁⁻¹, -γ₁₁⁻¹γ₁₂], [γ₂₁γ₁₁⁻¹, γ₂₂ - γ₂₁γ₁₁⁻¹γ₁₂]]` as a plain matrix.
pub fn dual_parameter_blocks(gamma: &SkewMatrix) -> Result<Matrix, CocycleError> {
    let [g11, g12, g21, g22] = gamma.blocks()?;
    let inv = match g11.inverse() {
        Ok(m) => m,
        Err(MatrixError::Singular) => return Err(CocycleError::SingularBlock),
        Err(e) => return Err(e.into()),
    };
    if gamma.backend() == Backend::Float {
        let pf = crate::skewmat::pfaffian_f64(&g11.to_f64()?);
        if pf.abs() < 1e-300 || !inv.to_f64()?.iter().all(|v| v.is_finite()) {
            return Err(CocycleError::SingularBlock);
        }
    }
    let top_right = inv.mul(&g12)?.neg();
    let bottom_left = g21.mul(&inv)?;
    let bottom_right = g22.sub(&g21.mul(&inv)?.mul(&g12)?)?;
    Ok(Matrix::from_blocks(&[vec![&inv, &top_right], vec![&bottom_left, &bottom_right]])?)
}

/// [`dual_parameter_blocks`] as a skew matrix with the same split. Float
/// results are projected onto the skew part to absorb rounding.
pub fn dual_parameter(gamma: &SkewMatrix) -> Result<SkewMatrix, CocycleError> {
    let split = gamma.split().ok_or_else(|| MatrixError::Dimension("dual parameter needs a (p, q) split".into()))?;
    let m = dual_parameter_blocks(gamma)?;
    let skew = match gamma.backend() {
        Backend::Float => {
            let f = m.to_f64()?;
            SkewMatrix::from_f64(&((&f - f.transpose()) * 0.5))?
        }
        _ => SkewMatrix::new(m)?,
    };
    Ok(skew.with_split(split.p, split.q)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, ratio};

    fn theta2(t: Rational) -> SkewMatrix {
        SkewMatrix::from_upper(2, Backend::Rational, vec![Scalar::Rational(t)]).unwrap()
    }

    #[test]
    fn quarter_phase() {
        let th = theta2(ratio(1, 2));
        assert_eq!(cocycle_phase(&th, &[1, 0], &[0, 1]).unwrap(), Phase::exact(1, 4).unwrap());
        assert_eq!(cocycle_phase(&th, &[0, 1], &[1, 0]).unwrap(), Phase::exact(3, 4).unwrap());
        assert!(cocycle_phase(&th, &[0, 0], &[5, 3]).unwrap().is_zero());
    }

    #[test]
    fn dimension_mismatch() {
        let th = theta2(rat(1));
        assert_eq!(
            cocycle_phase(&th, &[1], &[0, 1]),
            Err(CocycleError::Dimension { expected: 2, got: 1 })
        );
    }

    #[test]
    fn phase_arithmetic() {
        let a = Phase::exact(3, 4).unwrap();
        let b = Phase::exact(1, 2).unwrap();
        assert_eq!(a.add(b), Phase::exact(1, 4).unwrap());
        assert_eq!(a.neg(), Phase::exact(1, 4).unwrap());
        assert_eq!(Phase::exact(-5, 4).unwrap().to_string(), "3/4");
        assert!(Phase::float(0.9999999999999).is_zero());
        assert_eq!(Phase::float(2.25), Phase::float(0.25));
    }

    #[test]
    fn invariant_reduces_mod_one() {
        let inv = cohomology_invariant(&theta2(ratio(5, 4))).unwrap();
        assert_eq!(inv, vec![Phase::exact(1, 4).unwrap()]);
        let zero = cohomology_invariant(&SkewMatrix::zero(4, Backend::Rational)).unwrap();
        assert!(zero.iter().all(Phase::is_zero));
        assert_eq!(zero.len(), 6);
    }

    #[test]
    fn corrupted_table_fails_with_witness() {
        let th = SkewMatrix::from_upper(2, Backend::Rational, vec![Scalar::Rational(ratio(1, 3))]).unwrap();
        let mut overrides = HashMap::new();
        overrides.insert((vec![1, 0], vec![0, 1]), Phase::exact(1, 7).unwrap());
        let bad = PhaseCocycle::from_matrix(&th).unwrap().with_overrides(overrides);
        let report = verify_cocycle_box(&bad, 1).unwrap();
        assert!(!report.pass);
        let w = report.witness.unwrap();
        assert_eq!(w.violation, Violation::Identity);
        assert!(!w.defect.is_zero());
    }

    #[test]
    fn tabulated_box_matches_direct_iteration() {
        let th = SkewMatrix::from_upper(
            3,
            Backend::Rational,
            vec![Scalar::Rational(ratio(1, 3)), Scalar::Rational(ratio(-2, 5)), Scalar::Rational(ratio(3, 7))],
        )
        .unwrap();
        let base = PhaseCocycle::from_matrix(&th).unwrap();
        let mut overrides = HashMap::new();
        overrides.insert((vec![0, 1, -1], vec![1, 0, 1]), Phase::exact(2, 9).unwrap());
        for omega in [base.clone(), base.with_overrides(overrides)] {
            let points = box_points(3, 1);
            let mut triples = Vec::new();
            for x in &points {
                for y in &points {
                    for z in &points {
                        triples.push((x.as_slice(), y.as_slice(), z.as_slice()));
                    }
                }
            }
            let direct = verify_cocycle(&omega, triples).unwrap();
            let fast = verify_cocycle_box(&omega, 1).unwrap();
            assert_eq!(fast.pass, direct.pass);
            assert_eq!(fast.checked, direct.checked);
            assert_eq!(fast.witness, direct.witness);
        }
    }

    #[test]
    fn unit_failure_is_reported() {
        let th = theta2(rat(0));
        let mut overrides = HashMap::new();
        overrides.insert((vec![1, 1], vec![0, 0]), Phase::exact(1, 2).unwrap());
        let bad = PhaseCocycle::from_matrix(&th).unwrap().with_overrides(overrides);
        let (x, o) = ([1i64, 1], [0i64, 0]);
        let w = verify_cocycle(&bad, [(&x[..], &o[..], &o[..])]).unwrap().witness.unwrap();
        assert_eq!(w.violation, Violation::UnitRight);
        assert_eq!(w.x, vec![1, 1]);
    }

    #[test]
    fn twist_rejects_nonzero_at_identity() {
        let omega = PhaseCocycle::from_matrix(&theta2(rat(1))).unwrap();
        let f = Coboundary::from_fn(2, "const", |_| Phase::exact(1, 3).unwrap());
        assert!(matches!(twist_by_coboundary(&omega, &f), Err(CocycleError::NonzeroAtIdentity(_))));
    }

    #[test]
    fn twist_by_zero_is_identity_and_inverse_restores() {
        let th = SkewMatrix::from_upper(3, Backend::Rational, vec![Scalar::Rational(ratio(1, 3)), Scalar::Rational(ratio(2, 5)), Scalar::Rational(ratio(-1, 7))]).unwrap();
        let omega = PhaseCocycle::from_matrix(&th).unwrap();
        let s = Matrix::from_fn(3, 3, Backend::Rational, |i, j| Scalar::Rational(ratio((i + j + 1) as i64, 2))).unwrap();
        let f = Coboundary::quadratic(&s).unwrap();
        let id = twist_by_coboundary(&omega, &Coboundary::zero(3)).unwrap();
        let there = twist_by_coboundary(&omega, &f).unwrap();
        let back = twist_by_coboundary(&there, &f.negated()).unwrap();
        for x in box_points(3, 1) {
            for y in box_points(3, 1) {
                assert_eq!(id.phase(&x, &y), omega.phase(&x, &y));
                assert_eq!(back.phase(&x, &y), omega.phase(&x, &y));
            }
        }
        assert_eq!(cocycle_class(&there), cohomology_invariant(&th).unwrap());
    }

    #[test]
    fn dual_parameter_two_by_two() {
        let g = theta2(ratio(2, 3)).with_split(1, 0).unwrap();
        let d = dual_parameter(&g).unwrap();
        assert_eq!(d.get(0, 1), &Scalar::Rational(ratio(-3, 2)));
        assert_eq!(d.get(1, 0), &Scalar::Rational(ratio(3, 2)));
    }

    #[test]
    fn dual_parameter_singular() {
        let g = SkewMatrix::zero(3, Backend::Rational).with_split(1, 1).unwrap();
        assert_eq!(dual_parameter(&g), Err(CocycleError::SingularBlock));
    }

    #[test]
    fn dual_parameter_needs_split() {
        assert!(matches!(dual_parameter(&theta2(rat(1))), Err(CocycleError::Matrix(_))));
    }
}
