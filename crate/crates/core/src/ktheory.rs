//! Generator catalogs for `K₀` of the noncommutative torus: one projective
//! module per even subset of coordinates, with its expected trace.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::bimodule::{build_embeddings, module_trace_numeric, BimoduleError, GaussianAtom, ModuleElement, TraceEstimate};
use crate::elliott::{basis_certificate, BasisCertificate, ElliottError};
use crate::field::{build_path, FieldError};
use crate::linalg::MatrixError;
use crate::scalar::{Backend, Scalar};
use crate::skewmat::{even_subsets, signed_permutation_det, SkewMatrix, Subset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KTheoryError {
    #[error("n must be at least 1")]
    EmptyDimension,
    #[error("no signed permutation moves {0} to the leading block")]
    NoRotation(String),
    #[error("numeric cross-check needs a nonempty subset with p' <= 2, got {0}")]
    UnsupportedDescriptor(String),
    #[error("minor on {subset} is {value}, expected > 0 (apply the positivity shift first)")]
    NonPositiveMinor { subset: String, value: String },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Elliott(#[from] ElliottError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Bimodule(#[from] BimoduleError),
}

/// `2^{n-1}`.
pub fn k0_rank(n: usize) -> Result<usize, KTheoryError> {
    if n == 0 {
        return Err(KTheoryError::EmptyDimension);
    }
    Ok(1 << (n - 1))
}

/// One generator of `K₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorDescriptor {
    pub subset: Subset,
    /// `(p′, q′)` with `|S| = 2p′`, `q′ = n − 2p′`.
    pub shape: (usize, usize),
    /// 1-based images; the first `2p′` of them list `S`.
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
    /// `PᵀθP` for the signed permutation, carrying the `(p′, q′)` split.
    pub rotated: SkewMatrix,
    pub expected_trace: Scalar,
    pub label: String,
}

impl GeneratorDescriptor {
    pub fn is_trivial(&self) -> bool {
        self.subset.is_empty()
    }

    /// `det P`, which is also `pf(PᵀθP) / pf(θ)` for even `n`.
    pub fn rotation_det(&self) -> i8 {
        signed_permutation_det(&self.perm, &self.signs)
    }

    pub fn shape_name(&self) -> String {
        match self.shape {
            (0, _) => "free rank-one module".to_string(),
            (p, 0) => format!("S(R^{p})"),
            (p, q) => format!("S(R^{p} x Z^{q})"),
        }
    }
}

/// Permutations of `1..=n` in lexicographic order whose first `k` entries are
/// exactly `lead` as a set.
fn leading_permutations(n: usize, lead: &[usize]) -> Vec<Vec<usize>> {
    fn perms(items: &[usize]) -> Vec<Vec<usize>> {
        if items.is_empty() {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for (i, &x) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut tail in perms(&rest) {
                tail.insert(0, x);
                out.push(tail);
            }
        }
        out
    }
    let rest: Vec<usize> = (1..=n).filter(|i| !lead.contains(i)).collect();
    let heads = perms(lead);
    let tails = perms(&rest);
    heads
        .iter()
        .flat_map(|h| tails.iter().map(move |t| h.iter().chain(t).copied().collect()))
        .collect()
}

/// Sign vectors of length `n` in lexicographic order with `+` before `-`.
fn sign_vectors(n: usize) -> impl Iterator<Item = Vec<i8>> {
    (0u64..1 << n).map(move |bits| (0..n).map(|i| if bits >> (n - 1 - i) & 1 == 1 { -1 } else { 1 }).collect())
}

/// Lexicographically least signed permutation moving `S` to the leading block
/// with leading pfaffian equal to the minor on `S`.
pub fn find_rotation(theta: &SkewMatrix, subset: &Subset) -> Result<(Vec<usize>, Vec<i8>, SkewMatrix), KTheoryError> {
    let n = theta.n();
    let minor = theta.pfaffian_minor(subset)?;
    let k = subset.len();
    let lead = Subset::new((1..=k).collect());
    for perm in leading_permutations(n, subset.indices()) {
        for signs in sign_vectors(n) {
            let rotated = theta.signed_permutation_congruence(&perm, &signs)?;
            if rotated.pfaffian_minor(&lead)? == minor {
                return Ok((perm, signs, rotated));
            }
        }
    }
    Err(KTheoryError::NoRotation(subset.to_string()))
}

/// One descriptor per even subset, in graded-lexicographic order.
pub fn generator_catalog(theta: &SkewMatrix) -> Result<Vec<GeneratorDescriptor>, KTheoryError> {
    let n = theta.n();
    k0_rank(n)?;
    even_subsets(n)
        .into_iter()
        .map(|subset| {
            let p = subset.len() / 2;
            let (perm, signs, rotated) = find_rotation(theta, &subset)?;
            let label = if subset.is_empty() {
                "trivial".to_string()
            } else {
                format!("E^theta_{}", subset.label())
            };
            Ok(GeneratorDescriptor {
                expected_trace: theta.pfaffian_minor(&subset)?,
                shape: (p, n - 2 * p),
                rotated: rotated.with_split(p, n - 2 * p)?,
                perm,
                signs,
                label,
                subset,
            })
        })
        .collect()
}

/// Serializable summary of one generator.
#[derive(Debug, Clone, Serialize)]
pub struct GeneratorSummary {
    pub label: String,
    pub subset: String,
    pub module: String,
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
    pub trace: String,
}

impl From<&GeneratorDescriptor> for GeneratorSummary {
    fn from(d: &GeneratorDescriptor) -> Self {
        GeneratorSummary {
            label: d.label.clone(),
            subset: d.subset.to_string(),
            module: d.shape_name(),
            perm: d.perm.clone(),
            signs: d.signs.clone(),
            trace: d.expected_trace.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisReport {
    pub n: usize,
    pub k0_rank: usize,
    pub generators: Vec<GeneratorSummary>,
    pub certificate: BasisCertificate,
    pub pass: bool,
}

impl BasisReport {
    /// Plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "K0 rank for n = {}: {}", self.n, self.k0_rank);
        for g in &self.generators {
            let _ = writeln!(s, "  {:<14} {:<22} trace = {}", g.label, g.module, g.trace);
        }
        let c = &self.certificate;
        let _ = writeln!(s, "rank of traces over Q: {} of {}", c.rank, c.expected_rank);
        if let Some(w) = &c.dependent_witness {
            let _ = writeln!(s, "dependent generator: {w}");
        }
        if let Some(w) = &c.trace_mismatch {
            let _ = writeln!(s, "trace mismatch at: {w}");
        }
        if self.pass {
            let _ = writeln!(
                s,
                "The traces are independent at the totally irrational parameter, so these modules form a basis there; \
                 the continuous field carries the basis to every fiber."
            );
        }
        let _ = writeln!(s, "{}", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

/// Catalog traces checked against the trace-range generators.
pub fn basis_report(theta: &SkewMatrix) -> Result<BasisReport, KTheoryError> {
    let catalog = generator_catalog(theta)?;
    let traces: Vec<(Subset, Scalar)> = catalog.iter().map(|d| (d.subset.clone(), d.expected_trace.clone())).collect();
    let certificate = basis_certificate(theta, &traces)?;
    let k0 = k0_rank(theta.n())?;
    Ok(BasisReport {
        n: theta.n(),
        k0_rank: k0,
        pass: certificate.pass && catalog.len() == k0,
        generators: catalog.iter().map(GeneratorSummary::from).collect(),
        certificate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Crosscheck {
    pub label: String,
    pub expected: f64,
    pub trace: f64,
    pub deviation: f64,
    pub estimate: Option<TraceEstimate>,
}

/// Numeric module trace at the rotated parameter against the expected minor.
/// The fiber comes from a path starting at `J₀ ⊕ 0`.
pub fn numeric_trace_crosscheck(descriptor: &GeneratorDescriptor, window: i64) -> Result<Crosscheck, KTheoryError> {
    if descriptor.is_trivial() {
        return Ok(Crosscheck {
            label: descriptor.label.clone(),
            expected: 1.0,
            trace: 1.0,
            deviation: 0.0,
            estimate: None,
        });
    }
    let (p, q) = descriptor.shape;
    if p > 2 {
        return Err(KTheoryError::UnsupportedDescriptor(descriptor.subset.to_string()));
    }
    let expected = descriptor.expected_trace.to_float().map_err(MatrixError::from)?;
    if !(expected > 0.0) {
        return Err(KTheoryError::NonPositiveMinor {
            subset: descriptor.subset.to_string(),
            value: descriptor.expected_trace.to_string(),
        });
    }
    let theta = descriptor.rotated.to_float()?;
    let n = theta.n();
    let mut psi = DMatrix::zeros(n, n);
    for k in 0..p {
        psi[(2 * k, 2 * k + 1)] = 1.0;
        psi[(2 * k + 1, 2 * k)] = -1.0;
    }
    let psi = SkewMatrix::from_f64(&psi)?;
    let path = build_path(&psi, &theta, p, q)?;
    let fiber = path.sample_fiber(1.0)?;
    let maps = build_embeddings(&fiber.gamma, &fiber.t11)?;
    let f = ModuleElement::atom(GaussianAtom::unit(DVector::zeros(p), DVector::zeros(p), DMatrix::identity(p, p), vec![0; q]));
    let estimate = module_trace_numeric(&f, &maps, window)?;
    Ok(Crosscheck {
        label: descriptor.label.clone(),
        expected,
        trace: estimate.trace,
        deviation: (estimate.trace - expected).abs(),
        estimate: Some(estimate),
    })
}

/// Symbolic parameter matrix `θ` with entries `t12, t13, …`.
pub fn symbolic_theta(n: usize) -> SkewMatrix {
    SkewMatrix::symbolic(n, "t")
}

/// Whether every nonempty minor is positive (exact backends only).
pub fn minors_positive(theta: &SkewMatrix) -> bool {
    theta.backend() != Backend::Polynomial
        && theta
            .all_pfaffian_minors()
            .iter()
            .filter(|(s, _)| !s.is_empty())
            .all(|(_, v)| v.is_positive().unwrap_or(false))
}
