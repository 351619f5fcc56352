//! Heisenberg bimodule over `M = ℝᵖ × ℤ^q` at one fiber, on finite sums of
//! Gaussian atoms.
//!
//! Points of `G = M × M̂` are `(m, μ, k, τ)` with `m, μ ∈ ℝᵖ`, `k ∈ ℤ^q`,
//! `τ ∈ ℝ^q` (a lift of the torus coordinate). The Weyl operator
//!
//! `W(g) f(x, j) = e(-(m·μ + k·τ)/2) e(x·μ + j·τ) f(x - m, j - k)`
//!
//! satisfies `W(a) W(b) = e(-a·Jb/2) W(a + b)`. The right `A`-action is
//! `f U_l = W(T l) f` and the left `B`-action is `V_l f = W(-S l) f`.
//! Torus coordinates are reduced mod 1 only where they pair with `j`; the
//! `J′` phase uses the lift, which keeps the composition law exact.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::field::j0_f64;
use crate::linalg::MatrixError;
use crate::scalar::Backend;
use crate::skewmat::{perfect_shuffle, pfaffian_f64, SkewMatrix};

/// Relative size below which coefficients of `_B⟨f, f⟩^{-1/2}` are dropped.
const PRUNE: f64 = 1e-17;

/// Largest accepted `‖T₁₁ᵀ J₀ T₁₁ − γ₁₁‖_max`.
pub const EMBEDDING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BimoduleError {
    #[error("parameter matrix needs a (p, q) split")]
    MissingSplit,
    #[error("factor residual {0:e} exceeds the embedding tolerance")]
    Residual(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("truncated inner product is not positive definite (min eigenvalue {min:e}, max {max:e}); enlarge the window")]
    NotPositive { min: f64, max: f64 },
    #[error("module element is zero")]
    ZeroElement,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// `e(t) = exp(2πit)`.
pub fn e(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * t)
}

/// A point `(m, μ, k, τ)` of `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergPoint {
    pub m: DVector<f64>,
    pub mu: DVector<f64>,
    pub k: Vec<i64>,
    pub tau: DVector<f64>,
}

impl HeisenbergPoint {
    /// `g·J′g = m·μ + k·τ`.
    pub fn j_prime_form(&self) -> f64 {
        self.m.dot(&self.mu) + self.k.iter().zip(self.tau.iter()).map(|(&k, t)| k as f64 * t).sum::<f64>()
    }

    pub fn negate(&self) -> HeisenbergPoint {
        HeisenbergPoint {
            m: -&self.m,
            mu: -&self.mu,
            k: self.k.iter().map(|k| -k).collect(),
            tau: -&self.tau,
        }
    }
}

/// The maps `T`, `S : ℤⁿ → G` and the forms `J`, `J′` at one fiber.
#[derive(Debug, Clone)]
pub struct EmbeddingMaps {
    pub p: usize,
    pub q: usize,
    /// Fiber parameter `γ`.
    pub gamma: DMatrix<f64>,
    /// `T₁₁` in the `[[0, I], [-I, 0]]` coordinates.
    pub t11: DMatrix<f64>,
    /// `(2p + 2q) x n`.
    pub t: DMatrix<f64>,
    /// `(2p + 2q) x n`.
    pub s: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub j_prime: DMatrix<f64>,
    /// `|det T₁₁| = |pf γ₁₁|`.
    pub covolume: f64,
}

/// Assemble `T`, `S`, `J`, `J′` from `γ` and a factor with `T₁₁ᵀ J₀ T₁₁ = γ₁₁`
/// for the block-diagonal `J₀` (as returned by [`crate::field::skew_factorize`]).
pub fn build_embeddings(gamma: &SkewMatrix, t11: &DMatrix<f64>) -> Result<EmbeddingMaps, BimoduleError> {
    let split = gamma.split().ok_or(BimoduleError::MissingSplit)?;
    let (p, q) = (split.p, split.q);
    let k = 2 * p;
    let n = k + q;
    let g = gamma.to_f64()?;
    if t11.nrows() != k || t11.ncols() != k {
        return Err(BimoduleError::Dimension(format!("factor must be {k}x{k}")));
    }
    let g11 = g.view((0, 0), (k, k)).into_owned();
    let residual = (t11.transpose() * j0_f64(p) * t11 - &g11).amax();
    if residual > EMBEDDING_TOL {
        return Err(BimoduleError::Residual(residual));
    }
    let t_std = perfect_shuffle(p) * t11;
    let j_std = SkewMatrix::j0_standard(p, Backend::Float).to_f64()?;
    let g21 = g.view((k, 0), (q, k)).into_owned();
    let mut t32 = g.view((k, k), (q, q)).into_owned();
    for a in 0..q {
        for b in 0..a {
            t32[(a, b)] = 0.0;
        }
    }
    let big = k + 2 * q;
    let mut t = DMatrix::zeros(big, n);
    t.view_mut((0, 0), (k, k)).copy_from(&t_std);
    for a in 0..q {
        t[(k + a, k + a)] = 1.0;
    }
    t.view_mut((k + q, 0), (q, k)).copy_from(&g21);
    t.view_mut((k + q, k), (q, q)).copy_from(&t32);

    let inv_t = t_std.transpose().try_inverse().ok_or(MatrixError::Singular)?;
    let s11 = &j_std * inv_t;
    let mut s = DMatrix::zeros(big, n);
    s.view_mut((0, 0), (k, k)).copy_from(&s11);
    s.view_mut((0, k), (k, q)).copy_from(&(-&s11 * g21.transpose()));
    for a in 0..q {
        s[(k + a, k + a)] = 1.0;
    }
    s.view_mut((k + q, k), (q, q)).copy_from(&t32.transpose());

    let mut j = DMatrix::zeros(big, big);
    j.view_mut((0, 0), (k, k)).copy_from(&j_std);
    for a in 0..q {
        j[(k + a, k + q + a)] = 1.0;
        j[(k + q + a, k + a)] = -1.0;
    }
    let j_prime = j.map(|v| if v < 0.0 { 0.0 } else { v });
    Ok(EmbeddingMaps {
        p,
        q,
        gamma: g,
        covolume: t_std.determinant().abs(),
        t11: t_std,
        t,
        s,
        j,
        j_prime,
    })
}

impl EmbeddingMaps {
    pub fn n(&self) -> usize {
        2 * self.p + self.q
    }

    fn point(&self, v: DVector<f64>, l: &[i64]) -> HeisenbergPoint {
        let (p, q) = (self.p, self.q);
        HeisenbergPoint {
            m: v.rows(0, p).into_owned(),
            mu: v.rows(p, p).into_owned(),
            // the I_q rows copy the last q coordinates of l
            k: l[2 * p..].to_vec(),
            tau: v.rows(2 * p + q, q).into_owned(),
        }
    }

    fn as_vector(l: &[i64]) -> DVector<f64> {
        DVector::from_iterator(l.len(), l.iter().map(|&x| x as f64))
    }

    /// `T(l)`.
    pub fn t_point(&self, l: &[i64]) -> HeisenbergPoint {
        self.point(&self.t * Self::as_vector(l), l)
    }

    /// `S(l)`.
    pub fn s_point(&self, l: &[i64]) -> HeisenbergPoint {
        self.point(&self.s * Self::as_vector(l), l)
    }

    /// Parameter of the twisted algebra acting on the right: `TᵀJT`.
    pub fn a_parameter(&self) -> DMatrix<f64> {
        self.t.transpose() * &self.j * &self.t
    }

    /// Parameter of the twisted algebra acting on the left: `-SᵀJS`.
    pub fn b_parameter(&self) -> DMatrix<f64> {
        -(self.s.transpose() * &self.j * &self.s)
    }

    /// `TᵀJS`; integral entries make the two actions commute.
    pub fn mixed_form(&self) -> DMatrix<f64> {
        self.t.transpose() * &self.j * &self.s
    }
}

/// `c · exp(-π(x-a)ᵀW(x-a) + 2πi b·x) · δ(j = k)` on `ℝᵖ × ℤ^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAtom {
    pub coeff: Complex64,
    pub center: DVector<f64>,
    pub freq: DVector<f64>,
    pub width: DMatrix<f64>,
    pub lattice: Vec<i64>,
}

impl GaussianAtom {
    /// Atom with unit `L²` norm.
    pub fn unit(center: DVector<f64>, freq: DVector<f64>, width: DMatrix<f64>, lattice: Vec<i64>) -> Self {
        let coeff = Complex64::new((width.determinant() * 2f64.powi(width.nrows() as i32)).powf(0.25), 0.0);
        GaussianAtom {
            coeff,
            center,
            freq,
            width,
            lattice,
        }
    }

    pub fn eval(&self, x: &DVector<f64>, j: &[i64]) -> Complex64 {
        if j != self.lattice.as_slice() {
            return Complex64::new(0.0, 0.0);
        }
        let d = x - &self.center;
        let quad = d.dot(&(&self.width * &d));
        self.coeff * Complex64::from_polar((-PI * quad).exp(), 2.0 * PI * self.freq.dot(x))
    }

    /// `W(g)` applied to the atom.
    pub fn weyl(&self, g: &HeisenbergPoint) -> GaussianAtom {
        let lattice: Vec<i64> = self.lattice.iter().zip(&g.k).map(|(a, b)| a + b).collect();
        let torus: f64 = lattice.iter().zip(g.tau.iter()).map(|(&j, t)| j as f64 * t.rem_euclid(1.0)).sum();
        let phase = -g.j_prime_form() / 2.0 - self.freq.dot(&g.m) + torus;
        GaussianAtom {
            coeff: self.coeff * e(phase),
            center: &self.center + &g.m,
            freq: &self.freq + &g.mu,
            width: self.width.clone(),
            lattice,
        }
    }

    /// `∫ self · conj(other)` over `ℝᵖ × ℤ^q`, from
    /// `∫ exp(-πxᵀAx + 2πhᵀx) dx = det(A)^{-1/2} exp(π hᵀA⁻¹h)` with complex `h`.
    pub fn l2_inner(&self, other: &GaussianAtom) -> Complex64 {
        if self.lattice != other.lattice {
            return Complex64::new(0.0, 0.0);
        }
        let p = self.center.len();
        if p > SMALL {
            return self.l2_inner_general(other);
        }
        let (w1, w2) = (&self.width, &other.width);
        let mut a = [0.0; SMALL * SMALL];
        let mut h = [Complex64::new(0.0, 0.0); SMALL];
        let mut constant = 0.0;
        for i in 0..p {
            let mut re = 0.0;
            for j in 0..p {
                a[i * p + j] = w1[(i, j)] + w2[(i, j)];
                re += w1[(i, j)] * self.center[j] + w2[(i, j)] * other.center[j];
                constant += self.center[i] * w1[(i, j)] * self.center[j] + other.center[i] * w2[(i, j)] * other.center[j];
            }
            h[i] = Complex64::new(re, self.freq[i] - other.freq[i]);
        }
        // Cholesky A = LLᵀ, then hᵀA⁻¹h = |L⁻¹h|² without conjugation
        let mut l = [0.0; SMALL * SMALL];
        let mut det = 1.0;
        for i in 0..p {
            for j in 0..=i {
                let mut sum = a[i * p + j];
                for k in 0..j {
                    sum -= l[i * p + k] * l[j * p + k];
                }
                if i == j {
                    let d = sum.sqrt();
                    l[i * p + i] = d;
                    det *= sum;
                } else {
                    l[i * p + j] = sum / l[j * p + j];
                }
            }
        }
        let mut y = [Complex64::new(0.0, 0.0); SMALL];
        let mut quad = Complex64::new(0.0, 0.0);
        for i in 0..p {
            let mut v = h[i];
            for k in 0..i {
                v -= y[k] * l[i * p + k];
            }
            y[i] = v / l[i * p + i];
            quad += y[i] * y[i];
        }
        let magnitude = det.powf(-0.5) * (PI * (quad.re - constant)).exp();
        self.coeff * other.coeff.conj() * Complex64::from_polar(magnitude, PI * quad.im)
    }

    fn l2_inner_general(&self, other: &GaussianAtom) -> Complex64 {
        let (w1, w2) = (&self.width, &other.width);
        let a = w1 + w2;
        let h_re = w1 * &self.center + w2 * &other.center;
        let h_im = &self.freq - &other.freq;
        let a_inv = a.clone().try_inverse().expect("sum of SPD widths is invertible");
        let re = h_re.dot(&(&a_inv * &h_re)) - h_im.dot(&(&a_inv * &h_im));
        let im = 2.0 * h_re.dot(&(&a_inv * &h_im));
        let constant = self.center.dot(&(w1 * &self.center)) + other.center.dot(&(w2 * &other.center));
        let magnitude = a.determinant().powf(-0.5) * (PI * (re - constant)).exp();
        self.coeff * other.coeff.conj() * Complex64::from_polar(magnitude, PI * im)
    }
}

/// Real dimension up to which atom integrals avoid heap allocation.
const SMALL: usize = 4;

/// A finite sum of Gaussian atoms: an element of `𝒮(ℝᵖ × ℤ^q)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModuleElement {
    pub atoms: Vec<GaussianAtom>,
}

impl ModuleElement {
    pub fn new(atoms: Vec<GaussianAtom>) -> Self {
        ModuleElement { atoms }
    }

    pub fn zero() -> Self {
        ModuleElement { atoms: Vec::new() }
    }

    pub fn atom(a: GaussianAtom) -> Self {
        ModuleElement { atoms: vec![a] }
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.coeff == Complex64::new(0.0, 0.0))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ModuleElement {
            atoms: self
                .atoms
                .iter()
                .map(|a| GaussianAtom {
                    coeff: a.coeff * c,
                    ..a.clone()
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &ModuleElement) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        ModuleElement { atoms }
    }

    pub fn eval(&self, x: &DVector<f64>, j: &[i64]) -> Complex64 {
        self.atoms.iter().map(|a| a.eval(x, j)).sum()
    }

    pub fn weyl(&self, g: &HeisenbergPoint) -> Self {
        ModuleElement {
            atoms: self.atoms.iter().map(|a| a.weyl(g)).collect(),
        }
    }

    /// `⟨self, other⟩ = ∫ self · conj(other)`.
    pub fn l2_inner(&self, other: &ModuleElement) -> Complex64 {
        self.atoms.iter().flat_map(|a| other.atoms.iter().map(move |b| a.l2_inner(b))).sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_inner(self).re
    }
}

/// Which twisted group algebra an [`AlgebraElement`] lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

/// A finitely supported sequence on `ℤⁿ` with its cocycle parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    pub side: Side,
    pub parameter: DMatrix<f64>,
    pub window: i64,
    pub coeffs: Vec<(Vec<i64>, Complex64)>,
}

impl AlgebraElement {
    pub fn get(&self, l: &[i64]) -> Complex64 {
        self.coeffs
            .iter()
            .find(|(k, _)| k.as_slice() == l)
            .map(|(_, v)| *v)
            .unwrap_or_default()
    }

    pub fn to_map(&self) -> HashMap<Vec<i64>, Complex64> {
        self.coeffs.iter().cloned().collect()
    }

    /// `a*(l) = conj(a(-l))`; the cocycle factor `ω(l, -l)` is trivial.
    pub fn adjoint(&self) -> AlgebraElement {
        let map = self.to_map();
        let coeffs = self
            .coeffs
            .iter()
            .map(|(l, _)| {
                let neg: Vec<i64> = l.iter().map(|x| -x).collect();
                (l.clone(), map.get(&neg).copied().unwrap_or_default().conj())
            })
            .collect();
        AlgebraElement {
            coeffs,
            ..self.clone()
        }
    }

    /// Largest coefficient on the boundary of the window; a tail indicator.
    pub fn boundary_max(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|(l, _)| l.iter().any(|x| x.abs() == self.window))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &AlgebraElement) -> f64 {
        let map = other.to_map();
        self.coeffs
            .iter()
            .map(|(l, v)| (v - map.get(l).copied().unwrap_or_default()).norm())
            .fold(0.0, f64::max)
    }
}

/// All `l` with `|l_i| ≤ half_widths[i]`, lexicographic.
pub fn window_points(half_widths: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for &h in half_widths {
        out = out
            .into_iter()
            .flat_map(|v| {
                (-h..=h).map(move |c| {
                    let mut w = v.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
    }
    out
}

/// `f U_l`.
pub fn act_a(f: &ModuleElement, l: &[i64], maps: &EmbeddingMaps) -> ModuleElement {
    f.weyl(&maps.t_point(l))
}

/// `V_l f`.
pub fn act_b(l: &[i64], f: &ModuleElement, maps: &EmbeddingMaps) -> ModuleElement {
    f.weyl(&maps.s_point(l).negate())
}

/// `f · a = Σ a(l) f U_l`.
pub fn right_multiply(f: &ModuleElement, a: &AlgebraElement, maps: &EmbeddingMaps) -> ModuleElement {
    let atoms = a
        .coeffs
        .iter()
        .flat_map(|(l, c)| act_a(f, l, maps).scale(*c).atoms)
        .collect();
    ModuleElement { atoms }
}

/// `b · f = Σ b(l) V_l f`.
pub fn left_multiply(b: &AlgebraElement, f: &ModuleElement, maps: &EmbeddingMaps) -> ModuleElement {
    let atoms = b
        .coeffs
        .iter()
        .flat_map(|(l, c)| act_b(l, f, maps).scale(*c).atoms)
        .collect();
    ModuleElement { atoms }
}

/// `⟨f, g⟩_A(l) = ∫ conj(f(x)) (W(-T l) g)(x) dx = ⟨g, f U_l⟩` for `‖l‖∞ ≤ window`.
pub fn inner_a(f: &ModuleElement, g: &ModuleElement, maps: &EmbeddingMaps, window: i64) -> AlgebraElement {
    inner_a_on(f, g, maps, window, &vec![window; maps.n()])
}

fn inner_a_on(f: &ModuleElement, g: &ModuleElement, maps: &EmbeddingMaps, window: i64, half: &[i64]) -> AlgebraElement {
    let coeffs = window_points(half)
        .into_iter()
        .map(|l| {
            let v = g.l2_inner(&act_a(f, &l, maps));
            (l, v)
        })
        .collect();
    AlgebraElement {
        side: Side::A,
        parameter: maps.a_parameter(),
        window,
        coeffs,
    }
}

/// `_B⟨f, g⟩(l) = ⟨f, V_l g⟩ / covolume` for `‖l‖∞ ≤ window`.
pub fn inner_b(f: &ModuleElement, g: &ModuleElement, maps: &EmbeddingMaps, window: i64) -> AlgebraElement {
    inner_b_on(f, g, maps, window, &vec![window; maps.n()])
}

fn inner_b_on(f: &ModuleElement, g: &ModuleElement, maps: &EmbeddingMaps, window: i64, half: &[i64]) -> AlgebraElement {
    let coeffs = window_points(half)
        .into_iter()
        .map(|l| {
            let v = f.l2_inner(&act_b(&l, g, maps)) / maps.covolume;
            (l, v)
        })
        .collect();
    AlgebraElement {
        side: Side::B,
        parameter: maps.b_parameter(),
        window,
        coeffs,
    }
}

/// Phase `e(l·P m / 2)` of the twisted product for parameter `P`.
fn product_phase(param: &DMatrix<f64>, l: &[i64], m: &[i64]) -> Complex64 {
    let (lv, mv) = (EmbeddingMaps::as_vector(l), EmbeddingMaps::as_vector(m));
    e(lv.dot(&(param * mv)) / 2.0)
}

/// Largest grid gap in the composition law over `l, m` in the box of the
/// given radius: `(f U_l) U_m = ω(l, m) f U_{l+m}` on side A and
/// `V_l V_m f = ω(l, m) V_{l+m} f` on side B.
pub fn composition_defect(f: &ModuleElement, maps: &EmbeddingMaps, side: Side, radius: i64, grid: &Grid) -> f64 {
    let points = window_points(&vec![radius; maps.n()]);
    let param = match side {
        Side::A => maps.a_parameter(),
        Side::B => maps.b_parameter(),
    };
    let mut worst = 0.0f64;
    for l in &points {
        for m in &points {
            let sum: Vec<i64> = l.iter().zip(m).map(|(a, b)| a + b).collect();
            let phase = product_phase(&param, l, m);
            let (lhs, rhs) = match side {
                Side::A => (act_a(&act_a(f, l, maps), m, maps), act_a(f, &sum, maps).scale(phase)),
                Side::B => (act_b(l, &act_b(m, f, maps), maps), act_b(&sum, f, maps).scale(phase)),
            };
            worst = worst.max(grid.max_diff(&lhs, &rhs, maps.p, maps.q));
        }
    }
    worst
}

/// Largest grid gap between `V_l (f U_m)` and `(V_l f) U_m` over the box.
pub fn commutation_defect(f: &ModuleElement, maps: &EmbeddingMaps, radius: i64, grid: &Grid) -> f64 {
    let points = window_points(&vec![radius; maps.n()]);
    let mut worst = 0.0f64;
    for l in &points {
        for m in &points {
            let lhs = act_b(l, &act_a(f, m, maps), maps);
            let rhs = act_a(&act_b(l, f, maps), m, maps);
            worst = worst.max(grid.max_diff(&lhs, &rhs, maps.p, maps.q));
        }
    }
    worst
}

/// Evaluation grid for pointwise comparisons: `points` values per real axis
/// on `[-radius, radius]`, lattice points in `lattice_box`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub radius: f64,
    pub points: usize,
    pub lattice_box: i64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            radius: 4.0,
            points: 41,
            lattice_box: 2,
        }
    }
}

impl Grid {
    fn real_points(&self, p: usize) -> Vec<DVector<f64>> {
        let axis: Vec<f64> = (0..self.points)
            .map(|i| -self.radius + 2.0 * self.radius * i as f64 / (self.points.max(2) - 1) as f64)
            .collect();
        let mut out = vec![vec![]];
        for _ in 0..p {
            out = out
                .into_iter()
                .flat_map(|v: Vec<f64>| {
                    axis.iter().map(move |&c| {
                        let mut w = v.clone();
                        w.push(c);
                        w
                    })
                })
                .collect();
        }
        out.into_iter().map(DVector::from_vec).collect()
    }

    /// Largest `|u - v|` over the grid.
    pub fn max_diff(&self, u: &ModuleElement, v: &ModuleElement, p: usize, q: usize) -> f64 {
        let lattice = window_points(&vec![self.lattice_box; q]);
        let mut worst = 0.0f64;
        for x in self.real_points(p) {
            for j in &lattice {
                worst = worst.max((u.eval(&x, j) - v.eval(&x, j)).norm());
            }
        }
        worst
    }
}

/// Result of [`imprimitivity_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ImprimitivityReport {
    pub window: i64,
    pub deviation: f64,
    pub scale: f64,
}

/// Max pointwise gap between `_B⟨f, g⟩ · h` and `f · ⟨g, h⟩_A`, both sums truncated to the window.
pub fn imprimitivity_check(
    f: &ModuleElement,
    g: &ModuleElement,
    h: &ModuleElement,
    maps: &EmbeddingMaps,
    window: i64,
    grid: &Grid,
) -> ImprimitivityReport {
    let left = left_multiply(&inner_b(f, g, maps, window), h, maps);
    let right = right_multiply(f, &inner_a(g, h, maps, window), maps);
    let deviation = grid.max_diff(&left, &right, maps.p, maps.q);
    let scale = grid.max_diff(&right, &ModuleElement::zero(), maps.p, maps.q);
    ImprimitivityReport { window, deviation, scale }
}

/// Result of [`module_trace_numeric`].
#[derive(Debug, Clone, Serialize)]
pub struct TraceEstimate {
    /// `⟨g, g⟩_A(0)` for the normalized `g`.
    pub trace: f64,
    /// `|pf γ₁₁|`.
    pub expected: f64,
    /// Sign of `pf γ₁₁`.
    pub pfaffian_sign: i8,
    /// Sign of `det T₁₁` in the embedding coordinates.
    pub orientation_sign: i8,
    pub window: i64,
    /// Half-width actually used per coordinate.
    pub box_half_widths: Vec<i64>,
    pub dimension: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `max |_B⟨g, g⟩(l) - δ(l)|` over `l = 0` and `l = ±e_d`.
    pub normalization_defect: f64,
}

/// Trace of the projection `⟨g, g⟩_A` with `g = _B⟨f, f⟩^{-1/2} f`, the
/// inverse square root taken in the truncated left-regular representation.
pub fn module_trace_numeric(f: &ModuleElement, maps: &EmbeddingMaps, window: i64) -> Result<TraceEstimate, BimoduleError> {
    if f.is_zero() {
        return Err(BimoduleError::ZeroElement);
    }
    let n = maps.n();
    let full = inner_b(f, f, maps, window);
    // collapse directions in which _B⟨f, f⟩ has no support
    let half: Vec<i64> = (0..n)
        .map(|d| {
            let used = full.coeffs.iter().any(|(l, v)| l[d] != 0 && *v != Complex64::new(0.0, 0.0));
            if used {
                window
            } else {
                0
            }
        })
        .collect();
    let points = window_points(&half);
    let index: HashMap<&[i64], usize> = points.iter().enumerate().map(|(i, l)| (l.as_slice(), i)).collect();
    let b = full.to_map();
    let param = maps.b_parameter();
    let omega = |l: &[i64], m: &[i64]| {
        let (lv, mv) = (EmbeddingMaps::as_vector(l), EmbeddingMaps::as_vector(m));
        e(lv.dot(&(&param * mv)) / 2.0)
    };
    let dim = points.len();
    let mut lambda = DMatrix::<Complex64>::zeros(dim, dim);
    let mut diff = vec![0i64; n];
    for (r, m) in points.iter().enumerate() {
        for (c, k) in points.iter().enumerate() {
            for d in 0..n {
                diff[d] = m[d] - k[d];
            }
            if let Some(v) = b.get(&diff) {
                lambda[(r, c)] = v * omega(&diff, k);
            }
        }
    }
    // symmetrize away rounding before the Hermitian eigensolver
    let lambda = (&lambda + lambda.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(lambda);
    let (min, max) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(min > 1e-12 * max.abs().max(1e-300)) {
        return Err(BimoduleError::NotPositive { min, max });
    }
    let zero = index[vec![0i64; n].as_slice()];
    let coeffs: Vec<(Vec<i64>, Complex64)> = points
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let v: Complex64 = (0..dim)
                .map(|k| eig.eigenvectors[(i, k)] * eig.eigenvalues[k].powf(-0.5) * eig.eigenvectors[(zero, k)].conj())
                .sum();
            (l.clone(), v)
        })
        .collect();
    let c = AlgebraElement {
        side: Side::B,
        parameter: param.clone(),
        window,
        coeffs,
    };
    let largest = c.coeffs.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    let c = AlgebraElement {
        coeffs: c.coeffs.into_iter().filter(|(_, v)| v.norm() > PRUNE * largest).collect(),
        ..c
    };
    let g = left_multiply(&c, f, maps);
    // _B⟨g, g⟩ should be δ₀; probe l = 0 and l = ±e_d
    let mut probes = vec![vec![0i64; n]];
    for d in (0..n).filter(|&d| half[d] > 0) {
        for s in [-1, 1] {
            let mut l = vec![0i64; n];
            l[d] = s;
            probes.push(l);
        }
    }
    let normalization_defect = probes
        .iter()
        .map(|l| {
            let v = g.l2_inner(&act_b(l, &g, maps)) / maps.covolume;
            let target = if l.iter().all(|&x| x == 0) { 1.0 } else { 0.0 };
            (v - target).norm()
        })
        .fold(0.0, f64::max);
    let k = 2 * maps.p;
    let pf = pfaffian_f64(&maps.gamma.view((0, 0), (k, k)).into_owned());
    let det = maps.t11.determinant();
    Ok(TraceEstimate {
        trace: g.l2_norm_sq(),
        expected: pf.abs(),
        pfaffian_sign: pf.signum() as i8,
        orientation_sign: det.signum() as i8,
        window,
        box_half_widths: half,
        dimension: dim,
        min_eigenvalue: min,
        max_eigenvalue: max,
        normalization_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::skew_factorize;

    fn maps_2x2(theta: f64) -> EmbeddingMaps {
        let g = SkewMatrix::from_f64(&DMatrix::from_row_slice(2, 2, &[0.0, theta, -theta, 0.0]))
            .unwrap()
            .with_split(1, 0)
            .unwrap();
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, theta]);
        build_embeddings(&g, &t).unwrap()
    }

    fn atom1(center: f64) -> ModuleElement {
        ModuleElement::atom(GaussianAtom::unit(
            DVector::from_element(1, center),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            vec![],
        ))
    }

    #[test]
    fn two_by_two_embedding() {
        let theta = 0.7;
        let m = maps_2x2(theta);
        let s_expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / theta, -1.0, 0.0]);
        assert!((&m.s - s_expected).amax() < 1e-15);
        let t = m.t_point(&[1, 0]);
        assert_eq!(t.m[0], 1.0);
        assert_eq!(t.mu[0], 0.0);
        assert_eq!(m.j, &m.j_prime - m.j_prime.transpose());
    }

    #[test]
    fn unit_atom_mass() {
        let f = atom1(0.3);
        assert!((f.l2_norm_sq() - 1.0).abs() < 1e-14);
        assert!((f.atoms[0].coeff.re - 2f64.powf(0.25)).abs() < 1e-15);
    }

    #[test]
    fn zero_shift_is_identity() {
        let m = maps_2x2(0.4);
        let f = atom1(0.0);
        assert_eq!(act_a(&f, &[0, 0], &m), f);
        assert_eq!(act_b(&[0, 0], &f, &m), f);
    }

    #[test]
    fn translation_signs() {
        let m = maps_2x2(0.4);
        let f = atom1(0.0);
        let a = act_a(&f, &[1, 0], &m);
        assert!((a.atoms[0].center[0] - 1.0).abs() < 1e-15);
        assert_eq!(a.atoms[0].freq[0], 0.0);
        // S(0,1) has x-component 1/θ; V translates by -S′
        let b = act_b(&[0, 1], &f, &m);
        assert!((b.atoms[0].center[0] + 1.0 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn far_atoms_are_nearly_orthogonal() {
        let v = atom1(0.0).l2_inner(&atom1(6.0)).norm();
        assert!(v <= (-PI * 36.0 / 2.0).exp() * 1.0001);
    }

    #[test]
    fn mixed_form_is_integral() {
        let g = SkewMatrix::from_f64(&DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.8, 0.3, -0.2, -0.8, 0.0, 0.5, 0.1, -0.3, -0.5, 0.0, 0.45, 0.2, -0.1, -0.45, 0.0],
        ))
        .unwrap()
        .with_split(1, 2)
        .unwrap();
        let t = skew_factorize(&g.to_f64().unwrap().view((0, 0), (2, 2)).into_owned()).unwrap();
        let m = build_embeddings(&g, &t).unwrap();
        let mixed = m.mixed_form();
        assert!(mixed.iter().all(|v| (v - v.round()).abs() < 1e-12), "{mixed}");
        assert!((m.a_parameter() - g.to_f64().unwrap()).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_factor() {
        let g = SkewMatrix::from_f64(&DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]))
            .unwrap()
            .with_split(1, 0)
            .unwrap();
        assert!(matches!(
            build_embeddings(&g, &DMatrix::identity(2, 2)),
            Err(BimoduleError::Residual(_))
        ));
    }

    #[test]
    fn zero_element_imprimitivity() {
        let m = maps_2x2(0.6);
        let z = ModuleElement::zero();
        let f = atom1(0.0);
        let r = imprimitivity_check(&z, &f, &f, &m, 4, &Grid::default());
        assert_eq!(r.deviation, 0.0);
        assert!(matches!(module_trace_numeric(&z, &m, 4), Err(BimoduleError::ZeroElement)));
    }

    #[test]
    fn composition_and_commutation_p1() {
        let m = maps_2x2(0.62);
        let f = atom1(0.2);
        let grid = Grid { radius: 3.0, points: 13, lattice_box: 0 };
        assert!(composition_defect(&f, &m, Side::A, 1, &grid) < 1e-12);
        assert!(composition_defect(&f, &m, Side::B, 1, &grid) < 1e-12);
        assert!(commutation_defect(&f, &m, 1, &grid) < 1e-12);
    }
}
