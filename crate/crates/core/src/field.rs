//! Paths of skew parameter matrices whose leading `2p x 2p` block keeps a
//! positive pfaffian, built through factorizations `Tᵀ J₀ T`.
//!
//! The factor moves from `T_ψ` to `T_θ` along `T(r) = Q^r P^r T_ψ`, where
//! `T_θ T_ψ⁻¹ = Q P` is the polar decomposition. `Q^r` rotates inside
//! `SO(2p)` and `P^r` stays positive definite, so `det T(r)` never changes sign.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::cocycle::{dual_parameter, CocycleError};
use crate::linalg::MatrixError;
use crate::skewmat::{pfaffian_f64, SkewMatrix};

/// Relative pivot size below which [`skew_factorize`] reports a near-singular block.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("{which} has pfaffian {value}, expected > 0")]
    NonPositivePfaffian { which: &'static str, value: f64 },
    #[error("skew block is numerically singular (pivot ratio {0:e})")]
    NearSingular(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter r = {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
}

/// Block-diagonal `J₀` of size `2p`.
pub fn j0_f64(p: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * p, 2 * p);
    for k in 0..p {
        j[(2 * k, 2 * k + 1)] = 1.0;
        j[(2 * k + 1, 2 * k)] = -1.0;
    }
    j
}

/// `max |Tᵀ J₀ T - Θ|`.
pub fn factor_residual(t: &DMatrix<f64>, theta: &DMatrix<f64>) -> f64 {
    let j = j0_f64(t.nrows() / 2);
    (t.transpose() * j * t - theta).amax()
}

/// `T` with `Tᵀ J₀ T = Θ` by symplectic Gram–Schmidt with maximal pivots.
/// `det T = pf Θ`.
pub fn skew_factorize(theta: &DMatrix<f64>) -> Result<DMatrix<f64>, FieldError> {
    let m = theta.nrows();
    if m != theta.ncols() || m % 2 == 1 {
        return Err(FieldError::Dimension(format!("expected an even square matrix, got {}x{}", m, theta.ncols())));
    }
    let pf = pfaffian_f64(theta);
    if !(pf > 0.0) {
        return Err(FieldError::NonPositivePfaffian { which: "factorized block", value: pf });
    }
    let scale = theta.amax();
    let omega = |u: &DMatrix<f64>, v: &DMatrix<f64>| (u.transpose() * theta * v)[(0, 0)];
    let mut pool: Vec<DMatrix<f64>> = (0..m)
        .map(|i| {
            let mut e = DMatrix::zeros(m, 1);
            e[(i, 0)] = 1.0;
            e
        })
        .collect();
    let mut columns = Vec::with_capacity(m);
    while !pool.is_empty() {
        let (mut bi, mut bj, mut best) = (0, 1, 0.0);
        for i in 0..pool.len() {
            for j in i + 1..pool.len() {
                let a = omega(&pool[i], &pool[j]);
                if a.abs() > best {
                    (bi, bj, best) = (i, j, a.abs());
                }
            }
        }
        if best <= PIVOT_TOL * scale {
            return Err(FieldError::NearSingular(best / scale));
        }
        let a = omega(&pool[bi], &pool[bj]);
        let w = pool.remove(bj) / a;
        let u = pool.remove(bi);
        for v in pool.iter_mut() {
            let (vw, vu) = (omega(v, &w), omega(v, &u));
            *v = &*v - &u * vw + &w * vu;
        }
        columns.push(u);
        columns.push(w);
    }
    let c = DMatrix::from_columns(&columns.iter().map(|c| c.column(0)).collect::<Vec<_>>());
    c.try_inverse().ok_or(FieldError::NearSingular(0.0))
}

/// `Q^r` for a rotation `Q = U D Uᵀ`, with `D` a block-diagonal real Schur form.
#[derive(Debug, Clone)]
struct RotationPower {
    basis: DMatrix<f64>,
    /// `(i, j, angle)`: a plane rotation on coordinates `i`, `j`.
    planes: Vec<(usize, usize, f64)>,
}

impl RotationPower {
    fn new(q: &DMatrix<f64>) -> Self {
        let k = q.nrows();
        let (basis, d) = Schur::new(q.clone()).unpack();
        let mut planes = Vec::new();
        let mut flips = Vec::new();
        let mut i = 0;
        while i < k {
            if i + 1 < k && d[(i + 1, i)].abs() > 1e-12 {
                let angle = f64::atan2((d[(i + 1, i)] - d[(i, i + 1)]) / 2.0, (d[(i, i)] + d[(i + 1, i + 1)]) / 2.0);
                planes.push((i, i + 1, angle));
                i += 2;
            } else {
                if d[(i, i)] < 0.0 {
                    flips.push(i);
                }
                i += 1;
            }
        }
        // det Q = +1 leaves an even number of -1 eigenvalues; pair them as half turns
        for pair in flips.chunks(2) {
            if let [a, b] = *pair {
                planes.push((a, b, std::f64::consts::PI));
            }
        }
        RotationPower { basis, planes }
    }

    fn power(&self, r: f64) -> DMatrix<f64> {
        let k = self.basis.nrows();
        let mut d = DMatrix::identity(k, k);
        for &(i, j, angle) in &self.planes {
            let (s, c) = (r * angle).sin_cos();
            d[(i, i)] = c;
            d[(j, j)] = c;
            d[(i, j)] = -s;
            d[(j, i)] = s;
        }
        &self.basis * d * self.basis.transpose()
    }
}

/// Path `γ: [0, 1] → skew matrices` from `ψ` to `θ`.
#[derive(Debug, Clone)]
pub struct FieldPath {
    p: usize,
    q: usize,
    psi: DMatrix<f64>,
    theta: DMatrix<f64>,
    t_psi: DMatrix<f64>,
    t_theta: DMatrix<f64>,
    rotation: RotationPower,
    stretch_basis: DMatrix<f64>,
    stretch_values: Vec<f64>,
}

/// One fiber of the path.
#[derive(Debug, Clone)]
pub struct Fiber {
    pub r: f64,
    pub gamma: SkewMatrix,
    pub t11: DMatrix<f64>,
    pub dual: SkewMatrix,
}

/// Construct the path; both leading blocks need positive pfaffians.
pub fn build_path(psi: &SkewMatrix, theta: &SkewMatrix, p: usize, q: usize) -> Result<FieldPath, FieldError> {
    let n = 2 * p + q;
    if psi.n() != n || theta.n() != n {
        return Err(FieldError::Dimension(format!(
            "endpoints are {}x{} and {}x{}, split needs {n}",
            psi.n(),
            psi.n(),
            theta.n(),
            theta.n()
        )));
    }
    let (psi, theta) = (psi.to_f64()?, theta.to_f64()?);
    let k = 2 * p;
    let block = |m: &DMatrix<f64>| m.view((0, 0), (k, k)).into_owned();
    for (which, m) in [("psi_11", &psi), ("theta_11", &theta)] {
        let pf = pfaffian_f64(&block(m));
        if !(pf > 0.0) {
            return Err(FieldError::NonPositivePfaffian { which, value: pf });
        }
    }
    let t_psi = skew_factorize(&block(&psi))?;
    let t_theta = skew_factorize(&block(&theta))?;
    let inv = t_psi.clone().try_inverse().ok_or(FieldError::NearSingular(0.0))?;
    let m = &t_theta * inv;
    let eig = SymmetricEigen::new(m.transpose() * &m);
    let stretch_values: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    if stretch_values.iter().any(|&s| s <= 0.0) {
        return Err(FieldError::NearSingular(0.0));
    }
    let stretch_basis = eig.eigenvectors;
    let p_inv = &stretch_basis * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, stretch_values.iter().map(|s| 1.0 / s))) * stretch_basis.transpose();
    let rotation = RotationPower::new(&(&m * p_inv));
    Ok(FieldPath {
        p,
        q,
        psi,
        theta,
        t_psi,
        t_theta,
        rotation,
        stretch_basis,
        stretch_values,
    })
}

impl FieldPath {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        2 * self.p + self.q
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    fn check_r(r: f64) -> Result<(), FieldError> {
        if (0.0..=1.0).contains(&r) {
            Ok(())
        } else {
            Err(FieldError::OutOfRange(r))
        }
    }

    /// The interpolating factor, without the exact endpoint cases.
    pub fn factor_formula(&self, r: f64) -> DMatrix<f64> {
        let k = 2 * self.p;
        let stretch = &self.stretch_basis
            * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, self.stretch_values.iter().map(|s| s.powf(r))))
            * self.stretch_basis.transpose();
        self.rotation.power(r) * stretch * &self.t_psi
    }

    /// `T(r)₁₁`; exactly `T_ψ` at `0` and `T_θ` at `1`.
    pub fn factor(&self, r: f64) -> Result<DMatrix<f64>, FieldError> {
        Self::check_r(r)?;
        Ok(if r == 0.0 {
            self.t_psi.clone()
        } else if r == 1.0 {
            self.t_theta.clone()
        } else {
            self.factor_formula(r)
        })
    }

    /// `γ(r)`: `T(r)ᵀ J₀ T(r)` in the leading block, straight lines elsewhere.
    pub fn gamma(&self, r: f64) -> Result<DMatrix<f64>, FieldError> {
        Self::check_r(r)?;
        if r == 0.0 {
            return Ok(self.psi.clone());
        }
        if r == 1.0 {
            return Ok(self.theta.clone());
        }
        let mut g = &self.psi * (1.0 - r) + &self.theta * r;
        let t = self.factor_formula(r);
        let g11 = t.transpose() * j0_f64(self.p) * &t;
        let k = 2 * self.p;
        for i in 0..k {
            g[(i, i)] = 0.0;
            for j in i + 1..k {
                g[(i, j)] = g11[(i, j)];
                g[(j, i)] = -g11[(i, j)];
            }
        }
        Ok(g)
    }

    /// `(γ(r), T(r)₁₁, γ(r)′)`.
    pub fn sample_fiber(&self, r: f64) -> Result<Fiber, FieldError> {
        let gamma = SkewMatrix::from_f64(&self.gamma(r)?)?.with_split(self.p, self.q)?;
        let dual = dual_parameter(&gamma)?;
        Ok(Fiber {
            r,
            gamma,
            t11: self.factor(r)?,
            dual,
        })
    }
}

/// Standalone wrapper matching the path API.
pub fn sample_fiber(path: &FieldPath, r: f64) -> Result<Fiber, FieldError> {
    path.sample_fiber(r)
}

/// Summary of a sampled path.
#[derive(Debug, Clone, Serialize)]
pub struct FieldCheck {
    pub samples: usize,
    pub min_pfaffian: f64,
    /// `min pf(γ(r)₁₁) / (1 + |pf|)` over the samples.
    pub min_margin: f64,
    pub max_factor_residual: f64,
    pub endpoint_residual_psi: f64,
    pub endpoint_residual_theta: f64,
    /// Distance of the formula factor at `r = 0, 1` from the endpoint factors.
    pub formula_endpoint_residual: f64,
    pub max_affine_defect: f64,
    pub pass: bool,
}

/// Sample `count` uniform points `r_i = i/(count-1)`.
pub fn check_path(path: &FieldPath, count: usize, residual_tol: f64, endpoint_tol: f64) -> Result<FieldCheck, FieldError> {
    let count = count.max(2);
    let k = 2 * path.p;
    let (mut min_pf, mut min_margin, mut max_res, mut max_affine) = (f64::INFINITY, f64::INFINITY, 0.0f64, 0.0f64);
    for i in 0..count {
        let r = i as f64 / (count - 1) as f64;
        let g = path.gamma(r)?;
        let t = path.factor(r)?;
        let g11 = g.view((0, 0), (k, k)).into_owned();
        let pf = pfaffian_f64(&g11);
        min_pf = min_pf.min(pf);
        min_margin = min_margin.min(pf / (1.0 + pf.abs()));
        max_res = max_res.max(factor_residual(&t, &g11));
        let line = &path.psi * (1.0 - r) + &path.theta * r;
        let n = path.n();
        for a in 0..n {
            for b in 0..n {
                if a >= k || b >= k {
                    max_affine = max_affine.max((g[(a, b)] - line[(a, b)]).abs());
                }
            }
        }
    }
    let endpoint_residual_psi = (path.gamma(0.0)? - &path.psi).amax();
    let endpoint_residual_theta = (path.gamma(1.0)? - &path.theta).amax();
    let formula_endpoint_residual = (path.factor_formula(0.0) - &path.t_psi)
        .amax()
        .max((path.factor_formula(1.0) - &path.t_theta).amax());
    let pass = min_pf > 0.0 && max_res <= residual_tol && endpoint_residual_psi <= endpoint_tol && endpoint_residual_theta <= endpoint_tol;
    Ok(FieldCheck {
        samples: count,
        min_pfaffian: min_pf,
        min_margin,
        max_factor_residual: max_res,
        endpoint_residual_psi,
        endpoint_residual_theta,
        formula_endpoint_residual,
        max_affine_defect: max_affine,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skew(n: usize, upper: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        m
    }

    #[test]
    fn factorize_j0_and_multiples() {
        let j = j0_f64(2);
        let t = skew_factorize(&j).unwrap();
        assert!(factor_residual(&t, &j) < 1e-14);
        let c = 2.5;
        let t = skew_factorize(&(&j * c)).unwrap();
        assert!(factor_residual(&t, &(&j * c)) < 1e-14);
        assert!((t.determinant() - c * c).abs() < 1e-12);
    }

    #[test]
    fn factorize_random_block() {
        let th = skew(4, &[0.3, -1.2, 0.8, 2.1, 0.4, 0.9]);
        let pf = pfaffian_f64(&th);
        assert!(pf > 0.0);
        let t = skew_factorize(&th).unwrap();
        assert!(factor_residual(&t, &th) < 1e-12);
        assert!((t.determinant() - pf).abs() < 1e-12);
    }

    #[test]
    fn factorize_rejects_negative_and_singular() {
        assert!(matches!(skew_factorize(&skew(2, &[-1.0])), Err(FieldError::NonPositivePfaffian { .. })));
        assert!(skew_factorize(&skew(2, &[0.0])).is_err());
    }

    #[test]
    fn constant_path() {
        let th = SkewMatrix::from_f64(&skew(3, &[0.7, 0.2, -0.4])).unwrap();
        let path = build_path(&th, &th, 1, 1).unwrap();
        for r in [0.0, 0.25, 0.5, 1.0] {
            assert!((path.gamma(r).unwrap() - th.to_f64().unwrap()).amax() < 1e-13);
        }
    }

    #[test]
    fn out_of_range() {
        let th = SkewMatrix::from_f64(&skew(2, &[0.7])).unwrap();
        let path = build_path(&th, &th, 1, 0).unwrap();
        assert_eq!(path.gamma(1.5).unwrap_err(), FieldError::OutOfRange(1.5));
        assert!(path.sample_fiber(-0.1).is_err());
    }

    #[test]
    fn rotation_through_half_turn() {
        // T_θ = -T_ψ needs Q = -I, a pair of half turns.
        let psi = SkewMatrix::from_f64(&skew(4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        let path = build_path(&psi, &psi, 2, 0).unwrap();
        let rot = RotationPower::new(&(-DMatrix::<f64>::identity(4, 4)));
        assert!((rot.power(1.0) + DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        assert!(path.factor(0.5).is_ok());
    }

    #[test]
    fn endpoints_and_sign() {
        let psi = SkewMatrix::from_f64(&skew(4, &[0.5, 0.1, 0.2, -0.3, 0.1, 0.7])).unwrap();
        let theta = SkewMatrix::from_f64(&skew(4, &[0.3, 0.9, 1.1, 0.4, -0.6, 0.2])).unwrap();
        let path = build_path(&psi, &theta, 1, 2).unwrap();
        let report = check_path(&path, 200, 1e-10, 1e-12).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.formula_endpoint_residual < 1e-10);
        assert!(report.max_affine_defect < 1e-15);
        let fiber = path.sample_fiber(0.3).unwrap();
        assert_eq!(fiber.gamma.split().unwrap().q, 2);
    }
}
