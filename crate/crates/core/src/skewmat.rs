//! Skew-symmetric matrices, pfaffians and pfaffian minors.
//!
//! The internal canonical symplectic form is the block-diagonal `J₀` built
//! from `p` copies of `[[0, 1], [-1, 0]]`, so `pf(J₀) = 1`. The
//! `[[0, I_p], [-I_p, 0]]` form used by the Heisenberg embeddings is reached
//! with [`perfect_shuffle`]; its pfaffian is `(-1)^{p(p-1)/2}`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, MatrixError};
use crate::scalar::{Backend, Scalar};

/// Block split `n = 2p + q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSplit {
    pub p: usize,
    pub q: usize,
}

/// A strictly increasing list of 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(indices: Vec<usize>) -> Self {
        Subset(indices)
    }

    pub fn empty() -> Self {
        Subset(Vec::new())
    }

    /// Check the indices against `1..=n`, strict increase and even size.
    pub fn validate_even(&self, n: usize) -> Result<(), MatrixError> {
        if self.0.len() % 2 == 1 {
            return Err(MatrixError::OddSubset(self.0.len()));
        }
        self.validate(n)
    }

    pub fn validate(&self, n: usize) -> Result<(), MatrixError> {
        if let Some(&bad) = self.0.iter().find(|&&i| i == 0 || i > n) {
            return Err(MatrixError::IndexOutOfRange { index: bad, n });
        }
        if self.0.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MatrixError::NotIncreasing);
        }
        Ok(())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &i| m | 1 << (i - 1))
    }

    /// Compact label: `"13"`, `"1234"`, or `"1_10"` once an index exceeds 9.
    pub fn label(&self) -> String {
        if self.0.iter().all(|&i| i < 10) {
            self.0.iter().map(|i| i.to_string()).collect()
        } else {
            self.0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_")
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// All even-cardinality subsets of `{1..n}`, the empty one included, ordered
/// by size and then lexicographically. There are `2^{n-1}` of them (`1` for `n = 0`).
pub fn even_subsets(n: usize) -> Vec<Subset> {
    let mut out = vec![Subset::empty()];
    for size in (2..=n).step_by(2) {
        let mut combo: Vec<usize> = (1..=size).collect();
        loop {
            out.push(Subset(combo.clone()));
            // next combination in lexicographic order
            let mut i = size;
            while i > 0 && combo[i - 1] == n - size + i {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for k in i..size {
                combo[k] = combo[k - 1] + 1;
            }
        }
    }
    out
}

/// An `n x n` skew-symmetric matrix over one backend, with an optional block split.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    matrix: Matrix,
    split: Option<BlockSplit>,
}

impl SkewMatrix {
    /// Wrap a square matrix after checking `Aᵀ = -A` and a zero diagonal.
    pub fn new(matrix: Matrix) -> Result<Self, MatrixError> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(MatrixError::NotSquare {
                rows: n,
                cols: matrix.cols(),
            });
        }
        for i in 0..n {
            if !matrix.get(i, i).is_zero() {
                return Err(MatrixError::NonzeroDiagonal(i + 1));
            }
            for j in i + 1..n {
                if *matrix.get(j, i) != -matrix.get(i, j) {
                    return Err(MatrixError::NotSkew { row: j + 1, col: i + 1 });
                }
            }
        }
        Ok(SkewMatrix { matrix, split: None })
    }

    /// Build from the strict upper triangle in row-major order.
    pub fn from_upper(n: usize, backend: Backend, upper: Vec<Scalar>) -> Result<Self, MatrixError> {
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(MatrixError::EntryCount {
                expected,
                got: upper.len(),
            });
        }
        if let Some(bad) = upper.iter().find(|x| x.backend() != backend) {
            return Err(MatrixError::MixedBackends(backend, bad.backend()));
        }
        let mut m = Matrix::zeros(n, n, backend);
        let mut it = upper.into_iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = it.next().unwrap();
                m.set(j, i, -&v);
                m.set(i, j, v);
            }
        }
        Ok(SkewMatrix { matrix: m, split: None })
    }

    /// Build from a function of 0-based `(i, j)` for `i < j`.
    pub fn from_upper_fn(n: usize, backend: Backend, mut f: impl FnMut(usize, usize) -> Scalar) -> Result<Self, MatrixError> {
        let mut upper = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                upper.push(f(i, j));
            }
        }
        Self::from_upper(n, backend, upper)
    }

    pub fn from_f64(m: &DMatrix<f64>) -> Result<Self, MatrixError> {
        Self::new(Matrix::from_f64(m))
    }

    pub fn zero(n: usize, backend: Backend) -> Self {
        SkewMatrix {
            matrix: Matrix::zeros(n, n, backend),
            split: None,
        }
    }

    /// Symbolic matrix with entry `(i, j)` equal to the indeterminate
    /// `{prefix}{i}{j}` (1-based), e.g. `t12`.
    pub fn symbolic(n: usize, prefix: &str) -> Self {
        Self::from_upper_fn(n, Backend::Polynomial, |i, j| Scalar::var(&symbol_name(prefix, i + 1, j + 1)))
            .expect("symbolic construction is well-formed")
    }

    /// Block-diagonal `J₀` with `p` blocks `[[0, 1], [-1, 0]]`.
    pub fn j0(p: usize, backend: Backend) -> Self {
        Self::from_upper_fn(2 * p, backend, |i, j| {
            if i % 2 == 0 && j == i + 1 {
                Scalar::one(backend)
            } else {
                Scalar::zero(backend)
            }
        })
        .expect("J0 is skew")
    }

    /// `[[0, I_p], [-I_p, 0]]`.
    pub fn j0_standard(p: usize, backend: Backend) -> Self {
        Self::from_upper_fn(2 * p, backend, |i, j| {
            if j == i + p && i < p {
                Scalar::one(backend)
            } else {
                Scalar::zero(backend)
            }
        })
        .expect("standard J is skew")
    }

    pub fn with_split(mut self, p: usize, q: usize) -> Result<Self, MatrixError> {
        if 2 * p + q != self.n() {
            return Err(MatrixError::BadSplit { n: self.n(), p, q });
        }
        self.split = Some(BlockSplit { p, q });
        Ok(self)
    }

    pub fn split(&self) -> Option<BlockSplit> {
        self.split
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn backend(&self) -> Backend {
        self.matrix.backend()
    }

    /// Entry at 0-based `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        self.matrix.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Strict upper triangle in row-major order.
    pub fn upper(&self) -> Vec<Scalar> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.get(i, j).clone());
            }
        }
        out
    }

    pub fn to_f64(&self) -> Result<DMatrix<f64>, MatrixError> {
        self.matrix.to_f64()
    }

    /// Convert every entry to float (explicit conversion).
    pub fn to_float(&self) -> Result<SkewMatrix, MatrixError> {
        let m = SkewMatrix::from_f64(&self.to_f64()?)?;
        Ok(SkewMatrix { split: self.split, ..m })
    }

    /// Principal submatrix on the given 1-based subset.
    pub fn principal(&self, subset: &Subset) -> SkewMatrix {
        let idx = subset.indices();
        let k = idx.len();
        let m = Matrix::from_fn(k, k, self.backend(), |a, b| self.get(idx[a] - 1, idx[b] - 1).clone())
            .expect("principal submatrix of a valid matrix");
        SkewMatrix { matrix: m, split: None }
    }

    /// The leading `2p x 2p` block (requires a split).
    pub fn block11(&self) -> Result<SkewMatrix, MatrixError> {
        let s = self.require_split()?;
        let subset = Subset((1..=2 * s.p).collect());
        Ok(self.principal(&subset))
    }

    fn require_split(&self) -> Result<BlockSplit, MatrixError> {
        self.split
            .ok_or_else(|| MatrixError::Dimension("matrix carries no (p, q) block split".into()))
    }

    /// Blocks `(γ₁₁, γ₁₂, γ₂₁, γ₂₂)` of the split.
    pub fn blocks(&self) -> Result<[Matrix; 4], MatrixError> {
        let s = self.require_split()?;
        let (a, b) = (2 * s.p, s.q);
        Ok([
            self.matrix.block(0, 0, a, a),
            self.matrix.block(0, a, a, b),
            self.matrix.block(a, 0, b, a),
            self.matrix.block(a, a, b, b),
        ])
    }

    pub fn add(&self, other: &SkewMatrix) -> Result<SkewMatrix, MatrixError> {
        Ok(SkewMatrix {
            matrix: self.matrix.add(&other.matrix)?,
            split: self.split,
        })
    }

    pub fn scale(&self, c: &Scalar) -> Result<SkewMatrix, MatrixError> {
        Ok(SkewMatrix {
            matrix: self.matrix.scale(c)?,
            split: self.split,
        })
    }

    pub fn neg(&self) -> SkewMatrix {
        SkewMatrix {
            matrix: self.matrix.neg(),
            split: self.split,
        }
    }

    /// Pfaffian. Exact backends use the signed first-row expansion (memoized
    /// over index subsets); floats use Parlett-Reid skew tridiagonalization.
    /// Odd `n` gives 0 and `n = 0` gives 1.
    pub fn pfaffian(&self) -> Scalar {
        let n = self.n();
        if n % 2 == 1 {
            return Scalar::zero(self.backend());
        }
        if n == 0 {
            return Scalar::one(self.backend());
        }
        match self.backend() {
            Backend::Float => Scalar::Float(pfaffian_f64(&self.to_f64().expect("float entries"))),
            _ => {
                let mut memo = HashMap::new();
                self.pfaffian_mask((1u64 << n) - 1, &mut memo)
            }
        }
    }

    /// Literal (unmemoized) first-row expansion. Exponential; kept for
    /// cross-checks on small matrices and for float inputs where the
    /// expansion is preferred over elimination.
    pub fn pfaffian_by_expansion(&self) -> Scalar {
        fn rec(a: &SkewMatrix, idx: &[usize]) -> Scalar {
            if idx.is_empty() {
                return Scalar::one(a.backend());
            }
            let first = idx[0];
            let mut acc = Scalar::zero(a.backend());
            for k in 1..idx.len() {
                let entry = a.get(first, idx[k]);
                if entry.is_zero() {
                    continue;
                }
                let rest: Vec<usize> = idx[1..].iter().copied().filter(|&x| x != idx[k]).collect();
                let term = entry * &rec(a, &rest);
                // 1-based position of idx[k] is k + 1, sign (-1)^{k+1+1}
                acc = if k % 2 == 1 { &acc + &term } else { &acc - &term };
            }
            acc
        }
        if self.n() % 2 == 1 {
            return Scalar::zero(self.backend());
        }
        let idx: Vec<usize> = (0..self.n()).collect();
        rec(self, &idx)
    }

    fn pfaffian_mask(&self, mask: u64, memo: &mut HashMap<u64, Scalar>) -> Scalar {
        if mask == 0 {
            return Scalar::one(self.backend());
        }
        if let Some(v) = memo.get(&mask) {
            return v.clone();
        }
        let first = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << first);
        let mut acc = Scalar::zero(self.backend());
        let mut position = 0;
        for j in first + 1..self.n() {
            if rest & (1 << j) == 0 {
                continue;
            }
            position += 1;
            let entry = self.get(first, j);
            if entry.is_zero() {
                continue;
            }
            let term = entry * &self.pfaffian_mask(rest & !(1 << j), memo);
            // j sits at 1-based position `position + 1` of the subset
            acc = if position % 2 == 1 { &acc + &term } else { &acc - &term };
        }
        memo.insert(mask, acc.clone());
        acc
    }

    pub fn determinant(&self) -> Scalar {
        if self.n() % 2 == 1 {
            return Scalar::zero(self.backend());
        }
        self.matrix.determinant().expect("square single-backend matrix")
    }

    /// Pfaffian of the principal submatrix on `subset` (1-based, strictly
    /// increasing, even size). The empty minor is 1.
    pub fn pfaffian_minor(&self, subset: &Subset) -> Result<Scalar, MatrixError> {
        subset.validate_even(self.n())?;
        Ok(self.principal(subset).pfaffian())
    }

    /// Every pfaffian minor, the empty one included, in graded-lexicographic
    /// subset order: `2^{n-1}` entries.
    pub fn all_pfaffian_minors(&self) -> Vec<(Subset, Scalar)> {
        let subsets = even_subsets(self.n());
        if self.backend() == Backend::Float || self.n() > 24 {
            return subsets
                .into_iter()
                .map(|s| {
                    let v = self.principal(&s).pfaffian();
                    (s, v)
                })
                .collect();
        }
        let mut memo = HashMap::new();
        subsets
            .into_iter()
            .map(|s| {
                let v = self.pfaffian_mask(s.mask(), &mut memo);
                (s, v)
            })
            .collect()
    }

    /// `PᵀAP` for the signed permutation matrix with `P[perm[i]][i] = signs[i]`,
    /// i.e. the result has entries `signs[i]·signs[j]·a[perm[i]][perm[j]]`.
    /// `perm` holds 1-based images.
    pub fn signed_permutation_congruence(&self, perm: &[usize], signs: &[i8]) -> Result<SkewMatrix, MatrixError> {
        let n = self.n();
        validate_signed_permutation(n, perm, signs)?;
        let backend = self.backend();
        let out = SkewMatrix::from_upper_fn(n, backend, |i, j| {
            let v = self.get(perm[i] - 1, perm[j] - 1);
            if signs[i] * signs[j] < 0 {
                -v
            } else {
                v.clone()
            }
        })?;
        Ok(out)
    }

    /// General congruence `BᵀAB`.
    pub fn congruence(&self, b: &Matrix) -> Result<SkewMatrix, MatrixError> {
        let m = b.transpose().mul(&self.matrix)?.mul(b)?;
        let n = m.rows();
        SkewMatrix::from_upper_fn(n, m.backend(), |i, j| m.get(i, j).clone())
    }
}

fn symbol_name(prefix: &str, i: usize, j: usize) -> String {
    if i < 10 && j < 10 {
        format!("{prefix}{i}{j}")
    } else {
        format!("{prefix}{i}_{j}")
    }
}

/// Names of the indeterminates used by [`SkewMatrix::symbolic`], upper triangle order.
pub fn symbolic_names(n: usize, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            out.push(symbol_name(prefix, i, j));
        }
    }
    out
}

pub fn validate_signed_permutation(n: usize, perm: &[usize], signs: &[i8]) -> Result<(), MatrixError> {
    if perm.len() != n || signs.len() != n {
        return Err(MatrixError::InvalidPermutation(format!(
            "expected {n} images and {n} signs, got {} and {}",
            perm.len(),
            signs.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p == 0 || p > n || seen[p - 1] {
            return Err(MatrixError::InvalidPermutation(format!("{perm:?} is not a permutation of 1..={n}")));
        }
        seen[p - 1] = true;
    }
    if signs.iter().any(|&s| s != 1 && s != -1) {
        return Err(MatrixError::InvalidPermutation(format!("signs {signs:?} must be ±1")));
    }
    Ok(())
}

/// Sign of a permutation given as 1-based images.
pub fn permutation_sign(perm: &[usize]) -> i8 {
    let mut visited = vec![false; perm.len()];
    let mut sign = 1i8;
    for start in 0..perm.len() {
        if visited[start] {
            continue;
        }
        let mut len = 0;
        let mut k = start;
        while !visited[k] {
            visited[k] = true;
            k = perm[k] - 1;
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Determinant of the signed permutation matrix: `sign(perm)·∏ signs`.
pub fn signed_permutation_det(perm: &[usize], signs: &[i8]) -> i8 {
    permutation_sign(perm) * signs.iter().product::<i8>()
}

/// The signed permutation matrix `P` with `P[perm[i]][i] = signs[i]`.
pub fn signed_permutation_matrix(perm: &[usize], signs: &[i8], backend: Backend) -> Matrix {
    let n = perm.len();
    Matrix::from_fn(n, n, backend, |r, c| {
        if perm[c] - 1 == r {
            Scalar::from_int(signs[c] as i64, backend)
        } else {
            Scalar::zero(backend)
        }
    })
    .expect("well-formed permutation matrix")
}

/// Permutation matrix `Π` (float) with `Πᵀ J_std Π = J₀`, where `J₀` is
/// block-diagonal and `J_std = [[0, I], [-I, 0]]`: it sends coordinate
/// `2k` to `k` and `2k+1` to `p + k`.
pub fn perfect_shuffle(p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * p, 2 * p);
    for k in 0..p {
        m[(k, 2 * k)] = 1.0;
        m[(p + k, 2 * k + 1)] = 1.0;
    }
    m
}

/// `pf([[0, I_p], [-I_p, 0]]) = (-1)^{p(p-1)/2}`.
pub fn standard_form_pfaffian_sign(p: usize) -> i8 {
    if (p * p.saturating_sub(1) / 2) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Pfaffian of a float skew matrix by Parlett-Reid elimination, `O(n³)`.
pub fn pfaffian_f64(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n % 2 == 1 {
        return 0.0;
    }
    let mut a = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        let (mut kp, mut best) = (k + 1, a[(k + 1, k)].abs());
        for r in k + 2..n {
            if a[(r, k)].abs() > best {
                best = a[(r, k)].abs();
                kp = r;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        if a[(k + 1, k)] == 0.0 {
            return 0.0;
        }
        pf *= a[(k, k + 1)];
        if k + 2 < n {
            let pivot = a[(k, k + 1)];
            let tau: Vec<f64> = (k + 2..n).map(|j| a[(k, j)] / pivot).collect();
            let col: Vec<f64> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    pf
}
