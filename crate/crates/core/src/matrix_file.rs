//! JSON matrix files:
//! `{"n": 4, "p": 2, "q": 0, "symbols": [], "upper": ["1/2", ...]}`.
//!
//! The backend is inferred from the contents: declared symbols mean
//! polynomial entries, any decimal literal means float, anything else is
//! exact rational. A full `"rows"` array may replace `"upper"`; it is checked
//! for skew-symmetry and a zero diagonal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Matrix, MatrixError};
use crate::scalar::{parse_scalar, Backend, ParseError, Scalar};
use crate::skewmat::SkewMatrix;

#[derive(Debug, Error)]
pub enum MatrixFileError {
    #[error("malformed matrix file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {source}")]
    Entry { field: String, source: ParseError },
    #[error("field `{0}`: {1}")]
    Shape(&'static str, String),
    #[error("matrix violates a construction invariant: {0}")]
    Invariant(#[from] MatrixError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub n: usize,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub symbols: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<String>>>,
}

fn is_decimal(text: &str) -> bool {
    let t = text.trim();
    t.contains('.') || t.contains(['e', 'E']) || t.eq_ignore_ascii_case("nan") || t.to_ascii_lowercase().contains("inf")
}

impl MatrixFile {
    pub fn from_json(text: &str) -> Result<Self, MatrixFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix file serializes")
    }

    fn literals(&self) -> Vec<&str> {
        match (&self.upper, &self.rows) {
            (Some(u), _) => u.iter().map(String::as_str).collect(),
            (None, Some(r)) => r.iter().flatten().map(String::as_str).collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn backend(&self) -> Backend {
        if !self.symbols.is_empty() {
            Backend::Polynomial
        } else if self.literals().iter().any(|t| is_decimal(t)) {
            Backend::Float
        } else {
            Backend::Rational
        }
    }

    /// Parse into a skew matrix, attaching the split when `p` or `q` is given.
    pub fn to_matrix(&self) -> Result<SkewMatrix, MatrixFileError> {
        let backend = self.backend();
        let parse = |field: String, text: &str| {
            parse_scalar(text, backend, &self.symbols).map_err(|source| MatrixFileError::Entry { field, source })
        };
        let matrix = match (&self.upper, &self.rows) {
            (Some(_), Some(_)) => return Err(MatrixFileError::Shape("rows", "give either `upper` or `rows`, not both".into())),
            (None, None) => return Err(MatrixFileError::Shape("upper", "missing".into())),
            (Some(upper), None) => {
                let entries = upper
                    .iter()
                    .enumerate()
                    .map(|(k, t)| parse(format!("upper[{k}]"), t))
                    .collect::<Result<Vec<Scalar>, _>>()?;
                SkewMatrix::from_upper(self.n, backend, entries)?
            }
            (None, Some(rows)) => {
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(MatrixFileError::Shape("rows", format!("expected {0} rows of {0} entries", self.n)));
                }
                let mut data = Vec::with_capacity(self.n * self.n);
                for (i, row) in rows.iter().enumerate() {
                    for (j, t) in row.iter().enumerate() {
                        data.push(parse(format!("rows[{i}][{j}]"), t)?);
                    }
                }
                SkewMatrix::new(Matrix::with_backend(self.n, self.n, data, Some(backend))?)?
            }
        };
        let split = match (self.p, self.q) {
            (None, None) => None,
            (Some(p), q) => Some((p, q.unwrap_or(self.n.saturating_sub(2 * p)))),
            (None, Some(q)) => {
                if q > self.n || (self.n - q) % 2 == 1 {
                    return Err(MatrixError::BadSplit { n: self.n, p: 0, q }.into());
                }
                Some(((self.n - q) / 2, q))
            }
        };
        Ok(match split {
            Some((p, q)) => matrix.with_split(p, q)?,
            None => matrix,
        })
    }

    /// Serialize a matrix; floats keep a decimal point so the backend survives a round trip.
    pub fn from_matrix(m: &SkewMatrix, symbols: &[String]) -> Self {
        let upper = m
            .upper()
            .iter()
            .map(|s| match s {
                Scalar::Float(x) => format!("{x:?}"),
                other => other.to_string(),
            })
            .collect();
        MatrixFile {
            n: m.n(),
            p: m.split().map(|s| s.p),
            q: m.split().map(|s| s.q),
            symbols: if m.backend() == Backend::Polynomial { symbols.to_vec() } else { Vec::new() },
            upper: Some(upper),
            rows: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_detection() {
        let f = MatrixFile::from_json(r#"{"n": 2, "upper": ["1/2"]}"#).unwrap();
        assert_eq!(f.backend(), Backend::Rational);
        let f = MatrixFile::from_json(r#"{"n": 2, "upper": ["0.5"]}"#).unwrap();
        assert_eq!(f.backend(), Backend::Float);
        let f = MatrixFile::from_json(r#"{"n": 2, "symbols": ["a"], "upper": ["a"]}"#).unwrap();
        assert_eq!(f.backend(), Backend::Polynomial);
    }

    #[test]
    fn split_inference() {
        let f = MatrixFile::from_json(r#"{"n": 3, "p": 1, "upper": ["1", "2", "3"]}"#).unwrap();
        let m = f.to_matrix().unwrap();
        assert_eq!(m.split().unwrap().q, 1);
        let f = MatrixFile::from_json(r#"{"n": 3, "p": 2, "upper": ["1", "2", "3"]}"#).unwrap();
        assert!(matches!(f.to_matrix(), Err(MatrixFileError::Invariant(MatrixError::BadSplit { .. }))));
    }

    #[test]
    fn nonzero_diagonal_rejected() {
        let f = MatrixFile::from_json(r#"{"n": 2, "rows": [["1", "2"], ["-2", "0"]]}"#).unwrap();
        let err = f.to_matrix().unwrap_err();
        assert!(matches!(err, MatrixFileError::Invariant(MatrixError::NonzeroDiagonal(1))), "{err}");
    }

    #[test]
    fn entry_errors_name_the_field() {
        let f = MatrixFile::from_json(r#"{"n": 3, "upper": ["1", "x", "3"]}"#).unwrap();
        assert!(f.to_matrix().unwrap_err().to_string().contains("upper[1]"));
        assert!(MatrixFile::from_json(r#"{"n": 3, "upper": ["1", }"#).is_err());
    }

    #[test]
    fn float_round_trip() {
        let f = MatrixFile::from_json(r#"{"n": 3, "upper": ["1.0", "0.25", "-3.5"]}"#).unwrap();
        let m = f.to_matrix().unwrap();
        let back = MatrixFile::from_matrix(&m, &[]);
        assert_eq!(back.upper.as_ref().unwrap()[0], "1.0");
        assert_eq!(back.to_matrix().unwrap(), m);
    }
}
