//! K-theoretic invariants of higher-dimensional noncommutative tori.

pub mod bimodule;
pub mod cocycle;
pub mod elliott;
pub mod field;
pub mod ktheory;
pub mod linalg;
pub mod matrix_file;
pub mod normalize;
pub mod scalar;
pub mod skewmat;

pub use bimodule::{AlgebraElement, EmbeddingMaps, GaussianAtom, ModuleElement};
pub use cocycle::{Phase, PhaseCocycle};
pub use field::FieldPath;
pub use ktheory::GeneratorDescriptor;
pub use matrix_file::MatrixFile;
pub use linalg::{Matrix, MatrixError};
pub use scalar::{Backend, Monomial, Poly, Rational, Scalar, ScalarError};
pub use skewmat::{BlockSplit, SkewMatrix, Subset};
