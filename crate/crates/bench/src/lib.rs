//! Criterion benchmarks for `ktori`; see `benches/`.
