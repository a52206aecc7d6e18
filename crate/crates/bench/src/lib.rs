//! Criterion benchmarks for the hot kernels live in `benches/`.
