//! Criterion benchmarks for the `ougap` kernels live in `benches/`.
