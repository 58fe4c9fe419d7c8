//! Criterion benchmarks for the ferronematic kernels live in `benches/`.
