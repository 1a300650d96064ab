//! Criterion benchmarks for the fluxfem pipeline live in `benches/`.
