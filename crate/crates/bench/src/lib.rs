//! Criterion benchmarks for the core routines live in `benches/`.
