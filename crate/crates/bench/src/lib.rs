//! Criterion benchmarks for the hot algorithm paths live in `benches/`.
