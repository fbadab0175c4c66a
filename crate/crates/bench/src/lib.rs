//! Criterion benchmarks for the training loop live in `benches/`.
