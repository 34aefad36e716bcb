//! Benchmarks for the score test and its comparators live in `benches/`.
