//! Criterion benchmarks for the detector stages live in `benches/`.
