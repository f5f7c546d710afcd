//! Criterion benchmarks for naghdi-core live under `benches/`.
