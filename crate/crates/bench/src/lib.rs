//! Criterion benchmarks for the svcforge hot paths live under `benches/`.
