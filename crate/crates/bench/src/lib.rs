//! Benchmarks for `fsnet-core`; see `benches/`.
