//! Benchmarks only; see `benches/lab.rs`.
