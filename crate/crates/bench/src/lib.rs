//! Benchmarks for folia-core kernels; see `benches/kernels.rs`.
