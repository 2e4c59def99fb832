//! Criterion benchmarks for the simulator and the policy network. See
//! `benches/hot_paths.rs`; this library target is empty.
