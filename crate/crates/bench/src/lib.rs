//! Criterion benchmarks for the restoration planner live in `benches/`.
