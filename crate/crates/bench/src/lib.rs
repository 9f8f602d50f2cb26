//! Criterion benchmarks for clustering, training and uncertainty selection.
//! Run with `cargo bench -p alca-bench`.
