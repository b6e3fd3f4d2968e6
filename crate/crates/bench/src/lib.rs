//! Benchmarks for `robwav`; see `benches/`.
