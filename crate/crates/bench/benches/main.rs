use criterion::{criterion_group, criterion_main};

criterion_group!(
    benches,
    resiren_bench::network,
    resiren_bench::training,
    resiren_bench::data,
    resiren_bench::probing
);
criterion_main!(benches);
