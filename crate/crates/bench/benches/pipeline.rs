use criterion::{criterion_group, criterion_main};

criterion_group!(
    benches,
    proxyvote_bench::losses,
    proxyvote_bench::voting,
    proxyvote_bench::pnp,
    proxyvote_bench::synth
);
criterion_main!(benches);
