use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairdiv::audit::{gen_random, truthfulness_probe, Mechanism};
use fairdiv::pa::run_pa;
use fairdiv::pf::brute_force_oracle;
use fairdiv::{Family, Instance, SolverConfig};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn bench<F: Fn() + Sync>(c: &mut Criterion, group: &str, f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(&f))
        });
    }
    g.finish();
}

fn instance(n: usize, m: usize) -> Instance {
    gen_random(n, m, Family::Linear, 7).unwrap()
}

fn pa(c: &mut Criterion) {
    let inst = instance(12, 8);
    let cfg = SolverConfig::with_tolerance(1e-9);
    bench(c, "pa_12x8", || {
        run_pa(&inst, &cfg).unwrap();
    });
}

fn probe(c: &mut Criterion) {
    let inst = instance(4, 4);
    let cfg = SolverConfig::with_tolerance(1e-9);
    bench(c, "probe_4x4_200", || {
        truthfulness_probe(Mechanism::Pa, &inst, 0, 200, 1, &cfg).unwrap();
    });
}

fn oracle(c: &mut Criterion) {
    let inst = instance(3, 3);
    bench(c, "oracle_3x3_k30", || {
        brute_force_oracle(&inst, 30).unwrap();
    });
}

criterion_group!(benches, pa, probe, oracle);
criterion_main!(benches);
