use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use factor_smc::models::{AdaptedVonMisesProposal, XYModel};
use factor_smc::par::Exec;
use factor_smc::smc::{run_smc, SmcConfig};
use factor_smc::{Decomposition, OrderingStrategy};

fn xy_smc(c: &mut Criterion) {
    let g = Arc::new(XYModel::new(8, 8, 1.1).graph().unwrap());
    let d = Decomposition::build(g, &OrderingStrategy::LeftRight).unwrap();
    let mut group = c.benchmark_group("xy8x8_smc");
    group.sample_size(20);
    for n in [256usize, 4096] {
        for (label, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
            let mut cfg = SmcConfig::new(n, 1);
            cfg.exec = exec;
            group.bench_with_input(BenchmarkId::new(label, n), &cfg, |b, cfg| {
                b.iter(|| run_smc(&d, &AdaptedVonMisesProposal, cfg).unwrap().z.final_log_z())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, xy_smc);
criterion_main!(benches);
