//! Shape solves and one optimizer run, on the rayon pool and on a single
//! thread. Build with `--no-default-features` to bench the sequential backend.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use softcrawl::calibration::CorrectedModel;
use softcrawl::controller::{solve_target_shape, TargetShape};
use softcrawl::model::{solve_shape, RobotParams, VoltageVector};
use softcrawl::optimizer::{BoSettings, BoxDomain};
use softcrawl::par;

fn postures(n: usize) -> Vec<VoltageVector> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            VoltageVector::new([
                300.0,
                500.0 * t - 250.0,
                -1500.0 * t,
                200.0 - 400.0 * t,
                300.0,
            ])
        })
        .collect()
}

fn run_both(c: &mut Criterion, name: &str, work: impl Fn() + Sync) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    let backend = if par::is_parallel() {
        "rayon"
    } else {
        "sequential"
    };
    group.bench_function(BenchmarkId::new(backend, "pool"), |b| b.iter(&work));
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        group.bench_function(BenchmarkId::new("rayon", "one-thread"), |b| {
            b.iter(|| single.install(&work))
        });
    }
    group.finish();
}

fn shape_batch(c: &mut Criterion) {
    let p = RobotParams::default();
    let vs = postures(64);
    run_both(c, "solve_shape_x64", || {
        let out = par::map(&vs, |v| solve_shape(&p, v, true).unwrap().shape.peak());
        std::hint::black_box(out);
    });
}

fn target_solve(c: &mut Criterion) {
    let p = RobotParams::default();
    let model = CorrectedModel::new(p.clone());
    let domain = BoxDomain::default_voltages(5, false);
    let target = TargetShape(
        solve_shape(
            &p,
            &VoltageVector::new([250.0, 200.0, -1000.0, 200.0, 250.0]),
            true,
        )
        .unwrap()
        .shape,
    );
    let settings = BoSettings::with_seed(0);
    run_both(c, "target_shape_budget60", || {
        let cmd = solve_target_shape(&target, &model, &domain, &settings).unwrap();
        std::hint::black_box(cmd);
    });
}

criterion_group!(benches, shape_batch, target_solve);
criterion_main!(benches);
