use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use impulse_design::design::Calibration;
use impulse_design::model::{validate_model, JumpSpec, ModelParams, PolicyTargets};
use impulse_design::roots::closed_form_roots;
use impulse_design::sim::{policy_grid, relative_grid, SimConfig};
use impulse_design::solve::{forward_solve_all, SolveOptions};
use impulse_design::value::{qvi_check, GridSpec};
use impulse_design::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn baseline() -> (impulse_design::model::ValidatedModel, PolicyTargets) {
    let p = ModelParams { gamma_drift: 0.05, sigma: 0.3, delta: 0.3, epsilon: 1.0 };
    (validate_model(p, JumpSpec::none()).unwrap(), PolicyTargets::new(5.0, 10.0).unwrap())
}

fn bench_policy_grid(c: &mut Criterion) {
    let (model, t) = baseline();
    let cal = Calibration::case2(&model, &t).unwrap();
    let grid = relative_grid(&t, 0.2, 3);
    let cfg = SimConfig { dt: 1e-2, t_max: 5.0, paths: 2000, seed: 1, x0: 5.0 };
    let mut group = c.benchmark_group("policy_grid");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| policy_grid(&model, &cal.costs, &grid, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_multistart(c: &mut Criterion) {
    let (model, t) = baseline();
    let cal = Calibration::case2(&model, &t).unwrap();
    let roots = closed_form_roots(&model).unwrap();
    let mut group = c.benchmark_group("forward_solve_multistart");
    for (name, exec) in MODES {
        let opts = SolveOptions { exec, ..SolveOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| forward_solve_all(&cal.costs, &roots, cal.coeffs.b, None, opts).unwrap())
        });
    }
    group.finish();
}

fn bench_qvi(c: &mut Criterion) {
    let (model, t) = baseline();
    let cal = Calibration::case2(&model, &t).unwrap();
    let grid = GridSpec::around(&t);
    let mut group = c.benchmark_group("qvi_check");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| qvi_check(&cal.candidate(), &model, &grid, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_policy_grid, bench_multistart, bench_qvi);
criterion_main!(benches);
