use criterion::{criterion_group, criterion_main, Criterion};
use infeasloc::ecf::{EcfModel, InitMode};
use infeasloc::linsolve::SparseLu;
use infeasloc::localizer::{localize, SparsityConfig};
use infeasloc::pfcore::{solve_l2_with_model, solve_powerflow_with_model, SolverOptions};
use infeasloc_bench::load_case;

fn model(name: &str, alpha: f64) -> EcfModel {
    EcfModel::new(&load_case(name, alpha)).expect("valid network")
}

fn sparse_lu(c: &mut Criterion) {
    let m = model("case118", 1.0);
    let jac = m.jacobian(m.init_state(InitMode::Flat).as_slice()).unwrap();
    c.bench_function("lu/case118 jacobian, cold", |b| {
        b.iter(|| SparseLu::new().factor(&jac).unwrap())
    });
    let mut lu = SparseLu::new();
    lu.factor(&jac).unwrap();
    c.bench_function("lu/case118 jacobian, cached analysis", |b| {
        b.iter(|| lu.factor(&jac).unwrap())
    });
}

fn solvers(c: &mut Criterion) {
    let opts = SolverOptions::default();
    let feasible = model("case118", 1.0);
    let x0 = feasible.init_state(InitMode::Flat);
    c.bench_function("powerflow/case118", |b| {
        b.iter(|| solve_powerflow_with_model(&feasible, &x0, &opts).unwrap())
    });
    c.bench_function("l2/case118", |b| {
        b.iter(|| solve_l2_with_model(&feasible, &opts).unwrap())
    });

    let stressed = model("case14", 4.5);
    c.bench_function("l2/case14 alpha 4.5", |b| {
        b.iter(|| solve_l2_with_model(&stressed, &opts).unwrap())
    });
    let cfg = SparsityConfig::default();
    c.bench_function("localize/case14 alpha 4.5", |b| {
        b.iter(|| localize(&stressed, &cfg, &opts).unwrap())
    });
}

criterion_group!(benches, sparse_lu, solvers);
criterion_main!(benches);
