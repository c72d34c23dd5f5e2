use criterion::{black_box, criterion_group, criterion_main, Criterion};
use renewal_trend::bridge::{build_bridge, quad_functional, Functional};
use renewal_trend::estimators::{estimate, EstimatorKind};
use renewal_trend::event_data::{lhd, MultiProcessData};
use renewal_trend::null_dist::{self, LimitKind, LimitTable};
use renewal_trend::statistics::{run_test, PValueMethod, TestKind, TestSpec};
use renewal_trend::trp_sim::{simulate_trp, Trend, TrpModel};

fn estimators(c: &mut Criterion) {
    let s = lhd();
    let mut g = c.benchmark_group("estimators");
    for kind in [
        EstimatorKind::Sample,
        EstimatorKind::Censored,
        EstimatorKind::Diff,
        EstimatorKind::Weibull,
    ] {
        g.bench_function(format!("{kind:?}"), |b| {
            b.iter(|| estimate(black_box(&s), kind).unwrap())
        });
    }
    g.finish();
}

fn tests_on_lhd(c: &mut Criterion) {
    let data = MultiProcessData::single("lhd", lhd());
    null_dist::shipped(&LimitKind::CvM).unwrap();
    null_dist::shipped(&LimitKind::AD).unwrap();
    let mut g = c.benchmark_group("test_lhd");
    for kind in [
        TestKind::Lr,
        TestKind::Ks,
        TestKind::Cvm,
        TestKind::Ad,
        TestKind::Elr { a: 0.5 },
    ] {
        let spec = TestSpec::new(kind);
        g.bench_function(kind.label(), |b| {
            b.iter(|| run_test(black_box(&data), &spec).unwrap())
        });
    }
    let mut spec = TestSpec::new(TestKind::Lr);
    spec.pvalue = PValueMethod::Permutation { b: 999, seed: 1 };
    g.bench_function("LR_permutation_999", |b| {
        b.iter(|| run_test(black_box(&data), &spec).unwrap())
    });
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let model = TrpModel::new(Trend::power_law(1.2).unwrap(), 0.75).unwrap();
    let tau = Trend::power_law(1.2).unwrap().tau_for_expected(60.0);
    c.bench_function("simulate_trp_n60", |b| {
        b.iter(|| simulate_trp(&model, tau, black_box(3)).unwrap())
    });
}

fn limits(c: &mut Criterion) {
    let path = build_bridge(&lhd(), 0.888).unwrap();
    c.bench_function("quadrature_l2_1e5", |b| {
        b.iter(|| quad_functional(black_box(&path), Functional::L2, 100_000).unwrap())
    });
    let mut g = c.benchmark_group("limit_table");
    g.sample_size(10);
    g.bench_function("build_cvm_m1000_grid1024", |b| {
        b.iter(|| LimitTable::build(LimitKind::CvM, 1000, 1024, black_box(1)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, estimators, tests_on_lhd, simulation, limits);
criterion_main!(benches);
