use renewal_trend::event_data::{lhd, MultiProcessData};
use renewal_trend::null_dist::{self, LimitKind, LimitTable, Sidedness};
use renewal_trend::statistics::{run_test, PValueMethod, TestKind, TestSpec};

#[test]
fn tables_are_deterministic_in_seed() {
    let a = LimitTable::build(LimitKind::CvM, 2000, 1024, 3).unwrap();
    let b = LimitTable::build(LimitKind::CvM, 2000, 1024, 3).unwrap();
    let c = LimitTable::build(LimitKind::CvM, 2000, 1024, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn shipped_tables_have_limit_means() {
    let cvm = null_dist::shipped(&LimitKind::CvM).unwrap();
    let ad = null_dist::shipped(&LimitKind::AD).unwrap();
    assert_eq!(cvm.len(), null_dist::SHIPPED_M);
    assert_eq!(cvm.grid_n, null_dist::SHIPPED_GRID_N);
    assert!((cvm.mean() - 1.0 / 6.0).abs() < 0.002, "{}", cvm.mean());
    assert!((ad.mean() - 1.0).abs() < 0.01, "{}", ad.mean());
}

#[test]
fn pvalues_lie_in_unit_interval() {
    let data = MultiProcessData::single("lhd", lhd());
    for kind in [
        TestKind::Lr,
        TestKind::Ks,
        TestKind::Cvm,
        TestKind::Ad,
        TestKind::Elr { a: 0.5 },
    ] {
        for sided in [Sidedness::TwoSided, Sidedness::Greater, Sidedness::Less] {
            for pvalue in [
                PValueMethod::Asymptotic,
                PValueMethod::Permutation { b: 99, seed: 1 },
            ] {
                let mut spec = TestSpec::new(kind);
                spec.sided = sided;
                spec.pvalue = pvalue;
                let p = run_test(&data, &spec).unwrap().p_value;
                assert!(p > 0.0 && p <= 1.0, "{kind:?} {sided:?} {p}");
            }
        }
    }
    let huge = null_dist::shipped(&LimitKind::CvM).unwrap().pvalue(1e9);
    assert!(huge > 0.0);
}

#[test]
fn permutation_is_reproducible() {
    let data = MultiProcessData::single("lhd", lhd());
    let mut spec = TestSpec::new(TestKind::Ks);
    spec.pvalue = PValueMethod::Permutation { b: 199, seed: 9 };
    let a = run_test(&data, &spec).unwrap();
    let b = run_test(&data, &spec).unwrap();
    assert_eq!(a, b);
}
