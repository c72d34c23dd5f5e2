use renewal_trend::statistics::TestKind;
use renewal_trend::study::{run_study, to_csv, GridPoint, Scenario, StudyConfig, StudyRow};

#[test]
fn identical_configs_give_identical_results() {
    let mut cfg = StudyConfig::new(Scenario::PowerMonotonic, 300, 5);
    cfg.grid.truncate(3);
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(to_csv(&a), to_csv(&b));
}

#[test]
fn multi_process_study_runs() {
    let mut cfg = StudyConfig::new(Scenario::MultiProcess { m: 5 }, 200, 6);
    cfg.grid = vec![
        GridPoint {
            shape: 1.5,
            param: 1.0,
            expected_n: 20.0,
        },
        GridPoint {
            shape: 1.5,
            param: 1.3,
            expected_n: 20.0,
        },
    ];
    let r = run_study(&cfg).unwrap();
    assert_eq!(r.rows.len(), 6);
    for row in r.rows.iter().filter(|x| x.point.param == 1.3) {
        assert!(row.proportion() > 0.3, "{:?}", row);
    }
}

#[test]
fn null_points_near_level() {
    let mut cfg = StudyConfig::new(Scenario::PowerMonotonic, 10_000, 71);
    cfg.grid.retain(|g| g.param == 1.0);
    let r = run_study(&cfg).unwrap();
    for x in &r.rows {
        assert!((0.03..=0.07).contains(&x.proportion()), "{:?}", x);
    }
}

fn within_4se_of_alpha(x: &StudyRow, alpha: f64) -> bool {
    let se = (alpha * (1.0 - alpha) / x.reps as f64).sqrt();
    (x.proportion() - alpha).abs() <= 4.0 * se
}

#[test]
#[ignore = "KS is conservative for overdispersed renewals (0.035 at beta 0.75, n 30)"]
fn null_points_hold_level() {
    for scenario in [Scenario::PowerMonotonic, Scenario::PowerBathtub] {
        let mut cfg = StudyConfig::new(scenario, 10_000, 71);
        cfg.grid.retain(|g| g.param == scenario.null_param());
        let r = run_study(&cfg).unwrap();
        let off: Vec<String> = r
            .rows
            .iter()
            .filter(|x| !within_4se_of_alpha(x, cfg.alpha))
            .map(|x| {
                format!(
                    "{} beta={} n={}: {:.4}",
                    x.test.label(),
                    x.point.shape,
                    x.point.expected_n,
                    x.proportion()
                )
            })
            .collect();
        assert!(off.is_empty(), "{}: {}", scenario.name(), off.join(", "));
    }
}

#[test]
#[ignore = "LR falls below alpha under strong bathtub trends because the trend inflates gamma"]
fn bathtub_power_separates_tests() {
    let mut cfg = StudyConfig::new(Scenario::PowerBathtub, 10_000, 72);
    cfg.tests = vec![TestKind::Lr, TestKind::Ad, TestKind::Elr { a: 0.5 }];
    cfg.grid = [0.75, 1.5]
        .map(|shape| GridPoint {
            shape,
            param: 8.0,
            expected_n: 60.0,
        })
        .to_vec();
    let r = run_study(&cfg).unwrap();
    for x in &r.rows {
        let se = x
            .se()
            .max((cfg.alpha * (1.0 - cfg.alpha) / x.reps as f64).sqrt());
        match x.test {
            TestKind::Lr => assert!(within_4se_of_alpha(x, cfg.alpha), "LR {:?}", x),
            _ => assert!(x.proportion() > cfg.alpha + 10.0 * se, "{:?}", x),
        }
    }
}
