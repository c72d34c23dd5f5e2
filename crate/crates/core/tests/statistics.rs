use rand::Rng as _;
use renewal_trend::event_data::EventSeries;
use renewal_trend::null_dist::{self, kolmogorov_sf, normal_two_sided_p, LimitKind};
use renewal_trend::seeding;
use renewal_trend::statistics::{self, ElrConfig};
use renewal_trend::trp_sim::TrpModel;

fn random_series(seed: u64) -> EventSeries {
    let mut rng = seeding::stream(seed, 1);
    let tau = rng.gen_range(1.0..100.0);
    let n = rng.gen_range(1..40);
    let mut t: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1.0) * tau).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    EventSeries::new(t, tau).unwrap()
}

#[test]
fn signed_statistics_scale_inversely_with_gamma() {
    for seed in 0..100 {
        let s = random_series(seed);
        let c = 2.5;
        let lr = statistics::lr(&s, 0.9).unwrap();
        assert!((statistics::lr(&s, 0.9 / c).unwrap() - c * lr).abs() < 1e-10 * lr.abs().max(1.0));
        let cfg = ElrConfig { a: 0.4 };
        let e = statistics::elr(&s, 0.9, cfg).unwrap();
        assert!(
            (statistics::elr(&s, 0.9 / c, cfg).unwrap() - c * e).abs() < 1e-10 * e.abs().max(1.0)
        );
    }
}

#[test]
fn elr_is_continuous_in_a() {
    for seed in 0..50 {
        let s = random_series(seed);
        let mut prev = statistics::elr(&s, 1.0, ElrConfig { a: 0.0 }).unwrap();
        for k in 1..=1000 {
            let a = k as f64 / 1000.0;
            let x = statistics::elr(&s, 1.0, ElrConfig { a }).unwrap();
            assert!((x - prev).abs() < 0.2, "jump at a = {a}: {prev} -> {x}");
            prev = x;
        }
        let lr = statistics::lr(&s, 1.0).unwrap();
        assert!((prev + lr).abs() < 1e-12);
    }
}

#[test]
fn null_calibration_on_poisson_with_known_gamma() {
    let reps = 10_000u64;
    let model = TrpModel::renewal(1.0).unwrap();
    let cvm = null_dist::shipped(&LimitKind::CvM).unwrap();
    let ad = null_dist::shipped(&LimitKind::AD).unwrap();
    let mut rej = [0usize; 5];
    for r in 0..reps {
        let mut rng = seeding::stream(51, r);
        let s = model.sample(50.0, &mut rng).unwrap();
        if s.is_empty() {
            continue;
        }
        let p = [
            normal_two_sided_p(statistics::lr(&s, 1.0).unwrap()),
            kolmogorov_sf(statistics::ks(&s, 1.0).unwrap()),
            cvm.pvalue(statistics::cvm(&s, 1.0).unwrap()),
            statistics::ad(&s, 1.0).map(|x| ad.pvalue(x)).unwrap_or(0.0),
            normal_two_sided_p(statistics::elr(&s, 1.0, ElrConfig { a: 0.5 }).unwrap()),
        ];
        for (k, p) in p.iter().enumerate() {
            if *p <= 0.05 {
                rej[k] += 1;
            }
        }
    }
    for (name, r) in ["LR", "KS", "CvM", "AD", "ELR"].iter().zip(rej) {
        let rate = r as f64 / reps as f64;
        assert!((0.040..=0.065).contains(&rate), "{name}: {rate}");
    }
}
