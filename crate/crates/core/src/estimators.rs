//! Estimators of the gap mean, standard deviation and coefficient of
//! variation under the renewal-process null.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::event_data::{EventSeries, MultiProcessData};

/// How a set of estimates was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// Mean and standard deviation of complete gaps.
    Sample,
    /// Moment estimators that use the censored remainder.
    CensoredAware,
    /// Successive-difference variance paired with the sample mean.
    Difference,
    /// Weibull renewal-process maximum likelihood.
    WeibullMle,
    /// Coefficient of variation supplied by the caller (e.g. 1 for a Poisson null).
    Fixed,
}

/// Selects an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Sample,
    Censored,
    Diff,
    Weibull,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Self::Sample),
            "censored" => Ok(Self::Censored),
            "diff" => Ok(Self::Diff),
            "weibull" => Ok(Self::Weibull),
            _ => Err(Error::InvalidParameter(format!("unknown estimator '{s}'"))),
        }
    }
}

/// Mean, standard deviation and coefficient of variation of the gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub method: EstimateMethod,
}

impl Estimates {
    pub fn new(mu: f64, sigma: f64, method: EstimateMethod) -> Self {
        Self {
            mu,
            sigma,
            gamma: sigma / mu,
            method,
        }
    }

    /// Estimates carrying only a known coefficient of variation.
    pub fn fixed_gamma(gamma: f64) -> Self {
        Self {
            mu: 1.0,
            sigma: gamma,
            gamma,
            method: EstimateMethod::Fixed,
        }
    }
}

fn need_gaps(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        Err(Error::EstimatorUndefined(format!(
            "{what} needs at least {min} complete gaps, got {n}"
        )))
    } else {
        Ok(())
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Sample mean and standard deviation of the complete gaps; the censored
/// remainder is ignored. The variance uses the `n - 1` divisor.
pub fn sample_estimates(series: &EventSeries) -> Result<Estimates> {
    let gaps = series.interevent_times().complete;
    need_gaps(gaps.len(), 2, "sample estimator")?;
    let (mu, sd) = mean_sd(&gaps);
    Ok(Estimates::new(mu, sd, EstimateMethod::Sample))
}

/// `mu = tau / N`, `sigma^2 = (sum X_i^2 + (tau - T_N)^2) / N - mu^2`.
pub fn censored_estimates(series: &EventSeries) -> Result<Estimates> {
    let g = series.interevent_times();
    need_gaps(g.complete.len(), 1, "censored-aware estimator")?;
    let n = g.complete.len() as f64;
    let mu = series.tau() / n;
    let sumsq = g.complete.iter().map(|x| x * x).sum::<f64>() + g.remainder * g.remainder;
    censored_from_moments(mu, sumsq / n - mu * mu)
}

fn censored_from_moments(mu: f64, var: f64) -> Result<Estimates> {
    if var < 0.0 {
        return Err(Error::EstimatorUndefined(format!(
            "censored-aware variance is negative ({var})"
        )));
    }
    Ok(Estimates::new(
        mu,
        var.sqrt(),
        EstimateMethod::CensoredAware,
    ))
}

fn squared_successive_differences(gaps: &[f64]) -> f64 {
    gaps.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// `sigma*^2 = sum (X_{i+1} - X_i)^2 / (2 (N - 1))`, paired with the sample
/// mean of the complete gaps.
pub fn diff_variance(series: &EventSeries) -> Result<Estimates> {
    let gaps = series.interevent_times().complete;
    need_gaps(gaps.len(), 2, "difference variance estimator")?;
    let n = gaps.len() as f64;
    let var = squared_successive_differences(&gaps) / (2.0 * (n - 1.0));
    let mu = gaps.iter().sum::<f64>() / n;
    Ok(Estimates::new(mu, var.sqrt(), EstimateMethod::Difference))
}

/// Dispatches to the chosen single-process estimator.
pub fn estimate(series: &EventSeries, kind: EstimatorKind) -> Result<Estimates> {
    match kind {
        EstimatorKind::Sample => sample_estimates(series),
        EstimatorKind::Censored => censored_estimates(series),
        EstimatorKind::Diff => diff_variance(series),
        EstimatorKind::Weibull => {
            let g = series.interevent_times();
            Ok(fit_weibull(&g.complete, &[g.remainder])?.derived)
        }
    }
}

/// One estimate shared by all processes (common gap distribution).
pub fn pooled_estimates(data: &MultiProcessData, kind: EstimatorKind) -> Result<Estimates> {
    match kind {
        EstimatorKind::Sample => {
            let gaps: Vec<f64> = data
                .series()
                .flat_map(|s| s.interevent_times().complete)
                .collect();
            need_gaps(gaps.len(), 2, "pooled sample estimator")?;
            let (mu, sd) = mean_sd(&gaps);
            Ok(Estimates::new(mu, sd, EstimateMethod::Sample))
        }
        EstimatorKind::Censored => {
            let n = data.total_events();
            need_gaps(n, 1, "pooled censored-aware estimator")?;
            let total_tau: f64 = data.series().map(EventSeries::tau).sum();
            let sumsq: f64 = data
                .series()
                .map(|s| {
                    let g = s.interevent_times();
                    g.complete.iter().map(|x| x * x).sum::<f64>() + g.remainder * g.remainder
                })
                .sum();
            let mu = total_tau / n as f64;
            censored_from_moments(mu, sumsq / n as f64 - mu * mu)
        }
        EstimatorKind::Diff => {
            let mut sum_sq = 0.0;
            let mut pairs = 0usize;
            let mut gaps_total = 0.0;
            let mut n = 0usize;
            for s in data.series() {
                let g = s.interevent_times().complete;
                sum_sq += squared_successive_differences(&g);
                pairs += g.len().saturating_sub(1);
                gaps_total += g.iter().sum::<f64>();
                n += g.len();
            }
            if pairs == 0 {
                return Err(Error::EstimatorUndefined(
                    "pooled difference estimator needs a process with 2 complete gaps".into(),
                ));
            }
            let var = sum_sq / (2.0 * pairs as f64);
            Ok(Estimates::new(
                gaps_total / n as f64,
                var.sqrt(),
                EstimateMethod::Difference,
            ))
        }
        EstimatorKind::Weibull => Ok(fit_weibull_rp(data)?.derived),
    }
}

/// Weibull renewal-process fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub derived: Estimates,
}

impl WeibullFit {
    /// Gap mean and standard deviation implied by shape and scale.
    pub fn moments(shape: f64, scale: f64) -> (f64, f64) {
        let g1 = gamma(1.0 + 1.0 / shape);
        let g2 = gamma(1.0 + 2.0 / shape);
        (scale * g1, scale * (g2 - g1 * g1).max(0.0).sqrt())
    }
}

const SHAPE_REL_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;
const SHAPE_LIMITS: (f64, f64) = (1e-6, 1e6);

/// Fits a Weibull renewal process to all processes at once: complete gaps
/// contribute densities, each final remainder a survival term.
pub fn fit_weibull_rp(data: &MultiProcessData) -> Result<WeibullFit> {
    let mut complete = Vec::new();
    let mut censored = Vec::new();
    for s in data.series() {
        let g = s.interevent_times();
        complete.extend(g.complete);
        censored.push(g.remainder);
    }
    fit_weibull(&complete, &censored)
}

/// Closed-form scale maximizing the censored likelihood at a fixed shape.
pub fn weibull_scale_given_shape(shape: f64, complete: &[f64], censored: &[f64]) -> f64 {
    let ymax = complete
        .iter()
        .chain(censored)
        .fold(0.0f64, |m, &y| m.max(y));
    let s: f64 = complete
        .iter()
        .chain(censored)
        .filter(|&&y| y > 0.0)
        .map(|&y| (y / ymax).powf(shape))
        .sum();
    ymax * (s / complete.len() as f64).powf(1.0 / shape)
}

/// Censored Weibull log-likelihood.
pub fn weibull_log_likelihood(shape: f64, scale: f64, complete: &[f64], censored: &[f64]) -> f64 {
    let dens: f64 = complete
        .iter()
        .map(|&x| {
            shape.ln() - scale.ln() + (shape - 1.0) * (x / scale).ln() - (x / scale).powf(shape)
        })
        .sum();
    let surv: f64 = censored
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| -(r / scale).powf(shape))
        .sum();
    dens + surv
}

/// Profile score in the shape parameter; strictly decreasing.
fn profile_score(shape: f64, complete: &[f64], censored: &[f64], ymax: f64, mean_log: f64) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    for &y in complete.iter().chain(censored) {
        if y > 0.0 {
            let z = y / ymax;
            let w = z.powf(shape);
            s0 += w;
            s1 += w * z.ln();
        }
    }
    1.0 / shape + mean_log - (s1 / s0 + ymax.ln())
}

fn fit_weibull(complete: &[f64], censored: &[f64]) -> Result<WeibullFit> {
    if complete.is_empty() {
        return Err(Error::EstimatorUndefined(
            "Weibull fit needs at least one complete gap".into(),
        ));
    }
    let n = complete.len() as f64;
    let mean_log = complete.iter().map(|x| x.ln()).sum::<f64>() / n;
    let ymax = complete
        .iter()
        .chain(censored)
        .fold(0.0f64, |m, &y| m.max(y));
    let score = |b: f64| profile_score(b, complete, censored, ymax, mean_log);

    let (mut lo, mut hi) = (0.1, 10.0);
    while score(lo) < 0.0 {
        lo /= 10.0;
        if lo < SHAPE_LIMITS.0 {
            return Err(Error::EstimatorUndefined(
                "Weibull shape estimate collapses to zero".into(),
            ));
        }
    }
    while score(hi) > 0.0 {
        hi *= 10.0;
        if hi > SHAPE_LIMITS.1 {
            return Err(Error::EstimatorUndefined(
                "Weibull likelihood unbounded in shape (identical gaps)".into(),
            ));
        }
    }

    let mut iterations = 0;
    let mut mid = 0.5 * (lo + hi);
    loop {
        if iterations >= MAX_ITER {
            return Err(Error::NonConvergence {
                iterations,
                last_shape: mid,
            });
        }
        iterations += 1;
        mid = 0.5 * (lo + hi);
        let v = score(mid);
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if v == 0.0 || (hi - lo) <= SHAPE_REL_TOL * mid {
            break;
        }
    }
    let shape = 0.5 * (lo + hi);
    let scale = weibull_scale_given_shape(shape, complete, censored);
    let (mu, sigma) = WeibullFit::moments(shape, scale);
    Ok(WeibullFit {
        shape,
        scale,
        log_likelihood: weibull_log_likelihood(shape, scale, complete, censored),
        iterations,
        derived: Estimates::new(mu, sigma, EstimateMethod::WeibullMle),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::lhd;

    fn from_gaps(gaps: &[f64], extra: f64) -> EventSeries {
        let total: f64 = gaps.iter().sum();
        EventSeries::from_gaps(gaps, total + extra).unwrap()
    }

    #[test]
    fn constant_gaps() {
        let s = from_gaps(&[5.0; 4], 3.0);
        let e = sample_estimates(&s).unwrap();
        assert_eq!((e.mu, e.sigma, e.gamma), (5.0, 0.0, 0.0));
        assert_eq!(diff_variance(&s).unwrap().sigma, 0.0);
    }

    #[test]
    fn two_gaps_hand_computed() {
        // X = (1, 3): mean 2, squared deviations sum to 2, divisor n - 1 = 1.
        let e = sample_estimates(&from_gaps(&[1.0, 3.0], 0.5)).unwrap();
        assert_eq!(e.mu, 2.0);
        assert!((e.sigma.powi(2) - 2.0).abs() < 1e-15);
        assert!((e.gamma - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn diff_variance_hand_computed() {
        let e = diff_variance(&from_gaps(&[1.0, 3.0, 1.0], 0.0)).unwrap();
        assert!((e.sigma.powi(2) - 2.0).abs() < 1e-14);
        assert_eq!(e.method, EstimateMethod::Difference);
    }

    #[test]
    fn too_few_gaps() {
        let s = EventSeries::new(vec![1.0], 2.0).unwrap();
        assert!(matches!(
            sample_estimates(&s),
            Err(Error::EstimatorUndefined(_))
        ));
        assert!(matches!(
            diff_variance(&s),
            Err(Error::EstimatorUndefined(_))
        ));
    }

    #[test]
    fn censored_regular_and_degenerate() {
        let e =
            censored_estimates(&EventSeries::new(vec![1.0, 2.0, 3.0, 4.0], 4.0).unwrap()).unwrap();
        assert_eq!(e.mu, 1.0);
        assert_eq!(e.sigma, 0.0);

        // T = (1), tau = 2: (1 + 1)/1 - 4 = -2.
        match censored_estimates(&EventSeries::new(vec![1.0], 2.0).unwrap()) {
            Err(Error::EstimatorUndefined(msg)) => assert!(msg.contains("-2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lhd_table_values() {
        let s = lhd();
        let e = sample_estimates(&s).unwrap();
        assert!((e.mu - 54.72).abs() < 0.01, "{e:?}");
        assert!((e.sigma - 48.61).abs() < 0.01, "{e:?}");
        assert!((e.gamma - 0.888).abs() < 0.001, "{e:?}");

        let e = censored_estimates(&s).unwrap();
        assert!((e.mu - 55.56).abs() < 0.01, "{e:?}");
        assert!((e.sigma - 47.23).abs() < 0.01, "{e:?}");
        assert!((e.gamma - 0.850).abs() < 0.001, "{e:?}");

        let e = diff_variance(&s).unwrap();
        assert!((e.sigma - 42.77).abs() < 0.01, "{e:?}");
        assert!((e.gamma - 0.782).abs() < 0.001, "{e:?}");

        let f = fit_weibull_rp(&MultiProcessData::single("lhd", s)).unwrap();
        assert!((f.derived.mu - 55.46).abs() < 0.02, "{f:?}");
        assert!((f.derived.sigma - 47.22).abs() < 0.02, "{f:?}");
        assert!((f.derived.gamma - 0.851).abs() < 0.002, "{f:?}");
    }

    #[test]
    fn weibull_fit_is_a_maximum() {
        let s = lhd();
        let g = s.interevent_times();
        let f = fit_weibull(&g.complete, &[g.remainder]).unwrap();
        let ll = |b: f64, e: f64| weibull_log_likelihood(b, e, &g.complete, &[g.remainder]);
        for (db, de) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 0.05), (0.0, -0.05)] {
            assert!(ll(f.shape + db, f.scale + de) < f.log_likelihood);
        }
        assert!(f.iterations <= MAX_ITER);
    }

    #[test]
    fn exponential_scale_closed_form() {
        let complete = [1.0, 4.0, 2.5];
        let censored = [0.5, 0.0];
        let eta = weibull_scale_given_shape(1.0, &complete, &censored);
        assert!((eta - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_gaps_unbounded() {
        let s = EventSeries::from_gaps(&[2.0, 2.0, 2.0], 6.0).unwrap();
        assert!(matches!(
            fit_weibull_rp(&MultiProcessData::single("x", s)),
            Err(Error::EstimatorUndefined(_))
        ));
    }

    #[test]
    fn pooled_single_matches_single() {
        let d = MultiProcessData::single("lhd", lhd());
        for kind in [
            EstimatorKind::Sample,
            EstimatorKind::Censored,
            EstimatorKind::Diff,
        ] {
            let a = pooled_estimates(&d, kind).unwrap();
            let b = estimate(&lhd(), kind).unwrap();
            assert!((a.gamma - b.gamma).abs() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn censored_mean_exceeds_sample_mean() {
        let s = lhd();
        assert!(censored_estimates(&s).unwrap().mu > sample_estimates(&s).unwrap().mu);
    }
}
