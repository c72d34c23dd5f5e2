//! Trend test statistics.
//!
//! Single process: Lewis-Robinson (LR), Kolmogorov-Smirnov (KS),
//! Cramér-von Mises (CvM), Anderson-Darling (AD) and the extended
//! Lewis-Robinson test (ELR) with split point `a`. Several processes: the
//! weighted LR test, its ELR counterpart, the generalized Laplace test (GL)
//! and a weighted sum of single-process CvM statistics.
//!
//! All statistics are closed forms of functionals of the path in
//! [`crate::bridge`]; write `s_i = T_i / tau` and `N = N(tau)`.
//! Positive LR values indicate an increasing event rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, EstimateMethod, Estimates, EstimatorKind};
use crate::event_data::{EventSeries, MultiProcessData};
use crate::null_dist::{
    self, kolmogorov_sf, normal_pvalue, LimitKind, LimitTable, Sidedness, TableSource,
};

/// Test identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TestKind {
    Lr,
    Ks,
    Cvm,
    Ad,
    Elr {
        a: f64,
    },
    /// Weighted LR over several processes.
    LrMulti,
    /// ELR over several processes with the LR weights.
    ElrMulti {
        a: f64,
    },
    /// Generalized Laplace.
    Gl,
    /// Weighted sum of single-process CvM statistics.
    CvmMulti,
}

impl TestKind {
    pub fn label(&self) -> &'static str {
        match self {
            TestKind::Lr => "LR",
            TestKind::Ks => "KS",
            TestKind::Cvm => "CvM",
            TestKind::Ad => "AD",
            TestKind::Elr { .. } => "ELR",
            TestKind::LrMulti => "LRm",
            TestKind::ElrMulti { .. } => "ELRm",
            TestKind::Gl => "GL",
            TestKind::CvmMulti => "CvMm",
        }
    }

    /// Whether the statistic is signed with a standard normal limit.
    pub fn is_signed(&self) -> bool {
        matches!(
            self,
            TestKind::Lr
                | TestKind::Elr { .. }
                | TestKind::LrMulti
                | TestKind::ElrMulti { .. }
                | TestKind::Gl
        )
    }

    pub fn is_multi(&self) -> bool {
        matches!(
            self,
            TestKind::LrMulti | TestKind::ElrMulti { .. } | TestKind::Gl | TestKind::CvmMulti
        )
    }

    /// Parses `lr|ks|cvm|ad|elr|lrm|elrm|gl|cvmm`; `a` is used by the ELR tests.
    pub fn parse(name: &str, a: f64) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "lr" => TestKind::Lr,
            "ks" => TestKind::Ks,
            "cvm" => TestKind::Cvm,
            "ad" => TestKind::Ad,
            "elr" => TestKind::Elr { a },
            "lrm" => TestKind::LrMulti,
            "elrm" => TestKind::ElrMulti { a },
            "gl" => TestKind::Gl,
            "cvmm" => TestKind::CvmMulti,
            other => return Err(Error::InvalidParameter(format!("unknown test '{other}'"))),
        })
    }
}

/// How a p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    AsymptoticNormal,
    KolmogorovSeries,
    MonteCarloLimit,
    Permutation,
    MonteCarloSum,
    /// Normal approximation to a weighted sum of CvM limits.
    NormalApproximation,
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub p_method: PMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sidedness: Option<Sidedness>,
    pub n_effective: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimateMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TestResult {
    fn new(test: TestKind, statistic: f64, p_value: f64, p_method: PMethod, n: usize) -> Self {
        Self {
            test,
            statistic,
            p_value,
            p_method,
            sidedness: None,
            n_effective: n,
            estimator: None,
            gamma: None,
            warnings: Vec::new(),
        }
    }

    fn normal(test: TestKind, statistic: f64, n: usize) -> Self {
        let mut r = Self::new(
            test,
            statistic,
            normal_pvalue(statistic, Sidedness::TwoSided),
            PMethod::AsymptoticNormal,
            n,
        );
        r.sidedness = Some(Sidedness::TwoSided);
        r
    }

    fn with_estimates(mut self, est: &Estimates) -> Self {
        self.estimator = Some(est.method);
        self.gamma = Some(est.gamma);
        self
    }

    /// Recomputes a normal-limit p-value for another alternative. Other
    /// p-value methods are returned unchanged.
    pub fn with_sidedness(mut self, sided: Sidedness) -> Self {
        if self.p_method == PMethod::AsymptoticNormal {
            self.p_value = normal_pvalue(self.statistic, sided);
            self.sidedness = Some(sided);
        }
        self
    }
}

/// ELR split point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElrConfig {
    pub a: f64,
}

impl Default for ElrConfig {
    fn default() -> Self {
        Self { a: 0.5 }
    }
}

impl ElrConfig {
    pub fn new(a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!(
                "split point a = {a} outside [0, 1]"
            )));
        }
        Ok(Self { a })
    }

    /// Null variance `1/12 - a^2 (1-a)^2` of the split-area functional.
    pub fn variance(&self) -> f64 {
        let a = self.a;
        1.0 / 12.0 - a * a * (1.0 - a) * (1.0 - a)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::UndefinedStatistic(format!(
            "coefficient of variation must be positive, got {gamma}"
        )))
    }
}

fn check_events(series: &EventSeries) -> Result<()> {
    if series.is_empty() {
        Err(Error::UndefinedStatistic("series has no events".into()))
    } else {
        Ok(())
    }
}

/// `U = sum T_i - N tau / 2`.
pub fn laplace_sum(series: &EventSeries) -> f64 {
    series.times().iter().sum::<f64>() - series.len() as f64 * series.tau() / 2.0
}

/// `sum |T_i - a tau| - (1/2 - a (1 - a)) tau N`.
fn split_sum(series: &EventSeries, a: f64) -> f64 {
    let tau = series.tau();
    let at = a * tau;
    series.times().iter().map(|t| (t - at).abs()).sum::<f64>()
        - (0.5 - a * (1.0 - a)) * tau * series.len() as f64
}

/// LR statistic `sqrt(12) U / (gamma tau sqrt(N))`.
pub fn lr(series: &EventSeries, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_events(series)?;
    let n = series.len() as f64;
    Ok(12f64.sqrt() * laplace_sum(series) / (gamma * series.tau() * n.sqrt()))
}

/// KS statistic: supremum of the absolute path, attained at a jump.
pub fn ks(series: &EventSeries, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_events(series)?;
    let n = series.len() as f64;
    let rate = n / series.tau();
    let max = series
        .times()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let i = (k + 1) as f64;
            let drift = rate * t;
            (i - drift).abs().max((i - 1.0 - drift).abs())
        })
        .fold(0.0f64, f64::max);
    Ok(max / (gamma * n.sqrt()))
}

/// CvM statistic `int V^2`.
pub fn cvm(series: &EventSeries, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_events(series)?;
    let tau = series.tau();
    let nn = series.len() as f64;
    let mut acc = 0.0;
    let mut prev = 0.0;
    for (i, &t) in series.times().iter().enumerate() {
        let s = t / tau;
        let i = i as f64;
        acc += i * i * (s - prev) - i * nn * (s * s - prev * prev);
        prev = s;
    }
    acc += nn * nn * (prev * prev - prev + 1.0 / 3.0);
    Ok(acc / (gamma * gamma * nn))
}

/// AD statistic `int V^2 / (s (1 - s))`.
///
/// Infinite when the last event falls exactly on `tau`.
pub fn ad(series: &EventSeries, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_events(series)?;
    if series.last_time() >= series.tau() {
        return Err(Error::InfiniteStatistic(
            "Anderson-Darling statistic diverges when the last event is at the censoring time"
                .into(),
        ));
    }
    let tau = series.tau();
    let s: Vec<f64> = series.times().iter().map(|t| t / tau).collect();
    let n = s.len();
    let nn = n as f64;
    let mut acc = 0.0;
    for i in 1..n {
        let (lo, hi) = (s[i - 1], s[i]);
        let fi = i as f64;
        acc += (nn - fi).powi(2) * ((1.0 - lo) / (1.0 - hi)).ln() + fi * fi * (hi / lo).ln();
    }
    acc += nn * nn * (-(1.0 - s[0]).ln() - s[n - 1].ln() - 1.0);
    Ok(acc / (gamma * gamma * nn))
}

/// ELR statistic for split point `a`; `a = 0` gives LR and `a = 1` gives -LR.
pub fn elr(series: &EventSeries, gamma: f64, cfg: ElrConfig) -> Result<f64> {
    check_gamma(gamma)?;
    check_events(series)?;
    ElrConfig::new(cfg.a)?;
    let n = series.len() as f64;
    Ok(split_sum(series, cfg.a) / (gamma * series.tau() * n.sqrt() * cfg.variance().sqrt()))
}

/// LR test with a two-sided normal p-value.
pub fn lr_statistic(series: &EventSeries, est: &Estimates) -> Result<TestResult> {
    let z = lr(series, est.gamma)?;
    Ok(TestResult::normal(TestKind::Lr, z, series.len()).with_estimates(est))
}

/// KS test with a Kolmogorov-distribution p-value.
pub fn ks_statistic(series: &EventSeries, est: &Estimates) -> Result<TestResult> {
    let x = ks(series, est.gamma)?;
    Ok(TestResult::new(
        TestKind::Ks,
        x,
        kolmogorov_sf(x),
        PMethod::KolmogorovSeries,
        series.len(),
    )
    .with_estimates(est))
}

/// CvM test with a p-value from the shipped limit table.
pub fn cvm_statistic(series: &EventSeries, est: &Estimates) -> Result<TestResult> {
    cvm_statistic_with(series, est, TableSource::Shipped)
}

pub fn cvm_statistic_with(
    series: &EventSeries,
    est: &Estimates,
    source: TableSource,
) -> Result<TestResult> {
    let x = cvm(series, est.gamma)?;
    let p = null_dist::limit_pvalue(&LimitKind::CvM, x, source)?;
    Ok(
        TestResult::new(TestKind::Cvm, x, p, PMethod::MonteCarloLimit, series.len())
            .with_estimates(est),
    )
}

/// AD test with a p-value from the shipped limit table.
pub fn ad_statistic(series: &EventSeries, est: &Estimates) -> Result<TestResult> {
    ad_statistic_with(series, est, TableSource::Shipped)
}

pub fn ad_statistic_with(
    series: &EventSeries,
    est: &Estimates,
    source: TableSource,
) -> Result<TestResult> {
    let x = ad(series, est.gamma)?;
    let p = null_dist::limit_pvalue(&LimitKind::AD, x, source)?;
    Ok(
        TestResult::new(TestKind::Ad, x, p, PMethod::MonteCarloLimit, series.len())
            .with_estimates(est),
    )
}

/// ELR test with a two-sided normal p-value.
pub fn elr_statistic(series: &EventSeries, est: &Estimates, cfg: ElrConfig) -> Result<TestResult> {
    let z = elr(series, est.gamma, cfg)?;
    Ok(TestResult::normal(TestKind::Elr { a: cfg.a }, z, series.len()).with_estimates(est))
}

/// Coefficients of variation for the multi-process tests.
#[derive(Debug, Clone, PartialEq)]
pub enum MultiEstimates {
    /// One estimate per process, aligned with `MultiProcessData::processes`.
    PerProcess(Vec<Estimates>),
    /// A single estimate shared by all processes.
    Pooled(Estimates),
}

impl MultiEstimates {
    fn gamma(&self, j: usize) -> f64 {
        match self {
            MultiEstimates::PerProcess(v) => v[j].gamma,
            MultiEstimates::Pooled(e) => e.gamma,
        }
    }

    fn check_len(&self, m: usize) -> Result<()> {
        match self {
            MultiEstimates::PerProcess(v) if v.len() != m => Err(Error::InvalidParameter(format!(
                "{} estimates for {m} processes",
                v.len()
            ))),
            _ => Ok(()),
        }
    }

    fn annotate(&self, mut r: TestResult) -> TestResult {
        if let MultiEstimates::Pooled(e) = self {
            r = r.with_estimates(e);
        } else if let MultiEstimates::PerProcess(v) = self {
            r.estimator = v.first().map(|e| e.method);
        }
        r
    }
}

/// Indices of processes with at least one event, plus a warning for the rest.
fn nonempty(data: &MultiProcessData) -> Result<(Vec<usize>, Vec<String>)> {
    let mut keep = Vec::new();
    let mut warnings = Vec::new();
    for (j, p) in data.processes().iter().enumerate() {
        if p.series.is_empty() {
            warnings.push(format!("process '{}' has no events and was dropped", p.id));
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(Error::UndefinedStatistic("all processes are empty".into()));
    }
    Ok((keep, warnings))
}

/// `sqrt(sum_k gamma_k^2 tau_k^2 N_k)` over the kept processes.
fn lr_weight_norm(data: &MultiProcessData, ests: &MultiEstimates, keep: &[usize]) -> Result<f64> {
    let mut acc = 0.0;
    for &j in keep {
        let g = ests.gamma(j);
        check_gamma(g)?;
        let s = &data.processes()[j].series;
        acc += g * g * s.tau() * s.tau() * s.len() as f64;
    }
    Ok(acc.sqrt())
}

/// Weighted LR with weights proportional to `gamma_j tau_j sqrt(N_j)`.
pub fn lr_multi(data: &MultiProcessData, ests: &MultiEstimates) -> Result<TestResult> {
    ests.check_len(data.len())?;
    let (keep, warnings) = nonempty(data)?;
    let norm = lr_weight_norm(data, ests, &keep)?;
    let u: f64 = keep
        .iter()
        .map(|&j| laplace_sum(&data.processes()[j].series))
        .sum();
    let z = 12f64.sqrt() * u / norm;
    let mut r = TestResult::normal(TestKind::LrMulti, z, data.total_events());
    r.warnings = warnings;
    Ok(ests.annotate(r))
}

/// ELR over several processes, combined with the LR weights.
pub fn elr_multi(
    data: &MultiProcessData,
    ests: &MultiEstimates,
    cfg: ElrConfig,
) -> Result<TestResult> {
    ElrConfig::new(cfg.a)?;
    ests.check_len(data.len())?;
    let (keep, warnings) = nonempty(data)?;
    let norm = lr_weight_norm(data, ests, &keep)?;
    let e: f64 = keep
        .iter()
        .map(|&j| split_sum(&data.processes()[j].series, cfg.a))
        .sum();
    let z = e / (norm * cfg.variance().sqrt());
    let mut r = TestResult::normal(TestKind::ElrMulti { a: cfg.a }, z, data.total_events());
    r.warnings = warnings;
    Ok(ests.annotate(r))
}

/// Generalized Laplace statistic `sum U_j / sqrt(sum U_j^2)`. Needs no
/// variance estimate; its normal limit is in the number of processes.
pub fn gl_statistic(data: &MultiProcessData) -> Result<TestResult> {
    let u: Vec<f64> = data.series().map(laplace_sum).collect();
    let ss: f64 = u.iter().map(|x| x * x).sum();
    if ss == 0.0 {
        return Err(Error::UndefinedStatistic(
            "all Laplace sums are zero".into(),
        ));
    }
    let z = u.iter().sum::<f64>() / ss.sqrt();
    let mut r = TestResult::normal(TestKind::Gl, z, data.total_events());
    if data.len() < 2 {
        r.warnings.push(
            "generalized Laplace with one process is just the sign of the Laplace sum".into(),
        );
    }
    Ok(r)
}

/// Weights of the CvM sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvmWeights {
    #[default]
    ProportionalTau,
    GammaTauSqrtN,
}

/// Number of processes from which the CvM sum uses a normal approximation.
pub const CVM_MULTI_NORMAL_FROM: usize = 30;

/// p-value engine for the CvM sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmSumPValue {
    /// Resample the shipped CvM table; normal approximation for many processes.
    Auto { draws: usize, seed: u64 },
    /// Simulate the weighted sum of independent bridges directly.
    Fresh { m: usize, grid_n: usize, seed: u64 },
}

impl Default for CvmSumPValue {
    fn default() -> Self {
        CvmSumPValue::Auto {
            draws: 100_000,
            seed: 0x5eed,
        }
    }
}

/// Weighted sum of per-process CvM statistics, weights normalized to one.
///
/// The weights are treated as fixed at their realized values when computing
/// the p-value.
pub fn cvm_multi(
    data: &MultiProcessData,
    ests: &MultiEstimates,
    weights: CvmWeights,
    engine: CvmSumPValue,
) -> Result<TestResult> {
    ests.check_len(data.len())?;
    let (keep, warnings) = nonempty(data)?;
    let mut w = Vec::with_capacity(keep.len());
    let mut stats = Vec::with_capacity(keep.len());
    for &j in &keep {
        let s = &data.processes()[j].series;
        let g = ests.gamma(j);
        check_gamma(g)?;
        stats.push(cvm(s, g)?);
        w.push(match weights {
            CvmWeights::ProportionalTau => s.tau(),
            CvmWeights::GammaTauSqrtN => g * s.tau() * (s.len() as f64).sqrt(),
        });
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let statistic: f64 = w.iter().zip(&stats).map(|(a, b)| a * b).sum();

    let (p, method) = match engine {
        CvmSumPValue::Auto { draws, seed } => {
            if w.len() >= CVM_MULTI_NORMAL_FROM {
                (
                    null_dist::weighted_cvm_sum_normal_pvalue(&w, statistic),
                    PMethod::NormalApproximation,
                )
            } else {
                let table = null_dist::shipped(&LimitKind::CvM)?;
                let p = if w.len() == 1 {
                    table.pvalue(statistic)
                } else {
                    null_dist::weighted_cvm_sum_pvalue(&w, statistic, table, draws, seed)
                };
                (p, PMethod::MonteCarloSum)
            }
        }
        CvmSumPValue::Fresh { m, grid_n, seed } => {
            let table = LimitTable::build(LimitKind::WeightedSum(w.clone()), m, grid_n, seed)?;
            (table.pvalue(statistic), PMethod::MonteCarloSum)
        }
    };
    let mut r = TestResult::new(
        TestKind::CvmMulti,
        statistic,
        p,
        method,
        data.total_events(),
    );
    r.warnings = warnings;
    Ok(ests.annotate(r))
}

/// p-value engine selection for [`run_test`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Normal, Kolmogorov series or shipped Monte Carlo tables.
    #[default]
    Asymptotic,
    /// Freshly simulated limit tables of size `m` (CvM, AD, CvMm only).
    MonteCarlo { m: usize, grid_n: usize, seed: u64 },
    /// Gap permutation with `b` replicates.
    Permutation { b: usize, seed: u64 },
}

/// Everything needed to run one test on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec {
    pub kind: TestKind,
    pub estimator: EstimatorKind,
    /// Known coefficient of variation; bypasses estimation.
    pub gamma: Option<f64>,
    /// Share one estimate across processes.
    pub pooled: bool,
    pub sided: Sidedness,
    pub pvalue: PValueMethod,
    pub cvm_weights: CvmWeights,
}

impl TestSpec {
    pub fn new(kind: TestKind) -> Self {
        Self {
            kind,
            estimator: EstimatorKind::Sample,
            gamma: None,
            pooled: false,
            sided: Sidedness::TwoSided,
            pvalue: PValueMethod::Asymptotic,
            cvm_weights: CvmWeights::default(),
        }
    }

    fn single_estimate(&self, series: &EventSeries) -> Result<Estimates> {
        match self.gamma {
            Some(g) => Ok(Estimates::fixed_gamma(g)),
            None => estimators::estimate(series, self.estimator),
        }
    }

    fn multi_estimates(&self, data: &MultiProcessData) -> Result<MultiEstimates> {
        if let Some(g) = self.gamma {
            return Ok(MultiEstimates::Pooled(Estimates::fixed_gamma(g)));
        }
        if self.pooled {
            return Ok(MultiEstimates::Pooled(estimators::pooled_estimates(
                data,
                self.estimator,
            )?));
        }
        data.processes()
            .iter()
            .map(|p| {
                if p.series.is_empty() {
                    // Dropped by the statistic; placeholder keeps indices aligned.
                    Ok(Estimates::fixed_gamma(1.0))
                } else {
                    estimators::estimate(&p.series, self.estimator)
                        .map_err(|e| Error::EstimatorUndefined(format!("process '{}': {e}", p.id)))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiEstimates::PerProcess)
    }

    fn only_series<'a>(&self, data: &'a MultiProcessData) -> Result<&'a EventSeries> {
        if data.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "{} is a single-process test but the data hold {} processes",
                self.kind.label(),
                data.len()
            )));
        }
        Ok(&data.processes()[0].series)
    }

    /// Statistic only, with estimates recomputed from `data`.
    pub fn statistic(&self, data: &MultiProcessData) -> Result<f64> {
        self.raw(data)
    }

    fn evaluate(&self, data: &MultiProcessData, pvalue: PValueMethod) -> Result<TestResult> {
        let source = match pvalue {
            PValueMethod::MonteCarlo { m, grid_n, seed } => TableSource::Fresh { m, grid_n, seed },
            _ => TableSource::Shipped,
        };
        let r = match self.kind {
            TestKind::Lr => {
                let s = self.only_series(data)?;
                lr_statistic(s, &self.single_estimate(s)?)?
            }
            TestKind::Ks => {
                let s = self.only_series(data)?;
                ks_statistic(s, &self.single_estimate(s)?)?
            }
            TestKind::Cvm => {
                let s = self.only_series(data)?;
                cvm_statistic_with(s, &self.single_estimate(s)?, source)?
            }
            TestKind::Ad => {
                let s = self.only_series(data)?;
                ad_statistic_with(s, &self.single_estimate(s)?, source)?
            }
            TestKind::Elr { a } => {
                let s = self.only_series(data)?;
                elr_statistic(s, &self.single_estimate(s)?, ElrConfig::new(a)?)?
            }
            TestKind::LrMulti => lr_multi(data, &self.multi_estimates(data)?)?,
            TestKind::ElrMulti { a } => {
                elr_multi(data, &self.multi_estimates(data)?, ElrConfig::new(a)?)?
            }
            TestKind::Gl => gl_statistic(data)?,
            TestKind::CvmMulti => {
                let engine = match pvalue {
                    PValueMethod::MonteCarlo { m, grid_n, seed } => {
                        CvmSumPValue::Fresh { m, grid_n, seed }
                    }
                    _ => CvmSumPValue::default(),
                };
                cvm_multi(data, &self.multi_estimates(data)?, self.cvm_weights, engine)?
            }
        };
        Ok(r)
    }

    /// Statistic without any p-value work.
    fn raw(&self, data: &MultiProcessData) -> Result<f64> {
        Ok(match self.kind {
            TestKind::Lr => {
                let s = self.only_series(data)?;
                lr(s, self.single_estimate(s)?.gamma)?
            }
            TestKind::Ks => {
                let s = self.only_series(data)?;
                ks(s, self.single_estimate(s)?.gamma)?
            }
            TestKind::Cvm => {
                let s = self.only_series(data)?;
                cvm(s, self.single_estimate(s)?.gamma)?
            }
            TestKind::Ad => {
                let s = self.only_series(data)?;
                ad(s, self.single_estimate(s)?.gamma)?
            }
            TestKind::Elr { a } => {
                let s = self.only_series(data)?;
                elr(s, self.single_estimate(s)?.gamma, ElrConfig::new(a)?)?
            }
            TestKind::CvmMulti => {
                let ests = self.multi_estimates(data)?;
                let (keep, _) = nonempty(data)?;
                let mut w = Vec::new();
                let mut acc = 0.0;
                for &j in &keep {
                    let s = &data.processes()[j].series;
                    let g = ests.gamma(j);
                    let wj = match self.cvm_weights {
                        CvmWeights::ProportionalTau => s.tau(),
                        CvmWeights::GammaTauSqrtN => g * s.tau() * (s.len() as f64).sqrt(),
                    };
                    acc += wj * cvm(s, g)?;
                    w.push(wj);
                }
                acc / w.iter().sum::<f64>()
            }
            _ => self.evaluate(data, PValueMethod::Asymptotic)?.statistic,
        })
    }
}

/// Runs `spec` on `data`.
pub fn run_test(data: &MultiProcessData, spec: &TestSpec) -> Result<TestResult> {
    match spec.pvalue {
        PValueMethod::Permutation { b, seed } => {
            let mut r = spec.evaluate(data, PValueMethod::Asymptotic)?;
            let sided = if spec.kind.is_signed() {
                spec.sided
            } else {
                Sidedness::Greater
            };
            r.p_value = null_dist::permutation_pvalue(data, |d| spec.statistic(d), sided, b, seed)?;
            r.p_method = PMethod::Permutation;
            r.sidedness = spec.kind.is_signed().then_some(spec.sided);
            Ok(r)
        }
        PValueMethod::MonteCarlo { .. }
            if !matches!(spec.kind, TestKind::Cvm | TestKind::Ad | TestKind::CvmMulti) =>
        {
            Err(Error::InvalidParameter(format!(
                "Monte Carlo limit tables apply to CvM, AD and CvMm, not {}",
                spec.kind.label()
            )))
        }
        method => Ok(spec.evaluate(data, method)?.with_sidedness(spec.sided)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::lhd;

    fn one(times: &[f64], tau: f64) -> EventSeries {
        EventSeries::new(times.to_vec(), tau).unwrap()
    }

    #[test]
    fn lr_symmetric_events_is_zero() {
        let s = one(&[2.5, 5.0, 7.5], 10.0);
        assert!(lr(&s, 0.7).unwrap().abs() < 1e-15);
    }

    #[test]
    fn ks_single_midpoint_event() {
        assert_eq!(ks(&one(&[5.0], 10.0), 1.0).unwrap(), 0.5);
    }

    #[test]
    fn ks_equally_spaced() {
        // T_i = i tau / N: |i - 1 - i| = 1 at every jump.
        let n = 5;
        let s = one(&(1..=n).map(|i| i as f64 * 2.0).collect::<Vec<_>>(), 10.0);
        let v = ks(&s, 1.0).unwrap();
        assert!((v - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cvm_single_midpoint_event() {
        assert!((cvm(&one(&[5.0], 10.0), 1.0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn ad_single_midpoint_event() {
        // int_0^1/2 s/(1-s) + int_1/2^1 (1-s)/s = 2 (ln 2 - 1/2).
        let v = ad(&one(&[5.0], 10.0), 1.0).unwrap();
        assert!((v - 2.0 * (2f64.ln() - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn ad_event_at_tau_is_infinite() {
        assert!(matches!(
            ad(&one(&[3.0, 10.0], 10.0), 1.0),
            Err(Error::InfiniteStatistic(_))
        ));
    }

    #[test]
    fn elr_endpoints_and_normalization() {
        let s = lhd();
        let l = lr(&s, 0.9).unwrap();
        let e0 = elr(&s, 0.9, ElrConfig::new(0.0).unwrap()).unwrap();
        let e1 = elr(&s, 0.9, ElrConfig::new(1.0).unwrap()).unwrap();
        assert!((e0 - l).abs() < 1e-12);
        assert!((e1 + l).abs() < 1e-12);
        assert!((ElrConfig::new(0.5).unwrap().variance() - 1.0 / 48.0).abs() < 1e-17);
        assert!(ElrConfig::new(1.5).is_err());
    }

    #[test]
    fn gamma_zero_rejected() {
        let s = lhd();
        assert!(lr(&s, 0.0).is_err());
        assert!(ks(&s, 0.0).is_err());
        assert!(cvm(&s, 0.0).is_err());
        assert!(elr(&s, 0.0, ElrConfig::default()).is_err());
    }

    #[test]
    fn lhd_lr_values() {
        let s = lhd();
        let est = estimators::sample_estimates(&s).unwrap();
        let r = lr_statistic(&s, &est).unwrap();
        assert!((r.statistic - 0.681).abs() < 0.001, "{r:?}");
        assert!((r.p_value - 0.50).abs() < 0.005, "{r:?}");

        let est = estimators::diff_variance(&s).unwrap();
        let r = lr_statistic(&s, &est).unwrap();
        assert!((r.statistic - 0.774).abs() < 0.001, "{r:?}");
        assert!((r.p_value - 0.44).abs() < 0.005, "{r:?}");
    }

    #[test]
    fn lhd_ks_and_elr_pvalues() {
        let s = lhd();
        let est = estimators::sample_estimates(&s).unwrap();
        let r = ks_statistic(&s, &est).unwrap();
        assert!((r.p_value - 0.29).abs() < 0.01, "{r:?}");
        let r = elr_statistic(&s, &est, ElrConfig::default()).unwrap();
        assert!((r.p_value - 0.011).abs() < 0.002, "{r:?}");
    }

    #[test]
    fn multi_reductions() {
        let s = lhd();
        let est = estimators::sample_estimates(&s).unwrap();
        let d = MultiProcessData::single("lhd", s.clone());
        let m = lr_multi(&d, &MultiEstimates::PerProcess(vec![est])).unwrap();
        assert!((m.statistic - lr(&s, est.gamma).unwrap()).abs() < 1e-12);

        let two = MultiProcessData::new(vec![
            crate::event_data::Process {
                id: "a".into(),
                series: s.clone(),
            },
            crate::event_data::Process {
                id: "b".into(),
                series: s.clone(),
            },
        ])
        .unwrap();
        let m2 = lr_multi(&two, &MultiEstimates::Pooled(est)).unwrap();
        assert!((m2.statistic - 2f64.sqrt() * m.statistic).abs() < 1e-12);

        let em = elr_multi(&d, &MultiEstimates::Pooled(est), ElrConfig::default()).unwrap();
        assert!((em.statistic - elr(&s, est.gamma, ElrConfig::default()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gl_degenerate_cases() {
        let up = one(&[6.0, 9.0], 10.0);
        let r = gl_statistic(&MultiProcessData::single("x", up.clone())).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(!r.warnings.is_empty());

        let down = one(&[1.0, 4.0], 10.0);
        let d = MultiProcessData::new(vec![
            crate::event_data::Process {
                id: "u".into(),
                series: up,
            },
            crate::event_data::Process {
                id: "d".into(),
                series: down,
            },
        ])
        .unwrap();
        assert!(gl_statistic(&d).unwrap().statistic.abs() < 1e-15);

        let flat = MultiProcessData::single("z", one(&[5.0], 10.0));
        assert!(matches!(
            gl_statistic(&flat),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn empty_processes_dropped_with_warning() {
        let d = MultiProcessData::new(vec![
            crate::event_data::Process {
                id: "a".into(),
                series: lhd(),
            },
            crate::event_data::Process {
                id: "b".into(),
                series: one(&[], 100.0),
            },
        ])
        .unwrap();
        let est = estimators::sample_estimates(&lhd()).unwrap();
        let r = lr_multi(&d, &MultiEstimates::Pooled(est)).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!((r.statistic - lr(&lhd(), est.gamma).unwrap()).abs() < 1e-12);

        let empty = MultiProcessData::single("b", one(&[], 1.0));
        assert!(lr_multi(&empty, &MultiEstimates::Pooled(est)).is_err());
    }

    #[test]
    fn sidedness_switch() {
        let s = lhd();
        let est = estimators::sample_estimates(&s).unwrap();
        let r = lr_statistic(&s, &est).unwrap();
        let g = r.clone().with_sidedness(Sidedness::Greater);
        let l = r.clone().with_sidedness(Sidedness::Less);
        assert!((g.p_value + l.p_value - 1.0).abs() < 1e-12);
        assert!((2.0 * g.p_value - r.p_value).abs() < 1e-12);
    }

    #[test]
    fn parse_names() {
        assert_eq!(
            TestKind::parse("elr", 0.25).unwrap(),
            TestKind::Elr { a: 0.25 }
        );
        assert_eq!(TestKind::parse("CVMM", 0.5).unwrap(), TestKind::CvmMulti);
        assert!(TestKind::parse("foo", 0.5).is_err());
    }

    #[test]
    fn json_shape() {
        let s = lhd();
        let est = estimators::sample_estimates(&s).unwrap();
        let r = elr_statistic(&s, &est, ElrConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["test"]["name"], "elr");
        assert_eq!(v["test"]["a"], 0.5);
        assert_eq!(v["p_method"], "asymptotic_normal");
        assert_eq!(v["sidedness"], "two_sided");
        assert_eq!(v["estimator"], "sample");
    }
}
