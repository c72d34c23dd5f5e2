//! Level and power studies.
//!
//! Each grid point fixes a Weibull renewal shape, a trend parameter and an
//! expected event count. For every replicate a dataset is drawn from the
//! corresponding trend-renewal process, `gamma` is re-estimated, every test
//! is applied at level `alpha`, and rejections are counted. Replicates use
//! independent generators derived from `(seed, grid index, replicate index)`,
//! so results are identical regardless of thread count.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorKind};
use crate::event_data::{MultiProcessData, Process};
use crate::null_dist::{self, kolmogorov_sf, normal_two_sided_p, LimitKind, LimitTable};
use crate::seeding;
use crate::statistics::{self, CvmWeights, ElrConfig, MultiEstimates, TestKind};
use crate::trp_sim::{Bathtub, Trend, TrpModel};

/// Simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Weibull renewal processes; the trend parameter is unused.
    LevelRp,
    /// Power-law trend `b t^(b-1)`; the trend parameter is `b`.
    PowerMonotonic,
    /// Symmetric bathtub with equal expected counts per phase; the trend
    /// parameter is the depth `c`.
    PowerBathtub,
    /// `m` independent power-law processes; the trend parameter is `b` and the
    /// expected count applies to each process.
    MultiProcess { m: usize },
}

impl Scenario {
    pub fn name(&self) -> String {
        match self {
            Scenario::LevelRp => "level_rp".into(),
            Scenario::PowerMonotonic => "power_monotonic".into(),
            Scenario::PowerBathtub => "power_bathtub".into(),
            Scenario::MultiProcess { m } => format!("multi_process_{m}"),
        }
    }

    /// Parses `level|monotonic|bathtub|multi:<m>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "level" | "level_rp" => Ok(Scenario::LevelRp),
            "monotonic" | "power_monotonic" => Ok(Scenario::PowerMonotonic),
            "bathtub" | "power_bathtub" => Ok(Scenario::PowerBathtub),
            _ => {
                let m = s
                    .strip_prefix("multi:")
                    .and_then(|m| m.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario '{s}'")))?;
                if m == 0 {
                    return Err(Error::InvalidParameter(
                        "multi-process scenario needs m >= 1".into(),
                    ));
                }
                Ok(Scenario::MultiProcess { m })
            }
        }
    }

    /// Name of the trend parameter in grids and output.
    pub fn param_name(&self) -> &'static str {
        match self {
            Scenario::LevelRp => "none",
            Scenario::PowerMonotonic | Scenario::MultiProcess { .. } => "b",
            Scenario::PowerBathtub => "c",
        }
    }

    /// Trend parameter giving no trend.
    pub fn null_param(&self) -> f64 {
        match self {
            Scenario::PowerBathtub => 0.0,
            _ => 1.0,
        }
    }

    pub fn default_tests(&self) -> Vec<TestKind> {
        let elr = TestKind::Elr { a: 0.5 };
        match self {
            Scenario::LevelRp | Scenario::PowerBathtub => {
                vec![TestKind::Lr, TestKind::Ks, TestKind::Cvm, TestKind::Ad, elr]
            }
            Scenario::PowerMonotonic => {
                vec![TestKind::Lr, TestKind::Ks, TestKind::Cvm, TestKind::Ad]
            }
            Scenario::MultiProcess { .. } => {
                vec![TestKind::LrMulti, TestKind::CvmMulti, TestKind::Gl]
            }
        }
    }

    pub fn default_grid(&self) -> Vec<GridPoint> {
        let shapes = [0.75, 1.5];
        let (params, counts): (Vec<f64>, Vec<f64>) = match self {
            Scenario::LevelRp => (vec![1.0], vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]),
            Scenario::PowerMonotonic => (vec![0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3], vec![30.0]),
            Scenario::PowerBathtub => (vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0], vec![60.0]),
            Scenario::MultiProcess { .. } => (vec![0.8, 0.9, 1.0, 1.1, 1.2], vec![20.0]),
        };
        product(&shapes, &params, &counts)
    }
}

fn product(shapes: &[f64], params: &[f64], counts: &[f64]) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &shape in shapes {
        for &param in params {
            for &expected_n in counts {
                out.push(GridPoint {
                    shape,
                    param,
                    expected_n,
                });
            }
        }
    }
    out
}

/// One design point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Weibull renewal shape.
    pub shape: f64,
    /// Trend parameter (`b` or `c`, see [`Scenario`]).
    pub param: f64,
    /// Expected number of events (per process for multi-process designs).
    pub expected_n: f64,
}

/// Parses a grid such as `shape=0.75,1.5;n=10,30;b=0.8,1` into the
/// Cartesian product. Keys: `shape`, `n`, and `b` or `c` (interchangeable
/// names for the trend parameter). Missing keys fall back to the scenario's
/// default values.
pub fn parse_grid(scenario: Scenario, text: &str) -> Result<Vec<GridPoint>> {
    let defaults = scenario.default_grid();
    let uniq = |f: fn(&GridPoint) -> f64| {
        let mut v: Vec<f64> = Vec::new();
        for g in &defaults {
            let x = f(g);
            if !v.contains(&x) {
                v.push(x);
            }
        }
        v
    };
    let mut shapes = uniq(|g| g.shape);
    let mut params = uniq(|g| g.param);
    let mut counts = uniq(|g| g.expected_n);
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("grid entry '{part}' lacks '='")))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad grid value '{v}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        match key.trim() {
            "shape" | "beta" => shapes = values,
            "n" | "expected_n" => counts = values,
            "b" | "c" | "param" => params = values,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown grid key '{other}'"
                )))
            }
        }
    }
    Ok(product(&shapes, &params, &counts))
}

/// Study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub grid: Vec<GridPoint>,
    pub tests: Vec<TestKind>,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Estimator for `gamma` in every replicate.
    pub estimator: EstimatorKind,
    /// Share one estimate across processes in multi-process designs.
    pub pooled: bool,
    /// Wall-clock budget; grid points not started in time are left incomplete.
    #[serde(skip)]
    pub time_budget: Option<Duration>,
}

impl StudyConfig {
    /// Scenario defaults with `reps` replications.
    pub fn new(scenario: Scenario, reps: usize, seed: u64) -> Self {
        Self {
            scenario,
            grid: scenario.default_grid(),
            tests: scenario.default_tests(),
            reps,
            alpha: 0.05,
            seed,
            estimator: EstimatorKind::Sample,
            pooled: false,
            time_budget: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 100 {
            return Err(Error::InvalidParameter(format!(
                "studies need at least 100 replications, got {}",
                self.reps
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        let multi = matches!(self.scenario, Scenario::MultiProcess { .. });
        for t in &self.tests {
            if t.is_multi() != multi {
                return Err(Error::InvalidParameter(format!(
                    "test {} does not fit scenario {}",
                    t.label(),
                    self.scenario.name()
                )));
            }
        }
        for g in &self.grid {
            if !(g.shape > 0.0 && g.expected_n > 0.0) {
                return Err(Error::InvalidParameter(format!("invalid grid point {g:?}")));
            }
        }
        Ok(())
    }
}

/// Rejection rate of one test at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub point: GridPoint,
    pub test: TestKind,
    pub rejections: usize,
    /// Replicates where the statistic was undefined (counted as acceptances).
    pub undefined: usize,
    pub reps: usize,
    pub completed: bool,
}

impl StudyRow {
    pub fn proportion(&self) -> f64 {
        if self.reps == 0 {
            0.0
        } else {
            self.rejections as f64 / self.reps as f64
        }
    }

    /// Monte Carlo standard error `sqrt(p (1 - p) / R)`.
    pub fn se(&self) -> f64 {
        if self.reps == 0 {
            return 0.0;
        }
        let p = self.proportion();
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: Scenario,
    pub alpha: f64,
    pub seed: u64,
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.completed)
    }

    /// Row for a test at the grid point matching `shape`, `param` and `n`.
    pub fn find(&self, test: &str, shape: f64, param: f64, expected_n: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| {
            r.test.label() == test
                && r.point.shape == shape
                && r.point.param == param
                && r.point.expected_n == expected_n
        })
    }
}

/// Rejection decision per test for one replicate; `None` marks undefined.
type Decisions = Vec<Option<bool>>;

struct CvmSumCritical {
    cache: HashMap<usize, Vec<f64>>,
}

impl CvmSumCritical {
    const DRAWS: usize = 100_000;

    /// Null sample of the equal-weight CvM sum over 1..=m processes.
    fn new(m: usize, seed: u64) -> Result<Self> {
        let table = null_dist::shipped(&LimitKind::CvM)?;
        let mut cache = HashMap::new();
        for k in 1..=m {
            let w = vec![1.0 / k as f64; k];
            cache.insert(
                k,
                equal_weight_sample(&w, table, Self::DRAWS, seed ^ k as u64),
            );
        }
        Ok(Self { cache })
    }

    fn pvalue(&self, k: usize, statistic: f64) -> f64 {
        let draws = &self.cache[&k];
        let above = draws.len() - draws.partition_point(|&d| d < statistic);
        (1 + above) as f64 / (draws.len() + 1) as f64
    }
}

fn equal_weight_sample(weights: &[f64], table: &LimitTable, draws: usize, seed: u64) -> Vec<f64> {
    use rand::Rng as _;
    let n = table.len();
    let mut v: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::stream(seed, i);
            weights
                .iter()
                .map(|w| w * table.draws()[rng.gen_range(0..n)])
                .sum()
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn single_decisions(
    cfg: &StudyConfig,
    series: &crate::event_data::EventSeries,
    cvm_table: Option<&LimitTable>,
    ad_table: Option<&LimitTable>,
) -> Decisions {
    let est = match estimators::estimate(series, cfg.estimator) {
        Ok(e) if e.gamma > 0.0 => e,
        _ => return vec![None; cfg.tests.len()],
    };
    let g = est.gamma;
    cfg.tests
        .iter()
        .map(|t| {
            let p = match *t {
                TestKind::Lr => statistics::lr(series, g).map(normal_two_sided_p),
                TestKind::Ks => statistics::ks(series, g).map(kolmogorov_sf),
                TestKind::Cvm => statistics::cvm(series, g).map(|x| cvm_table.unwrap().pvalue(x)),
                TestKind::Ad => statistics::ad(series, g).map(|x| ad_table.unwrap().pvalue(x)),
                TestKind::Elr { a } => {
                    statistics::elr(series, g, ElrConfig { a }).map(normal_two_sided_p)
                }
                _ => unreachable!("validated"),
            };
            p.ok().map(|p| p <= cfg.alpha)
        })
        .collect()
}

fn multi_decisions(
    cfg: &StudyConfig,
    data: &MultiProcessData,
    cvm_null: Option<&CvmSumCritical>,
) -> Decisions {
    let ests = if cfg.pooled {
        estimators::pooled_estimates(data, cfg.estimator).map(MultiEstimates::Pooled)
    } else {
        data.series()
            .map(|s| {
                if s.is_empty() {
                    Ok(crate::estimators::Estimates::fixed_gamma(1.0))
                } else {
                    estimators::estimate(s, cfg.estimator)
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiEstimates::PerProcess)
    };
    cfg.tests
        .iter()
        .map(|t| {
            let p = match *t {
                TestKind::Gl => statistics::gl_statistic(data).map(|r| r.p_value),
                TestKind::LrMulti => ests
                    .as_ref()
                    .map_err(clone_err)
                    .and_then(|e| statistics::lr_multi(data, e))
                    .map(|r| r.p_value),
                TestKind::ElrMulti { a } => ests
                    .as_ref()
                    .map_err(clone_err)
                    .and_then(|e| statistics::elr_multi(data, e, ElrConfig { a }))
                    .map(|r| r.p_value),
                TestKind::CvmMulti => ests
                    .as_ref()
                    .map_err(clone_err)
                    .and_then(|e| cvm_sum_pvalue(data, e, cvm_null.expect("built for CvMm"))),
                _ => unreachable!("validated"),
            };
            match p {
                Ok(p) if p.is_finite() => Some(p <= cfg.alpha),
                _ => None,
            }
        })
        .collect()
}

fn clone_err(e: &Error) -> Error {
    Error::EstimatorUndefined(e.to_string())
}

/// CvM sum with weights proportional to `tau`; all simulated processes share
/// `tau`, so the weights are equal over the non-empty processes.
fn cvm_sum_pvalue(
    data: &MultiProcessData,
    ests: &MultiEstimates,
    null: &CvmSumCritical,
) -> Result<f64> {
    let r = statistics::cvm_multi(
        data,
        ests,
        CvmWeights::ProportionalTau,
        statistics::CvmSumPValue::Auto { draws: 0, seed: 0 },
    );
    // The statistic from cvm_multi is reused; only the p-value engine differs.
    let kept = data.series().filter(|s| !s.is_empty()).count();
    match r {
        Ok(r) if kept >= statistics::CVM_MULTI_NORMAL_FROM => Ok(r.p_value),
        Ok(r) => Ok(null.pvalue(kept, r.statistic)),
        Err(e) => Err(e),
    }
}

fn model_for(scenario: Scenario, point: &GridPoint) -> Result<(TrpModel, f64)> {
    match scenario {
        Scenario::LevelRp => {
            let m = TrpModel::renewal(point.shape)?;
            Ok((m, point.expected_n))
        }
        Scenario::PowerMonotonic | Scenario::MultiProcess { .. } => {
            let trend = Trend::power_law(point.param)?;
            let tau = trend.tau_for_expected(point.expected_n);
            Ok((TrpModel::new(trend, point.shape)?, tau))
        }
        Scenario::PowerBathtub => {
            let bt = Bathtub::equal_phases(point.param, 1.0, point.expected_n / 3.0)?;
            Ok((TrpModel::new(Trend::Bathtub(bt), point.shape)?, bt.tau))
        }
    }
}

/// Runs the study. If the time budget runs out, the remaining grid points
/// are returned with `completed = false` and zero replications.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let needs = |k: fn(&TestKind) -> bool| cfg.tests.iter().any(k);
    let cvm_table = if needs(|t| matches!(t, TestKind::Cvm)) {
        Some(null_dist::shipped(&LimitKind::CvM)?)
    } else {
        None
    };
    let ad_table = if needs(|t| matches!(t, TestKind::Ad)) {
        Some(null_dist::shipped(&LimitKind::AD)?)
    } else {
        None
    };
    let cvm_null = match cfg.scenario {
        Scenario::MultiProcess { m } if needs(|t| matches!(t, TestKind::CvmMulti)) => Some(
            CvmSumCritical::new(m.min(statistics::CVM_MULTI_NORMAL_FROM - 1), cfg.seed)?,
        ),
        _ => None,
    };

    let start = Instant::now();
    let mut rows = Vec::with_capacity(cfg.grid.len() * cfg.tests.len());
    for (gi, point) in cfg.grid.iter().enumerate() {
        let out_of_time = cfg.time_budget.is_some_and(|b| start.elapsed() > b);
        if out_of_time {
            rows.extend(cfg.tests.iter().map(|&test| StudyRow {
                point: *point,
                test,
                rejections: 0,
                undefined: 0,
                reps: 0,
                completed: false,
            }));
            continue;
        }
        let (model, tau) = model_for(cfg.scenario, point)?;
        let k = cfg.tests.len();
        let counts = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|r| -> Result<(Vec<usize>, Vec<usize>)> {
                let mut rng = seeding::substream(cfg.seed, gi as u64, r);
                let decisions = match cfg.scenario {
                    Scenario::MultiProcess { m } => {
                        let processes = (0..m)
                            .map(|j| {
                                Ok(Process {
                                    id: format!("p{j}"),
                                    series: model.sample(tau, &mut rng)?,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let data = MultiProcessData::new(processes)?;
                        multi_decisions(cfg, &data, cvm_null.as_ref())
                    }
                    _ => {
                        let s = model.sample(tau, &mut rng)?;
                        single_decisions(cfg, &s, cvm_table, ad_table)
                    }
                };
                let mut rej = vec![0; k];
                let mut undef = vec![0; k];
                for (j, d) in decisions.into_iter().enumerate() {
                    match d {
                        Some(true) => rej[j] += 1,
                        Some(false) => {}
                        None => undef[j] += 1,
                    }
                }
                Ok((rej, undef))
            })
            .try_reduce(
                || (vec![0; k], vec![0; k]),
                |mut a, b| {
                    for j in 0..k {
                        a.0[j] += b.0[j];
                        a.1[j] += b.1[j];
                    }
                    Ok(a)
                },
            )?;
        for (j, &test) in cfg.tests.iter().enumerate() {
            rows.push(StudyRow {
                point: *point,
                test,
                rejections: counts.0[j],
                undefined: counts.1[j],
                reps: cfg.reps,
                completed: true,
            });
        }
    }
    Ok(StudyResult {
        scenario: cfg.scenario,
        alpha: cfg.alpha,
        seed: cfg.seed,
        rows,
    })
}

pub const CSV_HEADER: &str =
    "scenario,shape,param_name,param,expected_n,test,rejection,se,reps,undefined,completed";

/// Tidy CSV, one row per (grid point, test).
pub fn to_csv(result: &StudyResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let name = result.scenario.name();
    let pname = result.scenario.param_name();
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{name},{},{pname},{},{},{},{:.6},{:.6},{},{},{}",
            r.point.shape,
            r.point.param,
            r.point.expected_n,
            r.test.label(),
            r.proportion(),
            r.se(),
            r.reps,
            r.undefined,
            r.completed
        );
    }
    out
}

/// Writes `results.csv` and `summary.json` into `dir` (created if missing).
pub fn emit_results(result: &StudyResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), to_csv(result))?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(result)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid(Scenario::PowerMonotonic, "shape=1.5; b=0.8,1").unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|p| p.shape == 1.5 && p.expected_n == 30.0));
        assert!(parse_grid(Scenario::PowerMonotonic, "q=1").is_err());
        assert!(parse_grid(Scenario::PowerMonotonic, "b=x").is_err());
    }

    #[test]
    fn scenario_names() {
        assert_eq!(
            Scenario::parse("multi:5").unwrap(),
            Scenario::MultiProcess { m: 5 }
        );
        assert!(Scenario::parse("multi:0").is_err());
        assert!(Scenario::parse("nope").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = StudyConfig::new(Scenario::LevelRp, 50, 1);
        assert!(run_study(&c).is_err());
        c.reps = 100;
        c.alpha = 1.5;
        assert!(run_study(&c).is_err());
        c.alpha = 0.05;
        c.tests = vec![TestKind::Gl];
        assert!(run_study(&c).is_err());
    }

    #[test]
    fn empty_grid_header_only() {
        let mut c = StudyConfig::new(Scenario::LevelRp, 100, 1);
        c.grid.clear();
        let r = run_study(&c).unwrap();
        assert_eq!(to_csv(&r), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn exhausted_budget_flags_points() {
        let mut c = StudyConfig::new(Scenario::LevelRp, 100, 1);
        c.tests = vec![TestKind::Lr];
        c.time_budget = Some(Duration::ZERO);
        std::thread::sleep(Duration::from_millis(2));
        let r = run_study(&c).unwrap();
        assert!(!r.is_complete());
        assert!(r.rows.iter().all(|row| !row.completed && row.reps == 0));
    }
}
