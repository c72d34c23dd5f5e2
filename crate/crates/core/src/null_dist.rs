//! Null distributions and p-value engines.
//!
//! * standard normal tails for the area-type statistics;
//! * the Kolmogorov distribution for the supremum statistic;
//! * Monte Carlo tables of Brownian-bridge functionals for the quadratic
//!   statistics and their weighted sums;
//! * the gap-permutation procedure.

use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::event_data::{EventSeries, MultiProcessData, Process};
use crate::seeding::{self, Rng};

/// Alternative for tests with a signed statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// Large positive statistic (increasing trend for the area tests).
    Greater,
    Less,
}

impl FromStr for Sidedness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" | "two-sided" => Ok(Self::TwoSided),
            "greater" => Ok(Self::Greater),
            "less" => Ok(Self::Less),
            _ => Err(Error::InvalidParameter(format!("unknown sidedness '{s}'"))),
        }
    }
}

/// `P(Z > z)` for a standard normal `Z`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `2 (1 - Phi(|z|))`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

pub fn normal_pvalue(z: f64, sided: Sidedness) -> f64 {
    match sided {
        Sidedness::TwoSided => normal_two_sided_p(z),
        Sidedness::Greater => normal_sf(z),
        Sidedness::Less => normal_sf(-z),
    }
}

const SERIES_TOL: f64 = 1e-12;

/// Kolmogorov distribution function `P(sup |W0| <= x)`.
///
/// Uses the alternating series `1 - 2 sum (-1)^(k-1) exp(-2 k^2 x^2)` for
/// `x >= 1` and the dual theta-function series below, where the alternating
/// one converges slowly.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        let c = -std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut sum = 0.0;
        for k in 1.. {
            let j = (2 * k - 1) as f64;
            let term = (c * j * j).exp();
            sum += term;
            if term < SERIES_TOL * sum.max(f64::MIN_POSITIVE) || term == 0.0 {
                break;
            }
        }
        ((2.0 * std::f64::consts::PI).sqrt() / x * sum).min(1.0)
    } else {
        1.0 - kolmogorov_sf(x)
    }
}

/// Upper tail `1 - K(x)`, accurate far into the tail.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 1.0 {
        return 1.0 - kolmogorov_cdf(x);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1.. {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += sign * term;
        if term < SERIES_TOL {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Limit functional tabulated by a [`LimitTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    /// `int W0^2`
    CvM,
    /// `int W0^2 / (s (1 - s))`
    AD,
    /// `sum_j w_j int W0_j^2` over independent bridges.
    WeightedSum(Vec<f64>),
}

impl LimitKind {
    fn code(&self) -> u8 {
        match self {
            LimitKind::CvM => 0,
            LimitKind::AD => 1,
            LimitKind::WeightedSum(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LimitKind::CvM => "cvm",
            LimitKind::AD => "ad",
            LimitKind::WeightedSum(_) => "weighted_sum",
        }
    }
}

/// Sorted Monte Carlo sample of a limit functional.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitTable {
    pub kind: LimitKind,
    pub grid_n: usize,
    pub seed: u64,
    draws: Vec<f64>,
}

/// Upper bound on `M * grid_n * bridges_per_draw` for one build.
pub const MAX_BUILD_WORK: u128 = 1 << 40;

/// Replicate count, grid size and seed of the shipped tables.
pub const SHIPPED_M: usize = 1_000_000;
pub const SHIPPED_GRID_N: usize = 1 << 14;
pub const SHIPPED_SEED: u64 = 20_240_521;

const MAGIC: &[u8; 4] = b"RPLT";
const FORMAT_VERSION: u16 = 1;

/// Fills `buf` with a discretized Brownian bridge at `s_k = (k+1)/n`,
/// `k = 0..n`; the final entry is exactly zero.
pub fn fill_bridge(rng: &mut Rng, buf: &mut [f64]) {
    let n = buf.len();
    let step = 1.0 / (n as f64).sqrt();
    let mut w = 0.0;
    for b in buf.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        w += z * step;
        *b = w;
    }
    let end = w;
    for (k, b) in buf.iter_mut().enumerate() {
        *b -= (k + 1) as f64 / n as f64 * end;
    }
}

/// Riemann sums of `W0^2` and `W0^2 / (s (1 - s))` over the interior grid
/// points `1/n, ..., 1 - 1/n`.
fn quadratic_functionals(buf: &[f64]) -> (f64, f64) {
    let n = buf.len();
    let nf = n as f64;
    let mut cvm = 0.0;
    let mut ad = 0.0;
    for (k, &b) in buf[..n - 1].iter().enumerate() {
        let s = (k + 1) as f64 / nf;
        let b2 = b * b;
        cvm += b2;
        ad += b2 / (s * (1.0 - s));
    }
    (cvm / nf, ad / nf)
}

impl LimitTable {
    /// Simulates `m` discretized bridges on `grid_n` points and sorts the
    /// resulting functional values. Deterministic in `seed`.
    pub fn build(kind: LimitKind, m: usize, grid_n: usize, seed: u64) -> Result<Self> {
        let mut tables = Self::build_many(&[kind], m, grid_n, seed)?;
        Ok(tables.pop().expect("one kind requested"))
    }

    /// Builds several tables from a single pass over the same bridges.
    pub fn build_many(
        kinds: &[LimitKind],
        m: usize,
        grid_n: usize,
        seed: u64,
    ) -> Result<Vec<Self>> {
        if m < 1000 || grid_n < 1000 {
            return Err(Error::InvalidParameter(format!(
                "limit tables need at least 1000 draws and grid points (got {m}, {grid_n})"
            )));
        }
        let bridges = kinds
            .iter()
            .map(|k| match k {
                LimitKind::WeightedSum(w) => w.len(),
                _ => 1,
            })
            .max()
            .unwrap_or(1);
        if kinds
            .iter()
            .any(|k| matches!(k, LimitKind::WeightedSum(w) if w.is_empty()))
        {
            return Err(Error::InvalidParameter("weighted sum needs weights".into()));
        }
        let work = m as u128 * grid_n as u128 * bridges as u128;
        if work > MAX_BUILD_WORK {
            return Err(Error::ResourceCap(format!(
                "{m} draws x {grid_n} points x {bridges} bridges exceeds {MAX_BUILD_WORK}"
            )));
        }

        let rows: Vec<Vec<f64>> = (0..m as u64)
            .into_par_iter()
            .map_init(
                || vec![0.0; grid_n],
                |buf, i| {
                    let mut rng = seeding::stream(seed, i);
                    let mut per_bridge = Vec::with_capacity(bridges);
                    for _ in 0..bridges {
                        fill_bridge(&mut rng, buf);
                        per_bridge.push(quadratic_functionals(buf));
                    }
                    kinds
                        .iter()
                        .map(|k| match k {
                            LimitKind::CvM => per_bridge[0].0,
                            LimitKind::AD => per_bridge[0].1,
                            LimitKind::WeightedSum(w) => {
                                w.iter().zip(&per_bridge).map(|(w, f)| w * f.0).sum()
                            }
                        })
                        .collect()
                },
            )
            .collect();

        Ok(kinds
            .iter()
            .enumerate()
            .map(|(j, kind)| {
                let mut draws: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                draws.sort_by(f64::total_cmp);
                LimitTable {
                    kind: kind.clone(),
                    grid_n,
                    seed,
                    draws,
                }
            })
            .collect())
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Upper-tail p-value `(1 + #{draws >= stat}) / (M + 1)`.
    pub fn pvalue(&self, statistic: f64) -> f64 {
        let below = self.draws.partition_point(|&d| d < statistic);
        let above = self.draws.len() - below;
        (1 + above) as f64 / (self.draws.len() + 1) as f64
    }

    /// Empirical quantile (lower interpolation).
    pub fn quantile(&self, q: f64) -> f64 {
        let idx = ((q.clamp(0.0, 1.0) * self.draws.len() as f64).ceil() as usize)
            .saturating_sub(1)
            .min(self.draws.len() - 1);
        self.draws[idx]
    }

    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }

    /// Writes the binary table format: a header with kind, size, grid and
    /// seed followed by single-precision draws.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.kind.code(), 0])?;
        w.write_all(&(self.draws.len() as u64).to_le_bytes())?;
        w.write_all(&(self.grid_n as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let weights: &[f64] = match &self.kind {
            LimitKind::WeightedSum(ws) => ws,
            _ => &[],
        };
        w.write_all(&(weights.len() as u32).to_le_bytes())?;
        for x in weights {
            w.write_all(&x.to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(4 * self.draws.len());
        for &d in &self.draws {
            payload.extend_from_slice(&(d as f32).to_le_bytes());
        }
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::TableMissing(format!("malformed table: {m}"));
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let code = take(2)?[0];
        let m = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let grid_n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let nw = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut weights = Vec::with_capacity(nw);
        for _ in 0..nw {
            weights.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        let kind = match code {
            0 => LimitKind::CvM,
            1 => LimitKind::AD,
            2 => LimitKind::WeightedSum(weights),
            c => return Err(bad(&format!("unknown kind {c}"))),
        };
        let payload = take(4 * m)?;
        let draws: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if draws.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("draws not sorted"));
        }
        Ok(Self {
            kind,
            grid_n,
            seed,
            draws,
        })
    }
}

static CVM_BYTES: &[u8] = include_bytes!("../resources/cvm.rplt");
static AD_BYTES: &[u8] = include_bytes!("../resources/ad.rplt");

/// Tables compiled into the library (`M = 10^6`, `grid_n = 2^14`).
pub fn shipped(kind: &LimitKind) -> Result<&'static LimitTable> {
    static CVM: OnceLock<Option<LimitTable>> = OnceLock::new();
    static AD: OnceLock<Option<LimitTable>> = OnceLock::new();
    let (cell, bytes) = match kind {
        LimitKind::CvM => (&CVM, CVM_BYTES),
        LimitKind::AD => (&AD, AD_BYTES),
        LimitKind::WeightedSum(_) => {
            return Err(Error::TableMissing(
                "weighted-sum tables depend on the weights and are not shipped".into(),
            ))
        }
    };
    cell.get_or_init(|| LimitTable::read_from(bytes).ok())
        .as_ref()
        .ok_or_else(|| Error::TableMissing(format!("shipped {} table", kind.name())))
}

/// Source of limit distributions for the quadratic statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableSource {
    #[default]
    Shipped,
    /// Build fresh tables with the given size and seed.
    Fresh { m: usize, grid_n: usize, seed: u64 },
}

/// Upper-tail p-value of a CvM or AD statistic.
pub fn limit_pvalue(kind: &LimitKind, statistic: f64, source: TableSource) -> Result<f64> {
    match source {
        TableSource::Shipped => Ok(shipped(kind)?.pvalue(statistic)),
        TableSource::Fresh { m, grid_n, seed } => {
            Ok(LimitTable::build(kind.clone(), m, grid_n, seed)?.pvalue(statistic))
        }
    }
}

/// Mean and variance of the CvM limit law.
pub const CVM_LIMIT_MEAN: f64 = 1.0 / 6.0;
pub const CVM_LIMIT_VAR: f64 = 1.0 / 45.0;

/// Upper-tail p-value of `sum_j w_j C_j` with independent CvM limit
/// variables `C_j`, by resampling the CvM table `draws` times.
pub fn weighted_cvm_sum_pvalue(
    weights: &[f64],
    statistic: f64,
    table: &LimitTable,
    draws: usize,
    seed: u64,
) -> f64 {
    let n = table.len();
    let exceed = (0..draws as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = seeding::stream(seed, i);
            let v: f64 = weights
                .iter()
                .map(|w| w * table.draws[rng.gen_range(0..n)])
                .sum();
            v >= statistic
        })
        .count();
    (1 + exceed) as f64 / (draws + 1) as f64
}

/// Normal approximation to the upper tail of `sum_j w_j C_j`.
pub fn weighted_cvm_sum_normal_pvalue(weights: &[f64], statistic: f64) -> f64 {
    let mean = CVM_LIMIT_MEAN * weights.iter().sum::<f64>();
    let var = CVM_LIMIT_VAR * weights.iter().map(|w| w * w).sum::<f64>();
    normal_sf((statistic - mean) / var.sqrt())
}

/// Relative slack when comparing permuted statistics with the observed one,
/// so that floating-point reordering does not break ties.
const TIE_SLACK: f64 = 1e-9;

/// Shuffles the complete gaps of every process independently, keeping each
/// censored remainder as the final interval.
pub fn permute_gaps(data: &MultiProcessData, rng: &mut Rng) -> Result<MultiProcessData> {
    let processes = data
        .processes()
        .iter()
        .map(|p| {
            let mut gaps = p.series.interevent_times().complete;
            gaps.shuffle(rng);
            Ok(Process {
                id: p.id.clone(),
                series: EventSeries::from_gaps(&gaps, p.series.tau())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MultiProcessData::new(processes)
}

/// Permutation p-value of `statistic` over `b` gap permutations.
///
/// `statistic` is re-evaluated on each permuted dataset, so any estimate it
/// depends on is recomputed per replicate. `sided` selects the tail;
/// unsigned statistics use [`Sidedness::Greater`].
pub fn permutation_pvalue<F>(
    data: &MultiProcessData,
    statistic: F,
    sided: Sidedness,
    b: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&MultiProcessData) -> Result<f64> + Sync,
{
    if b < 99 {
        return Err(Error::InvalidParameter(format!(
            "permutation needs at least 99 replicates, got {b}"
        )));
    }
    if data.series().all(|s| s.len() < 2) {
        return Err(Error::UndefinedStatistic(
            "permutation needs a process with at least 2 complete gaps".into(),
        ));
    }
    let observed = statistic(data)?;
    let slack = TIE_SLACK * observed.abs().max(1e-300);
    let hits = (0..b as u64)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut rng = seeding::stream(seed, i);
            let permuted = permute_gaps(data, &mut rng)?;
            let s = statistic(&permuted)?;
            let hit = match sided {
                Sidedness::TwoSided => s.abs() >= observed.abs() - slack,
                Sidedness::Greater => s >= observed - slack,
                Sidedness::Less => s <= observed + slack,
            };
            Ok(hit as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok((1 + hits) as f64 / (b + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_tails() {
        assert_eq!(normal_two_sided_p(0.0), 1.0);
        assert!((normal_two_sided_p(1.959963984540054) - 0.05).abs() < 1e-9);
        assert!((normal_two_sided_p(-1.959963984540054) - 0.05).abs() < 1e-9);
        assert!((normal_two_sided_p(3.67) - 0.00024).abs() < 0.000005);
        assert!((normal_pvalue(1.6448536269514722, Sidedness::Greater) - 0.05).abs() < 1e-9);
        assert!((normal_pvalue(-1.6448536269514722, Sidedness::Less) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn kolmogorov_values() {
        assert_eq!(kolmogorov_cdf(0.0), 0.0);
        assert!((kolmogorov_cdf(1.3581) - 0.95).abs() < 1e-3);
        // Both series agree where they overlap.
        for x in [0.6, 0.8, 0.99, 1.0, 1.2] {
            let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
            let theta: f64 = (1..50)
                .map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp())
                .sum::<f64>()
                * (2.0 * std::f64::consts::PI).sqrt()
                / x;
            assert!((theta - (1.0 - kolmogorov_sf(x))).abs() < 1e-10, "x = {x}");
        }
        let mut prev = 0.0;
        for k in 0..1000 {
            let v = kolmogorov_cdf(k as f64 * 0.003);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn small_table_roundtrip_and_determinism() {
        let a = LimitTable::build(LimitKind::CvM, 1000, 1000, 11).unwrap();
        let b = LimitTable::build(LimitKind::CvM, 1000, 1000, 11).unwrap();
        assert_eq!(a, b);
        let c = LimitTable::build(LimitKind::CvM, 1000, 1000, 12).unwrap();
        assert_ne!(a, c);

        let mut bytes = Vec::new();
        a.write_to(&mut bytes).unwrap();
        let back = LimitTable::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.kind, LimitKind::CvM);
        assert_eq!((back.len(), back.grid_n, back.seed), (1000, 1000, 11));
        for (x, y) in a.draws().iter().zip(back.draws()) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }

    #[test]
    fn table_pvalue_add_one() {
        let t = LimitTable::build(LimitKind::AD, 1000, 1000, 1).unwrap();
        assert_eq!(t.pvalue(f64::NEG_INFINITY), 1.0);
        assert_eq!(t.pvalue(f64::INFINITY), 1.0 / 1001.0);
        let q = t.quantile(0.95);
        assert!((t.pvalue(q) - 0.05).abs() <= 2.0 / (1000f64).sqrt());
    }

    #[test]
    fn build_rejects_bad_sizes() {
        assert!(matches!(
            LimitTable::build(LimitKind::CvM, 10, 1000, 1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            LimitTable::build(LimitKind::CvM, 1 << 30, 1 << 14, 1),
            Err(Error::ResourceCap(_))
        ));
    }

    #[test]
    fn permutation_of_equal_gaps_is_one() {
        let s = EventSeries::from_gaps(&[2.0, 2.0], 5.0).unwrap();
        let d = MultiProcessData::single("x", s);
        let stat = |d: &MultiProcessData| Ok(d.processes()[0].series.times()[0]);
        let p = permutation_pvalue(&d, stat, Sidedness::TwoSided, 99, 3).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn permutation_preserves_gaps_and_tau() {
        let s = EventSeries::new(vec![1.0, 4.0, 4.5, 9.0], 12.0).unwrap();
        let d = MultiProcessData::single("x", s.clone());
        let mut sorted = s.interevent_times().complete;
        sorted.sort_by(f64::total_cmp);
        for i in 0..20 {
            let p = permute_gaps(&d, &mut seeding::stream(5, i)).unwrap();
            let ps = &p.processes()[0].series;
            assert_eq!(ps.tau(), 12.0);
            let mut g = ps.interevent_times().complete;
            g.sort_by(f64::total_cmp);
            for (a, b) in g.iter().zip(&sorted) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((ps.interevent_times().remainder - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_requires_variability() {
        let d = MultiProcessData::single("x", EventSeries::new(vec![1.0], 3.0).unwrap());
        let stat = |_: &MultiProcessData| Ok(0.0);
        assert!(permutation_pvalue(&d, stat, Sidedness::TwoSided, 99, 1).is_err());
        let d = MultiProcessData::single("x", EventSeries::new(vec![1.0, 2.0], 3.0).unwrap());
        assert!(permutation_pvalue(&d, stat, Sidedness::TwoSided, 50, 1).is_err());
    }
}
