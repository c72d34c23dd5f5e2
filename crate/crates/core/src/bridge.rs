//! The tied-down, normalized counting process
//!
//! ```text
//! V(s) = (N(s tau) - s N(tau)) / (gamma sqrt(N(tau))),   0 <= s <= 1,
//! ```
//!
//! which is approximately a Brownian bridge under the renewal null. Every
//! trend statistic is a functional of this path. [`quad_functional`] evaluates
//! those functionals by brute-force quadrature and serves as an independent
//! check of the closed forms in [`crate::statistics`].
//!
//! The unnormalized variant built from `mu` and `sigma` coincides with this one
//! once `sigma / mu` is replaced by `gamma` and `t / mu` by `N(t)`, so only the
//! `gamma` form is represented.

use crate::error::{Error, Result};
use crate::event_data::EventSeries;

/// A right-continuous step-plus-drift path on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath {
    jump_points: Vec<f64>,
    gamma: f64,
    scale: f64,
}

impl BridgePath {
    pub fn jump_points(&self) -> &[f64] {
        &self.jump_points
    }

    pub fn n_events(&self) -> usize {
        self.jump_points.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Path value at `s`, counting events exactly at `s tau`.
    pub fn eval(&self, s: f64) -> f64 {
        let count = self.jump_points.partition_point(|&p| p <= s);
        self.value(count, s)
    }

    /// Left limit at `s` (events at `s tau` not yet counted).
    pub fn eval_left(&self, s: f64) -> f64 {
        let count = self.jump_points.partition_point(|&p| p < s);
        self.value(count, s)
    }

    fn value(&self, count: usize, s: f64) -> f64 {
        (count as f64 - s * self.n_events() as f64) * self.scale
    }

    /// Corner points of the path: both one-sided values at every jump, plus
    /// the endpoints. Joining them with straight lines draws the path exactly.
    pub fn corners(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.n_events() + 2);
        out.push((0.0, 0.0));
        for &p in &self.jump_points {
            out.push((p, self.eval_left(p)));
            out.push((p, self.eval(p)));
        }
        if self.jump_points.last() != Some(&1.0) {
            out.push((1.0, 0.0));
        }
        out
    }
}

/// Builds the path for `series` scaled by `gamma`.
pub fn build_bridge(series: &EventSeries, gamma: f64) -> Result<BridgePath> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "coefficient of variation must be positive, got {gamma}"
        )));
    }
    if series.is_empty() {
        return Err(Error::UndefinedStatistic("series has no events".into()));
    }
    let tau = series.tau();
    let jump_points: Vec<f64> = series.times().iter().map(|t| t / tau).collect();
    let n = jump_points.len() as f64;
    Ok(BridgePath {
        jump_points,
        gamma,
        scale: 1.0 / (gamma * n.sqrt()),
    })
}

/// Functionals of the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `int_0^1 V`
    SignedArea,
    /// `sup |V|`
    SupAbs,
    /// `int_0^1 V^2`
    L2,
    /// `int_0^1 V^2 / (s (1 - s))`
    WeightedL2,
    /// `int_0^a V - int_a^1 V`
    SplitArea(f64),
}

/// Midpoint-rule quadrature of a path functional on `grid_size` cells.
///
/// `WeightedL2` integrates over `[eps, 1 - eps]` with `eps = 1 / (10 grid_size)`
/// to stay clear of the endpoint singularities. `SupAbs` takes the maximum
/// over the cell midpoints and the cell edges.
pub fn quad_functional(path: &BridgePath, kind: Functional, grid_size: usize) -> Result<f64> {
    if grid_size < 1000 {
        return Err(Error::InvalidParameter(format!(
            "quadrature grid must have at least 1000 cells, got {grid_size}"
        )));
    }
    let (lo, hi) = match kind {
        Functional::WeightedL2 => {
            let eps = 1.0 / (10.0 * grid_size as f64);
            (eps, 1.0 - eps)
        }
        _ => (0.0, 1.0),
    };
    let h = (hi - lo) / grid_size as f64;
    let jumps = path.jump_points();
    let n = jumps.len() as f64;
    let mut count = 0usize;
    let mut acc = 0.0;
    let mut sup = 0.0f64;
    for k in 0..grid_size {
        let s = lo + (k as f64 + 0.5) * h;
        while count < jumps.len() && jumps[count] <= s {
            count += 1;
        }
        let v = (count as f64 - s * n) * path.scale;
        match kind {
            Functional::SignedArea => acc += v,
            Functional::L2 => acc += v * v,
            Functional::WeightedL2 => acc += v * v / (s * (1.0 - s)),
            Functional::SplitArea(a) => acc += if s < a { v } else { -v },
            Functional::SupAbs => {
                let edge = lo + k as f64 * h;
                sup = sup
                    .max(v.abs())
                    .max(path.eval(edge).abs())
                    .max(path.eval_left(edge).abs());
            }
        }
    }
    Ok(match kind {
        Functional::SupAbs => sup.max(path.eval_left(1.0).abs()).max(path.eval(1.0).abs()),
        _ => acc * h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint_series() -> EventSeries {
        EventSeries::new(vec![5.0], 10.0).unwrap()
    }

    #[test]
    fn single_midpoint_event() {
        let p = build_bridge(&midpoint_series(), 1.0).unwrap();
        for s in [0.0, 0.1, 0.3, 0.49] {
            assert!((p.eval(s) + s).abs() < 1e-15);
        }
        for s in [0.5, 0.7, 1.0] {
            assert!((p.eval(s) - (1.0 - s)).abs() < 1e-15);
        }
        let area = quad_functional(&p, Functional::SignedArea, 10_000).unwrap();
        assert!(area.abs() < 1e-12);
        let l2 = quad_functional(&p, Functional::L2, 100_000).unwrap();
        assert!((l2 - 1.0 / 12.0).abs() < 1e-8);
        let sup = quad_functional(&p, Functional::SupAbs, 1000).unwrap();
        assert!((sup - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tie_down_and_scaling() {
        let s = EventSeries::new(vec![0.3, 1.1, 2.9, 3.0], 3.0).unwrap();
        let p = build_bridge(&s, 0.7).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(1.0), 0.0);
        let q = build_bridge(&s, 2.1).unwrap();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            assert!((q.eval(x) - p.eval(x) / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_bridge(&midpoint_series(), 0.0).is_err());
        assert!(build_bridge(&midpoint_series(), -1.0).is_err());
        assert!(build_bridge(&EventSeries::new(vec![], 1.0).unwrap(), 1.0).is_err());
        let p = build_bridge(&midpoint_series(), 1.0).unwrap();
        assert!(quad_functional(&p, Functional::L2, 999).is_err());
    }

    #[test]
    fn corners_trace_the_path() {
        let p = build_bridge(&midpoint_series(), 1.0).unwrap();
        assert_eq!(
            p.corners(),
            vec![(0.0, 0.0), (0.5, -0.5), (0.5, 0.5), (1.0, 0.0)]
        );
    }
}
