//! Trend-renewal process simulation.
//!
//! A trend-renewal process with trend function `lambda` and renewal
//! distribution `F` is a point process whose transformed times
//! `Lambda(T_1), Lambda(T_2), ...` form a renewal process with gaps drawn from
//! `F`, where `Lambda` is the integral of `lambda`. A constant trend gives a
//! renewal process; unit exponential gaps give a Poisson process with
//! intensity `lambda`.
//!
//! `F` is always a Weibull distribution scaled to mean one, so the expected
//! number of events on `(0, tau]` is close to `Lambda(tau)`.

use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::event_data::EventSeries;
use crate::seeding::{self, Rng};

/// Symmetric bathtub trend on `[0, tau]`.
///
/// Three phases: on `[0, e]` the rate falls linearly from `floor + c` to
/// `floor`, on `[e, tau - e]` it stays at `floor`, and on `[tau - e, tau]` it
/// rises back to `floor + c`. The floor is `d - c e / tau`, which makes `d`
/// the average rate over `[0, tau]`. `c = 0` is the constant rate `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bathtub {
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub tau: f64,
}

impl Bathtub {
    pub fn new(c: f64, d: f64, e: f64, tau: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bathtub depth c = {c} must be >= 0"
            )));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bathtub level d = {d} must be > 0"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bathtub tau = {tau} must be > 0"
            )));
        }
        if !(e > 0.0 && e < tau / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "bathtub phase boundary e = {e} must lie in (0, tau/2)"
            )));
        }
        let b = Self { c, d, e, tau };
        if b.floor() < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "bathtub rate negative in the middle phase ({})",
                b.floor()
            )));
        }
        Ok(b)
    }

    /// Bathtub whose three phases each carry `per_phase` expected events at
    /// average rate `d`; solves for `e` and `tau`.
    pub fn equal_phases(c: f64, d: f64, per_phase: f64) -> Result<Self> {
        if per_phase.is_nan() || per_phase <= 0.0 {
            return Err(Error::InvalidParameter(
                "expected count per phase must be > 0".into(),
            ));
        }
        let tau = 3.0 * per_phase / d;
        // e (d - c e / tau + c / 2) = per_phase, smaller root.
        let bq = d + c / 2.0;
        let disc = bq * bq - 4.0 * c * per_phase / tau;
        let e = 2.0 * per_phase / (bq + disc.max(0.0).sqrt());
        Self::new(c, d, e, tau)
    }

    /// Rate in the flat middle phase.
    pub fn floor(&self) -> f64 {
        self.d - self.c * self.e / self.tau
    }

    pub fn lambda(&self, t: f64) -> f64 {
        let (h, c, e) = (self.floor(), self.c, self.e);
        if t <= e {
            h + c * (1.0 - t / e)
        } else if t < self.tau - e {
            h
        } else {
            h + c * (1.0 - (self.tau - t) / e)
        }
    }

    fn breaks(&self) -> (f64, f64) {
        let (h, c, e) = (self.floor(), self.c, self.e);
        let first = h * e + c * e / 2.0;
        (first, first + h * (self.tau - 2.0 * e))
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        let (h, c, e) = (self.floor(), self.c, self.e);
        let (l1, l2) = self.breaks();
        if t <= e {
            h * t + c * (t - t * t / (2.0 * e))
        } else if t <= self.tau - e {
            l1 + h * (t - e)
        } else {
            let w = t - (self.tau - e);
            l2 + h * w + c * w * w / (2.0 * e)
        }
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        let (h, c, e) = (self.floor(), self.c, self.e);
        let (l1, l2) = self.breaks();
        let total = self.d * self.tau;
        if u < 0.0 || u > total * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "cumulative trend {u} outside [0, {total}]"
            )));
        }
        Ok(if u <= l1 {
            // (c / 2e) t^2 - (h + c) t + u = 0, smaller root.
            let b = h + c;
            let den = b + (b * b - 2.0 * c * u / e).max(0.0).sqrt();
            if den > 0.0 {
                2.0 * u / den
            } else {
                0.0
            }
        } else if u <= l2 {
            if h > 0.0 {
                e + (u - l1) / h
            } else {
                e
            }
        } else {
            let v = u - l2;
            let den = h + (h * h + 2.0 * c * v / e).sqrt();
            let w = if den > 0.0 { 2.0 * v / den } else { 0.0 };
            (self.tau - e + w).min(self.tau)
        })
    }
}

/// Trend function of a trend-renewal process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trend {
    /// `lambda(t) = b t^(b-1)`, `Lambda(t) = t^b`.
    PowerLaw {
        b: f64,
    },
    Bathtub(Bathtub),
    Constant {
        rate: f64,
    },
}

impl Trend {
    pub fn power_law(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "power-law exponent b = {b} must be > 0"
            )));
        }
        Ok(Trend::PowerLaw { b })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate {rate} must be > 0")));
        }
        Ok(Trend::Constant { rate })
    }

    pub fn lambda(&self, t: f64) -> f64 {
        match *self {
            Trend::PowerLaw { b } => b * t.powf(b - 1.0),
            Trend::Bathtub(bt) => bt.lambda(t),
            Trend::Constant { rate } => rate,
        }
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        match *self {
            Trend::PowerLaw { b } => t.powf(b),
            Trend::Bathtub(bt) => bt.cumulative(t),
            Trend::Constant { rate } => rate * t,
        }
    }

    /// `Lambda^{-1}(u)`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if u.is_nan() || u < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cumulative trend {u} is negative"
            )));
        }
        match *self {
            Trend::PowerLaw { b } => Ok(u.powf(1.0 / b)),
            Trend::Bathtub(bt) => bt.inverse(u),
            Trend::Constant { rate } => Ok(u / rate),
        }
    }

    /// Censoring time with `Lambda(tau) = expected`. A bathtub carries its own
    /// `tau`, so it is returned unchanged.
    pub fn tau_for_expected(&self, expected: f64) -> f64 {
        match *self {
            Trend::PowerLaw { b } => expected.powf(1.0 / b),
            Trend::Bathtub(bt) => bt.tau,
            Trend::Constant { rate } => expected / rate,
        }
    }
}

/// Trend function plus Weibull renewal shape (scale fixed to unit mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrpModel {
    pub trend: Trend,
    pub shape: f64,
}

impl TrpModel {
    pub fn new(trend: Trend, shape: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Weibull shape {shape} must be > 0"
            )));
        }
        Ok(Self { trend, shape })
    }

    /// Weibull renewal process with unit-mean gaps.
    pub fn renewal(shape: f64) -> Result<Self> {
        Self::new(Trend::Constant { rate: 1.0 }, shape)
    }

    /// Weibull scale giving mean one.
    pub fn unit_mean_scale(&self) -> f64 {
        1.0 / gamma(1.0 + 1.0 / self.shape)
    }

    fn gap_distribution(&self) -> Weibull<f64> {
        Weibull::new(self.unit_mean_scale(), self.shape).expect("validated shape")
    }

    /// Draws one series on `(0, tau]` from `rng`.
    pub fn sample(&self, tau: f64, rng: &mut Rng) -> Result<EventSeries> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau = {tau} must be > 0")));
        }
        if let Trend::Bathtub(bt) = self.trend {
            if tau > bt.tau * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "bathtub is defined up to {}, asked for {tau}",
                    bt.tau
                )));
            }
        }
        let horizon = self.trend.cumulative(tau);
        let dist = self.gap_distribution();
        let mut times = Vec::with_capacity(horizon.ceil() as usize + 8);
        let mut s = 0.0;
        let mut prev = 0.0;
        loop {
            s += dist.sample(rng);
            if s > horizon {
                break;
            }
            let t = self.trend.inverse(s)?.min(tau);
            // Gaps below floating-point resolution collapse onto the previous
            // event; such ties are merged.
            if t > prev {
                times.push(t);
                prev = t;
            }
        }
        EventSeries::new(times, tau)
    }
}

/// Simulates one series with a generator derived from `seed`.
pub fn simulate_trp(model: &TrpModel, tau: f64, seed: u64) -> Result<EventSeries> {
    model.sample(tau, &mut seeding::stream(seed, 0))
}

/// `Lambda^{-1}(u)` for `trend`.
pub fn lambda_inverse(trend: &Trend, u: f64) -> Result<f64> {
    trend.inverse(u)
}
