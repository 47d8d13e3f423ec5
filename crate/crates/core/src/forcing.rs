//! Glucose infusion protocols.
//!
//! The on-off protocol is a product of two smoothed Heaviside steps of a sine,
//! `G_max h(sin(2π(t-σ)/T)) h(sin(2π(t-σ-t_on)/T - π))`, which is close to
//! `G_max` on `[σ, σ + t_on]` in every period `T` and close to zero elsewhere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default steepness of the smoothed step.
pub const DEFAULT_STEEPNESS: f64 = 100.0;

/// Overflow-safe logistic `1 / (1 + e^{-k y})`.
#[inline]
pub fn sigmoid(y: f64, k: f64) -> f64 {
    let z = k * y;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Constant,
    OnOff,
}

/// Glucose infusion in mg dl⁻¹ min⁻¹. Insulin infusion is not modelled and
/// stays zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfusionProtocol {
    pub kind: ProtocolKind,
    /// Peak (or constant) rate, mg dl⁻¹ min⁻¹.
    #[serde(default)]
    pub g_max: f64,
    /// Period T_in (min). Unused for constant infusion.
    #[serde(rename = "t_period", default)]
    pub period: f64,
    /// Pulse length t_in (min).
    #[serde(rename = "t_on", default)]
    pub on_time: f64,
    /// Lag σ_G of the first pulse (min).
    #[serde(rename = "sigma", default)]
    pub lag: f64,
    /// Steepness k of the smoothed steps.
    #[serde(rename = "k", default = "default_steepness")]
    pub steepness: f64,
}

fn default_steepness() -> f64 {
    DEFAULT_STEEPNESS
}

impl InfusionProtocol {
    pub fn constant(rate: f64) -> Self {
        InfusionProtocol {
            kind: ProtocolKind::Constant,
            g_max: rate,
            period: 0.0,
            on_time: 0.0,
            lag: 0.0,
            steepness: DEFAULT_STEEPNESS,
        }
    }

    pub fn fasting() -> Self {
        Self::constant(0.0)
    }

    pub fn on_off(g_max: f64, period: f64, on_time: f64) -> Self {
        InfusionProtocol {
            kind: ProtocolKind::OnOff,
            g_max,
            period,
            on_time,
            lag: 0.0,
            steepness: DEFAULT_STEEPNESS,
        }
    }

    /// On-off protocol given by its mean rate `Ḡ = G_max t_in / T_in`.
    pub fn from_mean_rate(mean: f64, period: f64, on_time: f64) -> Self {
        Self::on_off(mean * period / on_time, period, on_time)
    }

    pub fn with_lag(mut self, lag: f64) -> Self {
        self.lag = lag;
        self
    }

    pub fn with_steepness(mut self, k: f64) -> Self {
        self.steepness = k;
        self
    }

    pub fn is_forced(&self) -> bool {
        self.kind == ProtocolKind::OnOff
    }

    /// Mean infusion rate Ḡ over one period.
    pub fn mean_rate(&self) -> f64 {
        match self.kind {
            ProtocolKind::Constant => self.g_max,
            ProtocolKind::OnOff => self.g_max * self.on_time / self.period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_max.is_finite() && self.g_max >= 0.0) {
            return Err(Error::param("g_max", format!("must be >= 0, got {}", self.g_max)));
        }
        if self.kind == ProtocolKind::Constant {
            return Ok(());
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::param("t_period", format!("must be > 0, got {}", self.period)));
        }
        if !(self.on_time > 0.0 && self.on_time <= 0.5 * self.period) {
            return Err(Error::param(
                "t_on",
                format!("must lie in (0, t_period/2], got {} with t_period {}", self.on_time, self.period),
            ));
        }
        if !(self.steepness.is_finite() && self.steepness > 0.0) {
            return Err(Error::param("k", "must be > 0"));
        }
        if !self.lag.is_finite() {
            return Err(Error::param("sigma", "must be finite"));
        }
        Ok(())
    }

    /// Infusion rate at time `t` (mg dl⁻¹ min⁻¹).
    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        match self.kind {
            ProtocolKind::Constant => self.g_max,
            ProtocolKind::OnOff => {
                let w = 2.0 * PI / self.period;
                let s = t - self.lag;
                let on = sigmoid((w * s).sin(), self.steepness);
                let off = sigmoid((w * (s - self.on_time) - PI).sin(), self.steepness);
                self.g_max * on * off
            }
        }
    }
}

/// Free-function form of [`InfusionProtocol::rate`].
pub fn infusion_rate(t: f64, protocol: &InfusionProtocol) -> f64 {
    protocol.rate(t)
}
