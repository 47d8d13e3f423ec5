//! Post-processing of simulated trajectories: transient removal, peak and
//! period extraction, and classification of the long-term response.
//!
//! A forced response is classified from its stroboscopic samples
//! `G(t_cut + n T_in)`, `n = 0..N`:
//!
//! - `Steady` if the glucose peak-to-peak amplitude in the window is below η;
//! - `Locked { p, q }` if the samples repeat with shift `p <= 8`
//!   (`max |x_{n+p} - x_n| < ε`); the orbit then has period `p T_in` and
//!   completes `q` glucose cycles in that time;
//! - `Boundary` if no shift passes but one comes within 2ε, or the samples
//!   span less than 10ε (ambiguous cells near region boundaries);
//! - `QuasiPeriodic` otherwise.
//!
//! Unforced oscillating runs are reported as `Periodic`.

use serde::{Deserialize, Serialize};

use crate::dde::{IntegratorConfig, Trajectory};
use crate::error::{Error, Result};
use crate::forcing::InfusionProtocol;
use crate::model::ModelParams;
use crate::simulate::simulate_default;

/// Fasting period used in the transient rule for unforced runs (min).
pub const FASTING_PERIOD_ESTIMATE: f64 = 132.0;
/// Largest stroboscopic shift tested for locking.
pub const MAX_LOCK_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// ε: stroboscopic cluster gap and locking tolerance (mg/dl).
    #[serde(rename = "epsilon")]
    pub cluster_gap: f64,
    /// η: peak-to-peak glucose amplitude below which a run is steady (mg/dl).
    #[serde(rename = "eta")]
    pub steady_amplitude: f64,
    /// N: number of stroboscopic samples.
    pub strobe_samples: usize,
    /// Transient length in units of `τ_I + τ_G + T_in`.
    pub transient_factor: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            cluster_gap: 1.0,
            steady_amplitude: 0.5,
            strobe_samples: 64,
            transient_factor: 100.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cluster_gap > 0.0 && self.cluster_gap.is_finite()) {
            return Err(Error::param("epsilon", "must be > 0"));
        }
        if !(self.steady_amplitude > 0.0 && self.steady_amplitude.is_finite()) {
            return Err(Error::param("eta", "must be > 0"));
        }
        if self.strobe_samples < 64 {
            return Err(Error::param("strobe_samples", "at least 64 samples are required"));
        }
        if !(self.transient_factor >= 0.0 && self.transient_factor.is_finite()) {
            return Err(Error::param("transient_factor", "must be >= 0"));
        }
        Ok(())
    }

    /// Reference period: T_in for forced runs, the fasting estimate otherwise.
    pub fn reference_period(protocol: &InfusionProtocol) -> f64 {
        if protocol.is_forced() {
            protocol.period
        } else {
            FASTING_PERIOD_ESTIMATE
        }
    }

    /// Transient cut `factor * (τ_I + τ_G + T_in)`.
    pub fn transient(&self, protocol: &InfusionProtocol, delays: [f64; 2]) -> f64 {
        self.transient_factor * (delays[0] + delays[1] + Self::reference_period(protocol))
    }

    /// Shortest analysis window: `(N + 1)` reference periods.
    pub fn min_window(&self, protocol: &InfusionProtocol) -> f64 {
        (self.strobe_samples as f64 + 1.0) * Self::reference_period(protocol)
    }

    /// Span that makes [`post_transient`] succeed.
    pub fn required_span(&self, protocol: &InfusionProtocol, delays: [f64; 2]) -> f64 {
        self.transient(protocol, delays) + self.min_window(protocol)
    }
}

/// Post-transient part of a trajectory in concentrations on grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// mg/dl
    pub glucose: Vec<f64>,
    /// uU/ml
    pub insulin: Vec<f64>,
}

impl AnalysisWindow {
    pub fn glucose_range(&self) -> (f64, f64) {
        min_max(&self.glucose)
    }

    pub fn insulin_range(&self) -> (f64, f64) {
        min_max(&self.insulin)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn len_minutes(&self) -> f64 {
        self.t_end - self.t_start
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Drops the transient and returns the remainder of the run.
pub fn post_transient(
    traj: &Trajectory<2>,
    params: &ModelParams,
    protocol: &InfusionProtocol,
    cfg: &AnalysisConfig,
) -> Result<AnalysisWindow> {
    let cut = cfg.transient(protocol, params.delays());
    window_from(traj, params, cut, cfg.min_window(protocol))
}

/// Window starting at `cut`, requiring at least `min_len` minutes after it.
pub fn window_from(traj: &Trajectory<2>, params: &ModelParams, cut: f64, min_len: f64) -> Result<AnalysisWindow> {
    let span = traj.span();
    if span < cut + min_len - 1e-9 {
        return Err(Error::SpanTooShort {
            span,
            needed: cut + min_len,
        });
    }
    let dt = traj.dt();
    let first = (cut / dt - 1e-9).ceil().max(0.0) as usize;
    let mut glucose = Vec::new();
    let mut insulin = Vec::new();
    for (_, x) in traj.nodes().skip(first) {
        glucose.push(params.glucose_concentration(x[0]));
        insulin.push(params.insulin_concentration(x[1]));
    }
    Ok(AnalysisWindow {
        t_start: first as f64 * dt,
        t_end: span,
        dt,
        glucose,
        insulin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub time: f64,
    pub value: f64,
}

/// Local maxima of a uniformly sampled series, refined by a parabola
/// through the three samples around each maximum. On plateaus the leftmost
/// sample is reported without refinement.
pub fn peaks(series: &[f64], t0: f64, dt: f64) -> Vec<Peak> {
    let mut out = Vec::new();
    let n = series.len();
    let mut i = 1;
    while i + 1 < n {
        let (y0, y1) = (series[i - 1], series[i]);
        if y1 > y0 {
            let mut j = i;
            while j + 1 < n && series[j + 1] == y1 {
                j += 1;
            }
            if j + 1 < n && series[j + 1] < y1 {
                if j == i {
                    let y2 = series[i + 1];
                    let denom = y0 - 2.0 * y1 + y2;
                    let (offset, value) = if denom < 0.0 {
                        let off = 0.5 * (y0 - y2) / denom;
                        (off, y1 - 0.25 * (y0 - y2) * off)
                    } else {
                        (0.0, y1)
                    };
                    out.push(Peak {
                        time: t0 + (i as f64 + offset) * dt,
                        value,
                    });
                } else {
                    out.push(Peak {
                        time: t0 + i as f64 * dt,
                        value: y1,
                    });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Peaks above the midline of the series range.
pub fn major_peaks(series: &[f64], t0: f64, dt: f64) -> Vec<Peak> {
    let (lo, hi) = min_max(series);
    let mid = 0.5 * (lo + hi);
    peaks(series, t0, dt).into_iter().filter(|p| p.value >= mid).collect()
}

/// Mean spacing of major peaks, if at least three exist.
pub fn period_from_peaks(series: &[f64], t0: f64, dt: f64) -> Option<f64> {
    let pk = major_peaks(series, t0, dt);
    if pk.len() < 3 {
        return None;
    }
    Some((pk[pk.len() - 1].time - pk[0].time) / (pk.len() - 1) as f64)
}

/// Upward crossings of the series mean with a small hysteresis band.
fn mean_crossings(series: &[f64]) -> usize {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let (lo, hi) = min_max(series);
    let band = 0.05 * (hi - lo);
    let mut below = series.first().is_some_and(|&x| x < mean);
    let mut count = 0;
    for &x in series {
        if below && x > mean + band {
            count += 1;
            below = false;
        } else if !below && x < mean - band {
            below = true;
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification {
    Steady,
    /// Unforced sustained oscillation.
    Periodic,
    /// Orbit of period `p T_in` with `q` glucose cycles per period.
    Locked { p: u32, q: u32 },
    QuasiPeriodic,
    Boundary,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Steady => "steady",
            Classification::Periodic => "periodic",
            Classification::Locked { .. } => "locked",
            Classification::QuasiPeriodic => "quasi-periodic",
            Classification::Boundary => "boundary",
        }
    }

    pub fn is_locked(&self) -> bool {
        matches!(self, Classification::Locked { .. })
    }

    pub fn ratio(&self) -> Option<(u32, u32)> {
        match *self {
            Classification::Locked { p, q } => Some((p, q)),
            _ => None,
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Locked { p, q } => write!(f, "locked {p}:{q}"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrobeStats {
    pub samples: usize,
    pub clusters: usize,
    /// Largest within-cluster spread (mg/dl).
    pub max_dispersion: f64,
    /// Spread of all samples (mg/dl).
    pub range: f64,
    /// Shift with the smallest repeat residual, and that residual.
    pub best_shift: usize,
    pub best_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSummary {
    pub classification: Classification,
    /// Response period (min); absent when steady.
    pub period: Option<f64>,
    pub g_max: f64,
    pub g_min: f64,
    pub i_max: f64,
    pub i_min: f64,
    pub strobe: Option<StrobeStats>,
    pub window_start: f64,
    pub window_end: f64,
}

impl ResponseSummary {
    pub fn glucose_amplitude(&self) -> f64 {
        self.g_max - self.g_min
    }

    /// Column names of [`ResponseSummary::csv_record`].
    pub const CSV_HEADER: [&'static str; 13] = [
        "classification",
        "p",
        "q",
        "period_min",
        "period_h",
        "g_max",
        "g_min",
        "i_max",
        "i_min",
        "strobe_clusters",
        "strobe_dispersion",
        "window_start",
        "window_end",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let (p, q) = self
            .classification
            .ratio()
            .map_or((String::new(), String::new()), |(p, q)| (p.to_string(), q.to_string()));
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        vec![
            self.classification.label().to_string(),
            p,
            q,
            opt(self.period),
            opt(self.period.map(|m| m / 60.0)),
            format!("{:.6}", self.g_max),
            format!("{:.6}", self.g_min),
            format!("{:.6}", self.i_max),
            format!("{:.6}", self.i_min),
            self.strobe.as_ref().map_or(String::new(), |s| s.clusters.to_string()),
            opt(self.strobe.as_ref().map(|s| s.max_dispersion)),
            format!("{:.3}", self.window_start),
            format!("{:.3}", self.window_end),
        ]
    }

    /// Human-readable report block.
    pub fn report(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("classification : {}\n", self.classification));
        match self.period {
            Some(p) => s.push_str(&format!("period         : {p:.2} min ({:.3} h)\n", p / 60.0)),
            None => s.push_str("period         : -\n"),
        }
        s.push_str(&format!("glucose range  : {:.3} .. {:.3} mg/dl\n", self.g_min, self.g_max));
        s.push_str(&format!("insulin range  : {:.3} .. {:.3} uU/ml\n", self.i_min, self.i_max));
        if let Some(st) = &self.strobe {
            s.push_str(&format!(
                "stroboscopic   : {} samples, {} clusters, dispersion {:.4}, range {:.4}, best shift {} (residual {:.4})\n",
                st.samples, st.clusters, st.max_dispersion, st.range, st.best_shift, st.best_residual
            ));
        }
        s.push_str(&format!("window         : [{:.1}, {:.1}] min\n", self.window_start, self.window_end));
        s
    }
}

/// Single-linkage clusters of sorted 1-D samples with the given gap.
fn strobe_stats(samples: &[f64], gap: f64) -> StrobeStats {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut clusters = 1;
    let mut dispersion: f64 = 0.0;
    let mut start = sorted[0];
    for w in sorted.windows(2) {
        if w[1] - w[0] > gap {
            dispersion = dispersion.max(w[0] - start);
            clusters += 1;
            start = w[1];
        }
    }
    dispersion = dispersion.max(sorted[sorted.len() - 1] - start);
    // smallest shift within the gap, else the overall best
    let residuals: Vec<(usize, f64)> = (1..=MAX_LOCK_ORDER.min(samples.len() / 2))
        .map(|p| (p, shift_residual_samples(samples, p)))
        .collect();
    let (best_shift, best_residual) = residuals
        .iter()
        .copied()
        .find(|&(_, r)| r < gap)
        .unwrap_or_else(|| residuals.iter().copied().fold((0, f64::INFINITY), |a, c| if c.1 < a.1 { c } else { a }));
    StrobeStats {
        samples: samples.len(),
        clusters,
        max_dispersion: dispersion,
        range: sorted[sorted.len() - 1] - sorted[0],
        best_shift,
        best_residual,
    }
}

fn shift_residual_samples(samples: &[f64], p: usize) -> f64 {
    samples
        .iter()
        .zip(&samples[p..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Stroboscopic glucose samples (mg/dl) at `start + n * period`.
pub fn stroboscopic(traj: &Trajectory<2>, params: &ModelParams, start: f64, period: f64, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|k| {
            traj.sample(start + k as f64 * period)
                .map(|x| params.glucose_concentration(x[0]))
        })
        .collect()
}

/// Classifies the long-term response of a simulated run.
pub fn classify(
    traj: &Trajectory<2>,
    params: &ModelParams,
    protocol: &InfusionProtocol,
    cfg: &AnalysisConfig,
) -> Result<ResponseSummary> {
    cfg.validate()?;
    let window = post_transient(traj, params, protocol, cfg)?;
    let (g_min, g_max) = window.glucose_range();
    let (i_min, i_max) = window.insulin_range();
    let mut summary = ResponseSummary {
        classification: Classification::Steady,
        period: None,
        g_max,
        g_min,
        i_max,
        i_min,
        strobe: None,
        window_start: window.t_start,
        window_end: window.t_end,
    };
    let steady = g_max - g_min < cfg.steady_amplitude;

    if !protocol.is_forced() {
        if !steady {
            summary.period = period_from_peaks(&window.glucose, window.t_start, window.dt);
            summary.classification = if summary.period.is_some() {
                Classification::Periodic
            } else {
                Classification::Boundary
            };
        }
        return Ok(summary);
    }

    let t_in = protocol.period;
    let samples = stroboscopic(traj, params, window.t_start, t_in, cfg.strobe_samples)?;
    let stats = strobe_stats(&samples, cfg.cluster_gap);
    if !steady {
        let eps = cfg.cluster_gap;
        let lock = (1..=MAX_LOCK_ORDER).find(|&p| shift_residual_samples(&samples, p) < eps);
        summary.classification = match lock {
            Some(p) => {
                let response = p as f64 * t_in;
                let cycles = mean_crossings(&window.glucose) as f64 * response / window.len_minutes();
                summary.period = Some(response);
                Classification::Locked {
                    p: p as u32,
                    q: cycles.round().max(1.0) as u32,
                }
            }
            None if stats.best_residual < 2.0 * eps || stats.range <= 10.0 * eps => Classification::Boundary,
            None => Classification::QuasiPeriodic,
        };
        if summary.period.is_none() {
            summary.period = period_from_peaks(&window.glucose, window.t_start, window.dt);
        }
    }
    summary.strobe = Some(stats);
    Ok(summary)
}

/// Largest |G(t + shift) - G(t)| (mg/dl) over grid nodes of the window.
pub fn shift_residual(traj: &Trajectory<2>, params: &ModelParams, window_start: f64, shift: f64) -> Result<f64> {
    let end = traj.span() - shift;
    let mut worst: f64 = 0.0;
    for (t, x) in traj.nodes() {
        if t < window_start {
            continue;
        }
        if t > end {
            break;
        }
        let y = traj.sample(t + shift)?;
        worst = worst.max(params.glucose_concentration((y[0] - x[0]).abs()));
    }
    Ok(worst)
}

/// How the response amplitude is measured in [`amplitude_gain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeMeasure {
    /// `G_max - G_min` over the window.
    PeakToPeak,
    /// Overall maximum of `G` over the window.
    Maximum,
}

/// Ratio of the response amplitude to a fasting baseline.
pub fn amplitude_gain(summary: &ResponseSummary, baseline: &ResponseSummary, measure: AmplitudeMeasure) -> Result<f64> {
    if baseline.classification == Classification::Steady {
        return Err(Error::DegenerateBaseline("baseline run is steady".into()));
    }
    let (num, den) = match measure {
        AmplitudeMeasure::PeakToPeak => (summary.glucose_amplitude(), baseline.glucose_amplitude()),
        AmplitudeMeasure::Maximum => (summary.g_max, baseline.g_max),
    };
    if !(den > 0.0) {
        return Err(Error::DegenerateBaseline("baseline amplitude is zero".into()));
    }
    Ok(num / den)
}

/// Fasting oscillation period T₀ at the delays in `params`, by simulation.
pub fn natural_period(params: &ModelParams, dt: f64, cfg: &AnalysisConfig) -> Result<f64> {
    let proto = InfusionProtocol::fasting();
    let span = cfg.required_span(&proto, params.delays());
    let traj = simulate_default(params, &proto, &IntegratorConfig::new(dt, span))?;
    let summary = classify(&traj, params, &proto, cfg)?;
    summary
        .period
        .ok_or_else(|| Error::DegenerateBaseline("fasting run does not oscillate".into()))
}
