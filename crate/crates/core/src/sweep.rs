//! Grid experiments: resonance map over `(T_in, G_max)` with `t_in = T_in/2`,
//! duration map over `(t_in, Ḡ)` at fixed `T_in`, and the fasting map over
//! the delay plane.
//!
//! Cells are independent and run on a rayon pool; results are gathered in
//! row-major order (`y` outer, `x` inner) so output does not depend on the
//! worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{classify, natural_period, AnalysisConfig, Classification, ResponseSummary};
use crate::contour::{isocurves, Field, Polyline};
use crate::dde::IntegratorConfig;
use crate::error::{Error, Result};
use crate::forcing::InfusionProtocol;
use crate::linear::{char_coeffs, hopf_curve, CurveOptions, HopfCurve};
use crate::model::{equilibrium, ModelParams};
use crate::simulate::{check_invariants, simulate_default};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    /// x = T_in (min), y = G_max (mg dl⁻¹ min⁻¹), t_in = T_in/2.
    Resonance,
    /// x = t_in (min), y = Ḡ (mg dl⁻¹ min⁻¹), T_in fixed.
    Duration,
    /// x = τ_I (min), y = τ_G (min), no infusion.
    Fasting,
}

impl MapKind {
    pub fn axis_names(self) -> (&'static str, &'static str) {
        match self {
            MapKind::Resonance => ("T_in", "G_max"),
            MapKind::Duration => ("t_in", "G_mean"),
            MapKind::Fasting => ("tau_I", "tau_G"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.count < 2 {
            return Err(Error::param(name, "axis needs at least 2 points"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::param(name, format!("need min < max, got [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub kind: MapKind,
    pub x: Axis,
    pub y: Axis,
    /// Fixed infusion period for duration maps (min).
    #[serde(default = "default_duration_period")]
    pub period: f64,
}

fn default_duration_period() -> f64 {
    180.0
}

impl GridSpec {
    /// 64 × 64 over T_in ∈ [30, 420], G_max ∈ [0, 2.5].
    pub fn resonance_default() -> Self {
        GridSpec {
            kind: MapKind::Resonance,
            x: Axis::new(30.0, 420.0, 64),
            y: Axis::new(0.0, 2.5, 64),
            period: default_duration_period(),
        }
    }

    /// 64 × 64 over t_in ∈ [5, 90], Ḡ ∈ [0.05, 1.0] at T_in = 180.
    pub fn duration_default() -> Self {
        GridSpec {
            kind: MapKind::Duration,
            x: Axis::new(5.0, 90.0, 64),
            y: Axis::new(0.05, 1.0, 64),
            period: default_duration_period(),
        }
    }

    /// 40 × 40 over τ_I ∈ [0.5, 20], τ_G ∈ [0.5, 60].
    pub fn fasting_default() -> Self {
        GridSpec {
            kind: MapKind::Fasting,
            x: Axis::new(0.5, 20.0, 40),
            y: Axis::new(0.5, 60.0, 40),
            period: default_duration_period(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (xn, yn) = self.kind.axis_names();
        self.x.validate(xn)?;
        self.y.validate(yn)?;
        match self.kind {
            MapKind::Resonance => {
                if self.x.min <= 0.0 || self.y.min < 0.0 {
                    return Err(Error::param("sweep", "T_in must be > 0 and G_max >= 0"));
                }
            }
            MapKind::Duration => {
                if !(self.period > 0.0) {
                    return Err(Error::param("period", "must be > 0"));
                }
                if self.x.min <= 0.0 || self.x.max > 0.5 * self.period {
                    return Err(Error::param(
                        "t_in",
                        format!("axis must lie in (0, {}]", 0.5 * self.period),
                    ));
                }
                if self.y.min < 0.0 {
                    return Err(Error::param("G_mean", "must be >= 0"));
                }
            }
            MapKind::Fasting => {
                if self.x.min <= 0.0 || self.y.min <= 0.0 {
                    return Err(Error::param("sweep", "delays must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Protocol and model parameters of the cell at axis values `(x, y)`.
    pub fn cell_setup(&self, params: &ModelParams, x: f64, y: f64) -> (ModelParams, InfusionProtocol) {
        match self.kind {
            MapKind::Resonance => (*params, InfusionProtocol::on_off(y, x, 0.5 * x)),
            MapKind::Duration => (*params, InfusionProtocol::from_mean_rate(y, self.period, x)),
            MapKind::Fasting => (params.with_delays(x, y), InfusionProtocol::fasting()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    pub dt: f64,
    pub analysis: AnalysisConfig,
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            dt: IntegratorConfig::DEFAULT_DT,
            analysis: AnalysisConfig::default(),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    /// Peak infusion rate used in the cell (mg dl⁻¹ min⁻¹).
    pub infusion_max: f64,
    pub summary: Option<ResponseSummary>,
    pub error: Option<String>,
    /// Positivity or insulin-bound violation message.
    pub invariant_violation: Option<String>,
    /// Fasting maps: whether the cell lies above the analytic Hopf curve.
    pub above_hopf: Option<bool>,
}

impl Cell {
    pub fn classification(&self) -> Option<Classification> {
        self.summary.as_ref().map(|s| s.classification)
    }

    pub fn period(&self) -> Option<f64> {
        self.summary.as_ref().and_then(|s| s.period)
    }

    pub fn g_max(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.g_max)
    }

    pub fn g_min(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.g_min)
    }

    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.error.is_some() {
            f.push("failed");
        }
        if self.invariant_violation.is_some() {
            f.push("invariant");
        }
        if self.above_hopf == Some(false) {
            f.push("below-hopf");
        }
        if self.classification() == Some(Classification::Boundary) {
            f.push("boundary");
        }
        f.join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub spec: GridSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major: `cells[j * x.len() + i]`.
    pub cells: Vec<Cell>,
    /// Fasting period at the sweep's delays (min); forced maps only.
    pub natural_period: Option<f64>,
    pub provenance: Provenance,
}

/// SHA-256 over the JSON form of everything that determines a sweep.
pub fn config_hash(params: &ModelParams, spec: &GridSpec, opts: &SweepOptions) -> String {
    #[derive(Serialize)]
    struct Inputs<'a> {
        params: &'a ModelParams,
        spec: &'a GridSpec,
        dt: f64,
        analysis: &'a AnalysisConfig,
    }
    let json = serde_json::to_vec(&Inputs {
        params,
        spec,
        dt: opts.dt,
        analysis: &opts.analysis,
    })
    .expect("sweep inputs serialize");
    hex(&Sha256::digest(&json))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Simulates and classifies a single cell.
pub fn run_cell(params: &ModelParams, protocol: &InfusionProtocol, opts: &SweepOptions) -> Cell {
    let mut cell = Cell {
        x: f64::NAN,
        y: f64::NAN,
        infusion_max: protocol.g_max,
        summary: None,
        error: None,
        invariant_violation: None,
        above_hopf: None,
    };
    let span = opts.analysis.required_span(protocol, params.delays());
    match simulate_default(params, protocol, &IntegratorConfig::new(opts.dt, span)) {
        Ok(traj) => {
            cell.invariant_violation = check_invariants(&traj, params).err();
            match classify(&traj, params, protocol, &opts.analysis) {
                Ok(s) => cell.summary = Some(s),
                Err(e) => cell.error = Some(e.to_string()),
            }
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))
}

/// Runs every cell of `spec`.
pub fn run_grid(params: &ModelParams, spec: &GridSpec, opts: &SweepOptions) -> Result<FieldMap> {
    params.validate()?;
    spec.validate()?;
    opts.analysis.validate()?;
    let xs = spec.x.values();
    let ys = spec.y.values();
    let natural = match spec.kind {
        MapKind::Fasting => None,
        _ => Some(natural_period(params, opts.dt, &opts.analysis)?),
    };
    let hopf = match spec.kind {
        MapKind::Fasting => Some(fasting_hopf_curve(params)?),
        _ => None,
    };
    let nx = xs.len();
    let cells: Vec<Cell> = pool(opts.workers)?.install(|| {
        (0..nx * ys.len())
            .into_par_iter()
            .map(|n| {
                let (x, y) = (xs[n % nx], ys[n / nx]);
                let (p, proto) = spec.cell_setup(params, x, y);
                let mut cell = run_cell(&p, &proto, opts);
                cell.x = x;
                cell.y = y;
                cell.above_hopf = hopf.as_ref().map(|h| h.is_above(x, y));
                cell
            })
            .collect()
    });
    Ok(FieldMap {
        spec: *spec,
        x: xs,
        y: ys,
        cells,
        natural_period: natural,
        provenance: Provenance {
            config_hash: config_hash(params, spec, opts),
            version: crate::VERSION.to_string(),
        },
    })
}

fn fasting_hopf_curve(params: &ModelParams) -> Result<HopfCurve> {
    let eq = equilibrium(params, 0.0)?;
    hopf_curve(&char_coeffs(params, &eq), &CurveOptions::default())
}

/// Resonance map over `(T_in, G_max)` with `t_in = T_in/2`.
pub fn resonance_map(params: &ModelParams, t_in: Axis, g_max: Axis, opts: &SweepOptions) -> Result<FieldMap> {
    run_grid(
        params,
        &GridSpec {
            kind: MapKind::Resonance,
            x: t_in,
            y: g_max,
            period: default_duration_period(),
        },
        opts,
    )
}

/// Duration map over `(t_in, Ḡ)` at fixed `T_in`.
pub fn duration_map(params: &ModelParams, t_in: Axis, mean: Axis, period: f64, opts: &SweepOptions) -> Result<FieldMap> {
    run_grid(
        params,
        &GridSpec {
            kind: MapKind::Duration,
            x: t_in,
            y: mean,
            period,
        },
        opts,
    )
}

/// Fasting map over the delay plane.
pub fn fasting_field_map(params: &ModelParams, tau_i: Axis, tau_g: Axis, opts: &SweepOptions) -> Result<FieldMap> {
    run_grid(
        params,
        &GridSpec {
            kind: MapKind::Fasting,
            x: tau_i,
            y: tau_g,
            period: default_duration_period(),
        },
        opts,
    )
}

/// Scalar per cell used for isocurves and heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scalar {
    Period,
    GMax,
    GMin,
}

impl FieldMap {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[j * self.x.len() + i]
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// Values of a scalar; cells without an oscillation are masked.
    pub fn scalar(&self, which: Scalar) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|c| {
                let s = c.summary.as_ref()?;
                if s.classification == Classification::Steady {
                    return None;
                }
                match which {
                    Scalar::Period => s.period,
                    Scalar::GMax => Some(s.g_max),
                    Scalar::GMin => Some(s.g_min),
                }
            })
            .collect()
    }

    pub fn isocurves(&self, which: Scalar, level: f64) -> Vec<Polyline> {
        let values = self.scalar(which);
        isocurves(
            &Field {
                x: &self.x,
                y: &self.y,
                values: &values,
            },
            level,
        )
    }

    pub const CSV_TAIL: [&'static str; 12] = [
        "classification",
        "p",
        "q",
        "period_min",
        "period_h",
        "g_max",
        "g_min",
        "i_max",
        "i_min",
        "infusion_max",
        "flags",
        "error",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let (xn, yn) = self.spec.kind.axis_names();
        let mut header = vec![xn, yn];
        header.extend(Self::CSV_TAIL);
        w.write_record(&header)?;
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for c in &self.cells {
            let s = c.summary.as_ref();
            let (p, q) = s
                .and_then(|s| s.classification.ratio())
                .map_or((String::new(), String::new()), |(p, q)| (p.to_string(), q.to_string()));
            w.write_record([
                format!("{}", c.x),
                format!("{}", c.y),
                s.map_or("failed".to_string(), |s| s.classification.label().to_string()),
                p,
                q,
                f(c.period()),
                f(c.period().map(|m| m / 60.0)),
                f(c.g_max()),
                f(c.g_min()),
                f(s.map(|s| s.i_max)),
                f(s.map(|s| s.i_min)),
                format!("{}", c.infusion_max),
                c.flags(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Heatmap of a scalar: linear blue (low) to white (high) scale over the
    /// finite range; masked or failed cells gray, quasi-periodic cells
    /// outlined in green and locked cells in black when `outline` is set.
    pub fn write_svg<W: Write>(&self, mut out: W, which: Scalar, outline: bool) -> Result<()> {
        const CELL: f64 = 8.0;
        const MARGIN: f64 = 40.0;
        let values = self.scalar(which);
        let (lo, hi) = values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (nx, ny) = (self.x.len(), self.y.len());
        let w = nx as f64 * CELL + 2.0 * MARGIN;
        let h = ny as f64 * CELL + 2.0 * MARGIN;
        let (xn, yn) = self.spec.kind.axis_names();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        )?;
        for j in 0..ny {
            for i in 0..nx {
                let n = j * nx + i;
                let fill = match values[n] {
                    Some(v) if hi > lo => {
                        let u = (v - lo) / (hi - lo);
                        let r = (255.0 * u).round() as u8;
                        format!("rgb({r},{r},255)")
                    }
                    Some(_) => "rgb(255,255,255)".to_string(),
                    None => "rgb(160,160,160)".to_string(),
                };
                let stroke = match (outline, self.cells[n].classification()) {
                    (true, Some(Classification::QuasiPeriodic)) => r#" stroke="green" stroke-width="0.8""#,
                    (true, Some(Classification::Locked { .. })) => r#" stroke="black" stroke-width="0.4""#,
                    _ => "",
                };
                // y increases upwards
                let px = MARGIN + i as f64 * CELL;
                let py = MARGIN + (ny - 1 - j) as f64 * CELL;
                writeln!(
                    out,
                    r#"<rect x="{px}" y="{py}" width="{CELL}" height="{CELL}" fill="{fill}"{stroke}/>"#
                )?;
            }
        }
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{xn} [{}, {}]</text>"#,
            w / 2.0,
            h - 12.0,
            self.x[0],
            self.x[nx - 1]
        )?;
        writeln!(
            out,
            r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{yn} [{}, {}]</text>"#,
            h / 2.0,
            h / 2.0,
            self.y[0],
            self.y[ny - 1]
        )?;
        writeln!(
            out,
            r#"<text x="{MARGIN}" y="24" font-size="12">{which:?}: {lo:.3} (blue) .. {hi:.3} (white)</text>"#
        )?;
        writeln!(out, "</svg>")?;
        Ok(())
    }

    /// Connected regions (4-neighbour) of cells sharing a locked label.
    pub fn locked_regions(&self) -> Vec<LockedRegion> {
        let (nx, ny) = (self.x.len(), self.y.len());
        let mut seen = vec![false; nx * ny];
        let mut regions = Vec::new();
        for start in 0..nx * ny {
            let Some(Classification::Locked { p, q }) = self.cells[start].classification() else {
                continue;
            };
            if seen[start] {
                continue;
            }
            let label = (p, q);
            let mut stack = vec![start];
            let mut members = Vec::new();
            seen[start] = true;
            while let Some(n) = stack.pop() {
                members.push(n);
                let (i, j) = (n % nx, n / nx);
                let mut push = |m: usize| {
                    if !seen[m] && self.cells[m].classification().and_then(|c| c.ratio()) == Some(label) {
                        seen[m] = true;
                        stack.push(m);
                    }
                };
                if i > 0 {
                    push(n - 1);
                }
                if i + 1 < nx {
                    push(n + 1);
                }
                if j > 0 {
                    push(n - nx);
                }
                if j + 1 < ny {
                    push(n + nx);
                }
            }
            members.sort_unstable();
            regions.push(LockedRegion { p, q, cells: members });
        }
        regions
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockedRegion {
    pub p: u32,
    pub q: u32,
    /// Row-major cell indices.
    pub cells: Vec<usize>,
}

impl LockedRegion {
    /// Lowest row index reached by the region.
    pub fn lowest_row(&self, nx: usize) -> usize {
        self.cells.iter().map(|n| n / nx).min().unwrap_or(0)
    }

    /// Lowest row index at or above `from` reached by the region, if any.
    pub fn lowest_row_from(&self, nx: usize, from: usize) -> Option<usize> {
        self.cells.iter().map(|n| n / nx).filter(|&j| j >= from).min()
    }

    /// Column indices of the region in row `j`.
    pub fn columns_in_row(&self, nx: usize, j: usize) -> Vec<usize> {
        self.cells.iter().filter(|&&n| n / nx == j).map(|n| n % nx).collect()
    }
}
