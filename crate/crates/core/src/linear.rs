//! Linear stability of the equilibrium and the Hopf curve in the delay plane.
//!
//! Linearising about `(G*, I*)` gives the characteristic function
//!
//! ```text
//! χ(λ) = λ² + α₁λ + α₀ + β₁ e^{-λτ₁} + β₂ e^{-λτ₂},   τ₁ = τ_I, τ₂ = τ_I + τ_G
//! ```
//!
//! Purely imaginary roots `λ = iω` are parametrised by `ω`. With
//! `R(ω) = |α₀ - ω² + iα₁ω|` and `ψ(ω) = atan2(α₁ω, ω² - α₀)` the two
//! exponential terms must close a triangle with sides `R, β₁, β₂`, so
//!
//! ```text
//! τ₁(ω) = (ψ - acos c₁) / ω,   τ₂(ω) = (ψ + acos c₂) / ω
//! c₁ = (R² + β₁² - β₂²) / (2Rβ₁),   c₂ = (R² + β₂² - β₁²) / (2Rβ₂)
//! ```
//!
//! which is real exactly when `|β₂ - β₁| <= R <= β₁ + β₂`. Shifting `τ_I` or
//! `τ_G` by multiples of `2π/ω` gives the other branches `(k, l)`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{equilibrium, Equilibrium, ModelParams};

/// Residual bound certified for every emitted curve sample.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Width of the band outside [-1, 1] in which arccos arguments are clamped.
pub const ARCCOS_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharCoeffs {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub equilibrium: Equilibrium,
}

/// Characteristic coefficients at a certified equilibrium.
pub fn char_coeffs(params: &ModelParams, eq: &Equilibrium) -> CharCoeffs {
    let [g, i] = eq.state;
    let a = params.df2(g) + params.df3(g) * params.f4(i);
    let alpha1 = a + params.d;
    let alpha0 = params.d * a;
    debug_assert!((alpha0 - params.d * (alpha1 - params.d)).abs() <= 1e-12 * alpha0.abs().max(1.0));
    CharCoeffs {
        alpha0,
        alpha1,
        beta1: params.df1(g) * params.f3(g) * params.df4(i),
        beta2: -params.df1(g) * params.df5(i),
        equilibrium: *eq,
    }
}

impl CharCoeffs {
    /// Coefficients with the same equilibrium and altered `β₁`.
    pub fn with_beta1(mut self, beta1: f64) -> Self {
        self.beta1 = beta1;
        self
    }

    /// `α₁ > α₀` and `β₂ > α₀`.
    pub fn existence(&self) -> Result<()> {
        if !(self.alpha1 > self.alpha0) {
            return Err(Error::Existence(format!(
                "alpha1 = {:e} is not above alpha0 = {:e}",
                self.alpha1, self.alpha0
            )));
        }
        if !(self.beta2 > self.alpha0) {
            return Err(Error::Existence(format!(
                "beta2 = {:e} is not above alpha0 = {:e}",
                self.beta2, self.alpha0
            )));
        }
        Ok(())
    }

    fn modulus(&self, omega: f64) -> f64 {
        let re = omega * omega - self.alpha0;
        (re * re + self.alpha1 * self.alpha1 * omega * omega).sqrt()
    }

    fn phase(&self, omega: f64) -> f64 {
        (self.alpha1 * omega).atan2(omega * omega - self.alpha0)
    }

    /// Frequency range on which both arccos arguments are admissible.
    pub fn domain(&self) -> (f64, f64) {
        let lo = (self.beta2 - self.beta1).abs();
        let hi = self.beta1 + self.beta2;
        (self.omega_for_modulus(lo).unwrap_or(0.0), self.omega_for_modulus(hi).unwrap_or(0.0))
    }

    /// Positive ω with `R(ω) = r`, if any.
    fn omega_for_modulus(&self, r: f64) -> Option<f64> {
        // ω⁴ + (α₁² - 2α₀) ω² + α₀² - r² = 0
        let b = self.alpha1 * self.alpha1 - 2.0 * self.alpha0;
        let c = self.alpha0 * self.alpha0 - r * r;
        let disc = b * b - 4.0 * c;
        if disc < 0.0 {
            return None;
        }
        let w2 = 0.5 * (-b + disc.sqrt());
        (w2 > 0.0).then(|| w2.sqrt())
    }
}

/// χ(λ) with `τ₁ = τ_I`, `τ₂ = τ_I + τ_G`.
pub fn chi(lambda: Complex64, coeffs: &CharCoeffs, tau_i: f64, tau_g: f64) -> Complex64 {
    let t1 = tau_i;
    let t2 = tau_i + tau_g;
    lambda * lambda
        + coeffs.alpha1 * lambda
        + coeffs.alpha0
        + coeffs.beta1 * (-lambda * t1).exp()
        + coeffs.beta2 * (-lambda * t2).exp()
}

fn clamped_acos(x: f64, omega: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + ARCCOS_BAND {
        return Err(Error::OutsideDomain { omega });
    }
    Ok(x.clamp(-1.0, 1.0).acos())
}

/// `(τ₁(ω), τ₂(ω))` on the principal branch.
pub fn tau_pair(coeffs: &CharCoeffs, omega: f64) -> Result<(f64, f64)> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::OutsideDomain { omega });
    }
    let (b1, b2) = (coeffs.beta1, coeffs.beta2);
    let r = coeffs.modulus(omega);
    let psi = coeffs.phase(omega);
    let a1 = clamped_acos((r * r + b1 * b1 - b2 * b2) / (2.0 * r * b1), omega)?;
    let a2 = clamped_acos((r * r + b2 * b2 - b1 * b1) / (2.0 * r * b2), omega)?;
    Ok(((psi - a1) / omega, (psi + a2) / omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfSample {
    pub omega: f64,
    pub tau_i: f64,
    pub tau_g: f64,
    /// |χ(iω)| at the sample.
    pub residual: f64,
}

impl HopfSample {
    /// Period of the critical oscillation (min).
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// Hopf point at frequency `ω` on branch `(k, l)`.
pub fn hopf_point(coeffs: &CharCoeffs, omega: f64, branch: (i32, i32)) -> Result<HopfSample> {
    let (t1, t2) = tau_pair(coeffs, omega)?;
    let shift = 2.0 * PI / omega;
    let tau_i = t1 + branch.0 as f64 * shift;
    let tau_g = t2 - t1 + branch.1 as f64 * shift;
    let residual = chi(Complex64::new(0.0, omega), coeffs, tau_i, tau_g).norm();
    Ok(HopfSample {
        omega,
        tau_i,
        tau_g,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaBounds {
    /// Frequency with `τ_I = 0`.
    pub omega_i: f64,
    /// Frequency with `τ_G = 0`.
    pub omega_g: f64,
    pub tau_i_at_omega_g: f64,
    pub tau_g_at_omega_i: f64,
    pub k_star: i32,
    pub l_star: i32,
}

fn smallest_positive_shift(base: f64, omega: f64) -> (f64, i32) {
    let shift = 2.0 * PI / omega;
    let k = if base > 0.0 { 0 } else { (-base / shift).floor() as i32 + 1 };
    (base + k as f64 * shift, k)
}

/// Closed-form end points of the principal branch.
///
/// `ω_G` solves `R(ω) = β₁ + β₂` and `ω_I` solves
/// `|ω² - α₀ - β₁ - iα₁ω| = β₂`, i.e.
/// `ω_I² = s + sqrt(s² + β₂² - (α₀ + β₁)²)` with `s = α₀ + β₁ - α₁²/2`.
pub fn omega_bounds(coeffs: &CharCoeffs) -> Result<OmegaBounds> {
    coeffs.existence()?;
    let CharCoeffs {
        alpha0: a0,
        alpha1: a1,
        beta1: b1,
        beta2: b2,
        ..
    } = *coeffs;
    let sg = a0 - 0.5 * a1 * a1;
    let rad_g = sg * sg + (b1 + b2) * (b1 + b2) - a0 * a0;
    if rad_g < 0.0 || sg + rad_g.sqrt() <= 0.0 {
        return Err(Error::Existence(format!("omega_G radicand is negative ({rad_g:e})")));
    }
    let omega_g = (sg + rad_g.sqrt()).sqrt();
    let si = a0 + b1 - 0.5 * a1 * a1;
    let rad_i = si * si + b2 * b2 - (a0 + b1) * (a0 + b1);
    if rad_i < 0.0 || si + rad_i.sqrt() <= 0.0 {
        return Err(Error::Existence(format!(
            "omega_I radicand is negative ({rad_i:e}): beta2 does not exceed alpha0 + beta1"
        )));
    }
    let omega_i = (si + rad_i.sqrt()).sqrt();
    let (tau_i_at_omega_g, k_star) = smallest_positive_shift((a1 * omega_g).atan2(omega_g * omega_g - a0) / omega_g, omega_g);
    let (tau_g_at_omega_i, l_star) =
        smallest_positive_shift((a1 * omega_i).atan2(omega_i * omega_i - a0 - b1) / omega_i, omega_i);
    Ok(OmegaBounds {
        omega_i,
        omega_g,
        tau_i_at_omega_g,
        tau_g_at_omega_i,
        k_star,
        l_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    /// Number of uniform ω samples before refinement.
    pub samples: usize,
    /// Branch indices `(k, l)`.
    pub branch: (i32, i32),
    /// Largest `τ_I + τ_G` kept on the curve (min).
    pub max_total_delay: f64,
    /// Refine where consecutive samples are further apart than this (min).
    pub max_step: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            samples: 2000,
            branch: (0, 0),
            max_total_delay: 240.0,
            max_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfCurve {
    pub g_in: f64,
    pub branch: (i32, i32),
    pub coeffs: CharCoeffs,
    /// Samples ordered by increasing ω.
    pub samples: Vec<HopfSample>,
}

impl HopfCurve {
    pub fn max_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    pub fn is_certified(&self) -> bool {
        self.samples.iter().all(|s| s.residual < RESIDUAL_TOLERANCE)
    }

    pub fn omega_range(&self) -> (f64, f64) {
        (self.samples[0].omega, self.samples[self.samples.len() - 1].omega)
    }

    /// Whether `(τ_I, τ_G)` lies above the curve (on the oscillatory side).
    /// Points outside the curve's τ_I range count as above only if their
    /// τ_G exceeds the curve's value at the nearest end.
    pub fn is_above(&self, tau_i: f64, tau_g: f64) -> bool {
        tau_g > self.tau_g_at(tau_i)
    }

    /// Curve τ_G at a given τ_I by linear interpolation in the samples,
    /// clamped to the end values outside the covered range.
    pub fn tau_g_at(&self, tau_i: f64) -> f64 {
        let s = &self.samples;
        let (first, last) = (&s[0], &s[s.len() - 1]);
        let (lo, hi) = if first.tau_i <= last.tau_i { (first, last) } else { (last, first) };
        if tau_i <= lo.tau_i {
            return lo.tau_g;
        }
        if tau_i >= hi.tau_i {
            return hi.tau_g;
        }
        for w in s.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (x0, x1) = (a.tau_i.min(b.tau_i), a.tau_i.max(b.tau_i));
            if tau_i >= x0 && tau_i <= x1 && x1 > x0 {
                let u = (tau_i - a.tau_i) / (b.tau_i - a.tau_i);
                return a.tau_g + u * (b.tau_g - a.tau_g);
            }
        }
        hi.tau_g
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let f_lo = f(lo)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// ω interval of the nonnegative part of a branch, capped by total delay.
fn branch_interval(coeffs: &CharCoeffs, opts: &CurveOptions) -> Result<(f64, f64)> {
    let (dom_lo, dom_hi) = coeffs.domain();
    if !(dom_hi > dom_lo && dom_hi > 0.0) {
        return Err(Error::Existence("empty frequency domain".into()));
    }
    let pt = |w: f64| hopf_point(coeffs, w, opts.branch);
    // stay a hair inside the open domain where ω → 0 is singular
    let lo_edge = if dom_lo > 0.0 { dom_lo } else { dom_hi * 1e-6 };
    let mut lo = lo_edge;
    let mut hi = dom_hi;

    let at_hi = pt(hi)?;
    if at_hi.tau_i < 0.0 {
        return Err(Error::Existence("tau_I is negative at omega_G on this branch".into()));
    }
    let at_lo = pt(lo)?;
    if at_lo.tau_i < 0.0 {
        lo = bisect(lo, hi, |w| Ok(pt(w)?.tau_i))?;
        if pt(lo)?.tau_i < 0.0 {
            lo = lo.next_up();
        }
    }
    if at_hi.tau_g < 0.0 {
        hi = bisect(lo, hi, |w| Ok(pt(w)?.tau_g))?;
    }
    let total = |w: f64| -> Result<f64> {
        let p = pt(w)?;
        Ok(p.tau_i + p.tau_g - opts.max_total_delay)
    };
    if total(lo)? > 0.0 {
        if total(hi)? > 0.0 {
            return Err(Error::Existence(format!(
                "curve lies beyond the total delay cap {}",
                opts.max_total_delay
            )));
        }
        lo = bisect(lo, hi, total)?;
    }
    Ok((lo, hi))
}

/// Samples the Hopf curve for one branch.
pub fn hopf_curve(coeffs: &CharCoeffs, opts: &CurveOptions) -> Result<HopfCurve> {
    if opts.samples < 2 {
        return Err(Error::param("samples", "need at least 2"));
    }
    let (lo, hi) = branch_interval(coeffs, opts)?;
    let n = opts.samples;
    let mut pts: Vec<HopfSample> = Vec::with_capacity(n);
    for j in 0..n {
        let w = if j + 1 == n {
            hi
        } else {
            lo + (hi - lo) * j as f64 / (n - 1) as f64
        };
        pts.push(hopf_point(coeffs, w, opts.branch)?);
    }
    // refine steep stretches by midpoint insertion
    for _ in 0..12 {
        let mut refined = Vec::with_capacity(pts.len());
        let mut changed = false;
        for w in pts.windows(2) {
            refined.push(w[0]);
            let d = (w[1].tau_i - w[0].tau_i).hypot(w[1].tau_g - w[0].tau_g);
            let mid = 0.5 * (w[0].omega + w[1].omega);
            if d > opts.max_step && mid > w[0].omega && mid < w[1].omega {
                refined.push(hopf_point(coeffs, mid, opts.branch)?);
                changed = true;
            }
        }
        refined.push(pts[pts.len() - 1]);
        pts = refined;
        if !changed {
            break;
        }
    }
    for p in &mut pts {
        // clamp rounding-level negatives at the trimmed ends
        if p.tau_i < 0.0 && p.tau_i > -1e-9 {
            p.tau_i = 0.0;
        }
        if p.tau_g < 0.0 && p.tau_g > -1e-9 {
            p.tau_g = 0.0;
        }
    }
    pts.retain(|p| p.tau_i >= 0.0 && p.tau_g >= 0.0);
    if pts.len() < 2 {
        return Err(Error::Existence("fewer than two admissible samples".into()));
    }
    Ok(HopfCurve {
        g_in: coeffs.equilibrium.g_in,
        branch: opts.branch,
        coeffs: *coeffs,
        samples: pts,
    })
}

/// Exact curve point with prescribed `τ_I` on the principal branch.
pub fn exact_tau_g(coeffs: &CharCoeffs, tau_i: f64) -> Result<f64> {
    let opts = CurveOptions::default();
    let (lo, hi) = branch_interval(coeffs, &opts)?;
    let f = |w: f64| Ok(hopf_point(coeffs, w, (0, 0))?.tau_i - tau_i);
    if f(lo)?.signum() == f(hi)?.signum() {
        return Err(Error::param("tau_I", format!("{tau_i} is outside the curve's range")));
    }
    let w = bisect(lo, hi, f)?;
    Ok(hopf_point(coeffs, w, (0, 0))?.tau_g)
}

/// Intercept of the principal branch with the ray `τ_G = slope · τ_I`.
pub fn ray_intercept(coeffs: &CharCoeffs, slope: f64, opts: &CurveOptions) -> Result<HopfSample> {
    let (lo, hi) = branch_interval(coeffs, opts)?;
    let f = |w: f64| {
        let p = hopf_point(coeffs, w, opts.branch)?;
        Ok(p.tau_g - slope * p.tau_i)
    };
    if f(lo)?.signum() == f(hi)?.signum() {
        return Err(Error::Existence(format!("curve does not cross the ray of slope {slope}")));
    }
    hopf_point(coeffs, bisect(lo, hi, f)?, opts.branch)
}

/// Zeroth-order frequency `ω₀` (the `ω_G` formula with `β₁ = 0`).
pub fn omega0(coeffs: &CharCoeffs) -> Result<f64> {
    let (a0, a1, b2) = (coeffs.alpha0, coeffs.alpha1, coeffs.beta2);
    let s = a0 - 0.5 * a1 * a1;
    let rad = s * s + b2 * b2 - a0 * a0;
    if rad < 0.0 || s + rad.sqrt() <= 0.0 {
        return Err(Error::Existence(format!("omega_0 radicand is negative ({rad:e})")));
    }
    Ok((s + rad.sqrt()).sqrt())
}

/// First-order frequency correction `ω₁(τ_I) = ω₀ τ_I / (α₁ - α₀ + ω₀²)`.
pub fn omega1(coeffs: &CharCoeffs, tau_i: f64) -> Result<f64> {
    let w0 = omega0(coeffs)?;
    Ok(w0 * tau_i / (coeffs.alpha1 - coeffs.alpha0 + w0 * w0))
}

/// First-order perturbation approximation of the curve: `τ_G ≈ τ₂(ω₀ + β₁ω₁) - τ_I`.
pub fn hopf_curve_approx(coeffs: &CharCoeffs, tau_i: f64) -> Result<f64> {
    if !(tau_i >= 0.0) {
        return Err(Error::param("tau_I", "must be >= 0"));
    }
    let w = omega0(coeffs)? + coeffs.beta1 * omega1(coeffs, tau_i)?;
    let t2 = if coeffs.beta1 == 0.0 {
        // τ₂ with the β₁ triangle collapsed: R = β₂, acos c₂ = 0
        coeffs.phase(w) / w
    } else {
        tau_pair(coeffs, w)?.1
    };
    Ok(t2 - tau_i)
}

/// Writes `omega,tau_I,tau_G,residual,G_in` rows for every curve, plus
/// `tau_G_approx` (the perturbation approximation at the sample's τ_I, empty
/// where it is undefined) when `with_approx` is set.
pub fn write_curves_csv<W: Write>(out: W, curves: &[HopfCurve], with_approx: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["omega", "tau_I", "tau_G", "residual", "G_in"];
    if with_approx {
        header.push("tau_G_approx");
    }
    w.write_record(&header)?;
    for curve in curves {
        for s in &curve.samples {
            let mut row = vec![
                format!("{:.12e}", s.omega),
                format!("{:.9}", s.tau_i),
                format!("{:.9}", s.tau_g),
                format!("{:.3e}", s.residual),
                format!("{}", curve.g_in),
            ];
            if with_approx {
                row.push(
                    hopf_curve_approx(&curve.coeffs, s.tau_i)
                        .map_or(String::new(), |v| format!("{v:.9}")),
                );
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Largest |approximate - exact| τ_G over `n + 1` evenly spaced τ_I in
/// `[0, min(tau_i_max, curve end))`, skipping points where either is undefined.
pub fn approx_gap(coeffs: &CharCoeffs, tau_i_max: f64, n: usize) -> Result<f64> {
    let curve_top = omega_bounds(coeffs)?.tau_i_at_omega_g;
    let top = tau_i_max.min(curve_top) * (1.0 - 1e-6);
    let mut gap: f64 = 0.0;
    for j in 0..=n {
        let t = top * j as f64 / n as f64;
        if let (Ok(a), Ok(e)) = (hopf_curve_approx(coeffs, t), exact_tau_g(coeffs, t)) {
            gap = gap.max((a - e).abs());
        }
    }
    Ok(gap)
}

/// Hopf curves for a list of constant infusion rates.
pub fn hopf_family(params: &ModelParams, g_ins: &[f64], opts: &CurveOptions) -> Result<Vec<HopfCurve>> {
    g_ins
        .iter()
        .map(|&g_in| {
            let eq = equilibrium(params, g_in)?;
            hopf_curve(&char_coeffs(params, &eq), opts)
        })
        .collect()
}
