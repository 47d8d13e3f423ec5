//! The glucose–insulin delayed-feedback vector field.
//!
//! ```text
//! G'(t) = G_in(t) - f2(G(t)) - f3(G(t)) f4(I(t)) + f5(I(t - τ_G))
//! I'(t) = I_in(t) + f1(G(t - τ_I)) - d I(t)
//! ```
//!
//! `G` is the glucose amount (mg) in the distribution volume `V_g` (litres)
//! and `I` the insulin amount (mU) in `V_i`; the Hill half-saturation
//! constants below are calibrated for those amounts. Concentrations are
//! `G / (10 V_g)` mg/dl and `I / V_i` uU/ml.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arguments below this are treated as zero by the Hill pathways.
const HILL_FLOOR: f64 = 1e-30;

/// Certification tolerance for both balance equations.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-10;

/// Model constants. Field names follow the usual symbols; the serialized
/// keys are the symbols themselves (`R_m`, `tau_I`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Maximal insulin secretion rate (mU/min).
    #[serde(rename = "R_m")]
    pub r_m: f64,
    /// Insulin distribution volume (l).
    #[serde(rename = "V_i")]
    pub v_i: f64,
    /// Glucose distribution volume (l).
    #[serde(rename = "V_g")]
    pub v_g: f64,
    /// Insulin exchange rate between plasma and remote compartments (l/min).
    #[serde(rename = "E")]
    pub e: f64,
    /// Maximal insulin-independent glucose utilisation (mg/min).
    #[serde(rename = "U_b")]
    pub u_b: f64,
    /// Insulin degradation time constant of the remote compartment (min).
    #[serde(rename = "t_i")]
    pub t_i: f64,
    #[serde(rename = "C_3")]
    pub c_3: f64,
    /// Maximal hepatic glucose production (mg/min).
    #[serde(rename = "R_g")]
    pub r_g: f64,
    #[serde(rename = "U_0")]
    pub u_0: f64,
    /// Plasma volume (l).
    #[serde(rename = "V_p")]
    pub v_p: f64,
    #[serde(rename = "U_m")]
    pub u_m: f64,
    pub h_1: f64,
    pub k_1: f64,
    pub h_2: f64,
    pub k_2: f64,
    pub h_4: f64,
    pub k_4: f64,
    pub h_5: f64,
    pub k_5: f64,
    /// Insulin degradation rate (1/min).
    pub d: f64,
    /// Delay of insulin secretion behind glucose (min).
    #[serde(rename = "tau_I")]
    pub tau_i: f64,
    /// Delay of hepatic glucose production behind insulin (min).
    #[serde(rename = "tau_G")]
    pub tau_g: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            r_m: 210.0,
            v_i: 11.0,
            v_g: 10.0,
            e: 0.2,
            u_b: 72.0,
            t_i: 100.0,
            c_3: 1000.0,
            r_g: 180.0,
            u_0: 40.0,
            v_p: 3.0,
            u_m: 940.0,
            h_1: 2.0,
            k_1: 6000.0,
            h_2: 1.8,
            k_2: 103.5,
            h_4: 1.5,
            k_4: 80.0,
            h_5: -8.54,
            k_5: 26.7,
            d: 0.06,
            tau_i: 5.0,
            tau_g: 20.0,
        }
    }
}

/// `x^h / (x^h + K^h)` written as `1 / (1 + (K/x)^h)`, with the continuous
/// limit at `x = 0` (0 for `h > 0`, 1 for `h < 0`).
#[inline]
fn hill(x: f64, half: f64, h: f64) -> f64 {
    if x <= HILL_FLOOR {
        return if h > 0.0 {
            0.0
        } else if h < 0.0 {
            1.0
        } else {
            0.5
        };
    }
    let q = (h * (half / x).ln()).exp();
    1.0 / (1.0 + q)
}

#[inline]
fn hill_derivative(x: f64, half: f64, h: f64) -> f64 {
    if x <= HILL_FLOOR {
        return 0.0;
    }
    let q = (h * (half / x).ln()).exp();
    if !q.is_finite() {
        return 0.0;
    }
    let s = 1.0 + q;
    h / x * q / (s * s)
}

/// One of the five nonlinear pathways.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pathway {
    /// Insulin secretion driven by glucose.
    F1,
    /// Insulin-independent glucose utilisation.
    F2,
    /// Glucose factor of insulin-dependent utilisation.
    F3,
    /// Insulin factor of insulin-dependent utilisation.
    F4,
    /// Hepatic glucose production, inhibited by insulin.
    F5,
}

impl Pathway {
    pub const ALL: [Pathway; 5] = [Pathway::F1, Pathway::F2, Pathway::F3, Pathway::F4, Pathway::F5];

    pub fn name(self) -> &'static str {
        match self {
            Pathway::F1 => "f1",
            Pathway::F2 => "f2",
            Pathway::F3 => "f3",
            Pathway::F4 => "f4",
            Pathway::F5 => "f5",
        }
    }

    /// Checked evaluation; the argument is glucose for f1–f3 and insulin for
    /// f4, f5, in model amounts.
    pub fn eval(self, params: &ModelParams, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::param(self.name(), format!("argument must be >= 0, got {x}")));
        }
        Ok(match self {
            Pathway::F1 => params.f1(x),
            Pathway::F2 => params.f2(x),
            Pathway::F3 => params.f3(x),
            Pathway::F4 => params.f4(x),
            Pathway::F5 => params.f5(x),
        })
    }

    /// Analytic derivative with respect to the argument.
    pub fn derivative(self, params: &ModelParams, x: f64) -> Result<f64> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::param(self.name(), format!("argument must be > 0, got {x}")));
        }
        Ok(match self {
            Pathway::F1 => params.df1(x),
            Pathway::F2 => params.df2(x),
            Pathway::F3 => params.df3(x),
            Pathway::F4 => params.df4(x),
            Pathway::F5 => params.df5(x),
        })
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("V_i", self.v_i),
            ("V_g", self.v_g),
            ("E", self.e),
            ("t_i", self.t_i),
            ("C_3", self.c_3),
            ("V_p", self.v_p),
            ("k_1", self.k_1),
            ("k_2", self.k_2),
            ("k_4", self.k_4),
            ("k_5", self.k_5),
            ("d", self.d),
            ("tau_I", self.tau_i),
            ("tau_G", self.tau_g),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        let finite = [
            ("R_m", self.r_m),
            ("U_b", self.u_b),
            ("R_g", self.r_g),
            ("U_0", self.u_0),
            ("U_m", self.u_m),
            ("h_1", self.h_1),
            ("h_2", self.h_2),
            ("h_4", self.h_4),
            ("h_5", self.h_5),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.u_0 < 0.0 {
            return Err(Error::param("U_0", "must be >= 0"));
        }
        if self.u_m <= self.u_0 {
            return Err(Error::param("U_m", "must exceed U_0"));
        }
        Ok(())
    }

    pub fn delays(&self) -> [f64; 2] {
        [self.tau_i, self.tau_g]
    }

    pub fn with_delays(mut self, tau_i: f64, tau_g: f64) -> Self {
        self.tau_i = tau_i;
        self.tau_g = tau_g;
        self
    }

    /// Half-saturation glucose amount of f1.
    pub fn f1_half(&self) -> f64 {
        self.v_g * self.k_1
    }

    pub fn f2_half(&self) -> f64 {
        self.v_g * self.k_2
    }

    /// Half-saturation insulin amount of f4: `k_4 (1/V_i + 1/(E t_i))⁻¹`.
    pub fn f4_half(&self) -> f64 {
        self.k_4 / (1.0 / self.v_i + 1.0 / (self.e * self.t_i))
    }

    pub fn f5_half(&self) -> f64 {
        self.v_p * self.k_5
    }

    #[inline]
    pub fn f1(&self, g: f64) -> f64 {
        self.r_m * hill(g, self.f1_half(), self.h_1)
    }

    #[inline]
    pub fn f2(&self, g: f64) -> f64 {
        self.u_b * hill(g, self.f2_half(), self.h_2)
    }

    #[inline]
    pub fn f3(&self, g: f64) -> f64 {
        g / (self.c_3 * self.v_g)
    }

    #[inline]
    pub fn f4(&self, i: f64) -> f64 {
        self.u_0 + (self.u_m - self.u_0) * hill(i, self.f4_half(), self.h_4)
    }

    #[inline]
    pub fn f5(&self, i: f64) -> f64 {
        self.r_g * hill(i, self.f5_half(), self.h_5)
    }

    pub fn df1(&self, g: f64) -> f64 {
        self.r_m * hill_derivative(g, self.f1_half(), self.h_1)
    }

    pub fn df2(&self, g: f64) -> f64 {
        self.u_b * hill_derivative(g, self.f2_half(), self.h_2)
    }

    pub fn df3(&self, _g: f64) -> f64 {
        1.0 / (self.c_3 * self.v_g)
    }

    pub fn df4(&self, i: f64) -> f64 {
        (self.u_m - self.u_0) * hill_derivative(i, self.f4_half(), self.h_4)
    }

    pub fn df5(&self, i: f64) -> f64 {
        self.r_g * hill_derivative(i, self.f5_half(), self.h_5)
    }

    /// Vector field in model amounts. `g_in` (mg/min) and `i_in` (mU/min)
    /// are infusion rates in the same units.
    #[inline]
    pub fn rhs(&self, state: &[f64; 2], g_delayed: f64, i_delayed: f64, g_in: f64, i_in: f64) -> [f64; 2] {
        let [g, i] = *state;
        let dg = g_in - self.f2(g) - self.f3(g) * self.f4(i) + self.f5(i_delayed);
        let di = i_in + self.f1(g_delayed) - self.d * i;
        [dg, di]
    }

    /// Glucose distribution volume in dl.
    pub fn glucose_volume_dl(&self) -> f64 {
        10.0 * self.v_g
    }

    pub fn glucose_concentration(&self, amount_mg: f64) -> f64 {
        amount_mg / self.glucose_volume_dl()
    }

    pub fn glucose_amount(&self, mg_per_dl: f64) -> f64 {
        mg_per_dl * self.glucose_volume_dl()
    }

    /// mU in `V_i` litres to uU/ml (= mU/l).
    pub fn insulin_concentration(&self, amount_mu: f64) -> f64 {
        amount_mu / self.v_i
    }

    pub fn insulin_amount(&self, uu_per_ml: f64) -> f64 {
        uu_per_ml * self.v_i
    }

    /// Converts an infusion rate in mg dl⁻¹ min⁻¹ into mg/min.
    pub fn glucose_infusion_amount(&self, rate_mg_per_dl_min: f64) -> f64 {
        rate_mg_per_dl_min * self.glucose_volume_dl()
    }

    /// Reduced balance `G_in - f2(G) - f3(G) f4(I(G)) + f5(I(G))` with
    /// `I(G) = f1(G)/d`, in model amounts (`g_in` in mg/min).
    pub fn balance(&self, g: f64, g_in: f64) -> f64 {
        let i = self.f1(g) / self.d;
        g_in - self.f2(g) - self.f3(g) * self.f4(i) + self.f5(i)
    }

    fn balance_derivative(&self, g: f64) -> f64 {
        let i = self.f1(g) / self.d;
        let di = self.df1(g) / self.d;
        -self.df2(g) - self.df3(g) * self.f4(i) - self.f3(g) * self.df4(i) * di + self.df5(i) * di
    }
}

/// Certified steady state under constant glucose infusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Glucose concentration (mg/dl).
    pub g_star: f64,
    /// Insulin concentration (uU/ml).
    pub i_star: f64,
    /// Constant infusion rate (mg dl⁻¹ min⁻¹).
    pub g_in: f64,
    /// Equilibrium in model amounts `[G (mg), I (mU)]`.
    pub state: [f64; 2],
    /// |dG/dt| at the equilibrium (mg/min).
    pub residual_glucose: f64,
    /// |dI/dt| at the equilibrium (mU/min).
    pub residual_insulin: f64,
}

/// Bracket of the equilibrium search in mg/dl.
pub const EQUILIBRIUM_BRACKET: (f64, f64) = (1e-6, 1e6);

/// Solves the reduced scalar balance by bisection with safeguarded Newton
/// steps and certifies both balance residuals.
pub fn equilibrium(params: &ModelParams, g_in: f64) -> Result<Equilibrium> {
    params.validate()?;
    if !(g_in >= 0.0 && g_in.is_finite()) {
        return Err(Error::param("G_in", format!("must be >= 0, got {g_in}")));
    }
    let rate = params.glucose_infusion_amount(g_in);
    let (lo_c, hi_c) = EQUILIBRIUM_BRACKET;
    let mut lo = params.glucose_amount(lo_c);
    let mut hi = params.glucose_amount(hi_c);
    let f_lo = params.balance(lo, rate);
    let f_hi = params.balance(hi, rate);
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoEquilibrium { lo: lo_c, hi: hi_c });
    }
    let increasing = f_hi > f_lo;

    let mut g = 0.5 * (lo + hi);
    for _ in 0..400 {
        let f = params.balance(g, rate);
        if f == 0.0 {
            break;
        }
        if (f > 0.0) == increasing {
            hi = g;
        } else {
            lo = g;
        }
        let df = params.balance_derivative(g);
        let newton = g - f / df;
        let next = if df != 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - g).abs() <= 4.0 * f64::EPSILON * g.abs() {
            g = next;
            break;
        }
        g = next;
    }

    let i = params.f1(g) / params.d;
    let [dg, di] = params.rhs(&[g, i], g, i, rate, 0.0);
    let (rg, ri) = (dg.abs(), di.abs());
    if !(rg < EQUILIBRIUM_TOLERANCE && ri < EQUILIBRIUM_TOLERANCE) {
        return Err(Error::Uncertified { residual: rg.max(ri) });
    }
    Ok(Equilibrium {
        g_star: params.glucose_concentration(g),
        i_star: params.insulin_concentration(i),
        g_in,
        state: [g, i],
        residual_glucose: rg,
        residual_insulin: ri,
    })
}
