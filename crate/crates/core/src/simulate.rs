//! Runs the model under an infusion protocol.

use crate::dde::{integrate, InitialHistory, IntegratorConfig, Trajectory};
use crate::error::Result;
use crate::forcing::InfusionProtocol;
use crate::model::ModelParams;

/// Default constant initial history (mg/dl, uU/ml).
pub const DEFAULT_INITIAL: (f64, f64) = (100.0, 20.0);

/// Constant initial history given in concentrations.
pub fn constant_history(params: &ModelParams, glucose_mg_dl: f64, insulin_uu_ml: f64) -> InitialHistory<2> {
    InitialHistory::Constant([params.glucose_amount(glucose_mg_dl), params.insulin_amount(insulin_uu_ml)])
}

/// Integrates the model; the trajectory stores model amounts `[G, I]`.
pub fn simulate(
    params: &ModelParams,
    protocol: &InfusionProtocol,
    history: InitialHistory<2>,
    config: &IntegratorConfig,
) -> Result<Trajectory<2>> {
    params.validate()?;
    protocol.validate()?;
    let scale = params.glucose_volume_dl();
    let p = *params;
    let proto = *protocol;
    integrate(
        move |t, x, delayed| {
            // delayed[0] = x(t - τ_I), delayed[1] = x(t - τ_G)
            let g_in = scale * proto.rate(t);
            p.rhs(x, delayed[0][0], delayed[1][1], g_in, 0.0)
        },
        &params.delays(),
        history,
        config,
    )
}

/// [`simulate`] from the default constant history.
pub fn simulate_default(params: &ModelParams, protocol: &InfusionProtocol, config: &IntegratorConfig) -> Result<Trajectory<2>> {
    let (g0, i0) = DEFAULT_INITIAL;
    simulate(params, protocol, constant_history(params, g0, i0), config)
}

/// Time series row in user units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    /// mg/dl
    pub glucose: f64,
    /// uU/ml
    pub insulin: f64,
    /// mg dl⁻¹ min⁻¹
    pub infusion: f64,
}

/// Grid-node series of a trajectory, thinned to every `stride`-th node.
pub fn series(
    traj: &Trajectory<2>,
    params: &ModelParams,
    protocol: &InfusionProtocol,
    stride: usize,
) -> Vec<SeriesPoint> {
    traj.nodes()
        .step_by(stride.max(1))
        .map(|(t, x)| SeriesPoint {
            t,
            glucose: params.glucose_concentration(x[0]),
            insulin: params.insulin_concentration(x[1]),
            infusion: protocol.rate(t),
        })
        .collect()
}

/// Checks positivity of both components and the insulin ceiling
/// `I <= max(I(0), R_m/d) * 1.01` over every node.
pub fn check_invariants(traj: &Trajectory<2>, params: &ModelParams) -> std::result::Result<(), String> {
    let i0 = traj.sample(0.0).map(|x| x[1]).unwrap_or(0.0);
    let ceiling = i0.max(params.r_m / params.d) * 1.01;
    for (t, x) in traj.nodes() {
        if !(x[0] > 0.0 && x[1] > 0.0) {
            return Err(format!("non-positive state {x:?} at t = {t}"));
        }
        if x[1] > ceiling {
            return Err(format!("insulin {} above ceiling {ceiling} at t = {t}", x[1]));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::equilibrium;

    #[test]
    fn equilibrium_history_stays_put() {
        let p = ModelParams::default();
        let eq = equilibrium(&p, 0.0).unwrap();
        let traj = simulate(
            &p,
            &InfusionProtocol::fasting(),
            InitialHistory::Constant(eq.state),
            &IntegratorConfig::new(0.05, 200.0),
        )
        .unwrap();
        for (_, x) in traj.nodes() {
            assert!((x[0] - eq.state[0]).abs() < 1e-8);
            assert!((x[1] - eq.state[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn series_reports_concentrations() {
        let p = ModelParams::default();
        let proto = InfusionProtocol::on_off(1.0, 60.0, 30.0);
        let traj = simulate_default(&p, &proto, &IntegratorConfig::new(0.05, 10.0)).unwrap();
        let s = series(&traj, &p, &proto, 20);
        assert_eq!(s.len(), 11);
        assert_eq!(s[0].glucose, 100.0);
        assert!((s[0].insulin - 20.0).abs() < 1e-12);
        assert!(check_invariants(&traj, &p).is_ok());
    }

    #[test]
    fn rejects_invalid_protocol() {
        let p = ModelParams::default();
        let bad = InfusionProtocol::on_off(1.0, 60.0, 45.0);
        assert!(simulate_default(&p, &bad, &IntegratorConfig::new(0.05, 10.0)).is_err());
    }
}
