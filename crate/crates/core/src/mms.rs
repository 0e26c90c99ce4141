//! Generic minimizing-movement engine.
//!
//! One implicit step from `v` with step size `tau` selects a minimizer of
//!
//! `Phi_p(tau, v; U) = d^p(v, U) / (p tau^{p-1}) + E(U)`
//!
//! and a flow is the recursion of such steps on a uniform partition. The
//! engine is generic over the state space: each concrete space supplies a
//! [`ProxOracle`] that solves the step to a declared optimality gap.

use crate::metric::{EnergyOracle, Trajectory};
use crate::{Error, Result};

/// Implicit-step solver contract for one state space.
///
/// `solve` must return a state no worse than staying put:
/// `Phi_p(tau, base; U) <= Phi_p(tau, base; base) = E(base)`.
pub trait ProxOracle<S> {
    /// Minimizes `Phi_p(tau, base; .)` to within [`ProxOracle::tolerance`].
    fn solve(&self, tau: f64, base: &S, p: f64) -> Result<S>;

    /// Declared bound on the optimality gap of `solve`, scaled by the
    /// energy magnitude at the base point.
    fn tolerance(&self) -> f64;

    /// Ground distance of the state space.
    fn distance(&self, a: &S, b: &S) -> f64;
}

/// Driver parameters for [`evolve`] and [`refine_study`].
#[derive(Debug, Clone)]
pub struct MmConfig {
    pub p: f64,
    /// Initial step size.
    pub tau: f64,
    /// Final time; steps continue while `k tau <= horizon`.
    pub horizon: f64,
    /// Number of tau-halvings in a refinement study.
    pub refine_levels: usize,
    /// Record slopes along the flow (closed form when the oracle has one,
    /// otherwise a probe estimate is left out and the entry stays `None`).
    pub record_slopes: bool,
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::InvalidInput(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.tau > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidInput(
                "tau and horizon must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One implicit Euler step. Returns the prox output after checking the
/// single-step energy decrease contract.
pub fn mm_step<S>(
    prox: &impl ProxOracle<S>,
    oracle: &impl EnergyOracle<S>,
    tau: f64,
    v: &S,
    p: f64,
) -> Result<S> {
    let ev = oracle.eval(v);
    if !ev.is_finite() {
        return Err(Error::NonFinite {
            context: "mm_step energy at base",
        });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let next = prox.solve(tau, v, p)?;
    let tol = prox.tolerance() * ev.abs().max(1.0);
    let d = prox.distance(v, &next);
    let movement = d.powf(p) / (p * tau.powf(p - 1.0));
    let e_next = oracle.eval(&next);
    let achieved_gap = e_next + movement - ev;
    if achieved_gap > tol {
        return Err(Error::ProxTolerance {
            achieved: achieved_gap,
            required: tol,
        });
    }
    Ok(next)
}

/// Runs the minimizing-movement recursion from `v0` on the uniform
/// partition `{k tau}` up to the horizon.
///
/// The trajectory is piecewise constant between steps; time stamps are the
/// step times themselves. On a step failure the error carries no partial
/// data here; use [`evolve_partial`] when the prefix matters.
pub fn evolve<S: Clone>(
    prox: &impl ProxOracle<S>,
    oracle: &impl EnergyOracle<S>,
    v0: &S,
    cfg: &MmConfig,
) -> Result<Trajectory<S>> {
    evolve_partial(prox, oracle, v0, cfg).map_err(|(err, _)| err)
}

/// As [`evolve`], but a step failure returns the partial trajectory
/// accumulated so far alongside the error.
#[allow(clippy::result_large_err)] // the partial trajectory is the payload
pub fn evolve_partial<S: Clone>(
    prox: &impl ProxOracle<S>,
    oracle: &impl EnergyOracle<S>,
    v0: &S,
    cfg: &MmConfig,
) -> std::result::Result<Trajectory<S>, (Error, Trajectory<S>)> {
    if let Err(e) = cfg.validate() {
        return Err((e, Trajectory::new("invalid")));
    }
    let e0 = oracle.eval(v0);
    let mut traj = Trajectory::new("mm");
    let slope_of = |state: &S| -> Option<f64> {
        if cfg.record_slopes {
            oracle.slope(state)
        } else {
            None
        }
    };
    traj.push(0.0, v0.clone(), e0, slope_of(v0));
    if !e0.is_finite() {
        return Err((
            Error::NonFinite {
                context: "evolve initial energy",
            },
            traj,
        ));
    }
    let steps = (cfg.horizon / cfg.tau + 0.5).floor() as usize;
    let mut current = v0.clone();
    for k in 1..=steps {
        match mm_step(prox, oracle, cfg.tau, &current, cfg.p) {
            Ok(next) => {
                let e = oracle.eval(&next);
                traj.push(k as f64 * cfg.tau, next.clone(), e, slope_of(&next));
                current = next;
            }
            Err(err) => return Err((err, traj)),
        }
    }
    Ok(traj)
}

/// Output of a tau-refinement study: the flow at each level together with
/// the sup-over-common-times distance between consecutive levels.
#[derive(Debug)]
pub struct RefineStudy<S> {
    pub taus: Vec<f64>,
    pub trajectories: Vec<Trajectory<S>>,
    /// `cauchy[i]` = sup over common sample times of
    /// `d(level_i(t), level_{i+1}(t))`.
    pub cauchy: Vec<f64>,
    /// Indices `i` with `cauchy[i+1] > cauchy[i]` (non-contracting refinement).
    pub non_contracting: Vec<usize>,
}

/// Runs [`evolve`] at `tau, tau/2, ..., tau/2^{levels-1}` and reports the
/// Cauchy distances between consecutive levels.
pub fn refine_study<S: Clone>(
    prox: &impl ProxOracle<S>,
    oracle: &impl EnergyOracle<S>,
    v0: &S,
    cfg: &MmConfig,
) -> Result<RefineStudy<S>> {
    if cfg.refine_levels < 2 {
        return Err(Error::InvalidInput(
            "refine_study needs refine_levels >= 2".into(),
        ));
    }
    let mut taus = Vec::new();
    let mut trajectories = Vec::new();
    for level in 0..cfg.refine_levels {
        let tau = cfg.tau / (1u64 << level) as f64;
        let mut level_cfg = cfg.clone();
        level_cfg.tau = tau;
        trajectories.push(evolve(prox, oracle, v0, &level_cfg)?);
        taus.push(tau);
    }
    let mut cauchy = Vec::new();
    for i in 0..trajectories.len() - 1 {
        // Level i+1 halves tau, so its even samples share times with level i.
        let coarse = &trajectories[i];
        let fine = &trajectories[i + 1];
        let mut sup = 0.0f64;
        for (k, state) in coarse.states.iter().enumerate() {
            let fk = 2 * k;
            if fk < fine.states.len() {
                sup = sup.max(prox.distance(state, &fine.states[fk]));
            }
        }
        cauchy.push(sup);
    }
    let non_contracting = (0..cauchy.len().saturating_sub(1))
        .filter(|&i| cauchy[i + 1] > cauchy[i])
        .collect();
    Ok(RefineStudy {
        taus,
        trajectories,
        cauchy,
        non_contracting,
    })
}
