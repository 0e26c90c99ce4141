//! Closed-form decay and extinction predictions from a Lojasiewicz
//! exponent, and their comparison against measured trajectories.
//!
//! Given an exponent `alpha` in (0,1] and constant `c > 0` valid near an
//! equilibrium, a p-gradient flow obeys one of three regimes decided by
//! `alpha` against `1/p`: polynomial decay, exponential decay, or
//! finite-time extinction with deadline `t_hat` and prefactor `c_tilde`.

use crate::metric::Trajectory;
use crate::{Error, Result};
use serde::Serialize;

/// Decay regime, classified exactly by comparing `alpha` with `1/p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `0 < alpha < 1/p`
    Polynomial,
    /// `alpha = 1/p` (boundary classified here)
    Exponential,
    /// `1/p < alpha <= 1`
    Extinction,
}

/// A decay prediction: regime, the closed-form extinction data when it
/// applies, and a pointwise upper-bound envelope `t -> bound(t)`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayPrediction {
    pub regime: Regime,
    pub p: f64,
    pub alpha: f64,
    pub c: f64,
    pub t0: f64,
    /// Relative entropy at the anchor time `t0`.
    pub e0: f64,
    /// Extinction prefactor; populated only in the extinction regime.
    pub c_tilde: Option<f64>,
    /// Extinction deadline; populated only in the extinction regime.
    pub t_hat: Option<f64>,
}

impl DecayPrediction {
    /// Upper bound on `d(v(t), phi)` at time `t >= t0`.
    ///
    /// All three regimes anchor the envelope at
    /// `bound(t0) = (c/alpha) e0^alpha`, the level the gradient inequality
    /// delivers at the anchor; the polynomial envelope integrates the decay
    /// differential inequality exactly rather than inventing a constant.
    pub fn bound(&self, t: f64) -> f64 {
        let (p, alpha, c, e0) = (self.p, self.alpha, self.c, self.e0);
        let q = p / (p - 1.0);
        let h0 = c / alpha * e0.powf(alpha);
        if e0 == 0.0 {
            return 0.0;
        }
        let s = (t - self.t0).max(0.0);
        match self.regime {
            Regime::Polynomial => {
                // d/dt H^{-beta} >= K beta with beta = (1 - p alpha)/(alpha (p-1)).
                let beta = (1.0 - p * alpha) / (alpha * (p - 1.0));
                let k = (1.0 / (alpha.powf(alpha - 1.0) * c)).powf((q - 1.0) / alpha);
                (k * beta * s + h0.powf(-beta)).powf(-1.0 / beta)
            }
            Regime::Exponential => h0 * (-s / (p * c.powf(q))).exp(),
            Regime::Extinction => {
                let t_hat = self.t_hat.expect("extinction regime has t_hat");
                if t >= t_hat {
                    0.0
                } else {
                    let expo = alpha * (p - 1.0) / (p * alpha - 1.0);
                    h0 * ((t_hat - t) / (t_hat - self.t0)).powf(expo)
                }
            }
        }
    }
}

/// Builds a [`DecayPrediction`] from `(p, alpha, c, t0, e0)`.
///
/// The extinction closed forms are
///
/// `c_tilde = [ (1/(alpha^{alpha-1} c))^{(q-1)/alpha} * (p alpha - 1)/(alpha (p-1)) ]^{alpha (p-1)/(p alpha - 1)}`
///
/// `t_hat = t0 + alpha^{(alpha-1)/(alpha(p-1))} c^{1/(alpha(p-1))} * (alpha(p-1))/(p alpha - 1) * e0^{(p alpha - 1)/(alpha (p-1))}`
///
/// and the exponential regime decays at rate `1 / (p c^q)` with
/// `q = p/(p-1)`.
pub fn predict(p: f64, alpha: f64, c: f64, t0: f64, e0: f64) -> Result<DecayPrediction> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p must exceed 1, got {p}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("c must be positive, got {c}")));
    }
    if e0 < 0.0 {
        return Err(Error::InvalidInput(format!(
            "relative entropy e0 must be nonnegative, got {e0}"
        )));
    }
    let q = p / (p - 1.0);
    let inv_p = 1.0 / p;
    let regime = if alpha < inv_p {
        Regime::Polynomial
    } else if alpha == inv_p {
        Regime::Exponential
    } else {
        Regime::Extinction
    };
    let (c_tilde, t_hat) = if regime == Regime::Extinction {
        let beta = (p * alpha - 1.0) / (alpha * (p - 1.0));
        let k = (1.0 / (alpha.powf(alpha - 1.0) * c)).powf((q - 1.0) / alpha);
        let c_tilde = (k * beta).powf(1.0 / beta);
        let t_hat = t0
            + alpha.powf((alpha - 1.0) / (alpha * (p - 1.0)))
                * c.powf(1.0 / (alpha * (p - 1.0)))
                * (alpha * (p - 1.0) / (p * alpha - 1.0))
                * e0.powf(beta);
        (Some(c_tilde), Some(t_hat))
    } else {
        (None, None)
    };
    Ok(DecayPrediction {
        regime,
        p,
        alpha,
        c,
        t0,
        e0,
        c_tilde,
        t_hat,
    })
}

/// Per-sample comparison of a prediction against measured distances.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `bound(t_k) - d(v(t_k), phi)` per sample at times >= t0.
    pub slacks: Vec<f64>,
    pub times: Vec<f64>,
    pub pass: bool,
    pub worst_slack: f64,
    /// First measured time with distance below the extinction threshold,
    /// when the regime predicts extinction and the trajectory reaches it.
    pub measured_extinction: Option<f64>,
    pub tol: f64,
}

/// Compares a prediction against a measured trajectory.
///
/// `dist_to_phi` holds the measured distances per sample. `tol_cmp` absorbs
/// simulation error; the convention is two grid/step resolutions of the
/// instance. PASS requires every slack `>= -tol_cmp`, and in the extinction
/// regime additionally `measured T* <= t_hat + tol_cmp`.
pub fn compare<S>(
    pred: &DecayPrediction,
    traj: &Trajectory<S>,
    dist_to_phi: &[f64],
    tol_cmp: f64,
) -> Result<ComparisonReport> {
    if dist_to_phi.len() != traj.len() {
        return Err(Error::InvalidInput(format!(
            "distance list length {} does not match trajectory length {}",
            dist_to_phi.len(),
            traj.len()
        )));
    }
    if traj.times.is_empty() || traj.times[0] > pred.t0 {
        return Err(Error::InvalidInput(
            "trajectory must cover the prediction anchor time t0".into(),
        ));
    }
    let mut slacks = Vec::new();
    let mut times = Vec::new();
    let mut worst = f64::INFINITY;
    for (k, &t) in traj.times.iter().enumerate() {
        if t < pred.t0 {
            continue;
        }
        let slack = pred.bound(t) - dist_to_phi[k];
        worst = worst.min(slack);
        slacks.push(slack);
        times.push(t);
    }
    let mut pass = worst >= -tol_cmp;
    let mut measured_extinction = None;
    if pred.regime == Regime::Extinction {
        let eps = tol_cmp.max(1e-12);
        measured_extinction = traj
            .times
            .iter()
            .zip(dist_to_phi)
            .find(|(_, &d)| d <= eps)
            .map(|(&t, _)| t);
        if let (Some(t_star), Some(t_hat)) = (measured_extinction, pred.t_hat) {
            pass &= t_star <= t_hat + tol_cmp;
        }
    }
    Ok(ComparisonReport {
        slacks,
        times,
        pass,
        worst_slack: worst,
        measured_extinction,
        tol: tol_cmp,
    })
}

/// Extinction-time upper bound `min over sampled s of s + C * E(v(s)|phi)`,
/// the sampled form of the restart infimum. `relative_energies` holds
/// `E(v(t_k)|phi)` per sample.
pub fn extinction_bound_inf<S>(
    traj: &Trajectory<S>,
    relative_energies: &[f64],
    constant: f64,
) -> Result<f64> {
    if !(constant > 0.0) {
        return Err(Error::InvalidInput(format!(
            "constant must be positive, got {constant}"
        )));
    }
    if relative_energies.len() != traj.len() || traj.is_empty() {
        return Err(Error::InvalidInput(
            "relative energy list must match a nonempty trajectory".into(),
        ));
    }
    Ok(traj
        .times
        .iter()
        .zip(relative_energies)
        .map(|(&s, &e)| s + constant * e)
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extinction_example_values() {
        let pred = predict(2.0, 1.0, 1.0, 0.0, 0.5).unwrap();
        assert_eq!(pred.regime, Regime::Extinction);
        assert!((pred.t_hat.unwrap() - 0.5).abs() < 1e-15);
        assert!((pred.c_tilde.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_rate_from_display() {
        let pred = predict(2.0, 0.5, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(pred.regime, Regime::Exponential);
        // Rate 1/(p c^q) = 0.5 for p = q = 2, c = 1.
        let b0 = pred.bound(0.0);
        let b1 = pred.bound(1.0);
        assert!(((b1 / b0).ln() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn boundary_alpha_is_exponential() {
        let pred = predict(3.0, 1.0 / 3.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(pred.regime, Regime::Exponential);
    }

    #[test]
    fn regime_classification() {
        assert_eq!(predict(2.0, 0.3, 1.0, 0.0, 1.0).unwrap().regime, Regime::Polynomial);
        assert_eq!(predict(2.0, 0.9, 1.0, 0.0, 1.0).unwrap().regime, Regime::Extinction);
    }

    #[test]
    fn extinction_scaling_identity_exact() {
        // (t_hat - t0) scales as e0^{(p alpha - 1)/(alpha (p-1))}, exactly.
        for (p, alpha) in [(2.0, 0.75), (2.0, 1.0), (3.0, 0.5), (1.5, 0.9)] {
            let beta = (p * alpha - 1.0) / (alpha * (p - 1.0));
            let a = predict(p, alpha, 0.7, 0.1, 1.0).unwrap();
            let b = predict(p, alpha, 0.7, 0.1, 2.0).unwrap();
            let ratio = (b.t_hat.unwrap() - 0.1) / (a.t_hat.unwrap() - 0.1);
            assert!(
                (ratio - 2.0f64.powf(beta)).abs() < 1e-12,
                "p={p} alpha={alpha}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn bound_anchor_matching_condition() {
        // bound(t0) >= (c/alpha) e0^alpha in all regimes, with equality in
        // the polynomial and extinction regimes.
        for (p, alpha) in [(2.0, 0.3), (2.0, 0.5), (2.0, 0.8), (3.0, 1.0)] {
            let (c, t0, e0) = (1.3, 0.2, 0.7);
            let pred = predict(p, alpha, c, t0, e0).unwrap();
            let h0 = c / alpha * e0.powf(alpha);
            let b = pred.bound(t0);
            assert!(b >= h0 - 1e-12, "bound(t0) {b} below anchor {h0}");
            if pred.regime != Regime::Exponential {
                assert!((b - h0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bound_is_nonincreasing() {
        for alpha in [0.3, 0.5, 0.9] {
            let pred = predict(2.0, alpha, 1.1, 0.0, 0.8).unwrap();
            let mut prev = f64::INFINITY;
            for k in 0..200 {
                let b = pred.bound(0.02 * k as f64);
                assert!(b <= prev + 1e-14);
                assert!(b >= 0.0);
                prev = b;
            }
        }
    }

    #[test]
    fn compare_passes_on_half_bound_synthetic() {
        let pred = predict(2.0, 1.0, 1.0, 0.0, 0.5).unwrap();
        let mut traj = Trajectory::new("synthetic");
        let mut dists = Vec::new();
        for k in 0..60 {
            let t = k as f64 * 0.01;
            traj.push(t, (), 0.0, None);
            dists.push(pred.bound(t) / 2.0);
        }
        let report = compare(&pred, &traj, &dists, 1e-9).unwrap();
        assert!(report.pass);
        assert!(report.worst_slack >= 0.0);
    }

    #[test]
    fn compare_monotone_in_c() {
        // Enlarging c never turns a PASS into FAIL.
        let p = 2.0;
        let alpha = 0.8;
        let base = predict(p, alpha, 1.0, 0.0, 0.5).unwrap();
        let mut traj = Trajectory::new("synthetic");
        let mut dists = Vec::new();
        for k in 0..50 {
            let t = k as f64 * 0.005;
            traj.push(t, (), 0.0, None);
            dists.push(0.9 * base.bound(t));
        }
        assert!(compare(&base, &traj, &dists, 1e-9).unwrap().pass);
        for c in [1.5, 2.0, 5.0] {
            let bigger = predict(p, alpha, c, 0.0, 0.5).unwrap();
            assert!(
                compare(&bigger, &traj, &dists, 1e-9).unwrap().pass,
                "c = {c} broke the pass"
            );
        }
    }

    #[test]
    fn strongly_convex_flow_passes_own_exponential_prediction() {
        // Closed-form flow of the kappa-strongly convex quadratic: the
        // lambda = kappa exponential envelope (alpha = 1/2, c = 1/sqrt(2 kappa))
        // dominates the measured distance.
        let kappa = 2.0f64;
        let c = 1.0 / (2.0 * kappa).sqrt();
        let x0 = 1.5;
        let e0 = 0.5 * kappa * x0 * x0;
        let pred = predict(2.0, 0.5, c, 0.0, e0).unwrap();
        let mut traj = Trajectory::new("euclidean");
        let mut dists = Vec::new();
        for k in 0..200 {
            let t = 0.02 * k as f64;
            let x = x0 * (-kappa * t).exp();
            traj.push(t, (), 0.5 * kappa * x * x, None);
            dists.push(x.abs());
        }
        let report = compare(&pred, &traj, &dists, 1e-9).unwrap();
        assert!(report.pass, "worst slack {}", report.worst_slack);
    }

    #[test]
    fn extinction_bound_inf_constant_energy() {
        let mut traj = Trajectory::new("x");
        let mut energies = Vec::new();
        for k in 0..5 {
            traj.push(0.1 + k as f64, (), 2.0, None);
            energies.push(2.0);
        }
        let b = extinction_bound_inf(&traj, &energies, 3.0).unwrap();
        assert!((b - (0.1 + 6.0)).abs() < 1e-15);
    }

    #[test]
    fn extinction_bound_inf_linear_energy() {
        // E(v(s)) = e0 (1 - s/T)^+ hits zero at T; the sampled infimum is
        // min(T, C e0) up to grid resolution.
        let (t_end, e0, c) = (1.0, 2.0, 0.3);
        let n = 400;
        let mut traj = Trajectory::new("x");
        let mut energies = Vec::new();
        for k in 0..=n {
            let s = t_end * k as f64 / n as f64 + 1e-6;
            traj.push(s, (), 0.0, None);
            energies.push(e0 * (1.0 - s / t_end).max(0.0));
        }
        let b = extinction_bound_inf(&traj, &energies, c).unwrap();
        let oracle = {
            // dense 1D minimization
            let mut best = f64::INFINITY;
            for k in 0..100_000 {
                let s = t_end * k as f64 / 100_000.0 + 1e-9;
                best = best.min(s + c * e0 * (1.0 - s / t_end).max(0.0));
            }
            best
        };
        assert!((b - oracle).abs() < t_end / n as f64 * 2.0);
    }

    #[test]
    fn predict_rejects_bad_inputs() {
        assert!(predict(1.0, 0.5, 1.0, 0.0, 1.0).is_err());
        assert!(predict(2.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(predict(2.0, 1.2, 1.0, 0.0, 1.0).is_err());
        assert!(predict(2.0, 0.5, 1.0, 0.0, -1.0).is_err());
    }
}
