//! Metric-space and gradient-flow primitives.
//!
//! A flow in an abstract metric space is recorded as a [`Trajectory`]:
//! time stamps, state handles, cached energies and (optionally) strong
//! upper gradient values. All operations here are pure functions of a
//! trajectory and a user-supplied distance; nothing assumes a linear
//! structure on the states.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Evaluation contract for an energy functional with a distinguished
/// equilibrium. The universal input of the certification routines.
///
/// `eval` may return `f64::INFINITY` outside the effective domain.
/// `lambda` is a geodesic-convexity modulus when one is declared; `slope`
/// is a closed-form strong upper gradient when one is available.
pub trait EnergyOracle<S> {
    fn eval(&self, v: &S) -> f64;
    fn equilibrium(&self) -> &S;
    fn lambda(&self) -> Option<f64> {
        None
    }
    fn slope(&self, _v: &S) -> Option<f64> {
        None
    }
}

/// An [`EnergyOracle`] assembled from closures; convenient in tests and in
/// the experiment harness.
pub struct FnOracle<S, E, G> {
    pub energy: E,
    pub phi: S,
    pub lambda: Option<f64>,
    pub grad_norm: Option<G>,
}

impl<S, E: Fn(&S) -> f64, G: Fn(&S) -> f64> EnergyOracle<S> for FnOracle<S, E, G> {
    fn eval(&self, v: &S) -> f64 {
        (self.energy)(v)
    }
    fn equilibrium(&self) -> &S {
        &self.phi
    }
    fn lambda(&self) -> Option<f64> {
        self.lambda
    }
    fn slope(&self, v: &S) -> Option<f64> {
        self.grad_norm.as_ref().map(|g| g(v))
    }
}

/// Time-stamped sequence of states with cached energies and slopes; the
/// universal output of every flow solver in this crate.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    /// Strictly increasing sample times.
    pub times: Vec<f64>,
    /// One state handle per sample, all in the space tagged by `space_id`.
    pub states: Vec<S>,
    /// Energy at each state.
    pub energies: Vec<f64>,
    /// Strong-upper-gradient value at each state, when recorded.
    pub slopes: Vec<Option<f64>>,
    /// Tag identifying the state space the handles live in.
    pub space_id: String,
}

impl<S> Trajectory<S> {
    pub fn new(space_id: impl Into<String>) -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            energies: Vec::new(),
            slopes: Vec::new(),
            space_id: space_id.into(),
        }
    }

    pub fn push(&mut self, t: f64, state: S, energy: f64, slope: Option<f64>) {
        debug_assert!(
            self.times.last().is_none_or(|&last| t > last),
            "times must be strictly increasing"
        );
        self.times.push(t);
        self.states.push(state);
        self.energies.push(energy);
        self.slopes.push(slope);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Checks the lengths agree and the times strictly increase.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.states.len() != n || self.energies.len() != n || self.slopes.len() != n {
            return Err(Error::InvalidInput(format!(
                "trajectory field lengths disagree: times {}, states {}, energies {}, slopes {}",
                n,
                self.states.len(),
                self.energies.len(),
                self.slopes.len()
            )));
        }
        for k in 1..n {
            if !(self.times[k] > self.times[k - 1]) {
                return Err(Error::InvalidInput(format!(
                    "times not strictly increasing at index {k}"
                )));
            }
        }
        Ok(())
    }

    /// Largest energy increase between consecutive samples. Solver output
    /// should keep this below [`crate::tau_mono`] of the initial energy.
    pub fn max_energy_increase(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Serializes as CSV with columns `t, energy, slope, dist_to_equilibrium`.
    ///
    /// `dist_to_phi` must hold one entry per sample; slopes that were not
    /// recorded are written as empty fields.
    pub fn write_csv(&self, dist_to_phi: &[f64], out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "t,energy,slope,dist_to_equilibrium")?;
        #[allow(clippy::needless_range_loop)]
        for k in 0..self.len() {
            let slope = self.slopes[k].map_or(String::new(), |g| format!("{g}"));
            writeln!(
                out,
                "{},{},{},{}",
                self.times[k], self.energies[k], slope, dist_to_phi[k]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, dist_to_phi: &[f64], path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
            context: format!("creating {}", path.display()),
            source,
        })?;
        self.write_csv(dist_to_phi, &mut file).map_err(|source| Error::Io {
            context: format!("writing {}", path.display()),
            source,
        })
    }
}

/// Sidecar manifest written next to a trajectory CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub space_id: String,
    pub p: f64,
    pub solver: String,
    pub params: serde_json::Value,
}

impl TrajectoryManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|source| Error::Io {
            context: format!("writing {}", path.display()),
            source,
        })
    }
}

/// Discrete metric derivative at sample `k`: central difference
/// `d(v_{k-1}, v_{k+1}) / (t_{k+1} - t_{k-1})`, one-sided at the ends.
pub fn metric_derivative<S>(
    traj: &Trajectory<S>,
    distance: impl Fn(&S, &S) -> f64,
    k: usize,
) -> Result<f64> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "metric derivative needs at least two samples".into(),
        ));
    }
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, len: n });
    }
    let (lo, hi) = if k == 0 {
        (0, 1)
    } else if k == n - 1 {
        (n - 2, n - 1)
    } else {
        (k - 1, k + 1)
    };
    let d = distance(&traj.states[lo], &traj.states[hi]);
    if !d.is_finite() {
        return Err(Error::NonFinite {
            context: "metric_derivative distance",
        });
    }
    Ok(d / (traj.times[hi] - traj.times[lo]))
}

/// Chordal arc length `sum_k d(v_k, v_{k+1})`: a lower bound for the curve
/// length that is monotone under refinement of the sampling.
pub fn arc_length<S>(traj: &Trajectory<S>, distance: impl Fn(&S, &S) -> f64) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::InvalidInput("arc length needs >= 2 samples".into()));
    }
    let mut total = 0.0;
    for k in 0..traj.len() - 1 {
        let d = distance(&traj.states[k], &traj.states[k + 1]);
        if !d.is_finite() {
            return Err(Error::NonFinite {
                context: "arc_length distance",
            });
        }
        total += d;
    }
    Ok(total)
}

/// Probe-based lower bound for the descending slope of a geodesically
/// semiconvex energy:
///
/// `max over probes u of [ (E(v) - E(u)) / d(v,u) + (lambda/2) d(v,u) ]^+`.
///
/// With `lambda = 0` (the default when none is declared) the bound is
/// weaker but stays valid for any convex energy.
pub fn slope_estimate<S>(
    oracle: &impl EnergyOracle<S>,
    v: &S,
    probes: &[S],
    distance: impl Fn(&S, &S) -> f64,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::InvalidInput("slope_estimate needs probes".into()));
    }
    let lambda = oracle.lambda().unwrap_or(0.0);
    let ev = oracle.eval(v);
    if !ev.is_finite() {
        return Err(Error::NonFinite {
            context: "slope_estimate energy at v",
        });
    }
    let mut best = 0.0f64;
    let mut any_positive_distance = false;
    for u in probes {
        let d = distance(v, u);
        if d == 0.0 {
            continue;
        }
        any_positive_distance = true;
        let eu = oracle.eval(u);
        if !eu.is_finite() {
            return Err(Error::NonFinite {
                context: "slope_estimate energy at probe",
            });
        }
        let value = (ev - eu) / d + 0.5 * lambda * d;
        best = best.max(value.max(0.0));
    }
    if !any_positive_distance {
        return Err(Error::InvalidInput(
            "all probes at distance zero from v".into(),
        ));
    }
    Ok(best)
}

/// Relative entropy `E(v) - E(phi)` with respect to the oracle's equilibrium.
pub fn relative_entropy<S>(oracle: &impl EnergyOracle<S>, v: &S) -> Result<f64> {
    let ev = oracle.eval(v);
    if !ev.is_finite() {
        return Err(Error::NonFinite {
            context: "relative_entropy energy at v",
        });
    }
    let ephi = oracle.eval(oracle.equilibrium());
    if !ephi.is_finite() {
        return Err(Error::NonFinite {
            context: "relative_entropy energy at equilibrium",
        });
    }
    Ok(ev - ephi)
}

/// One interval of an energy-dissipation audit.
///
/// `residual = lhs - metric_term - slope_term` is reported signed; for a
/// p-gradient flow all three quantities agree and the residual vanishes.
#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    pub interval: (f64, f64),
    /// Energy drop `E(v(s)) - E(v(t))`.
    pub lhs: f64,
    /// `(1/p) * integral of |v'|^p` by trapezoid quadrature.
    pub metric_term: f64,
    /// `(1/p') * integral of g^{p'}` by trapezoid quadrature.
    pub slope_term: f64,
    pub residual: f64,
    /// Energy increase beyond the monotonicity tolerance, if any.
    pub monotonicity_violation: Option<f64>,
}

impl DissipationReport {
    /// Sums per-interval reports into one covering the whole range.
    pub fn total(reports: &[DissipationReport]) -> DissipationReport {
        let mut out = DissipationReport {
            interval: (
                reports.first().map_or(0.0, |r| r.interval.0),
                reports.last().map_or(0.0, |r| r.interval.1),
            ),
            lhs: 0.0,
            metric_term: 0.0,
            slope_term: 0.0,
            residual: 0.0,
            monotonicity_violation: None,
        };
        for r in reports {
            out.lhs += r.lhs;
            out.metric_term += r.metric_term;
            out.slope_term += r.slope_term;
            if let Some(v) = r.monotonicity_violation {
                let cur = out.monotonicity_violation.unwrap_or(0.0);
                out.monotonicity_violation = Some(cur.max(v));
            }
        }
        out.residual = out.lhs - out.metric_term - out.slope_term;
        out
    }
}

/// Audits the energy dissipation identity over every consecutive interval
/// of the trajectory.
///
/// The metric derivative is estimated per sample (central differences) and
/// both integrals are evaluated with the trapezoid rule on the sample grid.
/// Slopes must be present at every sample.
pub fn check_dissipation<S>(
    traj: &Trajectory<S>,
    p: f64,
    distance: impl Fn(&S, &S) -> f64,
) -> Result<Vec<DissipationReport>> {
    traj.validate()?;
    if traj.len() < 2 {
        return Err(Error::InvalidInput(
            "dissipation check needs >= 2 samples".into(),
        ));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p must exceed 1, got {p}")));
    }
    let slopes: Vec<f64> = traj
        .slopes
        .iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or_else(|| Error::InvalidInput(format!("missing slope at sample {k}")))
        })
        .collect::<Result<_>>()?;
    let q = p / (p - 1.0);
    let speed: Vec<f64> = (0..traj.len())
        .map(|k| metric_derivative(traj, &distance, k))
        .collect::<Result<_>>()?;
    let tol = crate::tau_mono(traj.energies[0]);

    let mut reports = Vec::with_capacity(traj.len() - 1);
    for k in 0..traj.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        let lhs = traj.energies[k] - traj.energies[k + 1];
        let metric_term = 0.5 * dt * (speed[k].powf(p) + speed[k + 1].powf(p)) / p;
        let slope_term = 0.5 * dt * (slopes[k].powf(q) + slopes[k + 1].powf(q)) / q;
        let increase = -lhs;
        reports.push(DissipationReport {
            interval: (traj.times[k], traj.times[k + 1]),
            lhs,
            metric_term,
            slope_term,
            residual: lhs - metric_term - slope_term,
            monotonicity_violation: (increase > tol).then_some(increase),
        });
    }
    Ok(reports)
}

/// Euclidean distance on `Vec<f64>` states; the default metric of the
/// smooth test energies.
pub fn euclidean(a: &Vec<f64>, b: &Vec<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Default probe set for [`slope_estimate`]: `2 * dim` axis directions at
/// radii `r, r/2, r/4` with `r = 1e-3 * scale(v)`.
pub fn default_probes(v: &[f64]) -> Vec<Vec<f64>> {
    let scale = v.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1.0);
    let r0 = 1e-3 * scale;
    let mut probes = Vec::with_capacity(6 * v.len());
    for level in 0..3 {
        let r = r0 / (1 << level) as f64;
        for i in 0..v.len() {
            for sign in [-1.0, 1.0] {
                let mut u = v.to_vec();
                u[i] += sign * r;
                probes.push(u);
            }
        }
    }
    probes
}
