//! Smooth test energies on R^d: a small expression registry with
//! closed-form gradients, a minimizing-movement integrator, the
//! line-talweg tabulation near a nondegenerate minimum, and the empirical
//! Lyapunov-stability probe.

use anyhow::{bail, ensure, Result};
use gradflow_core::metric::{euclidean, EnergyOracle, Trajectory};
use gradflow_core::mms::{self, MmConfig, ProxOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub enum SmoothKind {
    /// `E = 1/2 x^T Q x - b . x` (Q symmetric, row-major).
    Quadratic { q: Vec<Vec<f64>>, b: Vec<f64> },
    /// `E = |x|^4 / 4`.
    Quartic,
    /// `E = |x|^2/2 + amp * sum_i (1 - cos(freq x_i))`: a dimpled cup.
    CosCup { amp: f64, freq: f64 },
    /// Radial even polynomial `E = sum_k c_k |x|^{2(k+1)}`.
    Polynomial { coeffs: Vec<f64> },
}

/// A smooth energy with dimension, declared convexity modulus, and an
/// optional equilibrium Hessian.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothEnergy {
    pub kind: SmoothKind,
    pub dim: usize,
    pub lambda: Option<f64>,
}

impl SmoothEnergy {
    pub fn quadratic_identity(dim: usize) -> SmoothEnergy {
        let q = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        SmoothEnergy {
            kind: SmoothKind::Quadratic {
                q,
                b: vec![0.0; dim],
            },
            dim,
            lambda: Some(1.0),
        }
    }

    pub fn saddle() -> SmoothEnergy {
        SmoothEnergy {
            kind: SmoothKind::Quadratic {
                q: vec![vec![2.0, 0.0], vec![0.0, -2.0]],
                b: vec![0.0, 0.0],
            },
            dim: 2,
            lambda: None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SmoothKind::Quadratic { q, b } => {
                let mut total = 0.0;
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        total += 0.5 * x[i] * q[i][j] * x[j];
                    }
                    total -= b[i] * x[i];
                }
                total
            }
            SmoothKind::Quartic => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                0.25 * r2 * r2
            }
            SmoothKind::CosCup { amp, freq } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                0.5 * r2 + amp * x.iter().map(|v| 1.0 - (freq * v).cos()).sum::<f64>()
            }
            SmoothKind::Polynomial { coeffs } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * r2.powi(k as i32 + 1))
                    .sum()
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SmoothKind::Quadratic { q, b } => (0..x.len())
                .map(|i| (0..x.len()).map(|j| q[i][j] * x[j]).sum::<f64>() - b[i])
                .collect(),
            SmoothKind::Quartic => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                x.iter().map(|v| r2 * v).collect()
            }
            SmoothKind::CosCup { amp, freq } => x
                .iter()
                .map(|v| v + amp * freq * (freq * v).sin())
                .collect(),
            SmoothKind::Polynomial { coeffs } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let radial: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * 2.0 * (k as f64 + 1.0) * r2.powi(k as i32))
                    .sum();
                x.iter().map(|v| radial * v).collect()
            }
        }
    }

    pub fn grad_norm(&self, x: &[f64]) -> f64 {
        self.gradient(x).iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Gradient consistency against finite differences on seeded probes,
    /// enforced at load: relative error <= 1e-5.
    pub fn check_consistency(&self, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5f5f_5f5f);
        for _ in 0..8 {
            let x: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = self.gradient(&x);
            let h = 1e-6;
            for i in 0..self.dim {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (self.value(&xp) - self.value(&xm)) / (2.0 * h);
                let scale = grad[i].abs().max(1.0);
                ensure!(
                    (fd - grad[i]).abs() <= 1e-5 * scale,
                    "gradient inconsistent with the value at component {i}: {fd} vs {}",
                    grad[i]
                );
            }
        }
        Ok(())
    }

    /// Finite-difference Hessian at a point.
    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let h = 1e-5;
        let mut out = vec![vec![0.0; self.dim]; self.dim];
        for i in 0..self.dim {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let gp = self.gradient(&xp);
            let gm = self.gradient(&xm);
            for j in 0..self.dim {
                out[i][j] = (gp[j] - gm[j]) / (2.0 * h);
            }
        }
        out
    }
}

/// Minimizing-movement step solver for a smooth energy: spectral gradient
/// descent with backtracking on the implicit-step objective.
pub struct SmoothProx<'a> {
    pub energy: &'a SmoothEnergy,
}

impl ProxOracle<Vec<f64>> for SmoothProx<'_> {
    fn solve(&self, tau: f64, base: &Vec<f64>, p: f64) -> gradflow_core::Result<Vec<f64>> {
        assert_eq!(p, 2.0, "smooth flows are driven at p = 2");
        let phi = |x: &[f64]| -> f64 {
            let move_sq: f64 = x.iter().zip(base).map(|(a, b)| (a - b) * (a - b)).sum();
            move_sq / (2.0 * tau) + self.energy.value(x)
        };
        let grad_phi = |x: &[f64]| -> Vec<f64> {
            let mut g = self.energy.gradient(x);
            for i in 0..x.len() {
                g[i] += (x[i] - base[i]) / tau;
            }
            g
        };
        let mut x = base.clone();
        let mut eta = tau;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..500 {
            let g = grad_phi(&x);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm <= 1e-10 * (1.0 + self.energy.value(&x).abs()) {
                break;
            }
            if let Some((px, pg)) = &prev {
                let mut sy = 0.0;
                let mut ss = 0.0;
                for i in 0..x.len() {
                    let s = x[i] - px[i];
                    let y = g[i] - pg[i];
                    sy += s * y;
                    ss += s * s;
                }
                if sy > 1e-300 {
                    eta = (ss / sy).clamp(1e-12, 1e6);
                }
            }
            prev = Some((x.clone(), g.clone()));
            let phi0 = phi(&x);
            let mut alpha = eta;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(v, gi)| v - alpha * gi).collect();
                if phi(&trial) < phi0 {
                    x = trial;
                    break;
                }
                alpha *= 0.5;
            }
        }
        Ok(x)
    }

    fn tolerance(&self) -> f64 {
        1e-9
    }

    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        euclidean(a, b)
    }
}

pub struct SmoothOracle<'a> {
    pub energy: &'a SmoothEnergy,
    pub phi: Vec<f64>,
}

impl EnergyOracle<Vec<f64>> for SmoothOracle<'_> {
    fn eval(&self, v: &Vec<f64>) -> f64 {
        self.energy.value(v)
    }
    fn equilibrium(&self) -> &Vec<f64> {
        &self.phi
    }
    fn lambda(&self) -> Option<f64> {
        self.energy.lambda
    }
    fn slope(&self, v: &Vec<f64>) -> Option<f64> {
        Some(self.energy.grad_norm(v))
    }
}

/// Line-talweg tabulation along `x(r) = phi + r (v0 - phi)`.
#[derive(Debug, Serialize)]
pub struct LineTalweg {
    pub r_values: Vec<f64>,
    /// `h(r) = E(x(r)) - E(phi)`.
    pub h_values: Vec<f64>,
    pub strictly_increasing: bool,
    /// Fitted constant of the square-root growth function `theta(s) = C sqrt(s)`.
    pub c_theta_fit: f64,
    /// Tight constant of the half-exponent gradient inequality on the ball.
    pub c_ls: f64,
    /// `min over ball samples of c_ls * |grad E| * |E - E(phi)|^{-1/2} - 1`.
    pub ball_margin: f64,
    /// `h(delta)/delta^2` limit table entry: the direction curvature
    /// `1/2 <H(phi) e, e>` estimated from the smallest radii.
    pub direction_curvature: f64,
}

/// Tabulates the line talweg through a nondegenerate minimum and fits the
/// square-root growth function.
pub fn smooth_line_talweg(
    energy: &SmoothEnergy,
    phi: &[f64],
    v0: &[f64],
    delta: f64,
    seed: u64,
) -> Result<LineTalweg> {
    let dir: Vec<f64> = v0.iter().zip(phi).map(|(a, b)| a - b).collect();
    let dir_norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    ensure!(dir_norm > 0.0, "degenerate direction: v0 equals phi");
    let hessian = energy.hessian(phi);
    // Invertibility check: the direction curvature must be bounded away
    // from zero relative to the Hessian scale.
    let h_scale: f64 = hessian
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let e_phi = energy.value(phi);

    let n_table = 200;
    let mut r_values = Vec::with_capacity(n_table);
    let mut h_values = Vec::with_capacity(n_table);
    for k in 1..=n_table {
        let r = delta * k as f64 / n_table as f64;
        let x: Vec<f64> = phi.iter().zip(&dir).map(|(p, d)| p + r * d).collect();
        r_values.push(r);
        h_values.push(energy.value(&x) - e_phi);
    }
    let strictly_increasing = h_values.windows(2).all(|w| w[1] > w[0]) && h_values[0] > 0.0;
    ensure!(
        strictly_increasing,
        "entropy profile along the line is not strictly increasing on (0, delta]"
    );

    // theta = inverse of h: fitted square-root coefficient by least squares
    // of r against sqrt(h).
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, h) in r_values.iter().zip(&h_values) {
        let s = h.sqrt();
        num += r * s;
        den += s * s;
    }
    let c_theta_fit = num / den;

    // Ball verification of the half-exponent inequality with the tight
    // constant c_ls = max |E - E(phi)|^{1/2} / |grad E| over seeded samples.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_ls = 0.0f64;
    let mut samples = Vec::new();
    for _ in 0..2000 {
        let x: Vec<f64> = phi
            .iter()
            .map(|p| p + rng.gen_range(-delta..delta) * dir_norm)
            .collect();
        let rel = energy.value(&x) - e_phi;
        if rel <= 0.0 {
            continue;
        }
        let g = energy.grad_norm(&x);
        if g == 0.0 {
            bail!("zero gradient at positive relative energy: hypotheses violated");
        }
        c_ls = c_ls.max(rel.sqrt() / g);
        samples.push((rel, g));
    }
    let ball_margin = samples
        .iter()
        .map(|(rel, g)| c_ls * g / rel.sqrt() - 1.0)
        .fold(f64::INFINITY, f64::min);

    // Direction curvature from the smallest radii of the table.
    let direction_curvature = h_values[0] / (r_values[0] * r_values[0]);
    ensure!(
        direction_curvature.abs() > 1e-10 * h_scale.max(1.0),
        "declared Hessian is degenerate along the probe direction"
    );
    Ok(LineTalweg {
        r_values,
        h_values,
        strictly_increasing,
        c_theta_fit,
        c_ls,
        ball_margin,
        direction_curvature,
    })
}

/// Empirical Lyapunov verdict for one tolerance `eps`.
#[derive(Debug, Serialize)]
pub struct StabilityReport {
    pub eps: f64,
    /// `(delta, max excursion over seeded boundary flows)` per grid entry.
    pub excursions: Vec<(f64, f64)>,
    /// Largest delta whose flows all stay inside the eps-ball, if any.
    pub admissible_delta: Option<f64>,
    pub stable: bool,
    /// Minimum of E over the sampled delta-balls minus E(phi), per delta;
    /// negative values witness that phi is not a local minimum.
    pub local_min_probe: Vec<(f64, f64)>,
}

/// Flows seeded boundary samples of `B(phi, delta)` for each `delta` and
/// reports the worst excursion; the verdict pairs the excursion sweep with
/// a local-minimum probe.
pub fn stability_probe(
    energy: &SmoothEnergy,
    phi: &[f64],
    eps: f64,
    delta_grid: &[f64],
    tau: f64,
    horizon: f64,
    seed: u64,
) -> Result<StabilityReport> {
    energy.check_consistency(seed)?;
    let prox = SmoothProx { energy };
    let oracle = SmoothOracle {
        energy,
        phi: phi.to_vec(),
    };
    let cfg = MmConfig {
        p: 2.0,
        tau,
        horizon,
        refine_levels: 0,
        record_slopes: false,
    };
    let n_samples = 16 * energy.dim;
    let mut excursions = Vec::new();
    let mut local_min_probe = Vec::new();
    for &delta in delta_grid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(delta.to_bits()));
        let mut worst = 0.0f64;
        let mut min_energy_gap = f64::INFINITY;
        for _ in 0..n_samples {
            // Boundary sample of the delta-ball.
            let raw: Vec<f64> = (0..energy.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let v0: Vec<f64> = phi
                .iter()
                .zip(&raw)
                .map(|(p, r)| p + delta * r / norm)
                .collect();
            min_energy_gap = min_energy_gap.min(energy.value(&v0) - energy.value(phi));
            let traj: Trajectory<Vec<f64>> = mms::evolve(&prox, &oracle, &v0, &cfg)
                .map_err(|e| anyhow::anyhow!("flow failed: {e}"))?;
            for state in &traj.states {
                worst = worst.max(euclidean(state, &phi.to_vec()));
            }
        }
        excursions.push((delta, worst));
        local_min_probe.push((delta, min_energy_gap));
    }
    let admissible_delta = excursions
        .iter()
        .filter(|(_, worst)| *worst < eps)
        .map(|(d, _)| *d)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    Ok(StabilityReport {
        eps,
        excursions,
        admissible_delta,
        stable: admissible_delta.is_some(),
        local_min_probe,
    })
}
