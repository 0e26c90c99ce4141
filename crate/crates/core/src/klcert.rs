//! Gradient-inequality certification from sample clouds.
//!
//! The pipeline discretizes the level-set geometry of an energy near an
//! equilibrium: bin samples by relative entropy, take the per-bin minimal
//! slope (the sampled level profile `s_D`), chain the minimizing witnesses
//! into a discrete talweg, and synthesize a piecewise-linear growth
//! function `theta` whose derivative is `C / s_D`. By construction the
//! certificate `theta'(E(v|phi)) g(v) >= 1` holds on the generating cloud
//! with margin at least `C - 1`; `verify_kl` re-checks it on any cloud.
//!
//! The power-law special case is handled by [`fit_ls`]: sweep exponents
//! `alpha`, record the tight constant `c(alpha) = max r^{1-alpha}/g`, and
//! report a log-log regression exponent alongside.

use crate::{Error, Result};
use serde::Serialize;

/// Sampled states with cached relative entropy `r`, slope `g`, and
/// distance to the equilibrium. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SampleCloud<S> {
    pub states: Vec<S>,
    /// Relative entropy `E(v|phi)` per sample.
    pub r: Vec<f64>,
    /// Strong-upper-gradient value per sample; nonnegative.
    pub g: Vec<f64>,
    /// Distance to the equilibrium per sample.
    pub dist_to_phi: Vec<f64>,
    /// How the cloud was generated (grid / trajectory / random / ...).
    pub source: String,
}

impl<S> SampleCloud<S> {
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if self.r.len() != n || self.g.len() != n || self.dist_to_phi.len() != n {
            return Err(Error::InvalidInput("cloud field lengths disagree".into()));
        }
        if self.r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "cloud relative entropies",
            });
        }
        if self.g.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidInput("cloud slopes must be >= 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Sampled level-set slope profile on geometric entropy bins of `(0, R]`.
#[derive(Debug, Clone, Serialize)]
pub struct LevelProfile {
    /// Increasing bin edges `e_1 < ... < e_nb = R`; bin `j` is
    /// `(e_{j-1}, e_j]` with `e_0 = 0`.
    pub bin_edges: Vec<f64>,
    /// Per-bin minimal slope; `None` marks an empty bin.
    pub s_vals: Vec<Option<f64>>,
    /// Per-bin index (into the cloud) of the minimizing sample.
    pub witness: Vec<Option<usize>>,
}

impl LevelProfile {
    pub fn r_max(&self) -> f64 {
        *self.bin_edges.last().expect("profile has bins")
    }

    /// Index of the bin containing `r` under the half-open convention.
    pub fn bin_of(&self, r: f64) -> Option<usize> {
        if !(r > 0.0) || r > self.r_max() {
            return None;
        }
        Some(self.bin_edges.partition_point(|&edge| edge < r))
    }

    pub fn nonempty_bins(&self) -> impl Iterator<Item = (usize, f64, usize)> + '_ {
        self.s_vals
            .iter()
            .zip(self.witness.iter())
            .enumerate()
            .filter_map(|(j, (s, w))| Some((j, (*s)?, (*w)?)))
    }
}

/// Bins `(0, R]` geometrically and records each bin's minimal slope with
/// its witness sample. Ties break toward the lowest sample index.
pub fn level_profile<S>(cloud: &SampleCloud<S>, n_bins: usize, r_max: f64) -> Result<LevelProfile> {
    cloud.validate()?;
    if n_bins == 0 {
        return Err(Error::InvalidInput("n_bins must be >= 1".into()));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidInput("R must be positive".into()));
    }
    let r_lo = cloud
        .r
        .iter()
        .copied()
        .filter(|&r| r > 0.0 && r <= r_max)
        .fold(f64::INFINITY, f64::min);
    if !r_lo.is_finite() {
        return Err(Error::EmptyCloud);
    }
    let bin_edges: Vec<f64> = if n_bins == 1 || r_lo >= r_max {
        (0..n_bins)
            .map(|j| r_max * 0.5f64.powi((n_bins - 1 - j) as i32))
            .collect()
    } else {
        let ratio = (r_max / r_lo).powf(1.0 / (n_bins - 1) as f64);
        (0..n_bins)
            .map(|j| r_max * ratio.powi(-((n_bins - 1 - j) as i32)))
            .collect()
    };
    let profile_skeleton = LevelProfile {
        bin_edges: bin_edges.clone(),
        s_vals: vec![None; n_bins],
        witness: vec![None; n_bins],
    };
    let mut s_vals = vec![None; n_bins];
    let mut witness = vec![None; n_bins];
    for (idx, (&r, &g)) in cloud.r.iter().zip(cloud.g.iter()).enumerate() {
        let Some(bin) = profile_skeleton.bin_of(r) else {
            continue;
        };
        match s_vals[bin] {
            Some(best) if best <= g => {}
            _ => {
                s_vals[bin] = Some(g);
                witness[bin] = Some(idx);
            }
        }
    }
    Ok(LevelProfile {
        bin_edges,
        s_vals,
        witness,
    })
}

/// A discrete talweg: the chain of bin witnesses, ordered by decreasing
/// relative entropy, with its chordal length.
#[derive(Debug, Clone, Serialize)]
pub struct TalwegChain {
    /// Sample indices of the witnesses, from the highest entropy bin down.
    pub witnesses: Vec<usize>,
    pub r_values: Vec<f64>,
    pub g_values: Vec<f64>,
    /// `C` used for the valley membership check.
    pub c: f64,
    /// Sum of consecutive witness distances.
    pub chain_length: f64,
    /// Whether entropy strictly decreases along the chain (the sampled
    /// stand-in for the level parametrization being injective).
    pub r_strictly_decreasing: bool,
}

/// Chains the profile witnesses into a discrete talweg through the
/// C-valley. Each witness satisfies `g <= C * s_D(bin)` by construction.
pub fn discrete_talweg<S>(
    cloud: &SampleCloud<S>,
    profile: &LevelProfile,
    c: f64,
    distance: impl Fn(&S, &S) -> f64,
) -> Result<TalwegChain> {
    if !(c > 1.0) {
        return Err(Error::InvalidInput(format!("C must exceed 1, got {c}")));
    }
    let mut items: Vec<(usize, f64, usize)> = profile.nonempty_bins().collect();
    if items.is_empty() {
        return Err(Error::EmptyCloud);
    }
    // Highest bin first.
    items.sort_by_key(|item| std::cmp::Reverse(item.0));
    let mut witnesses = Vec::new();
    let mut r_values = Vec::new();
    let mut g_values = Vec::new();
    for &(_, s_val, idx) in &items {
        debug_assert!(cloud.g[idx] <= c * s_val);
        witnesses.push(idx);
        r_values.push(cloud.r[idx]);
        g_values.push(cloud.g[idx]);
    }
    let chain_length = witnesses
        .windows(2)
        .map(|w| distance(&cloud.states[w[0]], &cloud.states[w[1]]))
        .sum();
    let r_strictly_decreasing = r_values.windows(2).all(|w| w[0] > w[1]);
    Ok(TalwegChain {
        witnesses,
        r_values,
        g_values,
        c,
        chain_length,
        r_strictly_decreasing,
    })
}

/// Region on which a certificate is claimed: a ball around the equilibrium
/// intersected with an entropy band `(0, R]`.
#[derive(Debug, Clone, Serialize)]
pub struct Region {
    pub center_id: String,
    pub eps: f64,
    #[serde(rename = "R")]
    pub r_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CertStatus {
    Pass,
    Failed,
}

/// A piecewise-linear strictly increasing growth function `theta` with
/// `theta(0) = 0`, together with the region on which
/// `theta'(E(v|phi)) g(v) >= 1` is claimed and the measured margin.
#[derive(Debug, Clone, Serialize)]
pub struct KlCertificate {
    /// Knots `(s, theta(s))`, starting at `(0, 0)`, strictly increasing.
    pub theta_knots: Vec<(f64, f64)>,
    /// Derivative of `theta` beyond the last knot.
    pub tail_slope: f64,
    pub region: Region,
    /// Valley constant used in the synthesis.
    #[serde(rename = "C")]
    pub c: f64,
    /// `min over samples of theta'(r) g - 1`; recorded even when negative.
    pub margin: f64,
    pub status: CertStatus,
}

impl KlCertificate {
    /// Piecewise-constant derivative of `theta` at entropy `r > 0`,
    /// matching the bin convention used during synthesis.
    pub fn theta_prime(&self, r: f64) -> f64 {
        let knots = &self.theta_knots;
        if r > knots.last().unwrap().0 {
            return self.tail_slope;
        }
        // Segment (s_{k-1}, s_k] containing r.
        let k = knots.partition_point(|&(s, _)| s < r).max(1);
        let (s0, t0) = knots[k - 1];
        let (s1, t1) = knots[k];
        (t1 - t0) / (s1 - s0)
    }

    pub fn theta(&self, r: f64) -> f64 {
        let knots = &self.theta_knots;
        let (s_last, t_last) = *knots.last().unwrap();
        if r > s_last {
            return t_last + self.tail_slope * (r - s_last);
        }
        let k = knots.partition_point(|&(s, _)| s < r).max(1);
        let (s0, t0) = knots[k - 1];
        let (s1, t1) = knots[k];
        t0 + (t1 - t0) * (r - s0) / (s1 - s0)
    }
}

/// Synthesizes `theta(s) = integral of u~ over (0, s]` where `u~` is the
/// piecewise-constant function `C / s_D(bin)`; empty bins borrow the
/// nearest nonempty neighbor's value, and above `R` the last value extends
/// affinely. Fails if any nonempty bin has zero minimal slope.
pub fn build_theta<S>(
    cloud: &SampleCloud<S>,
    profile: &LevelProfile,
    c: f64,
) -> Result<KlCertificate> {
    if !(c > 1.0) {
        return Err(Error::InvalidInput(format!("C must exceed 1, got {c}")));
    }
    let n_bins = profile.bin_edges.len();
    for (j, s) in profile.s_vals.iter().enumerate() {
        if let Some(val) = s {
            if !(*val > 0.0) {
                return Err(Error::SardViolation { bin: j });
            }
        }
    }
    let nonempty: Vec<usize> = (0..n_bins).filter(|&j| profile.s_vals[j].is_some()).collect();
    if nonempty.is_empty() {
        return Err(Error::EmptyCloud);
    }
    // u~ per bin: C / s_D, with empty bins filled from the nearest
    // nonempty bin (lower index on ties).
    let mut u = vec![0.0; n_bins];
    #[allow(clippy::needless_range_loop)]
    for j in 0..n_bins {
        let donor = *nonempty
            .iter()
            .min_by_key(|&&k| {
                let dist = k.abs_diff(j);
                (dist, k)
            })
            .unwrap();
        u[j] = c / profile.s_vals[donor].unwrap();
    }
    let mut theta_knots = Vec::with_capacity(n_bins + 1);
    theta_knots.push((0.0, 0.0));
    let mut acc = 0.0;
    let mut prev_edge = 0.0;
    #[allow(clippy::needless_range_loop)]
    for j in 0..n_bins {
        acc += u[j] * (profile.bin_edges[j] - prev_edge);
        prev_edge = profile.bin_edges[j];
        theta_knots.push((prev_edge, acc));
    }
    let eps = cloud
        .r
        .iter()
        .zip(cloud.dist_to_phi.iter())
        .filter(|(&r, _)| r > 0.0 && r <= profile.r_max())
        .map(|(_, &d)| d)
        .fold(0.0f64, f64::max);
    let mut cert = KlCertificate {
        theta_knots,
        tail_slope: u[n_bins - 1],
        region: Region {
            center_id: cloud.source.clone(),
            eps,
            r_max: profile.r_max(),
        },
        c,
        margin: f64::INFINITY,
        status: CertStatus::Pass,
    };
    // Margin over the in-region part of the generating cloud; samples
    // beyond the entropy band are not covered by the certificate.
    let mut margin = f64::INFINITY;
    for idx in 0..cloud.len() {
        let r = cloud.r[idx];
        if r > 0.0 && r <= cert.region.r_max {
            margin = margin.min(cert.theta_prime(r) * cloud.g[idx] - 1.0);
        }
    }
    cert.margin = margin;
    cert.status = if margin >= -KL_MARGIN_TOL {
        CertStatus::Pass
    } else {
        CertStatus::Failed
    };
    Ok(cert)
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    /// `min over samples of theta'(r) g - 1`.
    pub margin: f64,
    /// Index of the minimizing sample.
    pub argmin: Option<usize>,
    pub n_samples: usize,
    pub pass: bool,
}

/// Margin tolerance below which a certificate check is declared failed.
pub const KL_MARGIN_TOL: f64 = 1e-12;

/// Recomputes the certificate margin on a cloud. Every positive-entropy
/// sample must lie inside the certificate region.
pub fn verify_kl<S>(cert: &KlCertificate, cloud: &SampleCloud<S>) -> Result<MarginReport> {
    cloud.validate()?;
    let mut margin = f64::INFINITY;
    let mut argmin = None;
    let mut n = 0usize;
    for idx in 0..cloud.len() {
        let r = cloud.r[idx];
        if r <= 0.0 {
            continue;
        }
        if r > cert.region.r_max * (1.0 + 1e-12)
            || cloud.dist_to_phi[idx] > cert.region.eps * (1.0 + 1e-12)
        {
            return Err(Error::OutsideRegion { index: idx });
        }
        let value = cert.theta_prime(r) * cloud.g[idx] - 1.0;
        if value < margin {
            margin = value;
            argmin = Some(idx);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    Ok(MarginReport {
        margin,
        argmin,
        n_samples: n,
        pass: margin >= -KL_MARGIN_TOL,
    })
}

/// One exponent of a power-law (Lojasiewicz-Simon) fit:
/// `r^{1-alpha} <= c g` with the tight constant `c = max r^{1-alpha}/g`.
#[derive(Debug, Clone, Serialize)]
pub struct LsFit {
    pub alpha: f64,
    pub c: f64,
    pub worst_ratio: f64,
    pub n_samples: usize,
}

/// Output of [`fit_ls`]: per-exponent fits, the stability-selected
/// exponent, and the log-log regression estimate.
#[derive(Debug, Clone, Serialize)]
pub struct LsSweep {
    pub fits: Vec<LsFit>,
    /// Largest alpha whose constant stays below 10x the median over the
    /// sweep; an artifact convention, reported alongside the regression.
    pub recommended_alpha: Option<f64>,
    /// Least-squares slope of `log g` against `log r`.
    pub alpha_regression: f64,
}

/// Sweeps exponents over the positive-entropy, positive-slope samples.
pub fn fit_ls<S>(cloud: &SampleCloud<S>, alphas: &[f64]) -> Result<LsSweep> {
    cloud.validate()?;
    let samples: Vec<(f64, f64)> = cloud
        .r
        .iter()
        .zip(cloud.g.iter())
        .filter(|(&r, &g)| r > 0.0 && g > 0.0)
        .map(|(&r, &g)| (r, g))
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
        return Err(Error::InvalidInput("alphas must lie in (0, 1]".into()));
    }
    let mut fits = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let worst = samples
            .iter()
            .map(|&(r, g)| r.powf(1.0 - alpha) / g)
            .fold(0.0f64, f64::max);
        fits.push(LsFit {
            alpha,
            c: worst,
            worst_ratio: worst,
            n_samples: samples.len(),
        });
    }
    let mut cs: Vec<f64> = fits.iter().map(|f| f.c).collect();
    cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = cs[cs.len() / 2];
    let recommended_alpha = fits
        .iter()
        .filter(|f| f.c <= 10.0 * median)
        .map(|f| f.alpha)
        .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))));
    // Regression of log g on log r.
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(r, g) in &samples {
        let (x, y) = (r.ln(), g.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let n = samples.len() as f64;
    let denom = n * sxx - sx * sx;
    let alpha_regression = if denom.abs() < 1e-300 {
        f64::NAN
    } else {
        (n * sxy - sx * sy) / denom
    };
    Ok(LsSweep {
        fits,
        recommended_alpha,
        alpha_regression,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceAudit {
    /// Worst slack of `inf_phi d(v, phi) <= (c/alpha) r^alpha`
    /// (slack = rhs - lhs; negative means violated).
    pub et_worst_slack: f64,
    pub et_pass: bool,
    /// Worst slack of `r^{1-alpha} <= (c/alpha) g`.
    pub ls_worst_slack: f64,
    pub ls_pass: bool,
    pub n_samples: usize,
}

/// Two-sided audit of the power-law equivalence between the gradient
/// inequality and the entropy-transportation inequality, valid for
/// geodesically convex instances (`lambda >= 0` must be declared).
pub fn et_ls_equivalence<S>(
    cloud: &SampleCloud<S>,
    fit: &LsFit,
    equilibria: &[S],
    lambda: f64,
    distance: impl Fn(&S, &S) -> f64,
) -> Result<EquivalenceAudit> {
    if lambda < 0.0 {
        return Err(Error::NotConvex { lambda });
    }
    if equilibria.is_empty() {
        return Err(Error::InvalidInput("equilibria list is empty".into()));
    }
    cloud.validate()?;
    let (alpha, c) = (fit.alpha, fit.c);
    let mut et_worst = f64::INFINITY;
    let mut ls_worst = f64::INFINITY;
    let mut n = 0usize;
    for idx in 0..cloud.len() {
        let r = cloud.r[idx];
        if r < 0.0 {
            continue;
        }
        let inf_d = equilibria
            .iter()
            .map(|phi| distance(&cloud.states[idx], phi))
            .fold(f64::INFINITY, f64::min);
        et_worst = et_worst.min(c / alpha * r.powf(alpha) - inf_d);
        ls_worst = ls_worst.min(c / alpha * cloud.g[idx] - r.powf(1.0 - alpha));
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    Ok(EquivalenceAudit {
        et_worst_slack: et_worst,
        et_pass: et_worst >= -KL_MARGIN_TOL,
        ls_worst_slack: ls_worst,
        ls_pass: ls_worst >= -KL_MARGIN_TOL,
        n_samples: n,
    })
}
