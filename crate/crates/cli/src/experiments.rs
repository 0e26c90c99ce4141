//! Experiment orchestration: map a parsed config onto the library calls,
//! write trajectory CSVs, audit JSONs and SVG plots, and collect a
//! machine-readable verdict per experiment.

use crate::config::Config;
use crate::plot::{self, Series};
use crate::smooth::{smooth_line_talweg, stability_probe, SmoothEnergy, SmoothKind};
use anyhow::{bail, Context, Result};
use gradflow_core::klcert::{self, SampleCloud};
use gradflow_core::metric::TrajectoryManifest;
use gradflow_core::rates;
use gradflow_core::tvflow::{
    extinction_audit, run_tv_flow_with, Bc, GridFunction, TvInstance,
};
use gradflow_core::wflow1d::{
    audit_inequalities, decay_audit, equilibrium_solve, run_wflow, wasserstein_p, FreeEnergySpec,
    QuantileRepr, INEQ_TOL_REL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct Outcome {
    pub name: String,
    pub dir: PathBuf,
    pub pass: bool,
    pub summary: Value,
}

/// Runs a batch of config files, at most `GRADFLOW_WORKERS` at a time
/// (default: available parallelism). Outcomes keep the input order.
pub fn run_batch(paths: &[PathBuf]) -> Result<Vec<Outcome>> {
    let cap = std::env::var("GRADFLOW_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    let mut outcomes: Vec<Option<Outcome>> = Vec::with_capacity(paths.len());
    for _ in paths {
        outcomes.push(None);
    }
    let mut errors: Vec<String> = Vec::new();
    for (chunk_idx, chunk) in paths.chunks(cap.max(1)).enumerate() {
        let offset = chunk_idx * cap.max(1);
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|path| scope.spawn(move || run_config_path(path)))
                .collect();
            for (k, handle) in handles.into_iter().enumerate() {
                match handle.join() {
                    Ok(Ok(outcome)) => outcomes[offset + k] = Some(outcome),
                    Ok(Err(err)) => errors.push(format!("{}: {err:#}", chunk[k].display())),
                    Err(_) => errors.push(format!("{}: worker panicked", chunk[k].display())),
                }
            }
        });
    }
    if !errors.is_empty() {
        bail!("batch failures:\n{}", errors.join("\n"));
    }
    Ok(outcomes.into_iter().map(|o| o.unwrap()).collect())
}

pub fn run_config_path(path: &Path) -> Result<Outcome> {
    let cfg = Config::load(path)?;
    run_config(&cfg)
}

/// Dispatches one experiment config onto its runner and writes the
/// summary file.
pub fn run_config(cfg: &Config) -> Result<Outcome> {
    let kind = cfg.require("experiment.kind")?.to_string();
    let name = cfg.str_or(
        "experiment.name",
        Path::new(cfg.origin())
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment"),
    );
    let outdir = PathBuf::from(cfg.str_or("experiment.outdir", "gradflow-out")).join(&name);
    std::fs::create_dir_all(&outdir)
        .with_context(|| format!("creating output dir {}", outdir.display()))?;
    let seed = cfg.u64_or("experiment.seed", 0)?;

    let (pass, mut summary) = match kind.as_str() {
        "tv-dirichlet" => run_tv(cfg, &outdir, Bc::Dirichlet)?,
        "tv-neumann" => run_tv(cfg, &outdir, Bc::Neumann)?,
        "wflow" => run_wflow_experiment(cfg, &outdir)?,
        "smooth-ls" => run_smooth_ls(cfg, &outdir, seed)?,
        "certify-kl" => run_certify(cfg, &outdir)?,
        "rates-table" => run_rates_table(cfg, &outdir)?,
        other => bail!("unknown experiment kind `{other}`"),
    };
    summary["experiment"] = json!({ "kind": kind, "name": name, "seed": seed });
    summary["pass"] = json!(pass);
    write_json(&outdir.join("summary.json"), &summary)?;
    Ok(Outcome {
        name,
        dir: outdir,
        pass,
        summary,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

/// Atomic write: stage to a sibling temp file, then rename into place.
fn write_text(path: &Path, text: &str) -> Result<()> {
    let staged = path.with_extension("tmp");
    std::fs::write(&staged, text).with_context(|| format!("writing {}", staged.display()))?;
    std::fs::rename(&staged, path)
        .with_context(|| format!("moving {} into place", path.display()))
}

// ---------------------------------------------------------------------------
// Total-variation flow experiments
// ---------------------------------------------------------------------------

fn build_grid(cfg: &Config, bc: Bc) -> Result<GridFunction> {
    let generator = cfg.str_or("instance.generator", "disc");
    let n = cfg.usize_or("instance.n", 128)?;
    let h = 1.0 / n as f64;
    let a = cfg.f64_or("instance.height", 1.0)?;
    match generator.as_str() {
        "disc" => {
            let cx = cfg.f64_or("instance.cx", 0.5)?;
            let cy = cfg.f64_or("instance.cy", 0.5)?;
            let r = cfg.f64_or("instance.radius", 0.25)?;
            Ok(GridFunction::disc_2d(n, h, bc, a, cx, cy, r))
        }
        "box" => {
            let from = cfg.f64_or("instance.from", 0.25)?;
            let to = cfg.f64_or("instance.to", 0.75)?;
            Ok(GridFunction::box_1d(n, h, bc, a, from, to))
        }
        "custom-csv" => {
            let file = cfg.require("instance.file")?;
            let text = std::fs::read_to_string(file)
                .with_context(|| format!("reading field file {file}"))?;
            let rows: Vec<Vec<f64>> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split(',')
                        .map(|v| v.trim().parse::<f64>().context("bad field value"))
                        .collect()
                })
                .collect::<Result<_>>()?;
            let ny = rows.len();
            if ny == 1 {
                Ok(GridFunction::new_1d(rows[0].clone(), 1.0 / rows[0].len() as f64, bc))
            } else {
                let nx = rows[0].len();
                let mut values = vec![0.0; nx * ny];
                for (j, row) in rows.iter().enumerate() {
                    if row.len() != nx {
                        bail!("ragged field file {file}");
                    }
                    for (i, v) in row.iter().enumerate() {
                        values[i * ny + j] = *v;
                    }
                }
                Ok(GridFunction::new_2d(nx, ny, 1.0 / nx as f64, values, bc))
            }
        }
        other => bail!("unknown field generator `{other}`"),
    }
}

fn run_tv(cfg: &Config, outdir: &Path, bc: Bc) -> Result<(bool, Value)> {
    let v0 = build_grid(cfg, bc)?;
    let h = v0.h;
    let inst = match (bc, v0.dims()) {
        (Bc::Dirichlet, 2) => TvInstance::dirichlet_2d(v0),
        (Bc::Dirichlet, _) => TvInstance::dirichlet_1d(v0),
        (Bc::Neumann, _) => TvInstance::neumann_1d(v0),
    };
    // Step default: the disc-type speed scale h vs 0.01 a R.
    let default_tau = match cfg.f64_or("instance.radius", 0.25) {
        Ok(r) => h.min(0.01 * cfg.f64_or("instance.height", 1.0)? * r),
        Err(_) => h,
    };
    let tau = cfg.f64_or("solver.tau", default_tau)?;
    let horizon = cfg.f64_or("solver.horizon", 1.0)?;
    let max_iter = cfg.usize_or("solver.max_iter", 30_000)?;
    let tol = cfg.f64_or("solver.tol", 1e-8)?;
    let snapshot_every = cfg.usize_or("solver.snapshot_every", 0)?;

    let run = run_tv_flow_with(&inst, tau, horizon, max_iter, tol)
        .map_err(|e| anyhow::anyhow!("flow failed: {e}"))?;
    let demand_affine = cfg.str_or("instance.generator", "disc") == "disc";
    let audit = extinction_audit(&inst, &run, demand_affine).ok();

    let traj = &run.trajectory;
    traj.save_csv(&run.dist_to_target, &outdir.join("trajectory.csv"))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    TrajectoryManifest {
        space_id: traj.space_id.clone(),
        p: 2.0,
        solver: "implicit-tv".into(),
        params: json!({"tau": tau, "horizon": horizon, "tol": tol, "eps_ext": run.eps_ext,
                       "constant": inst.constant, "constant_provenance": inst.constant_provenance}),
    }
    .save(&outdir.join("trajectory.manifest.json"))
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    if snapshot_every > 0 {
        let snap_dir = outdir.join("snapshots");
        std::fs::create_dir_all(&snap_dir)?;
        for (k, state) in traj.states.iter().enumerate().step_by(snapshot_every) {
            let mut text = String::new();
            for j in 0..state.ny {
                let row: Vec<String> = (0..state.nx)
                    .map(|i| format!("{}", state.at(i, j)))
                    .collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            write_text(&snap_dir.join(format!("snap_{k:06}.csv")), &text)?;
        }
    }

    let energy_plot = plot::render(
        "energy along the flow",
        "t",
        "E(v(t))",
        &[Series {
            label: "energy",
            points: traj.times.iter().cloned().zip(traj.energies.iter().cloned()).collect(),
            scatter: false,
        }],
    );
    write_text(&outdir.join("energy_vs_t.svg"), &energy_plot)?;
    let dist_plot = plot::render(
        "distance to the target (log scale)",
        "t",
        "ln d(v(t), target)",
        &[Series {
            label: "ln distance",
            points: traj
                .times
                .iter()
                .zip(&run.dist_to_target)
                .filter(|(_, &d)| d > 0.0)
                .map(|(&t, &d)| (t, d.ln()))
                .collect(),
            scatter: false,
        }],
    );
    write_text(&outdir.join("log_dist_vs_t.svg"), &dist_plot)?;

    let pass = match &audit {
        Some(a) => a.bound_pass && a.affine_pass.unwrap_or(true),
        None => false,
    };
    let summary = json!({
        "t_star": run.t_star,
        "eps_ext": run.eps_ext,
        "final_energy": traj.energies.last(),
        "extinction_audit": audit.as_ref().map(|a| serde_json::to_value(a).unwrap()),
        "constant": inst.constant,
        "constant_provenance": inst.constant_provenance,
    });
    if let Some(a) = &audit {
        write_json(&outdir.join("extinction.json"), &serde_json::to_value(a)?)?;
    }
    Ok((pass, summary))
}

// ---------------------------------------------------------------------------
// Wasserstein flow experiments
// ---------------------------------------------------------------------------

fn build_spec(cfg: &Config) -> Result<FreeEnergySpec> {
    let preset = cfg.str_or("instance.preset", "fokker-planck");
    let kappa = cfg.f64_or("instance.kappa", 1.0)?;
    Ok(match preset.as_str() {
        "fokker-planck" => FreeEnergySpec::fokker_planck(kappa),
        "porous-medium" => {
            FreeEnergySpec::porous_medium(cfg.f64_or("instance.m", 2.0)?, kappa)
        }
        "doubly-nonlinear" => FreeEnergySpec::doubly_nonlinear(
            cfg.f64_or("instance.p", 2.0)?,
            cfg.f64_or("instance.m", 2.0)?,
        ),
        "drift-interaction" => FreeEnergySpec::drift_interaction(
            kappa,
            cfg.f64_or("instance.kappa_w", 0.5)?,
        ),
        other => bail!("unknown free-energy preset `{other}`"),
    })
}

fn run_wflow_experiment(cfg: &Config, outdir: &Path) -> Result<(bool, Value)> {
    let spec = build_spec(cfg)?;
    let p = cfg.f64_or("solver.p", 2.0)?;
    let m = cfg.usize_or("instance.samples", 2048)?;
    let mean = cfg.f64_or("instance.mean", 2.0)?;
    let sd = cfg.f64_or("instance.sd", 1.0)?;
    let tau = cfg.f64_or("solver.tau", 0.01)?;
    let horizon = cfg.f64_or("solver.horizon", 3.0)?;
    let snapshot_every = cfg.usize_or("solver.snapshot_every", 0)?;
    let mut lambda_hats = cfg.f64_list("audit.lambda_hats")?;
    if lambda_hats.is_empty() {
        lambda_hats = vec![spec.lambda_v];
    }

    let x0 = QuantileRepr::gaussian(m, mean, sd);
    let traj = run_wflow(&spec, &x0, p, tau, horizon, true)
        .map_err(|e| anyhow::anyhow!("flow failed: {e}"))?;
    let nu = equilibrium_solve(&spec, m, p)
        .map_err(|e| anyhow::anyhow!("equilibrium solve failed: {e}"))?;

    let dists: Vec<f64> = traj
        .states
        .iter()
        .map(|s| wasserstein_p(s, &nu.repr, p).unwrap_or(f64::NAN))
        .collect();
    traj.save_csv(&dists, &outdir.join("trajectory.csv"))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    TrajectoryManifest {
        space_id: traj.space_id.clone(),
        p,
        solver: "implicit-quantile".into(),
        params: json!({"tau": tau, "horizon": horizon, "samples": m,
                       "lambda_v": spec.lambda_v, "equilibrium_residual": nu.fisher.slope}),
    }
    .save(&outdir.join("trajectory.manifest.json"))
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    if snapshot_every > 0 {
        let snap_dir = outdir.join("snapshots");
        std::fs::create_dir_all(&snap_dir)?;
        for (k, state) in traj.states.iter().enumerate().step_by(snapshot_every) {
            let text: String = state.x.iter().map(|v| format!("{v}\n")).collect();
            write_text(&snap_dir.join(format!("quantiles_{k:06}.csv")), &text)?;
        }
    }

    let ineq = audit_inequalities(&spec, &x0, &nu.repr, p, &lambda_hats, INEQ_TOL_REL)
        .map_err(|e| anyhow::anyhow!("inequality audit failed: {e}"))?;
    let decay = decay_audit(&spec, &traj, &nu.repr, p, INEQ_TOL_REL)
        .map_err(|e| anyhow::anyhow!("decay audit failed: {e}"))?;
    write_json(&outdir.join("inequalities.json"), &serde_json::to_value(&ineq)?)?;
    write_json(&outdir.join("decay.json"), &serde_json::to_value(&decay)?)?;

    let energy_plot = plot::render(
        "free energy along the flow",
        "t",
        "E(mu(t))",
        &[Series {
            label: "energy",
            points: traj.times.iter().cloned().zip(traj.energies.iter().cloned()).collect(),
            scatter: false,
        }],
    );
    write_text(&outdir.join("energy_vs_t.svg"), &energy_plot)?;
    let dist_plot = plot::render(
        "transport distance to equilibrium (log scale)",
        "t",
        "ln W_p",
        &[Series {
            label: "ln W_p",
            points: traj
                .times
                .iter()
                .zip(&dists)
                .filter(|(_, &d)| d > 0.0)
                .map(|(&t, &d)| (t, d.ln()))
                .collect(),
            scatter: false,
        }],
    );
    write_text(&outdir.join("log_dist_vs_t.svg"), &dist_plot)?;

    let pass = ineq.all_pass && decay.pass;
    let summary = json!({
        "equilibrium_residual": nu.fisher.slope,
        "inequalities_pass": ineq.all_pass,
        "decay_pass": decay.pass,
        "worst_slack_entropy": decay.worst_slack_entropy,
        "worst_slack_envelope": decay.worst_slack_envelope,
        "final_wasserstein": dists.last(),
    });
    Ok((pass, summary))
}

// ---------------------------------------------------------------------------
// Smooth-energy certification experiment
// ---------------------------------------------------------------------------

fn build_smooth_energy(cfg: &Config) -> Result<SmoothEnergy> {
    let dim = cfg.usize_or("instance.dim", 2)?;
    let preset = cfg.str_or("instance.energy", "quadratic");
    let energy = match preset.as_str() {
        "quadratic" => SmoothEnergy::quadratic_identity(dim),
        "quartic" => SmoothEnergy {
            kind: SmoothKind::Quartic,
            dim,
            lambda: Some(0.0),
        },
        "coscup" => SmoothEnergy {
            kind: SmoothKind::CosCup {
                amp: cfg.f64_or("instance.amp", 0.1)?,
                freq: cfg.f64_or("instance.freq", 3.0)?,
            },
            dim,
            lambda: None,
        },
        "user-polynomial" => {
            let coeffs = cfg.f64_list("instance.coeffs")?;
            if coeffs.is_empty() {
                bail!("user-polynomial needs instance.coeffs");
            }
            SmoothEnergy {
                kind: SmoothKind::Polynomial { coeffs },
                dim,
                lambda: None,
            }
        }
        other => bail!("unknown smooth energy `{other}`"),
    };
    Ok(energy)
}

fn run_smooth_ls(cfg: &Config, outdir: &Path, seed: u64) -> Result<(bool, Value)> {
    let energy = build_smooth_energy(cfg)?;
    energy.check_consistency(seed)?;
    let radius = cfg.f64_or("instance.radius", 0.1)?;
    let n_points = cfg.usize_or("instance.points", 10_000)?;
    let n_bins = cfg.usize_or("audit.bins", 14)?;
    let valley_c = cfg.f64_or("audit.c", 2.0)?;
    let phi = vec![0.0; energy.dim];
    let e_phi = energy.value(&phi);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = SampleCloud {
        states: Vec::new(),
        r: Vec::new(),
        g: Vec::new(),
        dist_to_phi: Vec::new(),
        source: cfg.str_or("instance.energy", "quadratic"),
    };
    while cloud.states.len() < n_points {
        let x: Vec<f64> = (0..energy.dim)
            .map(|_| rng.gen_range(-radius..radius))
            .collect();
        let dist = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist > radius || dist == 0.0 {
            continue;
        }
        let rel = energy.value(&x) - e_phi;
        if rel <= 0.0 {
            continue;
        }
        cloud.r.push(rel);
        cloud.g.push(energy.grad_norm(&x));
        cloud.dist_to_phi.push(dist);
        cloud.states.push(x);
    }

    let alphas: Vec<f64> = {
        let listed = cfg.f64_list("audit.alphas")?;
        if listed.is_empty() {
            (1..=20).map(|k| k as f64 / 20.0).collect()
        } else {
            listed
        }
    };
    let sweep = klcert::fit_ls(&cloud, &alphas).map_err(|e| anyhow::anyhow!("{e}"))?;
    let r_max = cloud.r.iter().cloned().fold(0.0f64, f64::max);
    let profile =
        klcert::level_profile(&cloud, n_bins, r_max).map_err(|e| anyhow::anyhow!("{e}"))?;
    let cert =
        klcert::build_theta(&cloud, &profile, valley_c).map_err(|e| anyhow::anyhow!("{e}"))?;

    // Line talweg from a seeded boundary direction.
    let v0: Vec<f64> = {
        let mut raw: Vec<f64> = (0..energy.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        raw.iter_mut().for_each(|v| *v *= radius / norm);
        raw
    };
    let talweg = smooth_line_talweg(&energy, &phi, &v0, 1.0, seed)?;

    let scatter = plot::render(
        "slope against relative energy (log-log)",
        "ln E(v|phi)",
        "ln g(v)",
        &[
            Series {
                label: "samples",
                points: cloud
                    .r
                    .iter()
                    .zip(&cloud.g)
                    .filter(|(&r, &g)| r > 0.0 && g > 0.0)
                    .map(|(&r, &g)| (r.ln(), g.ln()))
                    .collect(),
                scatter: true,
            },
            Series {
                label: &format!("fit slope {:.3}", sweep.alpha_regression),
                points: {
                    let r_lo = cloud.r.iter().cloned().fold(f64::INFINITY, f64::min).ln();
                    let r_hi = r_max.ln();
                    let anchor = cloud.g[0].ln() - sweep.alpha_regression * cloud.r[0].ln();
                    vec![
                        (r_lo, anchor + sweep.alpha_regression * r_lo),
                        (r_hi, anchor + sweep.alpha_regression * r_hi),
                    ]
                },
                scatter: false,
            },
        ],
    );
    write_text(&outdir.join("loglog_slope_scatter.svg"), &scatter)?;
    write_json(&outdir.join("ls_fit.json"), &serde_json::to_value(&sweep)?)?;
    write_json(&outdir.join("certificate.json"), &serde_json::to_value(&cert)?)?;
    write_json(&outdir.join("line_talweg.json"), &serde_json::to_value(&talweg)?)?;

    // Optional empirical stability sweep around the equilibrium.
    let mut stability_verdict = Value::Null;
    if let Some(eps) = cfg.get("audit.stability_eps") {
        let eps: f64 = eps.parse().context("bad audit.stability_eps")?;
        let deltas = or_default(
            cfg.f64_list("audit.stability_deltas")?,
            vec![eps / 2.0, eps / 4.0],
        );
        let tau = cfg.f64_or("solver.tau", 0.05)?;
        let horizon = cfg.f64_or("solver.horizon", 3.0)?;
        let verdict = stability_probe(&energy, &phi, eps, &deltas, tau, horizon, seed)?;
        write_json(&outdir.join("stability.json"), &serde_json::to_value(&verdict)?)?;
        stability_verdict = json!(verdict.stable);
    }

    let pass = cert.margin >= 0.0 && talweg.strictly_increasing;
    let summary = json!({
        "alpha_regression": sweep.alpha_regression,
        "recommended_alpha": sweep.recommended_alpha,
        "certificate_margin": cert.margin,
        "c_theta_fit": talweg.c_theta_fit,
        "n_samples": cloud.states.len(),
        "stable": stability_verdict,
    });
    Ok((pass, summary))
}

// ---------------------------------------------------------------------------
// Certificate from an external cloud CSV
// ---------------------------------------------------------------------------

/// Cloud CSV format: header `r,g[,dist]`, one sample per line.
pub fn load_cloud_csv(path: &Path) -> Result<SampleCloud<usize>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty cloud file")?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if cols.len() < 2 || cols[0] != "r" || cols[1] != "g" {
        bail!("cloud CSV must start with header `r,g[,dist]`");
    }
    let mut cloud = SampleCloud {
        states: Vec::new(),
        r: Vec::new(),
        g: Vec::new(),
        dist_to_phi: Vec::new(),
        source: path.display().to_string(),
    };
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() < 2 {
            bail!("{}:{}: need at least r,g", path.display(), k + 2);
        }
        cloud.r.push(fields[0].parse().context("bad r value")?);
        cloud.g.push(fields[1].parse().context("bad g value")?);
        cloud.dist_to_phi.push(if fields.len() > 2 {
            fields[2].parse().context("bad dist value")?
        } else {
            0.0
        });
        cloud.states.push(k);
    }
    Ok(cloud)
}

fn run_certify(cfg: &Config, outdir: &Path) -> Result<(bool, Value)> {
    let file = cfg.require("instance.cloud")?;
    let cloud = load_cloud_csv(Path::new(file))?;
    let n_bins = cfg.usize_or("audit.bins", 12)?;
    let valley_c = cfg.f64_or("audit.c", 2.0)?;
    let r_max = cfg.f64_or(
        "audit.r_max",
        cloud.r.iter().cloned().fold(0.0f64, f64::max),
    )?;
    let profile =
        klcert::level_profile(&cloud, n_bins, r_max).map_err(|e| anyhow::anyhow!("{e}"))?;
    let cert =
        klcert::build_theta(&cloud, &profile, valley_c).map_err(|e| anyhow::anyhow!("{e}"))?;
    write_json(&outdir.join("certificate.json"), &serde_json::to_value(&cert)?)?;
    let pass = cert.margin >= 0.0;
    let summary = json!({
        "margin": cert.margin,
        "n_bins": n_bins,
        "c": valley_c,
        "r_max": r_max,
    });
    Ok((pass, summary))
}

// ---------------------------------------------------------------------------
// Rates table
// ---------------------------------------------------------------------------

fn run_rates_table(cfg: &Config, outdir: &Path) -> Result<(bool, Value)> {
    let ps = or_default(cfg.f64_list("instance.p")?, vec![2.0]);
    let alphas = or_default(cfg.f64_list("instance.alpha")?, vec![0.5, 0.75, 1.0]);
    let cs = or_default(cfg.f64_list("instance.c")?, vec![1.0]);
    let e0s = or_default(cfg.f64_list("instance.e0")?, vec![1.0]);
    let t0 = cfg.f64_or("instance.t0", 0.0)?;
    let mut rows = Vec::new();
    for &p in &ps {
        for &alpha in &alphas {
            for &c in &cs {
                for &e0 in &e0s {
                    let pred = rates::predict(p, alpha, c, t0, e0)
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    rows.push(serde_json::to_value(&pred)?);
                }
            }
        }
    }
    let table = json!({ "rows": rows });
    write_json(&outdir.join("rates_table.json"), &table)?;
    Ok((true, table))
}

fn or_default(list: Vec<f64>, default: Vec<f64>) -> Vec<f64> {
    if list.is_empty() {
        default
    } else {
        list
    }
}

/// Built-in presets for the `tv` and `wflow` subcommands.
pub fn preset_config(kind: &str, preset: &str, outdir: &str) -> Result<Config> {
    let text = match (kind, preset) {
        ("tv-dirichlet", "disc") => format!(
            "[experiment]\nkind = tv-dirichlet\nname = disc\noutdir = {outdir}\n\
             [instance]\ngenerator = disc\nn = 128\nradius = 0.25\nheight = 1\n\
             [solver]\ntau = 2.5e-4\nhorizon = 0.2\n"
        ),
        ("tv-dirichlet", "box") => format!(
            "[experiment]\nkind = tv-dirichlet\nname = box\noutdir = {outdir}\n\
             [instance]\ngenerator = box\nn = 256\nfrom = 0.25\nto = 0.75\n\
             [solver]\ntau = 1e-3\nhorizon = 0.6\n"
        ),
        ("tv-neumann", "halfbox") => format!(
            "[experiment]\nkind = tv-neumann\nname = halfbox\noutdir = {outdir}\n\
             [instance]\ngenerator = box\nn = 256\nfrom = 0\nto = 0.499999\n\
             [solver]\ntau = 1e-3\nhorizon = 0.5\n"
        ),
        ("wflow", "fokker-planck") => format!(
            "[experiment]\nkind = wflow\nname = fokker-planck\noutdir = {outdir}\n\
             [instance]\npreset = fokker-planck\nkappa = 1\nsamples = 2048\nmean = 2\nsd = 1\n\
             [solver]\ntau = 0.01\nhorizon = 3\n"
        ),
        ("wflow", "porous-medium") => format!(
            "[experiment]\nkind = wflow\nname = porous-medium\noutdir = {outdir}\n\
             [instance]\npreset = porous-medium\nm = 2\nkappa = 1\nsamples = 512\nmean = 1\nsd = 1\n\
             [solver]\ntau = 0.05\nhorizon = 3\n"
        ),
        _ => bail!("unknown preset `{preset}` for `{kind}`"),
    };
    Config::parse(&text, &format!("<preset {kind}:{preset}>"))
}
