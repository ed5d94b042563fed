use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use fractal_wave::acceptance;
use fractal_wave::energy::{verify_harmonic_structure, BoundarySet, HarmonicCheck, ResistanceSolver};
use fractal_wave::equilibrium::{equilibrium_gap, stationary_norm};
use fractal_wave::kernel::{kernel_v, kernel_vdot, WaveParams};
use fractal_wave::regularity::{
    fit_exponent, l2_modulus_exact, l2_modulus_from_spectrum, log_grid, spatial_variogram_exact,
    spatial_variogram_full, temporal_variogram_exact, temporal_variogram_full, QuadratureBudget, VariogramTable,
};
use fractal_wave::simulator::{advance, field_at, init_simulation, replica_seed, write_trajectory_csv, FieldSample};
use fractal_wave::spectrum::decimation::decimated_spectrum;
use fractal_wave::spectrum::{solve_eigenvalues, solve_spectrum, DENSE_LIMIT};
use fractal_wave::topology::verify_gluing;
use fractal_wave::{Error, Model, Result};

use crate::config::RunConfig;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::other)?;
    writeln!(w)?;
    w.flush()?;
    Ok(dir.join(name))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn boundary(cfg: &RunConfig, model: &Model) -> Result<BoundarySet> {
    model.boundary_set(cfg.b.as_deref().unwrap_or("D"))
}

#[derive(Serialize)]
struct Validation {
    name: String,
    contractions: usize,
    boundary: Vec<String>,
    level1_vertices: usize,
    interior_classes: usize,
    d_h: f64,
    d_s: f64,
    harmonic: HarmonicCheck,
    passed: bool,
}

pub fn validate(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let gluing = verify_gluing(&model.spec)?;
    let harmonic = verify_harmonic_structure(&model.spec, &model.harmonic)?;
    let report = Validation {
        name: model.spec.name.clone(),
        contractions: model.spec.contractions,
        boundary: model.spec.boundary.clone(),
        level1_vertices: gluing.level1_vertices,
        interior_classes: gluing.interior_classes,
        d_h: model.dims.d_h,
        d_s: model.dims.d_s,
        passed: harmonic.passed(),
        harmonic,
    };
    println!(
        "{}: {} level-1 vertices, d_H = {:.6}, d_s = {:.6}, harmonic residual {:.3e}",
        report.name, report.level1_vertices, report.d_h, report.d_s, report.harmonic.residual
    );
    let path = write_json(&cfg.out_dir(), "validate.json", &report)?;
    println!("wrote {}", path.display());
    if !report.passed {
        return Err(Error::Validation(format!(
            "harmonic structure check failed: Schur residual {:.3e} ≥ {:e}",
            report.harmonic.residual,
            HarmonicCheck::TOLERANCE
        )));
    }
    Ok(())
}

pub fn spectrum(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let level = cfg.require_positive_level(5)?;
    let b = boundary(cfg, &model)?;
    let sys = model.system(level, &b)?;
    let k = cfg.modes.unwrap_or(sys.dim().min(50));
    let sp = solve_spectrum(&sys, k)?;
    let dir = cfg.out_dir();
    let mut w = create(&dir, "spectrum.csv")?;
    sp.write_csv(&mut w)?;
    finish(w)?;
    let mut w = create(&dir, "eigenvectors.csv")?;
    sp.write_vectors_csv(&mut w)?;
    finish(w)?;
    println!(
        "{} level {level}, b = {}: {} of {} modes, λ₁ = {:.6}",
        model.spec.name,
        b.describe(&model.spec.boundary),
        sp.len(),
        sys.dim(),
        sp.eigenvalues[0]
    );
    println!("wrote {}", dir.join("spectrum.csv").display());
    Ok(())
}

pub fn kernel(cfg: &RunConfig) -> Result<()> {
    let p = WaveParams::new(cfg.beta.unwrap_or(1.0), cfg.lambda.unwrap_or(1.0))?;
    let t_end = cfg.t_end.unwrap_or(10.0);
    let points = cfg.points.unwrap_or(201);
    if !(t_end > 0.0) || points < 2 {
        return Err(Error::Validation("kernel table needs t_end > 0 and at least 2 points".into()));
    }
    let dir = cfg.out_dir();
    let mut w = create(&dir, "kernel.csv")?;
    writeln!(w, "t,V,Vdot")?;
    for j in 0..points {
        let t = t_end * j as f64 / (points - 1) as f64;
        writeln!(w, "{t},{:e},{:e}", kernel_v(&p, t)?, kernel_vdot(&p, t)?)?;
    }
    finish(w)?;
    println!("{:?} regime; wrote {}", p.regime(), dir.join("kernel.csv").display());
    Ok(())
}

fn output_times(cfg: &RunConfig) -> Result<Vec<f64>> {
    if let Some(times) = &cfg.output_times {
        if times.is_empty() || !(times[0] > 0.0) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("output times must be positive and strictly increasing".into()));
        }
        return Ok(times.clone());
    }
    let t_end = cfg.t_end.unwrap_or(1.0);
    let dt = cfg.dt.unwrap_or(t_end / 10.0);
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(Error::Validation("t_end and dt must be positive".into()));
    }
    let steps = (t_end / dt - 1e-9).ceil() as usize;
    Ok((1..=steps).map(|j| (j as f64 * dt).min(t_end)).collect())
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let level = cfg.require_positive_level(6)?;
    let b = boundary(cfg, &model)?;
    let sys = model.system(level, &b)?;
    let k = cfg.modes.unwrap_or(sys.dim().min(100));
    let beta = cfg.beta.unwrap_or(1.0);
    let seed = cfg.seed.unwrap_or(0);
    let replicas = cfg.replicas.unwrap_or(1);
    if replicas == 0 {
        return Err(Error::Validation("replicas must be at least 1".into()));
    }
    let times = output_times(cfg)?;
    let sp = Arc::new(solve_spectrum(&sys, k)?);
    let vertices = cfg.vertices.clone().unwrap_or_else(|| (0..sys.total_vertices).collect());
    let dir = cfg.out_dir();
    for r in 0..replicas {
        let run_seed = if replicas == 1 { seed } else { replica_seed(seed, r) };
        let mut state = init_simulation(sp.clone(), beta, k, run_seed, None)?;
        let mut samples: Vec<FieldSample> = vec![field_at(&state, &vertices)?];
        let mut now = 0.0;
        for &t in &times {
            advance(&mut state, t - now)?;
            now = t;
            samples.push(field_at(&state, &vertices)?);
        }
        let name = if replicas == 1 {
            "trajectory.csv".to_string()
        } else {
            format!("trajectory_{run_seed}.csv")
        };
        let mut w = create(&dir, &name)?;
        write_trajectory_csv(&samples, &mut w)?;
        finish(w)?;
    }
    println!(
        "{} level {level}: {replicas} replica(s), K = {k}, {} output times; wrote to {}",
        model.spec.name,
        times.len(),
        dir.display()
    );
    Ok(())
}

fn default_pairs(model: &Model, level: usize) -> Result<Vec<(usize, usize)>> {
    let c = model.complex(level)?;
    let x = model.boundary_size();
    let upto = c.level_vertex_count(level.min(4));
    Ok((0..upto).filter(|&v| v != x).map(|v| (x, v)).collect())
}

pub fn variogram(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let level = cfg.require_positive_level(6)?;
    let b = boundary(cfg, &model)?;
    let beta = cfg.beta.unwrap_or(1.0);
    let budget = QuadratureBudget::default();
    let sys = model.system(level, &b)?;
    let kind = cfg.kind.as_deref().unwrap_or("temporal");
    let lags = cfg.lags.clone().unwrap_or_else(|| log_grid(1e-4, 1e-2, 9));
    let table: VariogramTable = match kind {
        "spatial" => {
            let pairs: Vec<(usize, usize)> = match &cfg.pairs {
                Some(p) => p.iter().map(|[x, y]| (*x, *y)).collect(),
                None => default_pairs(&model, level)?,
            };
            let neumann = model.system(level, &BoundarySet::neumann(model.boundary_size()))?;
            let metric = ResistanceSolver::new(&neumann)?.table(&pairs)?;
            let t = cfg.t.unwrap_or(2.0);
            match cfg.modes {
                Some(k) => spatial_variogram_exact(&solve_spectrum(&sys, k)?, beta, t, &metric, k)?,
                None => spatial_variogram_full(&sys, beta, t, &metric, budget)?,
            }
        }
        "temporal" => {
            let x = cfg.x.unwrap_or(model.boundary_size());
            let s = cfg.s.unwrap_or(2.0);
            match cfg.modes {
                Some(k) => temporal_variogram_exact(&solve_spectrum(&sys, k)?, beta, x, s, &lags, k)?,
                None => temporal_variogram_full(&sys, beta, x, s, &lags, budget)?,
            }
        }
        "l2" => {
            let s = cfg.s.unwrap_or(2.0);
            match (cfg.modes, model.family) {
                (Some(k), _) => l2_modulus_exact(&solve_spectrum(&sys, k)?, beta, s, &lags, k)?,
                (None, Some(family)) if b.is_neumann() || b.is_dirichlet() => {
                    let values = decimated_spectrum(family, level, &b)?.values;
                    l2_modulus_from_spectrum(level, &b.to_string(), &values, beta, s, &lags)?
                }
                (None, _) if sys.dim() <= DENSE_LIMIT => {
                    let values: Vec<(f64, u64)> =
                        solve_eigenvalues(&sys, sys.dim())?.into_iter().map(|l| (l, 1)).collect();
                    l2_modulus_from_spectrum(level, &b.to_string(), &values, beta, s, &lags)?
                }
                _ => return Err(Error::Validation("give --modes for this L² modulus run".into())),
            }
        }
        other => return Err(Error::Validation(format!("unknown variogram kind '{other}' (spatial, temporal, l2)"))),
    };
    let dir = cfg.out_dir();
    let mut w = create(&dir, "variogram.csv")?;
    table.write_csv(&mut w)?;
    finish(w)?;
    let window = match cfg.window {
        Some([lo, hi]) => (lo, hi),
        None => table
            .rows
            .iter()
            .filter(|r| r.separation > 0.0)
            .fold((f64::MAX, 0.0f64), |(a, c), r| (a.min(r.separation), c.max(r.separation))),
    };
    match fit_exponent(&table, window) {
        Ok(fit) => {
            let path = write_json(&dir, "fit.json", &json!({"kind": table.kind, "meta": table.meta, "fit": fit}))?;
            println!(
                "{kind} variogram: slope {:.4} ± {:.4} over [{:e}, {:e}]; wrote {}",
                fit.slope,
                fit.half_width,
                window.0,
                window.1,
                path.display()
            );
        }
        Err(e) => println!("{kind} variogram written; no exponent fit ({e})"),
    }
    Ok(())
}

pub fn equilibrium(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let level = cfg.require_positive_level(8)?;
    let b = boundary(cfg, &model)?;
    let beta = cfg.beta.unwrap_or(1.0);
    let sys = model.system(level, &b)?;
    let k = cfg.modes.unwrap_or(sys.dim().min(200));
    let eig = solve_eigenvalues(&sys, k)?;
    let times = cfg.times.clone().unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0]);
    let stationary = stationary_norm(&eig, beta, &b)?;
    let report = equilibrium_gap(&eig, beta, &b, &times)?;
    let dir = cfg.out_dir();
    let mut w = create(&dir, "equilibrium.csv")?;
    report.write_csv(&mut w)?;
    finish(w)?;
    let summary = json!({
        "beta": beta,
        "modes": k,
        "stationary_total": stationary.total,
        "weyl_tail": stationary.weyl_tail,
        "zero_mode": stationary.zero_mode,
        "times": report.times,
        "total_gap": report.total_gap,
        "bound": report.bound,
    });
    let path = write_json(&dir, "equilibrium.json", &summary)?;
    println!(
        "Σ 1/(4βλ_k) over {} modes = {:.6e}; wrote {}",
        stationary.modes.len(),
        stationary.total,
        path.display()
    );
    Ok(())
}

/// Runs the acceptance criteria; `Ok(false)` when any of them fails.
pub fn report(cfg: &RunConfig) -> Result<bool> {
    let ids: Vec<u8> = match &cfg.criteria {
        Some(ids) => ids.clone(),
        None => acceptance::CRITERIA.iter().map(|c| c.0).collect(),
    };
    let mut outcomes = Vec::with_capacity(ids.len());
    for id in ids {
        let o = acceptance::run(id)?;
        println!("{o}");
        outcomes.push(o);
    }
    let dir = cfg.out_dir();
    let mut w = create(&dir, "report.txt")?;
    for o in &outcomes {
        writeln!(w, "{o}")?;
    }
    finish(w)?;
    write_json(&dir, "report.json", &outcomes)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed; wrote {}", outcomes.len() - failed, dir.join("report.txt").display());
    Ok(failed == 0)
}
