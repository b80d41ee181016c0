//! One function per command. Each writes its CSV artifacts through an
//! [`OutputDir`] and finishes with the manifest. CSV numbers use shortest
//! round-trip formatting and contain no timings, so identical configs give
//! byte-identical files.

use std::fs::File;
use std::time::Instant;

use genbrown::calculus::{ito_residual, C2Function, InternalProcess};
use genbrown::exit_time::{
    solve_dirichlet_scalar, solve_dirichlet_system_experimental, ExitConfig, LatticeDomain,
};
use genbrown::fd::{march, relative_l2, stable_step, STABILITY_FACTOR};
use genbrown::feynman_kac::{propagate_spectrum, solve_monte_carlo, CauchyProblem, McConfig, SolveReport};
use genbrown::io::{read_spectral, write_field, write_spectral};
use genbrown::mode_algebra::{propagator, ModeSpectrum, MultiIndex};
use genbrown::rng::StreamKey;
use genbrown::torus_fourier::{SpectralField, TorusGrid};
use genbrown::walk::{clt_check, empirical_density, sample_path_keyed, walk_position, DensityMethod, Timeline};
use serde_json::{json, Value};

use crate::config::{Boundary, Command, RunConfig, ValidateTarget};
use crate::manifest::OutputDir;
use crate::RunError;

/// Auxiliary stream tag for seeded random initial or boundary data.
const DATA_TAG: u64 = 1;

const CLT_TOLERANCE: f64 = 1e-3;
const ITO_TOLERANCE: f64 = 1e-12;

pub fn dispatch(cfg: &RunConfig) -> Result<bool, RunError> {
    let mut out = OutputDir::create(&cfg.out)?;
    let result = match cfg.command {
        Command::SolveCauchy | Command::LameDemo => solve_cauchy(cfg, &mut out)?,
        Command::SolveElliptic => solve_elliptic(cfg, &mut out)?,
        Command::ModeFactor => mode_factor(cfg, &mut out)?,
        Command::Validate { target } => match target {
            ValidateTarget::Clt => validate_clt(cfg, &mut out)?,
            ValidateTarget::Ito => validate_ito(cfg, &mut out)?,
            ValidateTarget::Density => validate_density(cfg, &mut out)?,
        },
    };
    let status = if result.passed { "ok" } else { "failed" };
    out.finish(cfg.to_json(), result.rng, result.summary, status)?;
    Ok(result.passed)
}

struct Outcome {
    passed: bool,
    rng: Value,
    summary: Value,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_table(header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| RunError::Numerical(e.into());
    w.write_record(&header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| RunError::config(format!("csv buffer: {e}")))
}

fn axis_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn data_rng_json(cfg: &RunConfig) -> Value {
    match cfg.input {
        Some(_) => Value::Null,
        None => json!({ "generator": "ChaCha8", "stream": "auxiliary", "seed": cfg.seed, "tag": DATA_TAG }),
    }
}

/// Spectral data from `--input`, or a seeded band-limited real field with `components` components.
fn load_or_draw(cfg: &RunConfig, components: usize) -> Result<SpectralField, RunError> {
    match &cfg.input {
        Some(path) => {
            let file = File::open(path).map_err(|e| RunError::config(format!("cannot open {}: {e}", path.display())))?;
            let field = read_spectral(file, Some(cfg.trunc_k))
                .map_err(|e| RunError::config(format!("input {}: {e}", path.display())))?;
            if field.dim != cfg.dim || field.components != components {
                return Err(RunError::config(format!(
                    "input {} has dimension {} with {} components; expected {} and {components}",
                    path.display(),
                    field.dim,
                    field.components,
                    cfg.dim
                )));
            }
            Ok(field)
        }
        None => {
            let mut rng = StreamKey::aux(cfg.seed, DATA_TAG, 0).rng();
            Ok(SpectralField::random_real(cfg.dim, components, cfg.trunc_k, cfg.trunc_k, &mut rng))
        }
    }
}

/// `P^n` cell-centred evaluation points `k/P + 1/(2P)`.
fn evaluation_points(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let h = 1.0 / per_axis as f64;
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut flat| {
            let mut x = vec![0.0; dim];
            for slot in x.iter_mut().rev() {
                *slot = (flat % per_axis) as f64 * h + 0.5 * h;
                flat /= per_axis;
            }
            x
        })
        .collect()
}

fn solution_table(report: &SolveReport, dim: usize) -> Result<Vec<u8>, RunError> {
    let comps = report.oracle_values.first().map_or(0, Vec::len);
    let mut header = axis_header("x", dim);
    for c in 1..=comps {
        for col in ["mc", "mc_imag", "std_error", "oracle", "closed_form"] {
            header.push(format!("{col}_{c}"));
        }
    }
    let rows = report.points.iter().enumerate().map(|(i, x)| {
        let mut row: Vec<String> = x.iter().map(|&v| num(v)).collect();
        for c in 0..comps {
            row.push(num(report.mc_values[i][c].re));
            row.push(num(report.mc_values[i][c].im));
            row.push(num(report.std_errors[i][c]));
            row.push(num(report.oracle_values[i][c].re));
            row.push(num(report.closed_form_values[i][c].re));
        }
        row
    });
    csv_table(header, rows)
}

fn solve_cauchy(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, RunError> {
    let initial = load_or_draw(cfg, cfg.dim)?;
    let mut buf = Vec::new();
    write_spectral(&initial, &mut buf)?;
    out.write("initial_spectrum.csv", &buf)?;

    let problem = CauchyProblem::new(cfg.tensor.clone(), initial.clone(), cfg.time)?;
    let points = evaluation_points(cfg.dim, cfg.eval);
    let report = solve_monte_carlo(&problem, &points, &McConfig::random(cfg.dt, cfg.samples, cfg.seed))?;
    out.write("solution.csv", &solution_table(&report, cfg.dim)?)?;

    let mut fd_summary = Value::Null;
    if let Some(g) = cfg.grid {
        let clock = Instant::now();
        let grid = TorusGrid::new(cfg.dim, g)?;
        let (start, _) = initial.inverse_on_grid(grid)?;
        let (exact, _) = propagate_spectrum(&problem)?.inverse_on_grid(grid)?;
        let step = stable_step(&cfg.tensor, &grid, STABILITY_FACTOR);
        let marched = march(&cfg.tensor, &start, cfg.time, step)?;
        let rel = relative_l2(&marched, &exact)?;
        let mut buf = Vec::new();
        write_field(&exact, &mut buf)?;
        out.write("oracle_grid.csv", &buf)?;
        let mut buf = Vec::new();
        write_field(&marched, &mut buf)?;
        out.write("fd_grid.csv", &buf)?;
        fd_summary = json!({
            "grid": g,
            "stable_step_bound": step,
            "relative_l2": rel,
            "seconds": clock.elapsed().as_secs_f64(),
        });
    }

    let rng = report.rng.as_ref().map_or(Value::Null, |p| {
        json!({
            "generator": "ChaCha8",
            "seed": p.seed,
            "batch": p.batch,
            "batches": p.batches,
            "streams_per_batch": p.streams,
            "samples": p.samples,
            "initial_data": data_rng_json(cfg),
        })
    });
    let summary = json!({
        "lame_a": cfg.lame_a,
        "points": points.len(),
        "steps": report.timeline.steps,
        "pairs": report.pairs,
        "max_z_score": report.max_z_score(),
        "max_imag": report.max_imag(),
        "truncation_tail": report.truncation_tail,
        "finite_difference": fd_summary,
        "timings": {
            "oracle_seconds": report.timings.oracle_seconds,
            "monte_carlo_seconds": report.timings.monte_carlo_seconds,
        },
    });
    Ok(Outcome {
        passed: true,
        rng,
        summary,
    })
}

fn interior_nodes(dim: usize, cells: i64) -> Vec<Vec<i64>> {
    let mut nodes: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..dim {
        nodes = nodes
            .into_iter()
            .flat_map(|p| {
                (1..cells).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    nodes
}

fn solve_elliptic(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, RunError> {
    let cells = cfg.grid_or(10) as i64;
    let n = cfg.dim;
    let domain = LatticeDomain::boxed(vec![0.0; n], 1.0 / cells as f64, vec![0; n], vec![cells; n])?;
    let nodes = interior_nodes(n, cells);
    let exit_cfg = |lane: usize| ExitConfig {
        lane: lane as u64,
        ..ExitConfig::new(cfg.samples, cfg.seed)
    };
    let mut header = axis_header("x", n);
    let mut rows = Vec::with_capacity(nodes.len());
    let mut max_se: f64 = 0.0;
    let mut max_imag: f64 = 0.0;
    let uses_data = cfg.system || cfg.boundary == Boundary::Input;

    if cfg.system {
        let boundary = load_or_draw(cfg, n)?;
        let mut buf = Vec::new();
        write_spectral(&boundary, &mut buf)?;
        out.write("boundary_spectrum.csv", &buf)?;
        for c in 1..=n {
            header.push(format!("value_{c}"));
            header.push(format!("std_error_{c}"));
        }
        for (lane, k) in nodes.iter().enumerate() {
            let est = solve_dirichlet_system_experimental(&cfg.tensor, &domain, &boundary, k, &exit_cfg(lane))?;
            let mut row: Vec<String> = domain.position(k).into_iter().map(num).collect();
            for (v, se) in est.values.iter().zip(&est.std_errors) {
                row.push(num(v.re));
                row.push(num(*se));
                max_se = max_se.max(*se);
            }
            max_imag = max_imag.max(est.max_imag());
            rows.push(row);
        }
    } else {
        let field = if cfg.boundary == Boundary::Input {
            let field = load_or_draw(cfg, 1)?;
            let mut buf = Vec::new();
            write_spectral(&field, &mut buf)?;
            out.write("boundary_spectrum.csv", &buf)?;
            Some(field)
        } else {
            None
        };
        let g = |x: &[f64]| match (&cfg.boundary, &field) {
            (Boundary::Input, Some(f)) => f.evaluate_complex(x)[0].re,
            (Boundary::Indicator, _) => f64::from(u8::from(x[0] > 0.5)),
            _ => x[0],
        };
        header.extend(["value", "std_error", "mean_steps", "steps_std_error"].map(String::from));
        for (lane, k) in nodes.iter().enumerate() {
            let est = solve_dirichlet_scalar(&domain, g, k, &exit_cfg(lane))?;
            let mut row: Vec<String> = domain.position(k).into_iter().map(num).collect();
            row.extend([est.value, est.std_error, est.mean_steps, est.steps_std_error].map(num));
            max_se = max_se.max(est.std_error);
            rows.push(row);
        }
    }
    out.write("elliptic.csv", &csv_table(header, rows)?)?;

    let rng = json!({
        "generator": "ChaCha8",
        "seed": cfg.seed,
        "lanes": format!("one per interior node, 0..{}", nodes.len()),
        "batch": ExitConfig::new(cfg.samples, cfg.seed).batch,
        "samples": cfg.samples,
        "boundary_data": if uses_data { data_rng_json(cfg) } else { Value::Null },
    });
    let summary = json!({
        "mode": if cfg.system { "system (experimental)" } else { "scalar" },
        "cells_per_axis": cells,
        "interior_nodes": nodes.len(),
        "walk_dt": domain.dt(),
        "max_std_error": max_se,
        "max_imag": if cfg.system { json!(max_imag) } else { Value::Null },
    });
    Ok(Outcome {
        passed: true,
        rng,
        summary,
    })
}

fn mode_factor(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, RunError> {
    let n = cfg.dim;
    let mut header = axis_header("alpha", n);
    header.extend(["dt", "steps", "lambda_min", "lambda_max", "max_gap"].map(String::from));
    let mut rows = Vec::new();
    let mut level_gaps = Vec::new();
    let spectra = MultiIndex::cube(n, cfg.trunc_k)
        .into_iter()
        .map(|alpha| ModeSpectrum::new(&cfg.tensor, &alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let exact = spectra
        .iter()
        .map(|s| propagator(s, cfg.time))
        .collect::<Result<Vec<_>, _>>()?;
    for level in 0..cfg.levels {
        let dt = cfg.dt / f64::from(1u32 << level);
        let tl = Timeline::with_horizon(cfg.time, dt)?;
        let mut worst: f64 = 0.0;
        for (spec, prop) in spectra.iter().zip(&exact) {
            let closed = genbrown::walk::mode_factor_closed_form(spec, &tl);
            let gap = (closed - prop).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            worst = worst.max(gap);
            let mut row: Vec<String> = spec.alpha.0.iter().map(|a| a.to_string()).collect();
            row.extend([num(dt), tl.steps.to_string(), num(spec.lambda_min()), num(spec.lambda_max()), num(gap)]);
            rows.push(row);
        }
        level_gaps.push(json!({ "dt": dt, "steps": tl.steps, "max_gap": worst }));
    }
    out.write("mode_factor.csv", &csv_table(header, rows)?)?;
    let ratios: Vec<f64> = level_gaps
        .windows(2)
        .map(|w| w[0]["max_gap"].as_f64().unwrap_or(0.0) / w[1]["max_gap"].as_f64().unwrap_or(1.0))
        .collect();
    Ok(Outcome {
        passed: true,
        rng: json!({ "used": false }),
        summary: json!({ "modes": spectra.len(), "levels": level_gaps, "halving_ratios": ratios }),
    })
}

fn validate_clt(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, RunError> {
    let rows = clt_check(cfg.samples as u64, 0.5)?;
    let worst = rows.iter().map(|r| r.gap()).fold(0.0, f64::max);
    let table = rows
        .iter()
        .map(|r| vec![r.m.to_string(), num(r.x), num(r.scaled_binomial), num(r.gaussian), num(r.gap())]);
    out.write(
        "clt.csv",
        &csv_table(["m", "x", "scaled_binomial", "gaussian", "gap"].map(String::from).to_vec(), table)?,
    )?;
    let passed = worst <= CLT_TOLERANCE;
    Ok(Outcome {
        passed,
        rng: json!({ "used": false }),
        summary: json!({ "trials": cfg.samples, "p": 0.5, "rows": rows.len(), "max_gap": worst, "tolerance": CLT_TOLERANCE, "passed": passed }),
    })
}

fn validate_ito(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, RunError> {
    let tl = Timeline::with_horizon(cfg.time, cfg.dt)?;
    let identity = C2Function::new(|x: f64| x, |_| 1.0, |_| 0.0);
    let square = C2Function::new(|x: f64| x * x, |x: f64| 2.0 * x, |_| 2.0);
    let cosine = C2Function::new(f64::cos, |x: f64| -x.sin(), |x: f64| -x.cos());
    let mut rows = Vec::with_capacity(cfg.samples);
    let mut worst_exact: f64 = 0.0;
    let mut worst_cos: f64 = 0.0;
    for b in 0..cfg.samples as u64 {
        let path = sample_path_keyed(&tl, 1, StreamKey::new(cfg.seed, 0, b));
        let w = InternalProcess::from_trajectory(&walk_position(&path, &tl, &[0.0])?);
        let end = w.last()[0];
        let r_id = ito_residual(&identity, &w)?;
        let r_sq = ito_residual(&square, &w)?;
        let r_cos = ito_residual(&cosine, &w)?;
        worst_exact = worst_exact.max(r_id).max(r_sq / (1.0 + end * end));
        worst_cos = worst_cos.max(r_cos);
        rows.push(vec![b.to_string(), num(end), num(r_id), num(r_sq), num(r_cos)]);
    }
    out.write(
        "ito.csv",
        &csv_table(
            ["path", "end", "residual_x", "residual_x2", "residual_cos"].map(String::from).to_vec(),
            rows,
        )?,
    )?;
    let passed = worst_exact <= ITO_TOLERANCE;
    Ok(Outcome {
        passed,
        rng: json!({ "generator": "ChaCha8", "seed": cfg.seed, "lane": 0, "batches": format!("one per path, 0..{}", cfg.samples) }),
        summary: json!({
            "paths": cfg.samples,
            "steps": tl.steps,
            "max_residual_polynomial": worst_exact,
            "max_residual_cos": worst_cos,
            "tolerance": ITO_TOLERANCE,
            "passed": passed,
        }),
    })
}

fn binomial(m: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (m - i) / (i + 1))
}

fn validate_density(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, RunError> {
    let (m, n) = (cfg.steps, cfg.dim);
    let tl = Timeline::new(cfg.dt, m)?;
    let density = empirical_density(&tl, &vec![0.0; n], DensityMethod::Enumerate)?;
    let scale = 2f64.powi((m * n) as i32);
    let mut worst: f64 = 0.0;
    let mut header = axis_header("k", n);
    header.extend(axis_header("x", n));
    header.extend(["enumerated", "binomial"].map(String::from));
    let mut rows = Vec::new();
    for (offset, &p) in &density.probabilities {
        let count: u64 = offset
            .iter()
            .map(|&k| {
                let up = (m as i64 + k) / 2;
                if (m as i64 + k) % 2 == 0 && (0..=m as i64).contains(&up) {
                    binomial(m as u64, up as u64)
                } else {
                    0
                }
            })
            .product();
        let exact = count as f64 / scale;
        worst = worst.max((p - exact).abs());
        let mut row: Vec<String> = offset.iter().map(|k| k.to_string()).collect();
        row.extend(density.position(offset).into_iter().map(num));
        row.push(num(p));
        row.push(num(exact));
        rows.push(row);
    }
    out.write("density.csv", &csv_table(header, rows)?)?;
    let support = density.probabilities.len();
    let expected_support = (m + 1).pow(n as u32);
    let passed = worst == 0.0 && support == expected_support;
    Ok(Outcome {
        passed,
        rng: json!({ "used": false }),
        summary: json!({
            "steps": m,
            "dim": n,
            "support": support,
            "expected_support": expected_support,
            "max_abs_gap": worst,
            "total_mass": density.total(),
            "passed": passed,
        }),
    })
}
