//! End-to-end acceptance gate. Each criterion prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

use std::time::Instant;

use genbrown::calculus::{ito_residual, C2Function, InternalProcess};
use genbrown::exit_time::{solve_dirichlet_scalar, ExitConfig, LatticeDomain};
use genbrown::fd::{march, relative_l2, stable_step, STABILITY_FACTOR};
use genbrown::feynman_kac::{
    closed_form_spectrum, mean_preservation_check, propagate_spectrum, solve_monte_carlo,
    CauchyProblem, McConfig, Sampling,
};
use genbrown::mode_algebra::{build_mode_matrix, propagator, CoefficientTensor, ModeSpectrum, MultiIndex};
use genbrown::rng::{SignSource, StreamKey};
use genbrown::torus_fourier::{forward, SpectralField, TorusGrid};
use genbrown::variable_coeff::{enumerated_mean_factors, evolve_generalized, CoefficientField};
use genbrown::walk::{
    clt_check, empirical_density, enumerate_paths, mode_factor_closed_form, mode_factor_sample, sample_path,
    sample_path_keyed, walk_position, CltRow, DensityMethod, Timeline,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_core::RngCore;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

fn complex_max(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |a: f64, z| a.max(z.norm()))
}

fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn scalar_mode(lambda: f64) -> ModeSpectrum {
    ModeSpectrum::from_matrix(MultiIndex(vec![1]), DMatrix::from_element(1, 1, lambda)).unwrap()
}

fn cosine_problem(time: f64) -> CauchyProblem {
    let mut f = SpectralField::zeros(1, 1, 1);
    f.set_real_mode(&MultiIndex(vec![1]), &[Complex64::new(0.5, 0.0)]).unwrap();
    CauchyProblem::new(CoefficientTensor::scalar(1, 1.0), f, time).unwrap()
}

fn mode_factor_convergence() -> Outcome {
    let spec = scalar_mode(1.0);
    let gap = |dt: f64| {
        let tl = Timeline::with_horizon(0.25, dt).unwrap();
        (mode_factor_closed_form(&spec, &tl)[(0, 0)] - (-0.25f64).exp()).abs()
    };
    let (coarse, fine) = (gap(1e-3), gap(5e-4));
    let ratio = coarse / fine;
    outcome(
        coarse <= 2e-4 && (1.6..=2.4).contains(&ratio),
        format!("gap {coarse:.3e} at dt=1e-3, halving ratio {ratio:.3}"),
    )
}

fn matrix_mode_factors() -> Outcome {
    let tensor = CoefficientTensor::lame(2, 1.0);
    let tl = Timeline::with_horizon(0.1, 1e-3).unwrap();
    let mut worst: f64 = 0.0;
    for alpha in MultiIndex::cube(2, 4) {
        let spec = ModeSpectrum::new(&tensor, &alpha).unwrap();
        let gap = max_abs(&(mode_factor_closed_form(&spec, &tl) - propagator(&spec, 0.1).unwrap()));
        worst = worst.max(gap);
    }
    outcome(worst <= 5e-3, format!("worst max-norm gap {worst:.3e} over 81 modes"))
}

fn scalar_monte_carlo() -> Outcome {
    let p = cosine_problem(0.01);
    let points: Vec<Vec<f64>> = (0..16).map(|k| vec![k as f64 / 16.0 + 1.0 / 32.0]).collect();
    let r = solve_monte_carlo(&p, &points, &McConfig::random(1e-3, 10_000, 20_240_601)).unwrap();
    let z = r.max_z_score();
    let imag = r.max_imag();
    outcome(
        z <= 3.0 && imag <= 1e-10,
        format!("max |mc - oracle| / se = {z:.3} at 16 points, max imag {imag:.1e}"),
    )
}

fn system_cross_validation() -> Outcome {
    let mut rng = StreamKey::aux(4, 0, 0).rng();
    let data = SpectralField::random_real(2, 2, 4, 4, &mut rng);
    let tensor = CoefficientTensor::lame(2, 1.0);
    let t = 0.01;
    let grid = TorusGrid::new(2, 64).unwrap();
    let problem = CauchyProblem::new(tensor.clone(), data.clone(), t).unwrap();

    let (initial, _) = data.inverse_on_grid(grid).unwrap();
    let (exact, _) = propagate_spectrum(&problem).unwrap().inverse_on_grid(grid).unwrap();
    let fd = march(&tensor, &initial, t, stable_step(&tensor, &grid, STABILITY_FACTOR)).unwrap();
    let rel = relative_l2(&fd, &exact).unwrap();

    let points: Vec<Vec<f64>> = (0..9).map(|k| vec![(k / 3) as f64 / 3.0 + 0.1, (k % 3) as f64 / 3.0 + 0.05]).collect();
    let r = solve_monte_carlo(&problem, &points, &McConfig::random(1e-4, 20_000, 4)).unwrap();
    let mut worst: f64 = 0.0;
    for ((mc, or), se) in r.mc_values.iter().zip(&r.oracle_values).zip(&r.std_errors) {
        for ((a, b), s) in mc.iter().zip(or).zip(se) {
            worst = worst.max((a.re - b.re).abs() / s);
        }
    }
    let imag = r.max_imag();
    outcome(
        rel <= 1e-2 && worst <= 3.0 && imag <= 1e-10,
        format!("FD relative L2 {rel:.3e}; MC max z {worst:.3} at 9 points (dt=1e-4); max imag {imag:.1e}"),
    )
}

fn binomial(m: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (m - i) / (i + 1))
}

fn brute_force_equivalence() -> Outcome {
    let dt = 1e-3;
    let mut density_exact = true;
    let mut factor_gap: f64 = 0.0;
    let mut solver_gap: f64 = 0.0;
    let spec = ModeSpectrum::new(&CoefficientTensor::scalar(1, 1.0), &MultiIndex(vec![3])).unwrap();
    let mut f = SpectralField::zeros(1, 1, 3);
    f.set_real_mode(&MultiIndex(vec![0]), &[Complex64::new(0.2, 0.0)]).unwrap();
    f.set_real_mode(&MultiIndex(vec![1]), &[Complex64::new(0.5, -0.1)]).unwrap();
    f.set_real_mode(&MultiIndex(vec![3]), &[Complex64::new(-0.3, 0.4)]).unwrap();
    let points: Vec<Vec<f64>> = (0..7).map(|k| vec![k as f64 / 7.0]).collect();
    for m in 1..=10usize {
        let tl = Timeline::new(dt, m).unwrap();
        let d = empirical_density(&tl, &[0.0], DensityMethod::Enumerate).unwrap();
        for (k, p) in &d.probabilities {
            let up = ((m as i64 + k[0]) / 2) as u64;
            density_exact &= *p == binomial(m as u64, up) as f64 / (1u64 << m) as f64;
        }

        let mut sum = Complex64::new(0.0, 0.0);
        for path in enumerate_paths(m, 1).unwrap() {
            sum += mode_factor_sample(&spec, &tl, &path).unwrap()[(0, 0)];
        }
        let mean = sum / (1u64 << m) as f64;
        factor_gap = factor_gap.max((mean - mode_factor_closed_form(&spec, &tl)[(0, 0)]).norm());

        let problem = CauchyProblem::new(CoefficientTensor::scalar(1, 1.0), f.clone(), tl.horizon()).unwrap();
        let r = solve_monte_carlo(&problem, &points, &McConfig::enumerate(dt)).unwrap();
        let direct = closed_form_spectrum(&problem, &tl).unwrap();
        for (x, v) in points.iter().zip(&r.mc_values) {
            solver_gap = solver_gap.max((v[0] - direct.evaluate_complex(x)[0]).norm());
        }
    }
    outcome(
        density_exact && factor_gap <= 1e-14 && solver_gap <= 1e-14,
        format!("density exact: {density_exact}; factor gap {factor_gap:.1e}; solver gap {solver_gap:.1e} (M = 1..10)"),
    )
}

fn clt_validator() -> Outcome {
    let rows = clt_check(10_000, 0.5).unwrap();
    let worst = rows.iter().map(CltRow::gap).fold(0.0, f64::max);
    outcome(worst <= 1e-3, format!("max local-CLT gap {worst:.3e} over {} values of m", rows.len()))
}

fn walk_process(tl: &Timeline, key: StreamKey) -> InternalProcess {
    let path = sample_path_keyed(tl, 1, key);
    InternalProcess::from_trajectory(&walk_position(&path, tl, &[0.0]).unwrap())
}

fn ito_suite() -> Outcome {
    let tl = Timeline::new(1e-3, 1000).unwrap();
    let id = C2Function::new(|x: f64| x, |_| 1.0, |_| 0.0);
    let sq = C2Function::new(|x: f64| x * x, |x: f64| 2.0 * x, |_| 2.0);
    let mut low: f64 = 0.0;
    for b in 0..100 {
        let w = walk_process(&tl, StreamKey::new(7, 0, b));
        let scale = 1.0 + w.last()[0].powi(2);
        low = low.max(ito_residual(&id, &w).unwrap()).max(ito_residual(&sq, &w).unwrap() / scale);
    }
    let cosine = C2Function::new(f64::cos, |x: f64| -x.sin(), |x: f64| -x.cos());
    let worst = |dt: f64, lane: u64| {
        let tl = Timeline::with_horizon(1.0, dt).unwrap();
        (0..100)
            .map(|b| ito_residual(&cosine, &walk_process(&tl, StreamKey::new(7, lane, b))).unwrap())
            .fold(0.0, f64::max)
    };
    let ratio = worst(1e-3, 1) / worst(5e-4, 2);
    outcome(
        low <= 1e-12 && (1.2..=4.0).contains(&ratio),
        format!("max residual for x, x^2: {low:.1e}; cosine halving ratio {ratio:.3}"),
    )
}

/// Dense solve of the diagonal-step Dirichlet problem on a box.
fn box_oracle(lo: &[i64], hi: &[i64], g: impl Fn(&[i64]) -> f64) -> impl Fn(&[i64]) -> f64 {
    let n = lo.len();
    let mut interior: Vec<Vec<i64>> = vec![vec![]];
    for d in 0..n {
        interior = interior
            .into_iter()
            .flat_map(|p| {
                (lo[d] + 1..hi[d]).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    let m = interior.len();
    let moves: Vec<Vec<i64>> = (0..1u32 << n)
        .map(|c| (0..n).map(|j| if (c >> j) & 1 == 1 { 1 } else { -1 }).collect())
        .collect();
    let w = 1.0 / moves.len() as f64;
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (r, p) in interior.iter().enumerate() {
        for d in &moves {
            let q: Vec<i64> = p.iter().zip(d).map(|(x, s)| x + s).collect();
            match interior.iter().position(|z| *z == q) {
                Some(c) => a[(r, c)] -= w,
                None => b[r] += w * g(&q),
            }
        }
    }
    let u = a.lu().solve(&b).unwrap();
    move |p: &[i64]| u[interior.iter().position(|z| z == p).unwrap()]
}

fn exit_time_scalar() -> Outcome {
    let m = 10;
    let interval = LatticeDomain::interval(m).unwrap();
    let k = 3;
    let hit = solve_dirichlet_scalar(&interval, |x| if x[0] > 0.5 { 1.0 } else { 0.0 }, &[k], &ExitConfig::new(100_000, 81)).unwrap();
    let z1 = (hit.value - k as f64 / m as f64).abs() / hit.std_error;

    let (lo, hi) = (vec![0, 0], vec![10, 8]);
    let h = 0.1;
    let rect = LatticeDomain::boxed(vec![0.0, 0.0], h, lo.clone(), hi.clone()).unwrap();
    let oracle = box_oracle(&lo, &hi, |q| h * q[0] as f64);
    let mut z2: f64 = 0.0;
    for (i, p) in [[1, 1], [5, 4], [8, 2], [3, 6], [9, 7]].iter().enumerate() {
        let est = solve_dirichlet_scalar(&rect, |x| x[0], p, &ExitConfig::new(100_000, 82 + i as u64)).unwrap();
        z2 = z2.max((est.value - oracle(p)).abs() / est.std_error);
    }
    outcome(
        z1 <= 3.0 && z2 <= 3.0,
        format!("interval z {z1:.3} (S=1e5); rectangle max z {z2:.3} at 5 points (S=1e5)"),
    )
}

fn invariant_sweep() -> Outcome {
    let mut rng = StreamKey::aux(9, 9, 0).rng();
    let mut failures = Vec::new();
    for trial in 0..100u64 {
        let n = 1 + (rng.next_u64() % 2) as usize;
        let radius = 1 + (rng.next_u64() % 3) as usize;

        // conjugate symmetry and Parseval through a grid round trip
        let data = SpectralField::random_real(n, n, radius, radius, &mut rng);
        let g = 2 * radius + 1 + (rng.next_u64() % 4) as usize;
        let (grid_field, _) = data.inverse_on_grid(TorusGrid::new(n, g).unwrap()).unwrap();
        let back = forward(&grid_field, radius).unwrap();
        if back.conjugate_symmetry_defect() > 1e-12 {
            failures.push(format!("trial {trial}: conjugate symmetry"));
        }
        if (back.energy() - grid_field.mean_square()).abs() > 1e-12 * (1.0 + back.energy()) {
            failures.push(format!("trial {trial}: Parseval"));
        }

        // quadratic variation
        let steps = 1 + (rng.next_u64() % 200) as usize;
        let tl = Timeline::new(1e-4 + 1e-2 * uniform(&mut rng), steps).unwrap();
        let mut signs = SignSource::new(StreamKey::new(trial, 1, 0).rng());
        let path = sample_path(&tl, n, &mut signs);
        let traj = walk_position(&path, &tl, &vec![0.0; n]).unwrap();
        if traj.quadratic_variation().iter().any(|q| (q - 2.0 * tl.horizon()).abs() > 1e-12) {
            failures.push(format!("trial {trial}: quadratic variation"));
        }

        // symmetry of mode matrices and unitarity of factors
        let tensor = CoefficientTensor::lame(n, 0.2 + 1.8 * uniform(&mut rng));
        let alpha = MultiIndex((0..n).map(|_| (rng.next_u64() % 9) as i64 - 4).collect());
        if build_mode_matrix(&tensor, &alpha).unwrap() != build_mode_matrix(&tensor, &alpha.neg()).unwrap() {
            failures.push(format!("trial {trial}: A(-alpha) != A(alpha)"));
        }
        let spec = ModeSpectrum::new(&tensor, &alpha).unwrap();
        let fac = mode_factor_sample(&spec, &tl, &path).unwrap();
        if complex_max(&(&fac * fac.adjoint() - DMatrix::<Complex64>::identity(n, n))) > 1e-12 {
            failures.push(format!("trial {trial}: unitarity"));
        }

        // mean preservation
        let problem = CauchyProblem::new(tensor.clone(), data, 0.02 * uniform(&mut rng)).unwrap();
        if !mean_preservation_check(&problem, None).unwrap().oracle_exact() {
            failures.push(format!("trial {trial}: mean preservation"));
        }

        // seed and worker-count determinism
        let cfg = McConfig {
            dt: 1e-3,
            sampling: Sampling::Random {
                samples: 40,
                seed: trial,
                batch: 4,
            },
        };
        let small = problem.at_time(0.005).unwrap();
        let pts = vec![vec![0.3; n], vec![0.71; n]];
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| solve_monte_carlo(&small, &pts, &cfg).unwrap())
        };
        let (a, b, c) = (run(1), run(3), run(3));
        if a.mc_values != b.mc_values || b.mc_values != c.mc_values || a.std_errors != b.std_errors {
            failures.push(format!("trial {trial}: determinism"));
        }
    }
    let detail = if failures.is_empty() {
        "100 randomized trials clean".to_string()
    } else {
        format!("{} failures, first: {}", failures.len(), failures[0])
    };
    outcome(failures.is_empty(), detail)
}

fn variable_coefficient_reduction() -> Outcome {
    let tensor = CoefficientTensor::lame(2, 1.0);
    let field = CoefficientField::constant(tensor.clone(), 0.5).unwrap();
    let tl = Timeline::new(1e-3, 50).unwrap();
    let mut bitwise = true;
    for seed in 0..20 {
        let key = StreamKey::new(seed, 0, 0);
        let g = evolve_generalized(&field, &tl, &[0.2, 0.7], 2, key).unwrap();
        let path = sample_path_keyed(&tl, 2, key);
        for m in &g.modes {
            let spec = ModeSpectrum::new(&tensor, &m.alpha).unwrap();
            bitwise &= m.factor == mode_factor_sample(&spec, &tl, &path).unwrap();
        }
    }

    let modulated = CoefficientField::modulated_lame(2, 1.0, 0.25).unwrap();
    let means: Vec<_> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&dt| enumerated_mean_factors(&modulated, &Timeline::with_horizon(0.008, dt).unwrap(), &[0.1, 0.3], 1).unwrap())
        .collect();
    let mut monotone = true;
    let mut worst_ratio: f64 = 0.0;
    for pos in 0..means[0].len() {
        let d1 = complex_max(&(&means[0][pos] - &means[1][pos]));
        let d2 = complex_max(&(&means[1][pos] - &means[2][pos]));
        if d1 > 0.0 {
            monotone &= d2 < d1;
            worst_ratio = worst_ratio.max(d2 / d1);
        }
    }
    outcome(
        bitwise && monotone,
        format!("constant field bitwise: {bitwise}; self-convergence monotone: {monotone}, worst successive ratio {worst_ratio:.3}"),
    )
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 10] = [
        ("mode-factor convergence", 1.0, mode_factor_convergence),
        ("matrix mode factor vs propagator", 1.0, matrix_mode_factors),
        ("Monte-Carlo correctness", 30.0, scalar_monte_carlo),
        ("system solve cross-validation", 300.0, system_cross_validation),
        ("brute-force equivalence", 10.0, brute_force_equivalence),
        ("CLT validator", 1.0, clt_validator),
        ("Ito suite", 10.0, ito_suite),
        ("exit-time scalar", 120.0, exit_time_scalar),
        ("invariant sweep", 120.0, invariant_sweep),
        ("variable-coefficient reduction", 120.0, variable_coefficient_reduction),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let out = run();
        let secs = clock.elapsed().as_secs_f64();
        let pass = out.pass && secs < *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<34} {}  {} [{secs:.2}s / {budget}s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
