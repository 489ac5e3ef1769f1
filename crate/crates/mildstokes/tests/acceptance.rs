//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::f64::consts::PI;
use std::path::PathBuf;

use mildstokes::cli::{cmd_solve, RayArgs, SolveArgs};
use mildstokes::formats::read_samples;
use mildstokes::verify::{
    b_alpha_system, egamma_residual, gamma_ratio_residual, log_gamma_ratio, normalized_deviation, rank_one_section,
    trivial_datum,
};
use mildstokes_core::diffmod::{graded_module, split_by_eigenvalues, DiffSystem, FormalDatum, FormalPiece};
use mildstokes_core::exponents::{leq, lt, stokes_directions, Arc, Exponent, GrowthClass};
use mildstokes_core::linalg::{self, CMat, CVec};
use mildstokes_core::sectorial::{
    classify_growth, classify_log_magnitudes, classify_magnitudes, lambda_op, lambda_residual, ray_points,
    LambdaParams, RaySamples,
};
use mildstokes_core::series::MatrixSeries;
use mildstokes_core::special::reflection_residual;
use mildstokes_core::stokes::{
    default_covering, fit_limit, filtration_level, grading, overlap_points, overlap_sigma, rh_assemble,
    u_shift_level, CocycleParams, StokesCocycle,
};
use mildstokes_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_PI: f64 = 2.0 * PI;

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn criterion_1() -> Outcome {
    const TOL: f64 = 1e-10;
    let mut worst: f64 = 0.0;
    for alpha in [cx(0.5, 0.0), cx(0.3, 0.2)] {
        for sigma in [0.0, 0.5, -0.5] {
            worst = worst.max(gamma_ratio_residual(alpha, &ray_points(sigma, 5.0, 40.0, 50)));
        }
    }
    outcome(worst < TOL, format!("max relative residual {worst:.2e} < {TOL:.0e}"))
}

fn criterion_2() -> Outcome {
    const TOL: f64 = 1e-10;
    let r = egamma_residual(0.2, 5.0, 30.0, 50);
    outcome(r < TOL, format!("max relative residual {r:.2e} < {TOL:.0e}"))
}

fn criterion_3() -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = cx(rng.gen_range(-10.0..10.0), rng.gen_range(-5.0..5.0));
        worst = worst.max(reflection_residual(s).unwrap_or(f64::INFINITY));
    }
    outcome(worst < TOL, format!("max relative gap {worst:.2e} < {TOL:.0e} over 100 points"))
}

fn criterion_4() -> Outcome {
    const RES_TOL: f64 = 1e-8;
    const ORACLE_TOL: f64 = 1e-6;
    let fd = trivial_datum();
    let f = |s: Complex64| CVec::from_element(1, (-s).exp());
    let pts = ray_points(0.0, 2.0, 20.0, 20);
    let out = match lambda_op(&fd, &f, &pts, 0.0, &LambdaParams::default()) {
        Ok(o) => o,
        Err(e) => return outcome(false, e.to_string()),
    };
    let res = lambda_residual(&fd, &f, &out).unwrap_or(f64::INFINITY);
    let oracle = pts
        .iter()
        .zip(&out.samples.values)
        .map(|(&s, v)| {
            let t = -(-s).exp() / (1.0 - (-1.0f64).exp());
            (v[(0, 0)] - t).norm() / t.norm()
        })
        .fold(0.0, f64::max);
    outcome(
        res < RES_TOL && oracle < ORACLE_TOL,
        format!("identity residual {res:.2e} < {RES_TOL:.0e}, telescoping deviation {oracle:.2e} < {ORACLE_TOL:.0e}"),
    )
}

type Input = (&'static str, fn(Complex64) -> Complex64);

fn decaying_inputs() -> [Input; 5] {
    [
        ("e^-s", |s| (-s).exp()),
        ("e^-2s", |s| (-2.0 * s).exp()),
        ("s^2 e^-s", |s| s * s * (-s).exp()),
        ("e^-s/s", |s| (-s).exp() / s),
        ("e^-s/2", |s| (-0.5 * s).exp()),
    ]
}

fn test_modules() -> Vec<(&'static str, FormalDatum)> {
    let one = |a: Exponent, g: f64| FormalDatum::new(vec![FormalPiece::new(a, CMat::from_element(1, 1, cx(g, 0.0)))]);
    vec![
        ("trivial", trivial_datum()),
        ("B_1/2", one(Exponent::zero(), -0.5)),
        ("a = -s", one(Exponent::linear(cx(-1.0, 0.0)), 0.0)),
    ]
}

fn criterion_5() -> Outcome {
    let sigma = 0.3;
    let pts = ray_points(sigma, 4.0, 30.0, 16);
    let mut bad = Vec::new();
    let mut count = 0;
    for (mname, fd) in test_modules() {
        for (fname, g) in decaying_inputs() {
            count += 1;
            let input = RaySamples::from_fn(sigma, &pts, |s| CMat::from_element(1, 1, g(s)));
            if classify_growth(&input).map(|x| x.class) != Ok(GrowthClass::RapidDecay) {
                bad.push(format!("{fname} is not rapidly decaying"));
                continue;
            }
            let f = move |s: Complex64| CVec::from_element(1, g(s));
            let class = lambda_op(&fd, &f, &pts, sigma, &LambdaParams::default())
                .map_err(|e| e.to_string())
                .and_then(|o| classify_growth(&o.samples).map_err(|e| e.to_string()))
                .map(|x| x.class);
            if class != Ok(GrowthClass::RapidDecay) {
                bad.push(format!("{mname}/{fname}: {class:?}"));
            }
        }
    }
    let detail = if bad.is_empty() { String::new() } else { format!("; {}", bad.join(", ")) };
    outcome(bad.is_empty(), format!("{}/{count} inputs and images rapidly decaying{detail}", count - bad.len()))
}

fn random_complex(rng: &mut ChaCha8Rng, r: f64) -> Complex64 {
    cx(rng.gen_range(-r..r), rng.gen_range(-r..r))
}

fn random_system(rng: &mut ChaCha8Rng) -> DiffSystem {
    let eig: Vec<Complex64> = loop {
        let e: Vec<Complex64> = (0..3).map(|_| random_complex(rng, 2.0)).collect();
        let sep = (0..3).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| (e[i] - e[j]).norm()).fold(f64::INFINITY, f64::min);
        if sep >= 0.3 && e.iter().all(|x| x.norm() >= 0.5) {
            break e;
        }
    };
    let p = loop {
        let p = CMat::from_fn(3, 3, |_, _| random_complex(rng, 1.0));
        if linalg::determinant(&p).norm() > 0.2 {
            break p;
        }
    };
    let a0 = &p * CMat::from_diagonal(&CVec::from_vec(eig)) * linalg::inverse(&p).unwrap();
    let mut coeffs = vec![a0];
    for k in 1..=16 {
        coeffs.push(if k <= 3 { CMat::from_fn(3, 3, |_, _| random_complex(rng, 1.0)) } else { CMat::zeros(3, 3) });
    }
    DiffSystem::new(MatrixSeries::new(1, 0, coeffs)).with_exact(true)
}

fn criterion_6() -> Outcome {
    const ORDER: i64 = 12;
    const REL_TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_off: f64 = 0.0;
    let mut worst_gauge: f64 = 0.0;
    let mut worst_raw: f64 = 0.0;
    let mut errors = Vec::new();
    for _ in 0..20 {
        let sys = random_system(&mut rng);
        let norm = sys.matrix().max_abs();
        let sp = match split_by_eigenvalues(&sys, ORDER) {
            Ok(sp) => sp,
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        worst_off = worst_off.max(sp.a_prime.truncate(ORDER).off_block_max(&sp.sizes) / norm);
        let full = sp.full_gauge();
        let lhs = sys.matrix().checked_mul(&full.phi_substitute().unwrap()).unwrap();
        let rhs = full.checked_mul(&sp.a_prime).unwrap();
        let d = lhs.checked_sub(&rhs).unwrap().truncate(ORDER).max_abs();
        // gauge coefficients grow factorially, so the residual is measured
        // against the size of the products it cancels
        worst_raw = worst_raw.max(d / norm);
        worst_gauge = worst_gauge.max(d / (norm * full.max_abs()));
    }
    outcome(
        errors.is_empty() && worst_off < REL_TOL && worst_gauge < REL_TOL,
        format!(
            "off-diagonal {worst_off:.2e} of |A|, gauge identity {worst_gauge:.2e} of |A||TH| ({worst_raw:.2e} of |A|), < {REL_TOL:.0e} through order {ORDER}{}",
            if errors.is_empty() { String::new() } else { format!("; errors: {}", errors.join(", ")) }
        ),
    )
}

fn random_exponent(rng: &mut ChaCha8Rng) -> Exponent {
    let m = rng.gen_range(1..=3);
    Exponent::new((0..m).map(|_| random_complex(rng, 2.0)).collect())
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    d.min(TWO_PI - d)
}

fn criterion_7() -> Outcome {
    const MIN_GAP: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let radii: Vec<f64> = (0..48).map(|k| 10.0 * 1e5f64.powf(k as f64 / 47.0)).collect();
    let mut agree = 0;
    let mut bad = Vec::new();
    for _ in 0..100 {
        let (a, b) = (random_exponent(&mut rng), random_exponent(&mut rng));
        let stokes = stokes_directions(&a, &b).unwrap();
        let sigma = loop {
            let s = rng.gen_range(-PI..PI);
            if stokes.iter().all(|&d| angular_distance(s, d) >= MIN_GAP) {
                break s;
            }
        };
        let arc = Arc::from_sigma(sigma - 0.5 * MIN_GAP, sigma + 0.5 * MIN_GAP).unwrap();
        let (sym_leq, sym_lt) = (leq(&a, &b, &arc).unwrap(), lt(&a, &b, &arc).unwrap());
        let d = a.checked_sub(&b).unwrap();
        let samples: Vec<(f64, f64)> =
            radii.iter().map(|&r| (r, d.eval_log(cx(r.ln(), sigma)).re)).collect();
        let fit = classify_log_magnitudes(&samples).unwrap();
        let emp_leq = fit.class != GrowthClass::Growth;
        let emp_lt = fit.class == GrowthClass::RapidDecay;
        if emp_leq == sym_leq && emp_lt == sym_lt {
            agree += 1;
        } else {
            bad.push(format!("a = {a}, b = {b}, sigma = {sigma:.4}: fit {} (rate {:.2e})", fit.class, fit.mu));
        }
    }
    outcome(agree == 100, format!("{agree}/100 pairs agree{}", if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }))
}

fn criterion_8() -> Outcome {
    const REL: f64 = 0.2;
    let alpha = 0.5;
    let sys = b_alpha_system(cx(alpha, 0.0), 16);
    let fs = mildstokes_core::diffmod::formal_solution(&sys, 16).unwrap();
    let cov = default_covering(&fs.datum).unwrap();
    let params = CocycleParams::default();
    let mut lines = Vec::new();
    let mut ok = true;
    let q = Complex64::from_polar(1.0, TWO_PI * alpha);
    for k in 0..cov.len() {
        let sigma = overlap_sigma(&cov, k, true);
        let pts = overlap_points(&sys, &cov, k, &params);
        let ratio: Vec<CMat> = pts
            .iter()
            .map(|&s| {
                let u = (cx(0.0, TWO_PI) * s).exp();
                CMat::from_element(1, 1, (1.0 - u) / (1.0 - q * u))
            })
            .collect();
        let (limit, _) = fit_limit(&pts, &ratio);
        let dev: Vec<(f64, f64)> = pts.iter().zip(&ratio).map(|(s, r)| (s.norm(), (r - &limit)[(0, 0)].norm())).collect();
        let fit = classify_magnitudes(&dev, 1e-12).unwrap();
        let expected = -TWO_PI * sigma.sin().abs();
        let close = ((fit.mu - expected) / expected).abs() < REL;
        ok &= close && fit.class == GrowthClass::RapidDecay;
        lines.push(format!("overlap {k}: rate {:.4} vs {:.4}", fit.mu, expected));
    }
    let cert = mildstokes_core::stokes::compute_cocycle(&sys, &fs, &cov, &params);
    let certified = cert.as_ref().map(|c| c.passed()).unwrap_or(false);
    ok &= certified;
    lines.push(format!("certification {}", if certified { "passed" } else { "failed" }));
    outcome(ok, lines.join(", "))
}

fn criterion_9() -> Outcome {
    const TOL: f64 = 1e-8;
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/b_half.dsys");
    let out = std::env::temp_dir().join(format!("mildstokes-acc9-{}.csv", std::process::id()));
    let args = SolveArgs {
        path,
        theta: Some(0.0),
        ray: RayArgs { smin: Some(10.0), smax: Some(40.0), n: Some(32) },
        out: Some(out.clone()),
    };
    if let Err(e) = cmd_solve(&args, &mut std::io::sink(), &mut std::io::sink()) {
        return outcome(false, e.to_string());
    }
    let samples = read_samples(std::fs::File::open(&out).unwrap()).unwrap();
    std::fs::remove_file(&out).ok();
    let vals: Vec<Complex64> = samples.values.iter().map(|v| v[(0, 0)]).collect();
    let exact: Vec<Complex64> = samples.points.iter().map(|&s| log_gamma_ratio(s, cx(0.5, 0.0)).exp()).collect();
    let dev = normalized_deviation(&vals, &exact);
    outcome(dev < TOL, format!("max relative error {dev:.2e} < {TOL:.0e} over {} samples", vals.len()))
}

fn criterion_10() -> Outcome {
    let sigmas = [0.3, -0.3, 1.2, -1.2];
    let mut total = 0;
    let mut bad = Vec::new();
    for (name, fd) in test_modules() {
        let sys = graded_module(&fd, 16).unwrap();
        let a = &fd.pieces[0].exponent;
        for sigma in sigmas {
            let pts = ray_points(sigma, 10.0, 40.0, 24);
            let g = match rank_one_section(&sys, -sigma, &pts) {
                Ok(g) => g,
                Err(e) => {
                    total += 5;
                    bad.push(format!("{name}, sigma {sigma}: {e}"));
                    continue;
                }
            };
            for n in -2i64..=2 {
                total += 1;
                let shifted: Vec<CMat> = pts
                    .iter()
                    .zip(&g.values)
                    .map(|(&s, v)| v * (cx(0.0, TWO_PI * n as f64) * s).exp())
                    .collect();
                let y = RaySamples { sigma, points: pts.clone(), values: shifted, shifted: None };
                let got = classify_growth(&y).map(|f| f.class);
                let predicted = u_shift_level(&filtration_level(a), n).growth_class(sigma);
                if got != Ok(predicted) {
                    bad.push(format!("{name}, sigma {sigma}, n {n}: {got:?} vs {predicted}"));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{}/{total} agree{}", total - bad.len(), if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }))
}

fn criterion_11() -> Outcome {
    let files = common::corpus();
    let rt = common::round_trip_failures(&files);
    let corrupted = common::corruptions(&files, 11);
    let located = corrupted
        .iter()
        .filter(|(_, site, res)| res.as_ref().err().is_some_and(|e| common::within(*site, e, 2)))
        .count();
    outcome(
        files.len() == 50 && rt.is_empty() && located == corrupted.len(),
        format!(
            "{}/{} round-trip, {located}/{} corruptions located within 2 characters{}",
            files.len() - rt.len(),
            files.len(),
            corrupted.len(),
            if rt.is_empty() { String::new() } else { format!("; {}", rt.join("; ")) }
        ),
    )
}

fn random_datum(rng: &mut ChaCha8Rng) -> FormalDatum {
    let mut pieces: Vec<FormalPiece> = Vec::new();
    let count = rng.gen_range(1..=3);
    while pieces.len() < count {
        let a = if pieces.is_empty() && rng.gen_bool(0.3) { Exponent::zero() } else { random_exponent(rng) };
        if pieces.iter().any(|p| p.exponent.same_orbit(&a)) {
            continue;
        }
        let r = rng.gen_range(1..=2);
        let g = CMat::from_fn(r, r, |i, j| if i <= j { random_complex(rng, 0.5) } else { cx(0.0, 0.0) });
        pieces.push(FormalPiece::new(a, g));
    }
    FormalDatum::new(pieces)
}

fn criterion_12() -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    let mut datums: Vec<FormalDatum> = (0..20).map(|_| random_datum(&mut rng)).collect();
    // two pieces in one orbit merge into one graded entry
    let a = Exponent::linear(cx(-1.0, 0.5));
    datums.push(FormalDatum::new(vec![
        FormalPiece::new(a.clone(), CMat::from_element(1, 1, cx(0.2, 0.0))),
        FormalPiece::new(a.shift(1), CMat::from_element(1, 1, cx(-0.1, 0.3))),
    ]));
    for (idx, fd) in datums.iter().enumerate() {
        let cov = default_covering(fd).unwrap();
        let fm = rh_assemble(fd, &StokesCocycle::identity(fd, &cov)).unwrap();
        let gd = grading(&fm.cocycle);
        let mut reps: Vec<(Exponent, Vec<CMat>)> = Vec::new();
        for p in &fd.pieces {
            let m = p.exponent.ramification() as f64;
            let mono = linalg::expm(&(&p.g * cx(0.0, TWO_PI * m)));
            match reps.iter_mut().find(|(r, _)| r.same_orbit(&p.exponent)) {
                Some((_, blocks)) => blocks.push(mono),
                None => reps.push((p.exponent.canonicalize().0, vec![mono])),
            }
        }
        if reps.len() != gd.entries.len() {
            bad.push(format!("datum {idx}: {} orbits vs {}", reps.len(), gd.entries.len()));
            continue;
        }
        for ((rep, blocks), e) in reps.iter().zip(&gd.entries) {
            let n: usize = blocks.iter().map(|b| b.nrows()).sum();
            let mut expected = CMat::zeros(n, n);
            let mut off = 0;
            for b in blocks {
                expected.view_mut((off, off), (b.nrows(), b.nrows())).copy_from(b);
                off += b.nrows();
            }
            if !rep.approx_eq(&e.exponent) || e.rank != n || e.monodromy.shape() != (n, n) {
                bad.push(format!("datum {idx}: entry {} mismatch", e.exponent));
                continue;
            }
            worst = worst.max(linalg::max_abs(&(&e.monodromy - &expected)));
        }
    }
    outcome(
        bad.is_empty() && worst < TOL,
        format!("{} data, max monodromy error {worst:.2e} < {TOL:.0e}{}", datums.len(), if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("Gamma ratio flat section", criterion_1),
        ("s^-s Gamma(s) flat section", criterion_2),
        ("reflection formula", criterion_3),
        ("Lambda identity and telescoping oracle", criterion_4),
        ("rapid decay preserved by Lambda", criterion_5),
        ("formal reduction of random 3x3 systems", criterion_6),
        ("order relation vs growth fits", criterion_7),
        ("B_1/2 cocycle decay rates", criterion_8),
        ("solve reproduces Gamma ratio", criterion_9),
        ("u-shift equivariance", criterion_10),
        ("parser corpus", criterion_11),
        ("graded round trip on elementary modules", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!("criterion {:>2} {}: {} ({})", i + 1, if o.passed { "PASS" } else { "FAIL" }, name, o.detail);
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
