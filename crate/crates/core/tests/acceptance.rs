//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::time::{Duration, Instant};

use axon_relax::ibvp::{self, make_grid, perturbation_diagnostics, DiagnosticsSeries, Scheme, SchemeConfig};
use axon_relax::linalg::{max_norm, min_symmetric_eigenvalue};
use axon_relax::relaxation::{
    certify, detailed_balance_check, schur_reduction, spectrum_report, StabilityCertificate,
};
use axon_relax::steady::{steady_profile, steady_residual};
use axon_relax::system_model::{catalog, Catalog, SystemSpec};
use common::{bump_run, BumpRun};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random_systems() -> Vec<SystemSpec> {
    (0..500u64)
        .map(|seed| common::random_spec(2 + (seed % 7) as usize, seed))
        .collect()
}

fn identity_residuals(cert: &StabilityCertificate) -> [f64; 4] {
    let r = cert.lambda.len();
    let kn = max_norm(&cert.k);
    let a0 = DMatrix::from_diagonal(&cert.sym.a0);
    let mut s = DVector::zeros(r);
    s.rows_mut(1, r - 1).copy_from(&cert.split.s);
    let p = &cert.split.p;
    let recon = &a0 * &cert.k + cert.k.transpose() * &a0 + p.transpose() * DMatrix::from_diagonal(&s) * p;
    [
        max_norm(&recon) / kn,
        max_norm(&(p * p.transpose() - DMatrix::identity(r, r))),
        (&cert.k * &cert.kernel.xi).amax() / kn,
        cert.kernel.xi.min(),
    ]
}

fn kawashima(cert: &StabilityCertificate) -> f64 {
    let r = cert.lambda.len();
    let lam = DMatrix::from_diagonal(&cert.lambda);
    let mut proj = DVector::from_element(r, 1.0);
    proj[0] = 0.0;
    let p = &cert.split.p;
    let m = &cert.comp.h * &lam - &lam * &cert.comp.h - DMatrix::identity(r, r) * cert.comp.c
        + p.transpose() * DMatrix::from_diagonal(&proj) * p;
    min_symmetric_eigenvalue(&((&m + m.transpose()) * 0.5))
}

fn certificates() -> Vec<StabilityCertificate> {
    let mut specs = vec![common::counterexample()];
    specs.extend(random_systems());
    specs.iter().map(|s| certify(s).unwrap()).collect()
}

fn criterion_1(certs: &[StabilityCertificate]) -> Outcome {
    let mut worst = [0.0f64, 0.0, 0.0];
    let mut min_xi = f64::INFINITY;
    for cert in certs {
        let [a, b, c, d] = identity_residuals(cert);
        worst = [worst[0].max(a), worst[1].max(b), worst[2].max(c)];
        min_xi = min_xi.min(d);
    }
    let passed = worst[0] <= 1e-10 && worst[1] <= 1e-12 && worst[2] <= 1e-10 && min_xi > 0.0;
    outcome(
        passed,
        format!(
            "{} systems; reconstruction/|K| {:.2e}, |PP^T-I| {:.2e}, |K xi|/|K| {:.2e}, min xi {:.3e}",
            certs.len(),
            worst[0],
            worst[1],
            worst[2],
            min_xi
        ),
    )
}

fn criterion_2(certs: &[StabilityCertificate]) -> Outcome {
    let worst = certs.iter().map(kawashima).fold(f64::INFINITY, f64::min);
    let min_c = certs.iter().map(|c| c.comp.c).fold(f64::INFINITY, f64::min);
    let two = certify(&common::two_state()).unwrap();
    let passed = worst >= -1e-10 && min_c > 0.0 && two.comp.c >= 0.45;
    outcome(
        passed,
        format!(
            "min eigenvalue {worst:.2e}, min c {min_c:.3e}, two-state c {:.6}",
            two.comp.c
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut symmetric = [0usize; 2];
    let mut totals = [0usize; 2];
    for seed in 0..500u64 {
        let r = 2 + (seed % 2) as usize;
        let cert = certify(&common::random_spec(r, seed + 10_000)).unwrap();
        totals[r - 2] += 1;
        if cert.detailed_balance.max_asymmetry <= 1e-12 {
            symmetric[r - 2] += 1;
        }
    }
    let k = common::counterexample().effective_rates();
    let d = DVector::from_vec(vec![0.5, 1.0, 1.0, 2.0]);
    let fixture = detailed_balance_check(&k, &d, 1e-12).max_asymmetry;
    let passed = symmetric == totals && (fixture - 1.0).abs() <= 1e-12;
    outcome(
        passed,
        format!(
            "KD symmetric for {}/{} r=2 and {}/{} r=3 systems; 4x4 asymmetry {fixture}",
            symmetric[0], totals[0], symmetric[1], totals[1]
        ),
    )
}

fn criterion_4() -> Outcome {
    let systems = random_systems();
    let mut agree = 0;
    for spec in &systems {
        let k = spec.effective_rates();
        let schur = schur_reduction(&k, 1e-12).unwrap();
        let spectrum = spectrum_report(&k, 1e-12).unwrap();
        let det_nonzero = schur.det_k2.abs() > 1e-12 * max_norm(&k).powi(k.nrows() as i32 - 1);
        if (spectrum.zero_count == 1) == det_nonzero {
            agree += 1;
        }
    }
    outcome(agree == systems.len(), format!("{agree}/{} verdicts agree", systems.len()))
}

fn criterion_5() -> Outcome {
    let spec = common::two_state();
    let prof = steady_profile(&spec, &common::e1(2)).unwrap();
    let mut closed = 0.0f64;
    for j in 0..=1000 {
        let x = j as f64 * 0.01;
        let b = prof.eval(x).unwrap();
        let [b1, b2] = common::two_state_profile(x);
        closed = closed.max((b[0] - b1).abs()).max((b[1] - b2).abs());
    }

    let mut specs = vec![
        catalog(&Catalog::Counterexample4x4).unwrap(),
        catalog(&Catalog::TwoState { a: 1.0, b: 1.0 }).unwrap(),
        catalog(&Catalog::TwoState { a: 0.4, b: 2.5 }).unwrap(),
        common::three_cycle(),
    ];
    specs.extend((0..10u64).map(|seed| common::random_spec(2 + seed as usize % 7, seed)));
    let (mut residual, mut flux, mut rk4) = (0.0f64, 0.0f64, 0.0f64);
    for spec in &specs {
        let r = spec.dim();
        let b0 = DVector::from_fn(r, |i, _| 1.0 / (i + 1) as f64);
        let prof = steady_profile(spec, &b0).unwrap();
        let w = prof.layer_width();
        let xs: Vec<f64> = (0..=200).map(|j| j as f64 * 10.0 * w / 200.0).collect();
        let scale = max_norm(&spec.effective_rates()) * b0.amax();
        residual = residual.max(steady_residual(&prof, &xs).unwrap() / scale);
        let f0 = prof.flux(0.0).unwrap();
        for &x in &xs {
            flux = flux.max((prof.flux(x).unwrap() - f0).abs() / f0.abs());
        }
        let lam = spec.lambda().diagonal();
        let m = spec.effective_rates() * DMatrix::from_diagonal(&lam.map(|l| 1.0 / l));
        let path = common::rk4_path(&m, &b0.component_mul(lam), &xs, 1e-13);
        for (x, wx) in xs.iter().zip(path) {
            let oracle = wx.component_div(lam);
            rk4 = rk4.max((prof.eval(*x).unwrap() - &oracle).amax() / oracle.amax());
        }
    }
    let passed = closed <= 1e-10 && residual <= 1e-10 && flux <= 1e-12 && rk4 <= 1e-8;
    outcome(
        passed,
        format!(
            "closed form {closed:.2e}, residual {residual:.2e}, flux drift {flux:.2e}, RK4 {rk4:.2e} over {} systems",
            specs.len()
        ),
    )
}

struct TimedRun {
    name: &'static str,
    series: DiagnosticsSeries,
    dx: f64,
    elapsed: Duration,
}

fn timed(name: &'static str, spec: &SystemSpec, run: &BumpRun) -> TimedRun {
    let start = Instant::now();
    let (out, grid) = bump_run(spec, run);
    TimedRun {
        name,
        series: out.series,
        dx: grid.dx,
        elapsed: start.elapsed(),
    }
}

fn criterion_6(runs: &[TimedRun]) -> Outcome {
    let mut passed = true;
    let mut detail = Vec::new();
    for run in runs.iter().filter(|r| r.name.starts_with("bump")) {
        let s = &run.series;
        let initial = s.initial().unwrap().sup_exact;
        let last = s.last().unwrap();
        let limit = (1e-6 * initial).max(2.0 * s.steady_floor);
        let ok = last.sup_exact <= limit && run.elapsed < Duration::from_secs(60);
        passed &= ok;
        detail.push(format!(
            "{}: sup|U-B| {:.3e} <= {:.3e} (discrete {:.1e}), {:.1}s",
            run.name,
            last.sup_exact,
            limit,
            last.sup / s.initial().unwrap().sup,
            run.elapsed.as_secs_f64()
        ));
    }
    outcome(passed, detail.join("; "))
}

fn criterion_7(runs: &[TimedRun]) -> Outcome {
    let violations: usize = runs.iter().map(|r| r.series.energy_violations).sum();
    let budget = runs.iter().map(|r| r.series.max_energy_budget).fold(0.0, f64::max);
    outcome(
        violations == 0 && budget <= 1.0 + 1e-6,
        format!(
            "{} runs; sample violations {violations}, max (E + kappa*D)/E(0) {budget:.12}",
            runs.len()
        ),
    )
}

fn criterion_8(runs: &[TimedRun]) -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    for run in runs {
        for s in &run.series.samples {
            ok &= s.gn_ratio <= 1.0 + 5.0 * run.dx;
            worst = worst.max(s.gn_ratio);
        }
    }
    let grid = make_grid(20.0, 4000, None).unwrap();
    let phi = DMatrix::from_fn(grid.n_nodes(), 1, |j, _| {
        let x = grid.x(j);
        x * (-x).exp()
    });
    let s = perturbation_diagnostics(&phi, &DVector::from_element(1, 1.0), &DMatrix::identity(1, 1), &grid, 0.0);
    let fixture = (s.l2 - 0.5).abs().max((s.dx_norm - 0.5).abs()).max((s.sup - (-1f64).exp()).abs());
    outcome(
        ok && fixture <= 1e-3,
        format!("max gn_ratio {worst:.4} over {} runs; xe^-x fixture error {fixture:.2e}", runs.len()),
    )
}

fn criterion_9() -> Outcome {
    let spec = common::two_state();
    let config = SchemeConfig::default();
    let errors: Vec<f64> = [250, 500, 1000, 2000]
        .iter()
        .map(|&n| {
            let grid = make_grid(10.0, n, None).unwrap();
            let bh = ibvp::discrete_steady_state(&spec, &grid, &config, &common::e1(2)).unwrap();
            (0..grid.n_nodes())
                .map(|j| {
                    let [b1, b2] = common::two_state_profile(grid.x(j));
                    (bh[(j, 0)] - b1).abs().max((bh[(j, 1)] - b2).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let passed = ratios.iter().all(|r| (1.8..=2.2).contains(r));
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    outcome(passed, format!("sup errors [{}], ratios {ratios:.4?}", shown.join(", ")))
}

fn criterion_10(stiff: &[TimedRun], fine: &[(f64, Option<f64>)]) -> Outcome {
    let spec = common::two_state();
    let grid = make_grid(20.0, 2000, None).unwrap();
    let mut stable = true;
    for (eps, run) in [1.0, 0.1, 0.01].iter().zip(stiff) {
        let config = SchemeConfig::default();
        let ts = ibvp::time_step(&spec.with_epsilon(*eps).unwrap(), &grid, &config).unwrap();
        let cfl_dt = 40.0 / (40.0 / (0.9 * grid.dx / 2.0) * (1.0 - 1e-12)).ceil();
        let s = &run.series;
        stable &= !ts.reaction_limited
            && (ts.dt - cfl_dt).abs() <= 1e-15
            && s.step_energy_violations == 0
            && s.last().unwrap().sup <= 1e-6 * s.initial().unwrap().sup;
    }
    let times: Vec<f64> = fine.iter().map(|(_, t)| t.unwrap_or(f64::INFINITY)).collect();
    let monotone = times.windows(2).all(|w| w[1] <= w[0]);
    let coarse: Vec<String> = stiff
        .iter()
        .map(|r| format!("{:.3}", ibvp::decay_time(&r.series, 1e-3).unwrap_or(f64::NAN)))
        .collect();
    outcome(
        stable && monotone,
        format!(
            "IMEX stable on the CFL step at eps 1, 0.1, 0.01; decay_time(1e-3) on 8000 cells {times:.3?} (2000 cells: {})",
            coarse.join(", ")
        ),
    )
}

fn main() {
    let start = Instant::now();
    let certs = certificates();
    let two = common::two_state();
    let four = common::counterexample();

    let (runs, stiff, fine) = std::thread::scope(|scope| {
        let bump2 = scope.spawn(|| timed("bump 2x2", &two, &BumpRun::default()));
        let bump4 = scope.spawn(|| timed("bump 4x4", &four, &BumpRun::default()));
        let explicit = scope.spawn(|| {
            let run = BumpRun {
                scheme: Scheme::Explicit,
                ..BumpRun::default()
            };
            vec![timed("explicit 2x2", &two, &run), timed("explicit 4x4", &four, &run)]
        });
        let random = scope.spawn(|| {
            (0..4u64)
                .map(|seed| {
                    let run = BumpRun {
                        nx: 1000,
                        t_end: 30.0,
                        ..BumpRun::default()
                    };
                    timed("random", &common::random_spec(3 + seed as usize, seed), &run)
                })
                .collect::<Vec<_>>()
        });
        let stiff: Vec<_> = [1.0, 0.1, 0.01]
            .into_iter()
            .map(|eps| {
                let spec = two.with_epsilon(eps).unwrap();
                scope.spawn(move || timed("stiff", &spec, &BumpRun::default()))
            })
            .collect();
        let fine: Vec<_> = [1.0, 0.1, 0.01]
            .into_iter()
            .map(|eps| {
                let spec = two.with_epsilon(eps).unwrap();
                scope.spawn(move || {
                    let run = BumpRun {
                        nx: 8000,
                        stride: 1,
                        ..BumpRun::default()
                    };
                    let (out, _) = bump_run(&spec, &run);
                    (eps, ibvp::decay_time(&out.series, 1e-3))
                })
            })
            .collect();
        let mut runs = vec![bump2.join().unwrap(), bump4.join().unwrap()];
        runs.extend(explicit.join().unwrap());
        runs.extend(random.join().unwrap());
        let stiff: Vec<TimedRun> = stiff.into_iter().map(|h| h.join().unwrap()).collect();
        let fine: Vec<(f64, Option<f64>)> = fine.into_iter().map(|h| h.join().unwrap()).collect();
        (runs, stiff, fine)
    });
    let mut all_runs: Vec<&TimedRun> = runs.iter().collect();
    all_runs.extend(stiff.iter());
    let all: Vec<TimedRun> = all_runs
        .into_iter()
        .map(|r| TimedRun {
            name: r.name,
            series: r.series.clone(),
            dx: r.dx,
            elapsed: r.elapsed,
        })
        .collect();

    let results = [
        ("certificate identities", criterion_1(&certs)),
        ("compensating matrix", criterion_2(&certs)),
        ("detailed balance for r <= 3", criterion_3()),
        ("zero-eigenvalue simplicity cross-check", criterion_4()),
        ("steady state", criterion_5()),
        ("bump-run decay", criterion_6(&runs)),
        ("discrete energy estimates", criterion_7(&all)),
        ("Gagliardo-Nirenberg diagnostic", criterion_8(&all)),
        ("first-order consistency", criterion_9()),
        ("stiffness robustness", criterion_10(&stiff, &fine)),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
