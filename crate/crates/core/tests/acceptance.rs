//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured figures. Tolerances are pinned in the assertions.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use setmem::analysis::{self, StateSpace};
use setmem::experiments::{
    self, build_sets, generate_data, system2_config, CellOutcome, ConstraintKind, PriorKind,
};
use setmem::matops;
use setmem::qmi::{MultiplierVector, Qmi};
use setmem::reparam::{
    reparameterize_sample, rhat_gamma_from_eps, solve_qhat, QhatObjective, RegressionSample,
};
use setmem::sdp::SolverSettings;
use setmem::synth;

fn dm(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

fn rand_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = rand_matrix(rng, dim, dim, 1.0);
    let base = &a * a.transpose();
    let (emin, emax) = {
        let ev = matops::sym_eigenvalues(&base).unwrap();
        (ev[0], ev[ev.len() - 1])
    };
    // Affinely map the spectrum into [lo, hi].
    let span = (emax - emin).max(1e-12);
    let scale = (hi - lo) / span;
    matops::symmetrize(&(&base * scale + DMatrix::identity(dim, dim) * (lo - emin * scale)))
}

/// Scales `w0` so the disturbance bound `R − WᵀQW ⪰ 0` holds with a strict
/// interior fraction `u`.
fn consistent_disturbance(
    rng: &mut ChaCha8Rng,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: usize,
    m: usize,
    u: f64,
) -> DMatrix<f64> {
    let w0 = rand_matrix(rng, p, m, 1.0);
    let l = r.clone().cholesky().unwrap().l();
    let mid = l
        .clone()
        .solve_lower_triangular(&(w0.transpose() * q * &w0))
        .unwrap();
    let mid = l.solve_lower_triangular(&mid.transpose()).unwrap();
    let t = matops::max_eig_sym(&matops::symmetrize(&mid)).unwrap().max(1e-15);
    &w0 * (u * rng.random::<f64>() / t.sqrt())
}

#[test]
fn acceptance_1_reparameterization_soundness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    // Tight tolerances so the out-of-solver margin re-check can demand 1e-7.
    let settings = SolverSettings {
        feas_tol: 1e-10,
        gap_tol: 1e-10,
        ..SolverSettings::default()
    };
    let instances = 200;
    let probes_per_instance = 10_000;
    let mut inclusion_checks = 0u64;
    let mut exclusion_checks = 0u64;

    for instance in 0..instances {
        let p = rng.random_range(1..=2usize);
        let n = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=n);
        let theta_tr = rand_matrix(&mut rng, p, n, 1.0);
        let radius = 0.3 + rng.random::<f64>();
        let center = &theta_tr + rand_matrix(&mut rng, p, n, 0.3 * radius);
        let prior = Qmi::ball_prior(&center, radius).unwrap();
        if !prior.contains(&theta_tr, 0.0).unwrap() {
            continue;
        }
        let x = loop {
            let x = rand_matrix(&mut rng, n, m, 1.0);
            let (lo, hi) = matops::extremal_singular_values(&x);
            if lo > 0.3 && hi < 2.0 {
                break x;
            }
        };
        let q = rand_spd(&mut rng, p, 0.2, 2.0);
        let r = rand_spd(&mut rng, m, 0.05, 0.5);
        let w = consistent_disturbance(&mut rng, &q, &r, p, m, 0.95);
        let y = &theta_tr * &x + &w;
        let sample = RegressionSample::new(x.clone(), y, q.clone(), r.clone()).unwrap();
        assert!(sample.sigma_contains(&theta_tr, 1e-10).unwrap());

        let eps = 0.05 + rng.random::<f64>() * 0.3;
        let (rhat, gamma_sq) = rhat_gamma_from_eps(&r, eps).unwrap();
        // Condition (8): R ⪯ γ²R̂ (equality by construction).
        assert!(matops::max_abs(&(&rhat * gamma_sq - &r)) <= 1e-12 * matops::max_abs(&r));
        // Condition (9) via the compensation program, certified by an
        // out-of-solver margin re-check.
        let (qhat, lambdas) = setmem::reparam::solve_qhat_regularized(
            std::slice::from_ref(&prior),
            &q,
            gamma_sq,
            &center,
            QhatObjective::Trace,
            &settings,
        )
        .unwrap();
        let mut constraint = DMatrix::zeros(p + n, p + n);
        let w_q = &q * (1.0 + gamma_sq);
        let w_tb = &w_q * &center;
        constraint.view_mut((0, 0), (p, p)).copy_from(&(-&w_q));
        constraint.view_mut((0, p), (p, n)).copy_from(&w_tb);
        constraint
            .view_mut((p, 0), (n, p))
            .copy_from(&w_tb.transpose());
        constraint
            .view_mut((p, p), (n, n))
            .copy_from(&(&qhat - center.transpose() * &w_tb));
        let constraint = matops::symmetrize(&constraint) - prior.pi() * lambdas[0];
        assert!(
            matops::min_eig_sym(&constraint).unwrap() >= -1e-7,
            "instance {instance}: compensation certificate margin"
        );

        let sigma_hat = reparameterize_sample(&sample, &qhat, &rhat, &center).unwrap();

        let prior_draws = analysis::sample_members(&prior, probes_per_instance / 2, instance)
            .unwrap();
        let mut probes = prior_draws;
        let g = matops::left_pinv(&x).unwrap();
        let g0 = matops::complement_projector(&x, &g).unwrap();
        for _ in 0..probes_per_instance / 4 {
            // Near the data set's boundary along the row space.
            let dir = rand_matrix(&mut rng, p, m, 1.0) * rng.random::<f64>() * 2.0;
            probes.push(&theta_tr + dir * &g);
        }
        for _ in 0..probes_per_instance / 4 {
            // Kernel moves never leave the data set.
            let dir = rand_matrix(&mut rng, p, n, radius);
            probes.push(&theta_tr + dir * &g0);
        }

        for theta in &probes {
            let in_sigma = sample.sigma_contains(theta, 0.0).unwrap();
            if in_sigma && prior.contains(theta, 0.0).unwrap() {
                inclusion_checks += 1;
                assert!(
                    sigma_hat.contains(theta, 1e-7).unwrap(),
                    "instance {instance}: statement (i) violated"
                );
            }
            let inflated = sample.residual_form(theta, Some(&rhat)).unwrap();
            if matops::min_eig_sym(&inflated).unwrap() <= -1e-6 {
                exclusion_checks += 1;
                assert!(
                    !sigma_hat.contains(theta, 0.0).unwrap(),
                    "instance {instance}: statement (ii) violated"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(
        inclusion_checks > 100_000 && exclusion_checks > 10_000,
        "probe mix too thin: {inclusion_checks} inclusion, {exclusion_checks} exclusion"
    );
    assert!(elapsed.as_secs() < 300, "runtime budget exceeded: {elapsed:?}");
    println!(
        "acceptance 1 (reparameterization soundness): PASS \
         ({instances} instances, {inclusion_checks} inclusion + {exclusion_checks} exclusion checks, {elapsed:?})"
    );
}

#[test]
fn acceptance_2_compensation_analytic_instance() {
    // One-dimensional optimality conditions: constraint
    // diag(−4+λ, Q̂−4λ) ⪰ 0 under minimized trace gives λ* = 4, Q̂* = 16.
    let (lambda_star, qhat_star) = (4.0, 16.0);
    let prior = Qmi::ball_prior(&dm(1, 1, &[0.0]), 2.0).unwrap();
    let (qhat, lambdas) = solve_qhat(
        &[prior],
        &dm(1, 1, &[1.0]),
        3.0,
        &dm(1, 1, &[0.0]),
        QhatObjective::Trace,
        &SolverSettings::default(),
    )
    .unwrap();
    assert!((qhat[(0, 0)] - qhat_star).abs() <= 1e-4);
    assert!((lambdas[0] - lambda_star).abs() <= 1e-4);
    println!(
        "acceptance 2 (analytic compensation optimum): PASS (qhat {:.6}, lambda {:.6})",
        qhat[(0, 0)],
        lambdas[0]
    );
}

#[test]
fn acceptance_3_dualization_equivalence_and_involution() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut checked = 0usize;
    let mut worst_involution = 0.0f64;
    let mut instances = 0usize;
    while instances < 1000 {
        let p = rng.random_range(1..=3usize);
        let n = rng.random_range(1..=3usize);
        let d = p + n;
        let t = rand_matrix(&mut rng, d, d, 1.0);
        let mut j0 = DMatrix::<f64>::zeros(d, d);
        for i in 0..p {
            j0[(i, i)] = -1.0;
        }
        for i in p..d {
            j0[(i, i)] = 1.0;
        }
        let pi = matops::symmetrize(&(t.transpose() * j0 * &t));
        let scale = matops::max_abs(&pi).max(1.0);
        let ev = matops::sym_eigenvalues(&pi).unwrap();
        if ev.iter().any(|v| v.abs() < 1e-4 * scale) {
            continue; // keep the instances strictly definite
        }
        instances += 1;
        let q = Qmi::primal(p, n, pi).unwrap();
        let dual = q.dualize().unwrap();

        // Strict membership transfers to the transpose, both directions.
        for _ in 0..10 {
            let theta = rand_matrix(&mut rng, p, n, 2.0);
            let e_primal = matops::min_eig_sym(&q.evaluate(&theta).unwrap()).unwrap();
            let e_dual = matops::min_eig_sym(&dual.evaluate(&theta.transpose()).unwrap()).unwrap();
            if e_primal.abs() > 1e-9 * scale && e_dual.abs() > 1e-9 * scale {
                assert_eq!(
                    e_primal > 0.0,
                    e_dual > 0.0,
                    "strict membership disagreement"
                );
                checked += 1;
            }
        }
        let round = dual.dualize().unwrap();
        worst_involution = worst_involution
            .max(matops::max_abs(&(round.pi() - q.pi())) / scale);
    }
    assert!(worst_involution <= 1e-10, "involution error {worst_involution}");
    assert!(checked > 5000);
    println!(
        "acceptance 3 (dualization): PASS (1000 instances, {checked} membership checks, worst involution {worst_involution:.2e})"
    );
}

#[test]
fn acceptance_4_stacked_disturbance_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=2usize);
        let count = rng.random_range(1..=6usize);
        let q = rand_spd(&mut rng, p, 0.2, 2.0);
        let r = rand_spd(&mut rng, m, 0.1, 1.0);
        let samples: Vec<_> = (0..count)
            .map(|_| {
                let x = rand_matrix(&mut rng, 1, m, 1.0);
                RegressionSample::new(x, rand_matrix(&mut rng, p, m, 1.0), q.clone(), r.clone())
                    .unwrap()
            })
            .collect();
        let st = setmem::prior::stack_samples(&samples).unwrap();
        let qmi = st.disturbance_qmi().unwrap();
        let mut d = DMatrix::zeros(p, count * m);
        for k in 0..count {
            let w = consistent_disturbance(&mut rng, &q, &r, p, m, 0.999);
            d.view_mut((0, k * m), (p, m)).copy_from(&w);
        }
        let value = qmi.evaluate(&d).unwrap();
        worst = worst.max(-matops::min_eig_sym(&value).unwrap());
    }
    assert!(worst <= 1e-9, "stacked bound violated by {worst:.3e}");
    println!("acceptance 4 (stacked disturbance bound): PASS (10000 draws, worst slack {worst:.2e})");
}

#[test]
fn acceptance_5_peak_gain_oracle() {
    // Analytic first-order value.
    let sys = StateSpace::new(
        dm(1, 1, &[0.5]),
        dm(1, 1, &[1.0]),
        dm(1, 1, &[1.0]),
        dm(1, 1, &[0.0]),
    )
    .unwrap();
    let gamma = analysis::hinf_norm(&sys, 1e-6).unwrap();
    assert!((gamma - 2.0).abs() <= 1e-4, "analytic peak {gamma}");

    // LMI bisection against the frequency grid on random stable systems.
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=6usize);
        let m = rng.random_range(1..=2usize);
        let p = rng.random_range(1..=2usize);
        let mut a = rand_matrix(&mut rng, n, n, 1.0);
        let rho = analysis::spectral_radius(&a).unwrap();
        if rho > 0.0 {
            a *= (0.3 + 0.6 * rng.random::<f64>()) / rho;
        }
        let sys = StateSpace::new(
            a,
            rand_matrix(&mut rng, n, m, 1.0),
            rand_matrix(&mut rng, p, n, 1.0),
            rand_matrix(&mut rng, p, m, 0.2),
        )
        .unwrap();
        let norm = analysis::hinf_norm(&sys, 1e-6).unwrap();
        // The grid is embedded in hinf_norm; recompute it independently
        // from a dense sweep for the comparison.
        let mut grid: f64 = 0.0;
        for k in 0..2048 {
            let omega = std::f64::consts::PI * k as f64 / 2047.0;
            grid = grid.max(analysis::frequency_gain(&sys, omega));
        }
        worst_rel = worst_rel.max((norm - grid).abs() / norm.max(1e-12));
    }
    assert!(worst_rel <= 1e-3, "grid disagreement {worst_rel:.3e}");
    println!(
        "acceptance 5 (peak gain oracle): PASS (analytic 2.0 hit, worst grid deviation {worst_rel:.2e})"
    );
}

#[test]
fn acceptance_6_end_to_end_scalar_benchmark() {
    let start = Instant::now();
    let cfg = system2_config(7);
    let ds = generate_data(&cfg).unwrap();
    let sets = build_sets(&cfg, &ds).unwrap();
    let mut count = 0usize;
    let mut min_gamma = f64::INFINITY;
    let mut max_gamma: f64 = 0.0;
    for prior in PriorKind::ALL {
        for cset in ConstraintKind::ALL {
            let plant = experiments::assemble_plant(&cfg, &sets, prior, cset).unwrap();
            let result = match synth::synthesize(&plant, &synth::SynthesisOptions::default()) {
                Ok(r) => r,
                Err(e) => {
                    assert!(
                        prior != PriorKind::Combined,
                        "combined-prior column must synthesize: {e}"
                    );
                    continue;
                }
            };
            let report = synth::validate_by_sampling(&plant, &result, 100, 1000 + count as u64)
                .unwrap();
            assert!(
                report.pass,
                "{prior:?}/{cset:?}: sampled norm {:.6} exceeds gamma {:.6}",
                report.worst_norm, result.gamma
            );
            min_gamma = min_gamma.min(result.gamma);
            max_gamma = max_gamma.max(result.gamma);
            count += 1;
        }
    }
    // Paper-scale anchor: certified bounds stay within the same decade as
    // the published range 0.428..1.53.
    assert!(count >= 4);
    assert!(
        min_gamma >= 0.0428 && max_gamma <= 15.3,
        "bounds [{min_gamma:.4}, {max_gamma:.4}] leave the expected decade"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "runtime budget exceeded: {elapsed:?}");
    println!(
        "acceptance 6 (end-to-end scalar benchmark): PASS \
         ({count} cells, gamma in [{min_gamma:.4}, {max_gamma:.4}], 100-sample validation each, {elapsed:?})"
    );
}

#[test]
fn acceptance_7_data_refinement_monotonicity() {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10u64 {
        let cfg = system2_config(seed);
        let ds = generate_data(&cfg).unwrap();
        let sets = build_sets(&cfg, &ds).unwrap();
        for prior in PriorKind::ALL {
            // An infeasible cell is a valid outcome (no finite bound); it
            // participates in the comparison as +infinity.
            let gamma_of = |cset: ConstraintKind| -> f64 {
                let plant = experiments::assemble_plant(&cfg, &sets, prior, cset).unwrap();
                // Tight gap tolerances: the 1e-6 comparison below outpaces
                // the default solver accuracy when the bounds are large.
                let opts = synth::SynthesisOptions {
                    settings: SolverSettings {
                        feas_tol: 1e-10,
                        gap_tol: 1e-10,
                        ..SolverSettings::default()
                    },
                    ..synth::SynthesisOptions::default()
                };
                match synth::synthesize(&plant, &opts) {
                    Ok(r) => r.gamma,
                    Err(setmem::Error::Infeasible(_)) => f64::INFINITY,
                    Err(e) => panic!("seed {seed} {prior:?} {cset:?}: {e}"),
                }
            };
            let base = gamma_of(ConstraintKind::None);
            let with_data = gamma_of(ConstraintKind::Data);
            let with_structural = gamma_of(ConstraintKind::Prior);
            let with_both = gamma_of(ConstraintKind::Combined);
            if base.is_finite() {
                worst = worst.max(with_data - base);
            }
            assert!(
                with_data <= base + 1e-6,
                "seed {seed} {prior:?}: data row {with_data} above base {base}"
            );
            assert!(
                with_both <= with_data.min(with_structural) + 1e-6,
                "seed {seed} {prior:?}: combined row above its parts"
            );
        }
    }
    println!(
        "acceptance 7 (data refinement monotonicity): PASS (10 seeds x 4 priors, worst increase {worst:.2e})"
    );
}

#[test]
fn acceptance_8_true_system_containment() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut sets_checked = 0u64;
    for example in [1u8, 2] {
        for seed in 0..100u64 {
            let mut cfg = experiments::preset_config(example, seed).unwrap();
            // Avoid rebuilding the full 4x4 grid per seed: set construction
            // covers all priors regardless of the selection.
            cfg.priors = vec![PriorKind::Combined];
            cfg.constraint_sets = vec![ConstraintKind::None];
            let ds = generate_data(&cfg).unwrap();
            let sets = build_sets(&cfg, &ds).unwrap();
            let theta_ab = cfg.system.theta_ab();
            let theta_cd = cfg.system.theta_cd();
            for kind in PriorKind::ALL {
                let check = |qmis: &[Qmi<f64>], theta: &DMatrix<f64>, what: &str| {
                    for q in qmis {
                        assert!(
                            q.contains(theta, 1e-7).unwrap(),
                            "example {example} seed {seed} {kind:?}: true parameters leave {what}"
                        );
                    }
                    qmis.len() as u64
                };
                sets_checked += check(&sets.priors[&kind].ab, &theta_ab, "ab prior");
                sets_checked += check(&sets.priors[&kind].cd, &theta_cd, "cd prior");
                sets_checked += check(&sets.data_qmis[&kind].ab, &theta_ab, "ab data set");
                sets_checked += check(&sets.data_qmis[&kind].cd, &theta_cd, "cd data set");
                sets_checked += check(&sets.structural_qmis[&kind].ab, &theta_ab, "ab structural");
                sets_checked += check(&sets.structural_qmis[&kind].cd, &theta_cd, "cd structural");

                // Nonnegative combinations keep the true parameters.
                for _ in 0..3 {
                    let priors = &sets.priors[&kind].ab;
                    let samples = &sets.data_qmis[&kind].ab;
                    let taus: Vec<f64> = (0..priors.len()).map(|_| rng.random::<f64>()).collect();
                    let lams: Vec<f64> = (0..samples.len()).map(|_| rng.random::<f64>()).collect();
                    let mult = MultiplierVector::new(taus, lams).unwrap();
                    let comb = Qmi::nonneg_combination(priors, samples, &mult).unwrap();
                    assert!(
                        comb.contains(&theta_ab, 1e-7).unwrap(),
                        "example {example} seed {seed} {kind:?}: combination excludes the truth"
                    );
                }
            }
        }
    }
    println!(
        "acceptance 8 (true-system containment): PASS (2 examples x 100 seeds, {sets_checked} set memberships)"
    );
}

#[test]
fn acceptance_9_reproduction_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    experiments::reproduce(2, 7, dir_a.path()).unwrap();
    experiments::reproduce(2, 7, dir_b.path()).unwrap();
    for file in ["table.csv", "table.md", "dataset/x.csv", "dataset/y.csv", "dataset/wp.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
        assert!(!a.is_empty());
    }
    println!("acceptance 9 (reproduction determinism): PASS (byte-identical tables and datasets)");
}

#[test]
fn scalar_genericity_smoke_f32() {
    // The core is generic over the working scalar; spot-check f32 through
    // construction, membership, dualization and one conic solve.
    let center = DMatrix::<f32>::zeros(1, 1);
    let ball = setmem::Qmi32::ball_prior(&center, 1.0f32).unwrap();
    assert!(ball
        .contains(&DMatrix::<f32>::from_element(1, 1, 0.9), 1e-5f32)
        .unwrap());
    let dual = ball.dualize().unwrap();
    let round = dual.dualize().unwrap();
    assert!(matops::max_abs(&(round.pi() - ball.pi())) < 1e-5);

    let mut p = setmem::sdp::LmiProblem::<f32>::new();
    let t = p.scalar_var("t", None);
    let mut e = setmem::sdp::LmiExpr::zeros(2);
    e.add_constant(&DMatrix::from_row_slice(2, 2, &[-1.0f32, 0.0, 0.0, -3.0]));
    e.add_scalar_term(t, DMatrix::identity(2, 2));
    p.add_psd_constraint(e);
    p.add_objective(setmem::sdp::ObjectiveTerm::Scalar(t, 1.0f32));
    let settings = SolverSettings {
        feas_tol: 1e-5,
        gap_tol: 1e-5,
        ..SolverSettings::default()
    };
    let sol = setmem::sdp::solve(&p, &settings).unwrap();
    assert!((sol.scalar(t) - 3.0).abs() < 1e-2);
    println!("scalar genericity (f32 smoke): PASS");
}
