//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (visible with `--nocapture`).

mod common;

use common::*;
use pmme_lab::experiment::{default_times, simulate_dataset, PreparationSet, ReadoutModel};
use pmme_lab::fit::{
    aic_rank, fit_model, fit_models_set, fit_set_with_starts, validate_predictions, FitConfig,
    ModelId,
};
use pmme_lab::model::{damping_basis, KernelSpec, ModelParams};
use pmme_lab::nonmark::{default_pairs, distance_series, n_measure_data, n_measure_model};
use pmme_lab::qstate::{bloch_to_density, BlochVector};
use pmme_lab::recon::{bayes_unfold, reconstruct_series, BlochSeries, ReconOptions};
use pmme_lab::solver::{choi_check, reference_integrate, Propagator};
use pmme_lab::{substream, Complex64};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn oracle_grid() -> Vec<f64> {
    (0..=20_000).map(|i| i as f64 * 0.005).collect()
}

fn max_bloch_deviation(theta: &ModelParams, v0: BlochVector, times: &[f64]) -> f64 {
    let prop = Propagator::build(theta).unwrap();
    let rho0 = bloch_to_density(&v0).unwrap();
    let numeric = reference_integrate(theta, &rho0, times).unwrap();
    let mut worst: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let a = prop.propagate_bloch(&v0, t);
        let n = numeric[i].to_bloch();
        worst = worst
            .max((a.vx - n.vx).abs())
            .max((a.vy - n.vy).abs())
            .max((a.vz - n.vz).abs());
    }
    worst
}

/// Criterion 1: analytic propagation matches the brute-force integrator to
/// 1e-6 for 20 CP-valid random parameter sets per kernel, within 2 minutes.
#[test]
fn criterion_1_solver_oracle_equivalence() {
    let started = Instant::now();
    let times = oracle_grid();
    let mut worst_overall: f64 = 0.0;
    for kind in KernelKind::ALL {
        let mut rng = ChaCha12Rng::seed_from_u64(0xacce551);
        for _ in 0..20 {
            let theta = cp_valid_theta(kind, &mut rng);
            let v0 = random_pure(&mut rng);
            let dev = max_bloch_deviation(&theta, v0, &times);
            assert!(
                dev < 1e-6,
                "kernel {}: deviation {dev:.3e} for {theta:?}",
                kind.name()
            );
            worst_overall = worst_overall.max(dev);
        }
    }
    let elapsed = started.elapsed();
    let ok = worst_overall < 1e-6 && elapsed.as_secs_f64() < 120.0;
    report(
        "1 (solver oracle equivalence)",
        ok,
        &format!("worst deviation {worst_overall:.3e}, runtime {elapsed:.2?}"),
    );
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "runtime {elapsed:?} exceeds two minutes"
    );
}

/// Criterion 2: exact unit trace, Hermiticity, and the semigroup property
/// holding for the impulse kernel only.
#[test]
fn criterion_2_structural_invariants() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce552);
    let mut herm_worst: f64 = 0.0;
    for kind in KernelKind::ALL {
        for _ in 0..10 {
            let theta = sample_theta(kind, &mut rng);
            let prop = Propagator::build(&theta).unwrap();
            let v0 = random_pure(&mut rng);
            let rho0 = bloch_to_density(&v0).unwrap();
            for &t in &[0.0, 0.37, 3.1, 42.0, 100.0] {
                let rho = prop.propagate(&rho0, t);
                assert_eq!(rho.trace().re, 1.0, "trace must be exactly one");
                assert_eq!(rho.trace().im, 0.0);
                let m = rho.entries();
                let defect = (m[0][1] - m[1][0].conj()).norm();
                assert!(defect < 1e-12);
                herm_worst = herm_worst.max(defect);
            }
        }
    }

    // Semigroup composition for the impulse kernel.
    let mut delta_worst: f64 = 0.0;
    for _ in 0..10 {
        let theta = sample_theta(KernelKind::Delta, &mut rng);
        let prop = Propagator::build(&theta).unwrap();
        let v0 = random_pure(&mut rng);
        for &(t1, t2) in &[(0.4, 1.3), (2.0, 7.0), (11.0, 31.0)] {
            let direct = prop.propagate_bloch(&v0, t1 + t2);
            let composed = prop.propagate_bloch(&prop.propagate_bloch(&v0, t1), t2);
            delta_worst = delta_worst.max(direct.distance(&composed));
        }
    }
    assert!(
        delta_worst < 1e-10,
        "Delta semigroup violated: {delta_worst:.3e}"
    );

    // Memory kernels with dephasing of order 0.1 must break it.
    let mut memory_violation: f64 = f64::INFINITY;
    for kernel in [
        KernelSpec::Exp { b0: 0.1 },
        KernelSpec::Rational2 {
            a0: 0.05,
            b0: 0.01,
            b1: 0.15,
        },
    ] {
        let theta = ModelParams::new(0.5, 0.1, 0.005, 0.02, kernel).unwrap();
        let prop = Propagator::build(&theta).unwrap();
        let v0 = BlochVector::new(0.9, 0.0, 0.3);
        let mut worst: f64 = 0.0;
        for &(t1, t2) in &[(1.0, 1.0), (2.0, 5.0), (5.0, 10.0), (10.0, 20.0)] {
            let direct = prop.propagate_bloch(&v0, t1 + t2);
            let composed = prop.propagate_bloch(&prop.propagate_bloch(&v0, t1), t2);
            worst = worst.max(direct.distance(&composed));
        }
        memory_violation = memory_violation.min(worst);
    }
    assert!(
        memory_violation > 1e-3,
        "memory kernels unexpectedly divisible: {memory_violation:.3e}"
    );

    report(
        "2 (structural invariants)",
        true,
        &format!(
            "trace exact, Hermiticity defect <= {herm_worst:.1e}, Delta semigroup {delta_worst:.1e}, memory violation {memory_violation:.2e}"
        ),
    );
}

#[allow(clippy::needless_range_loop)]
fn assemble_choi(theta: &ModelParams, prop: &Propagator, t: f64) -> [[Complex64; 4]; 4] {
    let basis = damping_basis(theta);
    let mut c = [[Complex64::new(0.0, 0.0); 4]; 4];
    for k in 0..4 {
        let xi = prop.xi(k, t);
        let l = &basis.left[k];
        let r = &basis.right[k];
        // (L^T (x) R)[2i+a][2j+b] = L[j][i] R[a][b]
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        c[2 * i + a][2 * j + b] += xi * l[j][i] * r[a][b];
                    }
                }
            }
        }
    }
    c
}

fn hermitian_eigenvalues_4(c: &[[Complex64; 4]; 4]) -> Vec<f64> {
    // Real-symmetric embedding [[Re, -Im], [Im, Re]] doubles each eigenvalue.
    let m = nalgebra::DMatrix::<f64>::from_fn(8, 8, |i, j| {
        let (bi, ii) = (i / 4, i % 4);
        let (bj, jj) = (j / 4, j % 4);
        match (bi, bj) {
            (0, 0) | (1, 1) => c[ii][jj].re,
            (0, 1) => -c[ii][jj].im,
            (1, 0) => c[ii][jj].im,
            _ => unreachable!(),
        }
    });
    let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    // Each eigenvalue appears twice; take every other one.
    eig.into_iter().step_by(2).collect()
}

/// Criterion 3: closed-form CP verdicts agree with a numeric PSD test of
/// the assembled Choi matrix on 1000 random (theta, t) samples.
#[test]
fn criterion_3_choi_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce553);
    let mut agreements = 0;
    let mut worst_gap: f64 = 0.0;
    for i in 0..1000 {
        let kind = KernelKind::ALL[i % 3];
        let theta = sample_theta(kind, &mut rng);
        let t = if i % 50 == 0 {
            0.0
        } else {
            (rng.gen_range(-3.0f64..2.3)).exp2() * 10.0
        };
        let prop = Propagator::build(&theta).unwrap();
        let closed = choi_check(&prop, &theta, t);

        let sum: f64 = closed.eigenvalues.iter().map(|e| e.re).sum();
        assert!((sum - 2.0).abs() < 1e-10, "Choi trace {sum} at t = {t}");

        let numeric = hermitian_eigenvalues_4(&assemble_choi(&theta, &prop, t));
        let numeric_ok = numeric[0] >= -1e-10;
        let mut closed_sorted: Vec<f64> = closed.eigenvalues.iter().map(|e| e.re).collect();
        closed_sorted.sort_by(f64::total_cmp);
        for (a, b) in closed_sorted.iter().zip(&numeric) {
            worst_gap = worst_gap.max((a - b).abs());
        }
        assert_eq!(
            closed.cp_ok, numeric_ok,
            "verdict mismatch at t = {t}: closed margin {}, numeric min {}",
            closed.margin, numeric[0]
        );
        agreements += 1;
    }
    report(
        "3 (CP checker equivalence)",
        agreements == 1000,
        &format!("1000/1000 verdicts agree, worst eigenvalue gap {worst_gap:.2e}"),
    );
}

/// Criterion 4: readout mitigation. The identity response is a fixed point
/// after one iteration and the update preserves the simplex; the stated
/// vertex-target case must land on the inversion oracle within 1e-6 after
/// 100 iterations.
#[test]
fn criterion_4_mitigation() {
    // Identity response: one iteration fixes the input.
    let id = ReadoutModel::identity();
    let out = bayes_unfold([0.3, 0.7], &id, 1).unwrap();
    assert!((out[0] - 0.3).abs() < 1e-15 && (out[1] - 0.7).abs() < 1e-15);

    // Simplex preservation across random responses and inputs.
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce554);
    for _ in 0..200 {
        let e0: f64 = rng.gen_range(0.0..0.45);
        let e1: f64 = rng.gen_range(0.0..0.45);
        let m = ReadoutModel::new([[1.0 - e0, e1], [e0, 1.0 - e1]]).unwrap();
        let p1: f64 = rng.gen_range(0.0..1.0);
        let t = bayes_unfold([1.0 - p1, p1], &m, 100).unwrap();
        assert!(t[0] >= -1e-12 && t[1] >= -1e-12 && (t[0] + t[1] - 1.0).abs() < 1e-9);
    }

    // Vertex target: p = M (1, 0). The 2x2 inversion oracle gives exactly
    // (1, 0); the criterion requires the iteration to reach it within 1e-6
    // after 100 rounds.
    let m = ReadoutModel::new([[0.9, 0.2], [0.1, 0.8]]).unwrap();
    let t = bayes_unfold([0.9, 0.1], &m, 100).unwrap();
    let dist = (t[0] - 1.0).abs().max(t[1].abs());
    let ok = dist < 1e-6;
    report(
        "4 (mitigation correctness)",
        ok,
        &format!(
            "identity fixed point and simplex preservation hold; vertex case reached |t - (1,0)| = {dist:.3e} after 100 iterations (multiplicative updates approach boundary fixed points as O(1/n); 1e-6 needs ~2e6 iterations)"
        ),
    );
    assert!(
        ok,
        "vertex-target mitigation off by {dist:.3e} after 100 iterations; the pinned tolerance is 1e-6"
    );
}

fn m1_truth() -> ModelParams {
    ModelParams::new(0.5, 0.02, 0.005, 0.015, KernelSpec::Exp { b0: 0.05 }).unwrap()
}

fn reconstruct_all(truth: &ModelParams, seed: u64) -> (Vec<BlochSeries>, PreparationSet) {
    let preps = PreparationSet::standard_five();
    let (ds, _) = simulate_dataset(
        truth,
        &preps,
        &default_times(),
        8192,
        &ReadoutModel::identity(),
        seed,
    )
    .unwrap();
    let set = preps
        .labels()
        .iter()
        .enumerate()
        .map(|(i, label)| {
            reconstruct_series(
                &ds,
                label,
                &ReconOptions {
                    bootstrap_resamples: 250,
                    unfold_iterations: 100,
                    seed: substream(seed, 1 + i as u64),
                },
            )
            .unwrap()
        })
        .collect();
    (set, preps)
}

/// Criterion 5: end-to-end recovery of omega_z and the three rates within
/// 5% relative, in at least 90% of 20 seeds, fitting the five-preparation
/// data set jointly; total runtime under ten minutes.
#[test]
fn criterion_5_parameter_recovery() {
    let started = Instant::now();
    let truth = m1_truth();
    let mut ok_seeds = 0;
    let mut worst_by_seed = Vec::new();
    for seed in 0..20u64 {
        let (set, _) = reconstruct_all(&truth, seed);
        let fit = fit_set_with_starts(
            &set,
            &FitConfig::new(ModelId::M1, substream(seed, 100)),
            &[],
        )
        .unwrap();
        let t = fit.theta;
        let worst = [
            (t.omega_z - truth.omega_z) / truth.omega_z,
            (t.gamma_z - truth.gamma_z) / truth.gamma_z,
            (t.gamma_plus - truth.gamma_plus) / truth.gamma_plus,
            (t.gamma_minus - truth.gamma_minus) / truth.gamma_minus,
        ]
        .iter()
        .map(|e| e.abs())
        .fold(0.0f64, f64::max);
        worst_by_seed.push(worst);
        if worst < 0.05 {
            ok_seeds += 1;
        }
    }
    let elapsed = started.elapsed();
    let ok = ok_seeds >= 18 && elapsed.as_secs_f64() < 600.0;
    report(
        "5 (parameter recovery)",
        ok,
        &format!(
            "{ok_seeds}/20 seeds within 5% (worst per-seed errors {:?}), runtime {elapsed:.2?}",
            worst_by_seed
                .iter()
                .map(|w| (w * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        ),
    );
    assert!(
        ok_seeds >= 18,
        "only {ok_seeds}/20 seeds recovered within 5%"
    );
    assert!(
        elapsed.as_secs_f64() < 600.0,
        "runtime {elapsed:?} exceeds ten minutes"
    );
}

/// Criterion 6: on the same synthetic data the ranking prefers a memory
/// kernel over the Lindblad model with Delta_0 > 4 in at least 90% of seeds.
#[test]
fn criterion_6_model_selection() {
    let truth = m1_truth();
    let mut ok_seeds = 0;
    let mut delta0s = Vec::new();
    for seed in 0..20u64 {
        let (set, _) = reconstruct_all(&truth, seed);
        let fits = fit_models_set(
            &set,
            &FitConfig::new(ModelId::M0, substream(seed, 200)),
            &ModelId::ALL,
        )
        .unwrap();
        let ranking = aic_rank(&fits).unwrap();
        let top = ranking[0].model;
        let delta0 = ranking
            .iter()
            .find(|r| r.model == ModelId::M0)
            .unwrap()
            .delta;
        delta0s.push(delta0);
        if (top == ModelId::M1 || top == ModelId::M2) && delta0 > 4.0 {
            ok_seeds += 1;
        }
    }
    let ok = ok_seeds >= 18;
    report(
        "6 (model selection)",
        ok,
        &format!(
            "{ok_seeds}/20 seeds rank a memory kernel first with Delta_0 > 4 (min Delta_0 = {:.1})",
            delta0s.iter().copied().fold(f64::INFINITY, f64::min)
        ),
    );
    assert!(ok, "only {ok_seeds}/20 seeds preferred the memory kernels");
}

/// Criterion 7: fitting only psi0 and predicting the four held-out
/// preparations, the memory model's median trace distance beats the
/// Lindblad model's on non-Markovian truth; on Markovian truth the
/// Lindblad median stays at the noise floor (<= 0.02).
#[test]
fn criterion_7_train_test_prediction() {
    let truth = m1_truth();
    let mut m1_wins = 0;
    for seed in 0..20u64 {
        let (set, _) = reconstruct_all(&truth, seed);
        let train = set.iter().find(|s| s.prep_label == "psi0").unwrap();
        let test: Vec<BlochSeries> = set
            .iter()
            .filter(|s| s.prep_label != "psi0")
            .cloned()
            .collect();
        let m0 = fit_model(train, &FitConfig::new(ModelId::M0, substream(seed, 300))).unwrap();
        let m1 = fit_model(train, &FitConfig::new(ModelId::M1, substream(seed, 301))).unwrap();
        let r0 = validate_predictions(&m0, &test).unwrap();
        let r1 = validate_predictions(&m1, &test).unwrap();
        if r1.p50 < r0.p50 {
            m1_wins += 1;
        }
    }

    let markovian = ModelParams::new(0.5, 0.02, 0.005, 0.015, KernelSpec::Delta).unwrap();
    let mut markov_ok = 0;
    let mut worst_median: f64 = 0.0;
    for seed in 0..20u64 {
        let (set, _) = reconstruct_all(&markovian, seed);
        let train = set.iter().find(|s| s.prep_label == "psi0").unwrap();
        let test: Vec<BlochSeries> = set
            .iter()
            .filter(|s| s.prep_label != "psi0")
            .cloned()
            .collect();
        let m0 = fit_model(train, &FitConfig::new(ModelId::M0, substream(seed, 302))).unwrap();
        let r0 = validate_predictions(&m0, &test).unwrap();
        worst_median = worst_median.max(r0.p50);
        if r0.p50 <= 0.02 {
            markov_ok += 1;
        }
    }

    let ok = m1_wins >= 18 && markov_ok >= 18;
    report(
        "7 (train/test prediction)",
        ok,
        &format!(
            "memory model beats Lindblad in {m1_wins}/20 seeds; Markovian-truth median <= 0.02 in {markov_ok}/20 (worst {worst_median:.4})"
        ),
    );
    assert!(m1_wins >= 18, "memory model won only {m1_wins}/20 seeds");
    assert!(
        markov_ok >= 18,
        "Markovian median exceeded 0.02 in {}/20 seeds",
        20 - markov_ok
    );
}

/// Criterion 8: the backflow measure vanishes exactly for impulse-kernel
/// models; the two computation paths agree within 2% on dense noiseless
/// samples; grid-refinement convergence is asserted by construction.
#[test]
fn criterion_8_nonmarkovianity() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce558);
    for _ in 0..50 {
        let theta = sample_theta(KernelKind::Delta, &mut rng);
        for (_, pair) in default_pairs() {
            let report = n_measure_model(&theta, pair, 100.0, 1e-4).unwrap();
            assert_eq!(
                report.n_measure, 0.0,
                "Markovian measure must vanish exactly"
            );
            assert!(report.grid_points.is_some(), "convergence must be asserted");
        }
    }

    // Dense-sample agreement between the two paths.
    let theta = ModelParams::new(0.5, 0.05, 0.002, 0.012, KernelSpec::Exp { b0: 0.02 }).unwrap();
    let prop = Propagator::build(&theta).unwrap();
    let mut worst_rel: f64 = 0.0;
    for (_, pair) in default_pairs() {
        let exact = n_measure_model(&theta, pair, 100.0, 1e-4).unwrap();
        assert!(exact.n_measure > 0.01);
        let n = 4000;
        let times: Vec<f64> = (0..=n).map(|i| 100.0 * i as f64 / n as f64).collect();
        let mk = |v0: BlochVector, label: &str| BlochSeries {
            prep_label: label.into(),
            prep: v0,
            mitigated: false,
            points: times
                .iter()
                .map(|&t| pmme_lab::recon::SeriesPoint {
                    t,
                    v: prop.propagate_bloch(&v0, t),
                    sigma: [1e-4; 3],
                })
                .collect(),
        };
        let d = distance_series(&mk(pair.0, "a"), &mk(pair.1, "b")).unwrap();
        let data = n_measure_data(&d).unwrap();
        let rel = (data.n_measure - exact.n_measure).abs() / exact.n_measure;
        worst_rel = worst_rel.max(rel);
        assert!(rel < 0.02, "paths disagree by {:.2}%", rel * 100.0);
    }
    report(
        "8 (non-Markovianity)",
        true,
        &format!(
            "Markovian measure exactly zero on 100 model/pair combinations; path agreement within {:.2}%",
            worst_rel * 100.0
        ),
    );
}

/// Criterion 9: a second-order kernel tuned to an exactly degenerate
/// (double) coherence pole stays within 1e-6 of the oracle.
#[test]
fn criterion_9_degenerate_pole() {
    // Constructed so the coherence cubic is (W + 0.15)^2 (W + 0.3) at
    // gamma_z = 0.02: a double root with zero cubic discriminant.
    let gz = 0.02;
    let (r, q) = (-0.15f64, -0.3f64);
    let b1 = 2.0 * gz - (2.0 * r + q);
    let b0 = (r * r + 2.0 * r * q) + 2.0 * gz * (b1 - 1.0);
    let a0 = b0 - r * r * q / (2.0 * gz);
    let theta =
        ModelParams::new(0.5, gz, 0.005, 0.015, KernelSpec::Rational2 { a0, b0, b1 }).unwrap();

    let times = oracle_grid();
    let v0 = BlochVector::new(0.6, -0.5, 0.3);
    let dev = max_bloch_deviation(&theta, v0, &times);
    let prop = Propagator::build(&theta).unwrap();
    for &t in &[0.0, 1.0, 10.0, 100.0, 1e5] {
        let v = prop.propagate_bloch(&v0, t);
        assert!(v.vx.is_finite() && v.vy.is_finite() && v.vz.is_finite());
    }
    let ok = dev < 1e-6;
    report(
        "9 (degenerate-pole robustness)",
        ok,
        &format!("double-root kernel deviates from the oracle by {dev:.3e}"),
    );
    assert!(ok, "degenerate-pole deviation {dev:.3e} exceeds 1e-6");
}
