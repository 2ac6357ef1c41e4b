//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Tolerances are pinned in the assertions; Monte-Carlo criteria use fixed
//! master seeds, so every run is reproducible bit for bit.

use num_complex::Complex64;
use sle_lqg_core::analytic::{self, HalfPlanePoint, LqgParams};
use sle_lqg_core::driver::DriverPath;
use sle_lqg_core::gff::{self, BoundaryCondition, Domain, GffSampler};
use sle_lqg_core::loewner;
use sle_lqg_core::martingale::{self, McExperiment, McQuantity};
use sle_lqg_core::mc;
use sle_lqg_core::zipper::{self, CoupledField, Rectangle};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} -- {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_exponent_table() {
    let mut worst_q = 0.0f64;
    let mut worst_d = 0.0f64;
    for &k in &[2.0, 8.0 / 3.0, 3.0, 4.0, 6.0, 8.0] {
        let p = LqgParams::from_kappa(k).unwrap();
        worst_q = worst_q.max((p.q - p.q_from_kappa()).abs());
        let d = analytic::kpz_dimension(p.alpha_bulk, &p);
        worst_d = worst_d.max((d - (1.0 + k / 8.0)).abs());
    }
    let mut worst_db = 0.0f64;
    for &k in &[5.0, 6.0, 7.0] {
        let p = LqgParams::from_kappa(k).unwrap();
        let d = analytic::kpz_dimension_boundary(p.beta_boundary, &p);
        worst_db = worst_db.max((d - (2.0 - 8.0 / k)).abs());
    }
    report(
        "01 exponent table",
        worst_q <= 1e-14 && worst_d <= 1e-14 && worst_db <= 1e-14,
        &format!("|dQ| = {worst_q:.2e}, |dd| = {worst_d:.2e}, |dd_hat| = {worst_db:.2e}"),
    );
}

#[test]
fn criterion_02_dual_form_identity() {
    let worst = martingale::dual_form_sweep(2.0, c(1.0, 1.0), 0.3, 0.5, 1e-3, 100, 20260101)
        .unwrap();
    report(
        "02 dual form identity",
        worst <= 1e-10,
        &format!("worst relative gap over 100 paths x 501 states = {worst:.3e}"),
    );
}

#[test]
fn criterion_03_pathwise_hadamard_qv() {
    let qv = martingale::identity_order_test(
        2.0,
        c(1.0, 1.0),
        None,
        0.5,
        1e-4,
        100,
        31415,
        "acceptance_qv",
    )
    .unwrap();
    let cov = martingale::identity_order_test(
        3.0,
        c(-1.0, 2.0),
        Some(c(1.0, 1.0)),
        0.5,
        1e-4,
        100,
        27182,
        "acceptance_cov",
    )
    .unwrap();

    let zero = DriverPath::sample(0.0, 1.0, 1e-3, 0).unwrap();
    let traj = loewner::reverse_flow(&zero, c(0.0, 1.0), None).unwrap();
    let qv_exact = martingale::pathwise_qv_check(&traj).unwrap().abs_err;
    let traj = loewner::reverse_flow(&zero, c(0.0, 2.0), Some(c(0.0, 1.0))).unwrap();
    let cov_exact = martingale::pathwise_covariation_check(&traj).unwrap().abs_err;

    let in_band = |r: f64| r > 0.3 && r < 0.7;
    report(
        "03 pathwise Hadamard/QV",
        in_band(qv.ratio) && in_band(cov.ratio) && qv_exact <= 1e-10 && cov_exact <= 1e-10,
        &format!(
            "qv ratio {:.3}, covariation ratio {:.3}, exact-zero errors {qv_exact:.2e}/{cov_exact:.2e}",
            qv.ratio, cov.ratio
        ),
    );
}

#[test]
fn criterion_04_expectation_identities_mc() {
    let mut all = true;
    let mut lines = Vec::new();
    for (kappa, alpha) in [(8.0 / 3.0, 0.3), (4.0, 0.3), (6.0, 0.25)] {
        let h = martingale::mc_expectation(&McExperiment {
            quantity: McQuantity::MartH,
            start: c(0.0, 2.0),
            kappa,
            total_time: 0.5,
            dt: 1e-3,
            n_paths: 10_000,
            master_seed: 8844,
            label: "acc_mart_h",
        })
        .unwrap();
        let m = martingale::mc_expectation(&McExperiment {
            quantity: McQuantity::ExpMartBulk { alpha },
            start: c(0.0, 2.0),
            kappa,
            total_time: 0.5,
            dt: 1e-3,
            n_paths: 10_000,
            master_seed: 8845,
            label: "acc_exp_mart",
        })
        .unwrap();
        all &= h.estimate.within_sigmas(3.0) && m.estimate.within_sigmas(3.0);
        lines.push(format!(
            "kappa {kappa:.3}: z_h = {:.2}, z_M = {:.2}",
            h.estimate.z_score, m.estimate.z_score
        ));
    }
    report("04 expectation identities", all, &lines.join("; "));
}

#[test]
fn criterion_05_gff_moment_scaling() {
    let sampler = GffSampler::new(
        Domain::UnitDisc { margin: 0.2 },
        256,
        BoundaryCondition::Dirichlet,
    )
    .unwrap();
    let eps = [0.05, 0.074, 0.11, 0.165, 0.25];
    let mut all = true;
    let mut lines = Vec::new();
    for (gamma, seed) in [(1.0, 21u64), (2.0f64.sqrt(), 22u64)] {
        let fit = gff::moment_test(&sampler, gamma, c(0.0, 0.0), &eps, 2000, seed).unwrap();
        let target = gamma * gamma / 2.0;
        let ok = (fit.slope - target).abs() <= 3.0 * fit.stderr;
        all &= ok;
        lines.push(format!(
            "gamma {gamma:.3}: slope {:.4} +- {:.4} vs {target:.3}",
            fit.slope, fit.stderr
        ));
    }
    report("05 moment scaling", all, &lines.join("; "));
}

#[test]
fn criterion_06_density_identities() {
    let mut worst_len = 0.0f64;
    let mut worst_area = 0.0f64;
    for &kappa in &[2.0, 3.0, 4.0, 6.0, 8.0] {
        let p = LqgParams::from_kappa(kappa).unwrap();
        for i in 0..10 {
            for j in 1..=10 {
                let z = HalfPlanePoint::new(-2.0 + 0.45 * i as f64, 0.3 * j as f64).unwrap();
                let direct = analytic::expected_bulk_length_density(z, kappa).unwrap();
                let factored = analytic::exp_martingale_initial(z, p.alpha_bulk, kappa).unwrap()
                    * analytic::natural_param_density(z, kappa).unwrap();
                worst_len = worst_len.max((direct - factored).abs() / direct.abs().max(1.0));

                let area = analytic::expected_area_density(z, kappa).unwrap();
                let mart = analytic::exp_martingale_initial(z, p.gamma, kappa).unwrap();
                worst_area = worst_area.max((area - mart).abs() / area.abs().max(1.0));
            }
        }
    }
    // Euclidean coincidences: area density at kappa = 4, boundary
    // intersection density at kappa = 6 are identically one.
    let mut coincidences = true;
    for i in 1..=20 {
        let z = HalfPlanePoint::new(-2.0 + 0.21 * i as f64, 0.17 * i as f64).unwrap();
        coincidences &= analytic::expected_bulk_length_density(z, 4.0).unwrap() == 1.0;
        let d = analytic::expected_boundary_densities(0.3 * i as f64, 6.0).unwrap();
        coincidences &= d.intersection_density.unwrap() == 1.0;
    }
    report(
        "06 density identities",
        worst_len <= 1e-12 && worst_area <= 1e-12 && coincidences,
        &format!("length id {worst_len:.2e}, area id {worst_area:.2e}, Euclidean coincidences exact"),
    );
}

#[test]
fn criterion_07_forward_length_martingale_mc() {
    let r = martingale::mc_expectation(&McExperiment {
        quantity: McQuantity::ForwardLength,
        start: c(0.0, 2.0),
        kappa: 2.0,
        total_time: 0.3,
        dt: 1e-3,
        n_paths: 10_000,
        master_seed: 9090,
        label: "acc_fwd_len",
    })
    .unwrap();

    let d8 = DriverPath::sample(8.0, 0.1, 1e-3, 3).unwrap();
    let traj = loewner::forward_flow(&d8, c(0.3, 1.1)).unwrap();
    let mut worst8 = 0.0f64;
    for s in traj.states().iter().filter(|s| s.alive) {
        worst8 = worst8.max((martingale::forward_length_martingale(s, 8.0).unwrap() - 1.0).abs());
    }
    report(
        "07 forward length martingale",
        r.estimate.within_sigmas(3.0) && r.exclusion_rate() < 0.01 && worst8 <= 1e-12,
        &format!(
            "z = {:.2}, exclusions {:.4}, kappa-8 degeneracy {worst8:.2e}",
            r.estimate.z_score,
            r.exclusion_rate()
        ),
    );
}

#[test]
fn criterion_08_conformal_covariance_quadrature() {
    let mut driver = DriverPath::sample(0.0, 1.0, 1e-3, 0).unwrap();
    driver.kappa = 6.0;
    let rect = Rectangle {
        x0: 1.0,
        x1: 2.0,
        y0: 1.0,
        y1: 2.0,
    };
    let mut errs = Vec::new();
    for m in [50, 100, 200] {
        errs.push(
            zipper::covariance_transform_check(&driver, 1.0, rect, m)
                .unwrap()
                .rel_err,
        );
    }
    let final_ok = errs[2] <= 1e-6;
    let order_ok = errs[1] / errs[0] < 0.4 && errs[2] / errs[1] < 0.4;
    report(
        "08 conformal covariance",
        final_ok && order_ok,
        &format!(
            "rel_err(200) = {:.3e}, ratios {:.3}/{:.3}",
            errs[2],
            errs[1] / errs[0],
            errs[2] / errs[1]
        ),
    );
}

#[test]
fn criterion_09_welding_trend() {
    // Exploratory per the acceptance wording, but deterministic under the
    // pinned seed, so the observed trend is asserted as a regression check.
    let kappa = 2.0;
    let t = 0.25;
    let dt = 2e-3;
    let n_members = 500u64;
    let eps_list = [0.08, 0.04, 0.02];
    let seed = 51u64;

    let members: Vec<Option<(Vec<f64>, f64)>> = mc::collect_parallel(n_members, |i| {
        let driver =
            DriverPath::sample(kappa, t, dt, mc::derive_seed(seed, "welding_driver", i)).unwrap();
        let (x, x_prime) = loewner::sample_welded_pair(&driver, t).ok()?;
        let mut cum = 0.0;
        let mut cum_max = 0.0f64;
        for d in driver.increments() {
            cum += d;
            cum_max = cum_max.max(cum.abs());
        }
        let half_width = (x.max(-x_prime) + cum_max + 2.0 * t.sqrt() + 0.5).max(2.0);
        let nx = ((2.0 * half_width / 0.01).ceil() as usize).max(64);
        let sampler = GffSampler::new(
            Domain::HalfPlaneBox {
                half_width,
                height: 1.4,
            },
            nx,
            BoundaryCondition::NeumannMeanZero,
        )
        .ok()?;
        let base = sampler.sample(mc::derive_seed(seed, "welding_field", i));
        let coupled = CoupledField::new(&driver, t, &base).unwrap();
        let mut rel = Vec::new();
        for &eps in &eps_list {
            rel.push(zipper::welding_lengths_of_pair(&coupled, x, x_prime, eps).ok()?.rel_diff);
        }
        let euclid = (x - x_prime.abs()).abs() / (0.5 * (x + x_prime.abs()));
        Some((rel, euclid))
    });
    let kept: Vec<&(Vec<f64>, f64)> = members.iter().flatten().collect();
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let medians: Vec<f64> = (0..eps_list.len())
        .map(|k| median(kept.iter().map(|m| m.0[k]).collect()))
        .collect();
    let control = median(kept.iter().map(|m| m.1).collect());
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let kept_enough = kept.len() as f64 >= 0.95 * n_members as f64;
    report(
        "09 welding trend (non-gating by spec; deterministic here)",
        decreasing && kept_enough && control > 0.0,
        &format!(
            "medians {medians:?} over eps {eps_list:?}; Euclidean control {control:.3} is eps-independent; kept {}",
            kept.len()
        ),
    );
}

#[test]
fn criterion_10_determinism_across_workers() {
    let run_all = || -> Vec<f64> {
        let mut vals = Vec::new();
        let r = martingale::mc_expectation(&McExperiment {
            quantity: McQuantity::MartH,
            start: c(0.0, 2.0),
            kappa: 8.0 / 3.0,
            total_time: 0.25,
            dt: 1e-3,
            n_paths: 2000,
            master_seed: 777,
            label: "det_check",
        })
        .unwrap();
        vals.push(r.estimate.mean);
        vals.push(r.estimate.stderr);
        let t = martingale::identity_order_test(
            2.0,
            c(1.0, 1.0),
            None,
            0.25,
            1e-3,
            32,
            778,
            "det_qv",
        )
        .unwrap();
        vals.push(t.err_coarse);
        vals.push(t.err_fine);
        let sampler = GffSampler::new(
            Domain::UnitDisc { margin: 0.2 },
            64,
            BoundaryCondition::Dirichlet,
        )
        .unwrap();
        let fit = gff::moment_test(&sampler, 1.0, c(0.0, 0.0), &[0.08, 0.12, 0.2], 1000, 779)
            .unwrap();
        vals.push(fit.slope);
        vals.push(fit.stderr);
        vals
    };
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run_all);
    let eight = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap()
        .install(run_all);
    let identical = one
        .iter()
        .zip(eight.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    report(
        "10 determinism",
        identical,
        &format!("{} quantities bit-identical across 1 and 8 workers", one.len()),
    );
}
