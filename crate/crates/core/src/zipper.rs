//! The coupled field h = h_tilde o f_t + h_t and the conformal-welding
//! experiment.
//!
//! Conditioned on the reverse flow, the field in the slit domain is the
//! pullback of an independent free-boundary field plus the deterministic
//! flow martingale. Sampling that conditional law is cheap: draw a driver,
//! draw a free-boundary sample on a box, and evaluate
//!
//! ```text
//! h(z) = h_tilde(f_t(z)) + (2/sqrt(kappa)) log|f_t(z)| + Q log|f'_t(z)|
//! ```
//!
//! pointwise through the flow. Welded boundary arcs [x', 0] and [0, x] with
//! f_t(x') = f_t(x) then carry the same quantum length in law; at finite
//! grid resolution the experiment tests the shrinking of the mismatch as
//! the regularization radius decreases.

use num_complex::Complex64;

use crate::driver::DriverPath;
use crate::error::{LabError, Result};
use crate::gff::{self, BoundaryCondition, GridField};
use crate::loewner;
use crate::martingale;

/// Field view h(z) = h_tilde(f_t(z)) + h_t(z) for a fixed driver and base
/// free-boundary sample.
pub struct CoupledField<'a> {
    driver: &'a DriverPath,
    base: &'a GridField,
    steps: usize,
}

impl<'a> CoupledField<'a> {
    pub fn new(driver: &'a DriverPath, t: f64, base: &'a GridField) -> Result<Self> {
        if base.bc != BoundaryCondition::NeumannMeanZero {
            return Err(LabError::BoundaryCondition(
                "coupled field needs a free-boundary base sample".into(),
            ));
        }
        let steps = driver.steps_for(t)?;
        Ok(CoupledField {
            driver,
            base,
            steps,
        })
    }

    pub fn t(&self) -> f64 {
        self.steps as f64 * self.driver.dt
    }

    pub fn kappa(&self) -> f64 {
        self.driver.kappa
    }

    pub fn base(&self) -> &GridField {
        self.base
    }

    /// Evaluates the coupled field at one point. Fails with a geometry
    /// error when f_t(z) leaves the sampled base box (enlarge the box).
    pub fn value(&self, z: Complex64) -> Result<f64> {
        let state = loewner::reverse_final(self.driver, self.steps, z);
        let pulled = self.base.value_at(state.w)?;
        let mart = martingale::mart_h(&state, self.driver.kappa)?;
        Ok(pulled + mart)
    }
}

/// Welded-arc length comparison at one (driver, base field) member.
#[derive(Debug, Clone, Copy)]
pub struct WeldingLengths {
    pub x: f64,
    pub x_prime: f64,
    pub len_right: f64,
    pub len_left: f64,
    /// |len_right - len_left| / mean.
    pub rel_diff: f64,
}

/// Compares the regularized quantum boundary lengths of [0, x] and [x', 0]
/// under the coupled field, with x' the welded partner of x. Lengths are
/// computed in the pre-image coordinate with semicircle averages of the
/// coupled field and the gamma/2 boundary exponent, gamma = sqrt(kappa)
/// (the welding statement lives at kappa < 4).
pub fn welding_length_test(
    coupled: &CoupledField,
    x: f64,
    eps: f64,
) -> Result<WeldingLengths> {
    let kappa = coupled.kappa();
    if !(kappa > 0.0 && kappa < 4.0) {
        return Err(LabError::Domain(format!(
            "welding lengths are compared for kappa in (0, 4), got {kappa}"
        )));
    }
    let x_prime = loewner::find_welded_partner(coupled.driver, coupled.t(), x)?;
    welding_lengths_of_pair(coupled, x, x_prime, eps)
}

/// Same comparison for an already-matched pair (used by the ensemble runner
/// together with `sample_welded_pair`).
pub fn welding_lengths_of_pair(
    coupled: &CoupledField,
    x: f64,
    x_prime: f64,
    eps: f64,
) -> Result<WeldingLengths> {
    let kappa = coupled.kappa();
    let gamma = kappa.sqrt().min(4.0 / kappa.sqrt());
    let spacing = coupled.base.spacing();
    let x_origin = coupled.base.origin().re;
    let len_right = gff::boundary_quantum_length_with(
        |z| coupled.value(z),
        x_origin,
        spacing,
        gamma,
        0.0,
        x,
        eps,
    )?;
    let len_left = gff::boundary_quantum_length_with(
        |z| coupled.value(z),
        x_origin,
        spacing,
        gamma,
        x_prime,
        0.0,
        eps,
    )?;
    let mean = 0.5 * (len_right + len_left);
    Ok(WeldingLengths {
        x,
        x_prime,
        len_right,
        len_left,
        rel_diff: (len_right - len_left).abs() / mean,
    })
}

/// Axis-aligned quadrature rectangle strictly inside the upper half-plane.
#[derive(Debug, Clone, Copy)]
pub struct Rectangle {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CovarianceCheck {
    pub m: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

/// Change-of-variables check of the conformal covariance of the intrinsic
/// length density: the pulled-back form `|f'_t|^d G` integrated over D
/// against `N_t(w) = G(f_t^{-1}(w)) |f'_t|^(d-2)` integrated over f_t(D).
///
/// The left side is a tensor trapezoid rule on the (m+1)^2 corner grid of
/// D. The right side integrates over the pushed-forward mesh: each mapped
/// cell contributes its shoelace quadrilateral area times the mean of N at
/// its corners, with N evaluated through the exact inverse flow (forward
/// flow with the time-reversed negated driver), so the two routes share no
/// derivative arithmetic.
pub fn covariance_transform_check(
    driver: &DriverPath,
    t: f64,
    rect: Rectangle,
    m: usize,
) -> Result<CovarianceCheck> {
    if !(rect.x1 > rect.x0 && rect.y1 > rect.y0) {
        return Err(LabError::Domain("degenerate rectangle".into()));
    }
    if rect.y0 < 0.1 || rect.x0.abs().min(rect.x1.abs()).hypot(rect.y0) < 0.1 {
        return Err(LabError::Geometry(
            "rectangle must keep a 0.1 margin from the axis and origin".into(),
        ));
    }
    if m < 2 {
        return Err(LabError::Config("need at least a 2x2 cell grid".into()));
    }
    let steps = driver.steps_for(t)?;
    let kappa = driver.kappa;
    let d = 1.0 + kappa / 8.0;
    let a = 1.0 - 8.0 / kappa;
    let b = 8.0 / kappa + kappa / 8.0 - 2.0;
    let g_density = |z: Complex64| z.norm().powf(a) * z.im.powf(b);

    let hx = (rect.x1 - rect.x0) / m as f64;
    let hy = (rect.y1 - rect.y0) / m as f64;
    let nodes = m + 1;
    let inverse_driver = driver.time_reversed_negated();

    // Corner passes, parallel over rows.
    let rows: Vec<(Vec<f64>, Vec<Complex64>, Vec<f64>)> = crate::mc::collect_parallel(
        nodes as u64,
        |jj| {
            let j = jj as usize;
            let y = rect.y0 + hy * j as f64;
            let mut f_vals = Vec::with_capacity(nodes);
            let mut images = Vec::with_capacity(nodes);
            let mut n_vals = Vec::with_capacity(nodes);
            for i in 0..nodes {
                let z = Complex64::new(rect.x0 + hx * i as f64, y);
                let fwd = loewner::reverse_final(driver, steps, z);
                f_vals.push(g_density(z) * fwd.dw.norm().powf(d));
                images.push(fwd.w);
                // Independent route: recover z and f' through the inverse flow.
                let back = loewner::forward_final(&inverse_driver, steps, fwd.w);
                let z_rec = back.w;
                let deriv = 1.0 / back.dw.norm();
                n_vals.push(g_density(z_rec) * deriv.powf(d - 2.0));
            }
            (f_vals, images, n_vals)
        },
    );

    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for j in 0..m {
        let (f0, w0, n0) = &rows[j];
        let (f1, w1, n1) = &rows[j + 1];
        for i in 0..m {
            let corners_f = f0[i] + f0[i + 1] + f1[i] + f1[i + 1];
            lhs += 0.25 * corners_f * hx * hy;

            let (wa, wb, wc, wd) = (w0[i], w0[i + 1], w1[i + 1], w1[i]);
            let quad_area = 0.5
                * ((wa.re * wb.im - wb.re * wa.im)
                    + (wb.re * wc.im - wc.re * wb.im)
                    + (wc.re * wd.im - wd.re * wc.im)
                    + (wd.re * wa.im - wa.re * wd.im))
                    .abs();
            let corners_n = n0[i] + n0[i + 1] + n1[i] + n1[i + 1];
            rhs += 0.25 * corners_n * quad_area;
        }
    }

    Ok(CovarianceCheck {
        m,
        lhs,
        rhs,
        rel_err: (lhs - rhs).abs() / lhs.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::{Domain, GffSampler};
    use crate::mc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn box_sampler(n: usize) -> GffSampler {
        GffSampler::new(
            Domain::HalfPlaneBox {
                half_width: 3.0,
                height: 2.0,
            },
            n,
            BoundaryCondition::NeumannMeanZero,
        )
        .unwrap()
    }

    #[test]
    fn coupling_at_time_zero_is_the_seed_term() {
        let d = DriverPath::sample(2.0, 0.1, 1e-3, 3).unwrap();
        let s = box_sampler(192);
        let base = s.sample(5);
        let coupled = CoupledField::new(&d, 0.0, &base).unwrap();
        let sk = 2.0f64.sqrt();
        for j in (1..base.ny()).step_by(17) {
            for i in (0..base.nx()).step_by(13) {
                let z = base.node_position(i, j);
                let h = coupled.value(z).unwrap();
                let expect = base.node_value(i, j) + 2.0 / sk * z.norm().ln();
                assert!(
                    (h - expect).abs() <= 1e-10 * (1.0 + expect.abs()),
                    "mismatch at {z}: {h} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn coupling_zero_driver_closed_form() {
        // t = 1, z = i, kappa = 4: h(i) = h_tilde(i sqrt 5) - (1/2) log 5.
        let d = DriverPath::sample(0.0, 1.0, 1e-3, 0).unwrap();
        let s = GffSampler::new(
            Domain::HalfPlaneBox {
                half_width: 2.0,
                height: 3.0,
            },
            128,
            BoundaryCondition::NeumannMeanZero,
        )
        .unwrap();
        let mut base = s.sample(7);
        base.values_mut().iter_mut().for_each(|v| *v *= 0.0);
        base.add_constant(1.25);
        let mut d4 = d.clone();
        d4.kappa = 4.0;
        let coupled = CoupledField::new(&d4, 1.0, &base).unwrap();
        let h = coupled.value(c(0.0, 1.0)).unwrap();
        let expect = 1.25 - 0.5 * 5.0f64.ln();
        assert!((h - expect).abs() < 1e-9, "{h} vs {expect}");
    }

    #[test]
    fn conditional_expectation_is_the_flow_martingale() {
        // With a fixed driver and a mean-zero base ensemble, the empirical
        // mean of h(z) converges to h_t(z) at each probe.
        let driver = DriverPath::sample(2.0, 0.25, 2e-3, 4242).unwrap();
        let sampler = box_sampler(192);
        let probes = [c(0.4, 0.9), c(-0.7, 0.5), c(0.0, 1.4), c(1.2, 0.3), c(-1.5, 1.0)];
        let steps = driver.steps_for(0.25).unwrap();
        let n = 2000u64;
        let rows: Vec<Vec<f64>> = mc::collect_parallel(n, |i| {
            let base = sampler.sample(mc::derive_seed(77, "cond_exp", i));
            let coupled = CoupledField::new(&driver, 0.25, &base).unwrap();
            probes.iter().map(|&z| coupled.value(z).unwrap()).collect()
        });
        for (p, &z) in probes.iter().enumerate() {
            let mut acc = mc::McAccumulator::new();
            for row in &rows {
                acc.push(row[p]);
            }
            let state = loewner::reverse_final(&driver, steps, z);
            let target = martingale::mart_h(&state, 2.0).unwrap();
            let est = mc::McEstimate::from_accumulator(&acc, target);
            assert!(
                est.within_sigmas(3.5),
                "probe {z}: mean {} target {target} z-score {}",
                est.mean,
                est.z_score
            );
        }
    }

    #[test]
    fn welding_symmetric_control_is_exact() {
        // Zero driver with a reflection-symmetrized base: the two arcs are
        // mirror images, so the lengths agree to rounding.
        let driver = DriverPath::sample(0.0, 0.25, 1e-3, 0).unwrap();
        let mut d2 = driver.clone();
        d2.kappa = 2.0;
        let sampler = box_sampler(256);
        let mut base = sampler.sample(9);
        base.symmetrize();
        let coupled = CoupledField::new(&d2, 0.25, &base).unwrap();
        let r = welding_length_test(&coupled, 0.5, 0.1).unwrap();
        assert!((r.x_prime + 0.5).abs() < 1e-9);
        assert!(
            r.rel_diff <= 1e-10,
            "symmetric control rel_diff = {}",
            r.rel_diff
        );
    }

    #[test]
    fn welding_rejects_large_kappa() {
        let driver = DriverPath::sample(6.0, 0.25, 1e-3, 1).unwrap();
        let sampler = box_sampler(64);
        let base = sampler.sample(0);
        let coupled = CoupledField::new(&driver, 0.25, &base).unwrap();
        assert!(matches!(
            welding_length_test(&coupled, 0.3, 0.1),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn gamma_zero_lengths_are_euclidean() {
        // With gamma forced to 0 via kappa -> 0 limit semantics the measure
        // is Euclidean; here we check the negative control directly: the
        // Euclidean lengths of the welded arcs differ.
        let driver = DriverPath::sample(2.0, 0.25, 1e-3, 33).unwrap();
        let t = 0.25;
        let (x, xp) = loewner::sample_welded_pair(&driver, t).unwrap();
        // Euclidean lengths are x and |x'|; they generically differ.
        assert!((x - xp.abs()).abs() > 1e-6, "degenerate control pair");
    }

    #[test]
    fn covariance_check_identity_at_time_zero() {
        let d = DriverPath::sample(2.0, 0.1, 1e-3, 5).unwrap();
        let rect = Rectangle {
            x0: 1.0,
            x1: 2.0,
            y0: 1.0,
            y1: 2.0,
        };
        let chk = covariance_transform_check(&d, 0.0, rect, 40).unwrap();
        assert!(
            chk.rel_err <= 1e-12,
            "t = 0 should be the same integral, rel_err = {}",
            chk.rel_err
        );
    }

    #[test]
    fn covariance_check_zero_driver_converges_quadratically() {
        let mut d = DriverPath::sample(0.0, 1.0, 1e-3, 0).unwrap();
        d.kappa = 6.0;
        let rect = Rectangle {
            x0: 1.0,
            x1: 2.0,
            y0: 1.0,
            y1: 2.0,
        };
        let e50 = covariance_transform_check(&d, 1.0, rect, 50).unwrap();
        let e100 = covariance_transform_check(&d, 1.0, rect, 100).unwrap();
        let ratio = e100.rel_err / e50.rel_err;
        assert!(
            ratio < 0.4,
            "expected ~0.25 (order 2), got {ratio} ({} -> {})",
            e50.rel_err,
            e100.rel_err
        );
        assert!(e100.rel_err < 1e-5, "rel_err(100) = {}", e100.rel_err);
    }

    #[test]
    fn covariance_check_kappa_eight_is_area() {
        // G = 1 and d = 2 at kappa = 8: the left side is the area of the
        // image region, the right side the polygon area of the mapped mesh.
        let mut d = DriverPath::sample(0.0, 0.5, 1e-3, 0).unwrap();
        d.kappa = 8.0;
        let rect = Rectangle {
            x0: -0.5,
            x1: 0.75,
            y0: 0.4,
            y1: 1.3,
        };
        let chk = covariance_transform_check(&d, 0.5, rect, 80).unwrap();
        // Zero-driver closed form: image area of sqrt(z^2 - 4t) over rect.
        // Oracle: fine midpoint quadrature of the Jacobian |f'|^2.
        let mm = 400;
        let hx = 1.25 / mm as f64;
        let hy = 0.9 / mm as f64;
        let mut area = 0.0;
        for j in 0..mm {
            for i in 0..mm {
                let z = c(-0.5 + hx * (i as f64 + 0.5), 0.4 + hy * (j as f64 + 0.5));
                let fp = z / (z * z - 2.0).sqrt();
                area += fp.norm_sqr() * hx * hy;
            }
        }
        assert!(
            (chk.lhs - area).abs() < 2e-3 * area,
            "lhs {} vs midpoint oracle {area}",
            chk.lhs
        );
        assert!(chk.rel_err < 1e-4, "rel_err = {}", chk.rel_err);
    }

    #[test]
    fn covariance_check_rejects_bad_rectangles() {
        let d = DriverPath::sample(2.0, 0.1, 1e-3, 5).unwrap();
        let low = Rectangle {
            x0: 1.0,
            x1: 2.0,
            y0: 0.05,
            y1: 1.0,
        };
        assert!(covariance_transform_check(&d, 0.1, low, 10).is_err());
    }
}
