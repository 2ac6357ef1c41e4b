//! Martingale evaluators along Loewner flows and their verification
//! machinery.
//!
//! The reverse flow carries the field-average process
//!
//! ```text
//! h_t(z) = (2/sqrt(kappa)) log|f_t(z)| + Q log|f'_t(z)|,
//! ```
//!
//! a local martingale for Q = sqrt(kappa)/2 + 2/sqrt(kappa), with increments
//! `dh_t = -R_t dB_t`, `R_t(z) = Re[2/f_t(z)]`. Its quadratic variation is
//! the drop of the conformal factor `C_t(z) = -log[Im f_t(z) |f'_t(z)|]`,
//! and the covariation of two points is the drop of the free-boundary Green
//! function under the flow (the pathwise Hadamard identity). Exponentiating
//! gives the conditional-moment martingales in two algebraically identical
//! forms, which are evaluated together and compared on every call.

use num_complex::Complex64;

use crate::analytic::{self, HalfPlanePoint};
use crate::driver::DriverPath;
use crate::error::{LabError, Result};
use crate::loewner::{self, FlowState, FlowTrajectory};
use crate::mc::{self, McAccumulator, McEstimate};

/// Tolerance for the dual closed forms of the exponential martingales.
pub const DUAL_FORM_RTOL: f64 = 1e-10;

fn q_of(kappa: f64) -> f64 {
    let sk = kappa.sqrt();
    sk / 2.0 + 2.0 / sk
}

/// h_t at a flow state: (2/sqrt(kappa)) log|w| + Q log|dw|.
pub fn mart_h(state: &FlowState, kappa: f64) -> Result<f64> {
    state.require_alive()?;
    let r = state.w.norm();
    if r == 0.0 {
        return Err(LabError::Singularity("mart_h at the seed (w = 0)".into()));
    }
    Ok(2.0 / kappa.sqrt() * r.ln() + q_of(kappa) * state.dw.norm().ln())
}

/// Conformal factor C_t = -log(Im w * |dw|).
pub fn conformal_factor(state: &FlowState) -> Result<f64> {
    state.require_alive()?;
    if state.w.im <= 0.0 {
        return Err(LabError::Singularity(
            "conformal factor needs an interior state".into(),
        ));
    }
    Ok(-(state.w.im * state.dw.norm()).ln())
}

/// Bulk exponential martingale at a state, computed through both closed
/// forms:
///
/// ```text
/// exp[alpha h_t + (alpha^2/2) C_t]
///   = |w|^(2 alpha/sqrt(kappa)) |f'|^(alpha Q - alpha^2/2) (Im w)^(-alpha^2/2)
/// ```
///
/// The forms must agree to [`DUAL_FORM_RTOL`]; disagreement is an internal
/// consistency fault, not a user error.
pub fn exp_martingale_bulk(state: &FlowState, alpha: f64, kappa: f64) -> Result<f64> {
    let h = mart_h(state, kappa)?;
    let c = conformal_factor(state)?;
    let via_log = (alpha * h + 0.5 * alpha * alpha * c).exp();

    let q = q_of(kappa);
    let w = state.w;
    let direct = w.norm().powf(2.0 * alpha / kappa.sqrt())
        * state.dw.norm().powf(alpha * q - 0.5 * alpha * alpha)
        * w.im.powf(-0.5 * alpha * alpha);

    let scale = direct.abs().max(via_log.abs()).max(f64::MIN_POSITIVE);
    if (direct - via_log).abs() > DUAL_FORM_RTOL * scale {
        return Err(LabError::Inconsistency(format!(
            "bulk martingale forms disagree: {direct} vs {via_log} at w = {w}"
        )));
    }
    Ok(direct)
}

/// Boundary exponential martingale u^(2 beta/sqrt(kappa)) (f')^(beta Q - beta^2)
/// at a real tracked point right of the welding window, cross-checked against
/// the `exp(beta h) (f')^(-beta^2)` form.
pub fn exp_martingale_boundary(state: &FlowState, beta: f64, kappa: f64) -> Result<f64> {
    state.require_alive()?;
    if state.w.im != 0.0 {
        return Err(LabError::Domain(format!(
            "boundary martingale needs a real tracked point; w = {} is on the curve",
            state.w
        )));
    }
    let u = state.w.re;
    if u <= 0.0 {
        return Err(LabError::Domain(format!(
            "boundary martingale needs u = f_t(x) > 0, got {u}"
        )));
    }
    let fp = state.dw.re;
    let q = q_of(kappa);
    let direct = u.powf(2.0 * beta / kappa.sqrt()) * fp.powf(beta * q - beta * beta);
    let h = 2.0 / kappa.sqrt() * u.ln() + q * fp.ln();
    let via_log = (beta * h).exp() * fp.powf(-beta * beta);
    let scale = direct.abs().max(via_log.abs()).max(f64::MIN_POSITIVE);
    if (direct - via_log).abs() > DUAL_FORM_RTOL * scale {
        return Err(LabError::Inconsistency(format!(
            "boundary martingale forms disagree: {direct} vs {via_log}"
        )));
    }
    Ok(direct)
}

/// Result of a pathwise identity check.
#[derive(Debug, Clone, Copy)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
}

/// Pathwise quadratic-variation identity: the accumulated integral of
/// R_s(z)^2 ds against the conformal-factor drop C_0 - C_t.
pub fn pathwise_qv_check(traj: &FlowTrajectory) -> Result<IdentityCheck> {
    let first = traj.state(0);
    if first.w.im <= 0.0 {
        return Err(LabError::Singularity(
            "qv check tracks an interior point".into(),
        ));
    }
    let n = traj.n_steps();
    let lhs = traj.int_r_squared(n);
    let rhs = conformal_factor(first)? - conformal_factor(traj.final_state())?;
    Ok(IdentityCheck {
        lhs,
        rhs,
        abs_err: (lhs - rhs).abs(),
    })
}

/// Pathwise covariation identity for a tracked pair: the accumulated
/// integral of R_s(y) R_s(z) ds against the Green-function drop
/// G_0(y, z) - G_0(f_t(y), f_t(z)).
pub fn pathwise_covariation_check(traj: &FlowTrajectory) -> Result<IdentityCheck> {
    if !traj.has_pair() {
        return Err(LabError::Config(
            "covariation check needs a trajectory tracking a pair".into(),
        ));
    }
    let n = traj.n_steps();
    let z0 = traj.state(0).w;
    let y0 = traj.pair_state(0).unwrap().w;
    if z0 == y0 {
        return Err(LabError::Singularity("coincident pair".into()));
    }
    let zt = traj.final_state().w;
    let yt = traj.pair_state(n).unwrap().w;
    let lhs = traj.int_r_pair(n).unwrap();
    let rhs = analytic::neumann_green_raw(y0, z0) - analytic::neumann_green_raw(yt, zt);
    Ok(IdentityCheck {
        lhs,
        rhs,
        abs_err: (lhs - rhs).abs(),
    })
}

/// Forward-flow local martingale M_t = G(g_t(z)) |g'_t(z)|^(2-d), the
/// density of the expected intrinsic length of the remaining curve.
pub fn forward_length_martingale(state: &FlowState, kappa: f64) -> Result<f64> {
    state.require_alive()?;
    let d = 1.0 + kappa / 8.0;
    let g = analytic::natural_param_density(HalfPlanePoint::from_complex(state.w)?, kappa)?;
    Ok(g * state.dw.norm().powf(2.0 - d))
}

/// Forward-flow boundary martingale (g_t(x) / g'_t(x))^(d_hat - 1),
/// defined for kappa in (4, 8).
pub fn forward_boundary_martingale(state: &FlowState, kappa: f64) -> Result<f64> {
    if !(kappa > 4.0 && kappa < 8.0) {
        return Err(LabError::Domain(format!(
            "boundary measure exists for kappa in (4, 8), got {kappa}"
        )));
    }
    state.require_alive()?;
    if state.w.im != 0.0 || state.w.re <= 0.0 {
        return Err(LabError::Domain(
            "boundary martingale tracks a positive real point".into(),
        ));
    }
    let d_hat = 2.0 - 8.0 / kappa;
    Ok((state.w.re / state.dw.re).powf(d_hat - 1.0))
}

/// Quantity estimated by a Monte-Carlo expectation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McQuantity {
    /// h_T(z) under the reverse flow; target h_0(z).
    MartH,
    /// Bulk exponential martingale at T under the reverse flow; target its
    /// initial value.
    ExpMartBulk { alpha: f64 },
    /// Forward-flow length martingale M_T(z); target G(z). Swallowed paths
    /// are excluded and counted.
    ForwardLength,
    /// Forward-flow boundary martingale at a real x > 0; target x^(d_hat-1).
    ForwardBoundary,
}

/// Configuration of one expectation-identity experiment.
#[derive(Debug, Clone)]
pub struct McExperiment {
    pub quantity: McQuantity,
    pub start: Complex64,
    pub kappa: f64,
    pub total_time: f64,
    pub dt: f64,
    pub n_paths: u64,
    pub master_seed: u64,
    /// Label mixed into per-path seeds, so distinct experiments decorrelate.
    pub label: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct McRunResult {
    pub estimate: McEstimate,
    /// Paths excluded because the tracked point was swallowed before T.
    pub excluded: u64,
}

impl McRunResult {
    pub fn exclusion_rate(&self) -> f64 {
        let total = self.estimate.n + self.excluded;
        if total == 0 {
            0.0
        } else {
            self.excluded as f64 / total as f64
        }
    }
}

/// Closed-form target of an experiment, or a config error when the quantity
/// is undefined at the start point.
pub fn mc_target(exp: &McExperiment) -> Result<f64> {
    let z = exp.start;
    match exp.quantity {
        McQuantity::MartH => {
            if z.norm() == 0.0 {
                return Err(LabError::Config("mart_h target undefined at 0".into()));
            }
            Ok(2.0 / exp.kappa.sqrt() * z.norm().ln())
        }
        McQuantity::ExpMartBulk { alpha } => {
            if z.im <= 0.0 {
                return Err(LabError::Config(
                    "bulk martingale target needs an interior start".into(),
                ));
            }
            analytic::exp_martingale_initial(HalfPlanePoint::from_complex(z)?, alpha, exp.kappa)
        }
        McQuantity::ForwardLength => {
            if z.im <= 0.0 {
                return Err(LabError::Config(
                    "length martingale target needs an interior start".into(),
                ));
            }
            analytic::natural_param_density(HalfPlanePoint::from_complex(z)?, exp.kappa)
        }
        McQuantity::ForwardBoundary => {
            if z.im != 0.0 || z.re <= 0.0 {
                return Err(LabError::Config(
                    "boundary martingale target needs a real positive start".into(),
                ));
            }
            if !(exp.kappa > 4.0 && exp.kappa < 8.0) {
                return Err(LabError::Config(
                    "boundary martingale needs kappa in (4, 8)".into(),
                ));
            }
            let d_hat = 2.0 - 8.0 / exp.kappa;
            Ok(z.re.powf(d_hat - 1.0))
        }
    }
}

/// Runs N independent paths with per-path seeds derived from
/// `(master_seed, label, index)` and compares the streaming mean to the
/// closed-form target.
pub fn mc_expectation(exp: &McExperiment) -> Result<McRunResult> {
    if exp.n_paths < 100 {
        return Err(LabError::Config(format!(
            "need at least 100 paths, got {}",
            exp.n_paths
        )));
    }
    let target = mc_target(exp)?;
    let steps = (exp.total_time / exp.dt).round() as usize;

    let samples: Vec<Option<f64>> = mc::collect_parallel(exp.n_paths, |i| {
        let seed = mc::derive_seed(exp.master_seed, exp.label, i);
        let driver =
            DriverPath::sample(exp.kappa, exp.total_time, exp.dt, seed).expect("valid driver");
        match exp.quantity {
            McQuantity::MartH => {
                let s = loewner::reverse_final(&driver, steps, exp.start);
                Some(mart_h(&s, exp.kappa).expect("reverse states stay evaluable"))
            }
            McQuantity::ExpMartBulk { alpha } => {
                let s = loewner::reverse_final(&driver, steps, exp.start);
                Some(exp_martingale_bulk(&s, alpha, exp.kappa).expect("dual forms agree"))
            }
            McQuantity::ForwardLength => {
                let s = loewner::forward_final(&driver, steps, exp.start);
                if s.alive {
                    Some(forward_length_martingale(&s, exp.kappa).expect("alive state"))
                } else {
                    None
                }
            }
            McQuantity::ForwardBoundary => {
                let s = loewner::forward_final(&driver, steps, exp.start);
                if s.alive {
                    Some(forward_boundary_martingale(&s, exp.kappa).expect("alive state"))
                } else {
                    None
                }
            }
        }
    });

    let mut acc = McAccumulator::new();
    let mut excluded = 0;
    for s in samples {
        match s {
            Some(x) => acc.push(x),
            None => excluded += 1,
        }
    }
    Ok(McRunResult {
        estimate: McEstimate::from_accumulator(&acc, target),
        excluded,
    })
}

/// Mean absolute error of a pathwise identity at dt and dt/2 over a shared
/// ensemble of Brownian paths (coarse drivers are pairwise sums of the fine
/// ones), plus the Richardson ratio. First-order convergence shows up as a
/// ratio near 1/2.
#[derive(Debug, Clone, Copy)]
pub struct OrderTest {
    pub err_coarse: f64,
    pub err_fine: f64,
    pub ratio: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn identity_order_test(
    kappa: f64,
    z: Complex64,
    pair: Option<Complex64>,
    total_time: f64,
    dt_coarse: f64,
    n_paths: u64,
    master_seed: u64,
    label: &'static str,
) -> Result<OrderTest> {
    let errs: Vec<(f64, f64)> = mc::collect_parallel(n_paths, |i| {
        let seed = mc::derive_seed(master_seed, label, i);
        let fine = DriverPath::sample(kappa, total_time, dt_coarse / 2.0, seed)
            .expect("valid driver");
        let coarse = fine.coarsen().expect("even step count");
        let err_of = |d: &DriverPath| -> f64 {
            let traj = loewner::reverse_flow(d, z, pair).expect("valid start");
            let check = match pair {
                Some(_) => pathwise_covariation_check(&traj),
                None => pathwise_qv_check(&traj),
            };
            check.expect("interior tracked points").abs_err
        };
        (err_of(&coarse), err_of(&fine))
    });
    let n = errs.len() as f64;
    let err_coarse = errs.iter().map(|e| e.0).sum::<f64>() / n;
    let err_fine = errs.iter().map(|e| e.1).sum::<f64>() / n;
    Ok(OrderTest {
        err_coarse,
        err_fine,
        ratio: err_fine / err_coarse,
    })
}

/// Checks the dual-form identity along every step of an ensemble of reverse
/// flows; returns the worst relative disagreement observed.
pub fn dual_form_sweep(
    kappa: f64,
    z: Complex64,
    alpha: f64,
    total_time: f64,
    dt: f64,
    n_paths: u64,
    master_seed: u64,
) -> Result<f64> {
    let worst: Vec<f64> = mc::collect_parallel(n_paths, |i| {
        let seed = mc::derive_seed(master_seed, "dual_form", i);
        let driver = DriverPath::sample(kappa, total_time, dt, seed).expect("valid driver");
        let traj = loewner::reverse_flow(&driver, z, None).expect("valid start");
        let mut w = 0.0f64;
        for state in traj.states() {
            let h = mart_h(state, kappa).expect("alive");
            let c = conformal_factor(state).expect("interior");
            let via_log = (alpha * h + 0.5 * alpha * alpha * c).exp();
            let direct = exp_martingale_bulk(state, alpha, kappa).expect("dual forms agree");
            let rel = (direct - via_log).abs() / direct.abs().max(via_log.abs());
            w = w.max(rel);
        }
        w
    });
    Ok(worst.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::DriverPath;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn state(w: Complex64, dw: Complex64) -> FlowState {
        FlowState {
            t: 0.0,
            w,
            dw,
            alive: true,
        }
    }

    fn initial(z: Complex64) -> FlowState {
        state(z, c(1.0, 0.0))
    }

    fn zero_driver(total: f64, dt: f64) -> DriverPath {
        DriverPath::sample(0.0, total, dt, 0).unwrap()
    }

    #[test]
    fn mart_h_initial_values() {
        assert_eq!(mart_h(&initial(c(0.0, 1.0)), 3.0).unwrap(), 0.0);
        let h = mart_h(&initial(c(2.0, 0.0)), 4.0).unwrap();
        assert!((h - 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn mart_h_zero_driver_closed_form() {
        // f_1(i) = i sqrt(5), f'_1(i) = 1/sqrt(5) at kappa = 4:
        // h = log sqrt(5) + 2 log(1/sqrt(5)) = -(1/2) log 5.
        let d = zero_driver(1.0, 1e-3);
        let traj = loewner::reverse_flow(&d, c(0.0, 1.0), None).unwrap();
        let h = mart_h(traj.final_state(), 4.0).unwrap();
        assert!((h + 0.5 * 5.0f64.ln()).abs() < 1e-9, "h = {h}");
    }

    #[test]
    fn conformal_factor_values() {
        assert_eq!(conformal_factor(&initial(c(0.0, 1.0))).unwrap(), 0.0);
        let cf = conformal_factor(&initial(c(0.4, 0.7))).unwrap();
        assert!((cf + 0.7f64.ln()).abs() < 1e-14);
        // Along the driverless flow from i the factor stays exactly zero.
        let d = zero_driver(1.0, 1e-3);
        let traj = loewner::reverse_flow(&d, c(0.0, 1.0), None).unwrap();
        let cf = conformal_factor(traj.final_state()).unwrap();
        assert!(cf.abs() < 1e-12);
    }

    #[test]
    fn exp_martingale_bulk_values() {
        for alpha in [0.2, 0.7, 1.3] {
            let m = exp_martingale_bulk(&initial(c(0.0, 1.0)), alpha, 3.0).unwrap();
            assert!((m - 1.0).abs() < 1e-14);
        }
        let m = exp_martingale_bulk(&initial(c(0.0, 2.0)), 1.0, 4.0).unwrap();
        assert!((m - 2.0f64.sqrt()).abs() < 1e-14);

        let d = zero_driver(1.0, 1e-3);
        let traj = loewner::reverse_flow(&d, c(0.0, 1.0), None).unwrap();
        let m = exp_martingale_bulk(traj.final_state(), 1.0, 4.0).unwrap();
        assert!((m - 1.0 / 5.0f64.sqrt()).abs() < 1e-9, "m = {m}");
    }

    #[test]
    fn exp_martingale_boundary_values() {
        for beta in [-0.4, 0.3, 1.0] {
            let m = exp_martingale_boundary(&initial(c(1.0, 0.0)), beta, 6.0).unwrap();
            assert!((m - 1.0).abs() < 1e-14);
        }
        let beta = 6.0f64.sqrt() / 2.0 - 2.0 / 6.0f64.sqrt();
        let m =
            exp_martingale_boundary(&initial(c(std::f64::consts::E, 0.0)), beta, 6.0).unwrap();
        assert!((m - (1.0f64 / 3.0).exp()).abs() < 1e-12, "m = {m}");

        // Driverless flow from x = 3 to t = 1: u = sqrt(5), f' = 3/sqrt(5).
        let d = zero_driver(1.0, 1e-3);
        let traj = loewner::reverse_flow(&d, c(3.0, 0.0), None).unwrap();
        let fin = traj.final_state();
        assert!((fin.w.re - 5.0f64.sqrt()).abs() < 1e-9);
        assert!((fin.dw.re - 3.0 / 5.0f64.sqrt()).abs() < 1e-9);
        let q = q_of(6.0);
        let expect = 5.0f64.sqrt().powf(1.0 / 3.0)
            * (3.0 / 5.0f64.sqrt()).powf(beta * q - beta * beta);
        let m = exp_martingale_boundary(fin, beta, 6.0).unwrap();
        assert!((m - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn boundary_martingale_rejects_welded_point() {
        let d = zero_driver(0.25, 1e-3);
        let traj = loewner::reverse_flow(&d, c(0.5, 0.0), None).unwrap();
        assert!(traj.weld_step.is_some());
        let err = exp_martingale_boundary(traj.final_state(), 0.3, 2.0).unwrap_err();
        assert!(matches!(err, LabError::Domain(_)));
    }

    #[test]
    fn qv_check_zero_driver_imaginary_axis_is_exact() {
        let d = zero_driver(1.0, 1e-3);
        let traj = loewner::reverse_flow(&d, c(0.0, 1.0), None).unwrap();
        let chk = pathwise_qv_check(&traj).unwrap();
        assert!(chk.lhs.abs() <= 1e-10, "lhs = {}", chk.lhs);
        assert!(chk.rhs.abs() <= 1e-10, "rhs = {}", chk.rhs);
    }

    #[test]
    fn qv_check_at_time_zero() {
        let d = DriverPath::sample(2.0, 1e-3, 1e-3, 1).unwrap();
        let one_step = loewner::reverse_flow(&d, c(1.0, 1.0), None).unwrap();
        assert_eq!(one_step.int_r_squared(0), 0.0);
        // err after a single step is O(dt^2).
        let chk = pathwise_qv_check(&one_step).unwrap();
        assert!(chk.abs_err < 1e-5);
    }

    #[test]
    fn covariation_zero_driver_cancellation() {
        // y = i, z = 2i: both R vanish and G_0 is invariant in closed form
        // (a nontrivial exact cancellation).
        let d = zero_driver(1.0, 1e-3);
        let traj = loewner::reverse_flow(&d, c(0.0, 2.0), Some(c(0.0, 1.0))).unwrap();
        let chk = pathwise_covariation_check(&traj).unwrap();
        assert!(chk.lhs.abs() <= 1e-10);
        assert!(chk.rhs.abs() <= 1e-10, "rhs = {}", chk.rhs);
    }

    #[test]
    fn qv_richardson_order_one() {
        let t = identity_order_test(2.0, c(1.0, 1.0), None, 0.5, 1e-3, 64, 99, "qv_unit")
            .unwrap();
        assert!(
            t.ratio > 0.3 && t.ratio < 0.7,
            "qv ratio {} (coarse {}, fine {})",
            t.ratio,
            t.err_coarse,
            t.err_fine
        );
    }

    #[test]
    fn covariation_richardson_order_one() {
        let t = identity_order_test(
            3.0,
            c(-1.0, 2.0),
            Some(c(1.0, 1.0)),
            0.5,
            1e-3,
            64,
            99,
            "cov_unit",
        )
        .unwrap();
        assert!(
            t.ratio > 0.3 && t.ratio < 0.7,
            "covariation ratio {} (coarse {}, fine {})",
            t.ratio,
            t.err_coarse,
            t.err_fine
        );
    }

    #[test]
    fn forward_length_martingale_values() {
        let p = HalfPlanePoint::new(0.0, 2.0).unwrap();
        let g = analytic::natural_param_density(p, 2.0).unwrap();
        let m = forward_length_martingale(&initial(c(0.0, 2.0)), 2.0).unwrap();
        assert!((m - g).abs() < 1e-14);
        assert!((g - 2.0f64.powf(-0.75)).abs() < 1e-14);

        // kappa = 8: G = 1 and 2 - d = 0, so M = 1 along any alive path.
        let d = DriverPath::sample(8.0, 0.05, 1e-3, 12).unwrap();
        let traj = loewner::forward_flow(&d, c(0.4, 1.0)).unwrap();
        for s in traj.states().iter().filter(|s| s.alive) {
            let m = forward_length_martingale(s, 8.0).unwrap();
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_boundary_martingale_values() {
        let m = forward_boundary_martingale(&initial(c(4.0, 0.0)), 6.0).unwrap();
        assert!((m - 4.0f64.powf(-1.0 / 3.0)).abs() < 1e-14);
        assert_eq!(
            forward_boundary_martingale(&initial(c(1.0, 0.0)), 6.0).unwrap(),
            1.0
        );
        assert!(forward_boundary_martingale(&initial(c(4.0, 0.0)), 3.0).is_err());
    }

    #[test]
    fn mc_mart_h_hits_initial_value() {
        let exp = McExperiment {
            quantity: McQuantity::MartH,
            start: c(0.0, 2.0),
            kappa: 8.0 / 3.0,
            total_time: 0.5,
            dt: 1e-3,
            n_paths: 2000,
            master_seed: 424242,
            label: "mart_h_unit",
        };
        let r = mc_expectation(&exp).unwrap();
        let target = 2.0 / (8.0f64 / 3.0).sqrt() * 2.0f64.ln();
        assert!((r.estimate.target - target).abs() < 1e-12);
        assert!((target - 0.8489285).abs() < 1e-6);
        assert!(
            r.estimate.within_sigmas(3.0),
            "z = {}, mean = {}, target = {}",
            r.estimate.z_score,
            r.estimate.mean,
            target
        );
    }

    #[test]
    fn mc_exp_martingale_hits_initial_value() {
        let exp = McExperiment {
            quantity: McQuantity::ExpMartBulk { alpha: 0.3 },
            start: c(0.0, 2.0),
            kappa: 4.0,
            total_time: 0.5,
            dt: 1e-3,
            n_paths: 2000,
            master_seed: 7,
            label: "exp_mart_unit",
        };
        let r = mc_expectation(&exp).unwrap();
        assert!((r.estimate.target - 2.0f64.powf(0.255)).abs() < 1e-12);
        assert!(r.estimate.within_sigmas(3.0), "z = {}", r.estimate.z_score);
    }

    #[test]
    fn mc_alpha_zero_is_exact() {
        let exp = McExperiment {
            quantity: McQuantity::ExpMartBulk { alpha: 0.0 },
            start: c(0.0, 2.0),
            kappa: 3.0,
            total_time: 0.2,
            dt: 1e-3,
            n_paths: 200,
            master_seed: 5,
            label: "alpha_zero",
        };
        let r = mc_expectation(&exp).unwrap();
        assert_eq!(r.estimate.mean, 1.0);
        assert_eq!(r.estimate.stderr, 0.0);
        assert_eq!(r.estimate.z_score, 0.0);
    }

    #[test]
    fn mc_forward_length_martingale_property() {
        let exp = McExperiment {
            quantity: McQuantity::ForwardLength,
            start: c(0.0, 2.0),
            kappa: 2.0,
            total_time: 0.3,
            dt: 1e-3,
            n_paths: 2000,
            master_seed: 99,
            label: "fwd_len_unit",
        };
        let r = mc_expectation(&exp).unwrap();
        assert!((r.estimate.target - 2.0f64.powf(-0.75)).abs() < 1e-14);
        assert!(r.exclusion_rate() < 0.01, "exclusions {}", r.exclusion_rate());
        assert!(r.estimate.within_sigmas(3.0), "z = {}", r.estimate.z_score);
    }

    #[test]
    fn mc_forward_boundary_martingale_property() {
        let exp = McExperiment {
            quantity: McQuantity::ForwardBoundary,
            start: c(2.0, 0.0),
            kappa: 6.0,
            total_time: 0.1,
            dt: 1e-3,
            n_paths: 2000,
            master_seed: 17,
            label: "fwd_bdy_unit",
        };
        let r = mc_expectation(&exp).unwrap();
        assert!((r.estimate.target - 2.0f64.powf(-1.0 / 3.0)).abs() < 1e-14);
        assert!(r.exclusion_rate() < 0.01);
        assert!(r.estimate.within_sigmas(3.0), "z = {}", r.estimate.z_score);
    }

    #[test]
    fn mc_config_errors() {
        let mut exp = McExperiment {
            quantity: McQuantity::ForwardBoundary,
            start: c(0.0, 2.0),
            kappa: 6.0,
            total_time: 0.1,
            dt: 1e-3,
            n_paths: 200,
            master_seed: 0,
            label: "bad",
        };
        assert!(matches!(mc_expectation(&exp), Err(LabError::Config(_))));
        exp.quantity = McQuantity::MartH;
        exp.n_paths = 10;
        assert!(matches!(mc_expectation(&exp), Err(LabError::Config(_))));
    }

    #[test]
    fn dual_form_sweep_is_tight() {
        let worst = dual_form_sweep(2.0, c(1.0, 1.0), 0.3, 0.25, 1e-3, 16, 1).unwrap();
        assert!(worst <= DUAL_FORM_RTOL, "worst relative gap {worst}");
    }

    #[test]
    fn mart_h_bias_halves_under_dt_refinement() {
        // Weak order 1: on a fixed-seed ensemble (coarse drivers are the
        // pairwise-summed fine ones), halving dt roughly halves the bias of
        // E[h_T(z)] against h_0(z). dt is large enough that the bias stands
        // ~10x above the Monte-Carlo noise floor.
        let kappa: f64 = 2.0;
        let z = c(1.0, 1.0);
        let t: f64 = 0.5;
        let dt = 0.125;
        let n = 200_000u64;
        let h0 = 2.0 / kappa.sqrt() * z.norm().ln();
        let steps = (t / dt).round() as usize;
        let vals: Vec<(f64, f64)> = crate::mc::collect_parallel(n, |i| {
            let fine = DriverPath::sample(kappa, t, dt / 2.0, crate::mc::derive_seed(1, "bias", i))
                .unwrap();
            let coarse = fine.coarsen().unwrap();
            let hc = mart_h(&loewner::reverse_final(&coarse, steps, z), kappa).unwrap();
            let hf = mart_h(&loewner::reverse_final(&fine, 2 * steps, z), kappa).unwrap();
            (hc, hf)
        });
        let bias_c: f64 = vals.iter().map(|v| v.0 - h0).sum::<f64>() / n as f64;
        let bias_f: f64 = vals.iter().map(|v| v.1 - h0).sum::<f64>() / n as f64;
        let ratio = bias_f / bias_c;
        assert!(
            ratio > 0.3 && ratio < 0.7,
            "bias ratio {ratio} (coarse {bias_c:.3e}, fine {bias_f:.3e})"
        );
    }

    #[test]
    fn mart_h_expectation_is_t_invariant_across_horizons() {
        // E h_t(z) = h_0(z) for every horizon, not just one; cheap smoke
        // version with modest path counts.
        for (t, n) in [(0.25, 1500), (0.5, 1500)] {
            let exp = McExperiment {
                quantity: McQuantity::MartH,
                start: c(1.0, 1.5),
                kappa: 3.0,
                total_time: t,
                dt: 1e-3,
                n_paths: n,
                master_seed: 321,
                label: "mart_h_horizons",
            };
            let r = mc_expectation(&exp).unwrap();
            assert!(r.estimate.within_sigmas(3.5), "t = {t}: z = {}", r.estimate.z_score);
        }
    }
}
