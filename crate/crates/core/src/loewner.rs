//! Forward ("zipping down") and reverse ("zipping up") Loewner flows.
//!
//! The driving SDEs are
//!
//! ```text
//! reverse:  df_t(z) = -2 dt / f_t(z) - sqrt(kappa) dB_t,   f_0(z) = z
//! forward:  dg_t(z) =  2 dt / g_t(z) - sqrt(kappa) dB_t,   g_0(z) = z
//! ```
//!
//! Each step composes exact solutions of the two split vector fields: the
//! vertical-slit map `w -> sqrt(w^2 -/+ 4 dt)` for the singular term and a
//! real translation for the driver. Both factors are exact, so a constant
//! driver incurs no time-discretization error at all, and the reverse flow
//! at time t is inverted exactly (up to rounding) by the forward flow run
//! with the time-reversed, negated increments.
//!
//! Derivatives ride along through the chain rule: the slit factor has
//! `d/dw sqrt(w^2 - c) = w / sqrt(w^2 - c)` and translations have slope one.

use num_complex::Complex64;

use crate::driver::DriverPath;
use crate::error::{LabError, Result};

/// Default tolerance for matching welded boundary pairs, in mapped coordinates.
pub const WELD_TOLERANCE: f64 = 1e-9;

/// Square root of `zeta` on the branch that behaves like `w` at infinity,
/// where `re_w` is the real part of the point being mapped. Real negative
/// `zeta` (the branch cut) maps to the positive imaginary axis: this is the
/// upper edge of the elementary slit, onto which both cut preimages weld.
fn branch_sqrt(zeta: Complex64, re_w: f64) -> Complex64 {
    if zeta.im == 0.0 {
        if zeta.re < 0.0 {
            return Complex64::new(0.0, (-zeta.re).sqrt());
        }
        let r = zeta.re.sqrt();
        return if re_w < 0.0 {
            Complex64::new(-r, 0.0)
        } else {
            Complex64::new(r, 0.0)
        };
    }
    let s = zeta.sqrt();
    if re_w < 0.0 {
        -s
    } else if re_w > 0.0 {
        s
    } else {
        // Purely imaginary w with complex zeta cannot arise from the slit
        // maps; fall back to the half-plane branch.
        if s.im >= 0.0 {
            s
        } else {
            -s
        }
    }
}

/// One tracked point of a Loewner flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    /// Loewner time.
    pub t: f64,
    /// Current image f_t(z) or g_t(z).
    pub w: Complex64,
    /// Current derivative f'_t(z) or g'_t(z).
    pub dw: Complex64,
    /// Forward flow only: false once the point is swallowed.
    pub alive: bool,
}

impl FlowState {
    fn initial(z0: Complex64) -> Self {
        FlowState {
            t: 0.0,
            w: z0,
            dw: Complex64::new(1.0, 0.0),
            alive: true,
        }
    }

    pub fn require_alive(&self) -> Result<&Self> {
        if self.alive {
            Ok(self)
        } else {
            Err(LabError::Lifecycle(format!(
                "state at t = {} is swallowed",
                self.t
            )))
        }
    }
}

/// R_t(z) = Re[2 / f_t(z)], the martingale integrand.
pub fn r_integrand(w: Complex64) -> f64 {
    (2.0 / w).re
}

fn reverse_step(w: Complex64, dw: Complex64, four_dt: f64, incr: f64) -> (Complex64, Complex64) {
    let s = branch_sqrt(w * w - four_dt, w.re);
    let dw_new = dw * w / s;
    (s - incr, dw_new)
}

fn forward_step(
    w: Complex64,
    dw: Complex64,
    four_dt: f64,
    incr: f64,
    swallow_tol: f64,
) -> Option<(Complex64, Complex64)> {
    let v = w - incr;
    if v.norm() < swallow_tol {
        return None;
    }
    let s = branch_sqrt(v * v + four_dt, v.re);
    Some((s, dw * v / s))
}

/// Full record of one tracked point (optionally a pair) along a flow.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub dt: f64,
    states: Vec<FlowState>,
    pair_states: Vec<FlowState>,
    /// Cumulative right-point sums of R_s(z)^2 dt, one entry per state.
    int_r2: Vec<f64>,
    /// Cumulative sums of R_s(y) R_s(z) dt when a pair is tracked.
    int_r_pair: Vec<f64>,
    /// Reverse flow of a real start: first step at which it left the axis.
    pub weld_step: Option<usize>,
}

impl FlowTrajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn states(&self) -> &[FlowState] {
        &self.states
    }

    pub fn state(&self, step: usize) -> &FlowState {
        &self.states[step]
    }

    /// State accessor that refuses swallowed points.
    pub fn state_checked(&self, step: usize) -> Result<&FlowState> {
        self.states[step].require_alive()
    }

    pub fn final_state(&self) -> &FlowState {
        self.states.last().unwrap()
    }

    pub fn pair_state(&self, step: usize) -> Option<&FlowState> {
        self.pair_states.get(step)
    }

    /// Accumulated integral of R_s(z)^2 ds up to `step`.
    pub fn int_r_squared(&self, step: usize) -> f64 {
        self.int_r2[step]
    }

    /// Accumulated integral of R_s(y) R_s(z) ds up to `step`, if a pair is tracked.
    pub fn int_r_pair(&self, step: usize) -> Option<f64> {
        self.int_r_pair.get(step).copied()
    }

    pub fn has_pair(&self) -> bool {
        !self.pair_states.is_empty()
    }
}

/// Runs the reverse (zipping up) flow from `z0`, recording every state.
///
/// A real start inside the welding window continues through the seed: the
/// elementary slit map carries it onto the growing curve and `weld_step`
/// records when that happened. Callers that require the point to stay on
/// the axis must check `weld_step` (the boundary martingale evaluators do).
pub fn reverse_flow(
    driver: &DriverPath,
    z0: Complex64,
    track_pair: Option<Complex64>,
) -> Result<FlowTrajectory> {
    if z0.im == 0.0 && z0.re == 0.0 {
        return Err(LabError::Singularity(
            "the origin is the SLE seed; reverse flow is undefined there".into(),
        ));
    }
    if z0.im < 0.0 {
        return Err(LabError::Domain("start point below the real axis".into()));
    }
    let dt = driver.dt;
    let four_dt = 4.0 * dt;
    let n = driver.n_steps();

    let mut states = Vec::with_capacity(n + 1);
    let mut int_r2 = Vec::with_capacity(n + 1);
    states.push(FlowState::initial(z0));
    int_r2.push(0.0);

    let mut pair_states = Vec::new();
    let mut int_r_pair = Vec::new();
    if let Some(y0) = track_pair {
        pair_states.reserve(n + 1);
        int_r_pair.reserve(n + 1);
        pair_states.push(FlowState::initial(y0));
        int_r_pair.push(0.0);
    }

    let mut weld_step = None;
    let mut w = z0;
    let mut dw = Complex64::new(1.0, 0.0);
    for (k, &incr) in driver.increments().iter().enumerate() {
        if weld_step.is_none() && w.im == 0.0 && w.re * w.re < four_dt {
            weld_step = Some(k);
        }
        let (w_new, dw_new) = reverse_step(w, dw, four_dt, incr);
        w = w_new;
        dw = dw_new;
        let t = dt * (k + 1) as f64;
        states.push(FlowState {
            t,
            w,
            dw,
            alive: true,
        });
        let r = r_integrand(w);
        int_r2.push(int_r2[k] + r * r * dt);

        if !pair_states.is_empty() {
            let prev = pair_states[k];
            let (pw, pdw) = reverse_step(prev.w, prev.dw, four_dt, incr);
            pair_states.push(FlowState {
                t,
                w: pw,
                dw: pdw,
                alive: true,
            });
            int_r_pair.push(int_r_pair[k] + r_integrand(pw) * r * dt);
        }
    }

    Ok(FlowTrajectory {
        dt,
        states,
        pair_states,
        int_r2,
        int_r_pair,
        weld_step,
    })
}

/// Reverse flow evaluated at `steps` steps without storing the path.
pub fn reverse_final(driver: &DriverPath, steps: usize, z0: Complex64) -> FlowState {
    let dt = driver.dt;
    let four_dt = 4.0 * dt;
    let mut w = z0;
    let mut dw = Complex64::new(1.0, 0.0);
    for &incr in &driver.increments()[..steps] {
        let (w_new, dw_new) = reverse_step(w, dw, four_dt, incr);
        w = w_new;
        dw = dw_new;
    }
    FlowState {
        t: dt * steps as f64,
        w,
        dw,
        alive: true,
    }
}

/// Runs the forward (zipping down) flow from `z0`, recording every state.
/// Once the point comes within `2 sqrt(dt)` of the centered singularity it
/// is declared swallowed; later states keep the last value with `alive`
/// cleared.
pub fn forward_flow(driver: &DriverPath, z0: Complex64) -> Result<FlowTrajectory> {
    if z0.im < 0.0 {
        return Err(LabError::Domain("start point below the real axis".into()));
    }
    if z0.im == 0.0 && z0.re == 0.0 {
        return Err(LabError::Singularity(
            "the origin is the SLE seed; forward flow is undefined there".into(),
        ));
    }
    let dt = driver.dt;
    let four_dt = 4.0 * dt;
    let swallow_tol = 2.0 * dt.sqrt();
    let n = driver.n_steps();

    let mut states = Vec::with_capacity(n + 1);
    let mut int_r2 = Vec::with_capacity(n + 1);
    states.push(FlowState::initial(z0));
    int_r2.push(0.0);

    let mut w = z0;
    let mut dw = Complex64::new(1.0, 0.0);
    let mut alive = true;
    for (k, &incr) in driver.increments().iter().enumerate() {
        if alive {
            match forward_step(w, dw, four_dt, incr, swallow_tol) {
                Some((w_new, dw_new)) => {
                    w = w_new;
                    dw = dw_new;
                }
                None => alive = false,
            }
        }
        let t = dt * (k + 1) as f64;
        states.push(FlowState { t, w, dw, alive });
        let r = if alive { r_integrand(w) } else { 0.0 };
        int_r2.push(int_r2[k] + r * r * dt);
    }

    Ok(FlowTrajectory {
        dt,
        states,
        pair_states: Vec::new(),
        int_r2,
        int_r_pair: Vec::new(),
        weld_step: None,
    })
}

/// Forward flow without storing the path. Returns the state at `steps` steps
/// or at the swallowing step, whichever comes first.
pub fn forward_final(driver: &DriverPath, steps: usize, z0: Complex64) -> FlowState {
    let dt = driver.dt;
    let four_dt = 4.0 * dt;
    let swallow_tol = 2.0 * dt.sqrt();
    let mut w = z0;
    let mut dw = Complex64::new(1.0, 0.0);
    for (k, &incr) in driver.increments()[..steps].iter().enumerate() {
        match forward_step(w, dw, four_dt, incr, swallow_tol) {
            Some((w_new, dw_new)) => {
                w = w_new;
                dw = dw_new;
            }
            None => {
                return FlowState {
                    t: dt * k as f64,
                    w,
                    dw,
                    alive: false,
                }
            }
        }
    }
    FlowState {
        t: dt * steps as f64,
        w,
        dw,
        alive: true,
    }
}

/// Where (if at all) the real orbit of `x` enters an elementary slit within
/// `steps` steps: returns the step index and the real value just before the
/// slit map takes it off the axis.
fn crossing_info(driver: &DriverPath, steps: usize, x: f64) -> Option<(usize, f64)> {
    let four_dt = 4.0 * driver.dt;
    let mut w = x;
    for (k, &incr) in driver.increments()[..steps].iter().enumerate() {
        if w * w < four_dt {
            return Some((k, w));
        }
        let s = if w < 0.0 {
            -(w * w - four_dt).sqrt()
        } else {
            (w * w - four_dt).sqrt()
        };
        w = s - incr;
    }
    None
}

/// Pre-image of a real pre-slit value `v0` at step `cross_step`, obtained by
/// running the inverse elementary real maps back to time zero. The inverse
/// of one step is `u -> sgn(u) sqrt(u^2 + 4 dt)`, which keeps every backward
/// value off the cut, so the forward orbit of the result enters its first
/// slit exactly at `cross_step` with value `v0`.
fn backward_real_orbit(driver: &DriverPath, cross_step: usize, v0: f64) -> f64 {
    let four_dt = 4.0 * driver.dt;
    let mut v = v0;
    for &incr in driver.increments()[..cross_step].iter().rev() {
        let u = v + incr;
        v = (u * u + four_dt).sqrt().copysign(u);
    }
    v
}

/// Largest x > 0 that has welded onto the curve by time `t` (the right edge
/// of the welding window), found by bisection on the crossing predicate.
pub fn weld_window_edge(driver: &DriverPath, t: f64) -> Result<f64> {
    let steps = driver.steps_for(t)?;
    if steps == 0 {
        return Err(LabError::Domain("welding window is empty at t = 0".into()));
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while crossing_info(driver, steps, hi).is_some() {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(LabError::Domain("welding window edge diverged".into()));
        }
    }
    let mut lo = driver.dt.sqrt() * 1e-6;
    if crossing_info(driver, steps, lo).is_none() {
        return Err(LabError::NoPartner(
            "no real point welds within the horizon".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if crossing_info(driver, steps, mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Finds the negative boundary point welded to `x > 0` at time `t`:
/// the x' < 0 with f_t(x') = f_t(x) on the curve.
///
/// Welded pairs enter the same elementary slit at the same step with
/// mirrored real values, and the elementary slit map restricted to the
/// reals off the cut is an order-preserving bijection with the explicit
/// inverse `u -> sgn(u) sqrt(u^2 + 4 dt)`. The partner is therefore
/// reconstructed exactly by running x's mirrored pre-crossing value
/// backwards through the earlier steps. (Bisection on the real orbit is
/// not reliable here: an increment larger than the slit mouth can carry an
/// orbit across it, which breaks the monotonicity a bracketing search
/// needs.) The result is verified against [`WELD_TOLERANCE`] by
/// re-evaluating both images.
///
/// On a discretized path the mirror pre-image can land on the positive
/// axis: when the driver locally outruns the slit mouth, both flanks of a
/// step's cut are fed from the same side. Such queries fail with
/// `NoPartner`; [`sample_welded_pair`] constructs pairs that avoid this.
pub fn find_welded_partner(driver: &DriverPath, t: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(LabError::Domain(format!("welding query needs x > 0, got {x}")));
    }
    let steps = driver.steps_for(t)?;
    let (cross_step, r_star) = crossing_info(driver, steps, x).ok_or_else(|| {
        LabError::NoPartner(format!("f_t({x}) is still real: outside the welding window"))
    })?;

    let x_prime = backward_real_orbit(driver, cross_step, -r_star);
    if x_prime >= 0.0 {
        return Err(LabError::NoPartner(format!(
            "mirror orbit of {x} lands at {x_prime} >= 0"
        )));
    }

    let img_x = reverse_final(driver, steps, Complex64::new(x, 0.0)).w;
    let img_p = reverse_final(driver, steps, Complex64::new(x_prime, 0.0)).w;
    let err = (img_x - img_p).norm();
    if err > WELD_TOLERANCE * (1.0 + img_x.norm()) {
        return Err(LabError::NoPartner(format!(
            "reconstruction landed at x' = {x_prime} but |f(x') - f(x)| = {err:.3e}"
        )));
    }
    Ok(x_prime)
}

/// A boundary pair (x > 0, x' < 0) welded to the same curve point at time
/// `t`, built from a crossing event near the middle of the horizon: both
/// flanks of the chosen step's slit are pulled back to time zero, scanning
/// nearby steps and mouth positions until the pre-images straddle the seed.
pub fn sample_welded_pair(driver: &DriverPath, t: f64) -> Result<(f64, f64)> {
    let steps = driver.steps_for(t)?;
    if steps < 2 {
        return Err(LabError::Domain("horizon too short for welding".into()));
    }
    let mouth = 2.0 * driver.dt.sqrt();
    let mid = steps / 2;
    // Walk outward from the mid-horizon step.
    for offset in 0..steps {
        for sign in [1i64, -1] {
            let k = mid as i64 + sign * offset as i64;
            if k < 1 || k as usize >= steps {
                continue;
            }
            let k = k as usize;
            for frac in [0.6, 0.3, 0.85] {
                let r = frac * mouth;
                let a = backward_real_orbit(driver, k, r);
                let b = backward_real_orbit(driver, k, -r);
                let (x, x_prime) = if a > 0.0 && b < 0.0 {
                    (a, b)
                } else if b > 0.0 && a < 0.0 {
                    (b, a)
                } else {
                    continue;
                };
                let img_x = reverse_final(driver, steps, Complex64::new(x, 0.0)).w;
                let img_p = reverse_final(driver, steps, Complex64::new(x_prime, 0.0)).w;
                if (img_x - img_p).norm() <= WELD_TOLERANCE * (1.0 + img_x.norm()) {
                    return Ok((x, x_prime));
                }
            }
            if offset == 0 {
                break;
            }
        }
    }
    Err(LabError::NoPartner(
        "no straddling welded pair on this path".into(),
    ))
}
