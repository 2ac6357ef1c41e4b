//! Closed-form quantities of the SLE/LQG dictionary: coupling constants,
//! the background charge, KPZ exponent algebra, half-plane Green function,
//! and the expected densities of the quantum fractal measures.
//!
//! Everything here is a pure function of its inputs. The canonical input is
//! the SLE parameter `kappa`; the Liouville coupling `gamma` and its dual are
//! derived views:
//!
//! ```text
//! gamma  = min(sqrt(kappa), 4/sqrt(kappa))        gamma * gamma' = 4
//! Q      = gamma/2 + 2/gamma = sqrt(kappa)/2 + 2/sqrt(kappa)
//! d      = alpha Q - alpha^2/2                    (bulk KPZ)
//! d_hat  = beta Q - beta^2                        (boundary KPZ)
//! ```

use num_complex::Complex64;

use crate::error::{LabError, Result};

/// Parameter bundle derived from the SLE parameter `kappa`, with all
/// closed-form relations between the members enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqgParams {
    /// SLE parameter, > 0.
    pub kappa: f64,
    /// Liouville coupling, in (0, 2].
    pub gamma: f64,
    /// Dual coupling 4/gamma, >= 2.
    pub gamma_dual: f64,
    /// Background charge Q = gamma/2 + 2/gamma.
    pub q: f64,
    /// Bulk exponent alpha = sqrt(kappa)/2 of the quantum length measure.
    pub alpha_bulk: f64,
    /// Boundary exponent beta = sqrt(kappa)/2 - 2/sqrt(kappa).
    pub beta_boundary: f64,
    /// Curve Hausdorff dimension d = 1 + kappa/8.
    pub d_bulk: f64,
    /// Boundary intersection dimension 2 - 8/kappa, defined for kappa in (4, 8).
    pub d_boundary: Option<f64>,
}

impl LqgParams {
    /// Builds the bundle from `kappa`. The boundary dimension is populated
    /// only for kappa in (4, 8), where the curve touches the axis without
    /// filling it.
    pub fn from_kappa(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(LabError::Domain(format!(
                "kappa must be a positive finite real, got {kappa}"
            )));
        }
        let sk = kappa.sqrt();
        let gamma = sk.min(4.0 / sk);
        let gamma_dual = sk.max(4.0 / sk);
        let q = gamma / 2.0 + 2.0 / gamma;
        let alpha_bulk = sk / 2.0;
        let beta_boundary = sk / 2.0 - 2.0 / sk;
        let d_bulk = 1.0 + kappa / 8.0;
        let d_boundary = if kappa > 4.0 && kappa < 8.0 {
            Some(2.0 - 8.0 / kappa)
        } else {
            None
        };
        Ok(LqgParams {
            kappa,
            gamma,
            gamma_dual,
            q,
            alpha_bulk,
            beta_boundary,
            d_bulk,
            d_boundary,
        })
    }

    /// Background charge evaluated from kappa directly; agrees with `self.q`
    /// to machine precision.
    pub fn q_from_kappa(&self) -> f64 {
        let sk = self.kappa.sqrt();
        sk / 2.0 + 2.0 / sk
    }

    /// Bulk Seiberg bound alpha <= Q.
    pub fn seiberg_bulk_ok(&self, alpha: f64) -> bool {
        alpha <= self.q
    }

    /// Boundary Seiberg bound beta <= Q/2.
    pub fn seiberg_boundary_ok(&self, beta: f64) -> bool {
        beta <= self.q / 2.0
    }
}

/// A point of the closed upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint(Complex64);

impl HalfPlanePoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(re.is_finite() && im.is_finite()) {
            return Err(LabError::Domain(format!("non-finite point ({re}, {im})")));
        }
        if im < 0.0 {
            return Err(LabError::Domain(format!(
                "point ({re}, {im}) lies below the real axis"
            )));
        }
        Ok(HalfPlanePoint(Complex64::new(re, im)))
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }

    pub fn re(&self) -> f64 {
        self.0.re
    }

    pub fn im(&self) -> f64 {
        self.0.im
    }

    pub fn as_complex(&self) -> Complex64 {
        self.0
    }

    pub fn is_interior(&self) -> bool {
        self.0.im > 0.0
    }

    fn require_interior(&self, what: &str) -> Result<Complex64> {
        if self.is_interior() {
            Ok(self.0)
        } else {
            Err(LabError::Singularity(format!(
                "{what} requires a strictly interior point, got Im = {}",
                self.0.im
            )))
        }
    }
}

/// Euclidean weight x of a quantum weight `delta` under the KPZ relation
/// x = (gamma^2/4) delta^2 + (1 - gamma^2/4) delta.
pub fn kpz_bulk(delta: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let g24 = gamma * gamma / 4.0;
    Ok(g24 * delta * delta + (1.0 - g24) * delta)
}

/// Nonnegative root of the KPZ relation: the quantum weight delta with
/// kpz_bulk(delta, gamma) = x. Round-trips with `kpz_bulk` to 1e-12.
pub fn kpz_bulk_inverse(x: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let a = gamma * gamma / 4.0;
    let b = 1.0 - a;
    Ok((-b + (b * b + 4.0 * a * x).sqrt()) / (2.0 * a))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0 && gamma < 2.0) {
        return Err(LabError::Domain(format!(
            "gamma must lie in (0, 2) for the KPZ relation, got {gamma}"
        )));
    }
    Ok(())
}

/// Dimension d = alpha Q - alpha^2/2 carried by a bulk exponent alpha.
pub fn kpz_dimension(alpha: f64, params: &LqgParams) -> f64 {
    alpha * params.q - alpha * alpha / 2.0
}

/// Boundary analog d_hat = beta Q - beta^2.
pub fn kpz_dimension_boundary(beta: f64, params: &LqgParams) -> f64 {
    beta * params.q - beta * beta
}

/// Central charge c = (6 - kappa)(6 - 16/kappa)/4 of the matter CFT,
/// symmetric under kappa <-> 16/kappa.
pub fn central_charge(kappa: f64) -> f64 {
    assert!(kappa > 0.0, "central_charge requires kappa > 0");
    (6.0 - kappa) * (6.0 - 16.0 / kappa) / 4.0
}

/// Free-boundary Green function of the half-plane,
/// G0(y, z) = -log(|y - z| |y - conj(z)|), with -lap G0 = 2 pi delta.
pub fn neumann_green(y: HalfPlanePoint, z: HalfPlanePoint) -> Result<f64> {
    let yc = y.require_interior("neumann_green")?;
    let zc = z.require_interior("neumann_green")?;
    if yc == zc {
        return Err(LabError::Singularity(
            "neumann_green is singular on the diagonal".into(),
        ));
    }
    Ok(neumann_green_raw(yc, zc))
}

/// Same Green function without the interiority checks; used along flows
/// where the states are known to be interior.
pub fn neumann_green_raw(y: Complex64, z: Complex64) -> f64 {
    -((y - z).norm() * (y - z.conj()).norm()).ln()
}

/// Expected density G(z) = |z|^a (Im z)^b of the curve's intrinsic length
/// measure, with a = 1 - 8/kappa and b = 8/kappa + kappa/8 - 2.
pub fn natural_param_density(z: HalfPlanePoint, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let zc = z.require_interior("natural_param_density")?;
    let a = 1.0 - 8.0 / kappa;
    let b = 8.0 / kappa + kappa / 8.0 - 2.0;
    let r = zc.norm();
    if r == 0.0 && a < 0.0 {
        return Err(LabError::Singularity(
            "natural_param_density is singular at the origin".into(),
        ));
    }
    Ok(r.powf(a) * zc.im.powf(b))
}

/// Initial value of the bulk exponential martingale,
/// |z|^(2 alpha / sqrt(kappa)) (Im z)^(-alpha^2/2).
pub fn exp_martingale_initial(z: HalfPlanePoint, alpha: f64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let zc = z.require_interior("exp_martingale_initial")?;
    Ok(zc.norm().powf(2.0 * alpha / kappa.sqrt()) * zc.im.powf(-alpha * alpha / 2.0))
}

/// Initial value of the boundary exponential martingale, x^(2 beta / sqrt(kappa)).
pub fn exp_martingale_boundary_initial(x: f64, beta: f64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if x <= 0.0 {
        return Err(LabError::Singularity(format!(
            "boundary martingale requires x > 0, got {x}"
        )));
    }
    Ok(x.powf(2.0 * beta / kappa.sqrt()))
}

/// Expected density (sin theta)^(8/kappa - 2) of the quantum length of the
/// curve, theta = arg z. Coincides with the Euclidean area density at kappa = 4.
pub fn expected_bulk_length_density(z: HalfPlanePoint, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let zc = z.require_interior("expected_bulk_length_density")?;
    let sin_theta = zc.im / zc.norm();
    Ok(sin_theta.powf(8.0 / kappa - 2.0))
}

/// Expected boundary densities at a positive axis coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDensities {
    /// x^(2 - 12/kappa), the expected quantum measure density of the
    /// curve/axis intersection; defined for kappa in (4, 8) only.
    pub intersection_density: Option<f64>,
    /// Quantum boundary length density: u for kappa <= 4, u^(4/kappa) above.
    pub boundary_length_density: f64,
}

pub fn expected_boundary_densities(x: f64, kappa: f64) -> Result<BoundaryDensities> {
    check_kappa(kappa)?;
    if x <= 0.0 || !x.is_finite() {
        return Err(LabError::Domain(format!(
            "boundary densities require a positive coordinate, got {x}"
        )));
    }
    let intersection_density = if kappa > 4.0 && kappa < 8.0 {
        Some(x.powf(2.0 - 12.0 / kappa))
    } else {
        None
    };
    let boundary_length_density = if kappa <= 4.0 {
        x
    } else {
        x.powf(4.0 / kappa)
    };
    Ok(BoundaryDensities {
        intersection_density,
        boundary_length_density,
    })
}

/// Invariant expected quantum area density at w:
/// |w|^(2 - kappa/2) (sin phi)^(-kappa/2) for kappa <= 4 and
/// (sin phi)^(-8/kappa) for kappa >= 4, phi = arg w.
pub fn expected_area_density(w: HalfPlanePoint, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let wc = w.require_interior("expected_area_density")?;
    let r = wc.norm();
    let sin_phi = wc.im / r;
    if kappa <= 4.0 {
        if r == 0.0 {
            return Err(LabError::Singularity(
                "expected_area_density is singular at the origin for kappa < 4".into(),
            ));
        }
        Ok(r.powf(2.0 - kappa / 2.0) * sin_phi.powf(-kappa / 2.0))
    } else {
        Ok(sin_phi.powf(-8.0 / kappa))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(LabError::Domain(format!(
            "kappa must be a positive finite real, got {kappa}"
        )));
    }
    Ok(())
}
