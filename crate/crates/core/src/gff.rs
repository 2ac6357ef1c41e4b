//! Gaussian free fields on grids, circle-average regularization, and the
//! regularized quantum area / boundary length measures.
//!
//! Normalization: the field has Dirichlet energy `(2 pi)^{-1} int |grad h|^2`,
//! i.e. covariance `2 pi (-lap)^{-1}`. On the grid this means
//! `Cov h = 2 pi Q^{-1}` with `Q` the plain graph Laplacian, sampled
//! spectrally as `h = sum_k xi_k sqrt(2 pi / mu_k) psi_k` over the
//! orthonormal eigenpairs `(mu_k, psi_k)`:
//!
//! * Dirichlet: sine basis on the enclosing square,
//! * free boundary (Neumann), mean zero: cosine basis minus the constant mode.
//!
//! The unit-disc field is the square-grid Dirichlet field conditioned to
//! vanish on the circle: by the Markov property of the free field this is
//! the square sample minus the harmonic extension of its circle trace,
//! computed with the Poisson kernel, with everything outside the disc masked
//! to zero.

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{LabError, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// Samples of the circle trace used for the disc harmonic extension.
const TRACE_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Domain {
    /// Unit disc masked into the square [-(1+margin), 1+margin]^2.
    UnitDisc { margin: f64 },
    /// Box [-half_width, half_width] x [0, height] approximating the
    /// free-boundary half-plane field.
    HalfPlaneBox { half_width: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    NeumannMeanZero,
}

/// A sampled field on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridField {
    pub domain: Domain,
    pub bc: BoundaryCondition,
    pub seed: u64,
    nx: usize,
    ny: usize,
    spacing: f64,
    origin: Complex64,
    values: Vec<f64>,
}

impl GridField {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Complex64 {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for measure experiments (shifts, symmetrization).
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn node_position(&self, i: usize, j: usize) -> Complex64 {
        self.origin + Complex64::new(i as f64 * self.spacing, j as f64 * self.spacing)
    }

    pub fn node_value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Bilinear interpolation; errors when `z` leaves the grid.
    pub fn value_at(&self, z: Complex64) -> Result<f64> {
        let px = (z.re - self.origin.re) / self.spacing;
        let py = (z.im - self.origin.im) / self.spacing;
        if px < -0.5 || py < -0.5 || px > self.nx as f64 - 0.5 || py > self.ny as f64 - 0.5 {
            return Err(LabError::Geometry(format!(
                "point {z} outside the sampled grid"
            )));
        }
        // Clamp half-cell overhang at the edges (cell-centered grids).
        let px = px.clamp(0.0, (self.nx - 1) as f64);
        let py = py.clamp(0.0, (self.ny - 1) as f64);
        let ix = (px.floor() as usize).min(self.nx - 2);
        let iy = (py.floor() as usize).min(self.ny - 2);
        let fx = px - ix as f64;
        let fy = py - iy as f64;
        let v00 = self.values[iy * self.nx + ix];
        let v10 = self.values[iy * self.nx + ix + 1];
        let v01 = self.values[(iy + 1) * self.nx + ix];
        let v11 = self.values[(iy + 1) * self.nx + ix + 1];
        Ok(v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy)
    }

    pub fn add_constant(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }

    /// Replaces h(z) by (h(z) + h(-conj z))/2; the grid must be symmetric
    /// about the imaginary axis (it is for both domains).
    pub fn symmetrize(&mut self) {
        let nx = self.nx;
        for j in 0..self.ny {
            let row = &mut self.values[j * nx..(j + 1) * nx];
            for i in 0..nx / 2 {
                let m = 0.5 * (row[i] + row[nx - 1 - i]);
                row[i] = m;
                row[nx - 1 - i] = m;
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Rebuilds a field from its serialized parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw(
        domain: Domain,
        bc: BoundaryCondition,
        seed: u64,
        nx: usize,
        ny: usize,
        spacing: f64,
        origin: Complex64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(LabError::Config(format!(
                "value payload {} does not match {nx} x {ny}",
                values.len()
            )));
        }
        Ok(GridField {
            domain,
            bc,
            seed,
            nx,
            ny,
            spacing,
            origin,
            values,
        })
    }
}

fn matmul(a: &[f64], b: &[f64], n: usize, m: usize, p: usize, out: &mut [f64]) {
    // a: n x m, b: m x p, out: n x p, all row-major.
    out.fill(0.0);
    for i in 0..n {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * p..(k + 1) * p];
            let orow = &mut out[i * p..(i + 1) * p];
            for j in 0..p {
                orow[j] += aik * brow[j];
            }
        }
    }
}

enum Basis {
    /// Dirichlet square: symmetric sine matrix over interior nodes plus the
    /// disc mask and Poisson kernel data.
    Disc {
        n: usize,
        sine: Vec<f64>,
        weights: Vec<f64>,
        /// Interior node (flat grid index) list, |z| < 1.
        inside: Vec<u32>,
        /// Poisson kernel, row per interior node, TRACE_SAMPLES columns.
        kernel: Vec<f32>,
        trace_points: Vec<Complex64>,
    },
    /// Neumann box: cosine matrices per axis.
    Box {
        cos_x: Vec<f64>,
        cos_y: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// Reusable spectral sampler for one (domain, n, bc) configuration.
/// Construction precomputes the eigenbasis (and, for the disc, the Poisson
/// kernel); each `sample` call is two dense transforms.
pub struct GffSampler {
    domain: Domain,
    bc: BoundaryCondition,
    nx: usize,
    ny: usize,
    spacing: f64,
    origin: Complex64,
    basis: Basis,
}

impl GffSampler {
    pub fn new(domain: Domain, n: usize, bc: BoundaryCondition) -> Result<Self> {
        if n < 16 {
            return Err(LabError::Config(format!("grid resolution {n} < 16")));
        }
        match (domain, bc) {
            (Domain::UnitDisc { margin }, BoundaryCondition::Dirichlet) => {
                if !(margin > 0.0 && margin < 1.0) {
                    return Err(LabError::Config(format!("disc margin {margin} not in (0,1)")));
                }
                Ok(Self::new_disc(margin, n))
            }
            (Domain::HalfPlaneBox { half_width, height }, BoundaryCondition::NeumannMeanZero) => {
                if !(half_width > 0.0 && height > 0.0) {
                    return Err(LabError::Config("degenerate box".into()));
                }
                Ok(Self::new_box(half_width, height, n))
            }
            _ => Err(LabError::Config(
                "unsupported domain/boundary-condition combination".into(),
            )),
        }
    }

    fn new_disc(margin: f64, n: usize) -> Self {
        let half = 1.0 + margin;
        let spacing = 2.0 * half / (n + 1) as f64;
        let nx = n + 2; // interior nodes plus the zero boundary ring
        let origin = Complex64::new(-half, -half);

        // Symmetric orthonormal sine matrix over the n interior indices.
        let norm = (2.0 / (n + 1) as f64).sqrt();
        let mut sine = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                sine[k * n + i] =
                    norm * (std::f64::consts::PI * (k + 1) as f64 * (i + 1) as f64
                        / (n + 1) as f64)
                        .sin();
            }
        }
        let eig_1d: Vec<f64> = (0..n)
            .map(|k| {
                let s = (std::f64::consts::PI * (k + 1) as f64 / (2.0 * (n + 1) as f64)).sin();
                4.0 * s * s
            })
            .collect();
        let mut weights = vec![0.0; n * n];
        for k1 in 0..n {
            for k2 in 0..n {
                weights[k1 * n + k2] = (TWO_PI / (eig_1d[k1] + eig_1d[k2])).sqrt();
            }
        }

        let trace_points: Vec<Complex64> = (0..TRACE_SAMPLES)
            .map(|j| Complex64::from_polar(1.0, TWO_PI * j as f64 / TRACE_SAMPLES as f64))
            .collect();

        let mut inside = Vec::new();
        for j in 0..nx {
            for i in 0..nx {
                let z = origin + Complex64::new(i as f64 * spacing, j as f64 * spacing);
                if z.norm() < 1.0 {
                    inside.push((j * nx + i) as u32);
                }
            }
        }
        // Poisson kernel rows: P(z, w) = (1 - |z|^2)/|z - w|^2, averaged
        // uniformly over the trace samples.
        let kernel: Vec<f32> = inside
            .par_iter()
            .flat_map_iter(|&flat| {
                let i = flat as usize % nx;
                let j = flat as usize / nx;
                let z = origin + Complex64::new(i as f64 * spacing, j as f64 * spacing);
                let one_minus = 1.0 - z.norm_sqr();
                trace_points
                    .iter()
                    .map(move |&w| ((one_minus / (z - w).norm_sqr()) / TRACE_SAMPLES as f64) as f32)
                    .collect::<Vec<f32>>()
            })
            .collect();

        GffSampler {
            domain: Domain::UnitDisc { margin },
            bc: BoundaryCondition::Dirichlet,
            nx,
            ny: nx,
            spacing,
            origin,
            basis: Basis::Disc {
                n,
                sine,
                weights,
                inside,
                kernel,
                trace_points,
            },
        }
    }

    fn new_box(half_width: f64, height: f64, n: usize) -> Self {
        let nx = n;
        let spacing = 2.0 * half_width / nx as f64;
        let ny = (height / spacing).round().max(16.0) as usize;
        let origin = Complex64::new(-half_width + 0.5 * spacing, 0.5 * spacing);

        let cos_mat = |m: usize| -> Vec<f64> {
            let mut c = vec![0.0; m * m];
            for k in 0..m {
                let norm = if k == 0 {
                    (1.0 / m as f64).sqrt()
                } else {
                    (2.0 / m as f64).sqrt()
                };
                for i in 0..m {
                    c[k * m + i] = norm
                        * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / m as f64).cos();
                }
            }
            c
        };
        let eig = |m: usize| -> Vec<f64> {
            (0..m)
                .map(|k| {
                    let s = (std::f64::consts::PI * k as f64 / (2.0 * m as f64)).sin();
                    4.0 * s * s
                })
                .collect()
        };
        let ex = eig(nx);
        let ey = eig(ny);
        let mut weights = vec![0.0; nx * ny];
        for k1 in 0..nx {
            for k2 in 0..ny {
                if k1 == 0 && k2 == 0 {
                    continue; // constant mode excluded: mean-zero convention
                }
                weights[k1 * ny + k2] = (TWO_PI / (ex[k1] + ey[k2])).sqrt();
            }
        }

        GffSampler {
            domain: Domain::HalfPlaneBox { half_width, height },
            bc: BoundaryCondition::NeumannMeanZero,
            nx,
            ny,
            spacing,
            origin,
            basis: Basis::Box {
                cos_x: cos_mat(nx),
                cos_y: cos_mat(ny),
                weights,
            },
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn sample(&self, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = match &self.basis {
            Basis::Disc {
                n,
                sine,
                weights,
                inside,
                kernel,
                trace_points,
            } => {
                let n = *n;
                let mut coeff = vec![0.0; n * n];
                for (c, w) in coeff.iter_mut().zip(weights.iter()) {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *c = g * w;
                }
                // Square-domain sample: sine * coeff * sine (sine is symmetric).
                let mut tmp = vec![0.0; n * n];
                matmul(&coeff, sine, n, n, n, &mut tmp);
                let mut interior = vec![0.0; n * n];
                matmul(sine, &tmp, n, n, n, &mut interior);

                let nx = self.nx;
                let mut values = vec![0.0; nx * nx];
                for j in 0..n {
                    for i in 0..n {
                        values[(j + 1) * nx + (i + 1)] = interior[i * n + j];
                    }
                }

                // Condition on the circle: subtract the harmonic extension of
                // the trace, zero everything at or beyond |z| = 1.
                let square = GridField {
                    domain: self.domain,
                    bc: self.bc,
                    seed,
                    nx,
                    ny: nx,
                    spacing: self.spacing,
                    origin: self.origin,
                    values,
                };
                let trace: Vec<f32> = trace_points
                    .iter()
                    .map(|&w| square.value_at(w).expect("trace inside grid") as f32)
                    .collect();
                let mut values = vec![0.0; nx * nx];
                let corrections: Vec<(u32, f64)> = inside
                    .par_iter()
                    .enumerate()
                    .map(|(row, &flat)| {
                        let krow = &kernel[row * TRACE_SAMPLES..(row + 1) * TRACE_SAMPLES];
                        let mut acc = 0.0f32;
                        for (k, g) in krow.iter().zip(trace.iter()) {
                            acc += k * g;
                        }
                        (flat, acc as f64)
                    })
                    .collect();
                for (flat, harm) in corrections {
                    values[flat as usize] = square.values[flat as usize] - harm;
                }
                values
            }
            Basis::Box {
                cos_x,
                cos_y,
                weights,
            } => {
                let (nx, ny) = (self.nx, self.ny);
                let mut coeff = vec![0.0; nx * ny];
                for (c, w) in coeff.iter_mut().zip(weights.iter()) {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *c = g * w; // the (0,0) weight is zero: constant mode stays out
                }
                // h(i,j) = sum_{k1,k2} coeff[k1,k2] cx[k1,i] cy[k2,j]
                let mut tmp = vec![0.0; nx * ny]; // tmp[k2, i] after first product
                let mut t2 = vec![0.0; ny * nx];
                // first: (coeff^T: ny x nx) * cos_x (nx x nx) -> ny x nx
                let mut coeff_t = vec![0.0; ny * nx];
                for k1 in 0..nx {
                    for k2 in 0..ny {
                        coeff_t[k2 * nx + k1] = coeff[k1 * ny + k2];
                    }
                }
                matmul(&coeff_t, cos_x, ny, nx, nx, &mut t2);
                // second: cos_y^T (ny x ny) * t2 (ny x nx) -> ny x nx, but
                // cos_y rows are modes; need (cos_y^T)[j,k2] = cos_y[k2,j].
                let mut cos_y_t = vec![0.0; ny * ny];
                for k in 0..ny {
                    for j in 0..ny {
                        cos_y_t[j * ny + k] = cos_y[k * ny + j];
                    }
                }
                matmul(&cos_y_t, &t2, ny, ny, nx, &mut tmp);
                // tmp[j, i] is the node value at (i, j); flatten row-major in x.
                tmp
            }
        };
        GridField {
            domain: self.domain,
            bc: self.bc,
            seed,
            nx: self.nx,
            ny: self.ny,
            spacing: self.spacing,
            origin: self.origin,
            values,
        }
    }
}

/// One-shot sampler; ensembles should reuse a [`GffSampler`].
pub fn sample_gff(domain: Domain, n: usize, bc: BoundaryCondition, seed: u64) -> Result<GridField> {
    Ok(GffSampler::new(domain, n, bc)?.sample(seed))
}

/// Mean of the field on the circle of radius `eps` about `z`, from
/// `max(64, ceil(2 pi eps / spacing))` interpolated points.
pub fn circle_average(field: &GridField, z: Complex64, eps: f64) -> Result<f64> {
    if eps < 2.0 * field.spacing {
        return Err(LabError::Geometry(format!(
            "circle radius {eps} below two grid spacings"
        )));
    }
    let k = ((TWO_PI * eps / field.spacing).ceil() as usize).max(64);
    let mut acc = 0.0;
    for j in 0..k {
        let theta = TWO_PI * j as f64 / k as f64;
        let p = z + Complex64::from_polar(eps, theta);
        acc += field.value_at(p)?;
    }
    Ok(acc / k as f64)
}

/// Mean of `eval` on the upper semicircle of radius `eps` about the real
/// point `x`, with `k` midpoint angles (no endpoint touches the axis).
pub fn semicircle_average<F>(eval: F, x: f64, eps: f64, k: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Result<f64>,
{
    let mut acc = 0.0;
    for j in 0..k {
        let theta = std::f64::consts::PI * (j as f64 + 0.5) / k as f64;
        let p = Complex64::new(x + eps * theta.cos(), eps * theta.sin());
        acc += eval(p)?;
    }
    Ok(acc / k as f64)
}

/// Fitted scaling of the exponential moment: slope of
/// `log E exp(gamma h_eps(z))` against `log(1/eps)`, with a block-jackknife
/// standard error (the same fields enter every eps, so per-eps errors are
/// correlated).
#[derive(Debug, Clone)]
pub struct MomentFit {
    pub slope: f64,
    pub stderr: f64,
    pub eps: Vec<f64>,
    pub log_moments: Vec<f64>,
    pub n_fields: u64,
}

pub fn moment_test(
    sampler: &GffSampler,
    gamma: f64,
    z: Complex64,
    eps_list: &[f64],
    n_fields: u64,
    master_seed: u64,
) -> Result<MomentFit> {
    if eps_list.len() < 3 {
        return Err(LabError::Config(
            "moment fit needs at least 3 radii".into(),
        ));
    }
    if n_fields < 1000 {
        return Err(LabError::Config(format!(
            "moment test needs an ensemble of >= 1000 fields, got {n_fields}"
        )));
    }
    let rows: Vec<Vec<f64>> = crate::mc::collect_parallel(n_fields, |i| {
        let field = sampler.sample(crate::mc::derive_seed(master_seed, "gff_moment", i));
        eps_list
            .iter()
            .map(|&eps| {
                let h = circle_average(&field, z, eps).expect("circle inside grid");
                (gamma * h).exp()
            })
            .collect()
    });

    let ne = eps_list.len();
    let xs: Vec<f64> = eps_list.iter().map(|&e| (1.0 / e).ln()).collect();
    let slope_of = |means: &[f64]| -> f64 {
        let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        let xm = xs.iter().sum::<f64>() / ne as f64;
        let ym = ys.iter().sum::<f64>() / ne as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in xs.iter().zip(ys.iter()) {
            num += (x - xm) * (y - ym);
            den += (x - xm) * (x - xm);
        }
        num / den
    };

    let mut sums = vec![0.0; ne];
    for row in &rows {
        for (s, v) in sums.iter_mut().zip(row.iter()) {
            *s += v;
        }
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let slope = slope_of(&means);

    // Delete-block jackknife over up to 50 contiguous blocks.
    let n_blocks = rows.len().min(50);
    let block_len = rows.len().div_ceil(n_blocks);
    let mut jack = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let lo = b * block_len;
        let hi = ((b + 1) * block_len).min(rows.len());
        if lo >= hi {
            continue;
        }
        let mut s = sums.clone();
        for row in &rows[lo..hi] {
            for (acc, v) in s.iter_mut().zip(row.iter()) {
                *acc -= v;
            }
        }
        let m: Vec<f64> = s.iter().map(|v| v / (n - (hi - lo) as f64)).collect();
        jack.push(slope_of(&m));
    }
    let b = jack.len() as f64;
    let jm = jack.iter().sum::<f64>() / b;
    let var = jack.iter().map(|s| (s - jm) * (s - jm)).sum::<f64>() * (b - 1.0) / b;

    Ok(MomentFit {
        slope,
        stderr: var.sqrt(),
        eps: eps_list.to_vec(),
        log_moments: means.iter().map(|m| m.ln()).collect(),
        n_fields,
    })
}

/// Regularized quantum area measure: one cell per grid node inside the
/// domain whose eps-circle stays on the grid, with mass
/// `eps^(gamma^2/2) exp(gamma h_eps(center)) * cell_area`.
#[derive(Debug, Clone)]
pub struct QuantumMeasure {
    pub gamma: f64,
    pub epsilon: f64,
    /// (node i, node j, center, mass) per counted cell.
    pub cells: Vec<(u32, u32, Complex64, f64)>,
    pub cell_area: f64,
}

impl QuantumMeasure {
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.3).sum()
    }
}

pub fn quantum_area(field: &GridField, gamma: f64, eps: f64) -> Result<QuantumMeasure> {
    if !(0.0..2.0).contains(&gamma) {
        return Err(LabError::Domain(format!(
            "quantum area defined for 0 <= gamma < 2, got {gamma}"
        )));
    }
    let prefactor = eps.powf(gamma * gamma / 2.0);
    let area = field.spacing * field.spacing;
    let mut cells = Vec::new();
    for j in 0..field.ny {
        for i in 0..field.nx {
            let z = field.node_position(i, j);
            let in_domain = match field.domain {
                Domain::UnitDisc { .. } => z.norm() < 1.0,
                Domain::HalfPlaneBox { .. } => true,
            };
            if !in_domain {
                continue;
            }
            let h = match circle_average(field, z, eps) {
                Ok(h) => h,
                Err(LabError::Geometry(_)) => continue, // circle leaves the grid
                Err(e) => return Err(e),
            };
            cells.push((i as u32, j as u32, z, prefactor * (gamma * h).exp() * area));
        }
    }
    Ok(QuantumMeasure {
        gamma,
        epsilon: eps,
        cells,
        cell_area: area,
    })
}

/// Regularized quantum boundary length of `[lo, hi]` on the bottom edge of a
/// free-boundary field:
///
/// ```text
/// int_lo^hi eps^(gamma^2/4) exp[(gamma/2) h^semi_eps(x)] dx
/// ```
///
/// where `h^semi` is the upper-semicircle average. The integrand is sampled
/// at the global grid abscissas and integrated as its exact piecewise-linear
/// interpolant, so lengths are additive over adjacent intervals to rounding.
pub fn boundary_quantum_length(
    field: &GridField,
    gamma: f64,
    lo: f64,
    hi: f64,
    eps: f64,
) -> Result<f64> {
    if field.bc != BoundaryCondition::NeumannMeanZero {
        return Err(LabError::BoundaryCondition(
            "boundary length needs the free-boundary field".into(),
        ));
    }
    boundary_quantum_length_with(
        |z| field.value_at(z),
        field.origin.re,
        field.spacing,
        gamma,
        lo,
        hi,
        eps,
    )
}

/// Generic form of [`boundary_quantum_length`] over any field evaluator
/// (the coupled field of the zipper experiment uses this).
pub fn boundary_quantum_length_with<F>(
    eval: F,
    x_origin: f64,
    spacing: f64,
    gamma: f64,
    lo: f64,
    hi: f64,
    eps: f64,
) -> Result<f64>
where
    F: Fn(Complex64) -> Result<f64>,
{
    if hi < lo {
        return Err(LabError::Domain(format!("empty interval [{lo}, {hi}]")));
    }
    if eps < 2.0 * spacing {
        return Err(LabError::Geometry(format!(
            "semicircle radius {eps} below two grid spacings"
        )));
    }
    let k = ((std::f64::consts::PI * eps / spacing).ceil() as usize).max(32);
    let prefactor = eps.powf(gamma * gamma / 4.0);
    let node_index = |x: f64| ((x - x_origin) / spacing).floor() as i64;
    let i_lo = node_index(lo);
    let i_hi = node_index(hi) + 1;
    let mut integrand = Vec::with_capacity((i_hi - i_lo + 1) as usize);
    for i in i_lo..=i_hi {
        let x = x_origin + i as f64 * spacing;
        let h = semicircle_average(&eval, x, eps, k)?;
        integrand.push(prefactor * (0.5 * gamma * h).exp());
    }
    let f_at = |x: f64| -> f64 {
        let u = ((x - x_origin) / spacing - i_lo as f64).max(0.0);
        let idx = (u.floor() as usize).min(integrand.len() - 2);
        let frac = u - idx as f64;
        integrand[idx] * (1.0 - frac) + integrand[idx + 1] * frac
    };
    // Exact integral of the piecewise-linear interpolant over [lo, hi],
    // cell by cell (index-driven, so rounding cannot stall the sweep).
    let mut total = 0.0;
    for i in i_lo..i_hi {
        let a = (x_origin + i as f64 * spacing).max(lo);
        let b = (x_origin + (i + 1) as f64 * spacing).min(hi);
        if b > a {
            total += (b - a) * 0.5 * (f_at(a) + f_at(b));
        }
    }
    Ok(total)
}
