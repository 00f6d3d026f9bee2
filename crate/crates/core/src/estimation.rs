//! Sparse channel estimation over the chirp-basis dictionary.
//!
//! A multipath channel is a short superposition of steering vectors, so its
//! beamspace map has a handful of dominant cells. [`omp_estimate`] recovers
//! them greedily, using one fast transform of the residual per iteration as
//! the correlation step.

use num_complex::Complex;
use serde::Serialize;

use crate::array::{inner, norm, ArrayConfig, SourceLocation};
use crate::beamspace::{beamspace_fast, BeamspaceGrid};
use crate::error::{Error, Result};
use crate::output::{fmt_sig, CsvRecord};
use crate::scalar::Real;

/// NMSE reported for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    Exact,
    Fresnel,
}

/// Where a path arrives from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathPosition<T> {
    /// Physical location, rendered with the channel model.
    Location(SourceLocation<T>),
    /// Beamspace coordinate, rendered as the basis vector at `(angle, surrogate)`.
    /// This is the only way to place a far-field (`s = 0`) path.
    Beamspace { angle: T, surrogate: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec<T> {
    pub gain: Complex<T>,
    pub position: PathPosition<T>,
}

impl<T: Real> PathSpec<T> {
    pub fn at_location(gain: Complex<T>, location: SourceLocation<T>) -> Self {
        PathSpec { gain, position: PathPosition::Location(location) }
    }

    pub fn at_coordinate(gain: Complex<T>, angle: T, surrogate: T) -> Self {
        PathSpec { gain, position: PathPosition::Beamspace { angle, surrogate } }
    }
}

#[derive(Debug, Clone)]
pub struct MultipathChannel<T> {
    paths: Vec<PathSpec<T>>,
    vector: Vec<Complex<T>>,
}

impl<T: Real> MultipathChannel<T> {
    pub fn paths(&self) -> &[PathSpec<T>] {
        &self.paths
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Composite antenna-space channel `sum g_l a_l`.
    pub fn vector(&self) -> &[Complex<T>] {
        &self.vector
    }

    pub fn norm(&self) -> T {
        norm(&self.vector)
    }
}

pub fn build_channel<T: Real>(
    cfg: &ArrayConfig<T>,
    paths: &[PathSpec<T>],
    model: ChannelModel,
) -> Result<MultipathChannel<T>> {
    if paths.is_empty() {
        return Err(Error::InvalidParameter("a channel needs at least one path".into()));
    }
    let mut vector = vec![Complex::new(T::zero(), T::zero()); cfg.num_antennas()];
    for p in paths {
        let a = match p.position {
            PathPosition::Location(loc) => match model {
                ChannelModel::Exact => cfg.steering_exact(&loc),
                ChannelModel::Fresnel => cfg.steering_fresnel(&loc),
            },
            PathPosition::Beamspace { angle, surrogate } => crate::beamspace::frft_basis(cfg, angle, surrogate)?,
        };
        for (v, e) in vector.iter_mut().zip(a.iter()) {
            *v = *v + p.gain * e;
        }
    }
    Ok(MultipathChannel { paths: paths.to_vec(), vector })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule<T> {
    /// Run exactly this many iterations.
    Paths(usize),
    /// Stop once the residual norm is at most this value.
    Residual(T),
}

#[derive(Debug, Clone)]
pub struct EstimationReport<T> {
    /// Selected `(row, col)` grid cells in selection order.
    pub supports: Vec<(usize, usize)>,
    pub gains: Vec<Complex<T>>,
    pub estimate: Vec<Complex<T>>,
    pub iterations: usize,
    /// Residual norm before the first iteration and after each one.
    pub residual_norms: Vec<T>,
}

impl<T: Real> EstimationReport<T> {
    /// Beamspace coordinates of the recovered atoms.
    pub fn coordinates(&self, grid: &BeamspaceGrid<T>) -> Vec<(T, T)> {
        self.supports.iter().map(|&(r, c)| (grid.angle(c), grid.surrogate(r))).collect()
    }
}

/// Orthogonal matching pursuit over the grid's basis dictionary.
pub fn omp_estimate<T: Real>(
    y: &[Complex<T>],
    grid: &BeamspaceGrid<T>,
    cfg: &ArrayConfig<T>,
    stop: StopRule<T>,
) -> Result<EstimationReport<T>> {
    let n = cfg.num_antennas();
    if y.len() != n {
        return Err(Error::Shape { expected: n, got: y.len() });
    }
    if grid.num_angles() < n {
        return Err(Error::Resolution { angles: grid.num_angles(), antennas: n });
    }
    let budget = match stop {
        StopRule::Paths(l) => l.min(n),
        StopRule::Residual(eps) => {
            if !(eps >= T::zero()) {
                return Err(Error::InvalidParameter(format!("residual tolerance {eps} must be >= 0")));
            }
            n
        }
    };

    let mut supports: Vec<(usize, usize)> = Vec::new();
    let mut atoms: Vec<Vec<Complex<T>>> = Vec::new();
    let mut gains = Vec::new();
    let mut estimate = vec![Complex::new(T::zero(), T::zero()); n];
    let mut residual = y.to_vec();
    let mut residual_norms = vec![norm(&residual)];

    while supports.len() < budget {
        if let StopRule::Residual(eps) = stop {
            if residual_norms[residual_norms.len() - 1] <= eps {
                break;
            }
        }
        let map = beamspace_fast(&residual, grid, cfg)?;
        let a = grid.num_angles();
        let mut best = 0;
        let mut best_gain = T::neg_infinity();
        for (i, c) in map.coefficients().iter().enumerate() {
            let g = c.norm_sqr();
            if g > best_gain {
                best_gain = g;
                best = i;
            }
        }
        let cell = (best / a, best % a);
        if supports.contains(&cell) {
            return Err(Error::DuplicateAtom { row: cell.0, col: cell.1 });
        }
        supports.push(cell);
        atoms.push(cfg.chirp_vector(grid.angle(cell.1), grid.surrogate(cell.0)).into_elements());

        gains = least_squares(&atoms, y).ok_or(Error::DuplicateAtom { row: cell.0, col: cell.1 })?;
        estimate.iter_mut().for_each(|e| *e = Complex::new(T::zero(), T::zero()));
        for (atom, g) in atoms.iter().zip(&gains) {
            for (e, b) in estimate.iter_mut().zip(atom) {
                *e = *e + *g * b;
            }
        }
        for ((r, yv), e) in residual.iter_mut().zip(y).zip(&estimate) {
            *r = *yv - e;
        }
        residual_norms.push(norm(&residual));
    }
    Ok(EstimationReport { iterations: supports.len(), supports, gains, estimate, residual_norms })
}

/// Solves the normal equations `B^H B x = B^H y` by complex Cholesky.
/// Returns `None` when the Gram matrix is numerically singular.
fn least_squares<T: Real>(atoms: &[Vec<Complex<T>>], y: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
    let k = atoms.len();
    let zero = Complex::new(T::zero(), T::zero());
    let mut gram = vec![zero; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v = inner(&atoms[i], &atoms[j]);
            gram[i * k + j] = v;
            gram[j * k + i] = v.conj();
        }
    }
    let rhs: Vec<Complex<T>> = atoms.iter().map(|a| inner(a, y)).collect();

    // G = L L^H, lower triangle stored in place
    let tol = T::epsilon().sqrt() * T::lit(1e-3);
    let mut l = vec![zero; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = gram[i * k + j];
            for p in 0..j {
                sum = sum - l[i * k + p] * l[j * k + p].conj();
            }
            if i == j {
                if !(sum.re > tol) {
                    return None;
                }
                l[i * k + i] = Complex::new(sum.re.sqrt(), T::zero());
            } else {
                l[i * k + j] = sum / l[j * k + j].re;
            }
        }
    }
    let mut z = vec![zero; k];
    for i in 0..k {
        let mut sum = rhs[i];
        for p in 0..i {
            sum = sum - l[i * k + p] * z[p];
        }
        z[i] = sum / l[i * k + i].re;
    }
    let mut x = vec![zero; k];
    for i in (0..k).rev() {
        let mut sum = z[i];
        for p in i + 1..k {
            sum = sum - l[p * k + i].conj() * x[p];
        }
        x[i] = sum / l[i * k + i].re;
    }
    Some(x)
}

/// `10 log10(|h_est - h|^2 / |h|^2)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse<T: Real>(h: &[Complex<T>], estimate: &[Complex<T>]) -> Result<f64> {
    if h.len() != estimate.len() {
        return Err(Error::Shape { expected: h.len(), got: estimate.len() });
    }
    let reference: f64 = h.iter().map(|v| v.norm_sqr().as_f64()).sum();
    if reference == 0.0 {
        return Err(Error::UndefinedReference);
    }
    let err: f64 = h.iter().zip(estimate).map(|(a, b)| (*b - a).norm_sqr().as_f64()).sum();
    if err == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err / reference).log10()).max(NMSE_FLOOR_DB))
}

/// Row of the estimation CSV, `seed,snr_db,L,nmse_db,support_exact`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationRecord {
    pub seed: u64,
    pub snr_db: f64,
    pub paths: usize,
    pub nmse_db: f64,
    pub support_exact: bool,
}

impl CsvRecord for EstimationRecord {
    fn header() -> &'static [&'static str] {
        &["seed", "snr_db", "L", "nmse_db", "support_exact"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            fmt_sig(self.snr_db),
            self.paths.to_string(),
            fmt_sig(self.nmse_db),
            u8::from(self.support_exact).to_string(),
        ]
    }
}
