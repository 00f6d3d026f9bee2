//! Chirp-basis (fractional Fourier) mapping from antenna space to the
//! two-dimensional angle x surrogate-distance beamspace.
//!
//! A basis vector is a quadratic-phase signal whose linear coefficient is an
//! angle and whose quadratic coefficient is a surrogate distance. With the
//! surrogate set to zero it is an ordinary far-field steering vector, so the
//! `s = 0` row of every map is the classic DFT beamspace.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::array::{inner, ArrayConfig, SteeringVector};
use crate::error::{Error, Result};
use crate::output::fmt_sig;
use crate::scalar::Real;

/// Default number of angle samples.
pub const DEFAULT_ANGLES: usize = 512;
/// Default number of surrogate-distance rows.
pub const DEFAULT_SURROGATES: usize = 11;

/// Sampling lattice: uniform angles `-1 + 2k/A` and an increasing list of
/// non-negative surrogate distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamspaceGrid<T> {
    num_angles: usize,
    surrogates: Vec<T>,
}

impl<T: Real> BeamspaceGrid<T> {
    /// `num_surrogates` rows evenly spaced over `[0, s_max]`, both ends included.
    pub fn uniform(num_angles: usize, num_surrogates: usize, s_max: T) -> Result<Self> {
        if num_surrogates == 0 {
            return Err(Error::InvalidGrid("at least one surrogate row is required".into()));
        }
        if num_surrogates > 1 && !(s_max > T::zero()) {
            return Err(Error::InvalidGrid(format!("s_max {s_max} must be positive")));
        }
        let surrogates = if num_surrogates == 1 {
            vec![T::zero()]
        } else {
            let step = s_max / T::from_count(num_surrogates - 1);
            (0..num_surrogates).map(|l| step * T::from_count(l)).collect()
        };
        Self::with_surrogates(num_angles, surrogates)
    }

    pub fn with_surrogates(num_angles: usize, surrogates: Vec<T>) -> Result<Self> {
        if num_angles == 0 {
            return Err(Error::InvalidGrid("at least one angle sample is required".into()));
        }
        if surrogates.is_empty() {
            return Err(Error::InvalidGrid("at least one surrogate row is required".into()));
        }
        if surrogates.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
            return Err(Error::InvalidGrid("surrogate distances must be finite and >= 0".into()));
        }
        if surrogates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("surrogate distances must be strictly increasing".into()));
        }
        Ok(Self { num_angles, surrogates })
    }

    /// Default lattice for an array: 512 angles, 11 rows over `[0, 176 / N^2]`.
    pub fn default_for(cfg: &ArrayConfig<T>) -> Self {
        Self::uniform(DEFAULT_ANGLES, DEFAULT_SURROGATES, default_surrogate_max(cfg))
            .expect("default grid is valid")
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_surrogates(&self) -> usize {
        self.surrogates.len()
    }

    pub fn len(&self) -> usize {
        self.num_angles * self.surrogates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn angle(&self, k: usize) -> T {
        -T::one() + T::lit(2.0) * T::from_count(k) / T::from_count(self.num_angles)
    }

    pub fn angles(&self) -> impl ExactSizeIterator<Item = T> + '_ {
        (0..self.num_angles).map(move |k| self.angle(k))
    }

    pub fn surrogate(&self, l: usize) -> T {
        self.surrogates[l]
    }

    pub fn surrogates(&self) -> &[T] {
        &self.surrogates
    }

    pub fn angle_step(&self) -> T {
        T::lit(2.0) / T::from_count(self.num_angles)
    }

    /// Index of the lattice angle nearest to `angle` (wrapping at +/-1).
    pub fn nearest_angle(&self, angle: T) -> usize {
        let a = T::from_count(self.num_angles);
        let k = ((angle + T::one()) * a / T::lit(2.0)).round();
        let k = k.to_i64().unwrap_or(0).rem_euclid(self.num_angles as i64);
        k as usize
    }

    pub fn nearest_surrogate(&self, surrogate: T) -> usize {
        let mut best = 0;
        for (l, s) in self.surrogates.iter().enumerate() {
            if (*s - surrogate).abs() < (self.surrogates[best] - surrogate).abs() {
                best = l;
            }
        }
        best
    }
}

/// Default surrogate span `16 * 11 / N^2`.
pub fn default_surrogate_max<T: Real>(cfg: &ArrayConfig<T>) -> T {
    let n = T::from_count(cfg.num_antennas());
    T::lit(16.0 * DEFAULT_SURROGATES as f64) / (n * n)
}

/// Complex beamspace coefficients on a grid, stored row-major by surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceMap<T> {
    grid: BeamspaceGrid<T>,
    coefficients: Vec<Complex<T>>,
}

impl<T: Real> BeamspaceMap<T> {
    pub fn grid(&self) -> &BeamspaceGrid<T> {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex<T>] {
        &self.coefficients
    }

    pub fn coefficient(&self, row: usize, col: usize) -> Complex<T> {
        self.coefficients[row * self.grid.num_angles + col]
    }

    pub fn gain(&self, row: usize, col: usize) -> T {
        self.coefficient(row, col).norm()
    }

    pub fn row(&self, row: usize) -> &[Complex<T>] {
        let a = self.grid.num_angles;
        &self.coefficients[row * a..(row + 1) * a]
    }

    pub fn row_gains(&self, row: usize) -> Vec<T> {
        self.row(row).iter().map(|c| c.norm()).collect()
    }

    pub fn row_energy(&self, row: usize) -> T {
        self.row(row).iter().fold(T::zero(), |acc, c| acc + c.norm_sqr())
    }

    /// `(row, col)` of the largest gain; earliest cell wins ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        let mut best_gain = T::neg_infinity();
        for (i, c) in self.coefficients.iter().enumerate() {
            let g = c.norm_sqr();
            if g > best_gain {
                best = i;
                best_gain = g;
            }
        }
        (best / self.grid.num_angles, best % self.grid.num_angles)
    }

    /// Writes `s_hat,theta_hat,re,im,gain`, one line per grid point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["s_hat", "theta_hat", "re", "im", "gain"])?;
        for (l, s) in self.grid.surrogates.iter().enumerate() {
            for (k, theta) in self.grid.angles().enumerate() {
                let c = self.coefficient(l, k);
                w.write_record([
                    fmt_sig(s.as_f64()),
                    fmt_sig(theta.as_f64()),
                    fmt_sig(c.re.as_f64()),
                    fmt_sig(c.im.as_f64()),
                    fmt_sig(c.norm().as_f64()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Basis vector at beamspace coordinate `(angle, surrogate)`.
pub fn frft_basis<T: Real>(cfg: &ArrayConfig<T>, angle: T, surrogate: T) -> Result<SteeringVector<T>> {
    if !(angle.abs() <= T::one()) {
        return Err(Error::InvalidCoordinate(format!("angle {angle} outside [-1, 1]")));
    }
    if !(surrogate >= T::zero()) || !surrogate.is_finite() {
        return Err(Error::InvalidCoordinate(format!("surrogate distance {surrogate} < 0")));
    }
    Ok(cfg.chirp_vector(angle, surrogate))
}

/// `<basis(theta0 + d_angle, s0 + d_surrogate), basis(theta0, s0)>`, which
/// depends only on the coordinate differences.
pub fn focus_kernel<T: Real>(cfg: &ArrayConfig<T>, d_angle: T, d_surrogate: T) -> Complex<T> {
    let lin = -T::PI() * d_angle * cfg.angle_scale();
    let quad = T::PI() * d_surrogate;
    let mut acc = Complex::new(T::zero(), T::zero());
    for delta in cfg.offsets() {
        acc = acc + Complex::from_polar(T::one(), lin * delta + quad * delta * delta);
    }
    acc / T::from_count(cfg.num_antennas())
}

fn check_len<T>(cfg: &ArrayConfig<T>, x: &[Complex<T>]) -> Result<()>
where
    T: Real,
{
    if x.len() != cfg.num_antennas() {
        return Err(Error::Shape { expected: cfg.num_antennas(), got: x.len() });
    }
    Ok(())
}

/// Explicit inner products against every basis vector, O(S A N).
pub fn beamspace_direct<T: Real>(
    x: &[Complex<T>],
    grid: &BeamspaceGrid<T>,
    cfg: &ArrayConfig<T>,
) -> Result<BeamspaceMap<T>> {
    check_len(cfg, x)?;
    let mut coefficients = Vec::with_capacity(grid.len());
    for &s in grid.surrogates() {
        for theta in grid.angles() {
            let b = cfg.chirp_vector(theta, s);
            coefficients.push(inner(&b, x));
        }
    }
    Ok(BeamspaceMap { grid: grid.clone(), coefficients })
}

/// FFT-based transform, O(S A log A). Each row dechirps the input, applies a
/// zero-padded A-point DFT and corrects the phase for the centred indexing.
/// Rows are independent and evaluated in parallel.
pub fn beamspace_fast<T: Real>(
    x: &[Complex<T>],
    grid: &BeamspaceGrid<T>,
    cfg: &ArrayConfig<T>,
) -> Result<BeamspaceMap<T>> {
    check_len(cfg, x)?;
    let n = cfg.num_antennas();
    let a = grid.num_angles();
    if a < n {
        return Err(Error::Resolution { angles: a, antennas: n });
    }
    if !cfg.is_half_wavelength() {
        // the DFT lattice only coincides with the angle lattice at d = lambda / 2
        return beamspace_direct(x, grid, cfg);
    }
    let fft = FftPlanner::new().plan_fft_forward(a);
    let norm = T::one() / T::from_count(n).sqrt();
    let centre = T::from_count(n - 1) / T::lit(2.0);
    let offsets: Vec<T> = cfg.offsets().collect();
    // exp(j pi delta_m) folds the -1 start of the angle lattice into the input
    let pre: Vec<Complex<T>> = offsets.iter().map(|&d| Complex::from_polar(norm, T::PI() * d)).collect();
    let post: Vec<Complex<T>> = (0..a)
        .map(|k| Complex::from_polar(T::one(), T::TAU() * centre * T::from_count(k) / T::from_count(a)))
        .collect();

    let mut coefficients = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    coefficients.par_chunks_mut(a).zip(grid.surrogates().par_iter()).for_each(|(row, &s)| {
        for m in 0..n {
            let dechirp = Complex::from_polar(T::one(), T::PI() * s * offsets[m] * offsets[m]);
            row[m] = x[m] * dechirp * pre[m];
        }
        fft.process(row);
        for (c, p) in row.iter_mut().zip(&post) {
            *c = *c * p;
        }
    });
    Ok(BeamspaceMap { grid: grid.clone(), coefficients })
}

/// One weighted basis vector of a sparse beamspace representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamspaceAtom<T> {
    pub angle: T,
    pub surrogate: T,
    pub weight: Complex<T>,
}

/// Adjoint of the transform on a sparse set: `sum weight * basis(angle, surrogate)`.
pub fn synthesize<T: Real>(atoms: &[BeamspaceAtom<T>], cfg: &ArrayConfig<T>) -> Result<Vec<Complex<T>>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); cfg.num_antennas()];
    for atom in atoms {
        let b = frft_basis(cfg, atom.angle, atom.surrogate)?;
        for (o, e) in out.iter_mut().zip(b.iter()) {
            *o = *o + atom.weight * e;
        }
    }
    Ok(out)
}
