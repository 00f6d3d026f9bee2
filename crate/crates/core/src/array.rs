//! Uniform linear array geometry, field regions and steering vectors.
//!
//! The array is centred: element `m` sits at index offset
//! `delta_m = m - (N - 1) / 2`, i.e. at position `delta_m * d` along the
//! aperture. Angles are direction sines (`theta = sin(azimuth)`), ranges are
//! measured from the array centre. Only element phases are modelled; every
//! element carries modulus `1 / sqrt(N)`.

use std::ops::Deref;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig<T> {
    num_antennas: usize,
    wavelength: T,
    spacing: T,
}

impl<T: Real> ArrayConfig<T> {
    pub fn new(num_antennas: usize, wavelength: T, spacing: T) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::InvalidArray("num_antennas must be at least 1".into()));
        }
        if !(wavelength > T::zero() && wavelength.is_finite()) {
            return Err(Error::InvalidArray(format!("wavelength {wavelength} must be positive")));
        }
        if !(spacing > T::zero() && spacing.is_finite()) {
            return Err(Error::InvalidArray(format!("spacing {spacing} must be positive")));
        }
        Ok(Self { num_antennas, wavelength, spacing })
    }

    /// Array with the default half-wavelength element spacing.
    pub fn half_wavelength(num_antennas: usize, wavelength: T) -> Result<Self> {
        Self::new(num_antennas, wavelength, wavelength / T::lit(2.0))
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn wavelength(&self) -> T {
        self.wavelength
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Physical aperture `D = (N - 1) d`.
    pub fn aperture(&self) -> T {
        T::from_count(self.num_antennas - 1) * self.spacing
    }

    /// Centred index offset of element `m`.
    pub fn offset(&self, m: usize) -> T {
        T::from_count(m) - T::from_count(self.num_antennas - 1) / T::lit(2.0)
    }

    pub fn offsets(&self) -> impl ExactSizeIterator<Item = T> + '_ {
        (0..self.num_antennas).map(move |m| self.offset(m))
    }

    /// Multiplier of the linear phase term, `2d / lambda` (1 at half-wavelength spacing).
    pub fn angle_scale(&self) -> T {
        T::lit(2.0) * self.spacing / self.wavelength
    }

    pub fn is_half_wavelength(&self) -> bool {
        let ratio = self.angle_scale();
        (ratio - T::one()).abs() <= T::lit(1e-9)
    }

    pub fn field_boundaries(&self) -> Result<FieldBoundaries<T>> {
        if self.num_antennas < 2 {
            return Err(Error::DegenerateAperture(self.num_antennas));
        }
        let d = self.aperture();
        let rayleigh = T::lit(2.0) * d * d / self.wavelength;
        let fresnel = T::lit(0.62) * (d * d * d / self.wavelength).sqrt();
        Ok(FieldBoundaries { rayleigh, fresnel })
    }

    pub fn classify_region(&self, range: T) -> Result<Region> {
        if !(range > T::zero()) || range.is_nan() {
            return Err(Error::InvalidRange(range.as_f64()));
        }
        let b = self.field_boundaries()?;
        Ok(if range >= b.rayleigh {
            Region::Far
        } else if range < b.fresnel {
            Region::ReactiveNear
        } else {
            Region::RadiatingNear
        })
    }

    /// Spherical-wave steering vector, `exp(-j 2 pi (r_m - r) / lambda) / sqrt(N)`.
    pub fn steering_exact(&self, loc: &SourceLocation<T>) -> SteeringVector<T> {
        let norm = T::one() / T::from_count(self.num_antennas).sqrt();
        let k = T::TAU() / self.wavelength;
        let (r, theta) = (loc.range(), loc.angle());
        let elements = self
            .offsets()
            .map(|delta| {
                let p = delta * self.spacing;
                // r_m^2 - r^2 over r_m + r avoids cancellation at large range.
                let diff_sq = p * p - T::lit(2.0) * r * p * theta;
                let r_m = (r * r + diff_sq).sqrt();
                let path = diff_sq / (r_m + r);
                Complex::from_polar(norm, -k * path)
            })
            .collect();
        SteeringVector { elements, kind: SteeringKind::Exact }
    }

    /// Fresnel (second-order) steering vector: linear phase in angle plus a
    /// quadratic phase whose coefficient is the surrogate distance.
    pub fn steering_fresnel(&self, loc: &SourceLocation<T>) -> SteeringVector<T> {
        let s = self.surrogate_of(loc);
        let mut v = self.chirp_vector(loc.angle(), s);
        v.kind = SteeringKind::Fresnel;
        v
    }

    /// Normalised surrogate distance `s = (2 d^2 / lambda) (1 - theta^2) / (2 r)`.
    pub fn surrogate_of(&self, loc: &SourceLocation<T>) -> T {
        let theta = loc.angle();
        self.spacing * self.spacing * (T::one() - theta * theta) / (self.wavelength * loc.range())
    }

    /// Beamspace coordinates `(theta, s)` of a physical location.
    pub fn surrogate_coords(&self, loc: &SourceLocation<T>) -> (T, T) {
        (loc.angle(), self.surrogate_of(loc))
    }

    /// Inverse of [`surrogate_coords`](Self::surrogate_coords). `s = 0` maps to
    /// `+inf`, the far-field sentinel.
    pub fn range_of(&self, angle: T, surrogate: T) -> Result<T> {
        if surrogate < T::zero() || surrogate.is_nan() {
            return Err(Error::InvalidCoordinate(format!("surrogate distance {surrogate} < 0")));
        }
        if angle.abs() >= T::one() {
            return Err(Error::InvalidCoordinate(format!("angle {angle} outside (-1, 1)")));
        }
        if surrogate == T::zero() {
            return Ok(T::infinity());
        }
        Ok(self.spacing * self.spacing * (T::one() - angle * angle) / (self.wavelength * surrogate))
    }

    /// Quadratic-phase vector `exp(j pi delta theta (2d/lambda) - j pi delta^2 s) / sqrt(N)`.
    /// No domain checks; callers validate.
    pub(crate) fn chirp_vector(&self, angle: T, surrogate: T) -> SteeringVector<T> {
        let norm = T::one() / T::from_count(self.num_antennas).sqrt();
        let lin = T::PI() * angle * self.angle_scale();
        let quad = T::PI() * surrogate;
        let elements = self
            .offsets()
            .map(|delta| Complex::from_polar(norm, lin * delta - quad * delta * delta))
            .collect();
        SteeringVector { elements, kind: SteeringKind::Basis }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBoundaries<T> {
    /// Far-field boundary `2 D^2 / lambda`.
    pub rayleigh: T,
    /// Inner radiating-near-field boundary `0.62 sqrt(D^3 / lambda)`.
    pub fresnel: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    ReactiveNear,
    RadiatingNear,
    Far,
}

/// Physical source position: range from the array centre and direction sine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceLocation<T> {
    range: T,
    angle: T,
}

impl<T: Real> SourceLocation<T> {
    pub fn new(range: T, angle: T) -> Result<Self> {
        let ok_range = range > T::zero() && !range.is_nan();
        let ok_angle = angle.abs() < T::one();
        if !(ok_range && ok_angle) {
            return Err(Error::InvalidLocation { range: range.as_f64(), angle: angle.as_f64() });
        }
        Ok(Self { range, angle })
    }

    pub fn range(&self) -> T {
        self.range
    }

    pub fn angle(&self) -> T {
        self.angle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteeringKind {
    Exact,
    Fresnel,
    Basis,
}

/// Unit-norm complex weights over the array elements.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector<T> {
    elements: Vec<Complex<T>>,
    kind: SteeringKind,
}

impl<T: Real> SteeringVector<T> {
    pub fn kind(&self) -> SteeringKind {
        self.kind
    }

    pub fn elements(&self) -> &[Complex<T>] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<Complex<T>> {
        self.elements
    }

    /// `<self, other> = sum conj(self_m) other_m`.
    pub fn inner(&self, other: &[Complex<T>]) -> Complex<T> {
        inner(&self.elements, other)
    }

    pub fn norm(&self) -> T {
        norm(&self.elements)
    }
}

impl<T> Deref for SteeringVector<T> {
    type Target = [Complex<T>];

    fn deref(&self) -> &[Complex<T>] {
        &self.elements
    }
}

impl<T> AsRef<[Complex<T>]> for SteeringVector<T> {
    fn as_ref(&self) -> &[Complex<T>] {
        &self.elements
    }
}

/// Conjugate-linear in `a`: `sum conj(a_m) b_m`.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()).sqrt()
}
