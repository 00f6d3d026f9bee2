//! High- and low-mainlobe analysis of a focused beamspace pattern.
//!
//! Every quantity here is computed from [`focus_kernel`], i.e. from coordinate
//! differences only, so results do not depend on where the focus sits.
//!
//! The high mainlobe is the 3 dB region around the focused point. Its angle
//! cross-section is a Dirichlet kernel and its surrogate cross-section a
//! Fresnel-integral profile. A Gaussian in both coordinates approximates the
//! power gain there, and its level sets are axis-aligned ellipses.
//!
//! The low mainlobe is the widened plateau seen at a surrogate mismatch `ds`.
//! Stationary phase predicts a plateau of angular width `2 N ds` and mean
//! amplitude `1 / (N sqrt(ds))` at half-wavelength spacing.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::beamspace::focus_kernel;
use crate::error::{Error, Result};
use crate::output::{fmt_sig, CsvRecord};
use crate::scalar::Real;

/// Stationary-phase predictions need `ds >= PSP_VALIDITY_FLOOR / N^2`.
pub const PSP_VALIDITY_FLOOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Angle,
    Surrogate,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Angle => "angle",
            Axis::Surrogate => "surrogate",
        }
    }
}

/// Gain profile along one beamspace axis through a focused point.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection<T> {
    pub axis: Axis,
    /// Value of the other coordinate along the cut.
    pub fixed: T,
    /// `(coordinate, gain)` pairs sorted by coordinate.
    pub samples: Vec<(T, T)>,
    pub resolution: T,
}

/// Samples `|<basis, fresnel(center)>|` along `axis` through `center`.
pub fn cross_section<T: Real>(
    cfg: &ArrayConfig<T>,
    center: (T, T),
    axis: Axis,
    halfwidth: T,
    resolution: T,
) -> Result<CrossSection<T>> {
    if !(resolution > T::zero()) {
        return Err(Error::InvalidParameter(format!("resolution {resolution} must be positive")));
    }
    if !(halfwidth > resolution) {
        return Err(Error::InvalidParameter("halfwidth must exceed the resolution".into()));
    }
    let steps = (halfwidth / resolution).floor().to_i64().unwrap_or(0);
    let (along, fixed) = match axis {
        Axis::Angle => (center.0, center.1),
        Axis::Surrogate => (center.1, center.0),
    };
    let samples = (-steps..=steps)
        .map(|i| {
            let offset = T::lit(i as f64) * resolution;
            let g = match axis {
                Axis::Angle => focus_kernel(cfg, offset, T::zero()),
                Axis::Surrogate => focus_kernel(cfg, T::zero(), offset),
            };
            (along + offset, g.norm())
        })
        .collect();
    Ok(CrossSection { axis, fixed, samples, resolution })
}

/// Full width between the two `1/sqrt(2)` crossings adjacent to the peak,
/// each located by linear interpolation.
pub fn width_3db<T: Real>(profile: &CrossSection<T>) -> Result<T> {
    let s = &profile.samples;
    let thr = T::FRAC_1_SQRT_2();
    let (peak, &(_, g_peak)) = s
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).expect("finite gains"))
        .ok_or_else(|| Error::SpanTooNarrow("empty profile".into()))?;
    if g_peak < thr + T::lit(1e-6) {
        return Err(Error::SpanTooNarrow(format!("peak gain {g_peak} below the 3 dB level")));
    }
    if peak == 0 || peak + 1 == s.len() {
        return Err(Error::SpanTooNarrow("peak lies on the edge of the span".into()));
    }
    let cross = |a: (T, T), b: (T, T)| a.0 + (thr - a.1) / (b.1 - a.1) * (b.0 - a.0);
    let left = (0..peak)
        .rev()
        .find(|&i| s[i].1 < thr)
        .map(|i| cross(s[i], s[i + 1]))
        .ok_or_else(|| Error::SpanTooNarrow("no crossing left of the peak".into()))?;
    let right = (peak + 1..s.len())
        .find(|&i| s[i].1 < thr)
        .map(|i| cross(s[i - 1], s[i]))
        .ok_or_else(|| Error::SpanTooNarrow("no crossing right of the peak".into()))?;
    Ok(right - left)
}

/// Closed-form 3 dB widths of the high mainlobe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighMainlobeWidths<T> {
    /// `2 / N`.
    pub angle: T,
    /// `7 / N^2`.
    pub surrogate: T,
    /// False when the array spacing is not half a wavelength, where the laws
    /// have not been checked.
    pub validated: bool,
}

pub fn predict_high_mainlobe_widths<T: Real>(cfg: &ArrayConfig<T>) -> HighMainlobeWidths<T> {
    let n = T::from_count(cfg.num_antennas());
    HighMainlobeWidths {
        angle: T::lit(2.0) / n,
        surrogate: T::lit(7.0) / (n * n),
        validated: cfg.is_half_wavelength(),
    }
}

/// Power-gain sample of the beamspace around a focused point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MainlobeSample<T> {
    pub angle: T,
    pub surrogate: T,
    pub power: T,
}

/// Samples a `steps x steps` box around `center` and keeps the points whose
/// power gain is at least `threshold`. The box spans `+/- 1.5 / N` in angle and
/// `+/- 8 / N^2` in surrogate distance; an error is returned if the region
/// touches the box edge.
pub fn sample_high_mainlobe<T: Real>(
    cfg: &ArrayConfig<T>,
    center: (T, T),
    threshold: T,
    steps: usize,
) -> Result<Vec<MainlobeSample<T>>> {
    if steps < 3 {
        return Err(Error::InvalidParameter("need at least 3 steps per axis".into()));
    }
    if !(threshold > T::lit(0.25) && threshold < T::one()) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside (0.25, 1)")));
    }
    let n = T::from_count(cfg.num_antennas());
    let half_angle = T::lit(1.5) / (n * cfg.angle_scale());
    let half_surr = T::lit(8.0) / (n * n);
    let last = T::from_count(steps - 1);
    let mut out = Vec::new();
    for i in 0..steps {
        let ds = half_surr * (T::lit(2.0) * T::from_count(i) / last - T::one());
        for j in 0..steps {
            let dt = half_angle * (T::lit(2.0) * T::from_count(j) / last - T::one());
            let power = focus_kernel(cfg, dt, ds).norm_sqr();
            if power >= threshold {
                if i == 0 || j == 0 || i + 1 == steps || j + 1 == steps {
                    return Err(Error::SpanTooNarrow("mainlobe region reaches the sampling box".into()));
                }
                out.push(MainlobeSample { angle: center.0 + dt, surrogate: center.1 + ds, power });
            }
        }
    }
    Ok(out)
}

/// Axis-aligned Gaussian model of the high-mainlobe power gain,
/// `P = peak * exp(-da^2 / (2 sa^2) - ds^2 / (2 ss^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MainlobeFit<T> {
    pub center: (T, T),
    pub peak: T,
    pub sigma_angle: T,
    pub sigma_surrogate: T,
    /// Mean absolute deviation between the fitted and sampled power gains,
    /// both normalised to a unit peak. Zero for models built from widths.
    pub mean_abs_deviation: T,
}

impl<T: Real> MainlobeFit<T> {
    /// Builds the model from 3 dB (half-power) widths.
    pub fn from_widths(center: (T, T), peak: T, angle_width: T, surrogate_width: T) -> Self {
        let k = T::lit(2.0) * (T::lit(2.0) * T::lit(LN_2)).sqrt();
        MainlobeFit {
            center,
            peak,
            sigma_angle: angle_width / k,
            sigma_surrogate: surrogate_width / k,
            mean_abs_deviation: T::zero(),
        }
    }

    /// Model with the closed-form widths `2/N` and `7/N^2` and unit peak.
    pub fn predicted(cfg: &ArrayConfig<T>, center: (T, T)) -> Self {
        let w = predict_high_mainlobe_widths(cfg);
        Self::from_widths(center, T::one(), w.angle / cfg.angle_scale(), w.surrogate)
    }

    pub fn power_at(&self, angle: T, surrogate: T) -> T {
        let a = (angle - self.center.0) / self.sigma_angle;
        let s = (surrogate - self.center.1) / self.sigma_surrogate;
        self.peak * (-(a * a + s * s) / T::lit(2.0)).exp()
    }

    /// Beamforming amplitude gain implied by the model.
    pub fn gain_at(&self, angle: T, surrogate: T) -> T {
        self.power_at(angle, surrogate).sqrt()
    }

    pub fn angle_width_3db(&self) -> T {
        T::lit(2.0) * self.sigma_angle * (T::lit(2.0 * LN_2)).sqrt()
    }

    pub fn surrogate_width_3db(&self) -> T {
        T::lit(2.0) * self.sigma_surrogate * (T::lit(2.0 * LN_2)).sqrt()
    }
}

/// Least-squares fit of `ln P` to `ln g0 - da^2/(2 sa^2) - ds^2/(2 ss^2)`.
pub fn gaussian_fit<T: Real>(samples: &[MainlobeSample<T>], center: (T, T)) -> Result<MainlobeFit<T>> {
    if samples.len() < 9 {
        return Err(Error::Rank(format!("{} samples, need at least 9", samples.len())));
    }
    if samples.iter().any(|s| !(s.power > T::zero())) {
        return Err(Error::NumericDomain("power gains must be positive".into()));
    }
    let scale = samples.iter().fold(T::zero(), |m, s| m.max(s.power));
    let span_a = samples.iter().fold(T::zero(), |m, s| m.max((s.angle - center.0).abs()));
    let span_s = samples.iter().fold(T::zero(), |m, s| m.max((s.surrogate - center.1).abs()));
    if span_a == T::zero() || span_s == T::zero() {
        return Err(Error::Rank("samples do not span both axes".into()));
    }
    let rows: Vec<([T; 3], T)> = samples
        .iter()
        .map(|s| {
            let u = (s.angle - center.0) / span_a;
            let v = (s.surrogate - center.1) / span_s;
            ([T::one(), u * u, v * v], (s.power / scale).ln())
        })
        .collect();

    let mut ata = [[T::zero(); 3]; 3];
    let mut atb = [T::zero(); 3];
    for (x, y) in &rows {
        for i in 0..3 {
            atb[i] = atb[i] + x[i] * *y;
            for j in 0..3 {
                ata[i][j] = ata[i][j] + x[i] * x[j];
            }
        }
    }
    let coef = solve3(ata, atb).ok_or_else(|| Error::Rank("collinear sample region".into()))?;
    if !(coef[1] < T::zero() && coef[2] < T::zero()) {
        return Err(Error::Rank("samples do not describe a peak".into()));
    }
    let sigma_angle = span_a * (-T::one() / (T::lit(2.0) * coef[1])).sqrt();
    let sigma_surrogate = span_s * (-T::one() / (T::lit(2.0) * coef[2])).sqrt();
    let mut fit = MainlobeFit {
        center,
        peak: coef[0].exp() * scale,
        sigma_angle,
        sigma_surrogate,
        mean_abs_deviation: T::zero(),
    };
    let total = samples.iter().fold(T::zero(), |acc, s| {
        acc + (s.power - fit.power_at(s.angle, s.surrogate)).abs() / scale
    });
    fit.mean_abs_deviation = total / T::from_count(samples.len());
    Ok(fit)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve3<T: Real>(mut a: [[T; 3]; 3], mut b: [T; 3]) -> Option<[T; 3]> {
    let scale = a.iter().flatten().fold(T::zero(), |m, x| m.max(x.abs()));
    let tol = scale * T::lit(1e-12);
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= tol {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Level set of a [`MainlobeFit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse<T> {
    pub center: (T, T),
    pub semi_angle: T,
    pub semi_surrogate: T,
}

impl<T: Real> Ellipse<T> {
    /// Point at parameter `t` (radians) on the boundary.
    pub fn point(&self, t: T) -> (T, T) {
        (self.center.0 + self.semi_angle * t.cos(), self.center.1 + self.semi_surrogate * t.sin())
    }

    pub fn contains(&self, angle: T, surrogate: T) -> bool {
        let a = (angle - self.center.0) / self.semi_angle;
        let s = (surrogate - self.center.1) / self.semi_surrogate;
        a * a + s * s <= T::one()
    }
}

/// Contour of the fitted power gain at `level`.
pub fn contour_ellipse<T: Real>(fit: &MainlobeFit<T>, level: T) -> Result<Ellipse<T>> {
    if !(level > T::zero()) {
        return Err(Error::InvalidParameter(format!("contour level {level} must be positive")));
    }
    if level >= fit.peak {
        return Err(Error::EmptyContour { level: level.as_f64(), peak: fit.peak.as_f64() });
    }
    let k = (T::lit(2.0) * (fit.peak / level).ln()).sqrt();
    Ok(Ellipse { center: fit.center, semi_angle: fit.sigma_angle * k, semi_surrogate: fit.sigma_surrogate * k })
}

/// Stationary-phase description of the low mainlobe at surrogate mismatch `ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PspPrediction<T> {
    pub surrogate_offset: T,
    /// Angular width of the plateau, `2 N ds` (scaled by `lambda / 2d`).
    pub width: T,
    /// Mean amplitude gain over the plateau, `1 / (N sqrt(ds))`.
    pub average_gain: T,
}

pub fn psp_predict<T: Real>(cfg: &ArrayConfig<T>, surrogate_offset: T) -> Result<PspPrediction<T>> {
    let n = T::from_count(cfg.num_antennas());
    let floor = T::lit(PSP_VALIDITY_FLOOR) / (n * n);
    if !(surrogate_offset >= floor) {
        return Err(Error::Validity(format!(
            "surrogate offset {surrogate_offset} below the stationary-phase floor {floor}"
        )));
    }
    Ok(PspPrediction {
        surrogate_offset,
        width: T::lit(2.0) * n * surrogate_offset / cfg.angle_scale(),
        average_gain: T::one() / (n * surrogate_offset.sqrt()),
    })
}

/// Brute-force low-mainlobe width and mean gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowMainlobeMeasurement<T> {
    pub width: T,
    pub average_gain: T,
    /// Gain level bounding the plateau (half the plateau average).
    pub threshold: T,
}

/// Measures the angle profile at surrogate mismatch `ds` over one full angle
/// period. The plateau is the contiguous run around the focused angle where
/// the gain stays at or above half the run's own mean; the mean is iterated to
/// a fixed point and the edges are located by linear interpolation.
pub fn low_mainlobe_measure<T: Real>(
    cfg: &ArrayConfig<T>,
    surrogate_offset: T,
    resolution: T,
) -> Result<LowMainlobeMeasurement<T>> {
    let n = T::from_count(cfg.num_antennas());
    if !(resolution > T::zero() && resolution <= T::one() / (T::lit(4.0) * n)) {
        return Err(Error::InvalidParameter(format!("resolution {resolution} must be in (0, 1/(4N)]")));
    }
    let period = T::lit(2.0) / cfg.angle_scale();
    let half = (period / (T::lit(2.0) * resolution)).floor().to_i64().unwrap_or(0);
    let coords: Vec<T> = (-half..half).map(|i| T::lit(i as f64) * resolution).collect();
    let gains: Vec<T> = coords.iter().map(|&dt| focus_kernel(cfg, dt, surrogate_offset).norm()).collect();
    let centre = half as usize;

    let run = |thr: T| -> Option<(usize, usize)> {
        let mut lo = centre;
        while gains[lo] >= thr {
            if lo == 0 {
                return None;
            }
            lo -= 1;
        }
        let mut hi = centre;
        while gains[hi] >= thr {
            if hi + 1 == gains.len() {
                return None;
            }
            hi += 1;
        }
        Some((lo + 1, hi - 1))
    };
    let mean = |lo: usize, hi: usize| {
        gains[lo..=hi].iter().fold(T::zero(), |a, &g| a + g) / T::from_count(hi - lo + 1)
    };

    let full_period = || Error::Validity("plateau fills the whole angle period".into());
    let mut avg = gains[centre];
    let mut bounds = run(avg / T::lit(2.0)).ok_or_else(full_period)?;
    for _ in 0..200 {
        let next = mean(bounds.0, bounds.1);
        if (next - avg).abs() <= T::lit(1e-13) * avg {
            break;
        }
        avg = next;
        bounds = run(avg / T::lit(2.0)).ok_or_else(full_period)?;
    }
    let avg = mean(bounds.0, bounds.1);
    let thr = avg / T::lit(2.0);
    let (lo, hi) = bounds;
    let left = coords[lo - 1] + (thr - gains[lo - 1]) / (gains[lo] - gains[lo - 1]) * resolution;
    let right = coords[hi] + (gains[hi] - thr) / (gains[hi] - gains[hi + 1]) * resolution;
    let width = right - left;
    if width < T::lit(8.0) / (n * cfg.angle_scale()) {
        return Err(Error::Validity(format!(
            "no plateau at surrogate offset {surrogate_offset}: run width {width} is mainlobe-sized"
        )));
    }
    Ok(LowMainlobeMeasurement { width, average_gain: avg, threshold: thr })
}

/// Energy of one beamspace row split by gain level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobeEnergy<T> {
    pub high: T,
    pub low: T,
    pub side: T,
}

impl<T: Real> LobeEnergy<T> {
    pub fn total(&self) -> T {
        self.high + self.low + self.side
    }
}

/// High mainlobe: gain >= 1/sqrt(2). Low mainlobe: `low_threshold <= gain <
/// 1/sqrt(2)`. Sidelobe: everything else.
pub fn energy_split<T: Real>(gains: &[T], low_threshold: T) -> LobeEnergy<T> {
    let high_thr = T::FRAC_1_SQRT_2();
    let mut e = LobeEnergy { high: T::zero(), low: T::zero(), side: T::zero() };
    for &g in gains {
        let p = g * g;
        if g >= high_thr {
            e.high = e.high + p;
        } else if g >= low_threshold {
            e.low = e.low + p;
        } else {
            e.side = e.side + p;
        }
    }
    e
}

/// Row of the width-study CSV, `n,axis,predicted,measured,rel_dev`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthRecord {
    pub n: usize,
    pub axis: Axis,
    pub predicted: f64,
    pub measured: f64,
}

impl WidthRecord {
    pub fn rel_dev(&self) -> f64 {
        (self.measured - self.predicted) / self.predicted
    }
}

impl CsvRecord for WidthRecord {
    fn header() -> &'static [&'static str] {
        &["n", "axis", "predicted", "measured", "rel_dev"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.axis.name().to_string(),
            fmt_sig(self.predicted),
            fmt_sig(self.measured),
            fmt_sig(self.rel_dev()),
        ]
    }
}

/// Row of the low-mainlobe CSV, `n,ds,w_pred,w_meas,g_pred,g_meas`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PspRecord {
    pub n: usize,
    pub ds: f64,
    pub w_pred: f64,
    pub w_meas: f64,
    pub g_pred: f64,
    pub g_meas: f64,
}

impl CsvRecord for PspRecord {
    fn header() -> &'static [&'static str] {
        &["n", "ds", "w_pred", "w_meas", "g_pred", "g_meas"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_sig(self.ds),
            fmt_sig(self.w_pred),
            fmt_sig(self.w_meas),
            fmt_sig(self.g_pred),
            fmt_sig(self.g_meas),
        ]
    }
}
