//! Codebooks and the beam-management procedures: exhaustive and hierarchical
//! training, closed-form stencil refinement and mainlobe-driven tracking.
//!
//! Every pilot goes through a [`MeasurementModel`], which owns the seeded
//! noise stream and counts draws. A procedure's pilot count can therefore be
//! checked against the number of observations it actually consumed.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::array::{inner, norm, ArrayConfig, SourceLocation, SteeringVector};
use crate::beamspace::{beamspace_direct, beamspace_fast, BeamspaceGrid};
use crate::error::{Error, Result};
use crate::mainlobe::{contour_ellipse, MainlobeFit};
use crate::output::{fmt_sig, CsvRecord};
use crate::scalar::Real;

pub const DEFAULT_CODEBOOK_ANGLES: usize = 512;
pub const DEFAULT_CODEBOOK_SURROGATES: usize = 11;
pub const DEFAULT_COARSE_BEAMS: usize = 8;
pub const DEFAULT_FINE_BEAMS: usize = 7;
/// Hill-climbing rounds allowed before the stencil is interpolated.
pub const DEFAULT_REFINE_ROUNDS: usize = 4;

/// Noisy single-antenna pilot observations `y = <w, h> + n`.
///
/// The noise is per-antenna: a pilot against a channel `h` carries
/// `CN(0, |h|^2 / (N snr))`. Observations are a pure function of the seed and
/// the position in the draw sequence.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    snr_db: Option<f64>,
    seed: u64,
    rng: ChaCha8Rng,
    draws: usize,
}

impl MeasurementModel {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        MeasurementModel { snr_db: Some(snr_db), seed, rng: noise_rng(seed), draws: 0 }
    }

    /// Infinite SNR. Draws are still counted.
    pub fn noiseless(seed: u64) -> Self {
        MeasurementModel { snr_db: None, seed, rng: noise_rng(seed), draws: 0 }
    }

    pub fn snr_db(&self) -> Option<f64> {
        self.snr_db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of observations produced so far.
    pub fn draws(&self) -> usize {
        self.draws
    }

    fn noise_std(&self, energy: f64, n: usize) -> Option<f64> {
        self.snr_db.map(|db| (energy / (n as f64 * 10f64.powf(db / 10.0))).sqrt())
    }

    fn complex_noise<T: Real>(&mut self, std: f64) -> Complex<T> {
        let s = std / std::f64::consts::SQRT_2;
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        Complex::new(T::lit(re * s), T::lit(im * s))
    }

    /// One pilot observation with combiner `w`.
    pub fn measure<T: Real>(&mut self, w: &[Complex<T>], h: &[Complex<T>]) -> Complex<T> {
        self.draws += 1;
        let y = inner(w, h);
        let energy = norm(h).as_f64().powi(2);
        match self.noise_std(energy, h.len()) {
            Some(std) => y + self.complex_noise(std),
            None => y,
        }
    }

    /// One full-dimension noisy look at the channel, `h + n`.
    pub fn observe<T: Real>(&mut self, h: &[Complex<T>]) -> Vec<Complex<T>> {
        self.draws += 1;
        let energy = norm(h).as_f64().powi(2);
        match self.noise_std(energy, h.len()) {
            Some(std) => h.iter().map(|x| *x + self.complex_noise(std)).collect(),
            None => h.to_vec(),
        }
    }
}

/// Generator for scenario randomness (user positions, path gains) of a
/// trial. Measurement noise for the same seed comes from a separate stream.
pub fn scenario_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Exhaustive,
    Coarse,
    Fine,
    Refine,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Exhaustive => "exhaustive",
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
            Stage::Refine => "refine",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Codeword<T> {
    pub weights: SteeringVector<T>,
    pub angle: T,
    pub surrogate: T,
    pub stage: Stage,
}

impl<T: Real> Codeword<T> {
    fn new(cfg: &ArrayConfig<T>, angle: T, surrogate: T, stage: Stage) -> Self {
        Codeword { weights: cfg.chirp_vector(angle, surrogate), angle, surrogate, stage }
    }
}

#[derive(Debug, Clone)]
pub struct Codebook<T> {
    codewords: Vec<Codeword<T>>,
}

impl<T: Real> Codebook<T> {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn get(&self, i: usize) -> &Codeword<T> {
        &self.codewords[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Codeword<T>> {
        self.codewords.iter()
    }

    pub fn codewords(&self) -> &[Codeword<T>] {
        &self.codewords
    }
}

/// Surrogate distance of the Fresnel distance at broadside: the largest
/// surrogate reached inside the radiating near field.
pub fn fresnel_surrogate<T: Real>(cfg: &ArrayConfig<T>) -> Result<T> {
    let b = cfg.field_boundaries()?;
    Ok(cfg.surrogate_of(&SourceLocation::new(b.fresnel, T::zero())?))
}

/// Angle/surrogate lattice of the training codebook. Angles are cell centres
/// `-1 + (2k + 1)/A`; rows are uniform over `[0, s_fresnel]`, ends included.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarLattice<T> {
    num_angles: usize,
    surrogates: Vec<T>,
}

impl<T: Real> PolarLattice<T> {
    pub fn new(cfg: &ArrayConfig<T>, num_angles: usize, num_surrogates: usize) -> Result<Self> {
        if num_angles == 0 || num_surrogates == 0 {
            return Err(Error::InvalidParameter(format!(
                "codebook needs A, S >= 1 (got A = {num_angles}, S = {num_surrogates})"
            )));
        }
        let top = fresnel_surrogate(cfg)?;
        let grid = BeamspaceGrid::uniform(num_angles, num_surrogates, top)?;
        Ok(PolarLattice { num_angles, surrogates: grid.surrogates().to_vec() })
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn surrogates(&self) -> &[T] {
        &self.surrogates
    }

    pub fn angle(&self, k: usize) -> T {
        -T::one() + T::from_count(2 * k + 1) / T::from_count(self.num_angles)
    }

    pub fn len(&self) -> usize {
        self.num_angles * self.surrogates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest noiseless matched-filter gain `max |<w, h>|` over the lattice.
    /// The half-cell angle shift is folded into the input so the fast
    /// transform evaluates all rows at once.
    pub fn best_gain(&self, cfg: &ArrayConfig<T>, h: &[Complex<T>]) -> Result<T> {
        let shift = -T::PI() * cfg.angle_scale() / T::from_count(self.num_angles);
        let x: Vec<Complex<T>> = cfg
            .offsets()
            .zip(h)
            .map(|(delta, v)| *v * Complex::from_polar(T::one(), shift * delta))
            .collect();
        let grid = BeamspaceGrid::with_surrogates(self.num_angles, self.surrogates.clone())?;
        let map = match beamspace_fast(&x, &grid, cfg) {
            Err(Error::Resolution { .. }) => beamspace_direct(&x, &grid, cfg)?,
            other => other?,
        };
        Ok(map.coefficients().iter().map(|c| c.norm()).fold(T::zero(), T::max))
    }
}

/// One focused codeword per lattice point, ordered row by row in surrogate.
pub fn polar_codebook<T: Real>(cfg: &ArrayConfig<T>, num_angles: usize, num_surrogates: usize) -> Result<Codebook<T>> {
    let lattice = PolarLattice::new(cfg, num_angles, num_surrogates)?;
    Ok(lattice_codebook(cfg, &lattice))
}

fn lattice_codebook<T: Real>(cfg: &ArrayConfig<T>, lattice: &PolarLattice<T>) -> Codebook<T> {
    let mut codewords = Vec::with_capacity(lattice.len());
    for &s in lattice.surrogates() {
        for k in 0..lattice.num_angles() {
            codewords.push(Codeword::new(cfg, lattice.angle(k), s, Stage::Exhaustive));
        }
    }
    Codebook { codewords }
}

/// Surrogate row probed by the coarse stage: the middle of the radiating
/// near field in surrogate distance.
pub fn default_probe<T: Real>(cfg: &ArrayConfig<T>) -> Result<T> {
    Ok(fresnel_surrogate(cfg)? / T::lit(2.0))
}

/// `K1` wide-beam codewords tiling `theta in [-1, 1)`. Each is a basis vector
/// mismatched from the probe row by `1/(K1 N)` (in angle-scale units), so its
/// low mainlobe is `2/K1` wide.
pub fn chirp_codebook<T: Real>(cfg: &ArrayConfig<T>, coarse: usize) -> Result<Codebook<T>> {
    chirp_codebook_at(cfg, coarse, default_probe(cfg)?)
}

pub fn chirp_codebook_at<T: Real>(cfg: &ArrayConfig<T>, coarse: usize, probe: T) -> Result<Codebook<T>> {
    let n = cfg.num_antennas();
    if coarse > n {
        return Err(Error::OverResolved { coarse, antennas: n });
    }
    if coarse < 2 {
        return Err(Error::InvalidParameter(format!("K1 = {coarse}, need at least 2 coarse beams")));
    }
    let k1 = T::from_count(coarse);
    let s = probe + cfg.angle_scale() / (k1 * T::from_count(n));
    let codewords = (0..coarse)
        .map(|k| Codeword::new(cfg, sector_center(k, coarse), s, Stage::Coarse))
        .collect();
    Ok(Codebook { codewords })
}

fn sector_center<T: Real>(k: usize, coarse: usize) -> T {
    -T::one() + T::from_count(2 * k + 1) / T::from_count(coarse)
}

/// One pilot observation and the codeword label it was taken with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PilotRecord<T> {
    pub stage: Stage,
    pub angle: T,
    pub surrogate: T,
    pub observation: Complex<T>,
}

#[derive(Debug, Clone)]
pub struct TrainingResult<T> {
    /// Selected beamspace coordinate `(theta, s)`.
    pub selected: (T, T),
    pub pilots: usize,
    /// Noiseless gain of the selected beam over the best exhaustive codeword.
    pub rho: T,
    pub log: Vec<PilotRecord<T>>,
}

impl<T: Real> TrainingResult<T> {
    pub fn pilots_in(&self, stage: Stage) -> usize {
        self.log.iter().filter(|p| p.stage == stage).count()
    }
}

/// Measures every codeword once and keeps the strongest observation. Ties go
/// to the lowest index.
pub fn train_exhaustive<T: Real>(
    h: &[Complex<T>],
    cfg: &ArrayConfig<T>,
    book: &Codebook<T>,
    mm: &mut MeasurementModel,
) -> Result<TrainingResult<T>> {
    if book.is_empty() {
        return Err(Error::InvalidParameter("codebook is empty".into()));
    }
    check_channel(cfg, h)?;
    let mut log = Vec::with_capacity(book.len());
    let mut best = 0;
    let mut best_obs = T::neg_infinity();
    let mut reference = T::zero();
    for (i, cw) in book.iter().enumerate() {
        let y = mm.measure(&cw.weights, h);
        if y.norm() > best_obs {
            best_obs = y.norm();
            best = i;
        }
        reference = reference.max(cw.weights.inner(h).norm());
        log.push(PilotRecord { stage: cw.stage, angle: cw.angle, surrogate: cw.surrogate, observation: y });
    }
    let chosen = book.get(best);
    Ok(TrainingResult {
        selected: (chosen.angle, chosen.surrogate),
        pilots: log.len(),
        rho: ratio(chosen.weights.inner(h).norm(), reference),
        log,
    })
}

fn ratio<T: Real>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

fn check_channel<T: Real>(cfg: &ArrayConfig<T>, h: &[Complex<T>]) -> Result<()> {
    if h.len() != cfg.num_antennas() {
        return Err(Error::Shape { expected: cfg.num_antennas(), got: h.len() });
    }
    Ok(())
}

/// Sector-local hypothesis maps: for every stage codeword `w_j`, the
/// coefficients `<b(theta, s), w_j>` over a window of angles around the sector.
#[derive(Debug, Clone)]
struct SectorMaps<T> {
    fine: Vec<Codeword<T>>,
    angles: Vec<T>,
    surrogates: Vec<T>,
    /// `maps[j][row * angles.len() + col]`, j = 0 is the coarse codeword.
    maps: Vec<Vec<Complex<T>>>,
}

/// Precomputed two-stage training design for one array.
///
/// Stage 1 measures `K1` chirp codewords and keeps the strongest sector.
/// Stage 2 measures `S` low-mainlobe codewords inside that sector whose
/// angle and surrogate offsets are staggered, so their plateau phases
/// differ across the sector. The estimate maximises the normalised
/// correlation between the `1 + S` sector observations and each
/// hypothesis' predicted responses.
#[derive(Debug, Clone)]
pub struct HierarchicalPlan<T> {
    cfg: ArrayConfig<T>,
    coarse: Codebook<T>,
    sectors: Vec<SectorMaps<T>>,
    reference: PolarLattice<T>,
}

// Angle offsets of the fine codewords as fractions of the sector half-width.
const FINE_ANGLE_PATTERN: [f64; 6] = [-0.72, 0.48, -0.24, 0.72, -0.48, 0.24];

impl<T: Real> HierarchicalPlan<T> {
    pub fn new(cfg: &ArrayConfig<T>, coarse: usize, fine: usize) -> Result<Self> {
        if fine == 0 {
            return Err(Error::InvalidParameter("S = 0, need at least one fine codeword".into()));
        }
        let probe = default_probe(cfg)?;
        let coarse_book = chirp_codebook_at(cfg, coarse, probe)?;
        let n = cfg.num_antennas();
        let nf = T::from_count(n);
        let k1 = T::from_count(coarse);
        let half = T::one() / k1;
        let top = fresnel_surrogate(cfg)?;

        // hypothesis lattice: half-beamwidth angle steps, 1/N^2 surrogate rows
        let rows = (top * nf * nf).floor().to_usize().unwrap_or(0) + 1;
        let surrogates: Vec<T> = (0..rows).map(|l| T::from_count(l) / (nf * nf)).collect();
        let grid = BeamspaceGrid::with_surrogates(4 * n, surrogates.clone())?;
        let margin = T::lit(4.0) / nf;

        let sectors = (0..coarse)
            .into_par_iter()
            .map(|k| {
                let centre: T = sector_center(k, coarse);
                let fine_words: Vec<Codeword<T>> = (0..fine)
                    .map(|j| {
                        let frac = if j + 1 == fine { 0.0 } else { FINE_ANGLE_PATTERN[j % 6] };
                        let steps = if j + 1 == fine { fine + 2 } else { j + 2 };
                        let ds = cfg.angle_scale() * T::from_count(steps) / (T::lit(8.0) * k1 * nf);
                        Codeword::new(cfg, centre + T::lit(frac) * half, probe + ds, Stage::Fine)
                    })
                    .collect();
                let cols: Vec<usize> = (0..grid.num_angles())
                    .filter(|&c| (grid.angle(c) - centre).abs() <= half + margin)
                    .collect();
                let words = std::iter::once(&coarse_book.codewords[k]).chain(fine_words.iter());
                let maps = words
                    .map(|cw| {
                        let full = beamspace_fast(&cw.weights, &grid, cfg)?;
                        let mut out = Vec::with_capacity(rows * cols.len());
                        for row in 0..rows {
                            out.extend(cols.iter().map(|&c| full.coefficient(row, c)));
                        }
                        Ok(out)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SectorMaps {
                    fine: fine_words,
                    angles: cols.iter().map(|&c| grid.angle(c)).collect(),
                    surrogates: surrogates.clone(),
                    maps,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(HierarchicalPlan {
            cfg: cfg.clone(),
            coarse: coarse_book,
            sectors,
            reference: PolarLattice::new(cfg, DEFAULT_CODEBOOK_ANGLES, DEFAULT_CODEBOOK_SURROGATES)?,
        })
    }

    /// Plan with `K1 = 8`, `S = 7`.
    pub fn default_for(cfg: &ArrayConfig<T>) -> Result<Self> {
        Self::new(cfg, DEFAULT_COARSE_BEAMS, DEFAULT_FINE_BEAMS)
    }

    pub fn with_reference(mut self, reference: PolarLattice<T>) -> Self {
        self.reference = reference;
        self
    }

    pub fn config(&self) -> &ArrayConfig<T> {
        &self.cfg
    }

    pub fn coarse_codebook(&self) -> &Codebook<T> {
        &self.coarse
    }

    pub fn fine_codewords(&self, sector: usize) -> &[Codeword<T>] {
        &self.sectors[sector].fine
    }

    /// Lattice against which `rho` is computed.
    pub fn reference(&self) -> &PolarLattice<T> {
        &self.reference
    }

    pub fn pilots(&self) -> usize {
        self.coarse.len() + self.sectors[0].fine.len()
    }
}

/// Two-stage training with `K1 + S` pilots. `rho` is measured against the
/// plan's exhaustive lattice.
pub fn train_hierarchical<T: Real>(
    h: &[Complex<T>],
    plan: &HierarchicalPlan<T>,
    mm: &mut MeasurementModel,
) -> Result<TrainingResult<T>> {
    let cfg = &plan.cfg;
    check_channel(cfg, h)?;
    let mut log = Vec::with_capacity(plan.pilots());
    let mut sector = 0;
    let mut strongest = T::neg_infinity();
    let mut coarse_obs = Vec::with_capacity(plan.coarse.len());
    for (k, cw) in plan.coarse.iter().enumerate() {
        let y = mm.measure(&cw.weights, h);
        if y.norm() > strongest {
            strongest = y.norm();
            sector = k;
        }
        coarse_obs.push(y);
        log.push(PilotRecord { stage: Stage::Coarse, angle: cw.angle, surrogate: cw.surrogate, observation: y });
    }

    let maps = &plan.sectors[sector];
    let mut obs = vec![coarse_obs[sector]];
    for cw in &maps.fine {
        let y = mm.measure(&cw.weights, h);
        obs.push(y);
        log.push(PilotRecord { stage: Stage::Fine, angle: cw.angle, surrogate: cw.surrogate, observation: y });
    }

    let cells = maps.angles.len() * maps.surrogates.len();
    let mut best = (0, T::neg_infinity());
    for cell in 0..cells {
        let mut num = Complex::new(T::zero(), T::zero());
        let mut den = T::zero();
        for (m, y) in maps.maps.iter().zip(&obs) {
            num = num + m[cell] * y;
            den = den + m[cell].norm_sqr();
        }
        if den > T::zero() {
            let score = num.norm_sqr() / den;
            if score > best.1 {
                best = (cell, score);
            }
        }
    }
    let (row, col) = (best.0 / maps.angles.len(), best.0 % maps.angles.len());
    let selected = (clamp_angle(maps.angles[col]), maps.surrogates[row]);
    let rho = coordinate_rho(cfg, &plan.reference, selected, h)?;
    Ok(TrainingResult { selected, pilots: log.len(), rho, log })
}

fn coordinate_rho<T: Real>(
    cfg: &ArrayConfig<T>,
    reference: &PolarLattice<T>,
    at: (T, T),
    h: &[Complex<T>],
) -> Result<T> {
    let gain = cfg.chirp_vector(at.0, at.1).inner(h).norm();
    Ok(ratio(gain, reference.best_gain(cfg, h)?))
}

fn clamp_angle<T: Real>(angle: T) -> T {
    let lim = T::one() - T::lit(1e-6);
    angle.max(-lim).min(lim)
}

/// 3x3 amplitude-gain stencil. `gains[i][j]` is taken at surrogate
/// `centre.1 + (i - 1) * step.1` and angle `centre.0 + (j - 1) * step.0`.
/// Rows may sit at negative surrogate distance (a chirp of opposite
/// curvature), which keeps the stencil symmetric next to the far field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stencil<T> {
    pub centre: (T, T),
    pub step: (T, T),
    pub gains: [[T; 3]; 3],
}

impl<T: Real> Stencil<T> {
    pub fn point(&self, i: usize, j: usize) -> (T, T) {
        let a = self.centre.0 + (T::from_count(j) - T::one()) * self.step.0;
        let s = self.centre.1 + (T::from_count(i) - T::one()) * self.step.1;
        (clamp_angle(a), s)
    }

    /// Index `(i, j)` of the largest gain, first one in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (1, 1);
        for i in 0..3 {
            for j in 0..3 {
                if self.gains[i][j] > self.gains[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn centre_is_max(&self) -> bool {
        let g0 = self.gains[1][1];
        self.gains.iter().flatten().all(|g| *g <= g0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Refined<T> {
    pub angle: T,
    pub surrogate: T,
    pub range: T,
}

/// Closed-form log-Gaussian peak interpolation, one axis at a time.
pub fn refine_gaussian<T: Real>(cfg: &ArrayConfig<T>, stencil: &Stencil<T>) -> Result<Refined<T>> {
    if stencil.gains.iter().flatten().any(|g| !(*g > T::zero())) {
        return Err(Error::NumericDomain("stencil gains must be positive".into()));
    }
    if !stencil.centre_is_max() {
        return Err(Error::Stencil);
    }
    let g = &stencil.gains;
    let angle = stencil.centre.0 + peak_offset(g[1][0], g[1][1], g[1][2], stencil.step.0);
    let surrogate = (stencil.centre.1 + peak_offset(g[0][1], g[1][1], g[2][1], stencil.step.1)).max(T::zero());
    let range = cfg.range_of(angle, surrogate)?;
    Ok(Refined { angle, surrogate, range })
}

fn peak_offset<T: Real>(minus: T, centre: T, plus: T, h: T) -> T {
    let (lm, l0, lp) = (minus.ln(), centre.ln(), plus.ln());
    let curvature = T::lit(2.0) * l0 - lp - lm;
    if !(curvature > T::zero()) {
        return T::zero();
    }
    let off = h / T::lit(2.0) * (lp - lm) / curvature;
    off.max(-h).min(h)
}

/// Measures a stencil of focused beams around `centre`.
pub fn measure_stencil<T: Real>(
    h: &[Complex<T>],
    cfg: &ArrayConfig<T>,
    centre: (T, T),
    step: (T, T),
    mm: &mut MeasurementModel,
    log: &mut Vec<PilotRecord<T>>,
) -> Stencil<T> {
    let mut st = Stencil { centre: (clamp_angle(centre.0), centre.1), step, gains: [[T::zero(); 3]; 3] };
    for i in 0..3 {
        for j in 0..3 {
            let (a, s) = st.point(i, j);
            let y = mm.measure(&cfg.chirp_vector(a, s), h);
            st.gains[i][j] = y.norm();
            log.push(PilotRecord { stage: Stage::Refine, angle: a, surrogate: s, observation: y });
        }
    }
    st
}

/// Outcome of [`refine_search`].
#[derive(Debug, Clone)]
pub struct RefineOutcome<T> {
    pub estimate: (T, T),
    /// Whether the last stencil had its maximum at the centre.
    pub converged: bool,
    pub stencil: Stencil<T>,
    pub log: Vec<PilotRecord<T>>,
}

/// Stencil hill-climb: re-centres on the strongest stencil point until the
/// centre is the maximum (at most `rounds` stencils), then interpolates.
pub fn refine_search<T: Real>(
    h: &[Complex<T>],
    cfg: &ArrayConfig<T>,
    start: (T, T),
    step: (T, T),
    rounds: usize,
    mm: &mut MeasurementModel,
) -> Result<RefineOutcome<T>> {
    check_channel(cfg, h)?;
    if rounds == 0 {
        return Err(Error::InvalidParameter("refinement needs at least one round".into()));
    }
    let mut log = Vec::with_capacity(9 * rounds);
    let mut centre = start;
    let mut stencil = measure_stencil(h, cfg, centre, step, mm, &mut log);
    for _ in 1..rounds {
        if stencil.centre_is_max() {
            break;
        }
        let (i, j) = stencil.argmax();
        centre = stencil.point(i, j);
        stencil = measure_stencil(h, cfg, centre, step, mm, &mut log);
    }
    let converged = stencil.centre_is_max();
    let estimate = if converged {
        match refine_gaussian(cfg, &stencil) {
            Ok(r) => (r.angle, r.surrogate),
            Err(Error::NumericDomain(_)) | Err(Error::InvalidCoordinate(_)) => {
                (stencil.centre.0, stencil.centre.1.max(T::zero()))
            }
            Err(e) => return Err(e),
        }
    } else {
        let (i, j) = stencil.argmax();
        let (a, s) = stencil.point(i, j);
        (a, s.max(T::zero()))
    };
    Ok(RefineOutcome { estimate, converged, stencil, log })
}

/// Default stencil spacing `(1/N, 3/N^2)`, scaled to the angle axis.
pub fn default_stencil_step<T: Real>(cfg: &ArrayConfig<T>) -> (T, T) {
    let n = T::from_count(cfg.num_antennas());
    (T::one() / (n * cfg.angle_scale()), T::lit(3.0) / (n * n))
}

/// Hierarchical training followed by the stencil refinement. Refinement
/// pilots are logged with [`Stage::Refine`] and included in `pilots`.
pub fn train_and_refine<T: Real>(
    h: &[Complex<T>],
    plan: &HierarchicalPlan<T>,
    mm: &mut MeasurementModel,
) -> Result<TrainingResult<T>> {
    let mut result = train_hierarchical(h, plan, mm)?;
    let cfg = &plan.cfg;
    let outcome = refine_search(h, cfg, result.selected, default_stencil_step(cfg), DEFAULT_REFINE_ROUNDS, mm)?;
    result.selected = outcome.estimate;
    result.log.extend(outcome.log);
    result.pilots = result.log.len();
    result.rho = coordinate_rho(cfg, &plan.reference, result.selected, h)?;
    Ok(result)
}

/// Random user in the radiating near field: `theta ~ U(-0.9, 0.9)`, range
/// log-uniform between the Fresnel and Rayleigh distances.
pub fn random_user<T: Real, R: Rng + ?Sized>(cfg: &ArrayConfig<T>, rng: &mut R) -> Result<SourceLocation<T>> {
    let b = cfg.field_boundaries()?;
    let theta: f64 = rng.random_range(-0.9..0.9);
    let (lo, hi) = (b.fresnel.as_f64().ln(), b.rayleigh.as_f64().ln());
    let r = rng.random_range(lo..hi).exp();
    SourceLocation::new(T::lit(r), T::lit(theta))
}

/// Beam-tracking policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingPolicy<T> {
    /// Retrain when the predicted amplitude gain falls below this.
    pub gamma: T,
    pub step: (T, T),
    pub rounds: usize,
    /// A refinement whose best stencil gain is below this counts as failed.
    pub floor: T,
}

impl<T: Real> TrackingPolicy<T> {
    pub fn new(cfg: &ArrayConfig<T>, gamma: T) -> Result<Self> {
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(Error::InvalidParameter(format!("gamma {gamma} outside [0, 1)")));
        }
        Ok(TrackingPolicy {
            gamma,
            step: default_stencil_step(cfg),
            rounds: DEFAULT_REFINE_ROUNDS,
            floor: T::lit(0.5),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub rho: f64,
    pub retrained: bool,
}

impl CsvRecord for SlotRecord {
    fn header() -> &'static [&'static str] {
        &["slot", "rho", "retrained"]
    }

    fn fields(&self) -> Vec<String> {
        vec![self.slot.to_string(), fmt_sig(self.rho), u8::from(self.retrained).to_string()]
    }
}

#[derive(Debug, Clone)]
pub struct TrackingReport {
    pub slots: Vec<SlotRecord>,
    pub alignment_pilots: usize,
    pub retrain_pilots: usize,
}

impl TrackingReport {
    pub fn retrainings(&self) -> usize {
        self.slots.iter().filter(|s| s.retrained).count()
    }

    pub fn mean_rho(&self) -> f64 {
        self.slots.iter().map(|s| s.rho).sum::<f64>() / self.slots.len().max(1) as f64
    }
}

/// Tracks a moving user with a single focused beam.
///
/// Slot 0 aligns by refining from the nearest default training-lattice point
/// and slot 1 refines once more to seed the constant-velocity motion model;
/// both count as alignment pilots. Afterwards the beam is held while the
/// Gaussian mainlobe model, centred on the beam, predicts a gain of at least
/// `gamma` at the dead-reckoned user coordinate. Otherwise a stencil
/// refinement runs from the prediction and the beam is pointed ahead along
/// the estimated velocity by the time the user needs to reach the `gamma`
/// contour from the centre, but never further than the time baseline the
/// velocity was estimated over.
pub fn track<T: Real>(
    trajectory: &[SourceLocation<T>],
    cfg: &ArrayConfig<T>,
    mm: &mut MeasurementModel,
    policy: &TrackingPolicy<T>,
) -> Result<TrackingReport> {
    if trajectory.is_empty() {
        return Err(Error::InvalidParameter("trajectory is empty".into()));
    }
    let lattice = PolarLattice::new(cfg, DEFAULT_CODEBOOK_ANGLES, DEFAULT_CODEBOOK_SURROGATES)?;
    let start = nearest_lattice_point(&lattice, cfg.surrogate_coords(&trajectory[0]));

    let mut history: Vec<(usize, (T, T))> = Vec::new();
    let mut beam = start;
    let mut slots = Vec::with_capacity(trajectory.len());
    let mut alignment_pilots = 0;
    let mut retrain_pilots = 0;
    let mut failures = 0;

    for (t, loc) in trajectory.iter().enumerate() {
        let h = cfg.steering_exact(loc);
        let aligning = t < 2;
        let due = aligning || {
            let predicted = dead_reckon(&history, t);
            MainlobeFit::predicted(cfg, beam).gain_at(predicted.0, predicted.1) < policy.gamma
        };
        if due {
            let from = if history.is_empty() { start } else { dead_reckon(&history, t) };
            let outcome = refine_search(&h, cfg, from, policy.step, policy.rounds, mm)?;
            if aligning {
                alignment_pilots += outcome.log.len();
            } else {
                retrain_pilots += outcome.log.len();
            }
            let best = outcome.stencil.gains.iter().flatten().fold(T::zero(), |a, g| a.max(*g));
            if outcome.converged && best >= policy.floor {
                failures = 0;
                history.push((t, outcome.estimate));
                beam = point_ahead(cfg, &history, policy);
            } else {
                failures += 1;
                if failures >= 2 {
                    return Err(Error::TrackingLost { slot: t });
                }
            }
        }
        let (ta, ts) = cfg.surrogate_coords(loc);
        let reference = cfg.chirp_vector(ta, ts).inner(&h).norm();
        let rho = ratio(cfg.chirp_vector(beam.0, beam.1.max(T::zero())).inner(&h).norm(), reference);
        slots.push(SlotRecord { slot: t, rho: rho.as_f64(), retrained: due && !aligning });
    }
    Ok(TrackingReport { slots, alignment_pilots, retrain_pilots })
}

fn nearest_lattice_point<T: Real>(lattice: &PolarLattice<T>, at: (T, T)) -> (T, T) {
    let a = T::from_count(lattice.num_angles());
    let k = ((at.0 + T::one()) * a / T::lit(2.0) - T::lit(0.5)).round();
    let k = k.max(T::zero()).min(a - T::one()).to_usize().unwrap_or(0);
    let s = lattice
        .surrogates()
        .iter()
        .copied()
        .fold(lattice.surrogates()[0], |best, s| if (s - at.1).abs() < (best - at.1).abs() { s } else { best });
    (lattice.angle(k), s)
}

fn velocity<T: Real>(history: &[(usize, (T, T))]) -> (T, T) {
    match history {
        [.., (t0, a), (t1, b)] if t1 > t0 => {
            let dt = T::from_count(t1 - t0);
            ((b.0 - a.0) / dt, (b.1 - a.1) / dt)
        }
        _ => (T::zero(), T::zero()),
    }
}

fn dead_reckon<T: Real>(history: &[(usize, (T, T))], t: usize) -> (T, T) {
    let (t_last, last) = history[history.len() - 1];
    let v = velocity(history);
    let dt = T::from_count(t - t_last);
    (last.0 + v.0 * dt, last.1 + v.1 * dt)
}

fn point_ahead<T: Real>(cfg: &ArrayConfig<T>, history: &[(usize, (T, T))], policy: &TrackingPolicy<T>) -> (T, T) {
    let (_, last) = history[history.len() - 1];
    let v = velocity(history);
    let fit = MainlobeFit::predicted(cfg, last);
    let Ok(ellipse) = contour_ellipse(&fit, policy.gamma * policy.gamma) else {
        return last;
    };
    let rate = ((v.0 / ellipse.semi_angle).powi(2) + (v.1 / ellipse.semi_surrogate).powi(2)).sqrt();
    if !(rate > T::zero()) {
        return last;
    }
    let baseline = match history {
        [.., (t0, _), (t1, _)] => T::from_count(t1 - t0),
        _ => T::zero(),
    };
    let lead = (T::one() / rate).min(baseline);
    (clamp_angle(last.0 + v.0 * lead), (last.1 + v.1 * lead).max(T::zero()))
}

/// Row of the training CSV, `seed,user_theta,user_r,method,pilots,rho`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingRecord {
    pub seed: u64,
    pub user_theta: f64,
    pub user_r: f64,
    pub method: String,
    pub pilots: usize,
    pub rho: f64,
}

impl CsvRecord for TrainingRecord {
    fn header() -> &'static [&'static str] {
        &["seed", "user_theta", "user_r", "method", "pilots", "rho"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            fmt_sig(self.user_theta),
            fmt_sig(self.user_r),
            self.method.clone(),
            self.pilots.to_string(),
            fmt_sig(self.rho),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> ArrayConfig<f64> {
        ArrayConfig::half_wavelength(n, 0.01).unwrap()
    }

    #[test]
    fn codebook_sizes() {
        let c = cfg(512);
        assert_eq!(polar_codebook(&c, 512, 11).unwrap().len(), 5632);
        let one = polar_codebook(&c, 1, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.get(0).angle, 0.0);
        assert_eq!(one.get(0).surrogate, 0.0);
        assert!(matches!(chirp_codebook(&cfg(4), 8), Err(Error::OverResolved { .. })));
        assert!(chirp_codebook(&c, 1).is_err());
        let two = chirp_codebook(&c, 2).unwrap();
        assert_eq!(two.get(0).angle, -0.5);
        assert_eq!(two.get(1).angle, 0.5);
    }

    #[test]
    fn noise_is_reproducible() {
        let c = cfg(32);
        let h = c.steering_fresnel(&SourceLocation::new(3.0, 0.2).unwrap());
        let w = c.chirp_vector(0.1, 0.0);
        let mut a = MeasurementModel::new(0.0, 9);
        let mut b = MeasurementModel::new(0.0, 9);
        for _ in 0..5 {
            assert_eq!(a.measure(&w, &h), b.measure(&w, &h));
        }
        assert_eq!(a.draws(), 5);
        let mut q = MeasurementModel::noiseless(1);
        assert_eq!(q.measure(&w, &h), inner(&w, &h));
    }

    #[test]
    fn exhaustive_picks_on_grid_user() {
        let c = cfg(64);
        let book = polar_codebook(&c, 64, 5).unwrap();
        let target = book.get(3 * 64 + 17);
        let h = c.chirp_vector(target.angle, target.surrogate);
        let res = train_exhaustive(&h, &c, &book, &mut MeasurementModel::noiseless(0)).unwrap();
        assert_eq!(res.selected, (target.angle, target.surrogate));
        assert!((res.rho - 1.0).abs() < 1e-12);
        assert_eq!(res.pilots, book.len());
    }

    #[test]
    fn lattice_best_gain_matches_bruteforce() {
        let c = cfg(64);
        let lattice = PolarLattice::new(&c, 128, 4).unwrap();
        let h = c.steering_exact(&SourceLocation::new(2.0, -0.3).unwrap());
        let book = lattice_codebook(&c, &lattice);
        let brute = book.iter().map(|w| w.weights.inner(&h).norm()).fold(0.0, f64::max);
        assert!((lattice.best_gain(&c, &h).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn gaussian_stencil_is_exact() {
        let c = cfg(128);
        let (a0, s0) = (0.1234, 3.07e-4);
        let step = (0.01, 2e-5);
        let centre = (0.125, 3.0e-4);
        let g = |a: f64, s: f64| (-((a - a0) / 0.02).powi(2) - ((s - s0) / 4e-5).powi(2)).exp();
        let mut st = Stencil { centre, step, gains: [[0.0; 3]; 3] };
        for i in 0..3 {
            for j in 0..3 {
                let (a, s) = st.point(i, j);
                st.gains[i][j] = g(a, s);
            }
        }
        let r = refine_gaussian(&c, &st).unwrap();
        assert!((r.angle - a0).abs() < 1e-9);
        assert!((r.surrogate - s0).abs() < 1e-9);

        let sym = Stencil { centre, step, gains: [[0.5, 0.8, 0.5], [0.8, 1.0, 0.8], [0.5, 0.8, 0.5]] };
        let r = refine_gaussian(&c, &sym).unwrap();
        assert_eq!((r.angle, r.surrogate), centre);

        let off = Stencil { centre, step, gains: [[0.5, 0.8, 0.5], [0.8, 1.0, 1.1], [0.5, 0.8, 0.5]] };
        assert!(matches!(refine_gaussian(&c, &off), Err(Error::Stencil)));
        let zero = Stencil { centre, step, gains: [[0.0, 0.8, 0.5], [0.8, 1.0, 0.8], [0.5, 0.8, 0.5]] };
        assert!(matches!(refine_gaussian(&c, &zero), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn record_format() {
        let r = SlotRecord { slot: 3, rho: 0.5, retrained: true };
        assert_eq!(r.fields(), vec!["3", "0.5", "1"]);
    }
}
