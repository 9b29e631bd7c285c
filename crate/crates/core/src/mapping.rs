//! Mapping functions from a normalized control value to a sound parameter,
//! plus speed calibration and the JND-consistency analyzer.
//!
//! Amplitude curves take `s ∈ [0, 1]` and return a linear gain in `[0, 1]`:
//!
//! * [`MappingFn::Linear`]: gain equals `s`.
//! * [`MappingFn::ExpDb`]: level in dB is affine in `s`, from `db_floor` at
//!   `s = 0` to 0 dB at `s = 1`, with hard silence below `gate`. Equal steps
//!   in `s` give equal steps in dB anywhere on the curve.
//! * [`MappingFn::ExpNorm`]: `(e^{ks} - 1) / (e^k - 1)`, exactly zero at rest.
//!
//! [`MappingFn::PitchExp`] maps a position to a frequency, `f0 · 2^(R·u)`,
//! the way a Theremin maps hand distance to pitch.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MappingError {
    #[error("invalid mapping parameter: {0}")]
    BadParameter(&'static str),
    #[error("calibration needs at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("calibration percentile must lie in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("calibrated full-scale speed must be positive, got {0}")]
    DegenerateCalibration(f64),
    #[error("JND analysis needs an amplitude mapping, not a pitch mapping")]
    NotAmplitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MappingFn {
    Linear,
    ExpDb { db_floor: f64, gate: f64 },
    ExpNorm { k: f64 },
    PitchExp { f0: f64, octaves: f64 },
}

impl MappingFn {
    pub const DEFAULT_DB_FLOOR: f64 = -60.0;
    pub const DEFAULT_GATE: f64 = 0.02;
    pub const DEFAULT_K: f64 = 4.0;
    pub const DEFAULT_F0: f64 = 220.0;
    pub const DEFAULT_OCTAVES: f64 = 2.0;

    pub fn exp_db() -> Self {
        MappingFn::ExpDb {
            db_floor: Self::DEFAULT_DB_FLOOR,
            gate: Self::DEFAULT_GATE,
        }
    }

    pub fn exp_norm() -> Self {
        MappingFn::ExpNorm { k: Self::DEFAULT_K }
    }

    pub fn pitch() -> Self {
        MappingFn::PitchExp {
            f0: Self::DEFAULT_F0,
            octaves: Self::DEFAULT_OCTAVES,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MappingFn::Linear => "linear",
            MappingFn::ExpDb { .. } => "exp_db",
            MappingFn::ExpNorm { .. } => "exp_norm",
            MappingFn::PitchExp { .. } => "pitch_exp",
        }
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        match *self {
            MappingFn::Linear => Ok(()),
            MappingFn::ExpDb { db_floor, gate } => {
                if !(db_floor < 0.0 && db_floor.is_finite()) {
                    Err(MappingError::BadParameter("db_floor must be negative"))
                } else if !(0.0..1.0).contains(&gate) {
                    Err(MappingError::BadParameter("gate must lie in [0, 1)"))
                } else {
                    Ok(())
                }
            }
            MappingFn::ExpNorm { k } => {
                if k > 0.0 && k.is_finite() {
                    Ok(())
                } else {
                    Err(MappingError::BadParameter("k must be positive"))
                }
            }
            MappingFn::PitchExp { f0, octaves } => {
                if !(f0 > 0.0 && f0.is_finite()) {
                    Err(MappingError::BadParameter("f0 must be positive"))
                } else if !(octaves > 0.0 && octaves.is_finite()) {
                    Err(MappingError::BadParameter("octaves must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn is_pitch(&self) -> bool {
        matches!(self, MappingFn::PitchExp { .. })
    }

    /// Speed below which the curve is forced to silence.
    pub fn gate(&self) -> f64 {
        match *self {
            MappingFn::ExpDb { gate, .. } => gate,
            _ => 0.0,
        }
    }

    /// Natural output interval: `[0, 1]` for amplitude, `[f0, f0·2^R]` for pitch.
    pub fn output_range(&self) -> (f64, f64) {
        match *self {
            MappingFn::PitchExp { f0, octaves } => (f0, map_pitch(1.0, f0, octaves)),
            _ => (0.0, 1.0),
        }
    }

    /// Evaluates the curve; the input is clamped to `[0, 1]`.
    pub fn apply(&self, s: f64) -> f64 {
        let s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
        match *self {
            MappingFn::Linear => map_linear(s),
            MappingFn::ExpDb { db_floor, gate } => map_exp_db(s, db_floor, gate),
            MappingFn::ExpNorm { k } => map_exp_norm(s, k),
            MappingFn::PitchExp { f0, octaves } => map_pitch(s, f0, octaves),
        }
    }
}

pub fn map_linear(s: f64) -> f64 {
    s
}

/// `10^(db_floor·(1-s)/20)`, or 0 below the gate.
pub fn map_exp_db(s: f64, db_floor: f64, gate: f64) -> f64 {
    if s < gate {
        0.0
    } else {
        db_to_gain(db_floor * (1.0 - s))
    }
}

pub fn map_exp_norm(s: f64, k: f64) -> f64 {
    libm::expm1(k * s) / libm::expm1(k)
}

pub fn map_pitch(u: f64, f0: f64, octaves: f64) -> f64 {
    f0 * libm::exp2(octaves * u)
}

#[inline]
pub fn db_to_gain(db: f64) -> f64 {
    libm::pow(10.0, db / 20.0)
}

#[inline]
pub fn gain_to_db(gain: f64) -> f64 {
    20.0 * libm::log10(gain)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMethod {
    Fixed,
    /// Nearest-rank percentile of recorded speeds.
    Percentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedCalibration {
    /// Speed in body lengths per second mapped to full scale.
    pub s_max: f64,
    pub method: CalibrationMethod,
}

impl Default for SpeedCalibration {
    fn default() -> Self {
        Self {
            s_max: 6.0,
            method: CalibrationMethod::Fixed,
        }
    }
}

impl SpeedCalibration {
    pub fn fixed(s_max: f64) -> Self {
        Self {
            s_max,
            method: CalibrationMethod::Fixed,
        }
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(MappingError::BadParameter("s_max must be positive"));
        }
        if let CalibrationMethod::Percentile(p) = self.method {
            if !(p > 0.0 && p <= 100.0) {
                return Err(MappingError::BadPercentile(p));
            }
        }
        Ok(())
    }
}

/// `min(s_bl / s_max, 1)`.
pub fn normalize_speed(s_bl: f64, cal: &SpeedCalibration) -> f64 {
    let s = s_bl / cal.s_max;
    if s.is_nan() {
        0.0
    } else {
        s.clamp(0.0, 1.0)
    }
}

pub const MIN_CALIBRATION_SAMPLES: usize = 30;

/// Full-scale speed as the nearest-rank `percentile` of `samples`.
pub fn calibrate(samples: &[f64], percentile: f64) -> Result<SpeedCalibration, MappingError> {
    if samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(MappingError::TooFewSamples {
            got: samples.len(),
            need: MIN_CALIBRATION_SAMPLES,
        });
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(MappingError::BadPercentile(percentile));
    }
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|s| !s.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < MIN_CALIBRATION_SAMPLES {
        return Err(MappingError::TooFewSamples {
            got: sorted.len(),
            need: MIN_CALIBRATION_SAMPLES,
        });
    }
    let rank = libm::ceil(percentile / 100.0 * sorted.len() as f64) as usize;
    let s_max = sorted[rank.clamp(1, sorted.len()) - 1];
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(MappingError::DegenerateCalibration(s_max));
    }
    Ok(SpeedCalibration {
        s_max,
        method: CalibrationMethod::Percentile(percentile),
    })
}

/// `n` uniformly spaced points `i / n`, `i = 1..=n`, ending at 1.
pub fn unit_grid(n: usize) -> impl Iterator<Item = f64> {
    let step = n.max(1) as f64;
    (1..=n).map(move |i| i as f64 / step)
}

pub const DEFAULT_GRID_POINTS: usize = 200;

/// `(s, m(s))` over a uniform grid.
pub fn curve(f: &MappingFn, points: usize) -> Vec<(f64, f64)> {
    unit_grid(points).map(|s| (s, f.apply(s))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JndParams {
    /// Input Weber fraction: the smallest noticeable relative change in speed.
    pub w_in: f64,
    /// Output JND in dB.
    pub l_jnd: f64,
    pub grid_points: usize,
}

impl Default for JndParams {
    fn default() -> Self {
        Self {
            w_in: 0.1,
            l_jnd: 1.0,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JndRow {
    pub s: f64,
    /// Level change in dB produced by one input JND at `s`.
    pub step_db: f64,
    pub perceptible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JndReport {
    pub params: JndParams,
    /// Rows for grid points where the step is defined, in increasing `s`.
    pub rows: Vec<JndRow>,
    /// `max step / min step` over perceptible rows; `None` when no row is perceptible.
    pub uniformity_ratio: Option<f64>,
}

impl JndReport {
    /// Smallest analysed `s` at which one input JND is audible.
    pub fn perceptible_from(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.perceptible).map(|r| r.s)
    }

    pub fn all_imperceptible(&self) -> bool {
        self.rows.iter().all(|r| !r.perceptible)
    }
}

/// Checks whether one input JND (a relative speed change of `w_in`) yields
/// at least one output JND (`l_jnd` dB) across the curve.
pub fn jnd_analyze(f: &MappingFn, params: JndParams) -> Result<JndReport, MappingError> {
    if f.is_pitch() {
        return Err(MappingError::NotAmplitude);
    }
    f.validate()?;
    if !(params.w_in > 0.0 && params.w_in.is_finite()) {
        return Err(MappingError::BadParameter("w_in must be positive"));
    }
    if !(params.l_jnd > 0.0 && params.l_jnd.is_finite()) {
        return Err(MappingError::BadParameter("L_jnd must be positive"));
    }
    let gate = f.gate();
    let rows: Vec<JndRow> = unit_grid(params.grid_points)
        .filter_map(|s| {
            let s_up = s * (1.0 + params.w_in);
            if s < gate || s_up > 1.0 {
                return None;
            }
            let (lo, hi) = (f.apply(s), f.apply(s_up));
            if !(lo > 0.0) {
                return None;
            }
            let step_db = gain_to_db(hi / lo);
            Some(JndRow {
                s,
                step_db,
                perceptible: step_db >= params.l_jnd,
            })
        })
        .collect();
    let (min, max) = rows
        .iter()
        .filter(|r| r.perceptible)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.step_db), hi.max(r.step_db))
        });
    let uniformity_ratio = (min.is_finite() && min > 0.0).then(|| max / min);
    Ok(JndReport {
        params,
        rows,
        uniformity_ratio,
    })
}
