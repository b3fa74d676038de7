//! Link metrics: received power, SINR, spectral efficiency, planar field
//! scans and the wideband focal drift of frequency-flat weights.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{response, ChannelVector, WidebandChannel};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Carrier, Plane, Vec3};
use crate::precoding::Precoder;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Transmit power and thermal noise floor of a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    transmit_power: f64,
    noise_psd: f64,
    bandwidth: f64,
    noise_power: f64,
}

impl LinkBudget {
    /// `transmit_power` in W (zero allowed, meaning a silent transmitter),
    /// `noise_psd` in W/Hz, `bandwidth` in Hz.
    pub fn new(transmit_power: f64, noise_psd: f64, bandwidth: f64) -> Result<Self> {
        if !(transmit_power.is_finite() && transmit_power >= 0.0) {
            return Err(Error::invalid(format!(
                "transmit power must be non-negative, got {transmit_power}"
            )));
        }
        for (name, v) in [("noise psd", noise_psd), ("bandwidth", bandwidth)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(LinkBudget {
            transmit_power,
            noise_psd,
            bandwidth,
            noise_power: noise_psd * bandwidth,
        })
    }

    pub fn from_dbm(power_dbm: f64, noise_psd_dbm_hz: f64, bandwidth: f64) -> Result<Self> {
        LinkBudget::new(
            dbm_to_watts(power_dbm),
            dbm_to_watts(noise_psd_dbm_hz),
            bandwidth,
        )
    }

    pub fn transmit_power(&self) -> f64 {
        self.transmit_power
    }

    pub fn noise_psd(&self) -> f64 {
        self.noise_psd
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }
}

/// |Σ_n h_n w_n|², watts for a column carrying watts.
pub fn received_power(channel: &ChannelVector, column: &[Complex64]) -> Result<f64> {
    if channel.len() != column.len() {
        return Err(Error::invalid(format!(
            "channel has {} elements but the column has {}",
            channel.len(),
            column.len()
        )));
    }
    Ok(channel
        .gains
        .iter()
        .zip(column)
        .map(|(h, w)| h * w)
        .sum::<Complex64>()
        .norm_sqr())
}

/// SINR of `user` when every column of `precoder` is transmitted at once and
/// the other columns act as interference.
pub fn sinr(
    channels: &[ChannelVector],
    precoder: &Precoder,
    user: usize,
    noise_power: f64,
) -> Result<f64> {
    if user >= channels.len() {
        return Err(Error::IndexOutOfRange {
            index: user,
            len: channels.len(),
        });
    }
    if channels.len() != precoder.streams() {
        return Err(Error::invalid(format!(
            "{} channels but {} precoder columns",
            channels.len(),
            precoder.streams()
        )));
    }
    stream_sinr(&channels[user], precoder, user, noise_power)
}

/// SINR of stream `stream` for a receiver with channel `h`, all columns of
/// `precoder` active.
pub fn stream_sinr(
    h: &ChannelVector,
    precoder: &Precoder,
    stream: usize,
    noise_power: f64,
) -> Result<f64> {
    if stream >= precoder.streams() {
        return Err(Error::IndexOutOfRange {
            index: stream,
            len: precoder.streams(),
        });
    }
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    let user = stream;
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, col) in precoder.columns.iter().enumerate() {
        let p = received_power(h, col)?;
        if j == user {
            signal = p;
        } else {
            interference += p;
        }
    }
    Ok(signal / (interference + noise_power))
}

/// Shannon spectral efficiency log2(1 + SINR), bits/s/Hz.
pub fn spectral_efficiency(sinr: f64) -> f64 {
    debug_assert!(sinr >= 0.0);
    sinr.ln_1p() / std::f64::consts::LN_2
}

/// Σ_k log2(1 + SINR_k).
pub fn sum_spectral_efficiency(
    channels: &[ChannelVector],
    precoder: &Precoder,
    noise_power: f64,
) -> Result<f64> {
    (0..channels.len())
        .map(|k| sinr(channels, precoder, k, noise_power).map(spectral_efficiency))
        .sum()
}

/// Rectangular sampling grid on a coordinate plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub plane: Plane,
    /// `[first axis, second axis]` ranges in meters, e.g. `[x, z]` for `xz`.
    pub ranges: [[f64; 2]; 2],
    /// Samples per axis, endpoints included.
    pub resolution: [usize; 2],
    /// Offset along the plane normal, meters.
    #[serde(default)]
    pub level: f64,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution.iter().any(|&n| n < 2) {
            return Err(Error::invalid("scan resolution must be at least 2 per axis"));
        }
        for r in &self.ranges {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::invalid(format!(
                    "scan range must be increasing and finite, got {r:?}"
                )));
            }
        }
        if !self.level.is_finite() {
            return Err(Error::invalid("scan level must be finite"));
        }
        Ok(())
    }

    /// Coordinate of sample `i` on `axis` (0 = first, 1 = second).
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let [lo, hi] = self.ranges[axis];
        lo + (hi - lo) * i as f64 / (self.resolution[axis] - 1) as f64
    }

    /// Grid spacing along `axis`.
    pub fn step(&self, axis: usize) -> f64 {
        let [lo, hi] = self.ranges[axis];
        (hi - lo) / (self.resolution[axis] - 1) as f64
    }

    pub fn point(&self, i: usize, j: usize) -> Vec3 {
        self.plane
            .point(self.coordinate(0, i), self.coordinate(1, j), self.level)
    }
}

/// Received power sampled over a plane. Grids are row-major with the second
/// axis as rows: `values[j * n_first + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldScan {
    pub spec: ScanSpec,
    pub values: Vec<f64>,
    pub normalized: Vec<f64>,
    /// False where the sample fell inside the guard sphere of an element.
    pub valid: Vec<bool>,
}

impl FieldScan {
    fn index(&self, i: usize, j: usize) -> usize {
        j * self.spec.resolution[0] + i
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.index(i, j)]
    }

    pub fn normalized_at(&self, i: usize, j: usize) -> f64 {
        self.normalized[self.index(i, j)]
    }

    /// Grid indices `(i, j)` of the strongest valid sample.
    pub fn argmax(&self) -> (usize, usize) {
        let n0 = self.spec.resolution[0];
        let best = self
            .values
            .iter()
            .enumerate()
            .filter(|(idx, _)| self.valid[*idx])
            .fold((0, f64::NEG_INFINITY), |acc, (idx, &v)| {
                if v > acc.1 {
                    (idx, v)
                } else {
                    acc
                }
            })
            .0;
        (best % n0, best / n0)
    }

    /// Indices of the sample nearest to in-plane coordinates `(a, b)`.
    pub fn nearest(&self, a: f64, b: f64) -> (usize, usize) {
        let pick = |axis: usize, v: f64| {
            let [lo, _] = self.spec.ranges[axis];
            let i = ((v - lo) / self.spec.step(axis)).round();
            i.clamp(0.0, (self.spec.resolution[axis] - 1) as f64) as usize
        };
        (pick(0, a), pick(1, b))
    }
}

/// Received power of one column over a planar grid, evaluated with the exact
/// channel at every sample. Samples within one wavelength of an element are
/// flagged invalid and set to zero.
pub fn field_scan(
    array: &ArrayGeometry,
    column: &[Complex64],
    spec: &ScanSpec,
    frequency: f64,
) -> Result<FieldScan> {
    spec.validate()?;
    if column.len() != array.len() {
        return Err(Error::invalid(format!(
            "column has {} weights for {} elements",
            column.len(),
            array.len()
        )));
    }
    let wavelength = Carrier::new(frequency)?.wavelength();
    let [n0, n1] = spec.resolution;
    let rows: Vec<Vec<Option<f64>>> = (0..n1)
        .into_par_iter()
        .map(|j| {
            (0..n0)
                .map(|i| {
                    response(array, spec.point(i, j), wavelength, column, wavelength)
                        .map(|(r, _)| r.norm_sqr())
                })
                .collect()
        })
        .collect();

    let flat: Vec<Option<f64>> = rows.into_iter().flatten().collect();
    let values: Vec<f64> = flat.iter().map(|v| v.unwrap_or(0.0)).collect();
    let valid: Vec<bool> = flat.iter().map(Option::is_some).collect();
    let peak = values.iter().cloned().fold(0.0_f64, f64::max);
    let normalized = if peak > 0.0 {
        values.iter().map(|v| v / peak).collect()
    } else {
        vec![0.0; values.len()]
    };
    Ok(FieldScan {
        spec: *spec,
        values,
        normalized,
        valid,
    })
}

/// Line through the array center along which focal depth is searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchAxis {
    pub direction: Vec3,
    pub start: f64,
    pub stop: f64,
}

/// Normalized array gain |Σ h_n w_n|² / Σ|h_n|² at `depth` along the axis.
fn axial_gain(
    array: &ArrayGeometry,
    axis: &SearchAxis,
    wavelength: f64,
    column: &[Complex64],
    depth: f64,
) -> f64 {
    let p = array.center() + axis.direction * depth;
    match response(array, p, wavelength, column, crate::geometry::COINCIDENCE_TOLERANCE) {
        Some((r, energy)) if energy > 0.0 => r.norm_sqr() / energy,
        _ => f64::NEG_INFINITY,
    }
}

/// Per-subcarrier focal location of a frequency-flat column, reported as the
/// offset (meters) from the design depth of `wideband.target()`.
///
/// The focal location is where the element contributions line up in phase,
/// i.e. the depth that maximizes the normalized array gain
/// `|Σ h_n w_n|² / Σ|h_n|²`. Normalizing removes the 1/d² spreading loss,
/// which otherwise drags the raw power peak toward the array. The search runs
/// a 5 mm grid over `[start, stop]` and refines the best cell by
/// golden-section search.
pub fn focal_drift(
    array: &ArrayGeometry,
    wideband: &WidebandChannel,
    flat_column: &[Complex64],
    axis: SearchAxis,
) -> Result<Vec<(f64, f64)>> {
    if !(axis.start.is_finite() && axis.stop.is_finite() && axis.start < axis.stop) {
        return Err(Error::EmptySearchRange {
            start: axis.start,
            stop: axis.stop,
        });
    }
    if (axis.direction.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("search direction must be a unit vector"));
    }
    if flat_column.len() != array.len() {
        return Err(Error::invalid("column length does not match the array"));
    }
    let design = (wideband.target() - array.center()).dot(axis.direction);
    let span = axis.stop - axis.start;
    let cells = (span / 0.005).ceil().max(1.0) as usize;
    let step = span / cells as f64;

    wideband
        .subcarriers
        .par_iter()
        .map(|(f, _)| {
            let wavelength = Carrier::new(*f)?.wavelength();
            let gain = |t: f64| axial_gain(array, &axis, wavelength, flat_column, t);
            let best = (0..=cells)
                .map(|i| (i, gain(axis.start + step * i as f64)))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
                .0;
            let lo = axis.start + step * best.saturating_sub(1) as f64;
            let hi = (axis.start + step * (best + 1) as f64).min(axis.stop);
            let peak = golden_max(gain, lo, hi, 1e-7);
            Ok((*f, peak - design))
        })
        .collect()
}

/// Maximizer of a unimodal function on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// Beamforming loss (dB) of a frequency-flat column at the design point on
/// each subcarrier, relative to the subcarrier nearest the band center.
///
/// Uses the normalized array gain, so the result isolates the phase
/// mismatch and is non-negative whenever the column is conjugate-matched at
/// the center frequency.
pub fn misfocus_loss_db(wideband: &WidebandChannel, flat_column: &[Complex64]) -> Result<Vec<(f64, f64)>> {
    let gains = wideband
        .subcarriers
        .iter()
        .map(|(f, h)| {
            let energy = h.norm_sqr();
            if energy == 0.0 {
                return Err(Error::DegenerateChannel);
            }
            Ok((*f, received_power(h, flat_column)? / energy))
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = gains
        .iter()
        .min_by(|a, b| {
            (a.0 - wideband.center_frequency)
                .abs()
                .total_cmp(&(b.0 - wideband.center_frequency).abs())
        })
        .map(|g| g.1)
        .ok_or_else(|| Error::invalid("band has no subcarriers"))?;
    Ok(gains
        .into_iter()
        .map(|(f, g)| (f, 10.0 * (reference / g).log10()))
        .collect())
}
