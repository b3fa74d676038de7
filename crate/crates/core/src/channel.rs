//! Free-space line-of-sight channels.
//!
//! The exact model keeps the per-element distance `d_n` in both amplitude and
//! phase: `h_n = λ/(4π d_n) · exp(-i 2π d_n / λ)`. The far-field model
//! replaces `d_n` by a plane-wave expansion around the array center and uses a
//! single reference distance for the amplitude.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Carrier, Vec3};

/// Complex gain of each element toward one point at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub gains: Vec<Complex64>,
    pub frequency: f64,
    pub target: Vec3,
}

impl ChannelVector {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Squared Euclidean norm Σ|h_n|².
    pub fn norm_sqr(&self) -> f64 {
        self.gains.iter().map(|g| g.norm_sqr()).sum()
    }

    /// The same channel multiplied by a complex constant.
    pub fn scaled(&self, factor: Complex64) -> ChannelVector {
        ChannelVector {
            gains: self.gains.iter().map(|g| g * factor).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidebandChannel {
    pub subcarriers: Vec<(f64, ChannelVector)>,
    pub center_frequency: f64,
    pub bandwidth: f64,
}

impl WidebandChannel {
    pub fn frequencies(&self) -> Vec<f64> {
        self.subcarriers.iter().map(|(f, _)| *f).collect()
    }

    pub fn target(&self) -> Vec3 {
        self.subcarriers[0].1.target
    }
}

/// exp(-i 2π d/λ) · λ/(4π d), with the phase reduced in cycles first so that
/// long ranges keep full precision.
#[inline]
pub(crate) fn propagation(distance: f64, wavelength: f64) -> Complex64 {
    let cycles = (distance / wavelength).rem_euclid(1.0);
    let amplitude = wavelength / (4.0 * PI * distance);
    Complex64::from_polar(amplitude, -2.0 * PI * cycles)
}

/// Exact spherical-wavefront channel from every element to `target`.
pub fn nearfield_los(array: &ArrayGeometry, target: Vec3, frequency: f64) -> Result<ChannelVector> {
    let wavelength = Carrier::new(frequency)?.wavelength();
    if !target.is_finite() {
        return Err(Error::invalid("target must be finite"));
    }
    array.check_not_coincident(target)?;
    let gains = array
        .elements()
        .iter()
        .map(|p| propagation(p.distance(target), wavelength))
        .collect();
    Ok(ChannelVector {
        gains,
        frequency,
        target,
    })
}

/// Plane-wave steering vector toward `direction`.
///
/// Element phases are linear in the element offset from the array center and
/// every amplitude is `λ/(4π·reference_distance)`.
pub fn farfield_steering(
    array: &ArrayGeometry,
    direction: Vec3,
    reference_distance: f64,
    frequency: f64,
) -> Result<ChannelVector> {
    let wavelength = Carrier::new(frequency)?.wavelength();
    if !direction.is_finite() || (direction.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "direction must be a unit vector, got norm {}",
            direction.norm()
        )));
    }
    if !(reference_distance.is_finite() && reference_distance > 0.0) {
        return Err(Error::invalid(format!(
            "reference distance must be positive, got {reference_distance}"
        )));
    }
    let center = array.center();
    let amplitude = wavelength / (4.0 * PI * reference_distance);
    let gains = array
        .elements()
        .iter()
        .map(|p| {
            let path = reference_distance - (*p - center).dot(direction);
            let cycles = (path / wavelength).rem_euclid(1.0);
            Complex64::from_polar(amplitude, -2.0 * PI * cycles)
        })
        .collect();
    Ok(ChannelVector {
        gains,
        frequency,
        target: center + direction * reference_distance,
    })
}

/// Subcarrier frequencies evenly spread over `[center - B/2, center + B/2]`.
/// The middle subcarrier of an odd count lands exactly on `center`.
pub fn subcarrier_frequencies(center: f64, bandwidth: f64, n_subcarriers: usize) -> Result<Vec<f64>> {
    if n_subcarriers == 0 {
        return Err(Error::invalid("at least one subcarrier is required"));
    }
    if !(bandwidth.is_finite() && bandwidth >= 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be non-negative, got {bandwidth}"
        )));
    }
    if n_subcarriers == 1 {
        return Ok(vec![center]);
    }
    let step = bandwidth / (n_subcarriers - 1) as f64;
    let mid = (n_subcarriers - 1) as f64 / 2.0;
    let freqs: Vec<f64> = (0..n_subcarriers)
        .map(|i| center + (i as f64 - mid) * step)
        .collect();
    if freqs[0] <= 0.0 {
        return Err(Error::invalid("band extends to non-positive frequencies"));
    }
    Ok(freqs)
}

/// Exact channels on each subcarrier of a band.
pub fn wideband(
    array: &ArrayGeometry,
    target: Vec3,
    center: f64,
    bandwidth: f64,
    n_subcarriers: usize,
) -> Result<WidebandChannel> {
    let freqs = subcarrier_frequencies(center, bandwidth, n_subcarriers)?;
    let subcarriers = freqs
        .par_iter()
        .map(|&f| nearfield_los(array, target, f).map(|h| (f, h)))
        .collect::<Result<Vec<_>>>()?;
    Ok(WidebandChannel {
        subcarriers,
        center_frequency: center,
        bandwidth,
    })
}

/// Σ_n h_n(point) w_n and Σ_n |h_n(point)|² without materializing the
/// channel. `None` when `point` falls within `guard` meters of an element.
pub(crate) fn response(
    array: &ArrayGeometry,
    point: Vec3,
    wavelength: f64,
    column: &[Complex64],
    guard: f64,
) -> Option<(Complex64, f64)> {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut energy = 0.0;
    for (p, w) in array.elements().iter().zip(column) {
        let d = p.distance(point);
        if d < guard {
            return None;
        }
        let h = propagation(d, wavelength);
        acc += h * w;
        energy += h.norm_sqr();
    }
    Some((acc, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_upa;
    use approx::assert_relative_eq;

    fn single() -> ArrayGeometry {
        build_upa(0.0, 0.0, 1.0, Carrier::new(28e9).unwrap(), Vec3::ORIGIN).unwrap()
    }

    #[test]
    fn single_element_hand_value() {
        let h = nearfield_los(&single(), Vec3::new(0.0, 0.0, 10.0), 28e9).unwrap();
        let lam = 299_792_458.0 / 28e9;
        let amp = lam / (4.0 * PI * 10.0);
        assert_relative_eq!(h.gains[0].norm(), amp, max_relative = 1e-12);
        assert_relative_eq!(amp, 8.52e-5, max_relative = 1e-3);
        let expected = (-2.0 * PI * 10.0 / lam).rem_euclid(2.0 * PI);
        let got = h.gains[0].arg().rem_euclid(2.0 * PI);
        let diff = (expected - got).abs();
        assert!(diff.min(2.0 * PI - diff) < 1e-8, "{expected} vs {got}");
    }

    #[test]
    fn symmetric_pair_on_boresight_has_equal_gains() {
        let c = Carrier::new(28e9).unwrap();
        let a = build_upa(c.wavelength(), 0.0, 1.0, c, Vec3::ORIGIN).unwrap();
        let h = nearfield_los(&a, Vec3::new(0.0, 0.0, 3.0), 28e9).unwrap();
        assert_eq!(h.gains[0], h.gains[1]);
    }

    #[test]
    fn coincident_target_is_rejected() {
        let a = single();
        assert!(matches!(
            nearfield_los(&a, Vec3::ORIGIN, 28e9),
            Err(Error::SingularGeometry { .. })
        ));
    }

    #[test]
    fn steering_rejects_non_unit_direction() {
        let a = single();
        assert!(farfield_steering(&a, Vec3::new(0.0, 0.0, 2.0), 10.0, 28e9).is_err());
        assert!(farfield_steering(&a, Vec3::new(0.0, 0.0, 1.0), 0.0, 28e9).is_err());
    }

    #[test]
    fn endfire_pair_phase_difference_wraps_to_zero() {
        let c = Carrier::new(28e9).unwrap();
        let a = build_upa(c.wavelength(), 0.0, 1.0, c, Vec3::ORIGIN).unwrap();
        let h = farfield_steering(&a, Vec3::new(1.0, 0.0, 0.0), 10.0, 28e9).unwrap();
        let rel = (h.gains[0] * h.gains[1].conj()).arg();
        assert!(rel.abs() < 1e-9);
    }

    #[test]
    fn subcarrier_grid() {
        let f = subcarrier_frequencies(28e9, 100e6, 3).unwrap();
        assert_eq!(f, vec![27.95e9, 28e9, 28.05e9]);
        assert_eq!(subcarrier_frequencies(28e9, 0.0, 1).unwrap(), vec![28e9]);
        assert_eq!(subcarrier_frequencies(28e9, 100e6, 11).unwrap()[5], 28e9);
        assert!(subcarrier_frequencies(28e9, -1.0, 3).is_err());
        assert!(subcarrier_frequencies(28e9, 1.0, 0).is_err());
    }

    #[test]
    fn wideband_center_matches_narrowband() {
        let c = Carrier::new(28e9).unwrap();
        let a = build_upa(0.05, 0.02, 1.0, c, Vec3::ORIGIN).unwrap();
        let t = Vec3::new(0.1, 0.0, 2.0);
        let wb = wideband(&a, t, 28e9, 100e6, 5).unwrap();
        assert_eq!(wb.subcarriers[2].1, nearfield_los(&a, t, 28e9).unwrap());
        let one = wideband(&a, t, 28e9, 0.0, 1).unwrap();
        assert_eq!(one.subcarriers.len(), 1);
        assert_eq!(one.subcarriers[0].1, nearfield_los(&a, t, 28e9).unwrap());
    }
}
