//! Array layouts and near-field / far-field region classification.
//!
//! Arrays are built as centered rectangular grids in the xy-plane (uniform
//! planar arrays). The far-field boundary is the Fraunhofer distance
//! `2 D² / λ`, where `D` is the largest distance between two elements.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Query points closer than this to an element are treated as coincident.
pub(crate) const COINCIDENCE_TOLERANCE: f64 = 1e-9;

/// A point or direction in 3D space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ORIGIN: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Carrier frequency together with its free-space wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Carrier {
    frequency: f64,
    wavelength: f64,
}

impl Carrier {
    pub fn new(frequency: f64) -> Result<Self> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::invalid(format!(
                "carrier frequency must be positive and finite, got {frequency}"
            )));
        }
        Ok(Carrier {
            frequency,
            wavelength: SPEED_OF_LIGHT / frequency,
        })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Free-space wavenumber 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

/// Coordinate plane holding a planar array or a field scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

impl Plane {
    /// Axis names as (first, second, normal).
    pub fn axis_names(self) -> (&'static str, &'static str, &'static str) {
        match self {
            Plane::Xy => ("x", "y", "z"),
            Plane::Xz => ("x", "z", "y"),
            Plane::Yz => ("y", "z", "x"),
        }
    }

    /// Point with in-plane coordinates `(a, b)` and `level` along the normal.
    pub fn point(self, a: f64, b: f64, level: f64) -> Vec3 {
        match self {
            Plane::Xy => Vec3::new(a, b, level),
            Plane::Xz => Vec3::new(a, level, b),
            Plane::Yz => Vec3::new(level, a, b),
        }
    }

    fn normal_coordinate(self, p: Vec3) -> f64 {
        match self {
            Plane::Xy => p.z,
            Plane::Xz => p.y,
            Plane::Yz => p.x,
        }
    }
}

/// Element positions of a planar array and the carrier it radiates at.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    elements: Vec<Vec3>,
    plane: Plane,
    center: Vec3,
    aperture: f64,
    carrier: Carrier,
}

impl ArrayGeometry {
    /// Array from an explicit element list. The center is the centroid and
    /// the aperture is found by pairwise search, so this is meant for small
    /// layouts; use [`build_upa`] for large grids.
    pub fn from_positions(elements: Vec<Vec3>, carrier: Carrier) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("array needs at least one element"));
        }
        if elements.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("element positions must be finite"));
        }
        let first = elements[0];
        let plane = [Plane::Xy, Plane::Xz, Plane::Yz]
            .into_iter()
            .find(|pl| {
                let level = pl.normal_coordinate(first);
                elements.iter().all(|p| pl.normal_coordinate(*p) == level)
            })
            .ok_or_else(|| Error::invalid("elements do not share a coordinate plane"))?;
        let n = elements.len() as f64;
        let center = elements.iter().fold(Vec3::ORIGIN, |acc, p| acc + *p) * (1.0 / n);
        let mut aperture = 0.0_f64;
        for (i, a) in elements.iter().enumerate() {
            for b in &elements[i + 1..] {
                aperture = aperture.max(a.distance(*b));
            }
        }
        Ok(ArrayGeometry {
            elements,
            plane,
            center,
            aperture,
            carrier,
        })
    }

    pub fn elements(&self) -> &[Vec3] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    /// Largest distance between any two elements, meters.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn carrier(&self) -> Carrier {
        self.carrier
    }

    /// Index of the first element lying within `tolerance` of `point`.
    pub(crate) fn element_near(&self, point: Vec3, tolerance: f64) -> Option<usize> {
        self.elements
            .iter()
            .position(|p| p.distance(point) < tolerance)
    }

    pub(crate) fn check_not_coincident(&self, point: Vec3) -> Result<()> {
        match self.element_near(point, COINCIDENCE_TOLERANCE) {
            Some(element) => Err(Error::SingularGeometry {
                point: point.to_array(),
                element,
            }),
            None => Ok(()),
        }
    }
}

/// Builds a centered rectangular grid in the xy-plane.
///
/// `length` runs along x and `width` along y; `spacing` is the pitch in
/// wavelengths. Each axis holds `floor(side / pitch) + 1` elements, which is
/// the densest grid whose extent does not exceed the given side. Elements are
/// stored row-major: y is the outer index, x the inner one.
pub fn build_upa(
    length: f64,
    width: f64,
    spacing: f64,
    carrier: Carrier,
    center: Vec3,
) -> Result<ArrayGeometry> {
    for (name, v) in [("length", length), ("width", width)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid(format!(
            "spacing must be positive, got {spacing}"
        )));
    }
    if !center.is_finite() {
        return Err(Error::invalid("array center must be finite"));
    }
    let pitch = spacing * carrier.wavelength();
    let nx = (length / pitch).floor() as usize + 1;
    let ny = (width / pitch).floor() as usize + 1;
    let mid_x = (nx as f64 - 1.0) / 2.0;
    let mid_y = (ny as f64 - 1.0) / 2.0;

    let mut elements = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        let y = (iy as f64 - mid_y) * pitch;
        for ix in 0..nx {
            let x = (ix as f64 - mid_x) * pitch;
            elements.push(Vec3::new(center.x + x, center.y + y, center.z));
        }
    }
    // corner-to-corner distance of the grid
    let aperture = ((nx - 1) as f64 * pitch).hypot((ny - 1) as f64 * pitch);
    Ok(ArrayGeometry {
        elements,
        plane: Plane::Xy,
        center,
        aperture,
        carrier,
    })
}

/// Fraunhofer distance `2 D² / λ`.
pub fn fraunhofer_distance(aperture: f64, carrier: Carrier) -> Result<f64> {
    if !(aperture.is_finite() && aperture >= 0.0) {
        return Err(Error::invalid(format!(
            "aperture must be finite and non-negative, got {aperture}"
        )));
    }
    Ok(2.0 * aperture * aperture / carrier.wavelength())
}

/// Outer edge of the reactive near field, `0.62 √(D³/λ)`, capped at the
/// Fraunhofer distance (the two cross for apertures below ~0.1 λ).
pub fn reactive_bound(aperture: f64, carrier: Carrier) -> Result<f64> {
    let df = fraunhofer_distance(aperture, carrier)?;
    let bound = 0.62 * (aperture.powi(3) / carrier.wavelength()).sqrt();
    Ok(bound.min(df))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    ReactiveNearField,
    RadiatingNearField,
    FarField,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::ReactiveNearField => "reactive-near-field",
            Region::RadiatingNearField => "radiating-near-field",
            Region::FarField => "far-field",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionClass {
    pub label: Region,
    pub fraunhofer_distance: f64,
    pub reactive_bound: f64,
}

/// Region of `point`, by its distance from the array center.
pub fn classify_point(array: &ArrayGeometry, point: Vec3) -> Result<RegionClass> {
    array.check_not_coincident(point)?;
    let fraunhofer = fraunhofer_distance(array.aperture(), array.carrier())?;
    let reactive = reactive_bound(array.aperture(), array.carrier())?;
    let distance = point.distance(array.center());
    let label = if distance > fraunhofer {
        Region::FarField
    } else if distance < reactive {
        Region::ReactiveNearField
    } else {
        Region::RadiatingNearField
    };
    Ok(RegionClass {
        label,
        fraunhofer_distance: fraunhofer,
        reactive_bound: reactive,
    })
}

/// Largest phase error, radians, made by replacing the exact element-to-point
/// distances with the plane-wave approximation taken from the array center.
pub fn max_phase_deviation(array: &ArrayGeometry, point: Vec3) -> Result<f64> {
    array.check_not_coincident(point)?;
    let offset = point - array.center();
    let range = offset.norm();
    if range == 0.0 {
        return Err(Error::invalid(
            "phase deviation is undefined at the array center",
        ));
    }
    let dir = offset * (1.0 / range);
    let k = array.carrier().wavenumber();
    let worst = array
        .elements()
        .iter()
        .map(|p| {
            let r = *p - array.center();
            let along = r.dot(dir);
            let planar = range - along;
            let exact = point.distance(*p);
            // exact - planar, rewritten to avoid cancellation at long range
            ((r.dot(r) - along * along) / (exact + planar)).abs()
        })
        .fold(0.0_f64, f64::max);
    Ok(k * worst)
}
