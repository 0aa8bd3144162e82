//! Pitch-tagged real grids: phase maps and intensity maps.
//!
//! Grids are row-major `ndarray::Array2` values. Row 0 is the top of the
//! sensor; the optical axis passes through the grid center.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Boolean pixel selection (e.g. the pupil disk).
pub type Mask = Array2<bool>;

/// Phase in radians on a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap<T> {
    pub values: Array2<T>,
    /// Meters per pixel.
    pub pitch: T,
}

impl<T: Scalar> PhaseMap<T> {
    pub fn new(values: Array2<T>, pitch: T) -> Self {
        Self { values, pitch }
    }

    pub fn zeros(shape: (usize, usize), pitch: T) -> Self {
        Self::new(Array2::zeros(shape), pitch)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Axial position an intensity map was recorded at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Plane {
    Focus,
    /// The defocus plane at `z̃ - Δ`, where the translation starts.
    Minus,
    /// The defocus plane at `z̃ + Δ`, where the translation ends.
    Plus,
    /// Signed offset from the focus plane, meters.
    Offset(f64),
}

/// Non-negative linear intensity on a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap<T> {
    values: Array2<T>,
    pitch: T,
    plane: Plane,
}

impl<T: Scalar> IntensityMap<T> {
    /// Fails if any value is negative or not finite.
    pub fn new(values: Array2<T>, pitch: T, plane: Plane) -> Result<Self> {
        if let Some(bad) = values
            .iter()
            .find(|v| !(**v >= T::zero()) || !v.is_finite())
        {
            return Err(Error::domain(
                "intensity",
                format!("values must be finite and non-negative, found {bad}"),
            ));
        }
        if !(pitch > T::zero()) {
            return Err(Error::domain("pitch", format!("{pitch} is not positive")));
        }
        Ok(Self {
            values,
            pitch,
            plane,
        })
    }

    /// Uniform map, handy for tests and flat-field references.
    pub fn uniform(shape: (usize, usize), level: T, pitch: T, plane: Plane) -> Result<Self> {
        Self::new(Array2::from_elem(shape, level), pitch, plane)
    }

    pub(crate) fn from_trusted(values: Array2<T>, pitch: T, plane: Plane) -> Self {
        debug_assert!(values.iter().all(|v| *v >= T::zero()));
        Self {
            values,
            pitch,
            plane,
        }
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Same map multiplied by a positive factor.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.values.mapv(|v| v * factor), self.pitch, self.plane)
    }
}

/// Mean over the selected pixels, or `None` for an empty mask.
pub(crate) fn masked_mean<T: Scalar>(values: &Array2<T>, mask: &Mask) -> Option<T> {
    let (sum, count) = values
        .iter()
        .zip(mask.iter())
        .filter(|(_, m)| **m)
        .fold((0.0f64, 0usize), |(s, c), (v, _)| {
            (s + v.to_f64_lossy(), c + 1)
        });
    (count > 0).then(|| T::lit(sum / count as f64))
}
