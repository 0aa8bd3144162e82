//! Coherent scalar field and Fresnel transfer-function propagation.
//!
//! Propagation zero-pads the field to twice its size in each dimension,
//! multiplies its spectrum by
//! `H(fx, fy) = exp(jkz) · exp(-jπλz(fx² + fy²))` and crops back. `H` is
//! unimodular, so energy is conserved exactly on the padded domain; what
//! diffracts past the crop window is lost from the cropped output. Positive
//! distances move towards the translation's end plane `z̃ + Δ`.

use ndarray::{s, Array2, Zip};
use num_complex::Complex;

use crate::error::{ensure_same_shape, Error, Result};
use crate::grid::{IntensityMap, PhaseMap, Plane};
use crate::scalar::Scalar;
use crate::transform::Fft2;

/// Complex amplitude sampled on a square-pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    amplitude: Array2<Complex<T>>,
    pitch: T,
    wavelength: T,
    plane: Plane,
}

fn check_optics<T: Scalar>(pitch: T, wavelength: T) -> Result<()> {
    if !(pitch > T::zero() && pitch.is_finite()) {
        return Err(Error::domain("pitch", format!("{pitch} is not positive")));
    }
    if !(wavelength > T::zero() && wavelength.is_finite()) {
        return Err(Error::domain(
            "wavelength",
            format!("{wavelength} is not positive"),
        ));
    }
    Ok(())
}

impl<T: Scalar> ComplexField<T> {
    pub fn new(
        amplitude: Array2<Complex<T>>,
        pitch: T,
        wavelength: T,
        plane: Plane,
    ) -> Result<Self> {
        check_optics(pitch, wavelength)?;
        Ok(Self {
            amplitude,
            pitch,
            wavelength,
            plane,
        })
    }

    pub fn amplitude(&self) -> &Array2<Complex<T>> {
        &self.amplitude
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn wavelength(&self) -> T {
        self.wavelength
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn wavenumber(&self) -> T {
        T::lit(2.0) * T::PI() / self.wavelength
    }

    pub fn shape(&self) -> (usize, usize) {
        self.amplitude.dim()
    }

    /// `Σ|u|²`, accumulated in f64.
    pub fn energy(&self) -> f64 {
        energy(&self.amplitude)
    }

    /// Pixelwise `α·self + β·other`.
    pub fn combine(&self, alpha: Complex<T>, other: &Self, beta: Complex<T>) -> Result<Self> {
        ensure_same_shape(self.shape(), other.shape())?;
        let amplitude = Zip::from(&self.amplitude)
            .and(&other.amplitude)
            .map_collect(|a, b| alpha * a + beta * b);
        Self::new(amplitude, self.pitch, self.wavelength, self.plane)
    }
}

fn energy<T: Scalar>(a: &Array2<Complex<T>>) -> f64 {
    a.iter().map(|u| u.norm_sqr().to_f64_lossy()).sum()
}

/// Uniform-intensity field `sqrt(I)·exp(jφ)` on the focus plane.
pub fn field_from_phase<T: Scalar>(
    phase: &PhaseMap<T>,
    intensity_level: T,
    wavelength: T,
) -> Result<ComplexField<T>> {
    if !(intensity_level > T::zero() && intensity_level.is_finite()) {
        return Err(Error::domain(
            "intensity level",
            format!("{intensity_level} is not positive"),
        ));
    }
    let a = intensity_level.sqrt();
    let amplitude = phase.values.mapv(|p| Complex::from_polar(a, p));
    ComplexField::new(amplitude, phase.pitch, wavelength, Plane::Focus)
}

/// `|u|²` pixelwise.
pub fn intensity_of<T: Scalar>(field: &ComplexField<T>) -> IntensityMap<T> {
    IntensityMap::from_trusted(
        field.amplitude.mapv(|u| u.norm_sqr()),
        field.pitch,
        field.plane,
    )
}

/// A field embedded in the zero-padded propagation domain.
#[derive(Debug, Clone)]
pub struct PaddedField<T> {
    data: Array2<Complex<T>>,
    inner: (usize, usize),
    offset: (usize, usize),
    pitch: T,
    wavelength: T,
    plane: Plane,
}

impl<T: Scalar> PaddedField<T> {
    pub fn data(&self) -> &Array2<Complex<T>> {
        &self.data
    }

    pub fn energy(&self) -> f64 {
        energy(&self.data)
    }

    /// The central window with the original field's extent.
    pub fn crop(&self) -> ComplexField<T> {
        let (r0, c0) = self.offset;
        let (rows, cols) = self.inner;
        ComplexField {
            amplitude: self.data.slice(s![r0..r0 + rows, c0..c0 + cols]).to_owned(),
            pitch: self.pitch,
            wavelength: self.wavelength,
            plane: self.plane,
        }
    }
}

/// Fresnel propagator for one grid geometry; reusable across fields.
pub struct FresnelPropagator<T: Scalar> {
    inner: (usize, usize),
    padded: (usize, usize),
    pitch: T,
    wavelength: T,
    fft: Fft2<T>,
}

impl<T: Scalar> FresnelPropagator<T> {
    /// Propagator with the default 2× zero padding.
    pub fn new(shape: (usize, usize), pitch: T, wavelength: T) -> Result<Self> {
        Self::with_padding(shape, pitch, wavelength, 2)
    }

    /// Propagator padding each dimension by `factor`; `1` gives periodic
    /// boundaries.
    pub fn with_padding(
        shape: (usize, usize),
        pitch: T,
        wavelength: T,
        factor: usize,
    ) -> Result<Self> {
        check_optics(pitch, wavelength)?;
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::domain("resolution", "empty grid"));
        }
        if factor == 0 {
            return Err(Error::domain("padding factor", "must be at least 1"));
        }
        let padded = (factor * shape.0, factor * shape.1);
        Ok(Self {
            inner: shape,
            padded,
            pitch,
            wavelength,
            fft: Fft2::new(padded.0, padded.1),
        })
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        self.padded
    }

    /// Largest |z| for which the quadratic phase of `H` stays below π per
    /// frequency sample at Nyquist: `λ|z| <= M·p²`.
    pub fn max_distance(&self) -> f64 {
        let p = self.pitch.to_f64_lossy();
        self.padded.0.min(self.padded.1) as f64 * p * p / self.wavelength.to_f64_lossy()
    }

    fn check_field(&self, field: &ComplexField<T>) -> Result<()> {
        ensure_same_shape(field.shape(), self.inner)?;
        if field.pitch != self.pitch || field.wavelength != self.wavelength {
            return Err(Error::domain(
                "field",
                "pitch or wavelength differs from the propagator geometry",
            ));
        }
        Ok(())
    }

    fn check_distance(&self, distance: T) -> Result<()> {
        let d = distance.to_f64_lossy();
        let max = self.max_distance();
        if !d.is_finite() || d.abs() > max {
            return Err(Error::SamplingViolation {
                distance: d,
                max_distance: max,
            });
        }
        Ok(())
    }

    pub fn pad(&self, field: &ComplexField<T>) -> Result<PaddedField<T>> {
        self.check_field(field)?;
        let offset = (
            (self.padded.0 - self.inner.0) / 2,
            (self.padded.1 - self.inner.1) / 2,
        );
        let mut data = Array2::from_elem(self.padded, Complex::new(T::zero(), T::zero()));
        data.slice_mut(s![
            offset.0..offset.0 + self.inner.0,
            offset.1..offset.1 + self.inner.1
        ])
        .assign(&field.amplitude);
        Ok(PaddedField {
            data,
            inner: self.inner,
            offset,
            pitch: self.pitch,
            wavelength: self.wavelength,
            plane: field.plane,
        })
    }

    /// `H` sampled on the padded FFT grid, computed in f64.
    fn transfer(&self, distance: f64) -> Array2<Complex<T>> {
        let lambda = self.wavelength.to_f64_lossy();
        let p = self.pitch.to_f64_lossy();
        let tau = 2.0 * std::f64::consts::PI;
        let global = (tau / lambda * distance).rem_euclid(tau);
        let freq = |k: usize, n: usize| {
            let k = if k < n.div_ceil(2) {
                k as f64
            } else {
                k as f64 - n as f64
            };
            k / (n as f64 * p)
        };
        let (mr, mc) = self.padded;
        let fy2: Vec<f64> = (0..mr).map(|k| freq(k, mr).powi(2)).collect();
        let fx2: Vec<f64> = (0..mc).map(|k| freq(k, mc).powi(2)).collect();
        let chirp = std::f64::consts::PI * lambda * distance;
        Array2::from_shape_fn(self.padded, |(r, c)| {
            let (s, co) = (global - chirp * (fy2[r] + fx2[c])).sin_cos();
            Complex::new(T::lit(co), T::lit(s))
        })
    }

    fn spectrum(&self, padded: &PaddedField<T>) -> Array2<Complex<T>> {
        let mut spec = padded.data.clone();
        self.fft.forward(&mut spec);
        spec
    }

    fn propagate_spectrum(
        &self,
        spec: &Array2<Complex<T>>,
        distance: T,
        template: &PaddedField<T>,
        plane: Plane,
    ) -> PaddedField<T> {
        let h = self.transfer(distance.to_f64_lossy());
        let norm = T::one() / T::from_usize_lossy(self.padded.0 * self.padded.1);
        let mut out = Zip::from(spec).and(&h).map_collect(|a, b| a * b);
        self.fft.inverse(&mut out);
        out.mapv_inplace(|v| v * norm);
        PaddedField {
            data: out,
            inner: template.inner,
            offset: template.offset,
            pitch: self.pitch,
            wavelength: self.wavelength,
            plane,
        }
    }

    /// Propagates a padded field without cropping (exactly unitary).
    pub fn propagate_padded(&self, padded: &PaddedField<T>, distance: T) -> Result<PaddedField<T>> {
        self.check_distance(distance)?;
        ensure_same_shape(padded.data.dim(), self.padded)?;
        let spec = self.spectrum(padded);
        Ok(self.propagate_spectrum(&spec, distance, padded, shifted(padded.plane, distance)))
    }

    pub fn propagate(&self, field: &ComplexField<T>, distance: T) -> Result<ComplexField<T>> {
        self.check_distance(distance)?;
        let padded = self.pad(field)?;
        Ok(self.propagate_padded(&padded, distance)?.crop())
    }

    /// Fields at `-delta` and `+delta` from `field`, sharing one forward FFT.
    /// Planes are labelled [`Plane::Minus`] and [`Plane::Plus`].
    pub fn propagate_pair(
        &self,
        field: &ComplexField<T>,
        delta: T,
    ) -> Result<(ComplexField<T>, ComplexField<T>)> {
        self.check_distance(delta)?;
        let padded = self.pad(field)?;
        let spec = self.spectrum(&padded);
        let minus = self
            .propagate_spectrum(&spec, -delta, &padded, Plane::Minus)
            .crop();
        let plus = self
            .propagate_spectrum(&spec, delta, &padded, Plane::Plus)
            .crop();
        Ok((minus, plus))
    }

    /// Fields at each of `distances` from `field`, sharing one forward FFT.
    pub fn propagate_many(
        &self,
        field: &ComplexField<T>,
        distances: &[T],
    ) -> Result<Vec<ComplexField<T>>> {
        for d in distances {
            self.check_distance(*d)?;
        }
        let padded = self.pad(field)?;
        let spec = self.spectrum(&padded);
        Ok(distances
            .iter()
            .map(|d| {
                self.propagate_spectrum(&spec, *d, &padded, shifted(field.plane, *d))
                    .crop()
            })
            .collect())
    }
}

fn shifted<T: Scalar>(plane: Plane, distance: T) -> Plane {
    let d = distance.to_f64_lossy();
    match plane {
        Plane::Focus => Plane::Offset(d),
        Plane::Offset(z) => Plane::Offset(z + d),
        other => other,
    }
}

/// One-shot propagation; builds a fresh FFT plan.
pub fn fresnel_propagate<T: Scalar>(
    field: &ComplexField<T>,
    distance: T,
) -> Result<ComplexField<T>> {
    FresnelPropagator::new(field.shape(), field.pitch, field.wavelength)?.propagate(field, distance)
}
