//! OSA/ANSI-indexed Zernike polynomials over a circular pupil.
//!
//! Polynomials use the ANSI Z80.28 unit-variance normalization
//! `N = sqrt(2(n+1)/(1+δ_{m0}))`, so a coefficient is directly the RMS
//! contribution of that mode over the pupil. Coefficients are radians of
//! phase. Azimuth is measured from the +x axis (columns, left to right)
//! towards +y (rows, bottom to top); `m < 0` selects `sin(|m|θ)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{Mask, PhaseMap};
use crate::scalar::Scalar;

/// Highest index the basis evaluator accepts (radial order 10).
pub const MAX_SUPPORTED_INDEX: usize = 65;
/// Default truncation of weight tables and fits.
pub const DEFAULT_MAX_INDEX: usize = 27;

/// OSA single index to `(n, m)`.
pub fn osa_to_nm(i: usize) -> (u32, i32) {
    // Radial order n covers indices n(n+1)/2 ..= n(n+1)/2 + n.
    let mut n = ((((8 * i + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
    while n * (n + 1) / 2 > i {
        n -= 1;
    }
    while (n + 1) * (n + 2) / 2 <= i {
        n += 1;
    }
    let m = 2 * (i - n * (n + 1) / 2) as i64 - n as i64;
    (n as u32, m as i32)
}

/// `(n, m)` to OSA index; `None` unless `|m| <= n` and `n - |m|` is even.
pub fn nm_to_osa(n: u32, m: i32) -> Option<usize> {
    let am = m.unsigned_abs();
    if am > n || !(n - am).is_multiple_of(2) {
        return None;
    }
    let n = n as i64;
    Some(((n * (n + 2) + m as i64) / 2) as usize)
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Coefficients `(power, coefficient)` of the radial polynomial `R_n^|m|`.
fn radial_terms(n: u32, m: i32) -> Vec<(i32, f64)> {
    let am = m.unsigned_abs();
    (0..=(n - am) / 2)
        .map(|s| {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * factorial(n - s)
                / (factorial(s) * factorial((n + am) / 2 - s) * factorial((n - am) / 2 - s));
            ((n - 2 * s) as i32, c)
        })
        .collect()
}

fn zernike_value(n: u32, m: i32, terms: &[(i32, f64)], rho: f64, theta: f64) -> f64 {
    let norm = if m == 0 {
        ((n + 1) as f64).sqrt()
    } else {
        (2.0 * (n + 1) as f64).sqrt()
    };
    let radial: f64 = terms.iter().map(|(p, c)| c * rho.powi(*p)).sum();
    let angular = if m >= 0 {
        (m as f64 * theta).cos()
    } else {
        (-m as f64 * theta).sin()
    };
    norm * radial * angular
}

/// Sparse Zernike coefficient table, radians per OSA index.
#[derive(Debug, Clone, PartialEq)]
pub struct ZernikeWeights<T> {
    entries: BTreeMap<usize, T>,
    max_index: usize,
}

impl<T: Scalar> Default for ZernikeWeights<T> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
            max_index: DEFAULT_MAX_INDEX,
        }
    }
}

impl<T: Scalar> ZernikeWeights<T> {
    pub fn new(max_index: usize) -> Result<Self> {
        if max_index > MAX_SUPPORTED_INDEX {
            return Err(Error::UnsupportedIndex {
                index: max_index,
                max: MAX_SUPPORTED_INDEX,
            });
        }
        Ok(Self {
            entries: BTreeMap::new(),
            max_index,
        })
    }

    pub fn from_pairs(
        max_index: usize,
        pairs: impl IntoIterator<Item = (usize, T)>,
    ) -> Result<Self> {
        let mut w = Self::new(max_index)?;
        for (i, v) in pairs {
            w.set(i, v)?;
        }
        Ok(w)
    }

    pub fn set(&mut self, index: usize, value: T) -> Result<()> {
        if index > self.max_index {
            return Err(Error::UnsupportedIndex {
                index,
                max: self.max_index,
            });
        }
        self.entries.insert(index, value);
        Ok(())
    }

    /// Coefficient at `index`; absent entries read as zero.
    pub fn get(&self, index: usize) -> T {
        self.entries.get(&index).copied().unwrap_or_else(T::zero)
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.entries.iter().map(|(i, v)| (*i, *v))
    }

    /// Entries with a non-zero coefficient.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.iter().filter(|(_, v)| *v != T::zero())
    }

    pub fn is_empty(&self) -> bool {
        self.nonzero().next().is_none()
    }
}

/// Sampling grid with the pupil disk centered on the grid center.
#[derive(Debug, Clone)]
pub struct PupilGrid<T> {
    rows: usize,
    cols: usize,
    pitch: T,
    pupil_diameter: T,
    mask: Mask,
    // Normalized polar coordinates of pixel centers (rho = 1 on the pupil rim).
    rho: Array2<f64>,
    theta: Array2<f64>,
}

impl<T: Scalar> PupilGrid<T> {
    pub fn new(rows: usize, cols: usize, pitch: T, pupil_diameter: T) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain(
                "resolution",
                format!("{rows}x{cols} is empty"),
            ));
        }
        if !(pitch > T::zero()) {
            return Err(Error::domain("pitch", format!("{pitch} is not positive")));
        }
        if !(pupil_diameter > T::zero()) {
            return Err(Error::domain(
                "pupil diameter",
                format!("{pupil_diameter} is not positive"),
            ));
        }
        let p = pitch.to_f64_lossy();
        let d = pupil_diameter.to_f64_lossy();
        let extent = rows.min(cols) as f64 * p;
        if d > extent * (1.0 + 1e-12) {
            return Err(Error::domain(
                "pupil diameter",
                format!("{d} m exceeds the {extent} m grid extent"),
            ));
        }
        let radius = d / 2.0;
        let (cy, cx) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
        let xy = |r: usize, c: usize| ((c as f64 - cx) * p, (cy - r as f64) * p);
        let rho = Array2::from_shape_fn((rows, cols), |(r, c)| {
            let (x, y) = xy(r, c);
            x.hypot(y) / radius
        });
        let theta = Array2::from_shape_fn((rows, cols), |(r, c)| {
            let (x, y) = xy(r, c);
            y.atan2(x)
        });
        let mask = Array2::from_shape_fn((rows, cols), |(r, c)| {
            let (x, y) = xy(r, c);
            x * x + y * y <= radius * radius
        });
        Ok(Self {
            rows,
            cols,
            pitch,
            pupil_diameter,
            mask,
            rho,
            theta,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn pupil_diameter(&self) -> T {
        self.pupil_diameter
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn pupil_pixels(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    fn basis_f64(&self, index: usize) -> Result<Array2<f64>> {
        if index > MAX_SUPPORTED_INDEX {
            return Err(Error::UnsupportedIndex {
                index,
                max: MAX_SUPPORTED_INDEX,
            });
        }
        let (n, m) = osa_to_nm(index);
        let terms = radial_terms(n, m);
        let mut out = Array2::zeros((self.rows, self.cols));
        ndarray::Zip::from(&mut out)
            .and(&self.mask)
            .and(&self.rho)
            .and(&self.theta)
            .for_each(|o, &inside, &rho, &theta| {
                if inside {
                    *o = zernike_value(n, m, &terms, rho, theta);
                }
            });
        Ok(out)
    }
}

/// ANSI-normalized Zernike polynomial `index`, zero outside the pupil.
pub fn zernike_basis<T: Scalar>(index: usize, grid: &PupilGrid<T>) -> Result<PhaseMap<T>> {
    Ok(PhaseMap::new(
        grid.basis_f64(index)?.mapv(T::lit),
        grid.pitch,
    ))
}

/// Pixelwise weighted sum of basis polynomials.
pub fn synthesize_phase<T: Scalar>(
    weights: &ZernikeWeights<T>,
    grid: &PupilGrid<T>,
) -> Result<PhaseMap<T>> {
    let mut acc = Array2::<f64>::zeros(grid.shape());
    for (i, w) in weights.nonzero() {
        acc.scaled_add(w.to_f64_lossy(), &grid.basis_f64(i)?);
    }
    Ok(PhaseMap::new(acc.mapv(T::lit), grid.pitch))
}

/// Least-squares projector onto indices `0..=max_index` over the pupil.
///
/// Precomputes the sampled basis and the Cholesky factor of its Gram matrix;
/// reuse one fitter for repeated fits on the same grid.
pub struct ZernikeFitter {
    max_index: usize,
    shape: (usize, usize),
    pupil: Vec<usize>,
    basis: Vec<Vec<f64>>,
    gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl ZernikeFitter {
    pub fn new<T: Scalar>(grid: &PupilGrid<T>, max_index: usize) -> Result<Self> {
        if max_index > MAX_SUPPORTED_INDEX {
            return Err(Error::UnsupportedIndex {
                index: max_index,
                max: MAX_SUPPORTED_INDEX,
            });
        }
        let count = max_index + 1;
        let pupil: Vec<usize> = grid
            .mask
            .iter()
            .enumerate()
            .filter_map(|(k, m)| m.then_some(k))
            .collect();
        if pupil.len() < count {
            return Err(Error::IllPosedFit {
                pupil_pixels: pupil.len(),
                basis: count,
            });
        }
        let basis = (0..count)
            .map(|i| {
                let b = grid.basis_f64(i)?;
                let flat = b.as_slice().expect("standard layout");
                Ok(pupil.iter().map(|&k| flat[k]).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let gram = DMatrix::from_fn(count, count, |a, b| {
            basis[a].iter().zip(&basis[b]).map(|(x, y)| x * y).sum()
        });
        let gram = gram.cholesky().ok_or(Error::IllPosedFit {
            pupil_pixels: pupil.len(),
            basis: count,
        })?;
        Ok(Self {
            max_index,
            shape: grid.shape(),
            pupil,
            basis,
            gram,
        })
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    /// Fitted coefficients for every index `0..=max_index` (piston included).
    pub fn fit<T: Scalar>(&self, phase: &PhaseMap<T>) -> Result<ZernikeWeights<T>> {
        crate::error::ensure_same_shape(phase.shape(), self.shape)?;
        let values = phase.values.as_standard_layout();
        let flat = values.as_slice().expect("standard layout");
        let samples: Vec<f64> = self.pupil.iter().map(|&k| flat[k].to_f64_lossy()).collect();
        let rhs = DVector::from_iterator(
            self.basis.len(),
            self.basis
                .iter()
                .map(|b| b.iter().zip(&samples).map(|(x, y)| x * y).sum::<f64>()),
        );
        let coeffs = self.gram.solve(&rhs);
        ZernikeWeights::from_pairs(
            self.max_index,
            coeffs.iter().enumerate().map(|(i, c)| (i, T::lit(*c))),
        )
    }
}

/// Least-squares fit of `phase` onto indices `0..=max_index` over the pupil.
pub fn fit_weights<T: Scalar>(
    phase: &PhaseMap<T>,
    grid: &PupilGrid<T>,
    max_index: usize,
) -> Result<ZernikeWeights<T>> {
    ZernikeFitter::new(grid, max_index)?.fit(phase)
}

/// Built-in aberration targets.
pub mod presets {
    use super::*;

    /// The four benchmark phases: `(name, [(OSA index, radians)])`.
    pub const BENCHMARK: [(&str, &[(usize, f64)]); 4] = [
        ("phase0", &[(2, 0.08), (4, 0.10), (5, 0.05), (7, 0.08)]),
        (
            "phase1",
            &[(4, 0.08), (8, 0.04), (12, 0.10), (19, 0.06), (27, 0.07)],
        ),
        ("phase2", &[(3, 0.05), (13, 0.11), (17, 0.06)]),
        ("phase3", &[(14, 0.03), (16, 0.10), (24, 0.08)]),
    ];

    pub fn names() -> impl Iterator<Item = &'static str> {
        BENCHMARK
            .iter()
            .map(|(n, _)| *n)
            .chain(std::iter::once("zero"))
    }

    /// Looks up `phase0`..`phase3` or `zero`.
    pub fn by_name<T: Scalar>(name: &str) -> Option<ZernikeWeights<T>> {
        if name == "zero" {
            return Some(ZernikeWeights::default());
        }
        let (_, pairs) = BENCHMARK.iter().find(|(n, _)| *n == name)?;
        ZernikeWeights::from_pairs(
            DEFAULT_MAX_INDEX,
            pairs.iter().map(|(i, w)| (*i, T::lit(*w))),
        )
        .ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> PupilGrid<f64> {
        PupilGrid::new(101, 101, 10e-6, 1e-3).unwrap()
    }

    #[test]
    fn osa_examples() {
        assert_eq!(osa_to_nm(0), (0, 0));
        assert_eq!(osa_to_nm(2), (1, 1));
        assert_eq!(osa_to_nm(4), (2, 0));
        assert_eq!(osa_to_nm(7), (3, -1));
        assert_eq!(osa_to_nm(27), (6, 6));
    }

    #[test]
    fn osa_bijection_first_hundred() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..100 {
            let (n, m) = osa_to_nm(i);
            assert!(m.unsigned_abs() <= n && (n - m.unsigned_abs()) % 2 == 0);
            assert_eq!((n as i64 * (n as i64 + 2) + m as i64) / 2, i as i64);
            assert_eq!(nm_to_osa(n, m), Some(i));
            assert!(seen.insert((n, m)));
        }
        assert_eq!(nm_to_osa(2, 1), None);
        assert_eq!(nm_to_osa(1, 3), None);
    }

    #[test]
    fn piston_is_one_inside_zero_outside() {
        let g = small_grid();
        let z = zernike_basis(0, &g).unwrap();
        for (v, m) in z.values.iter().zip(g.mask().iter()) {
            assert_eq!(*v, if *m { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn defocus_at_center_is_minus_sqrt3() {
        let g = small_grid();
        let z = zernike_basis(4, &g).unwrap();
        assert!((z.values[[50, 50]] + 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_piston_modes_have_zero_pupil_mean() {
        let g = PupilGrid::new(201, 201, 10e-6, 2e-3).unwrap();
        let n = g.pupil_pixels() as f64;
        for i in 1..=DEFAULT_MAX_INDEX {
            let z = zernike_basis(i, &g).unwrap();
            let mean: f64 = z.values.iter().sum::<f64>() / n;
            assert!(mean.abs() < 5e-3, "index {i} mean {mean}");
        }
    }

    #[test]
    fn unsupported_index_errors() {
        let g = small_grid();
        assert!(matches!(
            zernike_basis(MAX_SUPPORTED_INDEX + 1, &g),
            Err(Error::UnsupportedIndex { .. })
        ));
        let mut w = ZernikeWeights::<f64>::default();
        assert!(w.set(28, 0.1).is_err());
    }

    #[test]
    fn mask_is_centered_disk() {
        let g = PupilGrid::<f64>::new(4, 4, 1.0, 2.0).unwrap();
        // centers at +-0.5, +-1.5: inner four within radius 1, corners and edges outside
        let expected = ndarray::array![
            [false, false, false, false],
            [false, true, true, false],
            [false, true, true, false],
            [false, false, false, false]
        ];
        assert_eq!(g.mask(), &expected);
    }

    #[test]
    fn oversized_pupil_rejected() {
        assert!(PupilGrid::<f64>::new(10, 20, 1e-6, 11e-6).is_err());
    }

    #[test]
    fn empty_weights_give_zero_phase() {
        let g = small_grid();
        let p = synthesize_phase(&ZernikeWeights::<f64>::default(), &g).unwrap();
        assert!(p.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_weight_is_the_basis() {
        let g = small_grid();
        let w = ZernikeWeights::from_pairs(27, [(4, 1.0)]).unwrap();
        assert_eq!(
            synthesize_phase(&w, &g).unwrap(),
            zernike_basis(4, &g).unwrap()
        );
    }

    #[test]
    fn degenerate_pupil_is_ill_posed() {
        let g = PupilGrid::<f64>::new(4, 4, 1.0, 2.0).unwrap();
        assert!(matches!(
            ZernikeFitter::new(&g, 27),
            Err(Error::IllPosedFit {
                pupil_pixels: 4,
                basis: 28
            })
        ));
    }

    #[test]
    fn fit_recovers_piston_offset() {
        let g = small_grid();
        let w = presets::by_name::<f64>("phase3").unwrap();
        let mut phase = synthesize_phase(&w, &g).unwrap();
        ndarray::Zip::from(&mut phase.values)
            .and(g.mask())
            .for_each(|v, m| {
                if *m {
                    *v += 1.0
                }
            });
        let fit = fit_weights(&phase, &g, 27).unwrap();
        assert!((fit.get(0) - 1.0).abs() < 1e-9);
        for i in 1..=27 {
            assert!((fit.get(i) - w.get(i)).abs() < 1e-9, "index {i}");
        }
    }

    #[test]
    fn presets_match_table() {
        let p0 = presets::by_name::<f64>("phase0").unwrap();
        assert_eq!(
            p0.nonzero().collect::<Vec<_>>(),
            vec![(2, 0.08), (4, 0.10), (5, 0.05), (7, 0.08)]
        );
        assert!(presets::by_name::<f64>("zero").unwrap().is_empty());
        assert!(presets::by_name::<f64>("phase9").is_none());
    }
}
