//! Separable 2D FFT and DCT built from 1D plans, rows processed in parallel.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rayon::prelude::*;
use rustdct::{Dct2, Dct3, DctPlanner};
use rustfft::{Fft, FftPlanner};

use crate::scalar::Scalar;

fn transpose<E: Copy + Send + Sync>(a: &Array2<E>) -> Array2<E> {
    let (rows, cols) = a.dim();
    let src = a.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(rows * cols);
    out.extend((0..cols).flat_map(|c| (0..rows).map(move |r| src[r * cols + c])));
    Array2::from_shape_vec((cols, rows), out).expect("shape")
}

/// Unnormalized complex 2D FFT of a fixed shape.
pub(crate) struct Fft2<T: Scalar> {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Fft2<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn run_rows(plan: &Arc<dyn Fft<T>>, data: &mut Array2<Complex<T>>) {
        let width = data.ncols();
        let slice = data.as_slice_mut().expect("standard layout");
        slice.par_chunks_mut(width).for_each_init(
            || vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()],
            |scratch, row| plan.process_with_scratch(row, scratch),
        );
    }

    fn apply(&self, data: &mut Array2<Complex<T>>, row: &Arc<dyn Fft<T>>, col: &Arc<dyn Fft<T>>) {
        assert_eq!(data.dim(), (self.rows, self.cols), "FFT shape mismatch");
        Self::run_rows(row, data);
        let mut t = transpose(data);
        Self::run_rows(col, &mut t);
        *data = transpose(&t);
    }

    pub fn forward(&self, data: &mut Array2<Complex<T>>) {
        self.apply(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform without the `1/(rows*cols)` factor.
    pub fn inverse(&self, data: &mut Array2<Complex<T>>) {
        self.apply(data, &self.row_inv, &self.col_inv);
    }
}

/// 2D DCT-II / DCT-III pair. `inverse(forward(x)) == x`.
pub(crate) struct Dct2d<T: Scalar> {
    rows: usize,
    cols: usize,
    row_dct2: Arc<dyn Dct2<T>>,
    row_dct3: Arc<dyn Dct3<T>>,
    col_dct2: Arc<dyn Dct2<T>>,
    col_dct3: Arc<dyn Dct3<T>>,
}

impl<T: Scalar> Dct2d<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            rows,
            cols,
            row_dct2: planner.plan_dct2(cols),
            row_dct3: planner.plan_dct3(cols),
            col_dct2: planner.plan_dct2(rows),
            col_dct3: planner.plan_dct3(rows),
        }
    }

    fn dct2_rows(plan: &Arc<dyn Dct2<T>>, data: &mut Array2<T>) {
        let width = data.ncols();
        data.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(width)
            .for_each_init(
                || vec![T::zero(); plan.get_scratch_len()],
                |scratch, row| plan.process_dct2_with_scratch(row, scratch),
            );
    }

    fn dct3_rows(plan: &Arc<dyn Dct3<T>>, data: &mut Array2<T>, scale: T) {
        let width = data.ncols();
        data.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(width)
            .for_each_init(
                || vec![T::zero(); plan.get_scratch_len()],
                |scratch, row| {
                    plan.process_dct3_with_scratch(row, scratch);
                    row.iter_mut().for_each(|v| *v *= scale);
                },
            );
    }

    /// Unnormalized DCT-II along both axes.
    pub fn forward(&self, data: &Array2<T>) -> Array2<T> {
        assert_eq!(data.dim(), (self.rows, self.cols), "DCT shape mismatch");
        let mut a = data.as_standard_layout().into_owned();
        Self::dct2_rows(&self.row_dct2, &mut a);
        let mut t = transpose(&a);
        Self::dct2_rows(&self.col_dct2, &mut t);
        transpose(&t)
    }

    /// Scaled DCT-III along both axes, inverting [`Dct2d::forward`].
    pub fn inverse(&self, spectrum: &Array2<T>) -> Array2<T> {
        assert_eq!(spectrum.dim(), (self.rows, self.cols), "DCT shape mismatch");
        let two = T::lit(2.0);
        let mut a = spectrum.as_standard_layout().into_owned();
        Self::dct3_rows(&self.row_dct3, &mut a, two / T::from_usize_lossy(self.cols));
        let mut t = transpose(&a);
        Self::dct3_rows(&self.col_dct3, &mut t, two / T::from_usize_lossy(self.rows));
        transpose(&t)
    }
}
