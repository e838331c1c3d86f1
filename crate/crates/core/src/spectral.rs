//! FFT plumbing on a [`Grid`]: per-axis transforms and spectral derivatives.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::model::Grid;

/// Cached FFT plans and wavenumbers for one grid.
pub struct Spectral {
    grid: Grid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = grid
            .points()
            .iter()
            .map(|&n| planner.plan_fft_forward(n))
            .collect();
        let inverse = grid
            .points()
            .iter()
            .map(|&n| planner.plan_fft_inverse(n))
            .collect();
        let wavenumbers = (0..grid.dims()).map(|a| grid.wavenumbers(a)).collect();
        Self {
            grid: grid.clone(),
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points()[axis];
        let stride = self.grid.strides()[axis];
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            return;
        }
        let mut line = vec![Complex64::default(); n];
        let block = n * stride;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let start = outer + inner;
                for (j, z) in line.iter_mut().enumerate() {
                    *z = data[start + j * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, z) in line.iter().enumerate() {
                    data[start + j * stride] = *z;
                }
            }
        }
    }

    pub fn forward_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, &self.forward[axis]);
    }

    /// Inverse transform along one axis, normalized by `1/n`.
    pub fn inverse_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, &self.inverse[axis]);
        let scale = 1.0 / self.grid.points()[axis] as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.grid.dims() {
            self.forward_axis(data, a);
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.grid.dims() {
            self.inverse_axis(data, a);
        }
    }

    /// Spectral `∂_axis` of a complex field. The Nyquist mode is dropped.
    pub fn derivative(&self, field: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut out = field.to_vec();
        self.forward_axis(&mut out, axis);
        let n = self.grid.points()[axis];
        let stride = self.grid.strides()[axis];
        let k = &self.wavenumbers[axis];
        for (flat, z) in out.iter_mut().enumerate() {
            let j = (flat / stride) % n;
            *z = if j == n / 2 {
                Complex64::default()
            } else {
                Complex64::new(0.0, k[j]) * *z
            };
        }
        self.inverse_axis(&mut out, axis);
        out
    }

    /// Spectral `∂_axis` of a real field.
    pub fn derivative_real(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let z: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.derivative(&z, axis).into_iter().map(|z| z.re).collect()
    }
}
