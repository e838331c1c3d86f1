//! Fourth-order finite differences that do not wrap around the box.
//!
//! Used for fields that are not periodic even though the lattice is: the
//! unwrapped hydrodynamic phase `Φ` (e.g. `p₀x`, or `-x² tan ωt`) and
//! `log ρ^{1/2}`. Interior nodes use centred 5-point stencils, the two
//! outermost nodes on each side use one-sided stencils of the same order.

use crate::model::Grid;

fn first_line(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let c = 1.0 / (12.0 * h);
    out[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    out[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for i in 2..n - 2 {
        out[i] = c * (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]);
    }
    out[n - 2] =
        -c * (-3.0 * f[n - 1] - 10.0 * f[n - 2] + 18.0 * f[n - 3] - 6.0 * f[n - 4] + f[n - 5]);
    out[n - 1] = -c
        * (-25.0 * f[n - 1] + 48.0 * f[n - 2] - 36.0 * f[n - 3] + 16.0 * f[n - 4]
            - 3.0 * f[n - 5]);
}

fn second_line(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let c = 1.0 / (12.0 * h * h);
    let edge = |g: &dyn Fn(usize) -> f64| {
        (
            c * (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4)
                - 10.0 * g(5)),
            c * (10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5)),
        )
    };
    let (a, b) = edge(&|i| f[i]);
    out[0] = a;
    out[1] = b;
    for i in 2..n - 2 {
        out[i] = c * (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]);
    }
    let (a, b) = edge(&|i| f[n - 1 - i]);
    out[n - 1] = a;
    out[n - 2] = b;
}

fn apply_along(
    grid: &Grid,
    field: &[f64],
    axis: usize,
    kernel: fn(&[f64], f64, &mut [f64]),
) -> Vec<f64> {
    let n = grid.points()[axis];
    let stride = grid.strides()[axis];
    let h = grid.spacing(axis);
    let mut out = vec![0.0; field.len()];
    let mut line = vec![0.0; n];
    let mut res = vec![0.0; n];
    for outer in (0..field.len()).step_by(n * stride) {
        for inner in 0..stride {
            let start = outer + inner;
            for (j, v) in line.iter_mut().enumerate() {
                *v = field[start + j * stride];
            }
            kernel(&line, h, &mut res);
            for (j, v) in res.iter().enumerate() {
                out[start + j * stride] = *v;
            }
        }
    }
    out
}

/// `∂_axis field`, exact for polynomials of degree ≤ 4.
pub fn first_derivative(grid: &Grid, field: &[f64], axis: usize) -> Vec<f64> {
    apply_along(grid, field, axis, first_line)
}

/// `∂²_axis field`, exact for polynomials of degree ≤ 5.
pub fn second_derivative(grid: &Grid, field: &[f64], axis: usize) -> Vec<f64> {
    apply_along(grid, field, axis, second_line)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quartic() {
        let grid = Grid::line(16, 3.0).unwrap();
        let f = grid.map_nodes(|x| 1.0 - 2.0 * x[0] + 0.5 * x[0].powi(2) + x[0].powi(3) - 0.25 * x[0].powi(4));
        let d1 = first_derivative(&grid, &f, 0);
        let d2 = second_derivative(&grid, &f, 0);
        for j in 0..16 {
            let x = grid.coordinate(0, j);
            let e1 = -2.0 + x + 3.0 * x * x - x.powi(3);
            let e2 = 1.0 + 6.0 * x - 3.0 * x * x;
            assert!((d1[j] - e1).abs() < 1e-10, "d1 at {j}: {} vs {e1}", d1[j]);
            assert!((d2[j] - e2).abs() < 1e-9, "d2 at {j}: {} vs {e2}", d2[j]);
        }
    }

    #[test]
    fn acts_along_requested_axis_only() {
        let grid = Grid::new(vec![8, 16], vec![2.0, 4.0]).unwrap();
        let f = grid.map_nodes(|x| 3.0 * x[0] + x[1] * x[1]);
        let dx = first_derivative(&grid, &f, 0);
        let dy = first_derivative(&grid, &f, 1);
        for (i, (a, b)) in dx.iter().zip(&dy).enumerate() {
            let mut x = [0.0; 2];
            grid.node_position(i, &mut x);
            assert!((a - 3.0).abs() < 1e-11);
            assert!((b - 2.0 * x[1]).abs() < 1e-11);
        }
    }
}
