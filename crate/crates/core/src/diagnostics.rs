//! Quantitative checks: circulation quantization, ensemble-vs-density
//! distances, conservation tracking and power-law fits.

use std::f64::consts::PI;

use thiserror::Error;

use crate::model::{
    compute_velocity_fields, density_floor, Grid, MassTensor, ModelError, ValidatedParameters,
    WaveFunction,
};
use crate::propagator::PropagationReport;

pub const MIN_LOOP_VERTICES: usize = 16;
pub const DEFAULT_LOOP_VERTICES: usize = 256;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("invalid loop: {0}")]
    InvalidLoop(String),
    #[error("loop passes through a node of the density near vertex {vertex}")]
    LoopThroughNode { vertex: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least 4 points for a power-law fit, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("need at least two frames of history")]
    TooFewFrames,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Closed polygon in configuration space; the last vertex repeats the first.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopPath {
    vertices: Vec<Vec<f64>>,
}

impl LoopPath {
    pub fn new(grid: &Grid, vertices: Vec<Vec<f64>>) -> Result<Self, DiagnosticsError> {
        if vertices.len() < MIN_LOOP_VERTICES + 1 {
            return Err(DiagnosticsError::InvalidLoop(format!(
                "{} vertices, need {} plus the closing one",
                vertices.len(),
                MIN_LOOP_VERTICES
            )));
        }
        if vertices.first() != vertices.last() {
            return Err(DiagnosticsError::InvalidLoop("not closed".into()));
        }
        if let Some(i) = vertices.iter().position(|v| !grid.contains(v)) {
            return Err(DiagnosticsError::InvalidLoop(format!("vertex {i} outside the grid")));
        }
        Ok(Self { vertices })
    }

    /// Counter-clockwise circle in the `(axes.0, axes.1)` plane through `center`.
    pub fn circle(
        grid: &Grid,
        center: &[f64],
        axes: (usize, usize),
        radius: f64,
        n: usize,
    ) -> Result<Self, DiagnosticsError> {
        if center.len() != grid.dims() || axes.0 == axes.1 || axes.0.max(axes.1) >= grid.dims() {
            return Err(DiagnosticsError::InvalidLoop("bad centre or plane".into()));
        }
        let mut vertices: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                let mut v = center.to_vec();
                v[axes.0] += radius * th.cos();
                v[axes.1] += radius * th.sin();
                v
            })
            .collect();
        vertices.push(vertices[0].clone());
        Self::new(grid, vertices)
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self { vertices }
    }
}

/// `(1/ħ) ∮ m_A v^A dℓ^A`, trapezoid rule along the polygon with fields
/// interpolated multilinearly.
pub fn circulation(
    psi: &WaveFunction,
    path: &LoopPath,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> Result<f64, DiagnosticsError> {
    let grid = psi.grid();
    if path.vertices[0].len() != grid.dims() {
        return Err(DiagnosticsError::InvalidLoop("dimension mismatch".into()));
    }
    let fields = compute_velocity_fields(psi, p, m)?;
    let rho = psi.density();
    let floor = density_floor(&rho);
    let d = grid.dims();
    let mut momenta = Vec::with_capacity(path.vertices.len());
    for (i, x) in path.vertices.iter().enumerate() {
        if grid.interpolate(&rho, x) < floor {
            return Err(DiagnosticsError::LoopThroughNode { vertex: i });
        }
        let mut v = vec![0.0; d];
        fields.current_at(x, &mut v);
        momenta.push((0..d).map(|a| m.mass(a) * v[a]).collect::<Vec<_>>());
    }
    let mut acc = 0.0;
    for i in 0..path.vertices.len() - 1 {
        let (x0, x1) = (&path.vertices[i], &path.vertices[i + 1]);
        for a in 0..d {
            acc += 0.5 * (momenta[i][a] + momenta[i + 1][a]) * (x1[a] - x0[a]);
        }
    }
    Ok(acc / p.hbar())
}

/// Nearest integer to `circ/2π` and the residual in turns.
pub fn winding_number(circ: f64) -> (i64, f64) {
    let turns = circ / (2.0 * PI);
    let n = turns.round();
    (n as i64, turns - n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionDistance {
    pub l1: f64,
    pub ks_per_axis: Vec<f64>,
}

/// Fraction of each node's cell `[x_j − h/2, x_j + h/2)` falling in each of
/// `bins` equal bins, wrapping around the periodic box. Row-major `[node][bin]`.
fn cell_bin_overlap(n: usize, bins: usize) -> Vec<f64> {
    // coordinates in units of the spacing: box [0, n), node j at j
    let nf = n as f64;
    let width = nf / bins as f64;
    let mut w = vec![0.0; n * bins];
    for j in 0..n {
        let (lo, hi) = (j as f64 - 0.5, j as f64 + 0.5);
        let pieces = if lo < 0.0 {
            [(lo + nf, nf), (0.0, hi)]
        } else {
            [(lo, hi), (0.0, 0.0)]
        };
        for (a, b) in pieces {
            if b <= a {
                continue;
            }
            let k0 = (a / width).floor() as usize;
            let k1 = ((b / width).ceil() as usize).min(bins);
            for k in k0..k1 {
                let ov = b.min((k + 1) as f64 * width) - a.max(k as f64 * width);
                if ov > 0.0 {
                    w[j * bins + k] += ov;
                }
            }
        }
    }
    w
}

/// Contract one axis of a row-major array with a `[old][new]` weight matrix.
fn contract_axis(data: &[f64], shape: &[usize], axis: usize, w: &[f64], new_len: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let old = shape[axis];
    let mut out = vec![0.0; outer * new_len * inner];
    for o in 0..outer {
        for j in 0..old {
            let src = &data[(o * old + j) * inner..(o * old + j + 1) * inner];
            for k in 0..new_len {
                let c = w[j * new_len + k];
                if c == 0.0 {
                    continue;
                }
                let dst = &mut out[(o * new_len + k) * inner..(o * new_len + k + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += c * s);
            }
        }
    }
    out
}

/// Probability of each product bin under the cell-constant density, row-major.
pub fn binned_density(grid: &Grid, rho: &[f64], bins: usize) -> Vec<f64> {
    let mut shape = grid.points().to_vec();
    let mut data = rho.to_vec();
    for a in 0..grid.dims() {
        let w = cell_bin_overlap(shape[a], bins);
        data = contract_axis(&data, &shape, a, &w, bins);
        shape[a] = bins;
    }
    let total: f64 = data.iter().sum();
    data.iter_mut().for_each(|x| *x /= total);
    data
}

/// Fraction of samples in each product bin, row-major.
pub fn binned_samples(grid: &Grid, positions: &[f64], bins: usize) -> Vec<f64> {
    let d = grid.dims();
    let n = positions.len() / d;
    let mut counts = vec![0.0; bins.pow(d as u32)];
    for x in positions.chunks(d) {
        let mut flat = 0;
        for (a, &xa) in x.iter().enumerate() {
            let l = grid.extents()[a];
            let u = (grid.wrap(a, xa) - grid.origin(a)) / l;
            let k = ((u * bins as f64) as usize).min(bins - 1);
            flat = flat * bins + k;
        }
        counts[flat] += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= n as f64);
    counts
}

/// CDF of the cell-constant 1D density `marginal` on `[-L/2, L/2)`.
fn marginal_cdf(marginal: &[f64], l: f64) -> impl Fn(f64) -> f64 + '_ {
    let n = marginal.len();
    let h = l / n as f64;
    let total: f64 = marginal.iter().sum();
    // breakpoints at the cell edges; node 0's cell is split across the two ends
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0.5 * marginal[0];
    cum.push(acc);
    for j in 1..n {
        acc += marginal[j];
        cum.push(acc);
    }
    move |x: f64| {
        let s = (x + 0.5 * l) / h;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= n as f64 {
            return 1.0;
        }
        let mass = if s < 0.5 {
            s * marginal[0]
        } else {
            let t = s - 0.5;
            let j = t.floor() as usize;
            let below = cum[j];
            let next = if j + 1 < n { marginal[j + 1] } else { marginal[0] };
            below + (t - j as f64) * next
        };
        (mass / total).clamp(0.0, 1.0)
    }
}

fn ks_against_cdf(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Binned L1 distance and per-axis one-sample KS statistics of an ensemble
/// frame against a grid density.
pub fn distribution_distance(
    grid: &Grid,
    positions: &[f64],
    rho: &[f64],
    bins: usize,
) -> Result<DistributionDistance, DiagnosticsError> {
    let d = grid.dims();
    if rho.len() != grid.len() {
        return Err(ModelError::ShapeMismatch {
            expected: grid.len(),
            got: rho.len(),
        }
        .into());
    }
    let n = positions.len() / d;
    if n < MIN_SAMPLES || positions.len() % d != 0 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: n,
        });
    }
    let emp = binned_samples(grid, positions, bins);
    let exact = binned_density(grid, rho, bins);
    let l1 = emp.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
    let mut ks_per_axis = Vec::with_capacity(d);
    for a in 0..d {
        let mut marginal = vec![0.0; grid.points()[a]];
        for (i, r) in rho.iter().enumerate() {
            marginal[grid.axis_index(i, a)] += r;
        }
        let mut xs: Vec<f64> = positions.chunks(d).map(|x| grid.wrap(a, x[a])).collect();
        ks_per_axis.push(ks_against_cdf(&mut xs, marginal_cdf(&marginal, grid.extents()[a])));
    }
    Ok(DistributionDistance { l1, ks_per_axis })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov coefficient `c(α) = √(−½ ln(α/2))`; `c(0.01) ≈ 1.628`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

pub fn ks_critical_one_sample(alpha: f64, n: usize) -> f64 {
    ks_coefficient(alpha) / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Least-squares line through `(log α′, log deviation)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ScalingFit, DiagnosticsError> {
    if points.len() < 4 {
        return Err(DiagnosticsError::TooFewPoints(points.len()));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(DiagnosticsError::DegenerateFit(format!("non-positive point ({x}, {y})")));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(DiagnosticsError::DegenerateFit("abscissae must increase strictly".into()));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ScalingFit {
        abscissae: points.iter().map(|p| p.0).collect(),
        ordinates: points.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        r_squared,
    })
}

/// Drifts of a per-frame `(norm, energy)` history relative to its first frame.
pub fn conservation_report(history: &[(f64, f64)]) -> Result<PropagationReport, DiagnosticsError> {
    let (&(n0, e0), rest) = history.split_first().ok_or(DiagnosticsError::TooFewFrames)?;
    if rest.is_empty() {
        return Err(DiagnosticsError::TooFewFrames);
    }
    let mut report = PropagationReport {
        steps_taken: rest.len(),
        ..Default::default()
    };
    for &(n, e) in rest {
        report.observe(n, n0, e, e0);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_parameters, AlphaPrime, ModelParameters};
    use num_complex::Complex64;

    #[test]
    fn winding_examples() {
        let (n, r) = winding_number(6.2832);
        assert_eq!(n, 1);
        assert!(r.abs() <= 1e-4);
        assert_eq!(winding_number(0.0), (0, 0.0));
        let (n, r) = winding_number(12.57);
        assert_eq!(n, 2);
        assert!(r.abs() <= 2e-3);
        assert_eq!(winding_number(-2.0 * PI).0, -1);
    }

    #[test]
    fn loop_validation() {
        let grid = Grid::new(vec![32, 32], vec![8.0, 8.0]).unwrap();
        assert!(LoopPath::circle(&grid, &[0.0, 0.0], (0, 1), 1.0, 16).is_ok());
        assert!(LoopPath::circle(&grid, &[0.0, 0.0], (0, 1), 1.0, 15).is_err());
        assert!(LoopPath::circle(&grid, &[0.0, 0.0], (0, 1), 5.0, 64).is_err());
        let mut open: Vec<Vec<f64>> = (0..20).map(|k| vec![0.1 * k as f64, 0.0]).collect();
        assert!(LoopPath::new(&grid, open.clone()).is_err());
        open.push(open[0].clone());
        assert!(LoopPath::new(&grid, open).is_ok());
    }

    #[test]
    fn loop_through_node_is_rejected() {
        let grid = Grid::new(vec![32, 32], vec![8.0, 8.0]).unwrap();
        let psi = WaveFunction::from_fn(grid.clone(), |x| {
            Complex64::new(x[0] - 1.0, x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 4.0).exp()
        })
        .unwrap();
        let p = validate_parameters(&ModelParameters::standard(AlphaPrime::Finite(1.0), 0.01)).unwrap();
        let m = MassTensor::uniform(2, 1.0).unwrap();
        // the loop passes exactly through the zero at (1, 0)
        let path = LoopPath::circle(&grid, &[0.0, 0.0], (0, 1), 1.0, 64).unwrap();
        assert!(matches!(
            circulation(&psi, &path, &p, &m),
            Err(DiagnosticsError::LoopThroughNode { vertex: 0 })
        ));
    }

    #[test]
    fn overlap_rows_sum_to_one() {
        for (n, bins) in [(16, 4), (64, 64), (128, 64), (32, 5), (8, 16)] {
            let w = cell_bin_overlap(n, bins);
            for j in 0..n {
                let s: f64 = w[j * bins..(j + 1) * bins].iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "n={n} bins={bins} j={j}");
            }
        }
    }

    #[test]
    fn own_histogram_has_zero_distance() {
        let grid = Grid::line(64, 10.0).unwrap();
        let rho = grid.map_nodes(|x| (-x[0] * x[0]).exp() + 0.01);
        let bins = 16;
        let mass = binned_density(&grid, &rho, bins);
        // place counts proportional to bin mass at bin centres
        let n = 100_000usize;
        let mut positions = Vec::new();
        let mut placed = 0;
        for (k, p) in mass.iter().enumerate() {
            let c = if k + 1 == bins { n - placed } else { (p * n as f64).round() as usize };
            placed += c;
            let x = -5.0 + (k as f64 + 0.5) * 10.0 / bins as f64;
            positions.extend(std::iter::repeat_n(x, c));
        }
        let dd = distribution_distance(&grid, &positions, &rho, bins).unwrap();
        assert!(dd.l1 < 1e-4, "{}", dd.l1);
    }

    #[test]
    fn disjoint_support_is_maximal() {
        let grid = Grid::line(64, 10.0).unwrap();
        let rho = grid.map_nodes(|x| if x[0] > 0.0 { 1.0 } else { 0.0 });
        let dd = distribution_distance(&grid, &vec![-3.0; 500], &rho, 64).unwrap();
        assert!((dd.l1 - 2.0).abs() < 1e-12);
        assert!((dd.ks_per_axis[0] - 1.0).abs() < 1e-12);
        assert!(distribution_distance(&grid, &[0.0; 10], &rho, 64).is_err());
    }

    #[test]
    fn uniform_marginal_cdf_is_linear() {
        let m = vec![1.0; 16];
        let f = marginal_cdf(&m, 4.0);
        for x in [-2.0, -1.3, 0.0, 0.77, 1.99] {
            assert!((f(x) - (x + 2.0) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ks_values() {
        assert!((ks_coefficient(0.01) - 1.6276).abs() < 1e-4);
        assert!((ks_critical_one_sample(0.01, 10_000) - 0.016276).abs() < 1e-6);
        assert!((ks_critical_two_sample(0.01, 100, 100) - 1.6276 * 0.2f64.sqrt() / 10f64.sqrt() * 1.0).abs() < 1e-3);
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| 1000.0 + i as f64).collect();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }

    #[test]
    fn power_law_examples() {
        let xs: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];
        let f = fit_power_law(&xs.map(|x| (x, x.powf(-0.5)))).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_power_law(&xs.map(|x| (x, 3.0 / x))).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]),
            Err(DiagnosticsError::DegenerateFit(_))
        ));
        assert!(matches!(fit_power_law(&[(1.0, 1.0)]), Err(DiagnosticsError::TooFewPoints(1))));
    }

    #[test]
    fn conservation_examples() {
        let r = conservation_report(&[(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)]).unwrap();
        assert_eq!((r.norm_drift, r.energy_drift), (0.0, 0.0));
        let r = conservation_report(&[(1.0, 2.0), (1.0 + 1e-9, 2.0 + 2e-7)]).unwrap();
        assert!((r.norm_drift - 1e-9).abs() < 1e-15);
        assert!((r.energy_drift - 1e-7).abs() < 1e-15);
        assert!(conservation_report(&[(1.0, 1.0)]).is_err());
    }
}
