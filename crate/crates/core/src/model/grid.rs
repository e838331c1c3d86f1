use super::ModelError;

/// Uniform periodic lattice over a flattened configuration space.
///
/// Axis `a` covers `[-L_a/2, L_a/2)` with `points[a]` nodes; node `j` sits at
/// `-L_a/2 + j * L_a / points[a]`. Storage everywhere in the crate is
/// row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<usize>,
    extents: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(points: Vec<usize>, extents: Vec<f64>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::InvalidGrid("grid needs at least one axis".into()));
        }
        if points.len() != extents.len() {
            return Err(ModelError::InvalidGrid(format!(
                "{} axes of points but {} extents",
                points.len(),
                extents.len()
            )));
        }
        for (axis, &n) in points.iter().enumerate() {
            if n < 8 || !n.is_power_of_two() {
                return Err(ModelError::InvalidGrid(format!(
                    "axis {axis}: {n} points, need a power of two >= 8"
                )));
            }
        }
        for (axis, &l) in extents.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(ModelError::InvalidGrid(format!(
                    "axis {axis}: extent {l} must be finite and positive"
                )));
            }
        }
        let mut strides = vec![1; points.len()];
        for a in (0..points.len() - 1).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        Ok(Self {
            points,
            extents,
            strides,
        })
    }

    /// One-dimensional convenience constructor.
    pub fn line(points: usize, extent: f64) -> Result<Self, ModelError> {
        Self::new(vec![points], vec![extent])
    }

    pub fn dims(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|a| self.spacing(a)).product()
    }

    /// Lower edge of the periodic box along `axis`.
    pub fn origin(&self, axis: usize) -> f64 {
        -0.5 * self.extents[axis]
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        self.origin(axis) + index as f64 * self.spacing(axis)
    }

    /// Node coordinates along one axis.
    pub fn axis_coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis])
            .map(|j| self.coordinate(axis, j))
            .collect()
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.points[axis]
    }

    pub fn node_position(&self, flat: usize, out: &mut [f64]) {
        for (a, x) in out.iter_mut().enumerate() {
            *x = self.coordinate(a, self.axis_index(flat, a));
        }
    }

    /// Evaluate `f` at every node, in storage order.
    pub fn map_nodes<T, F: FnMut(&[f64]) -> T>(&self, mut f: F) -> Vec<T> {
        let mut x = vec![0.0; self.dims()];
        (0..self.len())
            .map(|flat| {
                self.node_position(flat, &mut x);
                f(&x)
            })
            .collect()
    }

    /// Map a coordinate into the periodic box `[origin, origin + L)`.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let l = self.extents[axis];
        let lo = self.origin(axis);
        let w = (x - lo).rem_euclid(l) + lo;
        // rem_euclid can round up to exactly l
        if w >= lo + l {
            lo
        } else {
            w
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims()
            && x.iter().enumerate().all(|(a, &xa)| {
                xa.is_finite() && xa >= self.origin(a) && xa <= self.origin(a) + self.extents[a]
            })
    }

    /// Angular wavenumbers in FFT order, `2π/L * (0, 1, .., n/2-1, -n/2, .., -1)`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let base = 2.0 * std::f64::consts::PI / self.extents[axis];
        (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                base * m
            })
            .collect()
    }

    /// Multilinear interpolation of a nodal field at `x`, periodic on every axis.
    pub fn interpolate(&self, field: &[f64], x: &[f64]) -> f64 {
        let d = self.dims();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        let mut next = [0usize; 8];
        debug_assert!(d <= 8);
        for a in 0..d {
            let n = self.points[a];
            let s = (self.wrap(a, x[a]) - self.origin(a)) / self.spacing(a);
            let i0 = s.floor();
            frac[a] = s - i0;
            let i0 = (i0 as usize) % n;
            base[a] = i0;
            next[a] = (i0 + 1) % n;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    flat += next[a] * self.strides[a];
                } else {
                    w *= 1.0 - frac[a];
                    flat += base[a] * self.strides[a];
                }
            }
            if w != 0.0 {
                acc += w * field[flat];
            }
        }
        acc
    }

    /// Riemann sum over the periodic box (identical to the trapezoid rule here).
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.cell_volume()
    }
}
