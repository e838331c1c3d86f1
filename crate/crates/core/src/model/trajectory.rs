use super::ModelError;

/// SplitMix64 finalizer; turns `(master, index)` into a well-mixed stream seed.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`'s private random stream.
pub fn trajectory_seed(master: u64, index: usize) -> u64 {
    splitmix64(master.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1)))
}

/// Particle positions over output frames, flattened as `[traj * D + axis]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    dims: usize,
    n_traj: usize,
    frames: Vec<f64>,
    positions: Vec<Vec<f64>>,
    seed: u64,
    per_traj_seeds: Vec<u64>,
}

impl TrajectoryEnsemble {
    /// Single-frame ensemble at time `t0`.
    pub fn initial(dims: usize, t0: f64, positions: Vec<f64>, seed: u64) -> Result<Self, ModelError> {
        if dims == 0 || positions.is_empty() || positions.len() % dims != 0 {
            return Err(ModelError::InvalidEnsemble(format!(
                "{} coordinates do not split into {dims}-vectors",
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidEnsemble("non-finite initial position".into()));
        }
        let n_traj = positions.len() / dims;
        Ok(Self {
            dims,
            n_traj,
            frames: vec![t0],
            positions: vec![positions],
            seed,
            per_traj_seeds: (0..n_traj).map(|i| trajectory_seed(seed, i)).collect(),
        })
    }

    pub(crate) fn push_frame(&mut self, t: f64, positions: Vec<f64>) {
        debug_assert_eq!(positions.len(), self.n_traj * self.dims);
        debug_assert!(t > *self.frames.last().unwrap());
        self.frames.push(t);
        self.positions.push(positions);
    }

    pub fn dims(&self) -> usize {
        self.dims
    }
    pub fn n_traj(&self) -> usize {
        self.n_traj
    }
    pub fn frames(&self) -> &[f64] {
        &self.frames
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn per_traj_seeds(&self) -> &[u64] {
        &self.per_traj_seeds
    }

    /// All positions at frame `k`, flattened.
    pub fn frame_positions(&self, k: usize) -> &[f64] {
        &self.positions[k]
    }

    pub fn last_positions(&self) -> &[f64] {
        self.positions.last().unwrap()
    }

    pub fn position(&self, frame: usize, traj: usize) -> &[f64] {
        &self.positions[frame][traj * self.dims..(traj + 1) * self.dims]
    }

    /// Values of one coordinate axis across trajectories at frame `k`.
    pub fn axis_values(&self, frame: usize, axis: usize) -> Vec<f64> {
        self.positions[frame]
            .chunks(self.dims)
            .map(|p| p[axis])
            .collect()
    }
}
