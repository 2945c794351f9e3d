//! Conventional echo state network: a fixed random reservoir driven by
//! `x(n) = tanh(W_in u(n) + W x(n−1))` and a ridge-trained linear readout.
//!
//! There are no bias terms, so the autonomous network is odd in its state:
//! negating `x` negates the whole closed-loop trajectory.
//!
//! Random stream (ChaCha8 seeded with `seed`): the `W_in` entries that may be
//! nonzero are drawn first in row-major order, each `uniform(−σ_in, σ_in)`;
//! then, for every `W` entry in row-major order, one `uniform(0, 1)` draw
//! decides inclusion (`< density`) and an included entry takes a further
//! `uniform(−1, 1)` draw.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ridge;
use crate::series::TimeSeries;
use crate::sparse::{spectral_radius, CsrMatrix};

/// Teacher-forced steps discarded before regression.
pub const DEFAULT_WASHOUT: usize = 100;

/// Largest reservoir for which a non-converged power iteration falls back to
/// a dense eigenvalue solve.
pub const DENSE_RADIUS_LIMIT: usize = 2000;

/// Spectral radius from all eigenvalues of the dense matrix. Used when two
/// dominant eigenvalue pairs have nearly equal moduli and the power
/// iteration cannot separate them within its iteration budget.
pub fn dense_spectral_radius(w: &CsrMatrix) -> f64 {
    w.to_dense().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Reservoir hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsnConfig {
    pub n_reservoir: usize,
    pub sigma_in: f64,
    pub spectral_radius: f64,
    pub density: f64,
    pub gamma: f64,
    pub washout: usize,
    pub seed: u64,
    pub n_inputs: usize,
    pub n_outputs: usize,
}

impl Default for EsnConfig {
    fn default() -> Self {
        Self {
            n_reservoir: 100,
            sigma_in: 0.2,
            spectral_radius: 0.1,
            density: 0.03,
            gamma: 1e-7,
            washout: DEFAULT_WASHOUT,
            seed: 0,
            n_inputs: 20,
            n_outputs: 20,
        }
    }
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_reservoir == 0 || self.n_inputs == 0 || self.n_outputs == 0 {
            return bad("reservoir, input and output sizes must be positive".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density must lie in (0, 1], got {}", self.density));
        }
        if !(self.spectral_radius > 0.0) || !self.spectral_radius.is_finite() {
            return bad(format!("spectral radius must be positive, got {}", self.spectral_radius));
        }
        if !(self.sigma_in > 0.0) || !self.sigma_in.is_finite() {
            return bad(format!("sigma_in must be positive, got {}", self.sigma_in));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        Ok(())
    }
}

/// Assignment of reservoir rows to input column groups: rows in
/// `rows` receive input only from columns in `cols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBlock {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

fn validate_partition(blocks: &[InputBlock], n_rows: usize, n_cols: usize) -> Result<()> {
    let mut next_row = 0;
    for b in blocks {
        if b.rows.start != next_row || b.rows.is_empty() {
            return Err(Error::InvalidPartition(format!(
                "row blocks must be non-empty and contiguous from 0; block {:?} found at row {next_row}",
                b.rows
            )));
        }
        if b.cols.is_empty() || b.cols.end > n_cols {
            return Err(Error::InvalidPartition(format!(
                "column block {:?} is empty or exceeds {n_cols} inputs",
                b.cols
            )));
        }
        next_row = b.rows.end;
    }
    if next_row != n_rows {
        return Err(Error::InvalidPartition(format!(
            "row blocks cover {next_row} of {n_rows} reservoir rows"
        )));
    }
    Ok(())
}

/// Regression summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainDiagnostics {
    /// Mean squared one-step error on the training features.
    pub mse: f64,
    /// Frobenius norm of the readout.
    pub readout_norm: f64,
    pub n_samples: usize,
}

/// Reservoir matrices and neuron state.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    pub(crate) w_in: DMatrix<f64>,
    pub(crate) w: CsrMatrix,
    pub(crate) w_out: Option<DMatrix<f64>>,
    pub(crate) x: DVector<f64>,
    pub(crate) partition: Option<Vec<InputBlock>>,
}

impl Reservoir {
    /// Draws `W_in` and `W` from `config.seed` and scales `W` to the
    /// configured spectral radius. The neuron state starts at zero.
    pub fn init(config: &EsnConfig, input_blocks: Option<&[InputBlock]>) -> Result<Self> {
        config.validate()?;
        let n_x = config.n_reservoir;
        let n_u = config.n_inputs;
        if let Some(blocks) = input_blocks {
            validate_partition(blocks, n_x, n_u)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let s = config.sigma_in;

        let mut w_in = DMatrix::zeros(n_x, n_u);
        match input_blocks {
            None => {
                for r in 0..n_x {
                    for c in 0..n_u {
                        w_in[(r, c)] = rng.random_range(-s..s);
                    }
                }
            }
            Some(blocks) => {
                for b in blocks {
                    for r in b.rows.clone() {
                        for c in b.cols.clone() {
                            w_in[(r, c)] = rng.random_range(-s..s);
                        }
                    }
                }
            }
        }

        let mut triplets = Vec::new();
        for r in 0..n_x {
            for c in 0..n_x {
                if rng.random::<f64>() < config.density {
                    triplets.push((r, c, rng.random_range(-1.0..1.0)));
                }
            }
        }
        let mut w = CsrMatrix::from_triplets(n_x, n_x, &triplets)?;
        let radius = match spectral_radius(&w) {
            Err(Error::SpectralRadiusEstimation { .. }) if n_x <= DENSE_RADIUS_LIMIT => dense_spectral_radius(&w),
            other => other?,
        };
        if radius == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "seed {} produced a nilpotent adjacency matrix; cannot scale to radius {}",
                config.seed, config.spectral_radius
            )));
        }
        w.scale(config.spectral_radius / radius);

        Ok(Self {
            w_in,
            w,
            w_out: None,
            x: DVector::zeros(n_x),
            partition: input_blocks.map(<[InputBlock]>::to_vec),
        })
    }

    /// Assembles a reservoir from explicit matrices (no rescaling).
    pub fn from_parts(w_in: DMatrix<f64>, w: CsrMatrix, w_out: Option<DMatrix<f64>>) -> Result<Self> {
        let n_x = w_in.nrows();
        if w.n_rows() != n_x || w.n_cols() != n_x {
            return Err(Error::DimensionMismatch {
                what: "adjacency size",
                expected: n_x,
                got: w.n_rows(),
            });
        }
        if let Some(out) = &w_out {
            if out.ncols() < n_x {
                return Err(Error::DimensionMismatch {
                    what: "readout feature dimension",
                    expected: n_x,
                    got: out.ncols(),
                });
            }
        }
        Ok(Self {
            w_in,
            w,
            w_out,
            x: DVector::zeros(n_x),
            partition: None,
        })
    }

    pub fn n_reservoir(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn w(&self) -> &CsrMatrix {
        &self.w
    }

    pub fn w_out(&self) -> Option<&DMatrix<f64>> {
        self.w_out.as_ref()
    }

    pub fn set_w_out(&mut self, w_out: DMatrix<f64>) {
        self.w_out = Some(w_out);
    }

    pub fn partition(&self) -> Option<&[InputBlock]> {
        self.partition.as_deref()
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn set_state(&mut self, x: DVector<f64>) -> Result<()> {
        if x.len() != self.n_reservoir() {
            return Err(Error::DimensionMismatch {
                what: "reservoir state",
                expected: self.n_reservoir(),
                got: x.len(),
            });
        }
        self.x = x;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.x.fill(0.0);
    }

    /// `x ← tanh(W_in u + W x)`.
    pub fn step(&mut self, input: &[f64]) -> Result<&DVector<f64>> {
        if input.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                what: "reservoir input",
                expected: self.n_inputs(),
                got: input.len(),
            });
        }
        let mut pre = &self.w_in * DVector::from_column_slice(input);
        self.w.mul_add_to(self.x.as_slice(), pre.as_mut_slice());
        pre.apply(|v| *v = v.tanh());
        self.x = pre;
        Ok(&self.x)
    }

    /// `W_out · features`.
    pub fn readout(&self, features: &[f64]) -> Result<Vec<f64>> {
        let w_out = self.w_out.as_ref().ok_or(Error::UntrainedReadout)?;
        if features.len() != w_out.ncols() {
            return Err(Error::DimensionMismatch {
                what: "readout features",
                expected: w_out.ncols(),
                got: features.len(),
            });
        }
        Ok((w_out * DVector::from_column_slice(features)).as_slice().to_vec())
    }

    /// Teacher-forced harvest from a zero state. Column `k` of `X` is
    /// `x(washout + k)` and column `k` of `Y` is `u(washout + k + 1)`.
    pub fn collect_states(&mut self, inputs: &TimeSeries, washout: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = inputs.len();
        if n < washout + 2 {
            return Err(Error::InsufficientData {
                needed: washout + 2,
                got: n,
            });
        }
        let n_cols = n - washout - 1;
        let mut x = DMatrix::zeros(self.n_reservoir(), n_cols);
        let mut y = DMatrix::zeros(inputs.dim(), n_cols);
        self.reset();
        for k in 0..n - 1 {
            self.step(&inputs.states[k])?;
            if k >= washout {
                let col = k - washout;
                x.set_column(col, &self.x);
                y.set_column(col, &DVector::from_column_slice(&inputs.states[k + 1]));
            }
        }
        Ok((x, y))
    }

    /// Collects states with `washout`, fits the readout with ridge factor
    /// `gamma` and stores it.
    pub fn train(&mut self, inputs: &TimeSeries, washout: usize, gamma: f64) -> Result<TrainDiagnostics> {
        let (x, y) = self.collect_states(inputs, washout)?;
        let w_out = ridge::train_readout(&x, &y, gamma)?;
        let diag = TrainDiagnostics {
            mse: ridge::mean_squared_error(&w_out, &x, &y),
            readout_norm: w_out.norm(),
            n_samples: x.ncols(),
        };
        self.w_out = Some(w_out);
        Ok(diag)
    }

    /// Teacher-forces `warm_inputs` from a zero state.
    pub fn warm_up(&mut self, warm_inputs: &TimeSeries) -> Result<()> {
        if warm_inputs.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        self.reset();
        for u in &warm_inputs.states {
            self.step(u)?;
        }
        Ok(())
    }

    /// Runs the closed loop from the current state: emits `ŷ = W_out x`,
    /// then feeds it back as the next input.
    pub fn run_autonomous(&mut self, n_steps: usize) -> Result<Vec<Vec<f64>>> {
        if self.w_out.is_none() {
            return Err(Error::UntrainedReadout);
        }
        let mut out = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            let y = self.readout(self.x.as_slice())?;
            self.step(&y)?;
            out.push(y);
        }
        Ok(out)
    }

    /// Warm-up on `warm_inputs`, then `n_steps` of closed-loop prediction.
    /// The first emitted sample is the prediction for the step after the last
    /// warm-up input.
    pub fn predict_closed_loop(&mut self, warm_inputs: &TimeSeries, n_steps: usize) -> Result<TimeSeries> {
        if self.w_out.is_none() {
            return Err(Error::UntrainedReadout);
        }
        self.warm_up(warm_inputs)?;
        let out = self.run_autonomous(n_steps)?;
        TimeSeries::new(warm_inputs.dt, warm_inputs.time(warm_inputs.len()), out)
    }

    /// Closed-loop matrix `W + W_in W_out` (plain ESN readouts only).
    pub fn closed_loop_matrix(&self) -> Result<DMatrix<f64>> {
        let w_out = self.w_out.as_ref().ok_or(Error::UntrainedReadout)?;
        if w_out.ncols() != self.n_reservoir() || w_out.nrows() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                what: "closed-loop readout shape",
                expected: self.n_reservoir(),
                got: w_out.ncols(),
            });
        }
        Ok(self.w.to_dense() + &self.w_in * w_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config(seed: u64) -> EsnConfig {
        EsnConfig {
            n_reservoir: 30,
            density: 0.2,
            spectral_radius: 0.5,
            n_inputs: 2,
            n_outputs: 2,
            seed,
            washout: 10,
            ..EsnConfig::default()
        }
    }

    fn sine_series(n: usize, dt: f64) -> TimeSeries {
        let states = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                vec![(t * 1.3).sin(), (t * 1.3).cos() * 0.5]
            })
            .collect();
        TimeSeries::new(dt, 0.0, states).unwrap()
    }

    #[test]
    fn deterministic_in_seed() {
        let a = Reservoir::init(&small_config(4), None).unwrap();
        let b = Reservoir::init(&small_config(4), None).unwrap();
        assert_eq!(a, b);
        let c = Reservoir::init(&small_config(5), None).unwrap();
        assert_ne!(a.w_in, c.w_in);
    }

    #[test]
    fn scalar_step() {
        let w_in = DMatrix::from_element(1, 1, 2.0);
        let w = CsrMatrix::from_triplets(1, 1, &[(0, 0, 0.5)]).unwrap();
        let mut r = Reservoir::from_parts(w_in, w, None).unwrap();
        r.set_state(DVector::from_element(1, 0.1)).unwrap();
        let x = r.step(&[1.0]).unwrap()[0];
        assert_relative_eq!(x, 2.05f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(x, 0.967395, epsilon = 1e-6);
    }

    #[test]
    fn zero_input_keeps_zero_state() {
        let mut r = Reservoir::init(&small_config(1), None).unwrap();
        for _ in 0..5 {
            assert!(r.step(&[0.0, 0.0]).unwrap().iter().all(|&v| v == 0.0));
        }
        assert!(matches!(r.step(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn partition_restricts_input_columns() {
        let cfg = EsnConfig { n_inputs: 4, ..small_config(2) };
        let blocks = [
            InputBlock { rows: 0..15, cols: 0..2 },
            InputBlock { rows: 15..30, cols: 2..4 },
        ];
        let r = Reservoir::init(&cfg, Some(&blocks)).unwrap();
        for row in 0..30 {
            for col in 0..4 {
                let allowed = (row < 15) == (col < 2);
                assert_eq!(r.w_in[(row, col)] != 0.0, allowed, "({row}, {col})");
            }
        }
        let gap = [InputBlock { rows: 0..10, cols: 0..2 }];
        assert!(matches!(Reservoir::init(&cfg, Some(&gap)), Err(Error::InvalidPartition(_))));
    }

    #[test]
    fn collect_states_shapes() {
        let mut r = Reservoir::init(&small_config(3), None).unwrap();
        let data = sine_series(50, 0.1);
        let (x, y) = r.collect_states(&data, 10).unwrap();
        assert_eq!(x.ncols(), 50 - 10 - 1);
        assert_eq!(y.ncols(), 39);
        for k in 0..39 {
            assert_eq!(y.column(k).as_slice(), data.states[10 + k + 1].as_slice());
        }
        let (x2, _) = r.collect_states(&data, 10).unwrap();
        assert_eq!(x, x2);
        assert!(matches!(
            r.collect_states(&sine_series(11, 0.1), 10),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn untrained_prediction_fails() {
        let mut r = Reservoir::init(&small_config(3), None).unwrap();
        let data = sine_series(20, 0.1);
        assert_eq!(r.predict_closed_loop(&data, 5).unwrap_err(), Error::UntrainedReadout);
    }

    #[test]
    fn emitted_outputs_are_readout_of_previous_state() {
        let mut r = Reservoir::init(&small_config(8), None).unwrap();
        let data = sine_series(400, 0.05);
        r.train(&data, 10, 1e-7).unwrap();
        r.warm_up(&data.tail(50)).unwrap();
        let mut probe = r.clone();
        let out = r.run_autonomous(20).unwrap();
        for y in out {
            let expected = probe.readout(probe.state().as_slice()).unwrap();
            assert_eq!(y, expected);
            probe.step(&expected).unwrap();
        }
    }

    #[test]
    fn negated_state_negates_trajectory_exactly() {
        let mut r = Reservoir::init(&small_config(12), None).unwrap();
        let data = sine_series(400, 0.05);
        r.train(&data, 10, 1e-7).unwrap();
        r.warm_up(&data).unwrap();
        let mut flipped = r.clone();
        flipped.set_state(-r.state().clone()).unwrap();
        let a = r.run_autonomous(300).unwrap();
        let b = flipped.run_autonomous(300).unwrap();
        for (p, q) in a.iter().zip(&b) {
            for (u, v) in p.iter().zip(q) {
                assert_eq!(*u, -*v);
            }
        }
    }
}
