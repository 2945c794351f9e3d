//! Hybrid echo state network: a reservoir coupled to a reduced-order model
//! (the Galerkin model truncated to fewer modes).
//!
//! At every step the ROM advances the current input by one time step. Its
//! prediction `ŷ_ROM` (zero-padded to the full state dimension) is fed to the
//! second half of the reservoir and appended to the readout features:
//!
//! ```text
//! ŷ_ROM(n) = ROM(u(n))
//! x(n)     = tanh(W_in [u(n); ŷ_ROM(n)] + W x(n−1))
//! ŷ(n)     = W_out [x(n); ŷ_ROM(n)]          ≈ u(n+1)
//! ```
//!
//! In training the ROM delay buffer is fed from the data; in closed loop it is
//! fed from the network's own outputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::galerkin::{DelayHistory, GalerkinModel, GalerkinState, ModelParams, Simulation};
use crate::reservoir::{EsnConfig, InputBlock, Reservoir, TrainDiagnostics};
use crate::ridge;
use crate::series::TimeSeries;

/// Keeps the first `rom_modes` (η, μ) pairs of a full flat state.
pub fn project(u_full: &[f64], rom_modes: usize) -> Result<GalerkinState> {
    let full = GalerkinState::from_flat(u_full)?;
    if rom_modes > full.n_modes() {
        return Err(Error::InvalidArgument(format!(
            "ROM has {rom_modes} modes but the full state only {}",
            full.n_modes()
        )));
    }
    Ok(GalerkinState {
        eta: full.eta[..rom_modes].to_vec(),
        mu: full.mu[..rom_modes].to_vec(),
    })
}

/// Zero-pads a ROM state to the flat layout of `full_modes` modes.
pub fn embed(state: &GalerkinState, full_modes: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2 * full_modes];
    let n = state.n_modes().min(full_modes);
    v[..n].copy_from_slice(&state.eta[..n]);
    v[full_modes..full_modes + n].copy_from_slice(&state.mu[..n]);
    v
}

/// One ROM step from the projection of `u_full`.
///
/// The projected flame velocity of `u_full` is pushed onto `rom_delay` as the
/// sample for the current time, then the ROM is integrated one RK4 step and
/// the result is embedded back into the full dimension.
pub fn rom_one_step(
    u_full: &[f64],
    rom_delay: &mut DelayHistory,
    rom_params: &ModelParams,
    dt: f64,
) -> Result<Vec<f64>> {
    let model = GalerkinModel::new(*rom_params)?;
    rom_step_with(&model, u_full, rom_delay, dt)
}

fn rom_step_with(model: &GalerkinModel, u_full: &[f64], rom_delay: &mut DelayHistory, dt: f64) -> Result<Vec<f64>> {
    if (rom_delay.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::InvalidArgument(format!(
            "ROM delay spacing {} differs from step {dt}",
            rom_delay.dt()
        )));
    }
    let full_modes = u_full.len() / 2;
    let state = project(u_full, model.n_modes())?;
    let (u, du) = model.history_sample(&state);
    rom_delay.push(u, du);
    let t = rom_delay.last_time().expect("just pushed");
    let (next, _) = model.rk4_step(&state, rom_delay, t, dt)?;
    if !next.is_finite() {
        return Err(Error::NumericalBlowup {
            time: t + dt,
            magnitude: f64::NAN,
            bound: f64::INFINITY,
        });
    }
    Ok(embed(&next, full_modes))
}

/// A fresh ROM delay buffer whose first push lands at `t0`.
pub fn fresh_rom_delay(rom_params: &ModelParams, t0: f64, dt: f64) -> Result<DelayHistory> {
    DelayHistory::zeros(t0 - dt, dt, rom_params.tau.max(dt))
}

/// Autonomous ROM forecast, the physics-only baseline.
///
/// The ROM delay buffer is filled from the projections of `warm_inputs`, the
/// ROM is started from the projection of the last warm sample, and `n_steps`
/// embedded states after it are returned.
pub fn rom_forecast(
    rom_params: &ModelParams,
    full_modes: usize,
    warm_inputs: &TimeSeries,
    n_steps: usize,
) -> Result<TimeSeries> {
    let dt = warm_inputs.dt;
    let model = GalerkinModel::new(*rom_params)?;
    let needed = min_warm_samples(rom_params, dt);
    if warm_inputs.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: warm_inputs.len(),
        });
    }
    let mut history = fresh_rom_delay(rom_params, warm_inputs.t0, dt)?;
    let mut last = GalerkinState::zeros(rom_params.n_modes);
    for u in &warm_inputs.states {
        last = project(u, rom_params.n_modes)?;
        let (uf, du) = model.history_sample(&last);
        history.push(uf, du);
    }
    let t_last = history.last_time().expect("non-empty warm-up");
    let mut sim = Simulation::new(*rom_params, last, history, t_last, dt)?;
    let mut states = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        sim.step()?;
        states.push(embed(sim.state(), full_modes));
    }
    TimeSeries::new(dt, warm_inputs.time(warm_inputs.len()), states)
}

/// Warm-up samples needed to cover the ROM delay.
pub fn min_warm_samples(rom_params: &ModelParams, dt: f64) -> usize {
    (rom_params.tau / dt - 1e-9).ceil() as usize + 1
}

/// Reservoir input partition: the first half of the rows reads the data
/// input `u`, the second half the ROM output.
pub fn hybrid_partition(n_reservoir: usize, full_dim: usize) -> Vec<InputBlock> {
    let half = n_reservoir / 2;
    vec![
        InputBlock {
            rows: 0..half,
            cols: 0..full_dim,
        },
        InputBlock {
            rows: half..n_reservoir,
            cols: full_dim..2 * full_dim,
        },
    ]
}

/// Reservoir plus ROM.
#[derive(Debug, Clone)]
pub struct HybridEsn {
    reservoir: Reservoir,
    rom_model: GalerkinModel,
    rom_delay: DelayHistory,
    full_dim: usize,
    rom_dim: usize,
    dt: f64,
}

impl HybridEsn {
    /// Untrained hybrid network. `config.n_inputs` must equal twice the full
    /// dimension and `config.n_outputs` the full dimension.
    pub fn new(config: &EsnConfig, rom_params: ModelParams, full_modes: usize, dt: f64) -> Result<Self> {
        let full_dim = 2 * full_modes;
        if rom_params.n_modes > full_modes {
            return Err(Error::InvalidArgument(format!(
                "ROM modes {} exceed full modes {full_modes}",
                rom_params.n_modes
            )));
        }
        if config.n_inputs != 2 * full_dim {
            return Err(Error::DimensionMismatch {
                what: "hybrid reservoir inputs (data + ROM)",
                expected: 2 * full_dim,
                got: config.n_inputs,
            });
        }
        if config.n_outputs != full_dim {
            return Err(Error::DimensionMismatch {
                what: "hybrid outputs",
                expected: full_dim,
                got: config.n_outputs,
            });
        }
        if config.n_reservoir < 2 {
            return Err(Error::InvalidArgument("hybrid reservoir needs at least two neurons".into()));
        }
        let blocks = hybrid_partition(config.n_reservoir, full_dim);
        let reservoir = Reservoir::init(config, Some(&blocks))?;
        Self::from_reservoir(reservoir, rom_params, full_modes, dt)
    }

    /// Wraps an existing reservoir (e.g. loaded from a checkpoint).
    pub fn from_reservoir(reservoir: Reservoir, rom_params: ModelParams, full_modes: usize, dt: f64) -> Result<Self> {
        let full_dim = 2 * full_modes;
        if reservoir.n_inputs() != 2 * full_dim {
            return Err(Error::DimensionMismatch {
                what: "hybrid reservoir inputs (data + ROM)",
                expected: 2 * full_dim,
                got: reservoir.n_inputs(),
            });
        }
        if let Some(w_out) = reservoir.w_out() {
            if w_out.ncols() != reservoir.n_reservoir() + full_dim || w_out.nrows() != full_dim {
                return Err(Error::DimensionMismatch {
                    what: "hybrid readout features",
                    expected: reservoir.n_reservoir() + full_dim,
                    got: w_out.ncols(),
                });
            }
        }
        let rom_model = GalerkinModel::new(rom_params)?;
        let rom_delay = fresh_rom_delay(&rom_params, 0.0, dt)?;
        Ok(Self {
            reservoir,
            rom_model,
            rom_delay,
            full_dim,
            rom_dim: 2 * rom_params.n_modes,
            dt,
        })
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn reservoir_mut(&mut self) -> &mut Reservoir {
        &mut self.reservoir
    }

    pub fn rom_params(&self) -> &ModelParams {
        self.rom_model.params()
    }

    pub fn rom_delay(&self) -> &DelayHistory {
        &self.rom_delay
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn rom_dim(&self) -> usize {
        self.rom_dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Readout feature dimension `N_x + full_dim`.
    pub fn feature_dim(&self) -> usize {
        self.reservoir.n_reservoir() + self.full_dim
    }

    fn reset(&mut self, t0: f64) -> Result<()> {
        self.reservoir.reset();
        self.rom_delay = fresh_rom_delay(self.rom_model.params(), t0, self.dt)?;
        Ok(())
    }

    /// Advances ROM and reservoir on input `u`; returns the readout features
    /// `[x; ŷ_ROM]`.
    fn advance(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.full_dim {
            return Err(Error::DimensionMismatch {
                what: "hybrid input",
                expected: self.full_dim,
                got: u.len(),
            });
        }
        let rom = rom_step_with(&self.rom_model, u, &mut self.rom_delay, self.dt)?;
        let mut input = Vec::with_capacity(2 * self.full_dim);
        input.extend_from_slice(u);
        input.extend_from_slice(&rom);
        let mut features = Vec::with_capacity(self.feature_dim());
        features.extend_from_slice(self.reservoir.step(&input)?.as_slice());
        features.extend_from_slice(&rom);
        Ok(features)
    }

    /// Teacher-forced feature and target matrices, discarding `washout`
    /// pairs. Both the reservoir and the ROM buffer start from zero.
    pub fn collect_features(&mut self, data: &TimeSeries, washout: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = data.len();
        if n < washout + 2 {
            return Err(Error::InsufficientData {
                needed: washout + 2,
                got: n,
            });
        }
        if (data.dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidArgument(format!(
                "data spacing {} differs from model step {}",
                data.dt, self.dt
            )));
        }
        self.reset(data.t0)?;
        let n_cols = n - washout - 1;
        let mut x = DMatrix::zeros(self.feature_dim(), n_cols);
        let mut y = DMatrix::zeros(self.full_dim, n_cols);
        for k in 0..n - 1 {
            let features = self.advance(&data.states[k])?;
            if k >= washout {
                let col = k - washout;
                x.set_column(col, &DVector::from_vec(features));
                y.set_column(col, &DVector::from_column_slice(&data.states[k + 1]));
            }
        }
        Ok((x, y))
    }

    /// Ridge-trains the readout on `data` (teacher forcing).
    pub fn train(&mut self, data: &TimeSeries, washout: usize, gamma: f64) -> Result<TrainDiagnostics> {
        let (x, y) = self.collect_features(data, washout)?;
        let w_out = ridge::train_readout(&x, &y, gamma)?;
        let diag = TrainDiagnostics {
            mse: ridge::mean_squared_error(&w_out, &x, &y),
            readout_norm: w_out.norm(),
            n_samples: x.ncols(),
        };
        self.reservoir.set_w_out(w_out);
        Ok(diag)
    }

    /// Teacher-forces `warm_inputs`; returns the prediction for the sample
    /// following the last warm input.
    pub fn warm_up(&mut self, warm_inputs: &TimeSeries) -> Result<Vec<f64>> {
        if self.reservoir.w_out().is_none() {
            return Err(Error::UntrainedReadout);
        }
        let needed = min_warm_samples(self.rom_model.params(), self.dt);
        if warm_inputs.len() < needed {
            return Err(Error::InsufficientData {
                needed,
                got: warm_inputs.len(),
            });
        }
        self.reset(warm_inputs.t0)?;
        let mut features = Vec::new();
        for u in &warm_inputs.states {
            features = self.advance(u)?;
        }
        self.reservoir.readout(&features)
    }

    /// Closed loop from a pending prediction `next`: emits it, feeds it back,
    /// and repeats `n_steps` times.
    pub fn run_autonomous(&mut self, mut next: Vec<f64>, n_steps: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            if k + 1 < n_steps {
                let features = self.advance(&next)?;
                let following = self.reservoir.readout(&features)?;
                out.push(std::mem::replace(&mut next, following));
            } else {
                out.push(std::mem::take(&mut next));
            }
        }
        Ok(out)
    }

    /// Warm-up followed by `n_steps` closed-loop outputs.
    pub fn predict(&mut self, warm_inputs: &TimeSeries, n_steps: usize) -> Result<TimeSeries> {
        let first = self.warm_up(warm_inputs)?;
        let out = self.run_autonomous(first, n_steps)?;
        TimeSeries::new(self.dt, warm_inputs.time(warm_inputs.len()), out)
    }
}

/// Builds and trains a hybrid network on `data`.
pub fn hesn_train(
    data: &TimeSeries,
    config: &EsnConfig,
    rom_params: &ModelParams,
) -> Result<(HybridEsn, TrainDiagnostics)> {
    let full_modes = data.dim() / 2;
    let mut model = HybridEsn::new(config, *rom_params, full_modes, data.dt)?;
    let diag = model.train(data, config.washout, config.gamma)?;
    Ok((model, diag))
}

/// Closed-loop hybrid prediction.
pub fn hesn_predict(model: &mut HybridEsn, warm_inputs: &TimeSeries, n_steps: usize) -> Result<TimeSeries> {
    model.predict(warm_inputs, n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(n_modes: usize, n: usize) -> TimeSeries {
        let p = ModelParams::default().with_modes(n_modes);
        let mut sim = Simulation::with_zero_history(p, GalerkinState::unit_first_mode(n_modes), 0.01).unwrap();
        sim.advance(5000).unwrap();
        sim.record(n - 1).unwrap()
    }

    fn config(full_dim: usize, seed: u64) -> EsnConfig {
        EsnConfig {
            n_reservoir: 40,
            density: 0.1,
            spectral_radius: 0.3,
            n_inputs: 2 * full_dim,
            n_outputs: full_dim,
            washout: 50,
            seed,
            ..EsnConfig::default()
        }
    }

    #[test]
    fn zero_input_gives_zero_prediction() {
        let p = ModelParams::new(1, 7.0, 0.2);
        let mut delay = fresh_rom_delay(&p, 0.0, 0.01).unwrap();
        let y = rom_one_step(&[0.0; 20], &mut delay, &p, 0.01).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_zero_pads_higher_modes() {
        let data = truth(10, 30);
        let p = ModelParams::new(1, 7.0, 0.2);
        let mut delay = fresh_rom_delay(&p, data.t0, 0.01).unwrap();
        for u in &data.states {
            let y = rom_one_step(u, &mut delay, &p, 0.01).unwrap();
            assert_eq!(y.len(), 20);
            assert!(y[0] != 0.0);
            for j in 1..10 {
                assert_eq!(y[j], 0.0);
                assert_eq!(y[10 + j], 0.0);
            }
        }
    }

    #[test]
    fn perfect_model_reproduces_next_sample() {
        let data = truth(10, 200);
        let p = ModelParams::default();
        let mut delay = fresh_rom_delay(&p, data.t0, 0.01).unwrap();
        for k in 0..data.len() - 1 {
            let y = rom_one_step(&data.states[k], &mut delay, &p, 0.01).unwrap();
            // once the buffer holds a full delay of true samples
            if k > 25 {
                let next = &data.states[k + 1];
                let err: f64 = y.iter().zip(next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let scale: f64 = next.iter().map(|b| b * b).sum::<f64>().sqrt();
                assert!(err <= 1e-8 * scale, "step {k}: relative error {}", err / scale);
            }
        }
    }

    #[test]
    fn feature_matrix_dimensions() {
        let data = truth(3, 300);
        let cfg = config(6, 1);
        let (mut model, diag) = hesn_train(&data, &cfg, &ModelParams::default().with_modes(1)).unwrap();
        assert_eq!(model.feature_dim(), 40 + 6);
        assert!(diag.mse.is_finite() && diag.mse >= 0.0);
        assert_eq!(diag.n_samples, 300 - 50 - 1);
        let (x, y) = model.collect_features(&data, 50).unwrap();
        assert_eq!((x.nrows(), y.nrows()), (46, 6));
    }

    #[test]
    fn training_is_deterministic() {
        let data = truth(2, 300);
        let rom = ModelParams::default().with_modes(1);
        let (a, da) = hesn_train(&data, &config(4, 9), &rom).unwrap();
        let (b, db) = hesn_train(&data, &config(4, 9), &rom).unwrap();
        assert_eq!(da, db);
        assert_eq!(a.reservoir(), b.reservoir());
    }

    #[test]
    fn rejects_bad_dimensions() {
        let rom = ModelParams::default().with_modes(1);
        let mut cfg = config(20, 0);
        cfg.n_inputs = 20;
        assert!(matches!(HybridEsn::new(&cfg, rom, 10, 0.01), Err(Error::DimensionMismatch { .. })));
        let too_big = ModelParams::default().with_modes(11);
        assert!(HybridEsn::new(&config(20, 0), too_big, 10, 0.01).is_err());
    }

    #[test]
    fn warm_up_needs_a_full_delay() {
        let data = truth(2, 300);
        let rom = ModelParams::default().with_modes(1);
        let (mut model, _) = hesn_train(&data, &config(4, 3), &rom).unwrap();
        let short = data.tail(5);
        assert!(matches!(model.predict(&short, 10), Err(Error::InsufficientData { .. })));
        let out = model.predict(&data.tail(100), 10).unwrap();
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn negating_state_does_not_negate_hybrid_trajectory() {
        let data = truth(2, 600);
        let rom = ModelParams::default().with_modes(1);
        let (mut model, _) = hesn_train(&data, &config(4, 5), &rom).unwrap();
        let first = model.warm_up(&data.tail(200)).unwrap();
        let mut flipped = model.clone();
        let x = model.reservoir().state().clone();
        flipped.reservoir_mut().set_state(-x).unwrap();
        let a = model.run_autonomous(first.clone(), 200).unwrap();
        let b = flipped.run_autonomous(first.iter().map(|v| -v).collect(), 200).unwrap();
        let asymmetric = a.iter().zip(&b).any(|(p, q)| p.iter().zip(q).any(|(u, v)| *u != -*v));
        assert!(asymmetric);
    }

    #[test]
    fn rom_forecast_shape() {
        let data = truth(10, 100);
        let rom = ModelParams::default().with_modes(1);
        let f = rom_forecast(&rom, 10, &data, 50).unwrap();
        assert_eq!(f.len(), 50);
        assert_eq!(f.dim(), 20);
        assert!((f.t0 - data.time(100)).abs() < 1e-9);
    }
}
