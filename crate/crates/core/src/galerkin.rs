//! Galerkin-projected thermoacoustic oscillator with a time-delayed
//! King's-law heat source.
//!
//! The acoustic velocity and pressure are expanded on `N_g` cosine/sine
//! modes, giving `2 N_g` coupled oscillators
//!
//! ```text
//! dη_j/dt = jπ μ_j
//! dμ_j/dt = -jπ η_j - ζ_j μ_j - 2 q̇ sin(jπ x_f)
//! q̇(t)    = β (sqrt(1 + u_f(t - τ)) - 1),   u_f = Σ η_j cos(jπ x_f)
//! ```
//!
//! Integration is fixed-step RK4 (method of steps). The delayed flame
//! velocity is read from a [`DelayHistory`] that stores `u_f` and its time
//! derivative on the integration grid; off-grid RK4 stages use cubic Hermite
//! interpolation.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Default magnitude bound for the blow-up guard.
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e6;

/// Treatment of a negative square-root argument `1 + u_f < 0` in King's law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KingLaw {
    /// β (√|1 + u_f| − 1).
    #[default]
    Absolute,
    /// β (√max(1 + u_f, 0) − 1), bounded below by −β.
    Clamped,
}

impl KingLaw {
    pub fn heat_release(self, u_f_delayed: f64, beta: f64) -> f64 {
        let arg = 1.0 + u_f_delayed;
        let root = match self {
            KingLaw::Absolute => arg.abs().sqrt(),
            KingLaw::Clamped => arg.max(0.0).sqrt(),
        };
        beta * (root - 1.0)
    }
}

/// Physical parameters of the Galerkin model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n_modes: usize,
    pub beta: f64,
    pub tau: f64,
    pub x_f: f64,
    pub damping_c1: f64,
    pub damping_c2: f64,
    /// Power of `j` multiplying `damping_c1`.
    pub damping_power: f64,
    pub king_law: KingLaw,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_modes: 10,
            beta: 7.0,
            tau: 0.2,
            x_f: 0.2,
            damping_c1: 0.1,
            damping_c2: 0.06,
            damping_power: 2.0,
            king_law: KingLaw::Absolute,
        }
    }
}

impl ModelParams {
    pub fn new(n_modes: usize, beta: f64, tau: f64) -> Self {
        Self {
            n_modes,
            beta,
            tau,
            ..Self::default()
        }
    }

    /// Same parameters with a different number of modes.
    pub fn with_modes(self, n_modes: usize) -> Self {
        Self { n_modes, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_modes < 1 {
            return bad("n_modes must be at least 1".into());
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.x_f > 0.0 && self.x_f < 1.0) {
            return bad(format!("x_f must lie in (0, 1), got {}", self.x_f));
        }
        if !(self.damping_c1 >= 0.0 && self.damping_c2 >= 0.0) {
            return bad("damping coefficients must be nonnegative".into());
        }
        if !(self.damping_power >= 0.0) || !self.damping_power.is_finite() {
            return bad(format!("damping power must be nonnegative, got {}", self.damping_power));
        }
        Ok(())
    }

    /// Modal damping ζ_j = c1·j^p + c2·√j (1-based mode index, p =
    /// `damping_power`).
    pub fn damping(&self, j: usize) -> f64 {
        let j = j as f64;
        self.damping_c1 * j.powf(self.damping_power) + self.damping_c2 * j.sqrt()
    }

    /// State dimension `2 N_g`.
    pub fn state_dim(&self) -> usize {
        2 * self.n_modes
    }
}

/// Modal amplitudes of the acoustic field.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
}

impl GalerkinState {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            eta: vec![0.0; n_modes],
            mu: vec![0.0; n_modes],
        }
    }

    /// The reference initial condition η₁ = 1, everything else zero.
    pub fn unit_first_mode(n_modes: usize) -> Self {
        let mut s = Self::zeros(n_modes);
        s.eta[0] = 1.0;
        s
    }

    pub fn n_modes(&self) -> usize {
        self.eta.len()
    }

    /// Builds a state from the flat ordering `(η_1..η_n, μ_1..μ_n)`.
    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(2) || v.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "flat Galerkin state must have even, nonzero length, got {}",
                v.len()
            )));
        }
        let n = v.len() / 2;
        Ok(Self {
            eta: v[..n].to_vec(),
            mu: v[n..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.n_modes());
        v.extend_from_slice(&self.eta);
        v.extend_from_slice(&self.mu);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.eta.iter().chain(&self.mu).all(|v| v.is_finite())
    }

    fn check(&self, n_modes: usize) -> Result<()> {
        if self.eta.len() != n_modes || self.mu.len() != n_modes {
            return Err(Error::DimensionMismatch {
                what: "Galerkin state modes",
                expected: n_modes,
                got: self.eta.len().max(self.mu.len()),
            });
        }
        Ok(())
    }

    fn max_abs(&self) -> f64 {
        self.eta
            .iter()
            .chain(&self.mu)
            .fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }

    /// `self + h * d`, component-wise.
    fn axpy(&self, h: f64, d: &GalerkinState) -> GalerkinState {
        GalerkinState {
            eta: self.eta.iter().zip(&d.eta).map(|(a, b)| a + h * b).collect(),
            mu: self.mu.iter().zip(&d.mu).map(|(a, b)| a + h * b).collect(),
        }
    }
}

/// Acoustic velocity at `x_f`: Σ η_j cos(jπ x_f).
pub fn flame_velocity(state: &GalerkinState, x_f: f64) -> Result<f64> {
    if !(x_f > 0.0 && x_f < 1.0) {
        return Err(Error::InvalidArgument(format!("x_f must lie in (0, 1), got {x_f}")));
    }
    Ok(state
        .eta
        .iter()
        .enumerate()
        .map(|(i, e)| e * ((i + 1) as f64 * PI * x_f).cos())
        .sum())
}

/// Modified King's law q̇ = β (√|1 + u_f| − 1) with the default
/// [`KingLaw::Absolute`] treatment of negative arguments.
pub fn heat_release(u_f_delayed: f64, beta: f64) -> f64 {
    KingLaw::default().heat_release(u_f_delayed, beta)
}

/// Acoustic energy ∫₀¹ ½(u² + p²) dx = ¼ Σ (η_j² + μ_j²).
pub fn acoustic_energy(state: &GalerkinState) -> f64 {
    0.25 * state.eta.iter().chain(&state.mu).map(|v| v * v).sum::<f64>()
}

/// [`acoustic_energy`] on the flat `(η; μ)` layout.
pub fn acoustic_energy_flat(v: &[f64]) -> f64 {
    0.25 * v.iter().map(|x| x * x).sum::<f64>()
}

/// Right-hand side of the Galerkin system for a given delayed flame velocity.
pub fn rhs(state: &GalerkinState, u_f_delayed: f64, params: &ModelParams) -> Result<GalerkinState> {
    state.check(params.n_modes)?;
    Ok(GalerkinModel::new(*params)?.derivative(state, u_f_delayed))
}

/// [`ModelParams`] with the per-mode constants precomputed.
#[derive(Debug, Clone)]
pub struct GalerkinModel {
    params: ModelParams,
    omega: Vec<f64>,
    zeta: Vec<f64>,
    cos_f: Vec<f64>,
    sin_f: Vec<f64>,
}

impl GalerkinModel {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_modes;
        let modes = 1..=n;
        Ok(Self {
            params,
            omega: modes.clone().map(|j| j as f64 * PI).collect(),
            zeta: modes.clone().map(|j| params.damping(j)).collect(),
            cos_f: modes.clone().map(|j| (j as f64 * PI * params.x_f).cos()).collect(),
            sin_f: modes.map(|j| (j as f64 * PI * params.x_f).sin()).collect(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_modes(&self) -> usize {
        self.params.n_modes
    }

    /// u_f = Σ η_j cos(jπ x_f).
    pub fn flame_velocity(&self, state: &GalerkinState) -> f64 {
        state.eta.iter().zip(&self.cos_f).map(|(e, c)| e * c).sum()
    }

    /// du_f/dt = Σ jπ μ_j cos(jπ x_f), exact along solutions of the model.
    pub fn flame_velocity_rate(&self, state: &GalerkinState) -> f64 {
        state
            .mu
            .iter()
            .zip(&self.omega)
            .zip(&self.cos_f)
            .map(|((m, w), c)| w * m * c)
            .sum()
    }

    /// History sample `(u_f, du_f/dt)` for a state.
    pub fn history_sample(&self, state: &GalerkinState) -> (f64, f64) {
        (self.flame_velocity(state), self.flame_velocity_rate(state))
    }

    pub fn derivative(&self, state: &GalerkinState, u_f_delayed: f64) -> GalerkinState {
        let q = self.params.king_law.heat_release(u_f_delayed, self.params.beta);
        let n = self.n_modes();
        let mut d = GalerkinState::zeros(n);
        for j in 0..n {
            d.eta[j] = self.omega[j] * state.mu[j];
            d.mu[j] = -self.omega[j] * state.eta[j] - self.zeta[j] * state.mu[j] - 2.0 * q * self.sin_f[j];
        }
        d
    }

    /// One RK4 step of length `dt` from `state` at time `t`. The history must
    /// cover `[t - τ, t - τ + dt]`; nothing is pushed onto it.
    ///
    /// Returns the new state and the number of stage evaluations in which the
    /// King's-law argument `1 + u_f` was negative.
    pub fn rk4_step(
        &self,
        state: &GalerkinState,
        history: &DelayHistory,
        t: f64,
        dt: f64,
    ) -> Result<(GalerkinState, u32)> {
        let tau = self.params.tau;
        let ud0 = history.value_at(t - tau)?;
        let ud_half = history.value_at(t - tau + 0.5 * dt)?;
        let ud1 = history.value_at(t - tau + dt)?;
        let clamps = [ud0, ud_half, ud_half, ud1].iter().filter(|&&u| 1.0 + u < 0.0).count() as u32;

        let k1 = self.derivative(state, ud0);
        let k2 = self.derivative(&state.axpy(0.5 * dt, &k1), ud_half);
        let k3 = self.derivative(&state.axpy(0.5 * dt, &k2), ud_half);
        let k4 = self.derivative(&state.axpy(dt, &k3), ud1);

        let n = self.n_modes();
        let mut next = state.clone();
        let w = dt / 6.0;
        for j in 0..n {
            next.eta[j] += w * (k1.eta[j] + 2.0 * k2.eta[j] + 2.0 * k3.eta[j] + k4.eta[j]);
            next.mu[j] += w * (k1.mu[j] + 2.0 * k2.mu[j] + 2.0 * k3.mu[j] + k4.mu[j]);
        }
        Ok((next, clamps))
    }
}

/// Uniformly spaced buffer of `(u_f, du_f/dt)` samples used to evaluate the
/// delayed flame velocity.
///
/// Sample `k` sits at time `start + k·dt`; samples older than the horizon are
/// dropped as new ones arrive, so the buffer covers `[t - horizon, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistory {
    dt: f64,
    horizon: f64,
    start: f64,
    first_index: u64,
    samples: VecDeque<(f64, f64)>,
}

impl DelayHistory {
    /// An empty buffer whose first pushed sample will be at time `t0`.
    pub fn new(t0: f64, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("history spacing must be positive, got {dt}")));
        }
        if !(horizon >= dt) {
            return Err(Error::InvalidArgument(format!(
                "history horizon {horizon} must be at least one step {dt}"
            )));
        }
        Ok(Self {
            dt,
            horizon,
            start: t0,
            first_index: 0,
            samples: VecDeque::new(),
        })
    }

    /// Zero history on `[t0 - horizon, t0]`, newest sample at `t0`.
    pub fn zeros(t0: f64, dt: f64, horizon: f64) -> Result<Self> {
        let k = (horizon / dt - 1e-9).ceil() as usize;
        let mut h = Self::new(t0 - k as f64 * dt, dt, horizon)?;
        for _ in 0..=k {
            h.push(0.0, 0.0);
        }
        Ok(h)
    }

    /// Overwrites the newest sample.
    pub fn set_last(&mut self, u_f: f64, du_f: f64) {
        if let Some(last) = self.samples.back_mut() {
            *last = (u_f, du_f);
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn time_of(&self, index: u64) -> f64 {
        self.start + index as f64 * self.dt
    }

    /// Time of the next sample to be pushed.
    pub fn next_time(&self) -> f64 {
        self.time_of(self.first_index + self.samples.len() as u64)
    }

    /// Time of the most recent sample.
    pub fn last_time(&self) -> Option<f64> {
        if self.samples.is_empty() {
            None
        } else {
            Some(self.time_of(self.first_index + self.samples.len() as u64 - 1))
        }
    }

    /// `(time, u_f, du_f/dt)` triples, oldest first.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.samples
            .iter()
            .enumerate()
            .map(move |(k, &(u, du))| (self.time_of(self.first_index + k as u64), u, du))
    }

    pub fn samples_mut(&mut self) -> impl Iterator<Item = &mut (f64, f64)> {
        self.samples.iter_mut()
    }

    /// Appends the sample for time [`DelayHistory::next_time`] and drops
    /// samples no longer needed to cover the horizon.
    pub fn push(&mut self, u_f: f64, du_f: f64) {
        self.samples.push_back((u_f, du_f));
        // keep samples at times >= t_last - horizon (plus one guard sample)
        let keep = (self.horizon / self.dt + 1e-9).ceil() as usize + 2;
        while self.samples.len() > keep {
            self.samples.pop_front();
            self.first_index += 1;
        }
    }

    /// Delayed flame velocity at time `t`, exact on grid nodes and cubic
    /// Hermite in between.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let n = self.samples.len();
        if n == 0 {
            return Err(Error::InvalidArgument("delay history is empty".into()));
        }
        let s = (t - self.time_of(self.first_index)) / self.dt;
        let k = s.round();
        if (s - k).abs() < 1e-9 {
            if k >= 0.0 && (k as usize) < n {
                return Ok(self.samples[k as usize].0);
            }
        } else {
            let i = s.floor();
            if i >= 0.0 && (i as usize) + 1 < n {
                let i = i as usize;
                let theta = s - i as f64;
                let (u0, d0) = self.samples[i];
                let (u1, d1) = self.samples[i + 1];
                return Ok(hermite(u0, d0, u1, d1, theta, self.dt));
            }
        }
        Err(Error::InvalidArgument(format!(
            "delay history does not cover t = {t} (spans [{}, {}])",
            self.time_of(self.first_index),
            self.last_time().unwrap_or(f64::NAN)
        )))
    }
}

fn hermite(u0: f64, d0: f64, u1: f64, d1: f64, theta: f64, h: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * u0 + h10 * h * d0 + h01 * u1 + h11 * h * d1
}

/// A running delayed-Galerkin integration: the state, its delay buffer and
/// the clock advance together.
#[derive(Debug, Clone)]
pub struct Simulation {
    model: GalerkinModel,
    state: GalerkinState,
    history: DelayHistory,
    time: f64,
    dt: f64,
    blowup_bound: f64,
    negative_root_events: u64,
}

impl Simulation {
    /// Starts at `t0` from `initial`. The history must end at `t0`; its newest
    /// sample is replaced by the one derived from `initial`.
    pub fn new(
        params: ModelParams,
        initial: GalerkinState,
        mut history: DelayHistory,
        t0: f64,
        dt: f64,
    ) -> Result<Self> {
        let model = GalerkinModel::new(params)?;
        initial.check(params.n_modes)?;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if params.tau < dt * (1.0 - 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "delay tau = {} must be at least one step dt = {dt}",
                params.tau
            )));
        }
        if (history.dt() - dt).abs() > 1e-12 * dt {
            return Err(Error::InvalidArgument(format!(
                "history spacing {} differs from integration step {dt}",
                history.dt()
            )));
        }
        if history.horizon() < params.tau * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "history horizon {} is shorter than tau = {}",
                history.horizon(),
                params.tau
            )));
        }
        let tol = 1e-6 * dt;
        match history.last_time() {
            Some(last) if (last - t0).abs() < tol => {
                let (u, du) = model.history_sample(&initial);
                history.set_last(u, du);
            }
            last => {
                return Err(Error::InvalidArgument(format!(
                    "history ends at {last:?}, which does not line up with t0 = {t0}"
                )))
            }
        }
        Ok(Self {
            model,
            state: initial,
            history,
            time: t0,
            dt,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
            negative_root_events: 0,
        })
    }

    /// Starts from `initial` at `t = 0` with zero flame velocity for `t < 0`.
    pub fn with_zero_history(params: ModelParams, initial: GalerkinState, dt: f64) -> Result<Self> {
        let history = DelayHistory::zeros(0.0, dt, params.tau.max(dt))?;
        Self::new(params, initial, history, 0.0, dt)
    }

    pub fn set_blowup_bound(&mut self, bound: f64) {
        self.blowup_bound = bound;
    }

    pub fn model(&self) -> &GalerkinModel {
        &self.model
    }

    pub fn state(&self) -> &GalerkinState {
        &self.state
    }

    pub fn history(&self) -> &DelayHistory {
        &self.history
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of stage evaluations with a negative King's-law argument.
    pub fn negative_root_events(&self) -> u64 {
        self.negative_root_events
    }

    pub fn into_parts(self) -> (GalerkinState, DelayHistory) {
        (self.state, self.history)
    }

    /// Mutable access to the state and history, used for perturbation
    /// bookkeeping. The caller must keep the newest history sample consistent
    /// with the state.
    pub fn parts_mut(&mut self) -> (&mut GalerkinState, &mut DelayHistory) {
        (&mut self.state, &mut self.history)
    }

    pub fn step(&mut self) -> Result<()> {
        let (next, clamps) = self.model.rk4_step(&self.state, &self.history, self.time, self.dt)?;
        self.negative_root_events += u64::from(clamps);
        let step_index = ((self.time - self.history.start) / self.dt).round() + 1.0;
        self.time = self.history.start + step_index * self.dt;
        let magnitude = next.max_abs();
        if !(magnitude <= self.blowup_bound) {
            return Err(Error::NumericalBlowup {
                time: self.time,
                magnitude,
                bound: self.blowup_bound,
            });
        }
        let (u, du) = self.model.history_sample(&next);
        self.history.push(u, du);
        self.state = next;
        Ok(())
    }

    pub fn advance(&mut self, n_steps: usize) -> Result<()> {
        for _ in 0..n_steps {
            self.step()?;
        }
        Ok(())
    }

    /// Steps `n_steps` times, recording the current state and every new one
    /// (`n_steps + 1` samples).
    pub fn record(&mut self, n_steps: usize) -> Result<TimeSeries> {
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(self.state.to_flat());
        let t0 = self.time;
        for _ in 0..n_steps {
            self.step()?;
            states.push(self.state.to_flat());
        }
        TimeSeries::new(self.dt, t0, states)
    }
}

/// Integrates `n_steps` fixed RK4 steps from `initial`, advancing `history`
/// in lockstep. The returned series holds the initial state plus one sample
/// per step. Integration starts at the time of the history's newest sample,
/// which is overwritten with the sample of `initial`.
pub fn integrate(
    initial: &GalerkinState,
    history: &mut DelayHistory,
    params: &ModelParams,
    dt: f64,
    n_steps: usize,
) -> Result<TimeSeries> {
    integrate_bounded(initial, history, params, dt, n_steps, DEFAULT_BLOWUP_BOUND)
}

/// [`integrate`] with an explicit blow-up bound.
pub fn integrate_bounded(
    initial: &GalerkinState,
    history: &mut DelayHistory,
    params: &ModelParams,
    dt: f64,
    n_steps: usize,
    blowup_bound: f64,
) -> Result<TimeSeries> {
    let t0 = history
        .last_time()
        .ok_or_else(|| Error::InvalidArgument("delay history is empty".into()))?;
    let mut sim = Simulation::new(*params, initial.clone(), history.clone(), t0, dt)?;
    sim.set_blowup_bound(blowup_bound);
    let series = sim.record(n_steps)?;
    *history = sim.history;
    Ok(series)
}
