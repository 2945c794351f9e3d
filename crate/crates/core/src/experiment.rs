//! End-to-end forecasting protocol: truth generation, the three forecasters
//! (ESN, hybrid ESN, ROM alone) and the scores used to compare them.

use crate::error::{Error, Result};
use crate::eval::{relative_error, time_average, Observable};
use crate::galerkin::{GalerkinState, ModelParams, Simulation};
use crate::hybrid::{rom_forecast, HybridEsn};
use crate::reservoir::{EsnConfig, Reservoir, TrainDiagnostics};
use crate::series::TimeSeries;

/// Time discretisation and window lengths of a forecasting experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    /// Truth model.
    pub model: ModelParams,
    pub dt: f64,
    /// Time discarded from the start of the truth run.
    pub transient: f64,
    /// Training samples following the transient.
    pub train_samples: usize,
    /// Closed-loop prediction length (time units).
    pub horizon: f64,
    /// Length of the truth window for the reference average.
    pub reference_time: f64,
    /// Teacher-forced samples before closed-loop prediction.
    pub warmup: usize,
    /// Validation segment after the training data (time units).
    pub validation_time: f64,
    /// Time discarded from the start of a prediction before averaging.
    pub prediction_discard: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            dt: 0.01,
            transient: 200.0,
            train_samples: 5000,
            horizon: 250.0,
            reference_time: 1000.0,
            warmup: 100,
            validation_time: 50.0,
            prediction_discard: 0.0,
        }
    }
}

impl Protocol {
    pub fn prediction_steps(&self) -> usize {
        steps(self.horizon, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.dt > 0.0) || !(self.transient >= 0.0) || !(self.horizon > 0.0) || !(self.reference_time > 0.0) {
            return bad("protocol times must be positive");
        }
        if self.train_samples == 0 {
            return bad("train_samples must be positive");
        }
        if self.warmup == 0 || self.warmup > self.train_samples {
            return bad("warmup must lie in 1..=train_samples");
        }
        if !(self.validation_time >= 0.0) || !(self.prediction_discard >= 0.0) {
            return bad("validation and discard times must be nonnegative");
        }
        Ok(())
    }
}

fn steps(time: f64, dt: f64) -> usize {
    (time / dt - 1e-9).ceil().max(0.0) as usize
}

/// Truth data shared by every forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthData {
    pub train: TimeSeries,
    /// The continuation right after `train`, `horizon` long.
    pub future: TimeSeries,
    /// Mean acoustic energy over the reference window.
    pub reference_average: f64,
    /// RMS of `(η₁, μ₁)` over the reference window.
    pub rms_amplitude: f64,
    pub negative_root_events: u64,
}

impl TruthData {
    /// Validation segment: the first `validation_time` of `future`.
    pub fn validation(&self, protocol: &Protocol) -> TimeSeries {
        let n = steps(protocol.validation_time, protocol.dt).min(self.future.len());
        self.future.slice(0..n)
    }

    pub fn warmup(&self, protocol: &Protocol) -> TimeSeries {
        self.train.tail(protocol.warmup)
    }
}

/// Integrates the truth model from `η₁ = 1` with a zero history, drops the
/// transient and splits the record into training data and its continuation.
pub fn generate_truth(protocol: &Protocol) -> Result<TruthData> {
    protocol.validate()?;
    let p = protocol.model;
    let mut sim = Simulation::with_zero_history(p, GalerkinState::unit_first_mode(p.n_modes), protocol.dt)?;
    sim.advance(steps(protocol.transient, protocol.dt))?;
    let n_ref = steps(protocol.reference_time, protocol.dt);
    let n_future = protocol.prediction_steps().max(steps(protocol.validation_time, protocol.dt));
    let n_total = n_ref.max(protocol.train_samples + n_future);
    let record = sim.record(n_total - 1)?;

    let reference = record.slice(0..n_ref);
    let reference_average = time_average(&reference, &Observable::acoustic_energy(), 0.0)?;
    let n = p.n_modes;
    let rms_amplitude =
        (reference.states.iter().map(|s| s[0] * s[0] + s[n] * s[n]).sum::<f64>() / n_ref as f64).sqrt();
    Ok(TruthData {
        train: record.slice(0..protocol.train_samples),
        future: record.slice(protocol.train_samples..protocol.train_samples + n_future),
        reference_average,
        rms_amplitude,
        negative_root_events: sim.negative_root_events(),
    })
}

/// Forecasting method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Esn,
    Hybrid { rom_modes: usize },
    Rom { rom_modes: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Esn => "esn",
            Method::Hybrid { .. } => "hesn",
            Method::Rom { .. } => "rom",
        }
    }

    /// Reservoir settings used for this method when none are given:
    /// `ρ = 0.1` for the plain ESN and `ρ = 0.3` for the hybrid.
    pub fn default_config(&self) -> EsnConfig {
        let spectral_radius = match self {
            Method::Hybrid { .. } => 0.3,
            _ => 0.1,
        };
        EsnConfig {
            spectral_radius,
            ..EsnConfig::default()
        }
    }

    fn rom_params(&self, model: &ModelParams) -> Result<Option<ModelParams>> {
        match *self {
            Method::Esn => Ok(None),
            Method::Hybrid { rom_modes } | Method::Rom { rom_modes } => {
                if rom_modes == 0 || rom_modes > model.n_modes {
                    return Err(Error::InvalidArgument(format!(
                        "ROM modes must lie in 1..={}, got {rom_modes}",
                        model.n_modes
                    )));
                }
                Ok(Some(model.with_modes(rom_modes)))
            }
        }
    }
}

/// A trained forecaster ready for closed-loop prediction.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Forecaster {
    Esn(Reservoir),
    Hybrid(HybridEsn),
    Rom { params: ModelParams, full_modes: usize },
}

impl Forecaster {
    /// Closed-loop prediction after teacher forcing on `warm`.
    pub fn predict(&mut self, warm: &TimeSeries, n_steps: usize) -> Result<TimeSeries> {
        match self {
            Forecaster::Esn(r) => r.predict_closed_loop(warm, n_steps),
            Forecaster::Hybrid(h) => h.predict(warm, n_steps),
            Forecaster::Rom { params, full_modes } => rom_forecast(params, *full_modes, warm, n_steps),
        }
    }
}

/// Builds and trains `method` on `train`. Input and output widths of
/// `config` are set from the data; `config.seed` selects the reservoir.
pub fn train(method: Method, model: &ModelParams, config: &EsnConfig, train: &TimeSeries) -> Result<Forecaster> {
    train_with_diagnostics(method, model, config, train).map(|(f, _)| f)
}

/// As [`train`], also returning the readout fit (none for the ROM alone).
pub fn train_with_diagnostics(
    method: Method,
    model: &ModelParams,
    config: &EsnConfig,
    train: &TimeSeries,
) -> Result<(Forecaster, Option<TrainDiagnostics>)> {
    let full_dim = train.dim();
    if full_dim != model.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "training data width",
            expected: model.state_dim(),
            got: full_dim,
        });
    }
    let rom = method.rom_params(model)?;
    match (method, rom) {
        (Method::Esn, _) => {
            let cfg = EsnConfig {
                n_inputs: full_dim,
                n_outputs: full_dim,
                ..*config
            };
            let mut r = Reservoir::init(&cfg, None)?;
            let d = r.train(train, cfg.washout, cfg.gamma)?;
            Ok((Forecaster::Esn(r), Some(d)))
        }
        (Method::Hybrid { .. }, Some(rom)) => {
            let cfg = EsnConfig {
                n_inputs: 2 * full_dim,
                n_outputs: full_dim,
                ..*config
            };
            let mut h = HybridEsn::new(&cfg, rom, model.n_modes, train.dt)?;
            let d = h.train(train, cfg.washout, cfg.gamma)?;
            Ok((Forecaster::Hybrid(h), Some(d)))
        }
        (Method::Rom { .. }, Some(rom)) => Ok((
            Forecaster::Rom {
                params: rom,
                full_modes: model.n_modes,
            },
            None,
        )),
        _ => unreachable!("ROM parameters exist for ROM-based methods"),
    }
}

/// One forecast and its ergodic-average score.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub prediction: TimeSeries,
    pub predicted_average: f64,
    pub relative_error: f64,
}

/// Trains `method` with `seed`, predicts over the protocol horizon and
/// scores the mean acoustic energy against the reference.
pub fn forecast(
    protocol: &Protocol,
    truth: &TruthData,
    method: Method,
    config: &EsnConfig,
    seed: u64,
) -> Result<Forecast> {
    let cfg = EsnConfig { seed, ..*config };
    let mut f = train(method, &protocol.model, &cfg, &truth.train)?;
    let prediction = f.predict(&truth.warmup(protocol), protocol.prediction_steps())?;
    score(protocol, truth.reference_average, prediction)
}

fn score(protocol: &Protocol, reference: f64, prediction: TimeSeries) -> Result<Forecast> {
    if let Some(bad) = prediction.states.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::NumericalBlowup {
            time: prediction.time(bad),
            magnitude: f64::INFINITY,
            bound: f64::MAX,
        });
    }
    let predicted_average = time_average(&prediction, &Observable::acoustic_energy(), protocol.prediction_discard)?;
    Ok(Forecast {
        relative_error: relative_error(predicted_average, reference)?,
        predicted_average,
        prediction,
    })
}

/// Validation objective for hyperparameter search: relative error of the
/// mean acoustic energy over the validation segment, against the truth
/// average on that same segment.
pub fn validation_error(
    protocol: &Protocol,
    truth: &TruthData,
    method: Method,
    config: &EsnConfig,
) -> Result<f64> {
    let validation = truth.validation(protocol);
    let reference = time_average(&validation, &Observable::acoustic_energy(), 0.0)?;
    let mut f = train(method, &protocol.model, config, &truth.train)?;
    let prediction = f.predict(&truth.warmup(protocol), validation.len())?;
    let short = Protocol {
        prediction_discard: 0.0,
        ..*protocol
    };
    Ok(score(&short, reference, prediction)?.relative_error)
}

/// `|(η̂₁, μ̂₁) − (η₁, μ₁)|` at every common sample.
pub fn first_mode_error(prediction: &TimeSeries, truth: &TimeSeries, n_modes: usize) -> Vec<f64> {
    prediction
        .states
        .iter()
        .zip(&truth.states)
        .map(|(p, t)| ((p[0] - t[0]).powi(2) + (p[n_modes] - t[n_modes]).powi(2)).sqrt())
        .collect()
}

/// Time from the prediction start at which `error` first exceeds
/// `threshold`, or `None` if it never does.
pub fn decorrelation_time(error: &[f64], threshold: f64, dt: f64) -> Option<f64> {
    error.iter().position(|&e| e > threshold).map(|k| k as f64 * dt)
}

/// Values of component `eta` where component `mu` crosses zero upwards.
///
/// The crossing is located on the cubic through the four samples around
/// the sign change (linear interpolation where fewer are available).
pub fn poincare_crossings(series: &TimeSeries, eta: usize, mu: usize) -> Vec<f64> {
    let s = &series.states;
    let mut out = Vec::new();
    for k in 0..s.len().saturating_sub(1) {
        let (a, b) = (s[k][mu], s[k + 1][mu]);
        if !(a < 0.0 && b >= 0.0) {
            continue;
        }
        let linear = -a / (b - a);
        if k == 0 || k + 2 >= s.len() {
            out.push(s[k][eta] + linear * (s[k + 1][eta] - s[k][eta]));
            continue;
        }
        let m = [s[k - 1][mu], a, b, s[k + 2][mu]];
        let e = [s[k - 1][eta], s[k][eta], s[k + 1][eta], s[k + 2][eta]];
        // Newton on the cubic, nodes at -1, 0, 1, 2
        let mut x = linear;
        for _ in 0..20 {
            let (f, df) = cubic(&m, x);
            if df == 0.0 {
                break;
            }
            let dx = f / df;
            x = (x - dx).clamp(0.0, 1.0);
            if dx.abs() < 1e-14 {
                break;
            }
        }
        out.push(cubic(&e, x).0);
    }
    out
}

/// Lagrange cubic through values at nodes −1, 0, 1, 2 and its derivative.
fn cubic(v: &[f64; 4], x: f64) -> (f64, f64) {
    let l = [
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ];
    let dl = [
        -(3.0 * x * x - 6.0 * x + 2.0) / 6.0,
        (3.0 * x * x - 4.0 * x - 1.0) / 2.0,
        -(3.0 * x * x - 2.0 * x - 2.0) / 2.0,
        (3.0 * x * x - 1.0) / 6.0,
    ];
    (
        (0..4).map(|i| v[i] * l[i]).sum(),
        (0..4).map(|i| v[i] * dl[i]).sum(),
    )
}

/// Spread `max − min` of a set of section values (∞ when empty).
pub fn dispersion(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Half peak-to-peak of components `eta` and `mu`.
pub fn cycle_amplitude(series: &TimeSeries, eta: usize, mu: usize) -> (f64, f64) {
    let half_range = |k: usize| {
        let c = series.component(k);
        dispersion(&c) / 2.0
    };
    (half_range(eta), half_range(mu))
}

/// Outcome of the limit-cycle comparison between a prediction and the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMatch {
    pub periodic: bool,
    /// Relative section spread of the prediction.
    pub section_spread: f64,
    /// Relative amplitude errors in `η₁` and `μ₁`.
    pub amplitude_error: (f64, f64),
}

impl CycleMatch {
    pub fn within(&self, tolerance: f64) -> bool {
        self.periodic && self.amplitude_error.0 <= tolerance && self.amplitude_error.1 <= tolerance
    }
}

/// Compares the late part of `prediction` with `truth` on `(η₁, μ₁)`. The
/// prediction counts as periodic when it crosses the section at least
/// twice and the section values spread by less than `spread_tolerance`
/// relative to the truth amplitude.
pub fn compare_cycles(
    prediction: &TimeSeries,
    truth: &TimeSeries,
    n_modes: usize,
    spread_tolerance: f64,
) -> CycleMatch {
    let late = prediction.slice(prediction.len() / 2..prediction.len());
    let (ta, tm) = cycle_amplitude(truth, 0, n_modes);
    let (pa, pm) = cycle_amplitude(&late, 0, n_modes);
    let crossings = poincare_crossings(&late, 0, n_modes);
    let section_spread = dispersion(&crossings) / ta.max(f64::MIN_POSITIVE);
    CycleMatch {
        periodic: crossings.len() >= 2 && section_spread < spread_tolerance,
        section_spread,
        amplitude_error: ((pa - ta).abs() / ta, (pm - tm).abs() / tm),
    }
}
