//! Leading Lyapunov exponent of the delayed Galerkin model by the
//! two-trajectory (Benettin) method.
//!
//! The phase space of a delay system includes the history segment, so the
//! separation vector spans the modal amplitudes and the buffered flame
//! velocities. Renormalisation rescales every stored difference by the same
//! factor, which keeps the perturbed history consistent with itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinState, ModelParams, Simulation};

/// Options for [`lyapunov_leading_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovOptions {
    pub dt: f64,
    /// Time integrated on the attractor, after the spin-up.
    pub t_total: f64,
    pub renorm_interval: f64,
    /// Integration time before the perturbation is introduced.
    pub spin_up: f64,
    /// Fraction of renormalisation intervals excluded from the average.
    pub discard_fraction: f64,
    pub initial_separation: f64,
    pub seed: u64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_total: 3000.0,
            renorm_interval: 1.0,
            spin_up: 200.0,
            discard_fraction: 0.1,
            initial_separation: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// Running estimate after each renormalisation past the discarded part.
    pub running: Vec<f64>,
    /// False when the running estimate moved by more than 20% over the last
    /// half of the run.
    pub converged: bool,
    pub negative_root_events: u64,
}

/// Benettin estimate with default spin-up and discard settings.
pub fn lyapunov_leading(
    params: &ModelParams,
    dt: f64,
    t_total: f64,
    renorm_interval: f64,
    seed: u64,
) -> Result<LyapunovEstimate> {
    lyapunov_leading_with(
        params,
        &LyapunovOptions {
            dt,
            t_total,
            renorm_interval,
            seed,
            ..LyapunovOptions::default()
        },
    )
}

pub fn lyapunov_leading_with(params: &ModelParams, opts: &LyapunovOptions) -> Result<LyapunovEstimate> {
    let steps_per_renorm = (opts.renorm_interval / opts.dt).round() as usize;
    if steps_per_renorm == 0 {
        return Err(Error::InvalidArgument(format!(
            "renormalisation interval {} shorter than the step {}",
            opts.renorm_interval, opts.dt
        )));
    }
    let n_renorm = (opts.t_total / opts.renorm_interval).floor() as usize;
    let n_discard = (n_renorm as f64 * opts.discard_fraction).floor() as usize;
    if n_renorm < 4 || n_renorm <= n_discard + 1 {
        return Err(Error::InvalidArgument(format!(
            "t_total = {} too short for renormalisation interval {}",
            opts.t_total, opts.renorm_interval
        )));
    }

    let mut reference = Simulation::with_zero_history(
        *params,
        GalerkinState::unit_first_mode(params.n_modes),
        opts.dt,
    )?;
    reference.advance((opts.spin_up / opts.dt).round() as usize)?;

    let mut perturbed = reference.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    {
        let (state, history) = perturbed.parts_mut();
        for v in state.eta.iter_mut().chain(state.mu.iter_mut()) {
            *v += rng.random_range(-1.0..1.0);
        }
        for (u, _) in history.samples_mut() {
            *u += rng.random_range(-1.0..1.0);
        }
    }
    // the random offsets are O(1); shrink them to the requested size
    rescale(&reference, &mut perturbed, opts.initial_separation);

    let d0 = opts.initial_separation;
    let mut log_sum = 0.0;
    let mut running = Vec::with_capacity(n_renorm - n_discard);
    for k in 0..n_renorm {
        reference.advance(steps_per_renorm)?;
        perturbed.advance(steps_per_renorm)?;
        let d = rescale(&reference, &mut perturbed, d0);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "separation collapsed to {d} during Lyapunov estimation"
            )));
        }
        if k >= n_discard {
            log_sum += (d / d0).ln();
            let elapsed = (k + 1 - n_discard) as f64 * steps_per_renorm as f64 * opts.dt;
            running.push(log_sum / elapsed);
        }
    }

    let exponent = *running.last().expect("at least one interval");
    let tail = &running[running.len() / 2..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let converged = hi - lo <= 0.2 * exponent.abs();

    Ok(LyapunovEstimate {
        exponent,
        running,
        converged,
        negative_root_events: reference.negative_root_events(),
    })
}

/// Rescales the separation of `perturbed` from `reference` to `target` and
/// returns the separation before rescaling.
fn rescale(reference: &Simulation, perturbed: &mut Simulation, target: f64) -> f64 {
    let ref_state = reference.state();
    let ref_hist: Vec<(f64, f64)> = reference.history().samples().map(|(_, u, du)| (u, du)).collect();
    let (state, history) = perturbed.parts_mut();

    let mut sq = 0.0;
    for (a, b) in state.eta.iter().zip(&ref_state.eta).chain(state.mu.iter().zip(&ref_state.mu)) {
        sq += (a - b) * (a - b);
    }
    for ((u, _), (ru, _)) in history.samples_mut().zip(&ref_hist) {
        sq += (*u - ru) * (*u - ru);
    }
    let d = sq.sqrt();
    let factor = target / d;

    for (a, b) in state
        .eta
        .iter_mut()
        .zip(&ref_state.eta)
        .chain(state.mu.iter_mut().zip(&ref_state.mu))
    {
        *a = b + (*a - b) * factor;
    }
    for ((u, du), (ru, rdu)) in history.samples_mut().zip(&ref_hist) {
        *u = ru + (*u - ru) * factor;
        *du = rdu + (*du - rdu) * factor;
    }
    d
}
