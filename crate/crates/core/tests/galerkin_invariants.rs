use hesn_core::experiment::{dispersion, poincare_crossings};
use hesn_core::galerkin::acoustic_energy;
use hesn_core::{GalerkinState, ModelParams, Simulation};
use proptest::prelude::*;

fn linear(n_modes: usize, damped: bool) -> ModelParams {
    let mut p = ModelParams::new(n_modes, 0.0, 0.2);
    if !damped {
        p.damping_c1 = 0.0;
        p.damping_c2 = 0.0;
    }
    p
}

/// Exact flow of the uncoupled damped oscillators at time `t`.
fn exact(p: &ModelParams, s0: &GalerkinState, t: f64) -> GalerkinState {
    let mut out = s0.clone();
    for j in 1..=p.n_modes {
        let w = j as f64 * std::f64::consts::PI;
        let z = p.damping(j);
        // A = [[0, w], [-w, -z]]; e^{At} = e^{at} (cos νt I + sin νt / ν (A - aI))
        let a = -z / 2.0;
        let nu = (w * w - a * a).sqrt();
        let (c, s) = ((nu * t).cos(), (nu * t).sin() / nu);
        let g = (a * t).exp();
        let (e0, m0) = (s0.eta[j - 1], s0.mu[j - 1]);
        out.eta[j - 1] = g * (c * e0 + s * (-a * e0 + w * m0));
        out.mu[j - 1] = g * (c * m0 + s * (-w * e0 + (-z - a) * m0));
    }
    out
}

fn max_error(p: &ModelParams, s0: &GalerkinState, dt: f64, t_end: f64) -> f64 {
    let n = (t_end / dt).round() as usize;
    let mut sim = Simulation::with_zero_history(*p, s0.clone(), dt).unwrap();
    let ts = sim.record(n).unwrap();
    ts.states
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let e = exact(p, s0, k as f64 * dt).to_flat();
            s.iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[test]
fn rk4_is_fourth_order() {
    let p = linear(3, true);
    let s0 = GalerkinState {
        eta: vec![1.0, -0.5, 0.25],
        mu: vec![0.3, 0.2, -0.4],
    };
    let coarse = max_error(&p, &s0, 0.02, 10.0);
    let fine = max_error(&p, &s0, 0.01, 10.0);
    let ratio = coarse / fine;
    assert!((14.0..=18.0).contains(&ratio), "error ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn undamped_energy_is_conserved() {
    let p = linear(1, false);
    let s0 = GalerkinState {
        eta: vec![0.8],
        mu: vec![-1.3],
    };
    let e0 = acoustic_energy(&s0);
    let mut sim = Simulation::with_zero_history(p, s0, 0.01).unwrap();
    let ts = sim.record(10_000).unwrap();
    let drift = ts
        .states
        .iter()
        .map(|s| (hesn_core::galerkin::acoustic_energy_flat(s) - e0).abs() / e0)
        .fold(0.0, f64::max);
    assert!(drift < 1e-6, "relative drift {drift:e}");
}

#[test]
fn limit_cycle_with_one_mode() {
    // The square root in the heat release has an unbounded derivative at
    // u_f = -1, which costs the fixed-step integrator accuracy where the
    // orbit crosses it; the section is resolved at a finer step.
    let dt = 0.001;
    let p = ModelParams::new(1, 7.0, 0.2);
    let mut sim = Simulation::with_zero_history(p, GalerkinState::unit_first_mode(1), dt).unwrap();
    sim.advance(500_000).unwrap();
    let ts = sim.record(200_000).unwrap();
    let section = poincare_crossings(&ts, 0, 1);
    assert!(section.len() > 50);
    assert!(dispersion(&section) < 1e-3, "dispersion {}", dispersion(&section));
}

#[test]
fn runs_are_bit_identical() {
    let p = ModelParams::default();
    let run = || {
        let mut sim = Simulation::with_zero_history(p, GalerkinState::unit_first_mode(10), 0.01).unwrap();
        sim.record(3000).unwrap()
    };
    assert_eq!(run(), run());
}

fn state(n: usize) -> impl Strategy<Value = GalerkinState> {
    (prop::collection::vec(-2.0f64..2.0, n), prop::collection::vec(-2.0f64..2.0, n))
        .prop_map(|(eta, mu)| GalerkinState { eta, mu })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn damped_energy_never_increases(s0 in (1usize..6).prop_flat_map(state)) {
        let p = linear(s0.n_modes(), true);
        let mut sim = Simulation::with_zero_history(p, s0, 0.01).unwrap();
        let ts = sim.record(2000).unwrap();
        for w in ts.states.windows(2) {
            let (a, b) = (hesn_core::galerkin::acoustic_energy_flat(&w[0]), hesn_core::galerkin::acoustic_energy_flat(&w[1]));
            prop_assert!(b <= a + 1e-9, "energy rose from {} to {}", a, b);
        }
    }

    #[test]
    fn energy_matches_midpoint_quadrature(s in (1usize..11).prop_flat_map(state)) {
        let n = 10_000;
        let h = 1.0 / n as f64;
        let pi = std::f64::consts::PI;
        let mut integral = 0.0;
        for k in 0..n {
            let x = (k as f64 + 0.5) * h;
            let (mut u, mut pr) = (0.0, 0.0);
            for j in 0..s.n_modes() {
                let jp = (j + 1) as f64 * pi;
                u += s.eta[j] * (jp * x).cos();
                pr -= s.mu[j] * (jp * x).sin();
            }
            integral += 0.5 * (u * u + pr * pr) * h;
        }
        let e = acoustic_energy(&s);
        prop_assume!(e > 1e-6);
        prop_assert!(((integral - e) / e).abs() < 1e-4);
    }

    #[test]
    fn equilibrium_is_preserved(n in 1usize..11, beta in 0.0f64..10.0, tau in 0.05f64..0.5) {
        let p = ModelParams::new(n, beta, tau);
        let mut sim = Simulation::with_zero_history(p, GalerkinState::zeros(n), 0.01).unwrap();
        let ts = sim.record(500).unwrap();
        prop_assert!(ts.states.iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }
}
