//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.

use std::time::{Duration, Instant};

use hesn_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use hesn_core::eval::{ng_sweep, time_average, Observable};
use hesn_core::experiment::{
    compare_cycles, decorrelation_time, dispersion, first_mode_error, forecast, generate_truth, poincare_crossings,
    train, Method, Protocol, TruthData,
};
use hesn_core::lyapunov::lyapunov_leading;
use hesn_core::parallel;
use hesn_core::ridge::train_readout;
use hesn_core::{EsnConfig, GalerkinState, ModelParams, Reservoir, Simulation, TimeSeries};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 16;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Median where failed seeds count as infinite error.
fn median_with_failures(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| if x.is_finite() { *x } else { f64::INFINITY }).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn seeds() -> Vec<u64> {
    (0..SEEDS).collect()
}

fn errors(protocol: &Protocol, truth: &TruthData, method: Method, config: &EsnConfig) -> Vec<f64> {
    parallel::map(&seeds(), |&s| {
        forecast(protocol, truth, method, config, s).map_or(f64::INFINITY, |f| f.relative_error)
    })
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v
        .iter()
        .map(|x| if x.abs() < 1e4 { format!("{x:.3}") } else { format!("{x:.2e}") })
        .collect();
    format!("[{}]", parts.join(" "))
}

fn chaos() -> Outcome {
    let est = lyapunov_leading(&ModelParams::new(10, 7.0, 0.2), 0.01, 3000.0, 1.0, 0);
    match est {
        Ok(e) => outcome(
            (0.09..=0.15).contains(&e.exponent),
            format!("lambda_1 = {:.4} (converged: {})", e.exponent, e.converged),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn regimes() -> Outcome {
    let section = |dt: f64| {
        let p = ModelParams::new(1, 7.0, 0.2);
        let mut sim = Simulation::with_zero_history(p, GalerkinState::unit_first_mode(1), dt).unwrap();
        sim.advance((500.0 / dt).round() as usize).unwrap();
        let ts = sim.record((200.0 / dt).round() as usize).unwrap();
        dispersion(&poincare_crossings(&ts, 0, 1))
    };
    let fine = section(0.001);
    let coarse = section(0.01);
    let periodic = lyapunov_leading(&ModelParams::new(10, 6.0, 0.3), 0.01, 3000.0, 1.0, 0);
    let lambda = periodic.as_ref().map_or(f64::NAN, |e| e.exponent);
    outcome(
        fine < 1e-3 && lambda <= 0.01,
        format!(
            "N_g=1 section dispersion {fine:.2e} at dt=0.001 ({coarse:.2e} at dt=0.01); lambda_1(beta=6, tau=0.3) = {lambda:.4}"
        ),
    )
}

struct OrderingRun {
    outcome: Outcome,
    holds: bool,
}

fn ordering(protocol: &Protocol, truth: &TruthData) -> OrderingRun {
    let rom = Method::Rom { rom_modes: 1 };
    let rom_err = forecast(protocol, truth, rom, &rom.default_config(), 0).map_or(f64::INFINITY, |f| f.relative_error);
    let esn = errors(protocol, truth, Method::Esn, &Method::Esn.default_config());
    let hyb = Method::Hybrid { rom_modes: 1 };
    let hesn = errors(protocol, truth, hyb, &hyb.default_config());
    let (me, mh) = (median_with_failures(&esn), median_with_failures(&hesn));
    let holds = (0.35..=0.65).contains(&rom_err) && me >= 0.30 && mh <= 0.10 && 3.0 * mh <= me;
    OrderingRun {
        holds,
        outcome: outcome(
            holds,
            format!(
                "reference {:.4}; ROM {rom_err:.3}; ESN median {me:.3} {}; hESN(1) median {mh:.3} {}",
                truth.reference_average,
                fmt(&esn),
                fmt(&hesn)
            ),
        ),
    }
}

fn sweep(protocol: &Protocol, truth: &TruthData) -> Outcome {
    let ngs: Vec<usize> = (1..=10).collect();
    let rows = ng_sweep(&ngs, &seeds(), |ng, seed| {
        let m = Method::Hybrid { rom_modes: ng };
        forecast(protocol, truth, m, &m.default_config(), seed).map(|f| f.relative_error)
    });
    let med: Vec<f64> = rows
        .iter()
        .map(|r| {
            let v: Vec<f64> = r.per_seed.iter().map(|s| s.outcome.clone().unwrap_or(f64::INFINITY)).collect();
            median_with_failures(&v)
        })
        .collect();
    let (m1, m4, m10) = (med[0], med[3], med[9]);
    outcome(
        m4 * 1.5 < m1 && m10 > 0.0 && m10 <= m4,
        format!("medians by N_g_ROM 1..10: {}", fmt(&med)),
    )
}

fn periodic_regime() -> Outcome {
    let protocol = Protocol {
        model: ModelParams::new(10, 6.0, 0.3),
        ..Protocol::default()
    };
    let truth = match generate_truth(&protocol) {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let matches = |sigma_in: f64| {
        let m = Method::Hybrid { rom_modes: 1 };
        let cfg = EsnConfig {
            sigma_in,
            spectral_radius: 0.3,
            ..EsnConfig::default()
        };
        parallel::map(&seeds(), |&s| {
            forecast(&protocol, &truth, m, &cfg, s)
                .map(|f| compare_cycles(&f.prediction, &truth.future, 10, 1e-2).within(0.05))
                .unwrap_or(false)
        })
        .into_iter()
        .filter(|&ok| ok)
        .count()
    };
    let small = matches(0.03);
    let large = matches(0.2);
    outcome(
        small >= 12 && 2 * large < SEEDS as usize,
        format!("limit cycle within 5%: sigma_in=0.03 {small}/16, sigma_in=0.2 {large}/16"),
    )
}

fn property_suites() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    // RK4 order on the undelayed damped oscillator
    let p = ModelParams::new(1, 0.0, 0.2);
    let (w, z) = (std::f64::consts::PI, p.damping(1));
    let exact = |t: f64| {
        let a = -z / 2.0;
        let nu = (w * w - a * a).sqrt();
        (a * t).exp() * ((nu * t).cos() - a * (nu * t).sin() / nu)
    };
    let err = |dt: f64| {
        let mut sim = Simulation::with_zero_history(p, GalerkinState::unit_first_mode(1), dt).unwrap();
        let ts = sim.record((10.0 / dt).round() as usize).unwrap();
        ts.states
            .iter()
            .enumerate()
            .map(|(k, s)| (s[0] - exact(k as f64 * dt)).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(0.02) / err(0.01);
    check("rk4 order", (14.0..=18.0).contains(&ratio));

    // energy decay (damped) and conservation (undamped)
    let mut sim = Simulation::with_zero_history(ModelParams::new(3, 0.0, 0.2), GalerkinState::unit_first_mode(3), 0.01)
        .unwrap();
    let ts = sim.record(5000).unwrap();
    let energy: Vec<f64> = ts.states.iter().map(|s| hesn_core::galerkin::acoustic_energy_flat(s)).collect();
    check("energy decay", energy.windows(2).all(|e| e[1] <= e[0] + 1e-9));
    let mut free = ModelParams::new(1, 0.0, 0.2);
    free.damping_c1 = 0.0;
    free.damping_c2 = 0.0;
    let mut sim = Simulation::with_zero_history(free, GalerkinState::unit_first_mode(1), 0.01).unwrap();
    let ts = sim.record(10_000).unwrap();
    let drift = ts
        .states
        .iter()
        .map(|s| (hesn_core::galerkin::acoustic_energy_flat(s) - 0.25).abs() / 0.25)
        .fold(0.0, f64::max);
    check("energy conservation", drift < 1e-6);

    // sign symmetry of the plain closed loop
    let data = {
        let mut sim = Simulation::with_zero_history(ModelParams::default(), GalerkinState::unit_first_mode(10), 0.01)
            .unwrap();
        sim.advance(5000).unwrap();
        sim.record(1999).unwrap()
    };
    let mut r = Reservoir::init(&EsnConfig::default(), None).unwrap();
    r.train(&data, 100, 1e-7).unwrap();
    r.warm_up(&data.tail(100)).unwrap();
    let x = r.state().clone();
    let mut flipped = r.clone();
    flipped.set_state(-x).unwrap();
    let a = r.run_autonomous(300).unwrap();
    let b = flipped.run_autonomous(300).unwrap();
    check(
        "sign symmetry",
        a.iter().zip(&b).all(|(p, q)| p.iter().zip(q).all(|(u, v)| *u == -*v)),
    );

    // ridge against an LU normal-equation oracle
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xm = DMatrix::from_fn(5, 40, |_, _| rng.random_range(-1.0..1.0));
    let ym = DMatrix::from_fn(3, 40, |_, _| rng.random_range(-1.0..1.0));
    let wr = train_readout(&xm, &ym, 1e-7).unwrap();
    let oracle = (&xm * xm.transpose() + DMatrix::identity(5, 5) * 1e-7)
        .lu()
        .solve(&(&xm * ym.transpose()))
        .unwrap()
        .transpose();
    check("ridge oracle", (&wr - &oracle).norm() / oracle.norm() < 1e-8);

    // sparsity and spectral radius
    for seed in 0..16 {
        let cfg = EsnConfig {
            seed,
            spectral_radius: 0.3,
            ..EsnConfig::default()
        };
        let r = Reservoir::init(&cfg, None).unwrap();
        check("binomial sparsity", (235..=367).contains(&r.w().nnz()));
        let rho = r.w().to_dense().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        check("spectral radius", (0.2997..=0.3003).contains(&rho));
    }

    // checkpoint round trip
    let m = Method::Hybrid { rom_modes: 2 };
    let trained = train(m, &ModelParams::default(), &m.default_config(), &data).unwrap();
    if let hesn_core::experiment::Forecaster::Hybrid(h) = trained {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Checkpoint::from_hybrid(&h)).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        let mut h2 = back.into_hybrid().unwrap();
        let mut h1 = h;
        let p1 = h1.predict(&data.tail(100), 200).unwrap();
        let p2 = h2.predict(&data.tail(100), 200).unwrap();
        check("checkpoint round trip", p1 == p2);
    } else {
        check("checkpoint round trip", false);
    }

    // time average against a two-pass oracle
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let n = rng.random_range(2..500);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let ts = TimeSeries::new(0.01, 0.0, values.iter().map(|v| vec![*v]).collect()).unwrap();
        let got = time_average(&ts, &Observable::new("x", |s| s[0]), 0.0).unwrap();
        let m0 = values.iter().sum::<f64>() / n as f64;
        let m1 = m0 + values.iter().map(|v| v - m0).sum::<f64>() / n as f64;
        check("time average oracle", (got - m1).abs() <= 1e-12 * m1.abs().max(1.0));
    }

    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("all suites hold (RK4 ratio {ratio:.2}, conservation drift {drift:.1e})")
        } else {
            format!("failing: {}", failures.join(", "))
        },
    )
}

fn instantaneous(protocol: &Protocol, truth: &TruthData, ordering_holds: bool) -> Outcome {
    let window = (60.0 / protocol.dt).round() as usize;
    let threshold = 0.1 * truth.rms_amplitude;
    let reference = truth.future.slice(0..window);
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut all_lost = true;
    for method in [Method::Esn, Method::Hybrid { rom_modes: 1 }, Method::Rom { rom_modes: 1 }] {
        let lost = parallel::map(&seeds(), |&seed| {
            let cfg = EsnConfig {
                seed,
                ..method.default_config()
            };
            let Ok(mut f) = train(method, &protocol.model, &cfg, &truth.train) else {
                return Some(0.0);
            };
            match f.predict(&truth.warmup(protocol), window) {
                Ok(pred) => {
                    let err: Vec<f64> = first_mode_error(&pred, &reference, protocol.model.n_modes)
                        .into_iter()
                        .map(|e| if e.is_finite() { e } else { f64::INFINITY })
                        .collect();
                    decorrelation_time(&err, threshold, protocol.dt)
                }
                // diverged within the window
                Err(_) => Some(0.0),
            }
        });
        let latest = lost.iter().map(|t| t.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
        all_lost &= latest <= 60.0;
        worst.push((method.name().to_string(), latest));
    }
    let times: Vec<String> = worst.iter().map(|(n, t)| format!("{n} {t:.2}")).collect();
    outcome(
        all_lost && ordering_holds,
        format!(
            "latest loss of tracking (threshold {threshold:.3}): {}; error-ordering criterion {}",
            times.join(", "),
            if ordering_holds { "holds" } else { "does not hold" }
        ),
    )
}

fn report(n: usize, name: &str, limit: Option<Duration>, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = run();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
    println!(
        "criterion {n} {name}: {} {} [{:.1}s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn main() {
    let protocol = Protocol::default();
    let truth_start = Instant::now();
    let truth = generate_truth(&protocol).expect("truth data");
    let truth_time = truth_start.elapsed();

    let mut results = Vec::new();
    results.push(report(1, "chaos validation", Some(Duration::from_secs(120)), chaos));
    results.push(report(2, "regime checks", Some(Duration::from_secs(120)), regimes));
    let mut ordering_holds = false;
    results.push(report(3, "error ordering", Some(Duration::from_secs(600) - truth_time), || {
        let run = ordering(&protocol, &truth);
        ordering_holds = run.holds;
        run.outcome
    }));
    results.push(report(4, "ROM size sweep", Some(Duration::from_secs(1800)), || sweep(&protocol, &truth)));
    results.push(report(5, "regime-dependent hyperparameters", None, periodic_regime));
    results.push(report(6, "property suites", Some(Duration::from_secs(60)), property_suites));
    results.push(report(7, "instantaneous prediction", None, || {
        instantaneous(&protocol, &truth, ordering_holds)
    }));

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
