//! Subcommand bodies. Each writes its result to `out`, led by a manifest
//! comment naming the subcommand, configuration hash, seed and version.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use hesn_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use hesn_core::eval::{grid_search, median, ng_sweep, GridPoint};
use hesn_core::experiment::{self, generate_truth, Forecaster, Method, TruthData};
use hesn_core::galerkin::{flame_velocity, GalerkinState, Simulation};
use hesn_core::lyapunov::lyapunov_leading_with;
use hesn_core::parallel;
use hesn_core::series::{format_f64, galerkin_columns};
use hesn_core::{EsnConfig, TimeSeries};

use crate::config::{Config, Mode};
use crate::error::{CliError, CliResult, Kind};
use crate::plot::{phase_curve, render_svg, time_curves, PlotOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn manifest(subcommand: &str, cfg: &Config, seed: &str) -> String {
    format!(
        "subcommand={subcommand} config={} seed={seed} version={VERSION}",
        cfg.hash()
    )
}

fn seed_list(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    let kind = if e.kind() == std::io::ErrorKind::NotFound {
        Kind::MissingFile
    } else {
        Kind::Runtime
    };
    CliError::new(kind, format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn steps(time: f64, dt: f64) -> usize {
    (time / dt - 1e-9).ceil().max(0.0) as usize
}

/// Integrates the model from `η₁ = 1` with a zero history.
pub fn simulate(cfg: &Config, out: &mut dyn Write) -> CliResult<()> {
    let p = cfg.protocol;
    let model = p.model;
    let mut sim = Simulation::with_zero_history(model, GalerkinState::unit_first_mode(model.n_modes), p.dt)?;
    sim.advance(steps(cfg.simulate_discard, p.dt))?;
    let n = steps(cfg.simulate_duration, p.dt).max(1);
    let series = sim.record(n - 1)?;
    let u_f = move |s: &[f64]| {
        GalerkinState::from_flat(s)
            .and_then(|st| flame_velocity(&st, model.x_f))
            .unwrap_or(f64::NAN)
    };
    series.write_csv(
        out,
        &galerkin_columns(model.n_modes),
        &[("u_f", &u_f)],
        Some(&manifest("simulate", cfg, "none")),
    )?;
    Ok(())
}

/// Training data: the first `train_samples` rows of `paths.data`, or the
/// generated truth when no file is given. File data is stepped at
/// `experiment.dt`; the time column only has to agree with it.
pub fn training_data(cfg: &Config) -> CliResult<TimeSeries> {
    let p = &cfg.protocol;
    let Some(path) = &cfg.data else {
        return Ok(generate_truth(p)?.train);
    };
    let wanted = galerkin_columns(p.model.n_modes);
    let (all, names) = TimeSeries::read_csv(open(path)?, None)
        .map_err(|e| CliError::new(Kind::Runtime, format!("{}: {e}", path.display())))?;
    let picks: Vec<usize> = wanted
        .iter()
        .map(|c| names.iter().position(|n| n == c))
        .collect::<Option<_>>()
        .ok_or_else(|| {
            CliError::new(
                Kind::DimensionMismatch,
                format!(
                    "{}: expected columns eta_1..eta_{n}, mu_1..mu_{n} for model.n_modes = {n}",
                    path.display(),
                    n = p.model.n_modes
                ),
            )
        })?;
    if all.len() < p.train_samples {
        return Err(CliError::new(
            Kind::DimensionMismatch,
            format!(
                "{}: {} samples, experiment.train_samples = {}",
                path.display(),
                all.len(),
                p.train_samples
            ),
        ));
    }
    if all.len() >= 2 && ((all.dt - p.dt) / p.dt).abs() > 1e-6 {
        return Err(CliError::new(
            Kind::Runtime,
            format!("{}: sample spacing {} differs from experiment.dt = {}", path.display(), all.dt, p.dt),
        ));
    }
    let states = all.states[..p.train_samples]
        .iter()
        .map(|s| picks.iter().map(|&k| s[k]).collect())
        .collect();
    Ok(TimeSeries::new(p.dt, all.t0, states)?)
}

/// Trains the configured method and writes a checkpoint.
pub fn train(cfg: &Config, out: &mut dyn Write) -> CliResult<()> {
    if cfg.mode == Mode::Rom {
        return Err(CliError::new(
            Kind::Usage,
            "experiment.mode = rom has no trainable parameters; use predict directly",
        ));
    }
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::new(Kind::Usage, "paths.checkpoint is not set"))?;
    let data = training_data(cfg)?;
    let (forecaster, diag) =
        experiment::train_with_diagnostics(cfg.method(), &cfg.protocol.model, &cfg.esn_config(), &data)?;
    let checkpoint = match forecaster {
        Forecaster::Esn(r) => Checkpoint {
            reservoir: r,
            rom: None,
        },
        Forecaster::Hybrid(h) => Checkpoint::from_hybrid(&h),
        Forecaster::Rom { .. } => unreachable!("rejected above"),
    };
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, &checkpoint)?;
    w.flush().map_err(|e| io_err(path, e))?;

    let d = diag.expect("reservoir methods report a fit");
    writeln!(out, "# manifest: {}", manifest("train", cfg, &cfg.esn.seed.to_string())).map_err(io)?;
    writeln!(out, "# checkpoint: {}", path.display()).map_err(io)?;
    writeln!(out, "mode,mse,readout_norm,n_samples").map_err(io)?;
    writeln!(
        out,
        "{},{},{},{}",
        cfg.mode.name(),
        format_f64(d.mse),
        format_f64(d.readout_norm),
        d.n_samples
    )
    .map_err(io)?;
    Ok(())
}

fn io(e: std::io::Error) -> CliError {
    CliError::new(Kind::Runtime, e.to_string())
}

/// Forecaster for `predict`: the checkpoint for reservoir modes, the
/// truncated model for `rom`.
pub fn load_forecaster(cfg: &Config) -> CliResult<Forecaster> {
    if cfg.mode == Mode::Rom {
        return Ok(Forecaster::Rom {
            params: cfg.protocol.model.with_modes(cfg.rom_ng),
            full_modes: cfg.protocol.model.n_modes,
        });
    }
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::new(Kind::Usage, "paths.checkpoint is not set"))?;
    let checkpoint =
        read_checkpoint(open(path)?).map_err(|e| CliError::new(Kind::Checkpoint, format!("{}: {e}", path.display())))?;
    let f = if checkpoint.rom.is_some() {
        Forecaster::Hybrid(checkpoint.into_hybrid()?)
    } else {
        Forecaster::Esn(checkpoint.reservoir)
    };
    let expected = cfg.protocol.model.state_dim();
    let got = match &f {
        Forecaster::Esn(r) => r.n_inputs(),
        Forecaster::Hybrid(h) => h.full_dim(),
        Forecaster::Rom { .. } => expected,
    };
    if got != expected {
        return Err(CliError::new(
            Kind::DimensionMismatch,
            format!("checkpoint state width {got}, model.n_modes gives {expected}"),
        ));
    }
    Ok(f)
}

fn check_finite(series: &TimeSeries) -> CliResult<()> {
    match series.states.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
        Some(i) => Err(CliError::new(
            Kind::NumericalBlowup,
            format!("prediction became non-finite at t = {}", series.time(i)),
        )),
        None => Ok(()),
    }
}

/// Closed-loop prediction over the horizon after warm-up on the tail of the
/// training data.
pub fn predict(cfg: &Config, out: &mut dyn Write) -> CliResult<()> {
    let mut f = load_forecaster(cfg)?;
    let data = training_data(cfg)?;
    let prediction = f.predict(&data.tail(cfg.protocol.warmup), cfg.protocol.prediction_steps())?;
    check_finite(&prediction)?;
    prediction.write_csv(
        out,
        &galerkin_columns(cfg.protocol.model.n_modes),
        &[],
        Some(&manifest("predict", cfg, &cfg.esn.seed.to_string())),
    )?;
    Ok(())
}

fn outcome_fields(r: &Result<f64, String>) -> (String, String) {
    match r {
        Ok(e) => (format_f64(*e), "ok".into()),
        Err(m) => ("inf".into(), format!("failed: {}", m.replace(',', ";"))),
    }
}

/// Median with failed runs counted as infinite error.
fn median_with_failures(results: &[Result<f64, String>]) -> f64 {
    let v: Vec<f64> = results
        .iter()
        .map(|r| match r {
            Ok(x) if x.is_finite() => *x,
            _ => f64::INFINITY,
        })
        .collect();
    median(&v).unwrap_or(f64::INFINITY)
}

fn truth(cfg: &Config) -> CliResult<TruthData> {
    Ok(generate_truth(&cfg.protocol)?)
}

/// Per-seed relative error of the predicted mean acoustic energy.
pub fn evaluate(cfg: &Config, out: &mut dyn Write) -> CliResult<()> {
    let truth = truth(cfg)?;
    let method = cfg.method();
    let esn = cfg.esn_config();
    let results: Vec<Result<(f64, f64), String>> = parallel::with_workers(cfg.workers, || {
        parallel::map(&cfg.seeds, |&seed| {
            experiment::forecast(&cfg.protocol, &truth, method, &esn, seed)
                .map(|f| (f.relative_error, f.predicted_average))
                .map_err(|e| e.to_string())
        })
    });
    writeln!(out, "# manifest: {}", manifest("evaluate", cfg, &seed_list(&cfg.seeds))).map_err(io)?;
    writeln!(out, "seed,relative_error,predicted_average,status").map_err(io)?;
    for (seed, r) in cfg.seeds.iter().zip(&results) {
        let (err, status) = outcome_fields(&r.as_ref().map(|x| x.0).map_err(Clone::clone));
        let avg = r.as_ref().map(|x| format_f64(x.1)).unwrap_or_else(|_| "nan".into());
        writeln!(out, "{seed},{err},{avg},{status}").map_err(io)?;
    }
    let errors: Vec<Result<f64, String>> = results.iter().map(|r| r.clone().map(|x| x.0)).collect();
    let valid = errors.iter().filter(|r| matches!(r, Ok(x) if x.is_finite())).count();
    writeln!(
        out,
        "# summary: method={} reference_average={} median={} valid={valid}/{}",
        method.name(),
        format_f64(truth.reference_average),
        format_f64(median_with_failures(&errors)),
        cfg.seeds.len()
    )
    .map_err(io)?;
    Ok(())
}

/// Error against ROM size for the hybrid or ROM-alone method.
pub fn sweep_ng(cfg: &Config, out: &mut dyn Write) -> CliResult<()> {
    if cfg.mode == Mode::Esn {
        return Err(CliError::new(
            Kind::Usage,
            "sweep-ng needs experiment.mode = hesn or rom",
        ));
    }
    let truth = truth(cfg)?;
    let esn = cfg.esn_config();
    let rows = parallel::with_workers(cfg.workers, || {
        ng_sweep(&cfg.sweep_rom_ng, &cfg.seeds, |ng, seed| {
            experiment::forecast(&cfg.protocol, &truth, cfg.method_with(ng), &esn, seed).map(|f| f.relative_error)
        })
    });
    writeln!(out, "# manifest: {}", manifest("sweep-ng", cfg, &seed_list(&cfg.seeds))).map_err(io)?;
    writeln!(out, "rom_ng,seed,relative_error,status").map_err(io)?;
    for row in &rows {
        for s in &row.per_seed {
            let (err, status) = outcome_fields(&s.outcome);
            writeln!(out, "{},{},{err},{status}", row.rom_modes, s.seed).map_err(io)?;
        }
    }
    for row in &rows {
        let outcomes: Vec<_> = row.per_seed.iter().map(|s| s.outcome.clone()).collect();
        writeln!(
            out,
            "# median: rom_ng={} median={} valid={}",
            row.rom_modes,
            format_f64(median_with_failures(&outcomes)),
            row.valid
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Exhaustive search over `(σ_in, ρ, γ)`, scored by the median validation
/// error over the configured seeds.
pub fn grid(cfg: &Config, out: &mut dyn Write) -> CliResult<()> {
    let truth = truth(cfg)?;
    let method: Method = cfg.method();
    let base = cfg.esn_config();
    let objective = |p: &GridPoint| -> hesn_core::Result<f64> {
        let outcomes: Vec<Result<f64, String>> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let c = EsnConfig {
                    sigma_in: p.sigma_in,
                    spectral_radius: p.spectral_radius,
                    gamma: p.gamma,
                    seed,
                    ..base
                };
                experiment::validation_error(&cfg.protocol, &truth, method, &c).map_err(|e| e.to_string())
            })
            .collect();
        Ok(median_with_failures(&outcomes))
    };
    let result = parallel::with_workers(cfg.workers, || grid_search(&cfg.grid, objective))?;
    writeln!(out, "# manifest: {}", manifest("grid-search", cfg, &seed_list(&cfg.seeds))).map_err(io)?;
    writeln!(out, "sigma_in,spectral_radius,gamma,objective").map_err(io)?;
    let fmt = |x: f64| if x.is_finite() { format_f64(x) } else { "inf".into() };
    for c in &result.table {
        writeln!(
            out,
            "{},{},{},{}",
            format_f64(c.point.sigma_in),
            format_f64(c.point.spectral_radius),
            format_f64(c.point.gamma),
            fmt(c.objective)
        )
        .map_err(io)?;
    }
    let b = &result.best;
    writeln!(
        out,
        "# best: sigma_in={} spectral_radius={} gamma={} objective={}",
        format_f64(b.point.sigma_in),
        format_f64(b.point.spectral_radius),
        format_f64(b.point.gamma),
        fmt(b.objective)
    )
    .map_err(io)?;
    Ok(())
}

/// Leading Lyapunov exponent of the configured model.
pub fn lyapunov(cfg: &Config, out: &mut dyn Write) -> CliResult<()> {
    let est = lyapunov_leading_with(&cfg.protocol.model, &cfg.lyapunov_options())?;
    writeln!(out, "# manifest: {}", manifest("lyapunov", cfg, &cfg.lyapunov.seed.to_string())).map_err(io)?;
    writeln!(out, "exponent,converged,negative_root_events").map_err(io)?;
    writeln!(
        out,
        "{},{},{}",
        format_f64(est.exponent),
        est.converged,
        est.negative_root_events
    )
    .map_err(io)?;
    Ok(())
}

/// What `plot` draws.
#[derive(Debug, Clone, PartialEq)]
pub enum PlotKind {
    /// Named columns (all when empty) against `t`.
    Time(Vec<String>),
    /// `y` against `x`.
    Phase(String, String),
}

/// SVG plot of a time-series CSV.
pub fn plot(cfg: &Config, input: &Path, kind: &PlotKind, opts: &PlotOptions, out: &mut dyn Write) -> CliResult<()> {
    let (series, names) = TimeSeries::read_csv(open(input)?, None)
        .map_err(|e| CliError::new(Kind::Runtime, format!("{}: {e}", input.display())))?;
    let column = |name: &str| -> CliResult<Vec<f64>> {
        let k = names.iter().position(|n| n == name).ok_or_else(|| {
            CliError::new(
                Kind::DimensionMismatch,
                format!("{}: no column `{name}`", input.display()),
            )
        })?;
        Ok(series.component(k))
    };
    let (curves, x_label) = match kind {
        PlotKind::Time(cols) => {
            let cols: Vec<String> = if cols.is_empty() { names.clone() } else { cols.clone() };
            let data = cols
                .iter()
                .map(|c| column(c).map(|v| (c.clone(), v)))
                .collect::<CliResult<Vec<_>>>()?;
            let t: Vec<f64> = (0..series.len()).map(|i| series.time(i)).collect();
            (time_curves(&t, &data), "t".to_string())
        }
        PlotKind::Phase(x, y) => {
            let (xv, yv) = (column(x)?, column(y)?);
            (vec![phase_curve((x, &xv), (y, &yv))], x.clone())
        }
    };
    let svg = render_svg(&curves, &x_label, opts)?;
    writeln!(out, "<!-- manifest: {} -->", manifest("plot", cfg, "none")).map_err(io)?;
    out.write_all(svg.as_bytes()).map_err(io)?;
    Ok(())
}
