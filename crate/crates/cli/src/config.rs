//! Run configuration: flat `key = value` files with dotted keys.
//!
//! ```text
//! # comment
//! model.beta = 7.0
//! experiment.mode = "hesn"
//! experiment.seeds = [0, 1, 2, 3]
//! ```
//!
//! Values are resolved as defaults, then the file, then `--set` overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hesn_core::eval::Grid;
use hesn_core::experiment::{Method, Protocol};
use hesn_core::galerkin::KingLaw;
use hesn_core::lyapunov::LyapunovOptions;
use hesn_core::EsnConfig;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, Kind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Esn,
    Hesn,
    Rom,
}

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "esn" => Some(Mode::Esn),
            "hesn" => Some(Mode::Hesn),
            "rom" => Some(Mode::Rom),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Esn => "esn",
            Mode::Hesn => "hesn",
            Mode::Rom => "rom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub protocol: Protocol,
    pub esn: EsnConfig,
    /// `None` picks the per-mode default.
    pub spectral_radius: Option<f64>,
    pub mode: Mode,
    pub rom_ng: usize,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub simulate_duration: f64,
    pub simulate_discard: f64,
    pub sweep_rom_ng: Vec<usize>,
    pub grid: Grid,
    pub lyapunov: LyapunovOptions,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            protocol: Protocol::default(),
            esn: EsnConfig::default(),
            spectral_radius: None,
            mode: Mode::Hesn,
            rom_ng: 1,
            seeds: (0..16).collect(),
            workers: 0,
            simulate_duration: 100.0,
            simulate_discard: 0.0,
            sweep_rom_ng: (1..=10).collect(),
            grid: Grid {
                sigma_in: vec![0.05, 0.1, 0.2],
                spectral_radius: vec![0.1, 0.3, 0.5],
                gamma: vec![1e-8, 1e-7, 1e-6],
            },
            lyapunov: LyapunovOptions::default(),
            data: None,
            checkpoint: None,
            output: None,
        }
    }
}

/// Raw right-hand side of an assignment.
#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(String),
    List(Vec<String>),
}

impl Value {
    fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if let Some(inner) = text.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or("unterminated list")?;
            let items: Vec<String> = inner
                .split(',')
                .map(|s| unquote(s.trim()))
                .filter(|s| !s.is_empty())
                .collect();
            return Ok(Value::List(items));
        }
        if text.is_empty() {
            return Err("missing value".into());
        }
        Ok(Value::Scalar(unquote(text)))
    }

    fn scalar(&self) -> Result<&str, String> {
        match self {
            Value::Scalar(s) => Ok(s),
            Value::List(_) => Err("expected a single value, got a list".into()),
        }
    }

    fn list(&self) -> Vec<&str> {
        match self {
            Value::Scalar(s) => vec![s.as_str()],
            Value::List(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

fn unquote(s: &str) -> String {
    let q = s.len() >= 2 && ((s.starts_with('"') && s.ends_with('"')) || (s.starts_with('\'') && s.ends_with('\'')));
    if q {
        s[1..s.len() - 1].to_string()
    } else {
        s.to_string()
    }
}

/// Value check failures: a type mismatch or a range violation.
enum Problem {
    Type(String),
    Range(String),
}

fn f64_where(v: &Value, ok: impl Fn(f64) -> bool, want: &str) -> Result<f64, Problem> {
    let s = v.scalar().map_err(Problem::Type)?;
    let x: f64 = s.parse().map_err(|_| Problem::Type(format!("expected a number, got `{s}`")))?;
    if !x.is_finite() || !ok(x) {
        return Err(Problem::Range(format!("must be {want}, got {s}")));
    }
    Ok(x)
}

fn int_where<T: std::str::FromStr + PartialOrd + Copy>(s: &str, min: T, want: &str) -> Result<T, Problem> {
    let x: T = s
        .parse()
        .map_err(|_| Problem::Type(format!("expected a nonnegative integer, got `{s}`")))?;
    if x < min {
        return Err(Problem::Range(format!("must be {want}, got {s}")));
    }
    Ok(x)
}

fn usize_at_least(v: &Value, min: usize) -> Result<usize, Problem> {
    int_where(v.scalar().map_err(Problem::Type)?, min, &format!(">= {min}"))
}

fn f64_list(v: &Value, ok: impl Fn(f64) -> bool, want: &str) -> Result<Vec<f64>, Problem> {
    let items = v.list();
    if items.is_empty() {
        return Err(Problem::Range("list must not be empty".into()));
    }
    items
        .into_iter()
        .map(|s| f64_where(&Value::Scalar(s.to_string()), &ok, want))
        .collect()
}

fn int_list<T: std::str::FromStr + PartialOrd + Copy>(v: &Value, min: T, want: &str) -> Result<Vec<T>, Problem> {
    let items = v.list();
    if items.is_empty() {
        return Err(Problem::Range("list must not be empty".into()));
    }
    items.into_iter().map(|s| int_where(s, min, want)).collect()
}

fn path(v: &Value) -> Result<Option<PathBuf>, Problem> {
    let s = v.scalar().map_err(Problem::Type)?;
    Ok((!s.is_empty()).then(|| PathBuf::from(s)))
}

const POSITIVE: &str = "> 0";
const NONNEGATIVE: &str = ">= 0";

impl Config {
    /// Every accepted key, in canonical order.
    pub const KEYS: &'static [&'static str] = &[
        "model.n_modes",
        "model.beta",
        "model.tau",
        "model.x_f",
        "model.damping_c1",
        "model.damping_c2",
        "model.damping_power",
        "model.king_law",
        "esn.n_reservoir",
        "esn.sigma_in",
        "esn.spectral_radius",
        "esn.density",
        "esn.gamma",
        "esn.washout",
        "esn.seed",
        "experiment.mode",
        "experiment.rom_ng",
        "experiment.train_samples",
        "experiment.horizon",
        "experiment.dt",
        "experiment.transient",
        "experiment.reference_time",
        "experiment.warmup",
        "experiment.validation_time",
        "experiment.prediction_discard",
        "experiment.workers",
        "experiment.seeds",
        "simulate.duration",
        "simulate.discard",
        "sweep.rom_ng",
        "grid.sigma_in",
        "grid.spectral_radius",
        "grid.gamma",
        "lyapunov.t_total",
        "lyapunov.renorm_interval",
        "lyapunov.spin_up",
        "lyapunov.seed",
        "paths.data",
        "paths.checkpoint",
        "paths.output",
    ];

    fn set(&mut self, key: &str, v: &Value) -> Result<(), Problem> {
        match key {
            "model.n_modes" => self.protocol.model.n_modes = usize_at_least(v, 1)?,
            "model.beta" => self.protocol.model.beta = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "model.tau" => self.protocol.model.tau = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "model.x_f" => self.protocol.model.x_f = f64_where(v, |x| x > 0.0 && x < 1.0, "in (0, 1)")?,
            "model.damping_c1" => self.protocol.model.damping_c1 = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "model.damping_c2" => self.protocol.model.damping_c2 = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "model.damping_power" => self.protocol.model.damping_power = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "model.king_law" => {
                self.protocol.model.king_law = match v.scalar().map_err(Problem::Type)? {
                    "absolute" => KingLaw::Absolute,
                    "clamped" => KingLaw::Clamped,
                    s => return Err(Problem::Range(format!("must be `absolute` or `clamped`, got `{s}`"))),
                }
            }
            "esn.n_reservoir" => self.esn.n_reservoir = usize_at_least(v, 1)?,
            "esn.sigma_in" => self.esn.sigma_in = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "esn.spectral_radius" => self.spectral_radius = Some(f64_where(v, |x| x > 0.0, POSITIVE)?),
            "esn.density" => self.esn.density = f64_where(v, |x| x > 0.0 && x <= 1.0, "in (0, 1]")?,
            "esn.gamma" => self.esn.gamma = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "esn.washout" => self.esn.washout = usize_at_least(v, 0)?,
            "esn.seed" => self.esn.seed = int_where(v.scalar().map_err(Problem::Type)?, 0u64, NONNEGATIVE)?,
            "experiment.mode" => {
                let s = v.scalar().map_err(Problem::Type)?;
                self.mode = Mode::parse(s)
                    .ok_or_else(|| Problem::Range(format!("must be `esn`, `hesn` or `rom`, got `{s}`")))?;
            }
            "experiment.rom_ng" => self.rom_ng = usize_at_least(v, 1)?,
            "experiment.train_samples" => self.protocol.train_samples = usize_at_least(v, 1)?,
            "experiment.horizon" => self.protocol.horizon = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "experiment.dt" => self.protocol.dt = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "experiment.transient" => self.protocol.transient = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "experiment.reference_time" => self.protocol.reference_time = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "experiment.warmup" => self.protocol.warmup = usize_at_least(v, 1)?,
            "experiment.validation_time" => self.protocol.validation_time = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "experiment.prediction_discard" => self.protocol.prediction_discard = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "experiment.workers" => self.workers = usize_at_least(v, 0)?,
            "experiment.seeds" => self.seeds = int_list(v, 0u64, NONNEGATIVE)?,
            "simulate.duration" => self.simulate_duration = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "simulate.discard" => self.simulate_discard = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "sweep.rom_ng" => self.sweep_rom_ng = int_list(v, 1usize, ">= 1")?,
            "grid.sigma_in" => self.grid.sigma_in = f64_list(v, |x| x > 0.0, POSITIVE)?,
            "grid.spectral_radius" => self.grid.spectral_radius = f64_list(v, |x| x > 0.0, POSITIVE)?,
            "grid.gamma" => self.grid.gamma = f64_list(v, |x| x >= 0.0, NONNEGATIVE)?,
            "lyapunov.t_total" => self.lyapunov.t_total = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "lyapunov.renorm_interval" => self.lyapunov.renorm_interval = f64_where(v, |x| x > 0.0, POSITIVE)?,
            "lyapunov.spin_up" => self.lyapunov.spin_up = f64_where(v, |x| x >= 0.0, NONNEGATIVE)?,
            "lyapunov.seed" => self.lyapunov.seed = int_where(v.scalar().map_err(Problem::Type)?, 0u64, NONNEGATIVE)?,
            "paths.data" => self.data = path(v)?,
            "paths.checkpoint" => self.checkpoint = path(v)?,
            "paths.output" => self.output = path(v)?,
            _ => unreachable!("key checked against KEYS"),
        }
        Ok(())
    }

    /// Applies one assignment. `origin` names where it came from in errors
    /// (`line 12`, `--set`).
    pub fn assign(&mut self, key: &str, value: &str, origin: &str) -> CliResult<()> {
        let fail = |msg: String| CliError::new(Kind::ConfigParse, format!("{origin}: {msg}"));
        if !Self::KEYS.contains(&key) {
            return Err(fail(format!("unknown key `{key}`")));
        }
        let v = Value::parse(value).map_err(|e| fail(format!("key `{key}`: {e}")))?;
        self.set(key, &v).map_err(|p| match p {
            Problem::Type(e) => fail(format!("key `{key}`: type mismatch: {e}")),
            Problem::Range(e) => fail(format!("key `{key}`: out of range: {e}")),
        })
    }

    /// Applies every assignment in `text`.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let origin = format!("line {}", i + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::new(Kind::ConfigParse, format!("{origin}: expected `key = value`, got `{line}`"))
            })?;
            self.assign(key.trim(), value, &origin)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.check()?;
        Ok(c)
    }

    /// Defaults, then `file`, then `overrides` (`key=value` each).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut c = Self::default();
        if let Some(f) = file {
            let text = std::fs::read_to_string(f).map_err(|e| {
                let kind = if e.kind() == std::io::ErrorKind::NotFound {
                    Kind::MissingFile
                } else {
                    Kind::Runtime
                };
                CliError::new(kind, format!("{}: {e}", f.display()))
            })?;
            c.apply_text(&text)
                .map_err(|e| CliError::new(e.kind, format!("{}: {}", f.display(), e.message)))?;
        }
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| CliError::new(Kind::ConfigParse, format!("--set: expected key=value, got `{o}`")))?;
            c.assign(key.trim(), value, "--set")?;
        }
        c.check()?;
        Ok(c)
    }

    /// Checks that span several keys.
    pub fn check(&self) -> CliResult<()> {
        let fail = |key: &str, msg: String| Err(CliError::new(Kind::ConfigParse, format!("key `{key}`: out of range: {msg}")));
        let n = self.protocol.model.n_modes;
        if self.rom_ng > n {
            return fail("experiment.rom_ng", format!("must be <= model.n_modes = {n}, got {}", self.rom_ng));
        }
        if let Some(&bad) = self.sweep_rom_ng.iter().find(|&&g| g > n) {
            return fail("sweep.rom_ng", format!("entries must be <= model.n_modes = {n}, got {bad}"));
        }
        if self.protocol.warmup > self.protocol.train_samples {
            return fail(
                "experiment.warmup",
                format!("must be <= experiment.train_samples = {}", self.protocol.train_samples),
            );
        }
        if self.esn.washout >= self.protocol.train_samples {
            return fail(
                "esn.washout",
                format!("must be < experiment.train_samples = {}", self.protocol.train_samples),
            );
        }
        Ok(())
    }

    pub fn method(&self) -> Method {
        self.method_with(self.rom_ng)
    }

    pub fn method_with(&self, rom_modes: usize) -> Method {
        match self.mode {
            Mode::Esn => Method::Esn,
            Mode::Hesn => Method::Hybrid { rom_modes },
            Mode::Rom => Method::Rom { rom_modes },
        }
    }

    /// Reservoir settings with the mode default for an unset radius.
    pub fn esn_config(&self) -> EsnConfig {
        EsnConfig {
            spectral_radius: self
                .spectral_radius
                .unwrap_or_else(|| self.method().default_config().spectral_radius),
            ..self.esn
        }
    }

    pub fn lyapunov_options(&self) -> LyapunovOptions {
        LyapunovOptions {
            dt: self.protocol.dt,
            ..self.lyapunov
        }
    }

    /// Fully resolved configuration, one `key = value` per line in
    /// canonical order.
    pub fn render(&self) -> String {
        let p = &self.protocol;
        let m = &p.model;
        let list = |v: Vec<String>| format!("[{}]", v.join(", "));
        let f = |x: f64| format!("{x:?}");
        let fl = |v: &[f64]| list(v.iter().map(|x| format!("{x:?}")).collect());
        let opt_path = |p: &Option<PathBuf>| format!("\"{}\"", p.as_ref().map(|x| x.display().to_string()).unwrap_or_default());
        let values: Vec<String> = vec![
            m.n_modes.to_string(),
            f(m.beta),
            f(m.tau),
            f(m.x_f),
            f(m.damping_c1),
            f(m.damping_c2),
            f(m.damping_power),
            match m.king_law {
                KingLaw::Absolute => "\"absolute\"".into(),
                KingLaw::Clamped => "\"clamped\"".into(),
            },
            self.esn.n_reservoir.to_string(),
            f(self.esn.sigma_in),
            f(self.esn_config().spectral_radius),
            f(self.esn.density),
            f(self.esn.gamma),
            self.esn.washout.to_string(),
            self.esn.seed.to_string(),
            format!("\"{}\"", self.mode.name()),
            self.rom_ng.to_string(),
            p.train_samples.to_string(),
            f(p.horizon),
            f(p.dt),
            f(p.transient),
            f(p.reference_time),
            p.warmup.to_string(),
            f(p.validation_time),
            f(p.prediction_discard),
            self.workers.to_string(),
            list(self.seeds.iter().map(u64::to_string).collect()),
            f(self.simulate_duration),
            f(self.simulate_discard),
            list(self.sweep_rom_ng.iter().map(usize::to_string).collect()),
            fl(&self.grid.sigma_in),
            fl(&self.grid.spectral_radius),
            fl(&self.grid.gamma),
            f(self.lyapunov.t_total),
            f(self.lyapunov.renorm_interval),
            f(self.lyapunov.spin_up),
            self.lyapunov.seed.to_string(),
            opt_path(&self.data),
            opt_path(&self.checkpoint),
            opt_path(&self.output),
        ];
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the rendered configuration, minus paths and worker
    /// count, which do not affect results. First 16 hex digits.
    pub fn hash(&self) -> String {
        let rendered: String = self
            .render()
            .lines()
            .filter(|l| !l.starts_with("paths.") && !l.starts_with("experiment.workers"))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(rendered.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (c, quote) {
            ('"' | '\'', None) => quote = Some(c),
            (c, Some(q)) if c == q => quote = None,
            ('#', None) => return &line[..i],
            _ => {}
        }
    }
    line
}
