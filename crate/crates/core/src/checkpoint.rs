//! Plain-text checkpoints for trained reservoirs.
//!
//! ```text
//! ESN v1
//! Nx Nu Ny Nf
//! W_IN
//! <Nx rows of Nu values>
//! W
//! <row col value, one nonzero per line>
//! W_OUT
//! <Ny rows of Nf values>
//! ROM                      (hybrid networks only)
//! n_modes <int>
//! ...
//! partition <row_start> <row_end> <col_start> <col_end>
//! END
//! ```
//!
//! Values are written with 17 significant digits so they parse back to the
//! identical `f64`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::galerkin::{KingLaw, ModelParams};
use crate::hybrid::HybridEsn;
use crate::reservoir::{InputBlock, Reservoir};
use crate::series::format_f64;
use crate::sparse::CsrMatrix;

const MAGIC: &str = "ESN v1";

/// ROM section of a hybrid checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RomSection {
    pub params: ModelParams,
    pub full_modes: usize,
    pub dt: f64,
    pub partition: Vec<InputBlock>,
}

/// Parsed checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub reservoir: Reservoir,
    pub rom: Option<RomSection>,
}

impl Checkpoint {
    pub fn from_hybrid(model: &HybridEsn) -> Self {
        let partition = model
            .reservoir()
            .partition()
            .map(<[InputBlock]>::to_vec)
            .unwrap_or_default();
        Self {
            reservoir: model.reservoir().clone(),
            rom: Some(RomSection {
                params: *model.rom_params(),
                full_modes: model.full_dim() / 2,
                dt: model.dt(),
                partition,
            }),
        }
    }

    /// Rebuilds the hybrid network described by a checkpoint with a ROM
    /// section.
    pub fn into_hybrid(self) -> Result<HybridEsn> {
        let rom = self.rom.ok_or(Error::Checkpoint {
            line: 0,
            message: "checkpoint has no ROM section".into(),
        })?;
        let mut reservoir = self.reservoir;
        reservoir.partition = Some(rom.partition);
        HybridEsn::from_reservoir(reservoir, rom.params, rom.full_modes, rom.dt)
    }
}

fn write_dense<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    let mut line = String::new();
    for r in 0..m.nrows() {
        line.clear();
        for c in 0..m.ncols() {
            if c > 0 {
                line.push(' ');
            }
            line.push_str(&format_f64(m[(r, c)]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut out: W, checkpoint: &Checkpoint) -> Result<()> {
    let r = &checkpoint.reservoir;
    let w_out = r.w_out.as_ref().ok_or(Error::UntrainedReadout)?;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{} {} {} {}", r.n_reservoir(), r.n_inputs(), w_out.nrows(), w_out.ncols())?;
    writeln!(out, "W_IN")?;
    write_dense(&mut out, &r.w_in)?;
    writeln!(out, "W")?;
    for (row, col, v) in r.w.triplets() {
        writeln!(out, "{row} {col} {}", format_f64(v))?;
    }
    writeln!(out, "W_OUT")?;
    write_dense(&mut out, w_out)?;
    if let Some(rom) = &checkpoint.rom {
        let p = &rom.params;
        writeln!(out, "ROM")?;
        writeln!(out, "n_modes {}", p.n_modes)?;
        writeln!(out, "beta {}", format_f64(p.beta))?;
        writeln!(out, "tau {}", format_f64(p.tau))?;
        writeln!(out, "x_f {}", format_f64(p.x_f))?;
        writeln!(out, "damping_c1 {}", format_f64(p.damping_c1))?;
        writeln!(out, "damping_c2 {}", format_f64(p.damping_c2))?;
        writeln!(out, "damping_power {}", format_f64(p.damping_power))?;
        let law = match p.king_law {
            KingLaw::Absolute => "absolute",
            KingLaw::Clamped => "clamped",
        };
        writeln!(out, "king_law {law}")?;
        writeln!(out, "full_modes {}", rom.full_modes)?;
        writeln!(out, "dt {}", format_f64(rom.dt))?;
        for b in &rom.partition {
            writeln!(out, "partition {} {} {} {}", b.rows.start, b.rows.end, b.cols.start, b.cols.end)?;
        }
    }
    writeln!(out, "END")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok(line?.trim().to_string()),
            None => Err(self.error("unexpected end of file")),
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            line: self.number,
            message: message.into(),
        }
    }

    fn expect(&mut self, header: &str) -> Result<()> {
        let line = self.next_line()?;
        if line != header {
            return Err(self.error(format!("expected `{header}`, found `{line}`")));
        }
        Ok(())
    }

    fn numbers<T: std::str::FromStr>(&self, line: &str, count: usize) -> Result<Vec<T>> {
        let values: Vec<T> = line
            .split_whitespace()
            .map(|s| s.parse::<T>().map_err(|_| self.error(format!("cannot parse `{s}`"))))
            .collect::<Result<_>>()?;
        if values.len() != count {
            return Err(self.error(format!("expected {count} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn dense(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let line = self.next_line()?;
            for (c, v) in self.numbers::<f64>(&line, cols)?.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    lines.expect(MAGIC)?;
    let dims_line = lines.next_line()?;
    let dims = lines.numbers::<usize>(&dims_line, 4)?;
    let (n_x, n_u, n_y, n_f) = (dims[0], dims[1], dims[2], dims[3]);

    lines.expect("W_IN")?;
    let w_in = lines.dense(n_x, n_u)?;

    lines.expect("W")?;
    let mut triplets = Vec::new();
    loop {
        let line = lines.next_line()?;
        if line == "W_OUT" {
            break;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(lines.error(format!("expected `row col value`, found `{line}`")));
        }
        let row = parts[0].parse::<usize>().map_err(|_| lines.error("bad row index"))?;
        let col = parts[1].parse::<usize>().map_err(|_| lines.error("bad column index"))?;
        let v = parts[2].parse::<f64>().map_err(|_| lines.error("bad value"))?;
        triplets.push((row, col, v));
    }
    let w = CsrMatrix::from_triplets(n_x, n_x, &triplets).map_err(|e| lines.error(e.to_string()))?;
    let w_out = lines.dense(n_y, n_f)?;
    let reservoir = Reservoir::from_parts(w_in, w, Some(w_out)).map_err(|e| lines.error(e.to_string()))?;

    let line = lines.next_line()?;
    let rom = match line.as_str() {
        "END" => None,
        "ROM" => Some(read_rom(&mut lines)?),
        other => return Err(lines.error(format!("expected `ROM` or `END`, found `{other}`"))),
    };
    let mut checkpoint = Checkpoint { reservoir, rom };
    if let Some(rom) = &checkpoint.rom {
        checkpoint.reservoir.partition = Some(rom.partition.clone());
    }
    Ok(checkpoint)
}

fn read_rom<R: BufRead>(lines: &mut Lines<R>) -> Result<RomSection> {
    let mut params = ModelParams::default();
    let mut full_modes = None;
    let mut dt = None;
    let mut partition = Vec::new();
    loop {
        let line = lines.next_line()?;
        if line == "END" {
            break;
        }
        let (key, rest) = line.split_once(' ').ok_or_else(|| lines.error(format!("malformed `{line}`")))?;
        let rest = rest.trim();
        let real = |s: &str| s.parse::<f64>().map_err(|_| lines.error(format!("bad number for `{key}`")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| lines.error(format!("bad integer for `{key}`")));
        match key {
            "n_modes" => params.n_modes = int(rest)?,
            "beta" => params.beta = real(rest)?,
            "tau" => params.tau = real(rest)?,
            "x_f" => params.x_f = real(rest)?,
            "damping_c1" => params.damping_c1 = real(rest)?,
            "damping_c2" => params.damping_c2 = real(rest)?,
            "damping_power" => params.damping_power = real(rest)?,
            "king_law" => {
                params.king_law = match rest {
                    "absolute" => KingLaw::Absolute,
                    "clamped" => KingLaw::Clamped,
                    other => return Err(lines.error(format!("unknown king_law `{other}`"))),
                }
            }
            "full_modes" => full_modes = Some(int(rest)?),
            "dt" => dt = Some(real(rest)?),
            "partition" => {
                let v = lines.numbers::<usize>(rest, 4)?;
                partition.push(InputBlock {
                    rows: v[0]..v[1],
                    cols: v[2]..v[3],
                });
            }
            other => return Err(lines.error(format!("unknown ROM key `{other}`"))),
        }
    }
    params.validate().map_err(|e| lines.error(e.to_string()))?;
    Ok(RomSection {
        params,
        full_modes: full_modes.ok_or_else(|| lines.error("ROM section lacks `full_modes`"))?,
        dt: dt.ok_or_else(|| lines.error("ROM section lacks `dt`"))?,
        partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::{GalerkinState, Simulation};
    use crate::hybrid::hesn_train;
    use crate::reservoir::EsnConfig;
    use crate::series::TimeSeries;

    fn trained_esn() -> Reservoir {
        let cfg = EsnConfig {
            n_reservoir: 20,
            density: 0.2,
            n_inputs: 2,
            n_outputs: 2,
            washout: 5,
            seed: 17,
            ..EsnConfig::default()
        };
        let mut r = Reservoir::init(&cfg, None).unwrap();
        let data = TimeSeries::new(
            0.1,
            0.0,
            (0..100).map(|k| vec![(k as f64 * 0.1).sin(), (k as f64 * 0.1).cos()]).collect(),
        )
        .unwrap();
        r.train(&data, 5, 1e-7).unwrap();
        r.reset();
        r
    }

    #[test]
    fn esn_round_trip_is_exact() {
        let ck = Checkpoint {
            reservoir: trained_esn(),
            rom: None,
        };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ESN v1\n20 2 2 20\nW_IN\n"));
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn hybrid_round_trip_is_exact() {
        let p = ModelParams::default().with_modes(2);
        let mut sim = Simulation::with_zero_history(p, GalerkinState::unit_first_mode(2), 0.01).unwrap();
        let data = sim.record(300).unwrap();
        let cfg = EsnConfig {
            n_reservoir: 16,
            density: 0.2,
            n_inputs: 8,
            n_outputs: 4,
            washout: 20,
            seed: 2,
            ..EsnConfig::default()
        };
        let (model, _) = hesn_train(&data, &cfg, &p.with_modes(1)).unwrap();
        let mut ck = Checkpoint::from_hybrid(&model);
        ck.reservoir.reset();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let rebuilt = back.into_hybrid().unwrap();
        assert_eq!(rebuilt.reservoir().w_in(), model.reservoir().w_in());
        assert_eq!(rebuilt.reservoir().w(), model.reservoir().w());
        assert_eq!(rebuilt.reservoir().w_out(), model.reservoir().w_out());
        assert_eq!(rebuilt.rom_params(), model.rom_params());
    }

    #[test]
    fn malformed_input_reports_line() {
        let err = read_checkpoint("ESN v1\n2 1 1 2\nW_IN\n0.1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { line: 5, .. }), "{err:?}");
        let err = read_checkpoint("ESN v2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { line: 1, .. }));
    }

    #[test]
    fn untrained_reservoir_cannot_be_saved() {
        let mut r = trained_esn();
        r.w_out = None;
        let ck = Checkpoint { reservoir: r, rom: None };
        assert_eq!(write_checkpoint(Vec::new(), &ck).unwrap_err(), Error::UntrainedReadout);
    }
}
