//! Two-port S-parameter sweeps: Touchstone v1 ingestion, a canonical writer,
//! and main-resonance extraction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency-indexed |S11| and |S21| magnitudes in dB.
#[derive(Clone, Debug, PartialEq)]
pub struct SParamSweep {
    freqs_ghz: Vec<f64>,
    s11_db: Vec<f64>,
    s21_db: Vec<f64>,
}

impl SParamSweep {
    pub fn new(freqs_ghz: Vec<f64>, s11_db: Vec<f64>, s21_db: Vec<f64>) -> Result<Self> {
        let n = freqs_ghz.len();
        if n < 2 || s11_db.len() != n || s21_db.len() != n {
            return Err(Error::Domain(format!(
                "sweep needs equal-length sequences of at least 2 samples, got {}/{}/{}",
                n,
                s11_db.len(),
                s21_db.len()
            )));
        }
        if let Some(k) = freqs_ghz.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "frequencies must be strictly increasing (sample {})",
                k + 1
            )));
        }
        let all_finite = freqs_ghz
            .iter()
            .chain(&s11_db)
            .chain(&s21_db)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("sweep contains non-finite values".into()));
        }
        Ok(SParamSweep {
            freqs_ghz,
            s11_db,
            s21_db,
        })
    }

    pub fn len(&self) -> usize {
        self.freqs_ghz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_ghz.is_empty()
    }

    pub fn freqs_ghz(&self) -> &[f64] {
        &self.freqs_ghz
    }

    pub fn s11_db(&self) -> &[f64] {
        &self.s11_db
    }

    pub fn s21_db(&self) -> &[f64] {
        &self.s21_db
    }
}

/// Main resonance: the global maximum of |S21| over a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonancePoint {
    pub f_res_ghz: f64,
    pub s21_db: f64,
}

impl ResonancePoint {
    pub fn new(f_res_ghz: f64, s21_db: f64) -> Self {
        ResonancePoint { f_res_ghz, s21_db }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DataFormat {
    Db,
    Ma,
    Ri,
}

impl DataFormat {
    fn to_db(self, a: f64, b: f64) -> f64 {
        match self {
            DataFormat::Db => a,
            DataFormat::Ma => 20.0 * a.abs().log10(),
            DataFormat::Ri => 20.0 * a.hypot(b).log10(),
        }
    }
}

struct OptionLine {
    ghz_per_unit: f64,
    format: DataFormat,
}

fn parse_option_line(line: &str, line_no: usize) -> Result<OptionLine> {
    // Touchstone defaults when a field is omitted.
    let mut opts = OptionLine {
        ghz_per_unit: 1.0,
        format: DataFormat::Ma,
    };
    let mut tokens = line.trim_start_matches('#').split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opts.ghz_per_unit = 1e-9,
            "KHZ" => opts.ghz_per_unit = 1e-6,
            "MHZ" => opts.ghz_per_unit = 1e-3,
            "GHZ" => opts.ghz_per_unit = 1.0,
            "S" => {}
            "Y" | "Z" | "H" | "G" => {
                return Err(Error::parse(line_no, format!("unsupported parameter type `{tok}`")))
            }
            "DB" => opts.format = DataFormat::Db,
            "MA" => opts.format = DataFormat::Ma,
            "RI" => opts.format = DataFormat::Ri,
            "R" => {
                let r = tokens
                    .next()
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::parse(line_no, "`R` must be followed by a number"))?;
                if !(r > 0.0) {
                    return Err(Error::parse(line_no, "reference impedance must be positive"));
                }
            }
            _ => return Err(Error::parse(line_no, format!("unsupported option token `{tok}`"))),
        }
    }
    Ok(opts)
}

/// Parses a 2-port Touchstone v1 file into GHz / dB magnitudes.
pub fn parse_touchstone(text: &str) -> Result<SParamSweep> {
    let mut options: Option<OptionLine> = None;
    let mut freqs = Vec::new();
    let mut s11 = Vec::new();
    let mut s21 = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if options.is_some() {
                return Err(Error::parse(line_no, "duplicate option line"));
            }
            options = Some(parse_option_line(line, line_no)?);
            continue;
        }
        let opts = options
            .as_ref()
            .ok_or_else(|| Error::parse(line_no, "data before option line (`# <unit> S <fmt> R <ref>`)"))?;

        let values = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(line_no, format!("non-numeric field: {e}")))?;
        if values.len() != 9 {
            return Err(Error::parse(
                line_no,
                format!("expected 9 columns for a 2-port row, got {}", values.len()),
            ));
        }
        let f = values[0] * opts.ghz_per_unit;
        if let Some(&prev) = freqs.last() {
            if !(f > prev) {
                return Err(Error::parse(line_no, format!("frequency {f} GHz not above {prev} GHz")));
            }
        }
        let s11_db = opts.format.to_db(values[1], values[2]);
        let s21_db = opts.format.to_db(values[3], values[4]);
        if !f.is_finite() || !s11_db.is_finite() || !s21_db.is_finite() {
            return Err(Error::parse(line_no, "non-finite value after dB conversion"));
        }
        freqs.push(f);
        s11.push(s11_db);
        s21.push(s21_db);
    }
    if options.is_none() {
        return Err(Error::parse(0, "missing option line"));
    }
    if freqs.len() < 2 {
        return Err(Error::parse(0, format!("need at least 2 data rows, got {}", freqs.len())));
    }
    SParamSweep::new(freqs, s11, s21)
}

/// Canonical `.s2p`: `# GHz S DB R 50`, 9 columns, 6 decimals. S12 mirrors
/// S21 and S22 mirrors S11 (reciprocal, symmetric); all angles are zero.
pub fn write_touchstone(sweep: &SParamSweep) -> String {
    let mut out = String::from("! canonical two-port sweep\n# GHz S DB R 50\n");
    for k in 0..sweep.len() {
        let (f, a, b) = (sweep.freqs_ghz[k], sweep.s11_db[k], sweep.s21_db[k]);
        writeln!(
            out,
            "{f:.6} {a:.6} 0.000000 {b:.6} 0.000000 {b:.6} 0.000000 {a:.6} 0.000000"
        )
        .expect("writing to String");
    }
    out
}

/// Sample with maximum |S21|; ties go to the lowest frequency.
pub fn extract_main_resonance(sweep: &SParamSweep) -> ResonancePoint {
    let mut best = 0;
    for k in 1..sweep.len() {
        if sweep.s21_db[k] > sweep.s21_db[best] {
            best = k;
        }
    }
    ResonancePoint::new(sweep.freqs_ghz[best], sweep.s21_db[best])
}

/// Drops points strictly inside (gap_lo, gap_hi); order is preserved.
pub fn band_gap_filter(points: &[ResonancePoint], gap_lo_ghz: f64, gap_hi_ghz: f64) -> Result<Vec<ResonancePoint>> {
    check_gap(gap_lo_ghz, gap_hi_ghz)?;
    Ok(points
        .iter()
        .filter(|p| !in_gap(p.f_res_ghz, gap_lo_ghz, gap_hi_ghz))
        .copied()
        .collect())
}

pub(crate) fn check_gap(lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi) {
        return Err(Error::Domain(format!("gap bounds must satisfy lo < hi, got ({lo}, {hi})")));
    }
    Ok(())
}

pub(crate) fn in_gap(f: f64, lo: f64, hi: f64) -> bool {
    lo < f && f < hi
}
