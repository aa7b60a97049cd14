//! Datasets, the evaluator registry and end-to-end design runs.
//!
//! Datasets are JSON Lines (`genome_hex`, `f_res_ghz`, `s21_db`, `source`)
//! with a `<file>.meta.json` sidecar holding the creation seed, evaluator
//! name and tool version.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpso::{self, BpsoConfig, DesignTarget, Evaluator, GenomeEvaluator};
use crate::error::{Error, Result};
use crate::geometry::{assemble_plate, random_genome, PlateGenome, PlateMatrix};
use crate::sparams::{check_gap, extract_main_resonance, in_gap, parse_touchstone, ResonancePoint};
use crate::stats;
use crate::surrogate::{self, load_weights, split_indices, SurrogateConfig, TargetNormalizer, TrainConfig, TrainOutcome};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Oracle,
    Touchstone,
    Surrogate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub genome_hex: String,
    pub f_res_ghz: f64,
    pub s21_db: f64,
    pub source: SampleSource,
}

impl Sample {
    pub fn new(genome: &PlateGenome, point: ResonancePoint, source: SampleSource) -> Self {
        Sample {
            genome_hex: genome.to_hex(),
            f_res_ghz: point.f_res_ghz,
            s21_db: point.s21_db,
            source,
        }
    }

    pub fn genome(&self) -> Result<PlateGenome> {
        PlateGenome::from_hex(&self.genome_hex)
    }

    pub fn point(&self) -> ResonancePoint {
        ResonancePoint::new(self.f_res_ghz, self.s21_db)
    }

    fn validate(&self) -> Result<()> {
        self.genome()?;
        if !self.f_res_ghz.is_finite() || !self.s21_db.is_finite() {
            return Err(Error::Encoding("non-finite label".into()));
        }
        if self.source == SampleSource::Oracle && !(1.0..=5.0).contains(&self.f_res_ghz) {
            return Err(Error::Encoding(format!(
                "oracle sample frequency {} GHz outside [1, 5]",
                self.f_res_ghz
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub evaluator: String,
    pub tool_version: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

/// Sidecar path for a dataset file: `ds.jsonl` → `ds.jsonl.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_jsonl(text: &str, meta: DatasetMeta) -> Result<Dataset> {
        let mut samples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
            s.validate().map_err(|e| Error::parse(idx + 1, e.to_string()))?;
            samples.push(s);
        }
        Ok(Dataset { samples, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_jsonl()?)?;
        write_file(&meta_path(path), serde_json::to_string_pretty(&self.meta)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mp = meta_path(path);
        let meta_text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: DatasetMeta = serde_json::from_str(&meta_text)?;
        Dataset::parse_jsonl(&text, meta)
    }

    /// Keeps samples outside the open interval (lo, hi) GHz.
    pub fn filter_gap(&self, lo: f64, hi: f64) -> Result<Dataset> {
        check_gap(lo, hi)?;
        Ok(Dataset {
            samples: self
                .samples
                .iter()
                .filter(|s| !in_gap(s.f_res_ghz, lo, hi))
                .cloned()
                .collect(),
            meta: self.meta.clone(),
        })
    }

    /// Plates with their labels, ready for training.
    pub fn labeled_plates(&self) -> Result<Vec<(PlateMatrix, ResonancePoint)>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(row, s)| {
                let g = s.genome().map_err(|e| Error::Row {
                    row,
                    source: Box::new(e),
                })?;
                Ok((assemble_plate(&g), s.point()))
            })
            .collect()
    }
}

/// Names accepted by [`resolve_evaluator`].
pub const EVALUATORS: [&str; 3] = ["oracle", "surrogate", "lookup"];

/// Resources an evaluator may need.
#[derive(Clone, Debug, Default)]
pub struct EvaluatorSources<'a> {
    /// PXSM weights for `surrogate`.
    pub model: Option<&'a Path>,
    /// JSONL dataset for `lookup`.
    pub table: Option<&'a Path>,
}

pub fn resolve_evaluator(name: &str, sources: &EvaluatorSources<'_>) -> Result<GenomeEvaluator> {
    match name {
        "oracle" => Ok(GenomeEvaluator::oracle()),
        "surrogate" => {
            let path = sources
                .model
                .ok_or_else(|| Error::Config("the surrogate evaluator needs a weight file (--model)".into()))?;
            let (model, normalizer) = load_weights(path)?;
            Ok(GenomeEvaluator::surrogate(model, normalizer))
        }
        "lookup" => {
            let path = sources
                .table
                .ok_or_else(|| Error::Config("the lookup evaluator needs a dataset (--table)".into()))?;
            let ds = Dataset::load(path)?;
            let table = ds
                .samples
                .iter()
                .map(|s| Ok((s.genome()?, s.point())))
                .collect::<Result<_>>()?;
            Ok(GenomeEvaluator::lookup(table))
        }
        other => Err(Error::UnknownEvaluator {
            name: other.to_string(),
            known: EVALUATORS.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

fn source_for(evaluator: &GenomeEvaluator) -> SampleSource {
    match evaluator.name() {
        "surrogate" => SampleSource::Surrogate,
        "oracle" => SampleSource::Oracle,
        _ => SampleSource::Touchstone,
    }
}

/// Labels `n` random genomes (seeds `seed + index`) with the evaluator.
pub fn generate_dataset(n: usize, seed: u64, evaluator: &GenomeEvaluator) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let source = source_for(evaluator);
    let samples = (0..n)
        .into_par_iter()
        .map(|k| {
            let g = random_genome(seed.wrapping_add(k as u64));
            evaluator
                .evaluate(&g)
                .map(|p| Sample::new(&g, p, source))
                .map_err(|e| Error::Row {
                    row: k,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        meta: DatasetMeta {
            seed: Some(seed),
            evaluator: evaluator.name().to_string(),
            tool_version: TOOL_VERSION.to_string(),
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub genome_hex: String,
    pub filename: String,
}

/// Reads a `genome_hex,filename` CSV manifest (header required).
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(1, format!("manifest header lacks `{name}`")))
    };
    let (gi, fi) = (col("genome_hex")?, col("filename")?);
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(k + 2, e.to_string()))?;
        let field = |i: usize| {
            rec.get(i)
                .map(str::to_string)
                .ok_or_else(|| Error::parse(k + 2, "missing manifest field"))
        };
        rows.push(ManifestRow {
            genome_hex: field(gi)?,
            filename: field(fi)?,
        });
    }
    Ok(rows)
}

#[derive(Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    /// Rows skipped in permissive mode (0-based manifest row, reason).
    pub skipped: Vec<(usize, String)>,
}

fn ingest_row(dir: &Path, row: &ManifestRow) -> Result<Sample> {
    let genome = PlateGenome::from_hex(&row.genome_hex)?;
    let path = dir.join(&row.filename);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sweep = parse_touchstone(&text)?;
    Ok(Sample::new(&genome, extract_main_resonance(&sweep), SampleSource::Touchstone))
}

/// One sample per manifest row from the main resonance of each `.s2p` file.
/// Strict mode fails on the first bad row; permissive mode skips it.
pub fn ingest_touchstone_dir(dir: &Path, manifest: &[ManifestRow], permissive: bool) -> Result<IngestReport> {
    let results: Vec<Result<Sample>> = manifest.par_iter().map(|row| ingest_row(dir, row)).collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) if permissive => {
                warn!("skipping manifest row {k}: {e}");
                skipped.push((k, e.to_string()));
            }
            Err(e) => {
                return Err(Error::Row {
                    row: k,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(IngestReport {
        dataset: Dataset {
            samples,
            meta: DatasetMeta {
                seed: None,
                evaluator: "touchstone".into(),
                tool_version: TOOL_VERSION.to_string(),
            },
        },
        skipped,
    })
}

/// Seeded shuffle then contiguous train/validation/test slices.
pub fn split_dataset(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<[Dataset; 3]> {
    let parts = split_indices(ds.len(), fractions, seed)?;
    Ok(parts.map(|idx| Dataset {
        samples: idx.iter().map(|&k| ds.samples[k].clone()).collect(),
        meta: ds.meta.clone(),
    }))
}

/// Trains a surrogate on a dataset, optionally dropping the (lo, hi) GHz gap
/// first.
pub fn train_on_dataset(
    ds: &Dataset,
    gap: Option<(f64, f64)>,
    normalizer: &TargetNormalizer,
    sconfig: &SurrogateConfig,
    tconfig: &TrainConfig,
) -> Result<TrainOutcome> {
    let ds = match gap {
        Some((lo, hi)) => ds.filter_gap(lo, hi)?,
        None => ds.clone(),
    };
    surrogate::train(&ds.labeled_plates()?, normalizer, sconfig, tconfig)
}

/// Output files of one stats run, relative to the prefix.
pub const STATS_FILES: [&str; 7] = [
    "freq_pdf.csv",
    "freq_cdf.csv",
    "s21_pdf.csv",
    "s21_cdf.csv",
    "joint.csv",
    "freq_summary.csv",
    "s21_summary.csv",
];

/// Writes PDF/CDF histograms, summaries and the joint histogram as CSV.
pub fn write_stats(ds: &Dataset, bins: usize, gap: Option<(f64, f64)>, prefix: &str) -> Result<Vec<PathBuf>> {
    let ds = match gap {
        Some((lo, hi)) => ds.filter_gap(lo, hi)?,
        None => ds.clone(),
    };
    let fs_: Vec<f64> = ds.samples.iter().map(|s| s.f_res_ghz).collect();
    let ss: Vec<f64> = ds.samples.iter().map(|s| s.s21_db).collect();
    let f_pdf = stats::empirical_histogram(&fs_, bins, true)?;
    let s_pdf = stats::empirical_histogram(&ss, bins, true)?;
    let pairs: Vec<(f64, f64)> = fs_.iter().copied().zip(ss.iter().copied()).collect();
    let contents = [
        f_pdf.to_csv(),
        stats::cdf_from_histogram(&f_pdf).to_csv(),
        s_pdf.to_csv(),
        stats::cdf_from_histogram(&s_pdf).to_csv(),
        stats::joint_histogram(&pairs, bins, bins)?.to_csv(),
        stats::summary(&fs_, bins)?.to_csv(),
        stats::summary(&ss, bins)?.to_csv(),
    ];
    let mut written = Vec::new();
    for (name, body) in STATS_FILES.iter().zip(contents) {
        let path = PathBuf::from(format!("{prefix}{name}"));
        write_file(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub target: DesignTarget,
    pub evaluator: String,
    pub best_genome_hex: String,
    pub best_fitness: f64,
    pub predicted_f_ghz: f64,
    pub predicted_s21_db: f64,
    pub iterations_run: usize,
    pub evaluations: usize,
    pub wall_clock_seconds: f64,
    pub config: BpsoConfig,
}

pub const DESIGN_FILES: [&str; 4] = ["plate.csv", "plate.pbm", "history.csv", "report.json"];

/// Runs the swarm and writes the best plate (CSV, PBM), the history CSV and
/// a JSON report under `prefix`.
pub fn run_design(
    target: &DesignTarget,
    evaluator: &GenomeEvaluator,
    config: &BpsoConfig,
    prefix: &str,
) -> Result<DesignReport> {
    target.validate(evaluator.band_ghz())?;
    let start = Instant::now();
    let result = bpso::optimize(evaluator, target, config)?;
    let wall = start.elapsed().as_secs_f64();

    let plate = assemble_plate(&result.best_genome);
    let report = DesignReport {
        target: *target,
        evaluator: evaluator.name().to_string(),
        best_genome_hex: result.best_genome.to_hex(),
        best_fitness: result.best_fitness,
        predicted_f_ghz: result.best_point.f_res_ghz,
        predicted_s21_db: result.best_point.s21_db,
        iterations_run: result.iterations_run(),
        evaluations: evaluator.backend_calls(),
        wall_clock_seconds: wall,
        config: config.clone(),
    };
    let bodies = [
        plate.to_csv(),
        plate.to_pbm(),
        bpso::history_csv(&result.history),
        serde_json::to_string_pretty(&report)? + "\n",
    ];
    for (name, body) in DESIGN_FILES.iter().zip(bodies) {
        write_file(Path::new(&format!("{prefix}{name}")), body)?;
    }
    Ok(report)
}
