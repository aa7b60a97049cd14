//! Binary particle swarm optimization over 147-bit plate genomes.
//!
//! Velocities are real-valued and clamped to ±v_max; each bit is resampled
//! every iteration as 1 with probability σ(v). Inertia decays linearly from
//! `inertia_start` to `inertia_end`. Random draws happen in a fixed order
//! (particle-major, dimension-minor, r1 r2 r3) in a serial phase, so parallel
//! fitness evaluation never changes results.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{assemble_plate, PlateGenome, GENOME_BITS};
use crate::oracle::synthetic_em;
use crate::sparams::ResonancePoint;
use crate::surrogate::{predict_physical, SurrogateModel, TargetNormalizer};

/// Frequency span used to scale the frequency error.
pub const FITNESS_BAND_GHZ: f64 = 4.0;
/// |S21| span used to scale the coupling shortfall.
pub const FITNESS_SPAN_DB: f64 = 13.0;

/// Anything that maps a genome to a predicted main resonance.
pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &PlateGenome) -> Result<ResonancePoint>;
}

impl<F> Evaluator for F
where
    F: Fn(&PlateGenome) -> Result<ResonancePoint> + Sync,
{
    fn evaluate(&self, genome: &PlateGenome) -> Result<ResonancePoint> {
        self(genome)
    }
}

pub enum Backend {
    Oracle,
    Surrogate {
        model: Box<SurrogateModel>,
        normalizer: TargetNormalizer,
    },
    /// Precomputed responses; unseen genomes are an error.
    Lookup(HashMap<PlateGenome, ResonancePoint>),
}

/// Uniform genome → plate → resonance adapter with memoization.
pub struct GenomeEvaluator {
    backend: Backend,
    cache: Mutex<HashMap<PlateGenome, ResonancePoint>>,
    backend_calls: AtomicUsize,
}

impl GenomeEvaluator {
    pub fn new(backend: Backend) -> Self {
        GenomeEvaluator {
            backend,
            cache: Mutex::new(HashMap::new()),
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn oracle() -> Self {
        GenomeEvaluator::new(Backend::Oracle)
    }

    pub fn surrogate(model: SurrogateModel, normalizer: TargetNormalizer) -> Self {
        GenomeEvaluator::new(Backend::Surrogate {
            model: Box::new(model),
            normalizer,
        })
    }

    pub fn lookup(table: HashMap<PlateGenome, ResonancePoint>) -> Self {
        GenomeEvaluator::new(Backend::Lookup(table))
    }

    pub fn name(&self) -> &'static str {
        match self.backend {
            Backend::Oracle => "oracle",
            Backend::Surrogate { .. } => "surrogate",
            Backend::Lookup(_) => "lookup",
        }
    }

    /// Frequency band the backend can report.
    pub fn band_ghz(&self) -> (f64, f64) {
        match &self.backend {
            Backend::Surrogate { normalizer, .. } => (normalizer.f_min, normalizer.f_max),
            _ => (1.0, 5.0),
        }
    }

    /// Number of uncached backend evaluations (model forwards, oracle calls,
    /// table lookups).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    fn compute(&self, genome: &PlateGenome) -> Result<ResonancePoint> {
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        match &self.backend {
            Backend::Oracle => Ok(synthetic_em(&assemble_plate(genome))),
            Backend::Surrogate { model, normalizer } => predict_physical(model, normalizer, &assemble_plate(genome)),
            Backend::Lookup(table) => table
                .get(genome)
                .copied()
                .ok_or_else(|| Error::Evaluator(format!("lookup table has no entry for genome {}", genome.to_hex()))),
        }
    }
}

impl Evaluator for GenomeEvaluator {
    fn evaluate(&self, genome: &PlateGenome) -> Result<ResonancePoint> {
        if let Some(p) = self.cache.lock().expect("cache lock").get(genome) {
            return Ok(*p);
        }
        let p = self.compute(genome)?;
        self.cache.lock().expect("cache lock").insert(*genome, p);
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignTarget {
    pub f_target_ghz: f64,
    pub s21_target_db: f64,
    /// Weight λ of the coupling shortfall term.
    pub weight_s21: f64,
}

impl DesignTarget {
    pub fn new(f_target_ghz: f64, s21_target_db: f64) -> Self {
        DesignTarget {
            f_target_ghz,
            s21_target_db,
            weight_s21: 1.0,
        }
    }

    pub fn validate(&self, band: (f64, f64)) -> Result<()> {
        if !(self.f_target_ghz >= band.0 && self.f_target_ghz <= band.1) {
            return Err(Error::Config(format!(
                "target frequency {} GHz outside evaluator band [{}, {}]",
                self.f_target_ghz, band.0, band.1
            )));
        }
        if !self.s21_target_db.is_finite() || !(self.weight_s21 >= 0.0) || !self.weight_s21.is_finite() {
            return Err(Error::Config("target |S21| must be finite and λ non-negative".into()));
        }
        Ok(())
    }
}

/// `|f − f*|/4 + λ·max(0, s* − s)/13`; zero iff the frequency is exact and
/// the coupling meets or exceeds the target.
pub fn fitness(point: &ResonancePoint, target: &DesignTarget) -> f64 {
    (point.f_res_ghz - target.f_target_ghz).abs() / FITNESS_BAND_GHZ
        + target.weight_s21 * (target.s21_target_db - point.s21_db).max(0.0) / FITNESS_SPAN_DB
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpsoConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub c1: f64,
    pub c2: f64,
    pub v_max: f64,
    pub seed: u64,
    /// Stop once the global best is at or below this fitness.
    pub stop_fitness: f64,
}

impl Default for BpsoConfig {
    fn default() -> Self {
        BpsoConfig {
            swarm_size: 30,
            max_iterations: 1000,
            inertia_start: 0.9,
            inertia_end: 0.4,
            c1: 2.0,
            c2: 2.0,
            v_max: 4.0,
            seed: 0,
            stop_fitness: 0.0,
        }
    }
}

impl BpsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::Config("swarm_size must be at least 2".into()));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::Config("v_max must be positive".into()));
        }
        if !(0.0 <= self.inertia_end && self.inertia_end <= self.inertia_start) {
            return Err(Error::Config("inertia must satisfy 0 <= end <= start".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::Config("c1 and c2 must be non-negative".into()));
        }
        Ok(())
    }

    /// Inertia weight at 0-based update `iteration`.
    pub fn inertia(&self, iteration: usize) -> f64 {
        if self.max_iterations <= 1 {
            return self.inertia_start;
        }
        let frac = (iteration.min(self.max_iterations - 1)) as f64 / (self.max_iterations - 1) as f64;
        self.inertia_start + (self.inertia_end - self.inertia_start) * frac
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vec<bool>,
    pub velocity: Vec<f64>,
    pub pbest_position: Vec<bool>,
    pub pbest_fitness: f64,
    pub pbest_point: ResonancePoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub gbest_position: Vec<bool>,
    pub gbest_fitness: f64,
    pub gbest_point: ResonancePoint,
}

fn genome_of(bits: &[bool]) -> PlateGenome {
    PlateGenome::from_bits(bits).expect("particle positions hold GENOME_BITS bits")
}

fn evaluate_positions<E: Evaluator + ?Sized>(
    positions: &[&[bool]],
    evaluator: &E,
    target: &DesignTarget,
) -> Result<Vec<(f64, ResonancePoint)>> {
    positions
        .par_iter()
        .enumerate()
        .map(|(k, bits)| {
            evaluator
                .evaluate(&genome_of(bits))
                .map(|p| (fitness(&p, target), p))
                .map_err(|e| Error::Particle {
                    particle: k,
                    source: Box::new(e),
                })
        })
        .collect()
}

impl Swarm {
    /// Uniform random positions, zero velocities, evaluated once.
    pub fn initialize<E: Evaluator + ?Sized>(
        evaluator: &E,
        target: &DesignTarget,
        config: &BpsoConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Swarm> {
        let positions: Vec<Vec<bool>> = (0..config.swarm_size)
            .map(|_| (0..GENOME_BITS).map(|_| rng.random::<bool>()).collect())
            .collect();
        let refs: Vec<&[bool]> = positions.iter().map(Vec::as_slice).collect();
        let evals = evaluate_positions(&refs, evaluator, target)?;

        let mut best = 0;
        for (k, e) in evals.iter().enumerate() {
            if e.0 < evals[best].0 {
                best = k;
            }
        }
        let particles = positions
            .into_iter()
            .zip(&evals)
            .map(|(position, &(f, p))| Particle {
                velocity: vec![0.0; GENOME_BITS],
                pbest_position: position.clone(),
                position,
                pbest_fitness: f,
                pbest_point: p,
            })
            .collect::<Vec<_>>();
        Ok(Swarm {
            gbest_position: particles[best].position.clone(),
            gbest_fitness: evals[best].0,
            gbest_point: evals[best].1,
            particles,
        })
    }

    pub fn gbest_genome(&self) -> PlateGenome {
        genome_of(&self.gbest_position)
    }
}

/// One synchronous update: move every particle with the previous global
/// best, then evaluate and update bests (ties keep the incumbent).
pub fn step<E: Evaluator + ?Sized>(
    swarm: &mut Swarm,
    evaluator: &E,
    target: &DesignTarget,
    iteration: usize,
    config: &BpsoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let w = config.inertia(iteration);
    let gbest = &swarm.gbest_position;
    for p in &mut swarm.particles {
        for j in 0..GENOME_BITS {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let x = p.position[j] as u8 as f64;
            let pb = p.pbest_position[j] as u8 as f64;
            let gb = gbest[j] as u8 as f64;
            let v = w * p.velocity[j] + config.c1 * r1 * (pb - x) + config.c2 * r2 * (gb - x);
            p.velocity[j] = v.clamp(-config.v_max, config.v_max);
            let r3: f64 = rng.random();
            p.position[j] = r3 < sigmoid(p.velocity[j]);
        }
    }

    let refs: Vec<&[bool]> = swarm.particles.iter().map(|p| p.position.as_slice()).collect();
    let evals = evaluate_positions(&refs, evaluator, target)?;

    for (p, &(f, point)) in swarm.particles.iter_mut().zip(&evals) {
        if f < p.pbest_fitness {
            p.pbest_fitness = f;
            p.pbest_point = point;
            p.pbest_position.clone_from(&p.position);
        }
        if f < swarm.gbest_fitness {
            swarm.gbest_fitness = f;
            swarm.gbest_point = point;
            swarm.gbest_position.clone_from(&p.position);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    /// 0 = after initialization, k = after the k-th update.
    pub iteration: usize,
    pub gbest_fitness: f64,
    pub gbest_point: ResonancePoint,
    pub gbest_genome_hex: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeResult {
    pub best_genome: PlateGenome,
    pub best_fitness: f64,
    pub best_point: ResonancePoint,
    pub history: Vec<IterationRecord>,
}

impl OptimizeResult {
    /// Number of swarm updates performed.
    pub fn iterations_run(&self) -> usize {
        self.history.len() - 1
    }
}

fn record(swarm: &Swarm, iteration: usize) -> IterationRecord {
    IterationRecord {
        iteration,
        gbest_fitness: swarm.gbest_fitness,
        gbest_point: swarm.gbest_point,
        gbest_genome_hex: swarm.gbest_genome().to_hex(),
    }
}

pub fn optimize<E: Evaluator + ?Sized>(evaluator: &E, target: &DesignTarget, config: &BpsoConfig) -> Result<OptimizeResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut swarm = Swarm::initialize(evaluator, target, config, &mut rng)?;
    let mut history = vec![record(&swarm, 0)];
    for t in 0..config.max_iterations {
        if swarm.gbest_fitness <= config.stop_fitness {
            break;
        }
        step(&mut swarm, evaluator, target, t, config, &mut rng)?;
        history.push(record(&swarm, t + 1));
    }
    Ok(OptimizeResult {
        best_genome: swarm.gbest_genome(),
        best_fitness: swarm.gbest_fitness,
        best_point: swarm.gbest_point,
        history,
    })
}

/// Columns `iteration,gbest_fitness,gbest_f_ghz,gbest_s21_db,gbest_genome_hex`.
pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,gbest_fitness,gbest_f_ghz,gbest_s21_db,gbest_genome_hex\n");
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.gbest_fitness, r.gbest_point.f_res_ghz, r.gbest_point.s21_db, r.gbest_genome_hex
        )
        .expect("String write");
    }
    out
}

/// Best of `samples` uniformly random genomes (a baseline for the swarm).
pub fn random_search<E: Evaluator + ?Sized>(
    evaluator: &E,
    target: &DesignTarget,
    samples: usize,
    seed: u64,
) -> Result<(PlateGenome, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(PlateGenome, f64)> = None;
    for _ in 0..samples {
        let g = crate::geometry::random_genome_with(&mut rng);
        let f = fitness(&evaluator.evaluate(&g)?, target);
        if best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((g, f));
        }
    }
    best.ok_or_else(|| Error::Config("random search needs at least one sample".into()))
}
