use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{validate_fractions, SurrogateConfig, TargetNormalizer, TrainConfig};
use super::model::{build_model, loss_and_gradients_encoded, SurrogateModel};
use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::geometry::PlateMatrix;
use crate::sparams::ResonancePoint;

/// Momentum SGD: `v ← momentum·v − lr·g`, `w ← w + v`.
pub fn sgd_step(
    weights: &mut ModelWeights,
    grads: &ModelWeights,
    velocity: &mut ModelWeights,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    weights.check_layout(grads, "gradient")?;
    weights.check_layout(velocity, "velocity")?;
    for ((w, g), v) in weights
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut velocity.tensors)
    {
        for ((wk, &gk), vk) in w.data.iter_mut().zip(&g.data).zip(&mut v.data) {
            *vk = momentum * *vk - lr * gk;
            *wk += *vk;
        }
    }
    Ok(())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Domain(format!(
            "mae needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// Forward pass de-normalized into physical units and clamped to the
/// normalizer's ranges.
pub fn predict_physical(model: &SurrogateModel, normalizer: &TargetNormalizer, plate: &PlateMatrix) -> Result<ResonancePoint> {
    Ok(normalizer.denormalize_clamped(model.forward(plate)?))
}

/// Seeded shuffle of `0..n` sliced into ⌊f0·n⌋ / ⌊f1·n⌋ / remainder.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    validate_fractions(&fractions)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (fractions[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = (fractions[1] * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Config(format!(
            "{n} samples cannot fill train/validation/test splits with fractions {fractions:?}"
        )));
    }
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, test])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae_f_ghz: f64,
    pub val_mae_s21_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhysicalMae {
    pub f_ghz: f64,
    pub s21_db: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: SurrogateModel,
    pub history: Vec<EpochMetrics>,
    /// 1-based epoch whose snapshot was kept.
    pub best_epoch: usize,
    /// Validation MAE of a constant predictor at the train-split mean.
    pub baseline_val_mae: PhysicalMae,
    pub best_val_mae: PhysicalMae,
    pub test_mae: Option<PhysicalMae>,
    /// Set when the splits were overridden to train-only.
    pub degenerate: bool,
    pub split_sizes: [usize; 3],
}

pub fn history_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_mae_f_ghz,val_mae_s21_db\n");
    for m in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.epoch, m.train_loss, m.val_mae_f_ghz, m.val_mae_s21_db
        ));
    }
    out
}

struct Encoded {
    input: Vec<f64>,
    target: [f64; 2],
    physical: ResonancePoint,
}

fn evaluate(model: &SurrogateModel, normalizer: &TargetNormalizer, set: &[&Encoded]) -> PhysicalMae {
    let (mut ef, mut es) = (0.0, 0.0);
    for s in set {
        let p = normalizer.denormalize_clamped(model.forward_cached(&s.input).0);
        ef += (p.f_res_ghz - s.physical.f_res_ghz).abs();
        es += (p.s21_db - s.physical.s21_db).abs();
    }
    let n = set.len() as f64;
    PhysicalMae {
        f_ghz: ef / n,
        s21_db: es / n,
    }
}

fn constant_mae(train: &[&Encoded], set: &[&Encoded]) -> PhysicalMae {
    let n = train.len() as f64;
    let mf = train.iter().map(|s| s.physical.f_res_ghz).sum::<f64>() / n;
    let ms = train.iter().map(|s| s.physical.s21_db).sum::<f64>() / n;
    let m = set.len() as f64;
    PhysicalMae {
        f_ghz: set.iter().map(|s| (s.physical.f_res_ghz - mf).abs()).sum::<f64>() / m,
        s21_db: set.iter().map(|s| (s.physical.s21_db - ms).abs()).sum::<f64>() / m,
    }
}

/// Trains from a fresh He initialization and keeps the snapshot with the
/// lowest validation f-MAE + |S21|-MAE (physical units).
pub fn train(
    dataset: &[(PlateMatrix, ResonancePoint)],
    normalizer: &TargetNormalizer,
    sconfig: &SurrogateConfig,
    tconfig: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = build_model(sconfig, tconfig.seed)?;
    train_model(model, dataset, normalizer, tconfig)
}

/// Like [`train`], but continues from the given weights.
pub fn train_model(
    mut model: SurrogateModel,
    dataset: &[(PlateMatrix, ResonancePoint)],
    normalizer: &TargetNormalizer,
    tconfig: &TrainConfig,
) -> Result<TrainOutcome> {
    tconfig.validate()?;
    normalizer.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training needs at least one sample".into()));
    }

    let encoded = dataset
        .iter()
        .map(|(plate, p)| {
            Ok(Encoded {
                input: model.encode(plate)?,
                target: normalizer.normalize(p),
                physical: *p,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let split = if dataset.len() < 5 {
        Err(Error::Config(format!("training needs at least 5 samples, got {}", dataset.len())))
    } else {
        split_indices(dataset.len(), tconfig.split, tconfig.seed)
    };
    let (train_idx, val_idx, test_idx, degenerate) = match split {
        Ok([t, v, s]) => (t, v, s, false),
        Err(e) if tconfig.train_only_fallback => {
            warn!("{e}; training on all samples and validating on the train set");
            let all: Vec<usize> = (0..dataset.len()).collect();
            (all.clone(), all, Vec::new(), true)
        }
        Err(e) => return Err(e),
    };
    let pick = |idx: &[usize]| idx.iter().map(|&k| &encoded[k]).collect::<Vec<_>>();
    let (train_set, val_set, test_set) = (pick(&train_idx), pick(&val_idx), pick(&test_idx));

    let batch_size = tconfig.batch_size.min(train_set.len());
    let baseline_val_mae = constant_mae(&train_set, &val_set);
    info!(
        "training on {}/{}/{} samples, batch {batch_size}, {} epochs; baseline val MAE {:.4} GHz / {:.4} dB",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        tconfig.epochs,
        baseline_val_mae.f_ghz,
        baseline_val_mae.s21_db
    );

    let mut velocity = model.weights.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_rng = ChaCha8Rng::seed_from_u64(tconfig.seed ^ 0x5eed_0f_e90c);
    let mut history = Vec::with_capacity(tconfig.epochs);
    let mut best: Option<(f64, usize, ModelWeights, PhysicalMae)> = None;

    for epoch in 1..=tconfig.epochs {
        order.shuffle(&mut epoch_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(Vec<f64>, [f64; 2])> = chunk
                .iter()
                .map(|&k| (train_set[k].input.clone(), train_set[k].target))
                .collect();
            let (loss, grads) = loss_and_gradients_encoded(&model, &batch);
            loss_sum += loss * chunk.len() as f64;
            sgd_step(&mut model.weights, &grads, &mut velocity, tconfig.learning_rate, tconfig.momentum)?;
        }
        if !model.weights.all_finite() {
            return Err(Error::Model(format!("weights diverged at epoch {epoch}")));
        }
        let val = evaluate(&model, normalizer, &val_set);
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_mae_f_ghz: val.f_ghz,
            val_mae_s21_db: val.s21_db,
        };
        log::debug!("{metrics:?}");
        let score = val.f_ghz + val.s21_db;
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, epoch, model.weights.clone(), val));
        }
        history.push(metrics);
    }

    let (_, best_epoch, weights, best_val_mae) = best.expect("at least one epoch");
    model.weights = weights;
    let test_mae = (!test_set.is_empty()).then(|| evaluate(&model, normalizer, &test_set));
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        baseline_val_mae,
        best_val_mae,
        test_mae,
        degenerate,
        split_sizes: [train_set.len(), val_set.len(), test_set.len()],
    })
}
