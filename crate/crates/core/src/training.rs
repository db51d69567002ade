//! Training corpus generation, optimizers, the early-stopping training loop
//! and the two scalar helpers used to set up and judge experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_awgn, demap_llr, derive_rng, modulate, ModScheme, NoiseSpec};
use crate::error::{Error, Result};
use crate::frame::LlrFrame;
use crate::net::{forward, init_weights, loss_and_gradients, Gradients, TrainingInfo, WeightSet, WeightVariant};
use crate::siso::{turbo_decode, SisoMode};
use crate::trellis::TurboCode;

/// Noise variance used to demap when the channel is noiseless.
pub const NOISELESS_SIGMA2: f64 = 0.1;

const STREAM_DATASET: u64 = 0x7472_6169_6e00;
const STREAM_SHUFFLE: u64 = 0x7368_7566_0000;

/// Samples per parallel gradient task. Fixed, so the reduction order (and
/// therefore every bit of the result) does not depend on the thread count.
const GRAD_CHUNK: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub frame: LlrFrame,
    /// Posterior LLRs of the exact-mode turbo decoder.
    pub target_llrs: Vec<f64>,
    pub info_bits: Vec<u8>,
}

/// Draws random info bits and passes them through encoder, modulator,
/// channel, demapper and de-puncturer. An infinite `ebno_db` skips the noise.
pub fn transmit<R: Rng + ?Sized>(
    code: &TurboCode,
    scheme: &ModScheme,
    ebno_db: f64,
    rng: &mut R,
) -> Result<(Vec<u8>, LlrFrame)> {
    let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
    let frame = transmit_bits(code, scheme, ebno_db, &info, rng)?;
    Ok((info, frame))
}

/// [`transmit`] for given info bits.
pub fn transmit_bits<R: Rng + ?Sized>(
    code: &TurboCode,
    scheme: &ModScheme,
    ebno_db: f64,
    info: &[u8],
    rng: &mut R,
) -> Result<LlrFrame> {
    let bits = code.encode(info)?;
    let tx = modulate(&bits, scheme);
    let (rx, sigma2) = if ebno_db == f64::INFINITY {
        (tx.symbols, NOISELESS_SIGMA2)
    } else {
        let noise = NoiseSpec::new(ebno_db, code.config.effective_rate(), scheme.kind)?;
        (apply_awgn(&tx.symbols, scheme.kind, noise.sigma2, rng), noise.sigma2)
    };
    let mut llrs = demap_llr(&rx, scheme, sigma2)?;
    llrs.truncate(bits.len());
    code.frame(&llrs)
}

/// `n` samples at `snr_db` with targets from `target_iters` exact-mode
/// iterations. Sample `i` depends only on `(seed, i)`.
pub fn generate_dataset(
    n: usize,
    code: &TurboCode,
    scheme: &ModScheme,
    snr_db: f64,
    target_iters: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(seed, STREAM_DATASET, i as u64);
            let (info_bits, frame) = transmit(code, scheme, snr_db, &mut rng)?;
            let target = turbo_decode(&frame, code, target_iters, SisoMode::Exact)?;
            Ok(Sample {
                frame,
                target_llrs: target.posterior,
                info_bits,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            OptimizerKind::Sgd => "sgd".into(),
            OptimizerKind::Adam { beta1, beta2, eps } => format!("adam(beta1={beta1}, beta2={beta2}, eps={eps})"),
        }
    }
}

/// Optimizer with its per-weight state.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            m: Vec::new(),
            v: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates `params` in place with gradient `grad`. The shape is fixed by
    /// the first call.
    pub fn step_flat(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || (self.steps > 0 && self.m.len() != params.len()) {
            return Err(Error::Invalid(format!(
                "optimizer shape mismatch: {} weights, {} gradients, state for {}",
                params.len(),
                grad.len(),
                if self.steps > 0 { self.m.len() } else { params.len() }
            )));
        }
        let lr = self.learning_rate;
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                self.m.resize(params.len(), 0.0);
                for (w, g) in params.iter_mut().zip(grad) {
                    *w -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.m.resize(params.len(), 0.0);
                self.v.resize(params.len(), 0.0);
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    pub fn step(&mut self, weights: &mut WeightSet, grads: &Gradients) -> Result<()> {
        let mut flat = weights.to_flat();
        self.step_flat(&mut flat, &grads.to_flat())?;
        weights.set_flat(&flat)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub train_snr_db: f64,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// `(train, validation)` parts of the corpus.
    pub split_ratio: (usize, usize),
    pub target_iters: usize,
    pub units: usize,
    pub variant: WeightVariant,
    pub master_seed: u64,
}

impl TrainConfig {
    /// Defaults for a variant: Adam, batch 500, T = 6, M = 3, 3:1 split,
    /// learning rate 1e-5 for the full network and 8e-4 otherwise.
    pub fn defaults(variant: WeightVariant) -> Self {
        Self {
            train_snr_db: 0.0,
            epochs_max: if variant == WeightVariant::Full { 50 } else { 10 },
            batch_size: 500,
            learning_rate: if variant == WeightVariant::Full { 1e-5 } else { 8e-4 },
            optimizer: OptimizerKind::adam(),
            split_ratio: (3, 1),
            target_iters: 6,
            units: 3,
            variant,
            master_seed: 1,
        }
    }

    /// Number of training samples out of `n`.
    pub fn train_len(&self, n: usize) -> Result<usize> {
        let (a, b) = self.split_ratio;
        if a + b == 0 {
            return Err(Error::Config("split ratio must not be 0:0".into()));
        }
        Ok(n * a / (a + b))
    }
}

/// One row of the training history. Epoch 0 is the untrained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub validation_ber: f64,
    pub validation_loss: f64,
    /// Whether this epoch's parameters became the stored checkpoint.
    pub stored: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: WeightSet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Summed loss and gradients over `samples`, reduced in a fixed order.
pub fn batch_gradients(samples: &[&Sample], weights: &WeightSet, code: &TurboCode) -> Result<(f64, Gradients)> {
    let partial: Vec<(f64, Gradients)> = samples
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut total = weights.zeros_like();
            let mut loss = 0.0;
            for s in chunk {
                let (l, g) = loss_and_gradients(&s.frame, &s.target_llrs, weights, code)?;
                loss += l;
                total.add_assign(&g);
            }
            Ok((loss, total))
        })
        .collect::<Result<_>>()?;
    let mut total = weights.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &partial {
        loss += l;
        total.add_assign(g);
    }
    Ok((loss, total))
}

/// Bit error rate and mean loss of the network on `samples`.
pub fn evaluate(samples: &[Sample], weights: &WeightSet, code: &TurboCode) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty set".into()));
    }
    let per: Vec<(u64, f64)> = samples
        .par_iter()
        .map(|s| {
            let out = forward(&s.frame, weights, code, false)?;
            let errors = out
                .posterior
                .iter()
                .zip(&s.info_bits)
                .filter(|(l, &b)| ((**l >= 0.0) as u8) != b)
                .count() as u64;
            Ok((errors, crate::net::loss(&out.posterior, &s.target_llrs)?))
        })
        .collect::<Result<_>>()?;
    let errors: u64 = per.iter().map(|p| p.0).sum();
    let loss: f64 = per.iter().map(|p| p.1).sum();
    let bits = (samples.len() * code.k()) as f64;
    Ok((errors as f64 / bits, loss / samples.len() as f64))
}

/// Trains from all-ones weights with early stopping on validation BER.
///
/// After every epoch the parameters are stored if validation BER strictly
/// improved on the best so far; training stops at the first epoch whose BER
/// is higher than the previous epoch's, or after `epochs_max` epochs. The
/// stored parameters are returned.
pub fn train_early_stopping(dataset: &[Sample], code: &TurboCode, config: &TrainConfig) -> Result<TrainOutcome> {
    let n_train = config.train_len(dataset.len())?;
    let (train, validation) = dataset.split_at(n_train);
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Config(format!(
            "split {}:{} of {} samples leaves an empty part",
            config.split_ratio.0,
            config.split_ratio.1,
            dataset.len()
        )));
    }
    if config.batch_size == 0 || train.len() < config.batch_size {
        return Err(Error::Config(format!(
            "batch size {} needs at least that many training samples (have {})",
            config.batch_size,
            train.len()
        )));
    }
    let mut weights = init_weights(code.k(), config.units, config.variant)?;
    weights.meta.rate = Some(code.config.rate);
    weights.meta.interleaver = Some(code.interleaver.descriptor());
    weights.meta.training = Some(TrainingInfo {
        train_snr_db: config.train_snr_db,
        epochs: 0,
        batch: config.batch_size,
        learning_rate: config.learning_rate,
        target_t: config.target_iters,
        master_seed: config.master_seed,
        optimizer: Some(config.optimizer.describe()),
    });
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);

    let (ber0, vloss0) = evaluate(validation, &weights, code)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: None,
        validation_ber: ber0,
        validation_loss: vloss0,
        stored: true,
    }];
    let mut best = weights.clone();
    let mut best_ber = ber0;
    let mut best_epoch = 0;
    let mut prev_ber = ber0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs_max {
        order.sort_unstable();
        order.shuffle(&mut derive_rng(config.master_seed, STREAM_SHUFFLE, epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, mut grads) = batch_gradients(&batch, &weights, code)?;
            grads.scale(1.0 / batch.len() as f64);
            optimizer.step(&mut weights, &grads)?;
            loss_sum += loss / batch.len() as f64;
            batches += 1;
        }
        let (ber, vloss) = evaluate(validation, &weights, code)?;
        let stored = ber < best_ber;
        if stored {
            best = weights.clone();
            best_ber = ber;
            best_epoch = epoch;
        }
        history.push(EpochRecord {
            epoch,
            train_loss: Some(loss_sum / batches as f64),
            validation_ber: ber,
            validation_loss: vloss,
            stored,
        });
        if ber > prev_ber {
            break;
        }
        prev_ber = ber;
    }
    if let Some(info) = best.meta.training.as_mut() {
        info.epochs = best_epoch;
    }
    Ok(TrainOutcome {
        weights: best,
        history,
        best_epoch,
    })
}

/// Normalized validation error: mean of `ber_dnn[l] / ber_map[l]`.
pub fn nve(ber_dnn: &[f64], ber_map: &[f64]) -> Result<f64> {
    if ber_dnn.is_empty() || ber_dnn.len() != ber_map.len() {
        return Err(Error::Invalid(format!(
            "nve needs two non-empty lists of equal length (got {} and {})",
            ber_dnn.len(),
            ber_map.len()
        )));
    }
    if let Some(l) = ber_map.iter().position(|&b| b == 0.0) {
        return Err(Error::Invalid(format!("reference BER at point {l} is 0; ratio undefined")));
    }
    let sum: f64 = ber_dnn.iter().zip(ber_map).map(|(d, m)| d / m).sum();
    Ok(sum / ber_dnn.len() as f64)
}

/// Training SNR suggestion for BPSK: `min(test_snr_db, 10 log10(2^(2 rate) - 1))`.
/// Not meant for higher-order modulation.
pub fn heuristic_train_snr(test_snr_db: f64, rate: f64) -> f64 {
    let cap = 10.0 * (2f64.powf(2.0 * rate) - 1.0).log10();
    test_snr_db.min(cap)
}
