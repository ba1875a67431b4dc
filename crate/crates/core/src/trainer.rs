//! Training loop (Adam, per-epoch cosine learning rate, early stopping on
//! the validation loss) and test-set evaluation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{two_camera_chords, ContributionMatrix, Grid};
use crate::network::{cmatrix_block, load_checkpoint, save_checkpoint, Model};
use crate::nn::Tensor;
use crate::objective::{eps1_map, eps2_vector, metric_e1, metric_e2, pilf, LossConfig, PilfTerms};
use crate::phantom::{NoiseSpec, PhantomRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Loss1Only,
    Pilf,
}

fn d_lr0() -> f64 {
    1e-4
}
fn d_lr_min() -> f64 {
    1e-5
}
fn d_period() -> usize {
    50
}
fn d_max_epochs() -> usize {
    50
}
fn d_batch() -> usize {
    256
}
fn d_patience() -> usize {
    25
}
fn d_lambda() -> f64 {
    1e-4
}
fn d_true() -> bool {
    true
}
fn d_mode() -> LossMode {
    LossMode::Pilf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr0")]
    pub lr0: f64,
    #[serde(default = "d_lr_min")]
    pub lr_min: f64,
    /// Cosine period in epochs.
    #[serde(default = "d_period")]
    pub period: usize,
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_mode")]
    pub loss_mode: LossMode,
    #[serde(default = "d_true")]
    pub detach_weight: bool,
    /// Hard cap on optimizer steps across all epochs.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Keep one record per optimizer step in the history.
    #[serde(default = "d_true")]
    pub log_steps: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: d_lr0(),
            lr_min: d_lr_min(),
            period: d_period(),
            max_epochs: d_max_epochs(),
            batch_size: d_batch(),
            patience: d_patience(),
            lambda: d_lambda(),
            c1: 0.0,
            seed: 0,
            loss_mode: d_mode(),
            detach_weight: true,
            max_steps: None,
            log_steps: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr_min > 0.0 && self.lr_min < self.lr0 && self.lr0.is_finite()) {
            return bad(format!("need 0 < lr_min < lr0, got {} and {}", self.lr_min, self.lr0));
        }
        if self.period == 0 || self.max_epochs == 0 {
            return bad("period and max_epochs must be positive".into());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad(format!("patience {} must lie in 1..={}", self.patience, self.max_epochs));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        self.loss_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            c1: match self.loss_mode {
                LossMode::Loss1Only => 0.0,
                LossMode::Pilf => self.c1,
            },
            lambda: self.lambda,
            detach_weight: self.detach_weight,
        }
    }
}

pub fn cosine_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let t = epoch.min(cfg.period) as f64 / cfg.period as f64;
    cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Mean PILF weight over the epoch's steps.
    pub w2: f64,
    #[serde(rename = "E1_valid")]
    pub e1_valid: f64,
    #[serde(rename = "E2_valid")]
    pub e2_valid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub batch: usize,
    pub loss1: f64,
    pub loss2: f64,
    pub w2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    #[serde(default)]
    pub steps: Vec<StepRecord>,
    pub best_epoch: Option<usize>,
    pub stop_reason: Option<StopReason>,
}

impl TrainHistory {
    pub fn best_valid_loss(&self) -> Option<f64> {
        self.best_epoch
            .and_then(|e| self.epochs.iter().find(|r| r.epoch == e))
            .map(|r| r.valid_loss)
    }

    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Stops after `patience` consecutive epochs without a strict decrease of
/// the validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records one epoch's validation loss; returns whether it improved.
    pub fn observe(&mut self, valid_loss: f64) -> bool {
        let improved = self.best.is_none_or(|b| valid_loss < b);
        if improved {
            self.best = Some(valid_loss);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }
}

/// Adam with the conventional β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(model: &Model<f32>) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.value.len()).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    /// One update with the L2 gradient `2λw` folded into each parameter's gradient.
    pub fn step(&mut self, model: &mut Model<f32>, lr: f64, lambda: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        let decay = (2.0 * lambda) as f32;
        for ((p, m), v) in model.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data();
            for (((w, g), m), v) in p.value.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = *g + decay * *w;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step * *m / (v.sqrt() + eps);
            }
        }
    }

    fn export(&self, model: &Model<f32>) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        for ((p, m), v) in model.params().iter().zip(&self.m).zip(&self.v) {
            out.push((format!("adam.m.{}", p.name), Tensor::from_vec(&[m.len()], m.clone())));
            out.push((format!("adam.v.{}", p.name), Tensor::from_vec(&[v.len()], v.clone())));
        }
        out
    }

    fn import(
        model: &Model<f32>,
        t: u64,
        extra: &mut std::collections::BTreeMap<String, Tensor<f32>>,
    ) -> Result<Self> {
        let mut adam = Adam::new(model);
        adam.t = t;
        for ((p, m), v) in model.params().iter().zip(&mut adam.m).zip(&mut adam.v) {
            for (prefix, slot) in [("adam.m.", m), ("adam.v.", v)] {
                let key = format!("{prefix}{}", p.name);
                let t = extra
                    .remove(&key)
                    .ok_or_else(|| Error::SpecMismatch(format!("resume state lacks {key}")))?;
                if t.len() != slot.len() {
                    return Err(Error::shape(slot.len(), t.len()));
                }
                slot.copy_from_slice(t.data());
            }
        }
        Ok(adam)
    }
}

/// Parameter and buffer values, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot(Vec<Tensor<f32>>);

impl Snapshot {
    pub fn take(model: &Model<f32>) -> Self {
        let mut v: Vec<_> = model.params().iter().map(|p| p.value.clone()).collect();
        v.extend(model.buffers().iter().map(|b| b.value.clone()));
        Snapshot(v)
    }

    pub fn restore(&self, model: &mut Model<f32>) {
        let mut it = self.0.iter();
        for p in model.params_mut() {
            p.value = it.next().expect("snapshot matches model").clone();
        }
        for b in model.buffers_mut() {
            b.value = it.next().expect("snapshot matches model").clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResumeMeta {
    config: TrainConfig,
    next_epoch: usize,
    step: usize,
    stopper: EarlyStopping,
    adam_t: u64,
    history: TrainHistory,
}

/// Everything needed to continue a run after any completed epoch.
pub struct TrainState {
    pub model: Model<f32>,
    pub adam: Adam,
    pub next_epoch: usize,
    pub step: usize,
    pub stopper: EarlyStopping,
    pub history: TrainHistory,
    pub best: Option<Snapshot>,
}

impl TrainState {
    pub fn new(model: Model<f32>, cfg: &TrainConfig) -> Self {
        let adam = Adam::new(&model);
        TrainState {
            model,
            adam,
            next_epoch: 0,
            step: 0,
            stopper: EarlyStopping::new(cfg.patience),
            history: TrainHistory::default(),
            best: None,
        }
    }

    pub fn finished(&self) -> bool {
        self.history.stop_reason.is_some()
    }

    /// Writes the current weights, optimizer moments, best weights and
    /// history into one checkpoint.
    pub fn save(&self, cfg: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
        let mut extra = self.adam.export(&self.model);
        if let Some(best) = &self.best {
            let names = model_tensor_names(&self.model);
            extra.extend(names.into_iter().zip(&best.0).map(|(n, t)| (format!("best.{n}"), t.clone())));
        }
        let refs: Vec<(String, &Tensor<f32>)> = extra.iter().map(|(n, t)| (n.clone(), t)).collect();
        let meta = ResumeMeta {
            config: cfg.clone(),
            next_epoch: self.next_epoch,
            step: self.step,
            stopper: self.stopper.clone(),
            adam_t: self.adam.t,
            history: self.history.clone(),
        };
        save_checkpoint(&self.model, path, &refs, serde_json::to_value(meta)?)
    }

    /// Loads a state written by [`save`](Self::save) together with its config.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, TrainConfig)> {
        let path = path.as_ref();
        let ck = load_checkpoint(path)?;
        let meta: ResumeMeta = serde_json::from_value(ck.meta)
            .map_err(|e| Error::format(path, format!("not a training state: {e}")))?;
        let mut extra = ck.extra;
        let adam = Adam::import(&ck.model, meta.adam_t, &mut extra)?;
        let names = model_tensor_names(&ck.model);
        let best = if extra.keys().any(|k| k.starts_with("best.")) {
            let tensors = names
                .iter()
                .map(|n| {
                    extra
                        .remove(&format!("best.{n}"))
                        .ok_or_else(|| Error::SpecMismatch(format!("resume state lacks best.{n}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(Snapshot(tensors))
        } else {
            None
        };
        Ok((
            TrainState {
                model: ck.model,
                adam,
                next_epoch: meta.next_epoch,
                step: meta.step,
                stopper: meta.stopper,
                history: meta.history,
                best,
            },
            meta.config,
        ))
    }
}

fn model_tensor_names(model: &Model<f32>) -> Vec<String> {
    let mut v: Vec<_> = model.params().iter().map(|p| p.name.clone()).collect();
    v.extend(model.buffers().iter().map(|b| b.name.clone()));
    v
}

fn check_dims(model: &Model<f32>, set: &Dataset, cmatrix: &ContributionMatrix) -> Result<()> {
    let s = model.spec();
    if set.n() != s.n || set.numz() != s.numz || set.numr() != s.numr {
        return Err(Error::shape(
            format!("dataset ({}, {}, {})", s.n, s.numz, s.numr),
            format!("({}, {}, {})", set.n(), set.numz(), set.numr()),
        ));
    }
    set.check_cmatrix(cmatrix)
}

/// Fixed evaluation chunk; keeps memory bounded independent of set size.
const EVAL_CHUNK: usize = 128;

/// Eval-mode predictions for a whole dataset, `(m, numz·numr)` flattened.
pub fn predict_dataset(model: &Model<f32>, set: &Dataset, cmatrix: &ContributionMatrix) -> Result<Vec<f32>> {
    check_dims(model, set, cmatrix)?;
    let pi = if model.spec().use_pi {
        Some(model.pi_features(&cmatrix_block::<f32>(cmatrix))?)
    } else {
        None
    };
    let n = set.n();
    let mut out = Vec::with_capacity(set.m() * set.cells());
    for chunk in set.inputs().chunks(EVAL_CHUNK * n) {
        let x = Tensor::from_vec(&[chunk.len() / n, n], chunk.to_vec());
        out.extend_from_slice(model.predict(&x, pi.as_ref())?.data());
    }
    Ok(out)
}

/// Validation loss and metrics of a model in evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidStats {
    pub loss: f64,
    pub e1: f64,
    pub e2: f64,
}

/// The training objective (with the configured loss mode) evaluated on a
/// whole set at once.
pub fn validate_model(model: &Model<f32>, set: &Dataset, cmatrix: &ContributionMatrix, cfg: &TrainConfig) -> Result<ValidStats> {
    let preds = predict_dataset(model, set, cmatrix)?;
    let terms = pilf(&preds, set.labels(), set.inputs(), cmatrix, model.sum_squares(), &cfg.loss_config())?;
    Ok(ValidStats {
        loss: terms.total,
        e1: metric_e1(&preds, set.labels(), set.cells())?.value,
        e2: metric_e2(&preds, set.inputs(), cmatrix)?.value,
    })
}

/// Runs training to completion from `state`, calling `on_epoch` after every
/// finished epoch (for checkpointing). On return the state's model holds the
/// best-validation weights.
pub fn train_from(
    state: &mut TrainState,
    train_set: &Dataset,
    valid_set: &Dataset,
    cmatrix: &ContributionMatrix,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    check_dims(&state.model, train_set, cmatrix)?;
    check_dims(&state.model, valid_set, cmatrix)?;
    if train_set.m() == 0 || valid_set.m() == 0 {
        return Err(Error::InvalidCount("training and validation sets must be non-empty".into()));
    }
    let block = state.model.spec().use_pi.then(|| cmatrix_block::<f32>(cmatrix));
    let loss_cfg = cfg.loss_config();
    let (n, cells) = (train_set.n(), train_set.cells());

    while !state.finished() {
        let epoch = state.next_epoch;
        let lr = cosine_lr(epoch, cfg);
        let mut order: Vec<usize> = (0..train_set.m()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let (mut loss_sum, mut w2_sum, mut seen, mut batches) = (0.0, 0.0, 0usize, 0usize);
        let mut hit_cap = false;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|cap| state.step >= cap) {
                hit_cap = true;
                break;
            }
            let mut xs = Vec::with_capacity(idx.len() * n);
            let mut ys = Vec::with_capacity(idx.len() * cells);
            for &j in idx {
                xs.extend_from_slice(train_set.input(j));
                ys.extend_from_slice(train_set.label(j));
            }
            let x = Tensor::from_vec(&[idx.len(), n], xs);
            let model = &mut state.model;
            model.zero_grad();
            let pred = model.forward(&x, block.as_ref())?;
            let terms: PilfTerms<f32> = pilf(pred.data(), &ys, x.data(), cmatrix, model.sum_squares(), &loss_cfg)?;
            if !terms.total.is_finite() || !terms.grad.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            model.backward(&Tensor::from_vec(pred.shape(), terms.grad.clone()));
            state.adam.step(model, lr, cfg.lambda);
            if cfg.log_steps {
                state.history.steps.push(StepRecord {
                    step: state.step,
                    epoch,
                    batch: b,
                    loss1: terms.loss1,
                    loss2: terms.loss2,
                    w2: terms.w2,
                    total: terms.total,
                });
            }
            state.step += 1;
            loss_sum += terms.total * idx.len() as f64;
            w2_sum += terms.w2;
            seen += idx.len();
            batches += 1;
        }
        if batches == 0 {
            state.history.stop_reason = Some(StopReason::MaxSteps);
            break;
        }

        let v = validate_model(&state.model, valid_set, cmatrix, cfg)?;
        if !v.loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        state.history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            valid_loss: v.loss,
            w2: w2_sum / batches as f64,
            e1_valid: v.e1,
            e2_valid: v.e2,
        });
        let improved = state.stopper.observe(v.loss);
        if improved {
            state.history.best_epoch = Some(epoch);
            state.best = Some(Snapshot::take(&state.model));
        }
        log::info!(
            "epoch {epoch} lr {lr:.3e} train {:.4e} valid {:.4e} E1 {:.4e} E2 {:.4e}{}",
            loss_sum / seen as f64,
            v.loss,
            v.e1,
            v.e2,
            if improved { " *" } else { "" }
        );
        state.next_epoch += 1;
        state.history.stop_reason = if hit_cap || cfg.max_steps.is_some_and(|cap| state.step >= cap) {
            Some(StopReason::MaxSteps)
        } else if state.stopper.should_stop() {
            Some(StopReason::Patience)
        } else if state.next_epoch >= cfg.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        if state.finished() {
            if let Some(best) = &state.best {
                best.restore(&mut state.model);
            }
        }
        on_epoch(state)?;
    }
    Ok(())
}

/// Trains `model` and returns the best-validation model with its history.
pub fn train(
    model: Model<f32>,
    train_set: &Dataset,
    valid_set: &Dataset,
    cmatrix: &ContributionMatrix,
    cfg: &TrainConfig,
) -> Result<(Model<f32>, TrainHistory)> {
    let mut state = TrainState::new(model, cfg);
    train_from(&mut state, train_set, valid_set, cmatrix, cfg, |_| Ok(()))?;
    Ok((state.model, state.history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDump {
    pub index: usize,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub measurements: Vec<f64>,
    /// Back-projection of the prediction.
    pub back_projection: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
    #[serde(default)]
    pub samples: Vec<SampleDump>,
}

/// Scores given predictions; `dumps` leading samples get full per-sample detail.
pub fn evaluate_predictions(
    preds: &[f32],
    test_set: &Dataset,
    cmatrix: &ContributionMatrix,
    dumps: usize,
    dataset: &str,
    model: &str,
) -> Result<EvalReport> {
    test_set.check_cmatrix(cmatrix)?;
    if preds.len() != test_set.labels().len() {
        return Err(Error::shape(test_set.labels().len(), preds.len()));
    }
    let cells = test_set.cells();
    let e1 = metric_e1(preds, test_set.labels(), cells)?;
    let e2 = metric_e2(preds, test_set.inputs(), cmatrix)?;
    let samples = (0..dumps.min(test_set.m()))
        .map(|j| {
            let pred = &preds[j * cells..(j + 1) * cells];
            let pred64: Vec<f64> = pred.iter().map(|&v| f64::from(v)).collect();
            Ok(SampleDump {
                index: j,
                eps1: eps1_map(pred, test_set.label(j))?,
                eps2: eps2_vector(pred, test_set.input(j), cmatrix)?,
                measurements: test_set.input(j).iter().map(|&v| f64::from(v)).collect(),
                back_projection: cmatrix.forward_project(&pred64)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        dataset: dataset.to_string(),
        model: model.to_string(),
        e1: e1.value,
        e2: e2.value,
        samples,
    })
}

pub fn evaluate(
    model: &Model<f32>,
    test_set: &Dataset,
    cmatrix: &ContributionMatrix,
    dumps: usize,
    dataset: &str,
) -> Result<EvalReport> {
    let preds = predict_dataset(model, test_set, cmatrix)?;
    evaluate_predictions(&preds, test_set, cmatrix, dumps, dataset, &model.spec().name())
}

/// `dataset,model,E1,E2` rows.
pub fn table_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("dataset,model,E1,E2\n");
    for r in reports {
        out.push_str(&format!("{},{},{:.4e},{:.4e}\n", r.dataset, r.model, r.e1, r.e2));
    }
    out
}

/// Small configuration for runs that fit on a workstation CPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskPreset {
    pub grid: Grid,
    pub chords: usize,
    pub samples: usize,
    pub ratios: [f64; 3],
    pub rule: PhantomRule,
    pub noise: NoiseSpec,
    pub base_seed: u64,
    pub split_seed: u64,
    pub train: TrainConfig,
}

impl DeskPreset {
    pub fn clean() -> Self {
        DeskPreset {
            grid: Grid::new(1.0, 2.0, -0.6, 0.6, 18, 16).expect("valid grid"),
            chords: 20,
            samples: 2000,
            ratios: [0.7, 0.15, 0.15],
            rule: PhantomRule::default(),
            noise: NoiseSpec::none(),
            base_seed: 1000,
            split_seed: 7,
            train: TrainConfig {
                max_epochs: 20,
                period: 20,
                patience: 20,
                batch_size: 64,
                lr0: 1e-3,
                lr_min: 1e-4,
                ..TrainConfig::default()
            },
        }
    }

    pub fn noisy(level: f64) -> Self {
        DeskPreset {
            noise: NoiseSpec::gaussian_relative(level),
            ..Self::clean()
        }
    }

    pub fn chord_set(&self) -> Vec<crate::geometry::Chord> {
        two_camera_chords(&self.grid, self.chords)
    }
}
