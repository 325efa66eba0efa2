//! Adam, segmented mini-batch training with early stopping, and a
//! finite-difference gradient checker shared by every trainable model.

use std::ops::Range;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agmpnn::AgmpnnModel;
use crate::error::{DpdError, Result};
use crate::exec::{self, Mode};
use crate::rvftdnn::RvftdnnModel;
use crate::signal::{nmse_slices, ComplexSequence, TapWindow};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Segments per optimizer step.
    pub batch_size: usize,
    pub segment_len: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Fraction of segments used for training; the rest validate.
    pub train_fraction: f64,
    pub exec: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 50,
            segment_len: 1024,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            train_fraction: 0.8,
            exec: Mode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.batch_size > 0
            && self.segment_len > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.train_fraction > 0.0
            && self.train_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(DpdError::arg(format!("invalid training configuration: {self:?}")))
        }
    }
}

/// Anything the training loop can optimize.
pub trait Trainable: Clone + Send + Sync {
    fn window(&self) -> TapWindow;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]) -> Result<()>;
    /// Sum of squared errors over `range` and the gradient of that sum.
    fn loss_grad_sum(&self, x: &[Complex64], target: &[Complex64], range: Range<usize>) -> (f64, Vec<f64>);
    fn predict_range(&self, x: &[Complex64], range: Range<usize>) -> Vec<Complex64>;
}

impl Trainable for AgmpnnModel {
    fn window(&self) -> TapWindow {
        self.window
    }
    fn params(&self) -> Vec<f64> {
        AgmpnnModel::params(self)
    }
    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        AgmpnnModel::set_params(self, p)
    }
    fn loss_grad_sum(&self, x: &[Complex64], target: &[Complex64], range: Range<usize>) -> (f64, Vec<f64>) {
        let (sse, g) = self.backward_sum(x, target, range);
        (sse, g.to_flat())
    }
    fn predict_range(&self, x: &[Complex64], range: Range<usize>) -> Vec<Complex64> {
        self.forward_range(x, range)
    }
}

impl Trainable for RvftdnnModel {
    fn window(&self) -> TapWindow {
        self.window
    }
    fn params(&self) -> Vec<f64> {
        RvftdnnModel::params(self)
    }
    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        RvftdnnModel::set_params(self, p)
    }
    fn loss_grad_sum(&self, x: &[Complex64], target: &[Complex64], range: Range<usize>) -> (f64, Vec<f64>) {
        self.backward_sum(x, target, range)
    }
    fn predict_range(&self, x: &[Complex64], range: Range<usize>) -> Vec<Complex64> {
        self.forward_range(x, range)
    }
}

/// Aligned `(input, target)` pair cut into contiguous segments.
///
/// Segments index into the full sequences, so tap windows at a segment's
/// start read real neighbouring samples. Only the outer edges, where a
/// window would be zero-filled, are dropped.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub input: ComplexSequence,
    pub target: ComplexSequence,
    pub train: Vec<Range<usize>>,
    pub val: Vec<Range<usize>>,
}

impl Dataset {
    pub fn segmented(
        input: ComplexSequence,
        target: ComplexSequence,
        window: TapWindow,
        segment_len: usize,
        train_fraction: f64,
    ) -> Result<Self> {
        if input.len() != target.len() {
            return Err(DpdError::arg("input and target lengths differ"));
        }
        if segment_len == 0 {
            return Err(DpdError::arg("segment length must be positive"));
        }
        let usable = window.interior(input.len());
        let segments: Vec<Range<usize>> = usable
            .clone()
            .step_by(segment_len)
            .map(|s| s..(s + segment_len).min(usable.end))
            .collect();
        if segments.len() < 2 {
            return Err(DpdError::arg(format!(
                "{} usable samples make {} segment(s) of {}; need at least 2",
                usable.len(),
                segments.len(),
                segment_len
            )));
        }
        let n_train = ((segments.len() as f64 * train_fraction).round() as usize).clamp(1, segments.len() - 1);
        let val = segments[n_train..].to_vec();
        let mut train = segments;
        train.truncate(n_train);
        Ok(Self { input, target, train, val })
    }

    /// Contiguous span covered by the training segments.
    pub fn train_span(&self) -> Range<usize> {
        self.train[0].start..self.train[self.train.len() - 1].end
    }

    pub fn val_span(&self) -> Range<usize> {
        self.val[0].start..self.val[self.val.len() - 1].end
    }

    pub fn val_targets(&self) -> Vec<Complex64> {
        self.val.iter().flat_map(|r| self.target.samples()[r.clone()].iter().copied()).collect()
    }
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(DpdError::arg(format!(
            "adam shape mismatch: {} params, {} grads, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nmse_db: f64,
}

/// Per-epoch trace. Epoch 0 is the model as handed to [`train`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_nmse_db(&self) -> f64 {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch).map_or(f64::INFINITY, |e| e.val_nmse_db)
    }

    pub fn initial_val_nmse_db(&self) -> f64 {
        self.epochs.first().map_or(f64::INFINITY, |e| e.val_nmse_db)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_nmse_db"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), format!("{:e}", e.train_loss), format!("{}", e.val_nmse_db)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Patience-based stopping on a minimized metric.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_epoch: usize,
    best_value: f64,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best_epoch: 0, best_value: f64::INFINITY }
    }

    /// Record an epoch; returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if value < self.best_value {
            self.best_value = value;
            self.best_epoch = epoch;
            false
        } else {
            epoch - self.best_epoch >= self.patience
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_value(&self) -> f64 {
        self.best_value
    }
}

/// Validation NMSE of `model` on the dataset's validation segments.
pub fn validation_nmse<M: Trainable>(model: &M, data: &Dataset, mode: Mode) -> Result<f64> {
    let x = data.input.samples();
    let preds = exec::map_ordered(mode, &data.val, |r| model.predict_range(x, r.clone()));
    nmse_slices(&preds.concat(), &data.val_targets())
}

fn batch_loss_grad<M: Trainable>(model: &M, data: &Dataset, segments: &[Range<usize>], mode: Mode) -> (f64, Vec<f64>, usize) {
    let (x, y) = (data.input.samples(), data.target.samples());
    let parts = exec::map_ordered(mode, segments, |r| model.loss_grad_sum(x, y, r.clone()));
    let count: usize = segments.iter().map(|r| r.len()).sum();
    let mut iter = parts.into_iter();
    let (mut sse, mut grad) = iter.next().expect("non-empty batch");
    for (s, g) in iter {
        sse += s;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    (sse, grad, count)
}

/// Mini-batch Adam on per-sample MSE with validation-NMSE early stopping.
///
/// Segments are reshuffled every epoch from `cfg.seed`. The returned model
/// carries the parameters of the best validation epoch, epoch 0 included.
pub fn train<M: Trainable>(mut model: M, data: &Dataset, cfg: &TrainConfig) -> Result<(M, TrainHistory)> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(DpdError::arg("training needs at least one training and one validation segment"));
    }
    let mode = cfg.exec;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut history = TrainHistory::default();

    let (sse0, _, count0) = batch_loss_grad(&model, data, &data.train, mode);
    let val0 = validation_nmse(&model, data, mode)?;
    history.epochs.push(EpochRecord { epoch: 0, train_loss: sse0 / count0 as f64, val_nmse_db: val0 });
    let mut stopper = EarlyStopping::new(cfg.patience);
    stopper.observe(0, val0);
    let mut best_params = params.clone();

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut stopped = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut epoch_sse, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let segments: Vec<Range<usize>> = batch.iter().map(|&i| data.train[i].clone()).collect();
            let (sse, mut grad, count) = batch_loss_grad(&model, data, &segments, mode);
            if !sse.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(DpdError::Diverged(format!("non-finite loss or gradient at epoch {epoch}")));
            }
            let inv = 1.0 / count as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam_step(&mut adam, &mut params, &grad, cfg)?;
            model.set_params(&params)?;
            epoch_sse += sse;
            epoch_count += count;
        }
        let val = validation_nmse(&model, data, mode)?;
        if !val.is_finite() {
            return Err(DpdError::Diverged(format!("validation NMSE is {val} at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord { epoch, train_loss: epoch_sse / epoch_count as f64, val_nmse_db: val });
        stopped = epoch;
        let stop = stopper.observe(epoch, val);
        if stopper.best_epoch() == epoch {
            best_params.clone_from(&params);
        }
        if stop {
            break;
        }
    }
    model.set_params(&best_params)?;
    history.best_epoch = stopper.best_epoch();
    history.stopped_epoch = stopped;
    Ok((model, history))
}

/// Largest relative disagreement between analytic gradients of the mean
/// squared error and central differences with step `h`. Relative errors use
/// `max(|analytic|, |numeric|, 1e-7)` as the denominator.
pub fn finite_diff_check<M: Trainable>(model: &M, input: &ComplexSequence, target: &ComplexSequence, range: Range<usize>, h: f64) -> Result<f64> {
    if range.is_empty() {
        return Err(DpdError::arg("finite-difference check over an empty range"));
    }
    if input.len() != target.len() || range.end > input.len() {
        return Err(DpdError::arg("finite-difference check: range or lengths do not match"));
    }
    let (x, y) = (input.samples(), target.samples());
    let n = range.len() as f64;
    let (_, analytic) = model.loss_grad_sum(x, y, range.clone());
    let base = model.params();
    let mut probe = model.clone();
    let mut loss_at = |p: &[f64]| -> Result<f64> {
        probe.set_params(p)?;
        Ok(probe.loss_grad_sum(x, y, range.clone()).0 / n)
    };
    let mut worst = 0.0f64;
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + h;
        let up = loss_at(&p)?;
        p[i] = base[i] - h;
        let down = loss_at(&p)?;
        p[i] = base[i];
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i] / n;
        let denom = a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agmpnn::InitOptions;
    use crate::mpm::{build_basis, ls_fit, mpm_predict, MpmCoefficients, MpmSpec};
    use crate::signal::generate_waveform;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(2);
        st.m = vec![0.5, -0.5];
        st.v = vec![0.25, 0.25];
        let mut p = vec![1.0, 2.0];
        adam_step(&mut st, &mut p, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(st.m, vec![0.45, -0.45]);
        assert!(st.v[0] < 0.25);
        assert_eq!(st.step, 1);
        let mut fresh = AdamState::new(2);
        let mut q = vec![1.0, 2.0];
        adam_step(&mut fresh, &mut q, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(q, vec![1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        let cfg = TrainConfig::default();
        for g in [3.0, -0.02, 1e3] {
            let mut st = AdamState::new(1);
            let mut p = vec![0.0];
            adam_step(&mut st, &mut p, &[g], &cfg).unwrap();
            let expect = -cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((p[0] - expect).abs() < 1e-15);
            assert!((p[0].abs() - cfg.learning_rate).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_two_steps_match_hand_trace() {
        let cfg = TrainConfig { learning_rate: 0.1, ..TrainConfig::default() };
        let g = 0.5;
        let mut st = AdamState::new(1);
        let mut p = vec![1.0];
        adam_step(&mut st, &mut p, &[g], &cfg).unwrap();
        adam_step(&mut st, &mut p, &[g], &cfg).unwrap();
        // by hand: m1 = .05, v1 = .00025, m2 = .095, v2 = .00049975
        let m2 = 0.9 * 0.05 + 0.1 * 0.5;
        let v2: f64 = 0.999 * 0.00025 + 0.001 * 0.25;
        let step1 = 0.1 * (0.05 / 0.1) / ((0.00025f64 / 0.001).sqrt() + 1e-8);
        let step2 = 0.1 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.998001)).sqrt() + 1e-8);
        assert!((p[0] - (1.0 - step1 - step2)).abs() < 1e-12);
        assert!(adam_step(&mut st, &mut p, &[1.0, 2.0], &cfg).is_err());
    }

    #[test]
    fn early_stopping_rule() {
        let mut stop = EarlyStopping::new(3);
        let curve = [5.0, 4.0, 3.0, 3.5, 3.6, 3.7, 3.8];
        let mut stopped = None;
        for (epoch, v) in curve.iter().enumerate() {
            if stop.observe(epoch, *v) {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stop.best_epoch(), 2);
        assert_eq!(stopped, Some(2 + 3));
    }

    #[test]
    fn dataset_segmentation() {
        let x = generate_waveform(1, 1000, 0.5).unwrap();
        let d = Dataset::segmented(x.clone(), x.clone(), TapWindow::causal_taps(4), 100, 0.8).unwrap();
        assert_eq!(d.train[0], 3..103);
        assert_eq!(d.train.len() + d.val.len(), 10);
        assert_eq!(d.val.last().unwrap().end, 1000);
        assert_eq!(d.train_span().end, d.val_span().start);
        assert!(Dataset::segmented(x.clone(), x, TapWindow::causal_taps(4), 2000, 0.8).is_err());
    }

    fn planted(seed: u64) -> (MpmCoefficients, ComplexSequence, ComplexSequence) {
        let psi = generate_waveform(seed, 16_384, 0.4).unwrap();
        let spec = MpmSpec::new(TapWindow::causal_taps(2), 2, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lambda: Vec<Complex64> = (0..4).map(|_| c(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))).collect();
        lambda[0] = c(1.0, 0.1);
        let truth = MpmCoefficients::new(spec, lambda).unwrap();
        let phi = mpm_predict(&truth, &psi);
        (truth, psi, phi)
    }

    #[test]
    fn training_at_the_truth_does_not_move() {
        let (truth, psi, phi) = planted(2);
        let opts = InitOptions { warm_start: Some(&truth), warm_noise: 0.0, ..Default::default() };
        let model = AgmpnnModel::init(truth.spec.window, 2, 1, &opts).unwrap();
        let data = Dataset::segmented(psi, phi, model.window, 1024, 0.8).unwrap();
        let cfg = TrainConfig { max_epochs: 5, patience: 2, ..TrainConfig::default() };
        let (trained, _) = train(model.clone(), &data, &cfg).unwrap();
        for (a, b) in trained.params().iter().zip(model.params()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn cold_start_learns_invertible_polynomial() {
        let (truth, psi, phi) = planted(3);
        // LS oracle: the data lies exactly in the model class
        let basis = build_basis(&psi, &truth.spec, 1..psi.len()).unwrap();
        let fit = ls_fit(&basis, &phi.samples()[1..], Some(0.0)).unwrap();
        let ls_nmse = nmse_slices(&mpm_predict(&fit, &psi).samples()[1..], &phi.samples()[1..]).unwrap();
        assert!(ls_nmse < -120.0);

        let mut model = AgmpnnModel::init(truth.spec.window, 2, 1, &InitOptions { seed: 3, ..Default::default() }).unwrap();
        model.offsets = vec![0.0];
        let data = Dataset::segmented(psi, phi, model.window, 128, 0.8).unwrap();
        let cfg = TrainConfig { batch_size: 4, max_epochs: 150, patience: 20, learning_rate: 3e-3, seed: 3, ..TrainConfig::default() };
        let (trained, hist) = train(model, &data, &cfg).unwrap();
        assert!(hist.best_val_nmse_db() < -60.0, "final {}", hist.best_val_nmse_db());
        assert!((validation_nmse(&trained, &data, Mode::Sequential).unwrap() - hist.best_val_nmse_db()).abs() < 1e-12);
    }

    #[test]
    fn training_is_reproducible_and_mode_independent() {
        let (_, psi, phi) = planted(4);
        let model = AgmpnnModel::init(TapWindow::causal_taps(3), 2, 2, &InitOptions { seed: 4, ..Default::default() }).unwrap();
        let data = Dataset::segmented(psi, phi, model.window, 256, 0.8).unwrap();
        let cfg = TrainConfig { batch_size: 5, max_epochs: 4, seed: 9, ..TrainConfig::default() };
        let (a, ha) = train(model.clone(), &data, &cfg).unwrap();
        let (b, hb) = train(model.clone(), &data, &TrainConfig { exec: Mode::Sequential, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.epochs[0].epoch, 0);
        assert!(ha.best_val_nmse_db() <= ha.initial_val_nmse_db());
    }

    #[test]
    fn train_rejects_bad_config() {
        let (_, psi, phi) = planted(5);
        let model = AgmpnnModel::init(TapWindow::causal_taps(2), 1, 1, &InitOptions::default()).unwrap();
        let data = Dataset::segmented(psi, phi, model.window, 1024, 0.8).unwrap();
        assert!(train(model, &data, &TrainConfig { batch_size: 0, ..TrainConfig::default() }).is_err());
    }

    #[test]
    fn history_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let h = TrainHistory {
            epochs: vec![EpochRecord { epoch: 0, train_loss: 0.5, val_nmse_db: -3.0 }],
            stopped_epoch: 0,
            best_epoch: 0,
        };
        let p = dir.path().join("h.csv");
        h.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_nmse_db\n0,5e-1,-3\n"), "{text}");
    }

    fn fd_fixture(seed: u64) -> (ComplexSequence, ComplexSequence) {
        let psi = generate_waveform(seed, 64, 0.5).unwrap().scaled(c(0.8, 0.0));
        let phi = generate_waveform(seed + 100, 64, 0.5).unwrap();
        (psi, phi)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in [1, 2, 3] {
            let (psi, phi) = fd_fixture(seed);
            for (k, m) in [(2, 2), (1, 3)] {
                let mut model = AgmpnnModel::init(TapWindow::causal_taps(3), k, m, &InitOptions { amplitude_p95: 1.0, seed, ..Default::default() }).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p: Vec<f64> = model.params().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
                model.set_params(&p).unwrap();
                let err = finite_diff_check(&model, &psi, &phi, 2..64, 1e-6).unwrap();
                assert!(err < 1e-4, "agmpnn seed {seed} K={k} M={m}: {err}");
            }
            let net = RvftdnnModel::init(TapWindow::causal_taps(3), 4, 3, seed).unwrap();
            let err = finite_diff_check(&net, &psi, &phi, 2..64, 1e-6).unwrap();
            assert!(err < 1e-4, "rvftdnn seed {seed}: {err}");
        }
        let (psi, phi) = fd_fixture(1);
        let net = RvftdnnModel::init(TapWindow::causal_taps(3), 4, 3, 1).unwrap();
        assert!(finite_diff_check(&net, &psi, &phi, 5..5, 1e-6).is_err());
    }
}
