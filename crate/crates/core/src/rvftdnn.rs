//! Real-valued focused time-delay neural network baseline.
//!
//! Input is the interleaved I/Q of the tap window (`2T` reals), followed by two
//! tanh hidden layers and an affine output pair read as `(Re, Im)`.

use std::ops::Range;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DpdError, Result};
use crate::exec::{self, Mode};
use crate::signal::{fill_window, ComplexSequence, TapWindow};
use crate::training::{train, Dataset, TrainConfig, TrainHistory};

pub const BUDGET_LO: usize = 100;
pub const BUDGET_HI: usize = 600;

#[derive(Debug, Clone, PartialEq)]
pub struct RvftdnnModel {
    pub window: TapWindow,
    pub n1: usize,
    pub n2: usize,
    /// `n1 x 2T`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n2 x n1`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `2 x n2`.
    pub w3: Vec<f64>,
    pub b3: [f64; 2],
}

pub fn rvftdnn_param_count(taps: usize, n1: usize, n2: usize) -> usize {
    2 * taps * n1 + n1 + n1 * n2 + n2 + 2 * n2 + 2
}

impl RvftdnnModel {
    pub fn zeros(window: TapWindow, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(DpdError::arg("hidden layer widths must be positive"));
        }
        let d = 2 * window.total();
        Ok(Self {
            window,
            n1,
            n2,
            w1: vec![0.0; n1 * d],
            b1: vec![0.0; n1],
            w2: vec![0.0; n2 * n1],
            b2: vec![0.0; n2],
            w3: vec![0.0; 2 * n2],
            b3: [0.0; 2],
        })
    }

    /// Seeded Glorot-normal weights, zero biases.
    pub fn init(window: TapWindow, n1: usize, n2: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(window, n1, n2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2 * window.total();
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = z * std;
            }
        };
        fill(&mut m.w1, d, n1);
        fill(&mut m.w2, n1, n2);
        fill(&mut m.w3, n2, 2);
        Ok(m)
    }

    pub fn taps(&self) -> usize {
        self.window.total()
    }

    pub fn param_count(&self) -> usize {
        rvftdnn_param_count(self.taps(), self.n1, self.n2)
    }

    fn input_dim(&self) -> usize {
        2 * self.taps()
    }

    fn eval(&self, input: &[f64], h1: &mut [f64], h2: &mut [f64]) -> [f64; 2] {
        let d = self.input_dim();
        for (j, h) in h1.iter_mut().enumerate() {
            let row = &self.w1[j * d..(j + 1) * d];
            *h = (self.b1[j] + row.iter().zip(input).map(|(w, u)| w * u).sum::<f64>()).tanh();
        }
        for (j, h) in h2.iter_mut().enumerate() {
            let row = &self.w2[j * self.n1..(j + 1) * self.n1];
            *h = (self.b2[j] + row.iter().zip(h1.iter()).map(|(w, u)| w * u).sum::<f64>()).tanh();
        }
        let mut out = self.b3;
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w3[o * self.n2..(o + 1) * self.n2];
            *slot += row.iter().zip(h2.iter()).map(|(w, u)| w * u).sum::<f64>();
        }
        out
    }

    pub fn forward(&self, psi: &ComplexSequence) -> ComplexSequence {
        psi.with_samples(self.forward_range(psi.samples(), 0..psi.len()))
    }

    pub fn forward_range(&self, x: &[Complex64], range: Range<usize>) -> Vec<Complex64> {
        let mut taps = vec![Complex64::new(0.0, 0.0); self.taps()];
        let mut input = vec![0.0; self.input_dim()];
        let (mut h1, mut h2) = (vec![0.0; self.n1], vec![0.0; self.n2]);
        range
            .map(|n| {
                fill_window(x, n, self.window, &mut taps);
                interleave(&taps, &mut input);
                let o = self.eval(&input, &mut h1, &mut h2);
                Complex64::new(o[0], o[1])
            })
            .collect()
    }

    /// Mean squared error over `range` and its gradient, flat in
    /// [`RvftdnnModel::params`] order.
    pub fn backward(&self, psi: &ComplexSequence, target: &ComplexSequence, range: Range<usize>) -> Result<(f64, Vec<f64>)> {
        if range.is_empty() {
            return Err(DpdError::arg("backward over an empty sample range"));
        }
        if target.len() != psi.len() || range.end > psi.len() {
            return Err(DpdError::arg("backward: target length or range does not match input"));
        }
        let n = range.len() as f64;
        let (sse, mut g) = self.backward_sum(psi.samples(), target.samples(), range);
        g.iter_mut().for_each(|v| *v /= n);
        Ok((sse / n, g))
    }

    pub fn backward_sum(&self, x: &[Complex64], target: &[Complex64], range: Range<usize>) -> (f64, Vec<f64>) {
        let d = self.input_dim();
        let (n1, n2) = (self.n1, self.n2);
        let mut g = vec![0.0; self.param_count()];
        let (o_w1, o_b1) = (0, n1 * d);
        let o_w2 = o_b1 + n1;
        let o_b2 = o_w2 + n2 * n1;
        let o_w3 = o_b2 + n2;
        let o_b3 = o_w3 + 2 * n2;

        let mut taps = vec![Complex64::new(0.0, 0.0); self.taps()];
        let mut input = vec![0.0; d];
        let (mut h1, mut h2) = (vec![0.0; n1], vec![0.0; n2]);
        let (mut dz1, mut dz2) = (vec![0.0; n1], vec![0.0; n2]);
        let mut sse = 0.0;
        for n in range {
            fill_window(x, n, self.window, &mut taps);
            interleave(&taps, &mut input);
            let o = self.eval(&input, &mut h1, &mut h2);
            let e = [o[0] - target[n].re, o[1] - target[n].im];
            sse += e[0] * e[0] + e[1] * e[1];
            let go = [2.0 * e[0], 2.0 * e[1]];

            for (oi, &gv) in go.iter().enumerate() {
                for j in 0..n2 {
                    g[o_w3 + oi * n2 + j] += gv * h2[j];
                }
                g[o_b3 + oi] += gv;
            }
            for j in 0..n2 {
                let back = go[0] * self.w3[j] + go[1] * self.w3[n2 + j];
                dz2[j] = back * (1.0 - h2[j] * h2[j]);
            }
            for j in 0..n2 {
                for i in 0..n1 {
                    g[o_w2 + j * n1 + i] += dz2[j] * h1[i];
                }
                g[o_b2 + j] += dz2[j];
            }
            for i in 0..n1 {
                let back: f64 = (0..n2).map(|j| dz2[j] * self.w2[j * n1 + i]).sum();
                dz1[i] = back * (1.0 - h1[i] * h1[i]);
            }
            for i in 0..n1 {
                let row = &mut g[o_w1 + i * d..o_w1 + (i + 1) * d];
                for (gw, u) in row.iter_mut().zip(&input) {
                    *gw += dz1[i] * u;
                }
                g[o_b1 + i] += dz1[i];
            }
        }
        (sse, g)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.extend(&self.b2);
        p.extend(&self.w3);
        p.extend(self.b3);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(DpdError::arg(format!("expected {} parameters, got {}", self.param_count(), p.len())));
        }
        let mut rest = p;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        self.b3.copy_from_slice(rest);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        let shapes_ok = self.n1 > 0
            && self.n2 > 0
            && self.w1.len() == self.n1 * d
            && self.b1.len() == self.n1
            && self.w2.len() == self.n2 * self.n1
            && self.b2.len() == self.n2
            && self.w3.len() == 2 * self.n2;
        if !shapes_ok {
            return Err(DpdError::arg("RVFTDNN layer shapes are inconsistent"));
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(DpdError::arg("RVFTDNN parameters must be finite"));
        }
        Ok(())
    }
}

fn interleave(taps: &[Complex64], out: &mut [f64]) {
    for (t, z) in taps.iter().enumerate() {
        out[2 * t] = z.re;
        out[2 * t + 1] = z.im;
    }
}

/// Default search grid: every `(n1, n2)` in `8..=20` squared.
pub fn default_grid() -> Vec<(usize, usize)> {
    (8..=20).flat_map(|a| (8..=20).map(move |b| (a, b))).collect()
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub n1: usize,
    pub n2: usize,
    pub val_nmse_db: f64,
    pub model: RvftdnnModel,
    pub history: TrainHistory,
    /// Every trained candidate as `(n1, n2, params, val_nmse_db)`.
    pub candidates: Vec<(usize, usize, usize, f64)>,
}

/// Train every grid point whose parameter count lies in `budget` and keep
/// the best validation NMSE. Ties go to the smaller model, then to the
/// lexicographically smaller `(n1, n2)`.
pub fn architecture_search(
    window: TapWindow,
    budget: (usize, usize),
    data: &Dataset,
    grid: &[(usize, usize)],
    cfg: &TrainConfig,
    mode: Mode,
) -> Result<SearchOutcome> {
    if grid.is_empty() {
        return Err(DpdError::arg("architecture search grid is empty"));
    }
    let taps = window.total();
    let mut feasible: Vec<(usize, usize)> = grid
        .iter()
        .copied()
        .filter(|&(a, b)| a > 0 && b > 0 && (budget.0..=budget.1).contains(&rvftdnn_param_count(taps, a, b)))
        .collect();
    feasible.sort_unstable();
    feasible.dedup();
    if feasible.is_empty() {
        return Err(DpdError::arg(format!(
            "no grid point fits the parameter budget [{}, {}] at {} taps",
            budget.0, budget.1, taps
        )));
    }
    let runs = exec::map_ordered(mode, &feasible, |&(a, b)| -> Result<_> {
        let init = RvftdnnModel::init(window, a, b, cfg.seed)?;
        let (model, history) = train(init, data, cfg)?;
        Ok((a, b, model, history))
    });
    let mut best: Option<(usize, usize, RvftdnnModel, TrainHistory)> = None;
    let mut candidates = Vec::with_capacity(runs.len());
    for run in runs {
        let (a, b, model, history) = run?;
        let val = history.best_val_nmse_db();
        candidates.push((a, b, rvftdnn_param_count(taps, a, b), val));
        let better = match &best {
            None => true,
            Some((ba, bb, _, bh)) => {
                let bv = bh.best_val_nmse_db();
                let key = (rvftdnn_param_count(taps, a, b), a, b);
                let bkey = (rvftdnn_param_count(taps, *ba, *bb), *ba, *bb);
                val < bv || (val == bv && key < bkey)
            }
        };
        if better {
            best = Some((a, b, model, history));
        }
    }
    let (n1, n2, model, history) = best.expect("at least one feasible candidate");
    Ok(SearchOutcome { n1, n2, val_nmse_db: history.best_val_nmse_db(), model, history, candidates })
}
