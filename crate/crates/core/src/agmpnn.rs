//! Attention-gated ensemble of amplitude-offset memory polynomials.
//!
//! Each of the `M` experts is a memory polynomial whose amplitude terms carry
//! its own real offset `b_m`. Per output sample, an attention head scores
//! every expert from the same clamped amplitudes,
//! `s_m = sum_t mu[m,t] * rect(|x_t| + b_m) + nu[m,t]`, and a softmax over
//! `s` mixes the expert outputs. The offset `b_m` is shared between the
//! expert basis and its attention score, so its gradient has two parts.

use std::ops::Range;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{DpdError, Result};
use crate::mpm::{rect, MpmCoefficients, MpmSpec};
use crate::signal::{fill_window, ComplexSequence, TapWindow};

/// Relative perturbation applied to every expert in a warm start.
pub const WARM_START_NOISE: f64 = 1e-3;
const COLD_LAMBDA_STD: f64 = 1e-2;
const MU_STD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct AgmpnnModel {
    pub window: TapWindow,
    pub k_orders: usize,
    pub n_experts: usize,
    /// `(expert, tap, order)`, row-major.
    pub lambda: Vec<Complex64>,
    pub offsets: Vec<f64>,
    /// `(expert, tap)`, row-major.
    pub mu: Vec<f64>,
    /// `(expert, tap)`, row-major. Only the per-expert sum enters the score.
    pub nu: Vec<f64>,
}

/// Initialization choices for [`AgmpnnModel::init`].
#[derive(Debug, Clone)]
pub struct InitOptions<'a> {
    pub warm_start: Option<&'a MpmCoefficients>,
    /// 95th-percentile amplitude of a calibration signal; sets the offset ladder.
    pub amplitude_p95: f64,
    pub warm_noise: f64,
    pub seed: u64,
}

impl Default for InitOptions<'_> {
    fn default() -> Self {
        Self { warm_start: None, amplitude_p95: 1.0, warm_noise: WARM_START_NOISE, seed: 0 }
    }
}

/// Gradients, laid out exactly like the model's parameter arrays.
/// Each complex `lambda` entry holds `(dL/dRe, dL/dIm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgmpnnGradients {
    pub lambda: Vec<Complex64>,
    pub offsets: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl AgmpnnGradients {
    fn zeros_like(m: &AgmpnnModel) -> Self {
        Self {
            lambda: vec![Complex64::new(0.0, 0.0); m.lambda.len()],
            offsets: vec![0.0; m.offsets.len()],
            mu: vec![0.0; m.mu.len()],
            nu: vec![0.0; m.nu.len()],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.lambda.len() + self.offsets.len() + 2 * self.mu.len());
        out.extend(self.lambda.iter().flat_map(|z| [z.re, z.im]));
        out.extend(&self.offsets);
        out.extend(&self.mu);
        out.extend(&self.nu);
        out
    }
}

/// `4LKM + LM + 4L + 2M + 2`, the published complexity figure used for
/// reporting. It exceeds [`count_params_actual`]; both are reported.
pub fn count_params_formula(taps: usize, k_orders: usize, n_experts: usize) -> usize {
    let (l, k, m) = (taps, k_orders, n_experts);
    4 * l * k * m + l * m + 4 * l + 2 * m + 2
}

/// Real parameters actually held by a model of this shape.
pub fn count_params_actual(taps: usize, k_orders: usize, n_experts: usize) -> usize {
    2 * n_experts * taps * k_orders + n_experts + 2 * n_experts * taps
}

/// Amplitude below which a fraction `q` of the samples fall.
pub fn amplitude_percentile(x: &ComplexSequence, q: f64) -> f64 {
    let mut a: Vec<f64> = x.samples().iter().map(|z| z.norm()).collect();
    a.sort_by(f64::total_cmp);
    let idx = ((a.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    a[idx]
}

impl AgmpnnModel {
    pub fn init(window: TapWindow, k_orders: usize, n_experts: usize, opts: &InitOptions<'_>) -> Result<Self> {
        if k_orders == 0 || n_experts == 0 {
            return Err(DpdError::arg("AGMPNN needs k_orders >= 1 and n_experts >= 1"));
        }
        if !(opts.amplitude_p95 >= 0.0 && opts.amplitude_p95.is_finite()) {
            return Err(DpdError::arg("calibration amplitude must be finite and non-negative"));
        }
        let taps = window.total();
        let per_expert = taps * k_orders;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut gauss = |std: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * std
        };

        let mut lambda = Vec::with_capacity(n_experts * per_expert);
        match opts.warm_start {
            Some(ws) => {
                if ws.spec.window != window || ws.spec.k_orders != k_orders {
                    return Err(DpdError::arg(format!(
                        "warm start has T={} K={}, model wants T={} K={}",
                        ws.spec.taps(),
                        ws.spec.k_orders,
                        taps,
                        k_orders
                    )));
                }
                if ws.spec.offset_b != 0.0 {
                    return Err(DpdError::arg("warm start must be a plain memory polynomial (b = 0)"));
                }
                for _ in 0..n_experts {
                    for &l in &ws.lambda {
                        let scale = opts.warm_noise * l.norm();
                        lambda.push(l + Complex64::new(gauss(scale), gauss(scale)));
                    }
                }
            }
            None => {
                for _ in 0..n_experts {
                    for i in 0..per_expert {
                        let mut z = Complex64::new(gauss(COLD_LAMBDA_STD), gauss(COLD_LAMBDA_STD));
                        if i == window.post_taps * k_orders {
                            z = Complex64::new(1.0, 0.0);
                        }
                        lambda.push(z);
                    }
                }
            }
        }
        let offsets = (0..n_experts)
            .map(|m| -(m as f64) / n_experts as f64 * opts.amplitude_p95)
            .collect();
        let mu_dist = Normal::new(0.0, MU_STD).expect("valid std");
        let mu = (0..n_experts * taps).map(|_| mu_dist.sample(&mut rng)).collect();
        let nu = vec![0.0; n_experts * taps];
        let model = Self { window, k_orders, n_experts, lambda, offsets, mu, nu };
        model.validate()?;
        Ok(model)
    }

    pub fn taps(&self) -> usize {
        self.window.total()
    }

    pub fn validate(&self) -> Result<()> {
        let (t, k, m) = (self.taps(), self.k_orders, self.n_experts);
        if k == 0 || m == 0 {
            return Err(DpdError::arg("AGMPNN needs k_orders >= 1 and n_experts >= 1"));
        }
        if self.lambda.len() != m * t * k || self.offsets.len() != m || self.mu.len() != m * t || self.nu.len() != m * t {
            return Err(DpdError::arg("AGMPNN parameter arrays do not match (T, K, M)"));
        }
        let finite = self.lambda.iter().all(|z| z.is_finite())
            && self.offsets.iter().chain(&self.mu).chain(&self.nu).all(|v| v.is_finite());
        if !finite {
            return Err(DpdError::arg("AGMPNN parameters must be finite"));
        }
        Ok(())
    }

    pub fn count_params_formula(&self) -> usize {
        count_params_formula(self.taps(), self.k_orders, self.n_experts)
    }

    pub fn count_params_actual(&self) -> usize {
        count_params_actual(self.taps(), self.k_orders, self.n_experts)
    }

    /// Expert `m` as a standalone amplitude-offset memory polynomial.
    pub fn expert(&self, m: usize) -> MpmCoefficients {
        let n = self.taps() * self.k_orders;
        let spec = MpmSpec { window: self.window, k_orders: self.k_orders, offset_b: self.offsets[m] };
        MpmCoefficients { spec, lambda: self.lambda[m * n..(m + 1) * n].to_vec() }
    }

    /// Softmax attention weights for one tap window.
    pub fn attention_weights(&self, taps: &[Complex64]) -> Vec<f64> {
        let amps: Vec<f64> = taps.iter().map(|z| z.norm()).collect();
        let mut w = vec![0.0; self.n_experts];
        self.scores(&amps, &mut w);
        softmax_in_place(&mut w);
        w
    }

    fn scores(&self, amps: &[f64], out: &mut [f64]) {
        let t_n = amps.len();
        for (m, s) in out.iter_mut().enumerate() {
            let b = self.offsets[m];
            let mut acc = 0.0;
            for (t, &a) in amps.iter().enumerate() {
                acc += self.mu[m * t_n + t] * rect(a + b) + self.nu[m * t_n + t];
            }
            *s = acc;
        }
    }

    fn eval_window(&self, taps: &[Complex64], ws: &mut Workspace) -> Complex64 {
        let (t_n, k_n) = (self.taps(), self.k_orders);
        for (a, z) in ws.amps.iter_mut().zip(taps) {
            *a = z.norm();
        }
        self.scores(&ws.amps, &mut ws.weights);
        softmax_in_place(&mut ws.weights);
        let mut out = Complex64::new(0.0, 0.0);
        for m in 0..self.n_experts {
            let b = self.offsets[m];
            let lam = &self.lambda[m * t_n * k_n..(m + 1) * t_n * k_n];
            let mut y = Complex64::new(0.0, 0.0);
            for (t, &x) in taps.iter().enumerate() {
                let r = rect(ws.amps[t] + b);
                let r2 = r * r;
                let mut pow = 1.0;
                for l in &lam[t * k_n..(t + 1) * k_n] {
                    y += x * pow * l;
                    pow *= r2;
                }
            }
            out += y * ws.weights[m];
        }
        out
    }

    pub fn forward(&self, psi: &ComplexSequence) -> ComplexSequence {
        let out = self.forward_range(psi.samples(), 0..psi.len());
        psi.with_samples(out)
    }

    pub fn forward_range(&self, x: &[Complex64], range: Range<usize>) -> Vec<Complex64> {
        let mut ws = Workspace::new(self);
        range
            .map(|n| {
                fill_window(x, n, self.window, &mut ws.taps);
                let taps = std::mem::take(&mut ws.taps);
                let y = self.eval_window(&taps, &mut ws);
                ws.taps = taps;
                y
            })
            .collect()
    }

    /// Mean squared error over `range` and its exact gradient.
    pub fn backward(&self, psi: &ComplexSequence, target: &ComplexSequence, range: Range<usize>) -> Result<(f64, AgmpnnGradients)> {
        if range.is_empty() {
            return Err(DpdError::arg("backward over an empty sample range"));
        }
        if target.len() != psi.len() || range.end > psi.len() {
            return Err(DpdError::arg("backward: target length or range does not match input"));
        }
        let n = range.len() as f64;
        let (sse, mut g) = self.backward_sum(psi.samples(), target.samples(), range);
        let inv = 1.0 / n;
        g.lambda.iter_mut().for_each(|z| *z *= inv);
        g.offsets.iter_mut().chain(g.mu.iter_mut()).chain(g.nu.iter_mut()).for_each(|v| *v *= inv);
        Ok((sse * inv, g))
    }

    /// Sum of squared errors and the gradient of that sum (not averaged).
    pub fn backward_sum(&self, x: &[Complex64], target: &[Complex64], range: Range<usize>) -> (f64, AgmpnnGradients) {
        let (t_n, k_n, m_n) = (self.taps(), self.k_orders, self.n_experts);
        let mut g = AgmpnnGradients::zeros_like(self);
        let mut ws = Workspace::new(self);
        let mut expert_out = vec![Complex64::new(0.0, 0.0); m_n];
        let mut sse = 0.0;
        for n in range {
            fill_window(x, n, self.window, &mut ws.taps);
            for t in 0..t_n {
                ws.amps[t] = ws.taps[t].norm();
            }
            self.scores(&ws.amps, &mut ws.weights);
            softmax_in_place(&mut ws.weights);
            let mut out = Complex64::new(0.0, 0.0);
            for m in 0..m_n {
                let b = self.offsets[m];
                let lam = &self.lambda[m * t_n * k_n..(m + 1) * t_n * k_n];
                let mut y = Complex64::new(0.0, 0.0);
                for t in 0..t_n {
                    let r2 = rect(ws.amps[t] + b).powi(2);
                    let mut pow = 1.0;
                    for l in &lam[t * k_n..(t + 1) * k_n] {
                        y += ws.taps[t] * pow * l;
                        pow *= r2;
                    }
                }
                expert_out[m] = y;
                out += y * ws.weights[m];
            }
            let e = out - target[n];
            sse += e.norm_sqr();

            for m in 0..m_n {
                let w = ws.weights[m];
                let b = self.offsets[m];
                // dL/ds_m = 2 Re(conj(e) * w_m * (y_m - out))
                let ds = 2.0 * (e.conj() * (expert_out[m] - out)).re * w;
                let mut db = 0.0;
                let lam = &self.lambda[m * t_n * k_n..(m + 1) * t_n * k_n];
                let glam = &mut g.lambda[m * t_n * k_n..(m + 1) * t_n * k_n];
                for t in 0..t_n {
                    let xt = ws.taps[t];
                    let pre = ws.amps[t] + b;
                    let active = pre > 0.0;
                    let r = rect(pre);
                    g.mu[m * t_n + t] += ds * r;
                    g.nu[m * t_n + t] += ds;
                    if active {
                        db += ds * self.mu[m * t_n + t];
                    }
                    // expert path: complex gradient 2 w conj(B) e per term
                    let mut pow = 1.0;
                    let r2 = r * r;
                    for k in 0..k_n {
                        let basis = xt * pow;
                        glam[t * k_n + k] += basis.conj() * e * (2.0 * w);
                        if k >= 1 && active {
                            // d/db of x r^{2k} = x * 2k r^{2k-1}
                            let dbasis = xt * (2.0 * k as f64 * r.powi(2 * k as i32 - 1));
                            db += 2.0 * w * (e.conj() * lam[t * k_n + k] * dbasis).re;
                        }
                        pow *= r2;
                    }
                }
                g.offsets[m] += db;
            }
        }
        (sse, g)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count_params_actual());
        out.extend(self.lambda.iter().flat_map(|z| [z.re, z.im]));
        out.extend(&self.offsets);
        out.extend(&self.mu);
        out.extend(&self.nu);
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.count_params_actual() {
            return Err(DpdError::arg(format!(
                "expected {} parameters, got {}",
                self.count_params_actual(),
                p.len()
            )));
        }
        let nl = self.lambda.len();
        for (i, z) in self.lambda.iter_mut().enumerate() {
            *z = Complex64::new(p[2 * i], p[2 * i + 1]);
        }
        let mut rest = &p[2 * nl..];
        let m = self.n_experts;
        self.offsets.copy_from_slice(&rest[..m]);
        rest = &rest[m..];
        let mt = self.mu.len();
        self.mu.copy_from_slice(&rest[..mt]);
        self.nu.copy_from_slice(&rest[mt..]);
        Ok(())
    }
}

struct Workspace {
    taps: Vec<Complex64>,
    amps: Vec<f64>,
    weights: Vec<f64>,
}

impl Workspace {
    fn new(m: &AgmpnnModel) -> Self {
        Self {
            taps: vec![Complex64::new(0.0, 0.0); m.taps()],
            amps: vec![0.0; m.taps()],
            weights: vec![0.0; m.n_experts],
        }
    }
}

fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in s.iter_mut() {
        *v /= total;
    }
}
