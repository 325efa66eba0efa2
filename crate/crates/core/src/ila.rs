//! Indirect learning: fit a postinverse on PA output, deploy it as the
//! predistorter, and measure how linear the cascade becomes.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;

use crate::agmpnn::{self, amplitude_percentile, AgmpnnModel, InitOptions};
use crate::error::{DpdError, Result};
use crate::exec::{self, Mode};
use crate::mpm::{build_basis, ls_fit, mpm_predict, MpmCoefficients, MpmSpec};
use crate::pa_sim::{pa_forward, preset, DistortionLevel, PaConfig};
use crate::rvftdnn::{self, architecture_search, rvftdnn_param_count, RvftdnnModel};
use crate::signal::{align, generate_waveform, ls_gain, nmse, ComplexSequence, TapWindow};
use crate::training::{train, validation_nmse, Dataset, TrainConfig, TrainHistory};

/// Lag range searched when aligning PA output to its input.
pub const ALIGN_MAX_LAG: usize = 8;

pub const CSV_HEADER: &str =
    "family,preset,taps,k_orders,m_experts,params_formula,params_actual,seed,postinv_nmse_db,lin_nmse_db,no_dpd_nmse_db";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Mpm,
    Agmpnn,
    Rvftdnn,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Mpm, Family::Agmpnn, Family::Rvftdnn];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mpm => "mpm",
            Family::Agmpnn => "agmpnn",
            Family::Rvftdnn => "rvftdnn",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = DpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpm" => Ok(Family::Mpm),
            "agmpnn" => Ok(Family::Agmpnn),
            "rvftdnn" => Ok(Family::Rvftdnn),
            other => Err(DpdError::arg(format!("unknown model family `{other}`"))),
        }
    }
}

/// What to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Mpm { window: TapWindow, k_orders: usize, ridge: Option<f64> },
    Agmpnn { window: TapWindow, k_orders: usize, n_experts: usize, warm_start: bool },
    Rvftdnn { window: TapWindow, n1: usize, n2: usize },
    /// Architecture-searched RVFTDNN over `grid` within `budget`.
    RvftdnnSearch { window: TapWindow, budget: (usize, usize), grid: Vec<(usize, usize)> },
}

impl ModelSpec {
    pub fn window(&self) -> TapWindow {
        match self {
            ModelSpec::Mpm { window, .. }
            | ModelSpec::Agmpnn { window, .. }
            | ModelSpec::Rvftdnn { window, .. }
            | ModelSpec::RvftdnnSearch { window, .. } => *window,
        }
    }
}

/// A fitted compensator of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum DpdModel {
    Mpm(MpmCoefficients),
    Agmpnn(AgmpnnModel),
    Rvftdnn(RvftdnnModel),
}

impl DpdModel {
    pub fn family(&self) -> Family {
        match self {
            DpdModel::Mpm(_) => Family::Mpm,
            DpdModel::Agmpnn(_) => Family::Agmpnn,
            DpdModel::Rvftdnn(_) => Family::Rvftdnn,
        }
    }

    pub fn window(&self) -> TapWindow {
        match self {
            DpdModel::Mpm(c) => c.spec.window,
            DpdModel::Agmpnn(m) => m.window,
            DpdModel::Rvftdnn(m) => m.window,
        }
    }

    pub fn predict(&self, x: &ComplexSequence) -> ComplexSequence {
        match self {
            DpdModel::Mpm(c) => mpm_predict(c, x),
            DpdModel::Agmpnn(m) => m.forward(x),
            DpdModel::Rvftdnn(m) => m.forward(x),
        }
    }

    /// Reported complexity; the published formula for AGMPNN, the true
    /// count for the others.
    pub fn params_formula(&self) -> usize {
        match self {
            DpdModel::Agmpnn(m) => m.count_params_formula(),
            _ => self.params_actual(),
        }
    }

    pub fn params_actual(&self) -> usize {
        match self {
            DpdModel::Mpm(c) => c.param_count(),
            DpdModel::Agmpnn(m) => m.count_params_actual(),
            DpdModel::Rvftdnn(m) => m.param_count(),
        }
    }

    /// `(k_orders, m_experts)` columns of the report; RVFTDNN reports its
    /// hidden widths `(n1, n2)` there.
    pub fn shape_columns(&self) -> (usize, usize) {
        match self {
            DpdModel::Mpm(c) => (c.spec.k_orders, 1),
            DpdModel::Agmpnn(m) => (m.k_orders, m.n_experts),
            DpdModel::Rvftdnn(m) => (m.n1, m.n2),
        }
    }
}

/// Seeds of one fit/evaluate cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IlaSeeds {
    pub fit_waveform: u64,
    pub noise: u64,
    pub train: u64,
    pub eval_waveform: u64,
}

impl IlaSeeds {
    /// Distinct, reproducible seeds derived from one base seed.
    pub fn from_base(seed: u64) -> Self {
        Self {
            fit_waveform: seed,
            noise: seed ^ 0x5eed_0000,
            train: seed,
            eval_waveform: seed.wrapping_add(0x1_0000_0000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlaOptions {
    /// Number of indirect-learning passes; each pass refits on the previous
    /// predistorter's output.
    pub iterations: usize,
    pub max_lag: usize,
}

impl Default for IlaOptions {
    fn default() -> Self {
        Self { iterations: 1, max_lag: ALIGN_MAX_LAG }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlaReport {
    pub family: Family,
    pub taps: usize,
    pub k_orders: usize,
    pub m_experts: usize,
    pub params_formula: usize,
    pub params_actual: usize,
    /// Held-out NMSE of the postinverse, `f(psi / C)` against `phi`.
    pub postinverse_nmse_db: f64,
    pub linearization_nmse_db: Option<f64>,
    pub no_dpd_nmse_db: Option<f64>,
    /// Gain estimated while fitting.
    pub gain_fit: Complex64,
    /// Gain estimated at deployment.
    pub gain_eval: Option<Complex64>,
    pub seeds: IlaSeeds,
    /// Set when the deployed DPD is worse than no DPD at all.
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct IlaFit {
    pub model: DpdModel,
    pub report: IlaReport,
    /// LS memory polynomial used as warm start, with its held-out NMSE.
    pub warm_start: Option<(MpmCoefficients, f64)>,
    pub history: Option<TrainHistory>,
    pub dataset: Dataset,
}

/// Postinverse training data: align and gain-normalize the PA output.
pub fn observe(pa: &PaConfig, phi: &ComplexSequence, noise_seed: u64, max_lag: usize) -> Result<(ComplexSequence, Complex64)> {
    let psi_raw = pa_forward(pa, phi, Some(noise_seed))?;
    let al = align(phi, &psi_raw, max_lag).map_err(|e| DpdError::Alignment(e.to_string()))?;
    Ok((al.apply(&psi_raw), al.gain))
}

/// Least-squares memory polynomial on the training span; returns the
/// coefficients and their held-out NMSE.
pub fn fit_mpm(data: &Dataset, window: TapWindow, k_orders: usize, ridge: Option<f64>, mode: Mode) -> Result<(MpmCoefficients, f64)> {
    let spec = MpmSpec::new(window, k_orders, 0.0)?;
    let span = data.train_span();
    let basis = build_basis(&data.input, &spec, span.clone())?;
    let coeffs = ls_fit(&basis, &data.target.samples()[span], ridge)?;
    let nmse = validation_nmse(&MpmPredictor(&coeffs), data, mode)?;
    Ok((coeffs, nmse))
}

/// Adapter so LS fits are scored by exactly the same validation code.
#[derive(Clone)]
struct MpmPredictor<'a>(&'a MpmCoefficients);

impl crate::training::Trainable for MpmPredictor<'_> {
    fn window(&self) -> TapWindow {
        self.0.spec.window
    }
    fn params(&self) -> Vec<f64> {
        unreachable!("LS fits are not trained")
    }
    fn set_params(&mut self, _: &[f64]) -> Result<()> {
        unreachable!("LS fits are not trained")
    }
    fn loss_grad_sum(&self, _: &[Complex64], _: &[Complex64], _: std::ops::Range<usize>) -> (f64, Vec<f64>) {
        unreachable!("LS fits are not trained")
    }
    fn predict_range(&self, x: &[Complex64], range: std::ops::Range<usize>) -> Vec<Complex64> {
        let mut taps = vec![Complex64::new(0.0, 0.0); self.0.spec.taps()];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.0.spec.k_orders];
        range
            .map(|n| {
                crate::signal::fill_window(x, n, self.0.spec.window, &mut taps);
                self.0.eval_window(&taps, &mut scratch)
            })
            .collect()
    }
}

fn fit_on(data: &Dataset, spec: &ModelSpec, cfg: &TrainConfig, seed: u64) -> Result<(DpdModel, f64, Option<(MpmCoefficients, f64)>, Option<TrainHistory>)> {
    let cfg = TrainConfig { seed, ..cfg.clone() };
    match spec {
        ModelSpec::Mpm { window, k_orders, ridge } => {
            let (coeffs, nmse) = fit_mpm(data, *window, *k_orders, *ridge, cfg.exec)?;
            Ok((DpdModel::Mpm(coeffs), nmse, None, None))
        }
        ModelSpec::Agmpnn { window, k_orders, n_experts, warm_start } => {
            let ws = if *warm_start { Some(fit_mpm(data, *window, *k_orders, None, cfg.exec)?) } else { None };
            let opts = InitOptions {
                warm_start: ws.as_ref().map(|w| &w.0),
                amplitude_p95: amplitude_percentile(&data.input, 0.95),
                seed,
                ..Default::default()
            };
            let init = AgmpnnModel::init(*window, *k_orders, *n_experts, &opts)?;
            let (model, hist) = train(init, data, &cfg)?;
            let nmse = hist.best_val_nmse_db();
            Ok((DpdModel::Agmpnn(model), nmse, ws, Some(hist)))
        }
        ModelSpec::Rvftdnn { window, n1, n2 } => {
            let init = RvftdnnModel::init(*window, *n1, *n2, seed)?;
            let (model, hist) = train(init, data, &cfg)?;
            let nmse = hist.best_val_nmse_db();
            Ok((DpdModel::Rvftdnn(model), nmse, None, Some(hist)))
        }
        ModelSpec::RvftdnnSearch { window, budget, grid } => {
            let out = architecture_search(*window, *budget, data, grid, &cfg, cfg.exec)?;
            Ok((DpdModel::Rvftdnn(out.model), out.val_nmse_db, None, Some(out.history)))
        }
    }
}

/// Fit a postinverse through the PA and return it as a predistorter.
pub fn ila_fit(pa: &PaConfig, chi: &ComplexSequence, spec: &ModelSpec, cfg: &TrainConfig, seeds: IlaSeeds, opts: IlaOptions) -> Result<IlaFit> {
    if opts.iterations == 0 {
        return Err(DpdError::arg("ILA needs at least one iteration"));
    }
    let window = spec.window();
    let mut phi = chi.clone();
    let mut last = None;
    for pass in 0..opts.iterations {
        let (psi, gain) = observe(pa, &phi, seeds.noise.wrapping_add(pass as u64), opts.max_lag)?;
        let data = Dataset::segmented(psi, phi.clone(), window, cfg.segment_len, cfg.train_fraction)?;
        let (model, post, ws, hist) = fit_on(&data, spec, cfg, seeds.train)?;
        if !post.is_finite() {
            return Err(DpdError::Diverged(format!("postinverse NMSE is {post}")));
        }
        phi = model.predict(chi);
        last = Some((model, post, ws, hist, data, gain));
    }
    let (model, post, warm_start, history, dataset, gain) = last.expect("at least one pass");
    let (k_orders, m_experts) = model.shape_columns();
    let report = IlaReport {
        family: model.family(),
        taps: window.total(),
        k_orders,
        m_experts,
        params_formula: model.params_formula(),
        params_actual: model.params_actual(),
        postinverse_nmse_db: post,
        linearization_nmse_db: None,
        no_dpd_nmse_db: None,
        gain_fit: gain,
        gain_eval: None,
        seeds,
        flagged: false,
    };
    Ok(IlaFit { model, report, warm_start, history, dataset })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeployEval {
    pub linearization_nmse_db: f64,
    pub no_dpd_nmse_db: f64,
    pub gain: Complex64,
    pub gain_no_dpd: Complex64,
}

/// Cascade a predistorter with the noiseless PA on a fresh waveform.
pub fn ila_deploy_eval(pa: &PaConfig, model: &DpdModel, chi_fresh: &ComplexSequence) -> Result<DeployEval> {
    let clean = pa.noiseless();
    let phi = model.predict(chi_fresh);
    let psi = pa_forward(&clean, &phi, None)?;
    let gain = ls_gain(chi_fresh.samples(), psi.samples())?;
    let lin = nmse(&psi, &chi_fresh.scaled(gain))?;
    let psi0 = pa_forward(&clean, chi_fresh, None)?;
    let gain0 = ls_gain(chi_fresh.samples(), psi0.samples())?;
    let no_dpd = nmse(&psi0, &chi_fresh.scaled(gain0))?;
    Ok(DeployEval { linearization_nmse_db: lin, no_dpd_nmse_db: no_dpd, gain, gain_no_dpd: gain0 })
}

impl IlaReport {
    pub fn with_eval(mut self, eval: &DeployEval) -> Self {
        self.linearization_nmse_db = Some(eval.linearization_nmse_db);
        self.no_dpd_nmse_db = Some(eval.no_dpd_nmse_db);
        self.gain_eval = Some(eval.gain);
        self.flagged = eval.linearization_nmse_db > eval.no_dpd_nmse_db;
        self
    }
}

/// Segment length used by the shipped experiment configs. With 65536-sample
/// captures, 1024-sample segments give only two optimizer steps per epoch.
pub const EXPERIMENT_SEGMENT_LEN: usize = 128;

/// Default training settings with [`EXPERIMENT_SEGMENT_LEN`] segments.
pub fn experiment_train_config() -> TrainConfig {
    TrainConfig { segment_len: EXPERIMENT_SEGMENT_LEN, ..TrainConfig::default() }
}

/// Waveform used for one experiment cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformSpec {
    pub n_samples: usize,
    pub bandwidth_fraction: f64,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self { n_samples: crate::signal::STANDARD_SAMPLES, bandwidth_fraction: crate::signal::STANDARD_BANDWIDTH }
    }
}

/// Fit on a seeded waveform, deploy on a second, independently seeded one.
pub fn run_cell(pa: &PaConfig, spec: &ModelSpec, cfg: &TrainConfig, wave: WaveformSpec, seed: u64) -> Result<IlaFit> {
    let seeds = IlaSeeds::from_base(seed);
    let chi = generate_waveform(seeds.fit_waveform, wave.n_samples, wave.bandwidth_fraction)?;
    let fresh = generate_waveform(seeds.eval_waveform, wave.n_samples, wave.bandwidth_fraction)?;
    let mut fit = ila_fit(pa, &chi, spec, cfg, seeds, IlaOptions::default())?;
    let eval = ila_deploy_eval(pa, &fit.model, &fresh)?;
    fit.report = fit.report.clone().with_eval(&eval);
    Ok(fit)
}

/// Sweep settings shared by both sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub families: Vec<Family>,
    pub presets: Vec<DistortionLevel>,
    pub taps_list: Vec<usize>,
    pub param_targets: Vec<usize>,
    pub budget: (usize, usize),
    pub seeds: Vec<u64>,
    pub waveform: WaveformSpec,
    pub train: TrainConfig,
    pub grid: Vec<(usize, usize)>,
    /// AGMPNN shape in the taps sweep.
    pub agmpnn_k: usize,
    pub agmpnn_m: usize,
    /// Largest amplitude order tried for the LS memory polynomial.
    pub mpm_k_max: usize,
    /// Largest `K` and `M` tried when matching AGMPNN to a parameter target.
    pub agmpnn_shape_max: usize,
    pub complexity_taps: usize,
    pub exec: Mode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            presets: vec![DistortionLevel::High],
            taps_list: (4..=10).collect(),
            param_targets: vec![100, 200, 300, 400, 500, 600],
            budget: (rvftdnn::BUDGET_LO, rvftdnn::BUDGET_HI),
            seeds: vec![1, 2, 3],
            waveform: WaveformSpec::default(),
            train: TrainConfig::default(),
            grid: rvftdnn::default_grid(),
            agmpnn_k: 3,
            agmpnn_m: 3,
            mpm_k_max: 6,
            agmpnn_shape_max: 6,
            complexity_taps: 7,
            exec: Mode::default(),
        }
    }
}

/// One CSV row. NMSE fields are `None` for infeasible cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub family: Family,
    pub preset: DistortionLevel,
    pub taps: usize,
    pub k_orders: usize,
    pub m_experts: usize,
    pub params_formula: usize,
    pub params_actual: usize,
    pub seed: u64,
    pub postinv_nmse_db: Option<f64>,
    pub lin_nmse_db: Option<f64>,
    pub no_dpd_nmse_db: Option<f64>,
}

impl SweepRow {
    fn from_report(preset: DistortionLevel, seed: u64, r: &IlaReport) -> Self {
        Self {
            family: r.family,
            preset,
            taps: r.taps,
            k_orders: r.k_orders,
            m_experts: r.m_experts,
            params_formula: r.params_formula,
            params_actual: r.params_actual,
            seed,
            postinv_nmse_db: Some(r.postinverse_nmse_db),
            lin_nmse_db: r.linearization_nmse_db,
            no_dpd_nmse_db: r.no_dpd_nmse_db,
        }
    }

    fn infeasible(family: Family, preset: DistortionLevel, taps: usize, seed: u64) -> Self {
        Self {
            family,
            preset,
            taps,
            k_orders: 0,
            m_experts: 0,
            params_formula: 0,
            params_actual: 0,
            seed,
            postinv_nmse_db: None,
            lin_nmse_db: None,
            no_dpd_nmse_db: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.postinv_nmse_db.is_some()
    }
}

pub fn write_rows(rows: &[SweepRow], mut out: impl Write) -> Result<()> {
    let fmt = |v: Option<f64>| v.map_or_else(|| "infeasible".to_string(), |x| format!("{x:.6}"));
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.family,
            r.preset.name(),
            r.taps,
            r.k_orders,
            r.m_experts,
            r.params_formula,
            r.params_actual,
            r.seed,
            fmt(r.postinv_nmse_db),
            fmt(r.lin_nmse_db),
            fmt(r.no_dpd_nmse_db)
        )?;
    }
    Ok(())
}

pub fn read_rows(text: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != CSV_HEADER {
        return Err(DpdError::Format(format!("unexpected report header `{headers}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| DpdError::Format(format!("report row {}: bad {what}", i + 1));
        let int = |j: usize, what: &str| rec[j].parse::<usize>().map_err(|_| bad(what));
        let db = |j: usize, what: &str| -> Result<Option<f64>> {
            match &rec[j] {
                "infeasible" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|_| bad(what)),
            }
        };
        rows.push(SweepRow {
            family: rec[0].parse()?,
            preset: rec[1].parse()?,
            taps: int(2, "taps")?,
            k_orders: int(3, "k_orders")?,
            m_experts: int(4, "m_experts")?,
            params_formula: int(5, "params_formula")?,
            params_actual: int(6, "params_actual")?,
            seed: rec[7].parse().map_err(|_| bad("seed"))?,
            postinv_nmse_db: db(8, "postinv_nmse_db")?,
            lin_nmse_db: db(9, "lin_nmse_db")?,
            no_dpd_nmse_db: db(10, "no_dpd_nmse_db")?,
        });
    }
    Ok(rows)
}

fn check_sweep(cfg: &SweepConfig) -> Result<()> {
    if cfg.families.is_empty() || cfg.presets.is_empty() || cfg.seeds.is_empty() {
        return Err(DpdError::arg("sweep needs at least one family, preset and seed"));
    }
    cfg.train.validate()
}

/// Best-K memory polynomial within the budget's upper bound, chosen on
/// held-out NMSE.
fn best_mpm(data: &Dataset, window: TapWindow, cfg: &SweepConfig) -> Result<Option<(MpmCoefficients, f64)>> {
    let mut best: Option<(MpmCoefficients, f64)> = None;
    for k in 1..=cfg.mpm_k_max {
        if 2 * window.total() * k > cfg.budget.1 {
            break;
        }
        let (coeffs, nmse) = fit_mpm(data, window, k, None, Mode::Sequential)?;
        if best.as_ref().is_none_or(|b| nmse < b.1) {
            best = Some((coeffs, nmse));
        }
    }
    Ok(best)
}

struct Cell {
    family: Family,
    preset: DistortionLevel,
    taps: usize,
    target: Option<usize>,
    seed: u64,
}

fn cell_spec(cell: &Cell, cfg: &SweepConfig) -> Option<ModelSpec> {
    let window = TapWindow::causal_taps(cell.taps);
    match (cell.family, cell.target) {
        (Family::Agmpnn, None) => Some(ModelSpec::Agmpnn { window, k_orders: cfg.agmpnn_k, n_experts: cfg.agmpnn_m, warm_start: true }),
        (Family::Rvftdnn, None) => Some(ModelSpec::RvftdnnSearch { window, budget: cfg.budget, grid: cfg.grid.clone() }),
        (Family::Mpm, None) => None,
        (Family::Agmpnn, Some(target)) => {
            let (k, m) = agmpnn_shape_for(cell.taps, target, cfg.agmpnn_shape_max);
            Some(ModelSpec::Agmpnn { window, k_orders: k, n_experts: m, warm_start: true })
        }
        (Family::Rvftdnn, Some(target)) => {
            let (n1, n2) = rvftdnn_shape_for(cell.taps, target, &cfg.grid)?;
            Some(ModelSpec::Rvftdnn { window, n1, n2 })
        }
        (Family::Mpm, Some(target)) => {
            let k = mpm_order_for(cell.taps, target, cfg.mpm_k_max);
            Some(ModelSpec::Mpm { window, k_orders: k, ridge: None })
        }
    }
}

/// `(K, M)` whose published parameter count is closest to `target`.
pub fn agmpnn_shape_for(taps: usize, target: usize, max: usize) -> (usize, usize) {
    let mut best = (1, 1);
    let key = |k: usize, m: usize| (agmpnn::count_params_formula(taps, k, m).abs_diff(target), agmpnn::count_params_actual(taps, k, m), k, m);
    for k in 1..=max {
        for m in 1..=max {
            if key(k, m) < key(best.0, best.1) {
                best = (k, m);
            }
        }
    }
    best
}

pub fn rvftdnn_shape_for(taps: usize, target: usize, grid: &[(usize, usize)]) -> Option<(usize, usize)> {
    grid.iter().copied().min_by_key(|&(a, b)| (rvftdnn_param_count(taps, a, b).abs_diff(target), a, b))
}

pub fn mpm_order_for(taps: usize, target: usize, k_max: usize) -> usize {
    (1..=k_max).min_by_key(|&k| ((2 * taps * k).abs_diff(target), k)).unwrap_or(1)
}

fn run_sweep_cell(cell: &Cell, cfg: &SweepConfig) -> Result<SweepRow> {
    let pa = preset(cell.preset);
    let seeds = IlaSeeds::from_base(cell.seed);
    let window = TapWindow::causal_taps(cell.taps);
    let wave = cfg.waveform;
    let train_cfg = TrainConfig { exec: Mode::Sequential, ..cfg.train.clone() };

    let fit = if cell.family == Family::Mpm && cell.target.is_none() {
        let chi = generate_waveform(seeds.fit_waveform, wave.n_samples, wave.bandwidth_fraction)?;
        let (psi, gain) = observe(&pa, &chi, seeds.noise, ALIGN_MAX_LAG)?;
        let data = Dataset::segmented(psi, chi, window, train_cfg.segment_len, train_cfg.train_fraction)?;
        let Some((coeffs, post)) = best_mpm(&data, window, cfg)? else {
            return Ok(SweepRow::infeasible(cell.family, cell.preset, cell.taps, cell.seed));
        };
        let model = DpdModel::Mpm(coeffs);
        let (k, m) = model.shape_columns();
        let report = IlaReport {
            family: Family::Mpm,
            taps: cell.taps,
            k_orders: k,
            m_experts: m,
            params_formula: model.params_formula(),
            params_actual: model.params_actual(),
            postinverse_nmse_db: post,
            linearization_nmse_db: None,
            no_dpd_nmse_db: None,
            gain_fit: gain,
            gain_eval: None,
            seeds,
            flagged: false,
        };
        let fresh = generate_waveform(seeds.eval_waveform, wave.n_samples, wave.bandwidth_fraction)?;
        let eval = ila_deploy_eval(&pa, &model, &fresh)?;
        report.with_eval(&eval)
    } else {
        let Some(spec) = cell_spec(cell, cfg) else {
            return Ok(SweepRow::infeasible(cell.family, cell.preset, cell.taps, cell.seed));
        };
        match run_cell(&pa, &spec, &train_cfg, wave, cell.seed) {
            Ok(fit) => fit.report,
            // an empty feasible grid is reported, not fatal
            Err(DpdError::Argument(msg)) if msg.contains("budget") => {
                return Ok(SweepRow::infeasible(cell.family, cell.preset, cell.taps, cell.seed));
            }
            Err(e) => return Err(e),
        }
    };
    Ok(SweepRow::from_report(cell.preset, cell.seed, &fit))
}

fn run_cells(cells: Vec<Cell>, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    exec::map_ordered(cfg.exec, &cells, |c| run_sweep_cell(c, cfg)).into_iter().collect()
}

/// NMSE versus number of taps. Rows are ordered by family, taps, preset, seed.
pub fn sweep_taps(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    check_sweep(cfg)?;
    if cfg.taps_list.is_empty() {
        return Err(DpdError::arg("taps sweep needs a non-empty taps list"));
    }
    let mut cells = Vec::new();
    for &family in &cfg.families {
        for &taps in &cfg.taps_list {
            for &preset in &cfg.presets {
                for &seed in &cfg.seeds {
                    cells.push(Cell { family, preset, taps, target: None, seed });
                }
            }
        }
    }
    run_cells(cells, cfg)
}

/// NMSE versus parameter budget at fixed taps. Both presets are always
/// evaluated; `cfg.presets` is ignored. Rows are ordered by family, target,
/// preset, seed.
pub fn sweep_complexity(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    check_sweep(cfg)?;
    if cfg.param_targets.is_empty() {
        return Err(DpdError::arg("complexity sweep needs parameter targets"));
    }
    let mut cells = Vec::new();
    for &family in &cfg.families {
        for &target in &cfg.param_targets {
            for preset in [DistortionLevel::Low, DistortionLevel::High] {
                for &seed in &cfg.seeds {
                    cells.push(Cell { family, preset, taps: cfg.complexity_taps, target: Some(target), seed });
                }
            }
        }
    }
    run_cells(cells, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_pa() -> PaConfig {
        PaConfig::linear(Complex64::new(0.8, 0.3), -2.0)
    }

    #[test]
    fn linear_pa_has_exact_inverse() {
        let chi = generate_waveform(1, 8192, 0.3).unwrap();
        let spec = ModelSpec::Mpm { window: TapWindow::causal_taps(1), k_orders: 1, ridge: Some(0.0) };
        let fit = ila_fit(&linear_pa(), &chi, &spec, &TrainConfig::default(), IlaSeeds::from_base(1), IlaOptions::default()).unwrap();
        let DpdModel::Mpm(c) = &fit.model else { panic!() };
        assert!((c.lambda[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(fit.report.postinverse_nmse_db < -120.0);
        let fresh = generate_waveform(2, 8192, 0.3).unwrap();
        let eval = ila_deploy_eval(&linear_pa(), &fit.model, &fresh).unwrap();
        assert!(eval.linearization_nmse_db < -120.0);
    }

    #[test]
    fn identity_dpd_on_linear_pa() {
        let fresh = generate_waveform(2, 4096, 0.3).unwrap();
        let id = DpdModel::Mpm(MpmCoefficients::identity(MpmSpec::new(TapWindow::causal_taps(3), 2, 0.0).unwrap()));
        let eval = ila_deploy_eval(&linear_pa(), &id, &fresh).unwrap();
        assert!(eval.linearization_nmse_db < -120.0);
        assert!(eval.no_dpd_nmse_db < -120.0);
    }

    #[test]
    fn ls_mpm_beats_identity_on_low_preset() {
        let pa = preset(DistortionLevel::Low);
        let chi = generate_waveform(1, crate::signal::STANDARD_SAMPLES, crate::signal::STANDARD_BANDWIDTH).unwrap();
        let window = TapWindow::causal_taps(4);
        let fit = ila_fit(&pa, &chi, &ModelSpec::Mpm { window, k_orders: 4, ridge: None }, &TrainConfig::default(), IlaSeeds::from_base(1), IlaOptions::default()).unwrap();
        let id = MpmCoefficients::identity(MpmSpec::new(window, 4, 0.0).unwrap());
        let id_nmse = validation_nmse(&MpmPredictor(&id), &fit.dataset, Mode::Sequential).unwrap();
        assert!(fit.report.postinverse_nmse_db < id_nmse, "{} vs {}", fit.report.postinverse_nmse_db, id_nmse);
        assert!(fit.report.postinverse_nmse_db >= -43.0);
    }

    #[test]
    fn shape_matching() {
        assert_eq!(agmpnn_shape_for(7, 309, 6), (3, 3));
        assert_eq!(mpm_order_for(7, 56, 6), 4);
        assert_eq!(mpm_order_for(7, 600, 6), 6);
        assert_eq!(rvftdnn_shape_for(7, 546, &rvftdnn::default_grid()).map(|s| rvftdnn_param_count(7, s.0, s.1)), Some(546));
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let rows = vec![
            SweepRow {
                family: Family::Agmpnn,
                preset: DistortionLevel::High,
                taps: 7,
                k_orders: 3,
                m_experts: 3,
                params_formula: 309,
                params_actual: 171,
                seed: 1,
                postinv_nmse_db: Some(-25.5),
                lin_nmse_db: Some(-20.25),
                no_dpd_nmse_db: Some(-15.75),
            },
            SweepRow::infeasible(Family::Rvftdnn, DistortionLevel::Low, 4, 2),
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.contains("rvftdnn,low,4,0,0,0,0,2,infeasible,infeasible,infeasible"));
        assert_eq!(read_rows(&text).unwrap(), rows);
    }

    #[test]
    fn small_taps_sweep_shape() {
        let cfg = SweepConfig {
            taps_list: vec![3, 4],
            seeds: vec![5, 6],
            waveform: WaveformSpec { n_samples: 4096, bandwidth_fraction: 0.15 },
            train: TrainConfig { segment_len: 256, batch_size: 4, max_epochs: 2, ..TrainConfig::default() },
            grid: vec![(8, 8), (9, 9)],
            ..SweepConfig::default()
        };
        let rows = sweep_taps(&cfg).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 2);
        assert_eq!(rows[0].family, Family::Mpm);
        let agm = rows.iter().find(|r| r.family == Family::Agmpnn && r.taps == 4).unwrap();
        assert_eq!(agm.params_formula, agmpnn::count_params_formula(4, 3, 3));
        // 8x8 at 3 taps is 186 parameters, inside the budget
        assert!(rows.iter().filter(|r| r.family == Family::Rvftdnn).all(|r| r.is_feasible()));
        for r in rows.iter().filter(|r| r.family == Family::Rvftdnn) {
            assert!((100..=600).contains(&r.params_actual));
        }
    }
}
