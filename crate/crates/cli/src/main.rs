use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpdlab::agmpnn::{amplitude_percentile, AgmpnnModel, InitOptions};
use dpdlab::config::{parse_config, write_pa, RunConfig};
use dpdlab::ila::{self, DpdModel, Family, IlaFit, ModelSpec, SweepRow, WaveformSpec};
use dpdlab::mpm::{build_basis, ls_fit, MpmSpec};
use dpdlab::pa_sim::{pa_forward, preset, DistortionLevel};
use dpdlab::persist::{load_model, save_model};
use dpdlab::rvftdnn::{architecture_search, RvftdnnModel};
use dpdlab::signal::{generate_waveform, nmse_slices, read_samples, write_samples, ComplexSequence, TapWindow};
use dpdlab::training::{finite_diff_check, train, Dataset, TrainConfig};
use dpdlab::DpdError;

/// Digital predistortion experiments: memory polynomials, gated
/// mixtures of memory polynomials, and real-valued time-delay networks.
#[derive(Parser, Debug)]
#[command(name = "dpdlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded band-limited test waveform.
    GenSignal(GenSignal),
    /// Pass a waveform through the simulated PA.
    SimulatePa(SimulatePa),
    /// Fit a model mapping --in onto --target.
    Fit(Fit),
    /// Apply a saved model to --in and print its NMSE against --target.
    Eval(Eval),
    /// Fit a predistorter by indirect learning and evaluate it.
    IlaRun(IlaRun),
    /// NMSE versus number of taps for every model family.
    SweepTaps(Sweep),
    /// NMSE versus parameter count at fixed taps, both presets.
    SweepComplexity(Sweep),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(Gradcheck),
    /// Summarize a sweep CSV per family, preset and taps.
    Report(Report),
}

#[derive(Args, Debug)]
struct GenSignal {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of samples.
    #[arg(long, default_value_t = 65536)]
    n: usize,
    /// Occupied bandwidth as a fraction of the sample rate.
    #[arg(long, default_value_t = 0.15)]
    bandwidth: f64,
    /// Output file; `.csv` writes re,im text, anything else DPDIQ1.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulatePa {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// PA preset; ignored when --config is given.
    #[arg(long, default_value = "high")]
    preset: DistortionLevel,
    /// Run config whose [pa] section defines the PA.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Add feedback noise drawn from this seed; noiseless when absent.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Write the effective [pa] section here.
    #[arg(long)]
    pa_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model family: mpm, agmpnn or rvftdnn.
    #[arg(long, default_value = "mpm")]
    model: Family,
    /// Total delay taps.
    #[arg(long, default_value_t = 4)]
    taps: usize,
    /// Amplitude orders (mpm, agmpnn).
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Experts (agmpnn).
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// First hidden width (rvftdnn).
    #[arg(long, default_value_t = 12)]
    n1: usize,
    /// Second hidden width (rvftdnn).
    #[arg(long, default_value_t = 12)]
    n2: usize,
    /// Ridge for LS fits; automatic when absent.
    #[arg(long)]
    ridge: Option<f64>,
    /// Start agmpnn from random weights instead of an LS fit.
    #[arg(long, default_value_t = false)]
    cold_start: bool,
    /// Architecture-search rvftdnn within [100, 600] parameters.
    #[arg(long, default_value_t = false)]
    search: bool,
}

#[derive(Args, Debug)]
struct Fit {
    #[command(flatten)]
    model: ModelArgs,
    /// Model input samples.
    #[arg(long = "in")]
    input: PathBuf,
    /// Desired output samples.
    #[arg(long)]
    target: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Run config; its [train] section sets training options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the per-epoch training history as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Override the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct Eval {
    /// Model file.
    #[arg(long = "model-file")]
    model_file: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Also write the model output here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IlaRun {
    /// Run config with [pa], [signal], [model] and [train] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for waveforms, noise and training; overrides [signal] seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of indirect-learning passes.
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    /// Write the fitted predistorter here.
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Sweep {
    /// Run config; its [sweep] section must set `seeds` unless --seeds is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Gradcheck {
    /// agmpnn or rvftdnn.
    #[arg(long, default_value = "agmpnn")]
    model: Family,
    #[arg(long, default_value_t = 3)]
    taps: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    n1: usize,
    #[arg(long, default_value_t = 3)]
    n2: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Samples in the loss window.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    /// Exit with status 2 when the error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args, Debug)]
struct Report {
    /// Sweep CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write a whitespace-separated .dat mirror for gnuplot.
    #[arg(long)]
    dat: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(DpdError),
}

impl From<DpdError> for Failure {
    fn from(e: DpdError) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::GenSignal(a) => gen_signal(a),
        Command::SimulatePa(a) => simulate_pa(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::IlaRun(a) => ila_run(a),
        Command::SweepTaps(a) => sweep(a, false),
        Command::SweepComplexity(a) => sweep(a, true),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Report(a) => report(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        }
    }
}

fn gen_signal(a: GenSignal) -> Outcome {
    let x = generate_waveform(a.seed, a.n, a.bandwidth)?;
    write_samples(&x, &a.out)?;
    eprintln!("wrote {} samples to {} (PAPR {:.2} dB)", x.len(), a.out.display(), x.papr_db());
    Ok(())
}

fn simulate_pa(a: SimulatePa) -> Outcome {
    let pa = match &a.config {
        Some(p) => load_config(Some(p))?.pa,
        None => preset(a.preset),
    };
    let x = read_samples(&a.input)?;
    let y = pa_forward(&pa, &x, a.noise_seed)?;
    write_samples(&y, &a.out)?;
    if let Some(p) = &a.pa_out {
        fs::write(p, write_pa(&pa)?)?;
    }
    Ok(())
}

fn read_pair(input: &Path, target: &Path) -> Result<(ComplexSequence, ComplexSequence), Failure> {
    let x = read_samples(input)?;
    let y = read_samples(target)?;
    if x.len() != y.len() {
        return Err(Failure::Runtime(DpdError::Argument(format!("--in has {} samples but --target has {}", x.len(), y.len()))));
    }
    Ok((x, y))
}

fn fit(a: Fit) -> Outcome {
    let cfg = load_config(a.config.as_deref())?;
    let mut train_cfg = cfg.train.clone();
    if let Some(s) = a.seed {
        train_cfg.seed = s;
    }
    let (x, y) = read_pair(&a.input, &a.target)?;
    let m = &a.model;
    let window = TapWindow::causal_taps(m.taps.max(1));
    let model = match m.model {
        Family::Mpm => {
            // LS uses every sample with a full tap window
            let spec = MpmSpec::new(window, m.k, 0.0)?;
            let range = window.interior(x.len());
            let basis = build_basis(&x, &spec, range.clone())?;
            DpdModel::Mpm(ls_fit(&basis, &y.samples()[range], m.ridge)?)
        }
        Family::Agmpnn | Family::Rvftdnn => {
            let data = Dataset::segmented(x.clone(), y.clone(), window, train_cfg.segment_len, train_cfg.train_fraction)?;
            let (model, hist) = fit_network(m, window, &data, &train_cfg)?;
            eprintln!("best epoch {} of {}, validation NMSE {:.3} dB", hist.best_epoch, hist.stopped_epoch, hist.best_val_nmse_db());
            if let Some(p) = &a.history {
                hist.write_csv(p)?;
            }
            model
        }
    };
    save_model(&a.out, &model)?;
    eprintln!("wrote {} model ({} parameters) to {}", model.family(), model.params_actual(), a.out.display());
    Ok(())
}

fn fit_network(m: &ModelArgs, window: TapWindow, data: &Dataset, cfg: &TrainConfig) -> Result<(DpdModel, dpdlab::training::TrainHistory), Failure> {
    match m.model {
        Family::Agmpnn => {
            let ws = if m.cold_start { None } else { Some(ila::fit_mpm(data, window, m.k, m.ridge, cfg.exec)?.0) };
            let opts = InitOptions { warm_start: ws.as_ref(), amplitude_p95: amplitude_percentile(&data.input, 0.95), seed: cfg.seed, ..Default::default() };
            let init = AgmpnnModel::init(window, m.k, m.m, &opts)?;
            let (model, hist) = train(init, data, cfg)?;
            Ok((DpdModel::Agmpnn(model), hist))
        }
        Family::Rvftdnn if m.search => {
            let out = architecture_search(window, (dpdlab::rvftdnn::BUDGET_LO, dpdlab::rvftdnn::BUDGET_HI), data, &dpdlab::rvftdnn::default_grid(), cfg, cfg.exec)?;
            Ok((DpdModel::Rvftdnn(out.model), out.history))
        }
        Family::Rvftdnn => {
            let init = RvftdnnModel::init(window, m.n1, m.n2, cfg.seed)?;
            let (model, hist) = train(init, data, cfg)?;
            Ok((DpdModel::Rvftdnn(model), hist))
        }
        Family::Mpm => unreachable!("LS fits do not train"),
    }
}

fn eval(a: Eval) -> Outcome {
    let model = load_model(&a.model_file)?;
    let (x, y) = read_pair(&a.input, &a.target)?;
    let out = model.predict(&x);
    let range = model.window().interior(x.len());
    let db = nmse_slices(&out.samples()[range.clone()], &y.samples()[range])?;
    println!("{db:.12}");
    if let Some(p) = &a.out {
        write_samples(&out, p)?;
    }
    Ok(())
}

fn model_spec(cfg: &RunConfig) -> ModelSpec {
    let m = &cfg.model;
    let window = m.window();
    match m.kind {
        Family::Mpm => ModelSpec::Mpm { window, k_orders: m.k_orders, ridge: m.ridge },
        Family::Agmpnn => ModelSpec::Agmpnn { window, k_orders: m.k_orders, n_experts: m.n_experts, warm_start: m.warm_start },
        Family::Rvftdnn if m.search => ModelSpec::RvftdnnSearch { window, budget: cfg.sweep.budget, grid: cfg.sweep.grid.clone() },
        Family::Rvftdnn => ModelSpec::Rvftdnn { window, n1: m.n1, n2: m.n2 },
    }
}

fn ila_run(a: IlaRun) -> Outcome {
    let cfg = load_config(a.config.as_deref())?;
    let seed = a.seed.unwrap_or(cfg.signal.seed);
    let seeds = ila::IlaSeeds::from_base(seed);
    let wave = WaveformSpec { n_samples: cfg.signal.n_samples, bandwidth_fraction: cfg.signal.bandwidth_fraction };
    let chi = generate_waveform(seeds.fit_waveform, wave.n_samples, wave.bandwidth_fraction)?;
    let fresh = generate_waveform(seeds.eval_waveform, wave.n_samples, wave.bandwidth_fraction)?;
    let opts = ila::IlaOptions { iterations: a.iterations, ..Default::default() };
    let IlaFit { model, report, warm_start, history, .. } = ila::ila_fit(&cfg.pa, &chi, &model_spec(&cfg), &cfg.train, seeds, opts)?;
    let eval = ila::ila_deploy_eval(&cfg.pa, &model, &fresh)?;
    let report = report.with_eval(&eval);
    let mut out = std::io::stdout().lock();
    writeln!(out, "family = {}", report.family)?;
    writeln!(out, "taps = {}", report.taps)?;
    writeln!(out, "k_orders = {}", report.k_orders)?;
    writeln!(out, "m_experts = {}", report.m_experts)?;
    writeln!(out, "params_formula = {}", report.params_formula)?;
    writeln!(out, "params_actual = {}", report.params_actual)?;
    writeln!(out, "fit_seed = {}", seeds.fit_waveform)?;
    writeln!(out, "eval_seed = {}", seeds.eval_waveform)?;
    writeln!(out, "noise_seed = {}", seeds.noise)?;
    writeln!(out, "gain_fit = [{:.9}, {:.9}]", report.gain_fit.re, report.gain_fit.im)?;
    writeln!(out, "gain_eval = [{:.9}, {:.9}]", eval.gain.re, eval.gain.im)?;
    if let Some((_, ws)) = &warm_start {
        writeln!(out, "warm_start_postinv_nmse_db = {ws:.6}")?;
    }
    writeln!(out, "postinv_nmse_db = {:.6}", report.postinverse_nmse_db)?;
    writeln!(out, "lin_nmse_db = {:.6}", eval.linearization_nmse_db)?;
    writeln!(out, "no_dpd_nmse_db = {:.6}", eval.no_dpd_nmse_db)?;
    if report.flagged {
        eprintln!("warning: predistortion made the output less linear than no predistortion");
    }
    if let Some(p) = &a.model_out {
        save_model(p, &model)?;
    }
    if let (Some(p), Some(h)) = (&a.history, &history) {
        h.write_csv(p)?;
    }
    Ok(())
}

fn sweep(a: Sweep, complexity: bool) -> Outcome {
    let cfg = load_config(a.config.as_deref())?;
    let mut sweep = cfg.sweep.clone();
    match a.seeds {
        Some(s) if !s.is_empty() => sweep.seeds = s,
        Some(_) => return Err(Failure::Usage("--seeds is empty".into())),
        None if cfg.sweep_seeds_given => {}
        None => return Err(Failure::Usage("sweeps need explicit seeds: set [sweep] seeds or pass --seeds".into())),
    }
    let rows = if complexity { ila::sweep_complexity(&sweep)? } else { ila::sweep_taps(&sweep)? };
    for r in rows.iter().filter(|r| !r.is_feasible()) {
        eprintln!("note: {} at {} taps has no feasible configuration", r.family, r.taps);
    }
    match &a.out {
        Some(p) => {
            let mut buf = Vec::new();
            ila::write_rows(&rows, &mut buf)?;
            fs::write(p, buf)?;
        }
        None => ila::write_rows(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn gradcheck(a: Gradcheck) -> Outcome {
    let n = a.samples.max(64);
    let phi = generate_waveform(a.seed, n, 0.15)?;
    let psi = pa_forward(&preset(DistortionLevel::High), &phi, None)?;
    let window = TapWindow::causal_taps(a.taps.max(1));
    let range = window.interior(n);
    let err = match a.model {
        Family::Agmpnn => {
            let opts = InitOptions { amplitude_p95: amplitude_percentile(&psi, 0.95), seed: a.seed, ..Default::default() };
            let model = AgmpnnModel::init(window, a.k, a.m, &opts)?;
            finite_diff_check(&model, &psi, &phi, range, a.step)?
        }
        Family::Rvftdnn => {
            let model = RvftdnnModel::init(window, a.n1, a.n2, a.seed)?;
            finite_diff_check(&model, &psi, &phi, range, a.step)?
        }
        Family::Mpm => return Err(Failure::Usage("gradcheck applies to agmpnn and rvftdnn".into())),
    };
    println!("{err:.3e}");
    if err > a.tol {
        return Err(Failure::Runtime(DpdError::Argument(format!("max relative error {err:.3e} exceeds {:.1e}", a.tol))));
    }
    Ok(())
}

fn report(a: Report) -> Outcome {
    let rows = ila::read_rows(&fs::read_to_string(&a.input)?)?;
    let mut groups: Vec<((Family, DistortionLevel, usize, usize), Vec<&SweepRow>)> = Vec::new();
    for r in &rows {
        let key = (r.family, r.preset, r.taps, r.params_formula);
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mean = |rs: &[&SweepRow], f: fn(&SweepRow) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = rs.iter().filter_map(|r| f(r)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let cell = |v: Option<f64>| v.map_or_else(|| "infeasible".to_string(), |x| format!("{x:.3}"));
    let mut table = String::from("family   preset taps params seeds postinv_db lin_db no_dpd_db\n");
    let mut dat = String::from("# family preset taps params postinv_db lin_db no_dpd_db\n");
    for ((family, preset, taps, params), rs) in &groups {
        let (p, l, n) = (mean(rs, |r| r.postinv_nmse_db), mean(rs, |r| r.lin_nmse_db), mean(rs, |r| r.no_dpd_nmse_db));
        table.push_str(&format!("{:<8} {:<6} {:>4} {:>6} {:>5} {:>10} {:>6} {:>9}\n", family.name(), preset.name(), taps, params, rs.len(), cell(p), cell(l), cell(n)));
        dat.push_str(&format!("{} {} {} {} {} {} {}\n", family.name(), preset.name(), taps, params, cell(p), cell(l), cell(n)));
    }
    print!("{table}");
    if let Some(path) = &a.dat {
        fs::write(path, dat)?;
    }
    Ok(())
}
