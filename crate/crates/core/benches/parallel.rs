use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpdlab::agmpnn::{AgmpnnModel, InitOptions};
use dpdlab::exec::Mode;
use dpdlab::ila::{sweep_taps, Family, SweepConfig, WaveformSpec};
use dpdlab::mpm::{build_basis_with, MpmSpec};
use dpdlab::pa_sim::{pa_forward, preset, DistortionLevel};
use dpdlab::rvftdnn::RvftdnnModel;
use dpdlab::signal::{generate_waveform, TapWindow};
use dpdlab::training::{train, validation_nmse, Dataset, TrainConfig};

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn dataset(n: usize, taps: usize) -> Dataset {
    let x = generate_waveform(1, n, 0.15).unwrap();
    let y = pa_forward(&preset(DistortionLevel::High), &x, None).unwrap();
    Dataset::segmented(y, x, TapWindow::causal_taps(taps), 1024, 0.8).unwrap()
}

fn basis(c: &mut Criterion) {
    let x = generate_waveform(1, 65536, 0.15).unwrap();
    let spec = MpmSpec::new(TapWindow::causal_taps(7), 5, 0.0).unwrap();
    let mut g = c.benchmark_group("basis_65536x35");
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| build_basis_with(mode, black_box(&x), &spec, 6..x.len()).unwrap()));
    }
    g.finish();
}

fn validation(c: &mut Criterion) {
    let data = dataset(65536, 7);
    let agm = AgmpnnModel::init(TapWindow::causal_taps(7), 3, 3, &InitOptions::default()).unwrap();
    let rv = RvftdnnModel::init(TapWindow::causal_taps(7), 12, 12, 1).unwrap();
    let mut g = c.benchmark_group("validation_nmse");
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::new("agmpnn", name), &mode, |b, &m| b.iter(|| validation_nmse(&agm, &data, m).unwrap()));
        g.bench_with_input(BenchmarkId::new("rvftdnn", name), &mode, |b, &m| b.iter(|| validation_nmse(&rv, &data, m).unwrap()));
    }
    g.finish();
}

fn training_epoch(c: &mut Criterion) {
    let data = dataset(16384, 7);
    let init = AgmpnnModel::init(TapWindow::causal_taps(7), 3, 3, &InitOptions::default()).unwrap();
    let mut g = c.benchmark_group("agmpnn_one_epoch");
    g.sample_size(10);
    for (name, mode) in MODES {
        let cfg = TrainConfig { max_epochs: 1, batch_size: 4, exec: mode, ..TrainConfig::default() };
        g.bench_function(name, |b| b.iter(|| train(init.clone(), &data, &cfg).unwrap()));
    }
    g.finish();
}

fn small_sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_taps_small");
    g.sample_size(10);
    for (name, mode) in MODES {
        let cfg = SweepConfig {
            families: vec![Family::Mpm, Family::Agmpnn],
            taps_list: vec![3, 4],
            seeds: vec![1, 2],
            waveform: WaveformSpec { n_samples: 8192, bandwidth_fraction: 0.15 },
            train: TrainConfig { max_epochs: 2, batch_size: 2, ..TrainConfig::default() },
            exec: mode,
            ..SweepConfig::default()
        };
        g.bench_function(name, |b| b.iter(|| sweep_taps(&cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, basis, validation, training_epoch, small_sweep);
criterion_main!(benches);
