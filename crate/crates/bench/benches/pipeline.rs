use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use kinespike::analysis::{tsne, TsneConfig};
use kinespike::datagen::generate_log;
use kinespike::encoding::{calibrate_thresholds, deltas, encode_events, EventWindow};
use kinespike::nets::{Mode, ModelKind, ModelSpec, Network};
use kinespike::numcore::kernels::gemm;
use kinespike::numcore::Rng;
use kinespike::spiking::{convert, SimConfig};
use kinespike::{OperatorId, Target, TaskId};
use kinespike_bench::event_windows;

fn numcore(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let mut g = c.benchmark_group("gemm");
    for n in [64usize, 256] {
        let a: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, &n| {
            let mut out = vec![0.0; n * n];
            bench.iter(|| {
                out.fill(0.0);
                gemm(black_box(&a), black_box(&b), &mut out, n, n, n);
            })
        });
    }
    g.finish();
}

fn encoding(c: &mut Criterion) {
    let log = generate_log(TaskId::ThreadTheRings, OperatorId::B, 60.0, 42).unwrap();
    let m = deltas(&log).unwrap();
    let theta = calibrate_thresholds([&m], 0.5).unwrap();
    c.bench_function("encode_events_1800_frames", |b| {
        b.iter(|| encode_events(black_box(&m), &theta).unwrap())
    });
}

fn nets(c: &mut Criterion) {
    let windows = event_windows(32, 3);
    let batch: Vec<&EventWindow> = windows.iter().collect();
    let mut g = c.benchmark_group("nets");
    g.sample_size(20);
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, Target::Task);
        let net = Network::new(&spec).unwrap();
        let params = net.init(7);
        g.bench_function(BenchmarkId::new("forward_eval_32", kind), |b| {
            b.iter(|| net.forward(&params, black_box(&batch), Mode::Eval).unwrap())
        });
        g.bench_function(BenchmarkId::new("train_step_32", kind), |b| {
            b.iter(|| {
                net.loss_and_grads(&params, black_box(&batch), Mode::Train { dropout_seed: 1 })
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn spiking(c: &mut Criterion) {
    let windows = event_windows(1, 5);
    let mut g = c.benchmark_group("snn_simulate_200_steps");
    g.sample_size(20);
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, Target::Task);
        let params = Network::new(&spec).unwrap().init(7);
        let snn = convert(&spec, &params, SimConfig::default()).unwrap();
        g.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| snn.simulate(black_box(&windows[0])).unwrap())
        });
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let mut rng = Rng::new(9);
    let (n, d) = (300, 16);
    let x: Vec<f64> = (0..n * d)
        .map(|i| rng.normal() + (i / d % 3) as f64 * 4.0)
        .collect();
    let cfg = TsneConfig {
        iterations: 250,
        ..TsneConfig::default()
    };
    let mut g = c.benchmark_group("analysis");
    g.sample_size(10);
    g.bench_function("tsne_300x16_250_iters", |b| {
        b.iter(|| tsne(black_box(&x), n, d, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, numcore, encoding, nets, spiking, analysis);
criterion_main!(benches);
