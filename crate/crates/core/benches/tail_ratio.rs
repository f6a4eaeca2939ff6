use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rvseries::estimation::{estimate_tail_ratio, remainder_decay_probe};
use rvseries::models::{random_sum_model, sre_model, CountLaw, MatrixLaw, SeriesModel};
use rvseries::theory::{certify, MomentCheckParams};
use rvseries::{Exec, LawFamily, RegVarLaw, SpectralAtom, StreamKey, TailSet};

fn noise(w: f64) -> RegVarLaw {
    RegVarLaw::new(
        1.5,
        vec![
            SpectralAtom::new(vec![1.0], w),
            SpectralAtom::new(vec![-1.0], 1.0 - w),
        ],
        LawFamily::ParetoPolar,
        1.0,
    )
    .unwrap()
}

fn certified(mut model: SeriesModel) -> SeriesModel {
    let params = MomentCheckParams::for_model(&model);
    certify(&mut model, &params).unwrap();
    model
}

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn tail_ratio(c: &mut Criterion) {
    let n_sims = 200_000;
    let models = [
        (
            "random-sum",
            certified(random_sum_model(CountLaw::Geometric { mean: 4.0 }, noise(0.5)).unwrap()),
        ),
        (
            "sre",
            certified(sre_model(MatrixLaw::scalar(0.5), noise(0.7)).unwrap()),
        ),
    ];
    let b = TailSet::norm_exceeds(1.0).unwrap();
    let mut group = c.benchmark_group("estimate_tail_ratio");
    group
        .sample_size(10)
        .throughput(Throughput::Elements(n_sims));
    for (name, model) in &models {
        let u = [model.noise().tail_quantile(1e-2).unwrap()];
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(*name, mode), &exec, |bench, &exec| {
                bench.iter(|| {
                    estimate_tail_ratio(model, &b, &u, n_sims, StreamKey::new(1), exec).unwrap()
                })
            });
        }
    }
    group.finish();
}

fn decay_probe(c: &mut Criterion) {
    let n_sims = 50_000;
    let model = certified(sre_model(MatrixLaw::scalar(0.5), noise(0.7)).unwrap());
    let u = model.noise().tail_quantile(1e-3).unwrap();
    let mut group = c.benchmark_group("remainder_decay_probe");
    group
        .sample_size(10)
        .throughput(Throughput::Elements(n_sims));
    for (mode, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("sre", mode), &exec, |bench, &exec| {
            bench.iter(|| {
                remainder_decay_probe(
                    &model,
                    &[0, 2, 4, 8, 16],
                    u,
                    n_sims,
                    StreamKey::new(1),
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, tail_ratio, decay_probe);
criterion_main!(benches);
