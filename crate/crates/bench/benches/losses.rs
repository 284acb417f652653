use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ctxspot_bench::seg_case;
use ctxspot_core::seg_loss::{seg_loss_and_grad, Margins};
use ctxspot_core::spot_loss::iterative_match;
use ctxspot_core::SpottingConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn losses(c: &mut Criterion) {
    let cfg = SpottingConfig::default();
    let (scores, tse) = seg_case(&cfg, 4, 1);
    let margins = Margins::from_config(&cfg);
    c.bench_function("seg_loss_and_grad 240x3", |b| {
        b.iter(|| seg_loss_and_grad(black_box(&scores), &tse, &cfg.slicing, margins).unwrap())
    });

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gt: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
    let pred: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
    c.bench_function("iterative_match 5x5", |b| b.iter(|| iterative_match(black_box(&gt), &pred).unwrap()));
}

criterion_group!(benches, losses);
criterion_main!(benches);
