use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use msalab_core::lm::{build_model, LmConfig};
use msalab_core::train::{finetune, Example, StageInfo, TrainConfig};

fn lm() -> LmConfig {
    LmConfig { d_model: 128, n_heads: 4, d_ff: 256, n_layers: 1, max_seq_len: 64, ..Default::default() }
}

fn data() -> Vec<Example> {
    (0..8).map(|i| Example::document(&format!("Q: Where was Author Number{i} born? A: Florence"))).collect()
}

fn forward(c: &mut Criterion) {
    let m = build_model(&lm()).unwrap();
    let ex = &data()[0];
    let mut g = c.benchmark_group("model");
    g.throughput(Throughput::Elements(ex.ids.len() as u64));
    g.bench_function("forward", |b| b.iter(|| m.forward(&ex.ids).unwrap()));
    g.finish();
}

fn train_epoch(c: &mut Criterion) {
    let m = build_model(&lm()).unwrap();
    let data = data();
    let cfg = TrainConfig { epochs: 1, batch_size: 1, warmup_epochs: 0, ..Default::default() };
    let tokens: usize = data.iter().map(|e| e.len()).sum();
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.throughput(Throughput::Elements(tokens as u64));
    g.bench_function("epoch_8_examples", |b| {
        b.iter_batched(|| m.params.clone(), |p| finetune(&lm(), &p, &data, &cfg, &StageInfo::new("bench", "s")).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, forward, train_epoch);
criterion_main!(benches);
