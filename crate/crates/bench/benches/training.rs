use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use evograph::distill::{distill_student, DistillationBundle};
use evograph::teacher::{loss_and_gradients, objective_value, Objective, PreparedWindow};
use evograph::{train_teacher, EgadModel, ModelConfig};
use evograph_bench::{desk_event, short_teacher, DESK_K};

fn chain(c: &mut Criterion) {
    let event = desk_event();
    let mut group = c.benchmark_group("chain");
    for (name, cfg) in [("teacher", ModelConfig::teacher()), ("student", ModelConfig::student())] {
        let window = PreparedWindow::new(event.window(DESK_K, cfg.window).unwrap()).unwrap();
        let model = EgadModel::new(cfg, event.registry().clone()).unwrap();
        group.bench_function(format!("{name}/forward"), |b| {
            b.iter(|| objective_value(&model, &window, Objective::Reconstruction).unwrap())
        });
        group.bench_function(format!("{name}/forward_backward"), |b| {
            b.iter(|| loss_and_gradients(&model, &window, Objective::Reconstruction).unwrap())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let event = desk_event();
    let cfg = short_teacher(10);
    let window = event.window(DESK_K, cfg.window).unwrap();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("teacher/10_epochs", |b| b.iter(|| train_teacher(window, event.registry(), &cfg).unwrap()));

    let teacher = train_teacher(window, event.registry(), &cfg).unwrap();
    let student_cfg = ModelConfig { epochs: 10, ..ModelConfig::student() };
    group.bench_function("student/10_epochs", |b| {
        b.iter_batched(
            || DistillationBundle::new(teacher.model.clone(), teacher.embeddings.clone(), student_cfg.clone()).unwrap(),
            |bundle| distill_student(&bundle, window).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, chain, training);
criterion_main!(benches);
