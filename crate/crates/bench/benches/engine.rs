use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use szc_core::filterdesign::zone_covariance;
use szc_core::harness::{make_input, Experiment, ExperimentConfig};
use szc_core::roomsim::desk_scene;
use szc_core::{design_position, DesignParams, FrameEngine, IrSet, Method, MicGroup, PositionId};

fn desk() -> Arc<IrSet> {
    Arc::new(desk_scene().build().expect("desk scene"))
}

fn frame_processing(c: &mut Criterion) {
    let set = desk();
    let exp = Experiment::prepare(ExperimentConfig::desk(Method::Acc), Arc::clone(&set)).unwrap();
    let input = make_input(&exp.config, 8000).unwrap();
    let n = exp.config.frame_len;
    let frames: Vec<&[f64]> = input.chunks(n).collect();

    let mut group = c.benchmark_group("frame");
    for (name, observe) in [("fixed", false), ("tracked", true)] {
        group.bench_function(name, |b| {
            let observation = observe.then(|| exp.dict.observation.clone());
            let mut engine =
                FrameEngine::new(n, Arc::clone(&set), observation, exp.dict.mix.clone(), &exp.config.params).unwrap();
            let mut i = 0;
            b.iter(|| {
                let out = engine.process_frame(frames[i % frames.len()], PositionId(4), observe).unwrap();
                i += 1;
                black_box(out)
            })
        });
    }
    group.finish();
}

fn design(c: &mut Criterion) {
    let set = desk();
    let p = DesignParams::desk();
    c.bench_function("zone_covariance", |b| {
        b.iter(|| zone_covariance(&set, PositionId(4), MicGroup::Bright, p.filter_len).unwrap())
    });
    for method in [Method::Acc, Method::Pm] {
        c.bench_function(&format!("design_position/{}", method.name()), |b| {
            b.iter(|| design_position(&set, PositionId(4), method, &p).unwrap())
        });
    }
}

criterion_group!(benches, frame_processing, design);
criterion_main!(benches);
