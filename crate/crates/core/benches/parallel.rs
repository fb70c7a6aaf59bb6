//! Compares the data-parallel inner loops against single-threaded execution
//! of the same code. With the default `parallel` feature the two variants
//! run in rayon pools of different widths; without it both run the
//! sequential fallback and should coincide.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use embalign_core::align::{apply, fit_orthogonal};
use embalign_core::metrics::{class_retrieval_top1, multimodal_kernel};
use embalign_core::synth::{make_planted, PlantedParams};

fn scenario() -> embalign_core::synth::PlantedScenario {
    let mut params = PlantedParams::new(64, 64, 2000, 1000, 20, 404);
    params.noise_sigma = 0.05;
    make_planted(&params).expect("scenario generates")
}

#[cfg(feature = "parallel")]
fn run_in_pool<T>(threads: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool builds")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn run_in_pool<T>(_threads: usize, f: impl FnOnce() -> T) -> T {
    f()
}

fn bench_all(c: &mut Criterion) {
    let s = scenario();
    let map = fit_orthogonal(&s.f_a, &s.f_b, false).expect("fit");
    let widths: &[(usize, &str)] = if cfg!(feature = "parallel") {
        &[(1, "seq"), (0, "par")] // 0 = rayon default width
    } else {
        &[(1, "seq")]
    };

    let mut group = c.benchmark_group("apply_rows");
    for &(threads, name) in widths {
        group.bench_function(name, |b| {
            b.iter(|| {
                run_in_pool(threads, || {
                    black_box(apply(&map, &s.f_a, None, None, false).unwrap())
                })
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("class_retrieval_top1");
    for &(threads, name) in widths {
        group.bench_function(name, |b| {
            b.iter(|| {
                run_in_pool(threads, || {
                    black_box(class_retrieval_top1(&s.f_a, &s.f_b, false).unwrap())
                })
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("multimodal_kernel");
    for &(threads, name) in widths {
        group.bench_function(name, |b| {
            b.iter(|| {
                run_in_pool(threads, || {
                    black_box(multimodal_kernel(&s.f_a, &s.g_a).unwrap())
                })
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("theory_sweep_50");
    for &(threads, name) in widths {
        group.bench_function(name, |b| {
            b.iter(|| {
                run_in_pool(threads, || {
                    black_box(embalign_core::verify::run_theory_sweeps(50, 7, false).unwrap())
                })
            })
        });
    }
    group.finish();

    // the fit itself is sequential by design; tracked against regressions
    c.bench_function("fit_orthogonal", |b| {
        b.iter(|| black_box(fit_orthogonal(&s.f_a, &s.f_b, false).unwrap()))
    });
}

criterion_group!(benches, bench_all);
criterion_main!(benches);
