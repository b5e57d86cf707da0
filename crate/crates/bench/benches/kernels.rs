use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use resonance_core::cyclealg::{linear_cycle, newton_cycle};
use resonance_core::shrinkfind::{default_plane, find_shrinking_point};
use resonance_core::tonguescan::{forward_period, scan};
use resonance_core::unfold::unfold_verify;
use resonance_core::verify::run_suites;
use resonance_core::{
    build_example, ExampleParams, GridSpec, ParamName, ScanSettings, SearchBox, ShrinkSettings, SymbolWord, UnfoldSettings,
    VerifySettings,
};

fn seven_cycle(c: f64) -> ExampleParams {
    ExampleParams { r_l: 0.2, s_r: 0.95, omega_l: 0.287, omega_r: 0.287, mu: 1.0, c }
}

fn base(c: f64) -> ExampleParams {
    ExampleParams { r_l: 0.2, s_r: 0.9, omega_l: 0.28, omega_r: 0.28, mu: 0.0, c }
}

fn cycles(c: &mut Criterion) {
    let word = SymbolWord::rotational(2, 2, 7).unwrap();
    let lin = build_example(&seven_cycle(0.0)).unwrap();
    let nonlin = build_example(&seven_cycle(1.0)).unwrap();
    let seed = linear_cycle(&lin, &word).unwrap().points[0].clone();
    c.bench_function("forward_period", |b| {
        let s = ScanSettings::default();
        b.iter(|| forward_period(black_box(&lin), &[0.0, 0.0], s.transient, s.max_period, s.tol, s.escape_radius(1.0)))
    });
    c.bench_function("linear_cycle", |b| b.iter(|| linear_cycle(black_box(&lin), &word).unwrap()));
    c.bench_function("newton_cycle", |b| b.iter(|| newton_cycle(black_box(&nonlin), &word, &seed, 1e-12, 50).unwrap()));
}

fn grids(c: &mut Criterion) {
    let spec = GridSpec {
        param_x: ParamName::Omega,
        param_y: ParamName::SR,
        x_range: [0.25, 0.32],
        y_range: [0.80, 0.995],
        nx: 20,
        ny: 20,
        fixed: ExampleParams { mu: 1.0, ..seven_cycle(0.0) },
    };
    let mut g = c.benchmark_group("scan");
    g.sample_size(10);
    g.bench_function("20x20", |b| b.iter(|| scan(black_box(&spec), &ScanSettings::default()).unwrap()));
    g.finish();
}

fn shrinking(c: &mut Criterion) {
    let word = SymbolWord::rotational(2, 2, 7).unwrap();
    let bx = SearchBox { x: [0.28, 0.295], y: [0.86, 0.90] };
    let mut g = c.benchmark_group("shrinking_point");
    g.sample_size(10);
    g.bench_function("find", |b| {
        b.iter(|| find_shrinking_point(&default_plane(base(0.0)), &word, black_box(&bx), &ShrinkSettings::default()).unwrap())
    });
    let rep = find_shrinking_point(&default_plane(base(1.0)), &word, &bx, &ShrinkSettings::default()).unwrap();
    g.bench_function("unfold_mu_0.25", |b| b.iter(|| unfold_verify(black_box(&rep), 0.25, &UnfoldSettings::default()).unwrap()));
    g.bench_function("verify_suites_100", |b| {
        b.iter(|| run_suites(black_box(&VerifySettings { instances: 100, ..Default::default() })))
    });
    g.finish();
}

criterion_group!(benches, cycles, grids, shrinking);
criterion_main!(benches);
