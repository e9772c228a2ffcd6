use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use enclab_bench::{box_probe, concentric_probe};
use enclab_core::indicator::{default_taus, tau_sweep};
use enclab_core::potentials::{vj_chain, SpectralParam, W00};
use enclab_core::shellflux::shell_heat_value;
use enclab_core::thermo::{touching_ball_integral_scaled, TouchingBallGeom};
use enclab_core::{Point, ShellSource};

fn closed_forms(c: &mut Criterion) {
    let shell = ShellSource::new(Point::ORIGIN, 1.05, 1.55).unwrap();
    let w = W00::new(shell, SpectralParam::from_s(40.0).unwrap());
    c.bench_function("w00_value", |b| b.iter(|| w.value(black_box(Point::new(0.3, 0.2, 0.1))).unwrap()));
    c.bench_function("vj_chain_j6", |b| b.iter(|| vj_chain(6, black_box(1.5), 20.0, 0.9).unwrap()));
    c.bench_function("shell_heat_value", |b| b.iter(|| shell_heat_value(black_box(1.0), 0.05, &shell).unwrap()));
}

fn lens(c: &mut Criterion) {
    let geom = TouchingBallGeom::new(Point::ORIGIN, Point::new(0.0, 0.0, 0.6), 0.3, 0.15).unwrap();
    let a = Point::new(1.0, 0.0, 0.0);
    c.bench_function("lens_integral", |b| b.iter(|| touching_ball_integral_scaled(black_box(200.0), &geom, a).unwrap()));
}

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("indicator_sweep");
    g.sample_size(10);
    for cells in [1000, 4000] {
        let cfg = concentric_probe(cells);
        let taus = default_taus(&cfg, 12).unwrap();
        g.bench_with_input(BenchmarkId::new("radial", cells), &taus, |b, t| b.iter(|| tau_sweep(&cfg, t).unwrap()));
    }
    for n in [16, 24] {
        let cfg = box_probe(n);
        let taus = [4.0, 16.0];
        g.bench_with_input(BenchmarkId::new("grid", n), &taus, |b, t| b.iter(|| tau_sweep(&cfg, t).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, closed_forms, lens, sweeps);
criterion_main!(benches);
