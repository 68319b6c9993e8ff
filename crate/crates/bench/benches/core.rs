use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qmimo_core::asymptotics::{optimal_beta_numeric, solve_xi_toeplitz, xi_uncorrelated, Scenario};
use qmimo_core::channel::{exp_toeplitz, sample_channel};
use qmimo_core::montecarlo::{simulate_ber, simulate_siqnr, Backend, SystemConfig};
use qmimo_core::precoding::{build_precoder, PrecoderKind, PrecoderSpec};
use qmimo_core::quant::DISTORTION_TABLE;
use qmimo_core::rng::stream;

fn fixed_point(c: &mut Criterion) {
    c.bench_function("xi_uncorrelated", |b| {
        b.iter(|| xi_uncorrelated(black_box(0.31), black_box(0.5)))
    });
    c.bench_function("xi_toeplitz", |b| {
        b.iter(|| solve_xi_toeplitz(black_box(0.31), black_box(0.5), black_box(0.5)))
    });
    let s = Scenario {
        beta: 0.5,
        gamma0: 1.0,
        rho_da: DISTORTION_TABLE[0],
        rho_ad: DISTORTION_TABLE[2],
        nu: 0.3,
        eta: 1.0,
    };
    c.bench_function("optimal_beta_numeric", |b| {
        b.iter(|| optimal_beta_numeric(black_box(&s)))
    });
}

fn precoder(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_precoder");
    for (n, m) in [(64, 32), (256, 64)] {
        let corr = exp_toeplitz(n, 0.5).unwrap();
        let h = sample_channel(&corr, m, &mut stream(1, 0)).unwrap().h;
        let spec = PrecoderSpec::rzf_normalized(0.31, n, 10.0);
        g.bench_with_input(BenchmarkId::new("rzf", format!("{n}x{m}")), &h, |b, h| {
            b.iter(|| build_precoder(h, &spec))
        });
        let zf = PrecoderSpec {
            kind: PrecoderKind::Zf,
            power_budget: 10.0,
        };
        g.bench_with_input(BenchmarkId::new("zf", format!("{n}x{m}")), &h, |b, h| {
            b.iter(|| build_precoder(h, &zf))
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    let config = SystemConfig {
        nu: 0.5,
        trials: 8,
        ..SystemConfig::new(256, 64, 15.0)
    };
    g.bench_function("siqnr_256x64_8_trials", |b| b.iter(|| simulate_siqnr(&config)));
    let ber = SystemConfig {
        trials: 8,
        ..SystemConfig::new(64, 32, 10.0)
    };
    g.bench_function("ber_hard_64x32_8x1000", |b| {
        b.iter(|| simulate_ber(&ber, 1000, Backend::Hard))
    });
    g.finish();
}

criterion_group!(benches, fixed_point, precoder, monte_carlo);
criterion_main!(benches);
