//! Rayon vs sequential comparison for the data-parallel inner loops, plus the
//! sequential per-event hot path.
//!
//! Requires the default `parallel` feature: the `*_seq` entry points are the
//! sequential fallback the feature flag would select, so one run compares
//! both sides.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use evfuse::sim::{frames_to_events, frames_to_events_seq, SimulationConfig};
use evfuse::{metrics, Config, Dataset, Event, FilterState, Frame, GainParams, Mode, Polarity, Session};

fn plaid(t: f64, w: u32, h: u32) -> Frame {
    let mut pixels = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let v = 127.5
                + 90.0 * ((x as f64 / 13.0 + 1.1 * t) * std::f64::consts::TAU).sin()
                + 30.0 * ((y as f64 / 9.0 - 0.6 * t) * std::f64::consts::TAU).cos();
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame::new(t, w, h, pixels).unwrap()
}

fn bench_query(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter_query");
    for &(w, h) in &[(240u32, 180u32), (1280, 720)] {
        let gain = GainParams::new(2.0 * std::f64::consts::PI, 0.1, -4.61, 0.01, 0.05).unwrap();
        let make = || {
            let mut s = FilterState::new(w, h, Mode::Fusion, 0.1, 0.1, gain).unwrap();
            // Spread the state out so the decay pass does real work.
            let img = plaid(0.0, w, h);
            let log = evfuse::to_log(&img, 0.01).unwrap();
            s.process_frame(&log).unwrap();
            s
        };
        group.throughput(Throughput::Elements((w * h) as u64));
        group.bench_with_input(BenchmarkId::new("par", format!("{w}x{h}")), &(), |b, _| {
            let mut s = make();
            let mut t = 0.0;
            b.iter(|| {
                t += 1e-3;
                s.query(t).unwrap()
            });
        });
        group.bench_with_input(BenchmarkId::new("seq", format!("{w}x{h}")), &(), |b, _| {
            let mut s = make();
            let mut t = 0.0;
            b.iter(|| {
                t += 1e-3;
                s.query_seq(t).unwrap()
            });
        });
    }
    group.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("frames_to_events");
    group.sample_size(20);
    let frames: Vec<Frame> = (0..60).map(|i| plaid(i as f64 / 100.0, 120, 90)).collect();
    let cfg = SimulationConfig::default();
    group.bench_function("par", |b| b.iter(|| frames_to_events(&frames, &cfg).unwrap()));
    group.bench_function("seq", |b| {
        b.iter(|| frames_to_events_seq(&frames, &cfg).unwrap())
    });
    group.finish();
}

fn bench_ssim(c: &mut Criterion) {
    let mut group = c.benchmark_group("ssim");
    let a = plaid(0.0, 240, 180);
    let b_img = plaid(0.02, 240, 180);
    group.bench_function("par", |b| b.iter(|| metrics::ssim(&a, &b_img).unwrap()));
    group.bench_function("seq", |b| b.iter(|| metrics::ssim_seq(&a, &b_img).unwrap()));
    group.finish();
}

fn bench_event_throughput(c: &mut Criterion) {
    // The per-event path is sequential by contract; this tracks its cost.
    let n = 500_000usize;
    let (w, h) = (240u32, 180u32);
    let mut state = 0x853c49e6748fea9bu64;
    let mut rng = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        state
    };
    let events: Vec<Event> = (0..n)
        .map(|i| {
            let r = rng();
            Event::new(
                i as f64 * 2e-7,
                (r % w as u64) as u16,
                ((r >> 20) % h as u64) as u16,
                if r & 1 == 0 { Polarity::On } else { Polarity::Off },
            )
        })
        .collect();
    let dataset = Dataset::new(events, Vec::new(), w, h).unwrap();
    let mut cfg = Config::default();
    cfg.mode = Mode::EventsOnly;

    let mut group = c.benchmark_group("event_throughput");
    group.sample_size(20);
    group.throughput(Throughput::Elements(n as u64));
    group.bench_function("events_only", |b| {
        b.iter(|| {
            let mut session = Session::new(&dataset, &cfg).unwrap();
            session.run_to_end().unwrap();
            session.processed().0
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_query,
    bench_simulate,
    bench_ssim,
    bench_event_throughput
);
criterion_main!(benches);
