use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use svcforge::audio::resample;
use svcforge::features::{build_mel_filterbank, log_mel, stft};
use svcforge::perturb::{random_perturb_pair, PerturbConfig};
use svcforge::pitch::{estimate_f0, F0Config};
use svcforge::{synth, AudioClip, FrameConfig};

fn dsp(c: &mut Criterion) {
    let cfg = FrameConfig::default();
    let clip = synth::vowel(180.0, &[(700.0, 90.0), (1200.0, 110.0), (2600.0, 160.0)], 0.4, 24_000, 2.0);
    let fb = build_mel_filterbank(&cfg, 80, 0.0, 12_000.0).unwrap();
    let spec = stft(&clip, &cfg).unwrap();

    c.bench_function("stft_2s", |b| b.iter(|| stft(black_box(&clip), &cfg).unwrap()));
    c.bench_function("log_mel_2s", |b| b.iter(|| log_mel(black_box(&spec), &fb).unwrap()));
    c.bench_function("estimate_f0_2s", |b| {
        b.iter(|| estimate_f0(black_box(&clip), &cfg, &F0Config::default()).unwrap())
    });
    let cd = AudioClip::new(synth::sine(440.0, 0.5, 44_100, 2.0).samples().to_vec(), 44_100).unwrap();
    c.bench_function("resample_44k1_to_24k_2s", |b| b.iter(|| resample(black_box(&cd), 24_000).unwrap()));
    let short = synth::vowel(180.0, &[(700.0, 90.0)], 0.4, 24_000, 0.5);
    c.bench_function("perturb_pair_0.5s", |b| {
        b.iter(|| random_perturb_pair(black_box(&short), &PerturbConfig::default()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = dsp
}
criterion_main!(benches);
