//! Spread of the parameter-recovery error across seeds; run with
//! `cargo test --release -p stabhmm --test recovery_calibration -- --ignored --nocapture`.

use stabhmm::synth::{
    sample_profile, synthetic_theta, FrameCount, GeneratorSpec, LabelPolicy, SyntheticTheta,
};
use stabhmm::{em_fit, empirical_shortcut_fit, EmConfig, LabelSpace, ModelKind};

#[test]
#[ignore]
fn recovery_error_over_twenty_seeds() {
    let space = LabelSpace::numbered(4, 3).unwrap();
    let knobs = SyntheticTheta {
        phase_stay: 0.95,
        tool_stay: 0.95,
        forward_only: false,
        ..Default::default()
    };
    let truth = synthetic_theta::<f64>(&space, ModelKind::Coupled, &knobs).unwrap();
    let mut errors = Vec::new();
    for seed in 0..20u64 {
        let spec = GeneratorSpec {
            params: truth.clone(),
            num_videos: 50,
            frames_per_video: FrameCount::Fixed(500),
            label_policy: LabelPolicy::LabelledVideos { count: 10 },
            seed: 100 + seed,
        };
        let videos = sample_profile(&spec).unwrap().videos;
        let init = empirical_shortcut_fit::<f64>(&videos[..10], &space, ModelKind::Coupled)
            .unwrap()
            .params;
        let (fit, _) = em_fit(&videos, &init, &EmConfig::default()).unwrap();
        let worst = fit
            .named_rows()
            .iter()
            .zip(truth.named_rows())
            .filter(|((name, _), _)| name.contains("trans") || name.contains("confusion"))
            .flat_map(|((_, a), (_, b))| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        println!("seed {seed}: max |error| {worst:.4}");
        errors.push(worst);
    }
    let max = errors.iter().copied().fold(0.0, f64::max);
    println!("max over seeds {max:.4}");
    assert!(max <= 0.03);
}
