mod common;

use bmvseg::eval::fit_toy_model;
use bmvseg::pipeline::{output_latency, Component, FrameSource};
use bmvseg::{
    estimate_stream_motion, run, run_baseline, run_inter, run_inter_with, run_prop, ConvKernel,
    Frame, FusionWeights, Interpolation, MatchParams, MotionField, PipelineConfig, Scheme,
    SegModel, ToyFeatureNet, ToyModel,
};
use common::{inter_oracle, prop_oracle, random_frame, rng, small_scene};

struct Fixture {
    frames: Vec<Frame>,
    motion: Vec<MotionField>,
    model: ToyModel,
}

fn fixture() -> Fixture {
    let scene = small_scene(31);
    let model = fit_toy_model(&small_scene(32).dataset()).unwrap();
    let motion = estimate_stream_motion(&scene.frames, &MatchParams::with_radius(6)).unwrap();
    Fixture {
        frames: scene.frames,
        motion,
        model,
    }
}

#[test]
fn prop_matches_unrolled_oracle() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    for n in 1..=6 {
        let cfg = PipelineConfig::new(Scheme::Prop, n, 3).unwrap();
        let got = run_prop(&fx.frames, &fx.motion, &cfg, model).unwrap();
        let want = prop_oracle(&fx.frames, &fx.motion, n, &ToyFeatureNet, &fx.model);
        assert_eq!(got.segmentations, want, "n={n}");
    }
}

#[test]
fn inter_matches_unrolled_oracle_for_every_fusion() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    let fusions = [
        FusionWeights::average(),
        FusionWeights::max(),
        FusionWeights::conv(ConvKernel::averaging(12)),
    ];
    for n in 1..=6 {
        for fusion in &fusions {
            let cfg = PipelineConfig::new(Scheme::Inter, n, 3)
                .unwrap()
                .with_fusion(fusion.clone());
            let got = run_inter(&fx.frames, &fx.motion, &cfg, model).unwrap();
            let want = inter_oracle(&fx.frames, &fx.motion, n, fusion, &ToyFeatureNet, &fx.model);
            assert_eq!(got.segmentations, want, "n={n} {:?}", fusion.kind());
        }
    }
}

#[test]
fn keyframes_equal_baseline() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    let base = run_baseline(&fx.frames, model).unwrap();
    for n in 1..=12 {
        for scheme in [Scheme::Prop, Scheme::Inter] {
            let cfg = PipelineConfig::new(scheme, n, 3).unwrap();
            let r = run(&fx.frames, &fx.motion, &cfg, model).unwrap();
            for i in (0..fx.frames.len()).step_by(n) {
                assert!(r.keyframe_flags[i]);
                assert_eq!(
                    r.segmentations[i], base.segmentations[i],
                    "{scheme} n={n} frame {i}"
                );
            }
            assert_eq!(
                r.keyframe_flags.iter().filter(|k| **k).count(),
                fx.frames.len().div_ceil(n)
            );
        }
    }
}

#[test]
fn interval_one_collapses_to_baseline() {
    let mut r = rng(33);
    for (w, h, len) in [(32, 32, 5), (40, 24, 3), (16, 16, 1)] {
        let frames: Vec<Frame> = (0..len).map(|i| random_frame(&mut r, w, h, i)).collect();
        let motion = estimate_stream_motion(&frames, &MatchParams::with_radius(3)).unwrap();
        let task = ToyModel::random(4, 12, len as u64).unwrap();
        let model = SegModel::new(&ToyFeatureNet, &task);
        let base = run_baseline(&frames, model).unwrap();
        for scheme in Scheme::ALL {
            let cfg = PipelineConfig::new(scheme, 1, 4).unwrap();
            let got = run(&frames, &motion, &cfg, model).unwrap();
            assert!(got.same_outputs(&base), "{scheme}");
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    for scheme in Scheme::ALL {
        for n in [1, 3, 5] {
            let cfg = PipelineConfig::new(scheme, n, 3).unwrap();
            let one = run(&fx.frames, &fx.motion, &cfg, model).unwrap();
            let many = run(&fx.frames, &fx.motion, &cfg.clone().with_workers(3), model).unwrap();
            assert!(one.same_outputs(&many), "{scheme} n={n}");
            assert_eq!(one.feature_calls(), many.feature_calls());
        }
    }
}

#[test]
fn feature_network_runs_once_per_keyframe() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    for n in 1..=12 {
        for scheme in Scheme::ALL {
            let cfg = PipelineConfig::new(scheme, n, 3).unwrap();
            let r = run(&fx.frames, &fx.motion, &cfg, model).unwrap();
            let expected = if scheme == Scheme::Baseline {
                12
            } else {
                12usize.div_ceil(n)
            };
            assert_eq!(r.feature_calls(), expected, "{scheme} n={n}");
            for (i, cost) in r.costs.iter().enumerate() {
                assert_eq!(cost.calls(Component::Task), 1, "frame {i}");
                if !r.keyframe_flags[i] {
                    assert!(!cost.has(Component::Feature));
                }
            }
        }
    }
}

#[test]
fn tail_without_next_keyframe_propagates_forward() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    let cfg = PipelineConfig::new(Scheme::Inter, 5, 3).unwrap();
    let r = run_inter(&fx.frames, &fx.motion, &cfg, model).unwrap();
    // Keyframes 0, 5, 10; frame 11 has no following keyframe.
    assert_eq!(r.sources[11], FrameSource::Propagated { steps: 1 });
    assert_eq!(
        r.sources[7],
        FrameSource::Interpolated {
            forward_steps: 2,
            backward_steps: 3
        }
    );
    let prop = run_prop(&fx.frames, &fx.motion, &cfg, model).unwrap();
    assert_eq!(r.segmentations[10..], prop.segmentations[10..]);
}

#[test]
fn single_branch_variants() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    let cfg = PipelineConfig::new(Scheme::Inter, 4, 3).unwrap();
    let fwd = run_inter_with(
        &fx.frames,
        &fx.motion,
        &cfg,
        model,
        &Interpolation::ForwardOnly,
    )
    .unwrap();
    let prop = run_prop(&fx.frames, &fx.motion, &cfg, model).unwrap();
    assert_eq!(fwd.segmentations, prop.segmentations);
    let bwd = run_inter_with(
        &fx.frames,
        &fx.motion,
        &cfg,
        model,
        &Interpolation::BackwardOnly,
    )
    .unwrap();
    assert!(bwd.costs.iter().all(|c| !c.has(Component::Fusion)));
}

#[test]
fn missing_or_misshapen_motion_is_an_error() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    let cfg = PipelineConfig::new(Scheme::Inter, 4, 3).unwrap();
    assert!(run_inter(&fx.frames, &fx.motion[..6], &cfg, model).is_err());
    let wrong = vec![MotionField::zeros(2, 2, 16).unwrap(); 12];
    assert!(run_prop(&fx.frames, &wrong, &cfg, model).is_err());
    assert!(run_baseline(&[], model).is_err());
}

#[test]
fn latency_is_one_interval_for_inter_only() {
    for n in 1..=10 {
        assert_eq!(output_latency(Scheme::Baseline, n), 0);
        assert_eq!(output_latency(Scheme::Prop, n), 0);
        assert_eq!(output_latency(Scheme::Inter, n), if n > 1 { n } else { 0 });
    }
}

#[test]
fn fitted_fusion_beats_averaging_on_its_samples() {
    let fx = fixture();
    let model = SegModel::new(&ToyFeatureNet, &fx.model);
    let samples = bmvseg::fusion_samples(&fx.frames, &fx.motion, 4, model).unwrap();
    // Keyframes 0, 4, 8; only [0, 4] and [4, 8] are complete.
    assert_eq!(samples.len(), 6);
    assert_eq!(samples[0].alpha, 0.75);
    let fit = bmvseg::fusion::fit_conv_fusion(&samples, &Default::default()).unwrap();
    let mse = |w: &FusionWeights| {
        let (mut sum, mut count) = (0.0, 0);
        for s in &samples {
            let out = bmvseg::fuse(&s.forward, &s.backward, s.alpha, w).unwrap();
            for (a, b) in out.data().iter().zip(s.target.data()) {
                sum += (a - b) * (a - b);
                count += 1;
            }
        }
        sum / count as f64
    };
    assert!(mse(&fit.weights) <= mse(&FusionWeights::average()));
    assert!((mse(&fit.weights) - fit.residual_mse).abs() < 1e-9);
    assert!(bmvseg::fusion_samples(&fx.frames, &fx.motion, 1, model).is_err());
}
