mod common;

use common::*;
use proptest::prelude::*;
use stabhmm::synth::oracle::{
    brute_force_counts, brute_force_evidence, brute_force_map, brute_force_marginals, path_log_prob,
};
use stabhmm::{
    accumulate_counts, forward_backward, posterior_marginals, viterbi_decode, ExpectedCounts,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn evidence_marginals_and_counts_match_enumeration((params, video) in instance()) {
        let fb = forward_backward(&video, &params).unwrap();
        let oracle = brute_force_evidence(&video, &params).unwrap();
        assert_rel_close(fb.log_likelihood, oracle.log_evidence, 1e-9, "log evidence");

        let m = posterior_marginals(&fb, &params);
        let om = brute_force_marginals(&video, &params).unwrap();
        for t in 0..video.len() {
            for (a, b) in m.phase_post[t].iter().zip(&om.phase_post[t]) {
                assert_rel_close(*a, *b, 1e-9, "phase marginal");
            }
            for (a, b) in m.tool_post[t].iter().zip(&om.tool_post[t]) {
                assert_rel_close(*a, *b, 1e-9, "tool marginal");
            }
        }

        let mut acc = ExpectedCounts::for_params(&params);
        accumulate_counts(&video, &fb, &params, &mut acc);
        assert_counts_close(&acc, &brute_force_counts(&video, &params).unwrap(), 1e-9);
    }

    #[test]
    fn viterbi_attains_enumerated_maximum((params, video) in instance()) {
        let d = viterbi_decode(&video, &params).unwrap();
        let (_, _, best) = brute_force_map(&video, &params).unwrap();
        assert_rel_close(d.joint_log_prob, best, 1e-9, "MAP log probability");
        let own = path_log_prob(&video, &params, d.phases.as_deref(), d.tools.as_deref()).unwrap();
        assert_rel_close(own, best, 1e-9, "decoded path probability");
    }

    #[test]
    fn single_precision_tracks_enumeration((params, video) in instance()) {
        let p32 = params.cast::<f32>();
        let v32 = stabhmm::VideoProfile32::new(video.video_id.clone(), video.frames().iter().map(|f| {
            stabhmm::FrameRecord {
                frame_index: f.frame_index,
                pred_phase: f.pred_phase,
                pred_tools: f.pred_tools.clone(),
                true_phase: f.true_phase,
                true_tools: f.true_tools.clone(),
                soft_phase: None,
                soft_tools: None,
            }
        }).collect()).unwrap();
        let fb = forward_backward(&v32, &p32).unwrap();
        let oracle = brute_force_evidence(&v32, &p32).unwrap();
        prop_assert!((f64::from(fb.log_likelihood) - oracle.log_evidence).abs() < 1e-3 * oracle.log_evidence.abs().max(1.0));
    }
}
