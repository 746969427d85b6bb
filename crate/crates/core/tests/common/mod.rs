#![allow(dead_code)]

use proptest::prelude::*;
use stabhmm::synth::random_instance;
use stabhmm::{ExpectedCounts, LabelSpace, ModelKind, ModelParams64, VideoProfile64};

/// Small random problem: (params, video).
pub fn instance() -> impl Strategy<Value = (ModelParams64, VideoProfile64)> {
    (
        1usize..=6,
        1usize..=3,
        0usize..=2,
        0usize..3,
        prop::sample::select(vec![0.0, 0.3, 1.0]),
        any::<u64>(),
    )
        .prop_map(|(n, l, k, kind, density, seed)| {
            let kind = match (k, kind) {
                (0, _) | (_, 2) => ModelKind::PhaseOnly,
                (_, 1) => ModelKind::ToolOnly,
                _ => ModelKind::Coupled,
            };
            let space = LabelSpace::numbered(l, k).unwrap();
            random_instance(&space, kind, n, density, seed).unwrap()
        })
}

/// `|a - b| <= tol * max(|a|, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

pub fn assert_rel_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(rel_close(a, b, tol), "{what}: {a} vs {b}");
}

pub fn assert_counts_close(lib: &ExpectedCounts<f64>, oracle: &ExpectedCounts<f64>, tol: f64) {
    let (a, b) = (lib.cells(), oracle.cells());
    assert_eq!(a.len(), b.len());
    for (i, (&x, &y)) in a.iter().zip(&b).enumerate() {
        assert_rel_close(x, y, tol, &format!("count cell {i}"));
    }
}
