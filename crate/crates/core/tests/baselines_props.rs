use std::sync::Arc;

use beamloc_core::agent::evaluate;
use beamloc_core::baselines::{
    geometry_intersection_estimate, inverse_variance_weights, sinr_proportional_weights, BaselineKind, BaselinePolicy,
    GeometryBaselineConfig,
};
use beamloc_core::codebook::{build_codebook, CodebookConfig};
use beamloc_core::env::EnvSpec;
use beamloc_core::geometry::generate_scenario;
use beamloc_core::par::Execution;
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn inverse_variance_matches_direct_formula(sig in vec(0.5f64..50.0, 2..16), c in 1e-3f64..1e3) {
        let w = inverse_variance_weights(&sig).unwrap();
        let total: f64 = sig.iter().map(|s| s.powi(-2)).sum();
        for (wi, s) in w.iter().zip(&sig) {
            prop_assert!((wi - s.powi(-2) / total).abs() < 1e-12);
        }
        let scaled: Vec<f64> = sig.iter().map(|s| s * c).collect();
        let ws = inverse_variance_weights(&scaled).unwrap();
        for (a, b) in w.iter().zip(ws.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sinr_proportional_is_a_valid_weight_vector(q in vec(0.0f64..1.0, 1..16)) {
        let w = sinr_proportional_weights(&q);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let total: f64 = q.iter().sum();
        if total > 0.0 {
            for (wi, qi) in w.iter().zip(&q) {
                prop_assert!((wi - qi / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn geometry_estimate_stays_in_scene(seed in 0u64..10_000, qs in vec(0.0f64..1.0, 10)) {
        let spec = EnvSpec::default();
        let s = generate_scenario(&spec.scenario, seed).unwrap();
        let x = geometry_intersection_estimate(&s, &qs, &GeometryBaselineConfig::default());
        prop_assert!(x.iter().all(|v| (0.0..=s.area_side_m).contains(v)));
    }
}

#[test]
fn geometry_stand_in_is_far_coarser_than_wls() {
    let mut spec = EnvSpec::default();
    spec.env.steps_per_episode = 5;
    let cb = Arc::new(build_codebook(10, &CodebookConfig::default()).unwrap());
    let run = |k| evaluate(&BaselinePolicy::new(k), &spec, &cb, 200, 3, Execution::Parallel).unwrap();
    let geo = run(BaselineKind::GeometryIntersection);
    let uni = run(BaselineKind::Uniform);
    assert!(geo.mean_error_m > 3.0 * uni.mean_error_m, "{} vs {}", geo.mean_error_m, uni.mean_error_m);
}
