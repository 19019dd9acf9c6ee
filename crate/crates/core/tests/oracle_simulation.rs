//! The closed-form oracle against direct simulation on S1 sources.

use plasmode_core::datamodel::{EstimatorId, Framework};
use plasmode_core::harness::{run_on_source, source_seed, StudyConfig};
use plasmode_core::oracle::oracle_for_source;
use plasmode_core::{builtin, generate_source};

#[test]
fn horvitz_thompson_mean_tracks_the_oracle() {
    let spec = builtin("S1").unwrap();
    let source = generate_source(&spec, 500, 7).unwrap();
    let report = oracle_for_source(&source, &spec.treatment.design(), &spec.outcome).unwrap();
    assert!(report.treated.identity_residual.abs() < 1e-12);

    let mut cfg = StudyConfig::new(500, 2000, 7);
    cfg.estimators = vec![EstimatorId::IptwHt];
    let run = run_on_source(&spec, &source, &cfg).unwrap();
    for &fw in Framework::ALL {
        let v: Vec<f64> = run.records.iter().filter(|r| r.framework == fw).map(|r| r.ey1).collect();
        let r = v.len() as f64;
        let mean = v.iter().sum::<f64>() / r;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
        let expected = match fw {
            Framework::SampleTreatment => report.treated.predicted_mean(),
            Framework::GenerateTreatment => report.treated.psi_n,
        };
        assert!(
            (mean - expected).abs() <= 4.0 * sd / r.sqrt(),
            "{fw}: mean {mean}, expected {expected}, mc sd {}",
            sd / r.sqrt()
        );
    }
}

/// Sample sd of `sqrt(n) b_n` (treated arm) over `k` independent S1 sources.
fn scaled_bias_sd(n: usize, k: usize) -> f64 {
    let spec = builtin("S1").unwrap();
    let v: Vec<f64> = (0..k)
        .map(|i| {
            let source = generate_source(&spec, n, source_seed(99, i)).unwrap();
            oracle_for_source(&source, &spec.treatment.design(), &spec.outcome)
                .unwrap()
                .treated
                .scaled
        })
        .collect();
    let mean = v.iter().sum::<f64>() / k as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0)).sqrt()
}

#[test]
fn scaled_bias_does_not_shrink_with_n() {
    let small = scaled_bias_sd(1000, 200);
    let large = scaled_bias_sd(4000, 200);
    assert!(small > 0.0);
    assert!((large / small - 1.0).abs() <= 0.25, "sd at n=1000 {small}, at n=4000 {large}");
}
