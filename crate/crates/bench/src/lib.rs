//! Shared fixtures for the benchmarks.

use plasmode_core::dgm::builtin;
use plasmode_core::plasmode::{GenerationModels, PlasmodeConfig};
use plasmode_core::rng::{Purpose, RngStream};
use plasmode_core::{generate_source, Dataset, Framework, ScenarioSpec};

/// One Sample Treatment replicate of a built-in scenario.
pub fn replicate(scenario: &str, n: usize, seed: u64) -> (ScenarioSpec, Dataset) {
    let spec = builtin(scenario).expect("built-in scenario");
    let source = generate_source(&spec, n, seed).expect("source");
    let fw = Framework::SampleTreatment;
    let gm = GenerationModels::prepare(&spec, &source, &PlasmodeConfig::new(fw)).expect("models");
    let mut rng = RngStream::new(seed, Purpose::Replicate(fw), 0).rng();
    let rep = gm.draw(&source, fw, None, &mut rng).expect("replicate");
    (spec, rep.data)
}
