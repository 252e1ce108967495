use std::fs;
use std::path::PathBuf;

use promise_scale::analysis::{estimate_markov_order, linearity_of, Keeping, MarkovOptions};
use promise_scale::{load_model, parse_scenario, ModelDocument};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn bundled(suffix: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(models_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    out.sort();
    out
}

#[test]
fn every_bundled_model_round_trips() {
    let models: Vec<_> = bundled(".yaml").into_iter().filter(|p| !p.to_string_lossy().ends_with(".scenario.yaml")).collect();
    assert!(models.len() >= 10);
    for path in models {
        let text = fs::read_to_string(&path).unwrap();
        let model = load_model(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let doc = ModelDocument::parse(&text).unwrap();
        let again = ModelDocument::parse(&doc.to_yaml()).unwrap();
        assert_eq!(doc, again, "{}", path.display());
        let reloaded = load_model(&doc.to_yaml()).unwrap();
        assert_eq!(model.graph, reloaded.graph, "{}", path.display());
        assert_eq!(model.partitions, reloaded.partitions, "{}", path.display());
    }
}

#[test]
fn every_bundled_scenario_parses() {
    let scenarios = bundled(".scenario.yaml");
    assert!(scenarios.len() >= 10);
    for path in scenarios {
        parse_scenario(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

fn chain(len: usize, seed: u64) -> Vec<String> {
    // Sticky two-state chain: stay with probability 0.8.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = 0u8;
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.2) {
                s ^= 1;
            }
            format!("s{s}")
        })
        .collect()
}

#[test]
fn markov_estimates_converge_with_length() {
    let mut errors = Vec::new();
    for len in [1_000, 10_000, 100_000] {
        let est = estimate_markov_order(&chain(len, 42), &MarkovOptions::new(2)).unwrap();
        assert_eq!(est.order, 1, "length {len}");
        let stay = est.matrix(1).unwrap().probability(&["s0"], "s0").unwrap();
        errors.push((stay - 0.8).abs());
        assert!(est.matrix(1).unwrap().homogeneous, "length {len}");
    }
    assert!(errors[2] < errors[0], "{errors:?}");
    assert!(errors[2] < 0.01, "{errors:?}");
}

#[test]
fn a_counterexample_settles_nonlinearity() {
    let k = |t, d: &str, o: &str| Keeping {
        global_step: t,
        proper_time: t,
        dependency: d.into(),
        output: o.into(),
    };
    let report = linearity_of(&[k(1, "x", "1"), k(2, "y", "2"), k(3, "x", "3")]).unwrap();
    assert!(!report.linear && !report.causally_independent);
    let w = report.witness.unwrap();
    assert_eq!((w.first.output.as_str(), w.second.output.as_str()), ("1", "3"));
}
