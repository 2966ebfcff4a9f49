//! Cross-checks between exact and consensus readouts, and translation
//! invariance of the sampler.

use std::collections::BTreeMap;

use cftp_core::exploration::{read_value, readout_polling, readout_voter, run_exploration, DEFAULT_STEP_CAP};
use cftp_core::model::presets;
use cftp_core::rng::derive;
use cftp_core::*;

#[test]
fn exact_readouts_agree_with_consensus() {
    for p in [presets::noisy_voter_1d().unwrap(), presets::polling().unwrap(), presets::voter_tail().unwrap()] {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..1000 {
            let mut field = EventField::new(&p.model, derive(0xE0, k));
            let tr = run_exploration(&th, &mut field, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap();
            let exact = match p.theta {
                ThetaMap::Voter => readout_voter(&th, &tr).unwrap(),
                _ => readout_polling(&th, &tr).unwrap(),
            };
            let cons = read_value(&p.model, &th, &tr.events(), SpaceTime::ORIGIN, &BTreeMap::new(), Readout::default())
                .unwrap();
            assert_eq!(exact, cons, "{} replicate {k}", p.name);
        }
    }
}

#[test]
fn exact_and_consensus_samples_agree() {
    for p in [presets::noisy_voter_perturbed().unwrap(), presets::polling_perturbed().unwrap()] {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..500 {
            let a = sample_site(&p.model, &th, Site::ORIGIN, k, Caps::default(), Readout::default());
            let b = sample_site(&p.model, &th, Site::ORIGIN, k, Caps::default(), Readout::Exact);
            assert_eq!(a.value, b.value);
        }
    }
}

#[test]
fn readout_of_wrong_family_is_rejected() {
    let p = presets::noisy_voter_1d().unwrap();
    let th = p.theta.bind(&p.model).unwrap();
    let mut field = EventField::new(&p.model, 1);
    let tr = run_exploration(&th, &mut field, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap();
    assert!(matches!(readout_polling(&th, &tr), Err(Error::ModelShapeMismatch(_))));
}

#[test]
fn marginal_is_translation_invariant() {
    let p = presets::polling_perturbed().unwrap();
    let th = p.theta.bind(&p.model).unwrap();
    let n = 10_000;
    let count = |site: Site, base: u64| {
        (0..n)
            .filter(|&k| {
                let r = sample_site(&p.model, &th, site, derive(base, k), Caps::default(), Readout::default());
                r.value.unwrap() == State(0)
            })
            .count() as f64
            / n as f64
    };
    let a = count(Site::ORIGIN, 1);
    let b = count(Site::line(5), 2);
    let sigma = (a * (1.0 - a) * 2.0 / n as f64).sqrt();
    assert!((a - b).abs() < 3.0 * sigma, "{a} vs {b}");
}

#[test]
fn larger_caps_fail_less() {
    let p = presets::noisy_voter_perturbed().unwrap();
    let th = p.theta.bind(&p.model).unwrap();
    let small = Caps { nodes: 6, depth: 6, points: 3, layers: 3 };
    let fails = |caps: Caps| {
        (0..2000)
            .filter(|&k| sample_site(&p.model, &th, Site::ORIGIN, derive(0xE1, k), caps, Readout::default()).failed())
            .count()
    };
    let f1 = fails(small);
    let f2 = fails(small.scaled(2));
    let f4 = fails(small.scaled(4));
    assert!(f1 > f2 && f2 > f4, "{f1} {f2} {f4}");
}
