//! Without perturbative rules the sampler collapses to one unperturbed
//! exploration.

use std::collections::BTreeMap;

use cftp_core::assembler::run_sample;
use cftp_core::exploration::{read_value, run_exploration, DEFAULT_STEP_CAP};
use cftp_core::locking::{explore_with_locking, LockCaps};
use cftp_core::model::presets;
use cftp_core::rng::derive;
use cftp_core::*;

#[test]
fn unperturbed_presets_degenerate_exactly() {
    for p in [presets::independent(), presets::rn_ypr_default(), presets::noisy_voter_1d(), presets::polling()] {
        let p = p.unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..1000 {
            let seed = derive(0xD0, k);
            let mut field = EventField::new(&p.model, seed);
            let (c, v) =
                run_sample(&p.model, &th, &mut field, Site::ORIGIN, Caps::default(), Readout::default()).unwrap();
            let tr = run_exploration(&th, &mut field, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap();
            assert_eq!(c.points.len(), 1);
            assert!(c.points[0].outcome.h.is_empty());
            assert_eq!(c.t_star.to_bits(), tr.t_u().unwrap().to_bits());
            let u = read_value(&p.model, &th, &tr.events(), SpaceTime::ORIGIN, &BTreeMap::new(), Readout::default())
                .unwrap();
            assert_eq!(v, u);
            let out =
                explore_with_locking(&p.model, &th, &mut field, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            assert_eq!(out.tree.len(), tr.len() + 1);
        }
    }
}

#[test]
fn fixed_seed_is_reproducible() {
    for p in presets::all().unwrap() {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..20 {
            let a = sample_site(&p.model, &th, Site::ORIGIN, k, Caps::default(), Readout::default());
            let b = sample_site(&p.model, &th, Site::ORIGIN, k, Caps::default(), Readout::default());
            assert_eq!(a, b);
        }
    }
}
