//! End-to-end coupling properties of the sampler on every preset.

use std::collections::BTreeSet;

use cftp_core::assembler::{build_amb_closure, run_sample};
use cftp_core::field::Resample;
use cftp_core::locking::{explore_with_locking, LockCaps};
use cftp_core::model::presets;
use cftp_core::oracle::global_consensus;
use cftp_core::rng::derive;
use cftp_core::*;

#[test]
fn engine_value_matches_global_replay() {
    for p in presets::all().unwrap() {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..200 {
            let seed = derive(0xC0, k);
            let mut field = EventField::new(&p.model, seed);
            let (c, v) = run_sample(&p.model, &th, &mut field, Site::ORIGIN, Caps::default(), Readout::default())
                .unwrap_or_else(|e| panic!("{} seed {seed}: {e}", p.name));
            let region = SiteBox::centered(Site::ORIGIN, c.l_star as i32, p.model.dim());
            let g = global_consensus(&p.model, &mut field, &region, c.t_star, Site::ORIGIN, 8, seed)
                .unwrap_or_else(|e| panic!("{} seed {seed}: {e}", p.name));
            assert_eq!(v, g, "{} seed {seed}", p.name);
        }
    }
}

#[test]
fn closure_times_are_monotone() {
    for p in presets::perturbed().unwrap() {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..200 {
            let mut field = EventField::new(&p.model, derive(0xC1, k));
            let c = build_amb_closure(&p.model, &th, &mut field, Site::ORIGIN, Caps::default()).unwrap();
            assert_eq!(c.layers[0], vec![0]);
            assert_eq!(c.points[0].at, SpaceTime::ORIGIN);
            for pt in &c.points {
                assert!(c.t_star <= pt.outcome.t);
                assert!(pt.outcome.t <= pt.at.time);
                for (alpha, kids) in pt.outcome.h.iter().zip(&pt.children) {
                    assert!(alpha.time < pt.at.time);
                    for &kid in kids {
                        assert_eq!(c.points[kid].at.time, alpha.time);
                    }
                }
            }
            assert!(c.l_star >= c.l_plus.max(-c.l_minus));
        }
    }
}

#[test]
fn events_outside_the_width_box_do_not_matter() {
    for p in presets::perturbed().unwrap() {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..100 {
            let seed = derive(0xC2, k);
            let mut field = EventField::new(&p.model, seed);
            let (c, v) =
                run_sample(&p.model, &th, &mut field, Site::ORIGIN, Caps::default(), Readout::default()).unwrap();
            let region = SiteBox::centered(Site::ORIGIN, c.l_star as i32, p.model.dim());
            let mut other = EventField::with_resample(&p.model, seed, Resample::OutsideBox { region, seed: !seed });
            let (_, w) =
                run_sample(&p.model, &th, &mut other, Site::ORIGIN, Caps::default(), Readout::default()).unwrap();
            assert_eq!(v, w, "{} seed {seed}", p.name);
        }
    }
}

fn paths_above(out: &locking::LockOutcome, cut: f64) -> BTreeSet<Vec<(Site, usize, u64)>> {
    (0..out.tree.len())
        .filter(|&i| out.tree.nodes[i].gamma >= cut)
        .map(|i| out.tree.path_events(i).iter().map(|e| (e.site, e.rule, e.time.to_bits())).collect())
        .collect()
}

#[test]
fn tree_above_a_cut_ignores_the_realization_below() {
    for p in presets::perturbed().unwrap() {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..100 {
            let seed = derive(0xC3, k);
            let mut field = EventField::new(&p.model, seed);
            let out = explore_with_locking(&p.model, &th, &mut field, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            let node = out.tree.len() / 2;
            let cut = out.tree.nodes[node].gamma;
            let mut other = EventField::with_resample(&p.model, seed, Resample::Below { cut, seed: !seed });
            let out2 = explore_with_locking(&p.model, &th, &mut other, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            assert_eq!(paths_above(&out, cut), paths_above(&out2, cut), "{} seed {seed}", p.name);
            // Every event the construction touched lies in [T, 0).
            for n in &out.tree.nodes {
                assert!(n.gamma >= out.t);
            }
        }
    }
}

#[test]
fn h_consists_of_branching_perturbative_events() {
    for p in presets::perturbed().unwrap() {
        let th = p.theta.bind(&p.model).unwrap();
        for k in 0..200 {
            let mut field = EventField::new(&p.model, derive(0xC4, k));
            let out = explore_with_locking(&p.model, &th, &mut field, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            let triggers: BTreeSet<Event> = out
                .tree
                .nodes
                .iter()
                .filter_map(|n| match &n.next {
                    locking::Next::Branch { trigger, children } => {
                        assert_eq!(children.len(), p.model.rule(trigger.rule).image().len());
                        Some(*trigger)
                    }
                    _ => None,
                })
                .collect();
            assert_eq!(triggers.into_iter().collect::<Vec<_>>(), out.h);
            assert!(out.h.iter().all(|e| p.model.rule(e.rule).is_perturbative()));
        }
    }
}
