//! Ambiguity closure and resolution.
//!
//! Starting from the sampled point, every ambiguous event `(z, i, s)` of a
//! locked exploration spawns the points `(z + y, s)`, `y` in the rule's
//! neighborhood, whose own values decide what the event wrote. The closure
//! is then resolved from the past towards the present.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Budget, Error, Result};
use crate::event::{Event, SpaceTime};
use crate::field::EventField;
use crate::locking::{explore_with_locking, resolve_readout, LockCaps, LockOutcome};
use crate::model::{Model, State};
use crate::readout::Readout;
use crate::rng::derive;
use crate::site::Site;
use crate::theta::Theta;

/// Work limits for one sample. Hitting any of them fails the sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub nodes: usize,
    pub depth: usize,
    pub points: usize,
    pub layers: usize,
}

impl Default for Caps {
    fn default() -> Self {
        let lock = LockCaps::default();
        Caps { nodes: lock.max_nodes, depth: lock.max_depth, points: 10_000, layers: 1_000 }
    }
}

impl Caps {
    pub fn lock(&self) -> LockCaps {
        LockCaps { max_nodes: self.nodes, max_depth: self.depth }
    }

    /// Every cap multiplied by `factor`.
    pub fn scaled(&self, factor: usize) -> Caps {
        Caps {
            nodes: self.nodes.saturating_mul(factor),
            depth: self.depth.saturating_mul(factor),
            points: self.points.saturating_mul(factor),
            layers: self.layers.saturating_mul(factor),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmbPoint {
    pub at: SpaceTime,
    pub layer: usize,
    pub outcome: LockOutcome,
    /// For each element of the outcome's `H`, the closure indices of its
    /// neighborhood points, in offset order.
    pub children: Vec<Vec<usize>>,
    pub resolved: Option<State>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmbClosure {
    pub root: Site,
    pub points: Vec<AmbPoint>,
    /// Point indices per breadth-first layer; layer 0 is the root.
    pub layers: Vec<Vec<usize>>,
    pub t_star: f64,
    /// Width bounds relative to the root site.
    pub l_plus: i64,
    pub l_minus: i64,
    pub l_star: i64,
    /// Point indices by increasing time (ties by site).
    pub schedule: Vec<usize>,
}

impl AmbClosure {
    pub fn tree_nodes(&self) -> usize {
        self.points.iter().map(|p| p.outcome.work.nodes).sum()
    }

    pub fn find(&self, at: SpaceTime) -> Option<usize> {
        self.points.iter().position(|p| p.at.site == at.site && p.at.time.to_bits() == at.time.to_bits())
    }
}

/// Breadth-first closure from `(root, 0)`, reusing one realization for
/// every shifted origin.
pub fn build_amb_closure(
    model: &Model,
    theta: &Theta,
    field: &mut EventField,
    root: Site,
    caps: Caps,
) -> Result<AmbClosure> {
    let mut index: BTreeMap<(Site, u64), usize> = BTreeMap::new();
    let mut pending: Vec<SpaceTime> = vec![SpaceTime::new(root, 0.0)];
    index.insert((root, 0.0f64.to_bits()), 0);
    let mut points: Vec<AmbPoint> = Vec::new();
    let mut layers: Vec<Vec<usize>> = Vec::new();
    let mut frontier = vec![0usize];

    while !frontier.is_empty() {
        if layers.len() == caps.layers {
            return Err(Error::budget(Budget::Layers(caps.layers)));
        }
        let layer = layers.len();
        let mut next = Vec::new();
        for &p in &frontier {
            let at = pending[p];
            let outcome = explore_with_locking(model, theta, field, at, caps.lock())?;
            let mut children = Vec::with_capacity(outcome.h.len());
            for alpha in &outcome.h {
                if alpha.time >= at.time {
                    return Err(Error::ScheduleIncomplete(alpha.time));
                }
                let mut kids = Vec::new();
                for &y in model.rule(alpha.rule).offsets() {
                    let child = SpaceTime::new(alpha.site + y, alpha.time);
                    let key = (child.site, child.time.to_bits());
                    let idx = match index.get(&key) {
                        Some(&i) => i,
                        None => {
                            let i = pending.len();
                            if i >= caps.points {
                                return Err(Error::budget(Budget::Points(caps.points)));
                            }
                            pending.push(child);
                            index.insert(key, i);
                            next.push(i);
                            i
                        }
                    };
                    kids.push(idx);
                }
                children.push(kids);
            }
            debug_assert_eq!(points.len(), p);
            points.push(AmbPoint { at, layer, outcome, children, resolved: None });
        }
        layers.push(frontier);
        frontier = next;
    }

    let t_star = points.iter().map(|p| p.outcome.t).fold(0.0, f64::min);
    let (mut l_plus, mut l_minus) = (i64::MIN, i64::MAX);
    for p in &points {
        let rel = p.at.site - root;
        for q in 0..model.dim() {
            let x = i64::from(rel.coord(q));
            l_plus = l_plus.max(x + p.outcome.width);
            l_minus = l_minus.min(x - p.outcome.width);
        }
    }
    let mut schedule: Vec<usize> = (0..points.len()).collect();
    schedule.sort_by(|&a, &b| {
        points[a]
            .at
            .time
            .total_cmp(&points[b].at.time)
            .then_with(|| points[a].at.site.cmp(&points[b].at.site))
    });
    Ok(AmbClosure {
        root,
        points,
        layers,
        t_star,
        l_plus,
        l_minus,
        l_star: l_plus.max(-l_minus),
        schedule,
    })
}

/// The values written by the ambiguous events of point `p`, from the
/// resolved values of their neighborhood points.
fn evalues_of(model: &Model, closure: &AmbClosure, p: usize) -> Result<BTreeMap<Event, State>> {
    let point = &closure.points[p];
    let mut out = BTreeMap::new();
    for (alpha, kids) in point.outcome.h.iter().zip(&point.children) {
        let rule = model.rule(alpha.rule);
        let mut missing = None;
        let v = rule.eval_with(|k| match closure.points[kids[k]].resolved {
            Some(v) => v,
            None => {
                missing = Some(closure.points[kids[k]].at.time);
                State(0)
            }
        });
        if let Some(t) = missing {
            return Err(Error::ScheduleIncomplete(t));
        }
        out.insert(*alpha, v);
    }
    Ok(out)
}

/// Resolves every point in schedule order and returns the root value.
pub fn resolve_all(
    model: &Model,
    theta: &Theta,
    closure: &mut AmbClosure,
    readout: Readout,
) -> Result<State> {
    for i in 0..closure.schedule.len() {
        let p = closure.schedule[i];
        let evalues = evalues_of(model, closure, p)?;
        let v = resolve_readout(model, theta, &closure.points[p].outcome, &evalues, readout)?;
        closure.points[p].resolved = Some(v);
    }
    closure.points[0].resolved.ok_or(Error::ScheduleIncomplete(0.0))
}

/// Closure plus resolution on a given realization.
pub fn run_sample(
    model: &Model,
    theta: &Theta,
    field: &mut EventField,
    root: Site,
    caps: Caps,
    readout: Readout,
) -> Result<(AmbClosure, State)> {
    let mut closure = build_amb_closure(model, theta, field, root, caps)?;
    let v = resolve_all(model, theta, &mut closure, readout)?;
    Ok((closure, v))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SampleFailure {
    Budget(Budget),
    Internal(String),
}

impl core::fmt::Display for SampleFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SampleFailure::Budget(b) => write!(f, "budget: {b}"),
            SampleFailure::Internal(m) => write!(f, "internal: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub seed: u64,
    pub site: Site,
    pub value: Option<State>,
    pub t_star: f64,
    pub l_star: i64,
    pub points: usize,
    pub tree_nodes: usize,
    pub failure: Option<SampleFailure>,
}

impl SampleResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// One exact draw of the stationary marginal at `site` from the realization
/// seeded by `seed`. Errors become a failure flag.
pub fn sample_site(
    model: &Model,
    theta: &Theta,
    site: Site,
    seed: u64,
    caps: Caps,
    readout: Readout,
) -> SampleResult {
    let mut field = EventField::new(model, seed);
    match run_sample(model, theta, &mut field, site, caps, readout) {
        Ok((closure, v)) => SampleResult {
            seed,
            site,
            value: Some(v),
            t_star: closure.t_star,
            l_star: closure.l_star,
            points: closure.points.len(),
            tree_nodes: closure.tree_nodes(),
            failure: None,
        },
        Err(e) => SampleResult {
            seed,
            site,
            value: None,
            t_star: f64::NEG_INFINITY,
            l_star: -1,
            points: 0,
            tree_nodes: 0,
            failure: Some(match e {
                Error::BudgetExceeded { budget, .. } => SampleFailure::Budget(budget),
                other => SampleFailure::Internal(other.to_string()),
            }),
        },
    }
}

/// Per-site marginal draws; site `j` uses the realization `derive(seed, j)`.
pub fn sample_marginal(
    model: &Model,
    theta: &Theta,
    sites: &[Site],
    seed: u64,
    caps: Caps,
    readout: Readout,
) -> Vec<SampleResult> {
    sites
        .iter()
        .enumerate()
        .map(|(j, &x)| sample_site(model, theta, x, derive(seed, j as u64), caps, readout))
        .collect()
}

/// Human-readable one-line summary of a closure.
pub fn describe(closure: &AmbClosure) -> String {
    format!(
        "points={} layers={} T*={:?} L*={} (+{} / {})",
        closure.points.len(),
        closure.layers.len(),
        closure.t_star,
        closure.l_star,
        closure.l_plus,
        closure.l_minus
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exploration::{read_value, run_exploration, DEFAULT_STEP_CAP};
    use crate::model::{independent_sites, noisy_voter, with_perturbation, Rule, RuleKind};
    use crate::theta::ThetaMap;

    fn voter_base() -> Model {
        noisy_voter(1, &["+", "-"], &[(Site::line(-1), 0.5), (Site::line(1), 0.5)], &[0.5, 0.5]).unwrap()
    }

    fn perturbed() -> Model {
        let xor = Rule::from_fn(vec![Site::line(-1), Site::line(1)], 2, 0.2, RuleKind::Perturbative, |w| {
            if w[0] != w[1] { State(0) } else { State(1) }
        })
        .unwrap();
        with_perturbation(&voter_base(), vec![xor]).unwrap()
    }

    #[test]
    fn unperturbed_closure_is_the_root() {
        let m = voter_base();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        for s in 0..100 {
            let mut f = EventField::new(&m, derive(8, s));
            let (c, v) = run_sample(&m, &th, &mut f, Site::ORIGIN, Caps::default(), Readout::default()).unwrap();
            let tr = run_exploration(&th, &mut f, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap();
            assert_eq!(c.points.len(), 1);
            assert_eq!(c.layers.len(), 1);
            assert_eq!(c.t_star, tr.t_u().unwrap());
            let u = read_value(&m, &th, &tr.events(), SpaceTime::ORIGIN, &BTreeMap::new(), Readout::default())
                .unwrap();
            assert_eq!(v, u);
        }
    }

    #[test]
    fn root_ambiguity_spawns_neighborhood_points() {
        let m = perturbed();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let mut checked = 0;
        for s in 0..500 {
            let mut f = EventField::new(&m, derive(9, s));
            let c = build_amb_closure(&m, &th, &mut f, Site::ORIGIN, Caps::default()).unwrap();
            let root = &c.points[0];
            if root.outcome.h.len() == 1 {
                let alpha = root.outcome.h[0];
                assert_eq!(c.layers[1].len(), 2);
                for &k in &c.layers[1] {
                    assert_eq!(c.points[k].at.time, alpha.time);
                }
                checked += 1;
            }
            for p in &c.points {
                assert!(c.t_star <= p.outcome.t);
                for (alpha, kids) in p.outcome.h.iter().zip(&p.children) {
                    assert!(alpha.time < p.at.time);
                    assert_eq!(kids.len(), 2);
                }
            }
            let times: Vec<f64> = c.schedule.iter().map(|&i| c.points[i].at.time).collect();
            assert!(times.windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(checked > 10);
    }

    #[test]
    fn shared_children_are_stored_once() {
        // Overlapping explorations meet the same ambiguous event and so
        // request the same child points.
        let m = perturbed();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        for s in 0..300 {
            let mut f = EventField::new(&m, derive(10, s));
            let c = build_amb_closure(&m, &th, &mut f, Site::ORIGIN, Caps::default()).unwrap();
            let mut keys: Vec<(Site, u64)> = c.points.iter().map(|p| (p.at.site, p.at.time.to_bits())).collect();
            keys.sort_unstable();
            let n = keys.len();
            keys.dedup();
            assert_eq!(keys.len(), n);
        }
    }

    #[test]
    fn independent_sites_marginal() {
        let m = independent_sites(1, &[2.0, 1.0]).unwrap();
        let th = ThetaMap::FiniteFactor { radius: 0 }.bind(&m).unwrap();
        let out = sample_marginal(&m, &th, &[Site::ORIGIN, Site::line(5)], 3, Caps::default(), Readout::default());
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|r| !r.failed()));
        assert!(sample_marginal(&m, &th, &[], 3, Caps::default(), Readout::default()).is_empty());
        let single = sample_marginal(&m, &th, &[Site::ORIGIN], 3, Caps::default(), Readout::default());
        assert_eq!(single[0], sample_site(&m, &th, Site::ORIGIN, derive(3, 0), Caps::default(), Readout::default()));
    }

    #[test]
    fn tiny_caps_fail_with_flag() {
        let m = perturbed();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let caps = Caps { nodes: 1, depth: 1, points: 1, layers: 1 };
        let failures = (0..50)
            .map(|s| sample_site(&m, &th, Site::ORIGIN, s, caps, Readout::default()))
            .filter(|r| matches!(r.failure, Some(SampleFailure::Budget(_))))
            .count();
        assert!(failures > 0);
    }
}
