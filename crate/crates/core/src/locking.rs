//! Exploration with locking: the exploration forks on every perturbative
//! event, one branch per value the event can write, giving a CFTP time with
//! ambiguities `(T, H)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Budget, Error, Result};
use crate::event::{Event, SpaceTime};
use crate::exploration::{next_event, read_value};
use crate::field::EventField;
use crate::model::{Model, State};
use crate::readout::Readout;
use crate::theta::{Theta, ThetaState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LockCaps {
    pub max_nodes: usize,
    pub max_depth: usize,
}

impl Default for LockCaps {
    fn default() -> Self {
        LockCaps { max_nodes: 100_000, max_depth: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Next {
    /// Empty frontier.
    Leaf,
    Step(usize),
    /// The next event is perturbative: one child per value in the image of
    /// its rule, in state order.
    Branch { trigger: Event, children: Vec<(State, usize)> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LockNode {
    pub parent: Option<usize>,
    /// Number of events on the path from the root.
    pub depth: usize,
    /// Time floor: the time of `event`, or the origin time at the root.
    pub gamma: f64,
    /// Event added on the edge from the parent; a branch child carries the
    /// unconditional rule writing its label.
    pub event: Option<Event>,
    pub label: Option<State>,
    pub next: Next,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LockTree {
    pub nodes: Vec<LockNode>,
}

impl LockTree {
    pub fn root(&self) -> &LockNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Events from the root down to `node`, latest first.
    pub fn path_events(&self, mut node: usize) -> Vec<Event> {
        let mut out = Vec::with_capacity(self.nodes[node].depth);
        while let Some(e) = self.nodes[node].event {
            out.push(e);
            node = self.nodes[node].parent.unwrap();
        }
        out.reverse();
        out
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].next == Next::Leaf)
    }

    /// Indented text dump, one line per node.
    pub fn dump(&self, model: &Model) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, indent)) = stack.pop() {
            let n = &self.nodes[idx];
            for _ in 0..indent {
                out.push_str("  ");
            }
            if let Some(v) = n.label {
                let _ = write!(out, "[{}] ", model.states().label(v));
            }
            match n.event {
                Some(e) => {
                    let _ = write!(out, "({}, {}, {:?})", e.site.display(model.dim()), e.rule, e.time);
                }
                None => out.push_str("root"),
            }
            let _ = write!(out, " gamma={:?}", n.gamma);
            match &n.next {
                Next::Leaf => out.push_str(" leaf\n"),
                Next::Step(c) => {
                    out.push('\n');
                    stack.push((*c, indent));
                }
                Next::Branch { trigger, children } => {
                    let _ = writeln!(
                        out,
                        " branch on ({}, {}, {:?})",
                        trigger.site.display(model.dim()),
                        trigger.rule,
                        trigger.time
                    );
                    for &(_, c) in children.iter().rev() {
                        stack.push((c, indent + 1));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LockWork {
    pub nodes: usize,
    pub branches: usize,
    pub leaves: usize,
}

/// A CFTP time with ambiguities at `origin`.
#[derive(Clone, Debug, PartialEq)]
pub struct LockOutcome {
    pub origin: SpaceTime,
    /// Least time over all explored events (absolute).
    pub t: f64,
    /// Distinct perturbative events at branching nodes, sorted by time.
    pub h: Vec<Event>,
    /// Largest number of events on a root-to-leaf path.
    pub depth: usize,
    /// Width radius `beta(depth)`.
    pub width: i64,
    pub tree: LockTree,
    pub work: LockWork,
}

impl LockOutcome {
    /// `sum_{(x,i,t) in H} |A_i|`.
    pub fn ambiguity_mass(&self, model: &Model) -> usize {
        self.h.iter().map(|e| model.rule(e.rule).offsets().len()).sum()
    }
}

/// Builds the locked exploration tree from `origin`, depth first with
/// children in state order.
pub fn explore_with_locking(
    model: &Model,
    theta: &Theta,
    field: &mut EventField,
    origin: SpaceTime,
    caps: LockCaps,
) -> Result<LockOutcome> {
    if model.has_perturbation() && !model.positive_rates() {
        return Err(Error::PositiveRatesMissing);
    }
    let mut nodes = vec![LockNode {
        parent: None,
        depth: 0,
        gamma: origin.time,
        event: None,
        label: None,
        next: Next::Leaf,
    }];
    let mut h = Vec::new();
    let mut t_min = origin.time;
    let mut max_depth = 0;
    let mut work = LockWork::default();
    let mut stack: Vec<(usize, ThetaState)> = vec![(0, theta.start())];

    let push_child = |nodes: &mut Vec<LockNode>, parent: usize, ev: Event, label: Option<State>| {
        let depth = nodes[parent].depth + 1;
        nodes.push(LockNode { parent: Some(parent), depth, gamma: ev.time, event: Some(ev), label, next: Next::Leaf });
        nodes.len() - 1
    };

    while let Some((idx, st)) = stack.pop() {
        let gamma = nodes[idx].gamma;
        let Some(ev) = next_event(field, &st, origin.site, gamma)? else {
            work.leaves += 1;
            continue;
        };
        if nodes[idx].depth + 1 > caps.max_depth {
            return Err(Error::budget(Budget::Depth(caps.max_depth)));
        }
        t_min = t_min.min(ev.time);
        max_depth = max_depth.max(nodes[idx].depth + 1);
        let rule = model.rule(ev.rule);
        if rule.is_perturbative() {
            work.branches += 1;
            h.push(ev);
            let mut children = Vec::with_capacity(rule.image().len());
            for &v in rule.image() {
                let iota = model.iota(v).ok_or(Error::PositiveRatesMissing)?;
                let sub = Event { rule: iota, ..ev };
                let c = push_child(&mut nodes, idx, sub, Some(v));
                children.push((v, c));
            }
            for &(_, c) in children.iter().rev() {
                let mut child_st = st.clone();
                let e = nodes[c].event.unwrap();
                theta.step(&mut child_st, &e.relative_to(origin.site))?;
                stack.push((c, child_st));
            }
            nodes[idx].next = Next::Branch { trigger: ev, children };
        } else {
            let c = push_child(&mut nodes, idx, ev, None);
            let mut st = st;
            theta.step(&mut st, &ev.relative_to(origin.site))?;
            nodes[idx].next = Next::Step(c);
            stack.push((c, st));
        }
        if nodes.len() > caps.max_nodes {
            return Err(Error::budget(Budget::Nodes(caps.max_nodes)));
        }
    }

    h.sort_unstable();
    h.dedup();
    work.nodes = nodes.len();
    Ok(LockOutcome {
        origin,
        t: t_min,
        h,
        depth: max_depth,
        width: theta.beta(max_depth),
        tree: LockTree { nodes },
        work,
    })
}

/// Leaf reached by following, at each branch, the child labelled with the
/// supplied value of the triggering event.
pub fn select_leaf(outcome: &LockOutcome, evalues: &BTreeMap<Event, State>) -> Result<usize> {
    let nodes = &outcome.tree.nodes;
    let mut idx = 0;
    loop {
        match &nodes[idx].next {
            Next::Leaf => return Ok(idx),
            Next::Step(c) => idx = *c,
            Next::Branch { trigger, children } => {
                let v = *evalues.get(trigger).ok_or(Error::MissingEValue(trigger.time))?;
                idx = children
                    .iter()
                    .find(|(label, _)| *label == v)
                    .map(|&(_, c)| c)
                    .ok_or_else(|| {
                        Error::CouplingViolation(alloc::format!(
                            "value {v:?} is not in the image of rule {}",
                            trigger.rule
                        ))
                    })?;
            }
        }
    }
}

/// The coupled value at the outcome's origin given the values written by
/// every ambiguous event on the selected path.
pub fn resolve_readout(
    model: &Model,
    theta: &Theta,
    outcome: &LockOutcome,
    evalues: &BTreeMap<Event, State>,
    readout: Readout,
) -> Result<State> {
    let leaf = select_leaf(outcome, evalues)?;
    let events = outcome.tree.path_events(leaf);
    read_value(model, theta, &events, outcome.origin, &BTreeMap::new(), readout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exploration::{run_exploration, DEFAULT_STEP_CAP};
    use crate::model::{independent_sites, noisy_voter, with_perturbation, Rule, RuleKind};
    use crate::rng::derive;
    use crate::site::Site;
    use crate::theta::ThetaMap;

    fn voter_base() -> Model {
        noisy_voter(1, &["+", "-"], &[(Site::line(-1), 0.5), (Site::line(1), 0.5)], &[0.5, 0.5]).unwrap()
    }

    fn xor() -> Rule {
        Rule::from_fn(vec![Site::line(-1), Site::line(1)], 2, 0.3, RuleKind::Perturbative, |w| {
            if w[0] != w[1] { State(0) } else { State(1) }
        })
        .unwrap()
    }

    #[test]
    fn unperturbed_tree_is_the_exploration_path() {
        let m = voter_base();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        for s in 0..100 {
            let mut f = EventField::new(&m, derive(3, s));
            let out = explore_with_locking(&m, &th, &mut f, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            let tr = run_exploration(&th, &mut f, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap();
            assert!(out.h.is_empty());
            assert_eq!(out.t, tr.t_u().unwrap());
            let leaf = out.tree.leaves().collect::<Vec<_>>();
            assert_eq!(leaf.len(), 1);
            assert_eq!(out.tree.path_events(leaf[0]), tr.events());
            assert_eq!(out.width, tr.len() as i64);
        }
    }

    #[test]
    fn constant_perturbation_has_single_child_branches() {
        let base = independent_sites(1, &[1.0, 1.0]).unwrap();
        let pert = Rule::constant(State(0), 1.0, RuleKind::Perturbative, 2).unwrap();
        let m = with_perturbation(&base, vec![pert]).unwrap();
        let th = ThetaMap::FiniteFactor { radius: 0 }.bind(&m).unwrap();
        let mut seen = false;
        for s in 0..50 {
            let mut f = EventField::new(&m, s);
            let out = explore_with_locking(&m, &th, &mut f, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            for n in &out.tree.nodes {
                if let Next::Branch { children, .. } = &n.next {
                    assert_eq!(children.len(), 1);
                    seen = true;
                }
            }
            assert_eq!(out.h.len(), out.work.branches);
        }
        assert!(seen);
    }

    #[test]
    fn one_binary_branch() {
        let m = with_perturbation(&voter_base(), vec![xor()]).unwrap();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let mut found = 0;
        for s in 0..400 {
            let mut f = EventField::new(&m, derive(4, s));
            let out = explore_with_locking(&m, &th, &mut f, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            if out.h.len() != 1 || out.work.branches != 1 {
                continue;
            }
            found += 1;
            let alpha = out.h[0];
            // The two leaves read the two substituted values' outcomes.
            for v in [State(0), State(1)] {
                let mut ev = BTreeMap::new();
                ev.insert(alpha, v);
                let got = resolve_readout(&m, &th, &out, &ev, Readout::default()).unwrap();
                let leaf = select_leaf(&out, &ev).unwrap();
                let direct = crate::exploration::read_value(
                    &m, &th, &out.tree.path_events(leaf), SpaceTime::ORIGIN, &BTreeMap::new(), Readout::Exact,
                )
                .unwrap();
                assert_eq!(got, direct);
                // Physically replacing the event reproduces the same value.
                let mut f2 = EventField::new(&m, derive(4, s));
                f2.override_rule(alpha, m.iota(v).unwrap());
                let tr = run_exploration(&th, &mut f2, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap();
                assert_eq!(crate::exploration::readout_voter(&th, &tr).unwrap(), got);
            }
            assert!(matches!(
                resolve_readout(&m, &th, &out, &BTreeMap::new(), Readout::default()),
                Err(Error::MissingEValue(_))
            ));
        }
        assert!(found > 5, "found {found}");
    }

    #[test]
    fn caps_are_enforced() {
        let m = with_perturbation(&voter_base(), vec![xor()]).unwrap();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let caps = LockCaps { max_nodes: 2, max_depth: 10_000 };
        let mut hit = false;
        for s in 0..50 {
            let mut f = EventField::new(&m, s);
            if let Err(e) = explore_with_locking(&m, &th, &mut f, SpaceTime::ORIGIN, caps) {
                assert!(e.is_budget());
                hit = true;
            }
        }
        assert!(hit);
    }

    #[test]
    fn dump_mentions_branches() {
        let m = with_perturbation(&voter_base(), vec![xor()]).unwrap();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        for s in 0..200 {
            let mut f = EventField::new(&m, derive(5, s));
            let out = explore_with_locking(&m, &th, &mut f, SpaceTime::ORIGIN, LockCaps::default()).unwrap();
            let text = out.tree.dump(&m);
            assert_eq!(text.lines().count(), out.tree.len());
            if !out.h.is_empty() {
                assert!(text.contains("branch on"));
                return;
            }
        }
        panic!("no branching tree found");
    }
}
