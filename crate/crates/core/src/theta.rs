//! Frontier maps driving the exploration processes.
//!
//! A frontier map sends the set of explored events to the finite set of
//! sites whose history still matters. The three shipped families are folded
//! incrementally over events in decreasing time order.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::event::Event;
use crate::model::{Model, RuleKind, State};
use crate::site::{Site, SiteBox};

/// Choice of frontier map, as named in model files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaMap {
    /// Full box `{-b..b}^d` until the `(2b+1)^d` most recent events are
    /// unconditional and cover the box.
    FiniteFactor { radius: u32 },
    /// Single site following the copy lineage.
    Voter,
    /// Site set of an OR-polling dynamics.
    Polling,
}

impl fmt::Display for ThetaMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaMap::FiniteFactor { radius } => write!(f, "finite_factor(b={radius})"),
            ThetaMap::Voter => f.write_str("voter"),
            ThetaMap::Polling => f.write_str("polling"),
        }
    }
}

impl FromStr for ThetaMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_str() {
            "voter" => return Ok(ThetaMap::Voter),
            "polling" => return Ok(ThetaMap::Polling),
            _ => {}
        }
        let radius = compact
            .strip_prefix("finite_factor(")
            .and_then(|r| r.strip_suffix(')'))
            .map(|r| r.strip_prefix("b=").unwrap_or(r))
            .and_then(|r| r.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::validation(
                    "theta",
                    format!("unknown frontier map {s:?}; expected finite_factor(b=N), voter or polling"),
                )
            })?;
        Ok(ThetaMap::FiniteFactor { radius })
    }
}

/// What a rule does to the frontier when one of its events is explored.
#[derive(Clone, Debug, PartialEq)]
enum Action {
    /// Unconditional rule.
    Unconditional(State),
    /// Voter: move the lineage to `y + offset`.
    Copy(Site),
    /// Polling: replace `y` by `y + A`.
    Poll(Vec<Site>),
    /// Finite factor: any rule reading neighbors.
    Other,
    /// Perturbative rules are never explored directly.
    Perturbative,
}

/// A frontier map validated against a model.
#[derive(Clone, Debug)]
pub struct Theta {
    map: ThetaMap,
    dim: usize,
    actions: Vec<Action>,
    range: i64,
    plus: Option<State>,
    initial: Frontier,
}

#[derive(Clone, Debug, PartialEq)]
enum Frontier {
    Box { sites: Vec<Site>, recent: Vec<(Site, bool)>, done: bool },
    Lineage(Option<Site>),
    Set(BTreeSet<Site>),
}

/// Incremental state of the frontier after a sequence of explored events.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaState {
    frontier: Frontier,
    sites: Vec<Site>,
    explored: usize,
}

impl ThetaMap {
    /// Checks that `model` has the shape the map needs and precomputes the
    /// per-rule frontier updates.
    pub fn bind(self, model: &Model) -> Result<Theta> {
        let dim = model.dim();
        let mut plus = None;
        if self == ThetaMap::Polling {
            plus = polling_plus_state(model)?;
        }
        let actions = model
            .rules()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.kind() == RuleKind::Perturbative {
                    return Ok(Action::Perturbative);
                }
                if let Some(v) = r.constant_value() {
                    return Ok(Action::Unconditional(v));
                }
                match self {
                    ThetaMap::FiniteFactor { radius } => {
                        if r.offsets().iter().any(|o| o.sup_norm() > radius as i32) {
                            return Err(Error::ModelShapeMismatch(format!(
                                "rule {i} reads beyond radius {radius}"
                            )));
                        }
                        Ok(Action::Other)
                    }
                    ThetaMap::Voter => r
                        .copied_input()
                        .map(|k| Action::Copy(r.offsets()[k]))
                        .ok_or_else(|| {
                            Error::ModelShapeMismatch(format!(
                                "rule {i} is neither unconditional nor a copy rule"
                            ))
                        }),
                    ThetaMap::Polling => Ok(Action::Poll(r.offsets().to_vec())),
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let range = match self {
            ThetaMap::FiniteFactor { radius } => i64::from(radius),
            _ => model
                .rules()
                .iter()
                .filter(|r| !r.is_perturbative())
                .flat_map(|r| r.offsets().iter().map(|o| i64::from(o.sup_norm())))
                .max()
                .unwrap_or(0),
        };
        let initial = match self {
            ThetaMap::FiniteFactor { radius } => Frontier::Box {
                sites: SiteBox::centered(Site::ORIGIN, radius as i32, dim).iter().collect(),
                recent: Vec::new(),
                done: false,
            },
            ThetaMap::Voter => Frontier::Lineage(Some(Site::ORIGIN)),
            ThetaMap::Polling => Frontier::Set([Site::ORIGIN].into_iter().collect()),
        };
        Ok(Theta { map: self, dim, actions, range, plus, initial })
    }
}

/// The `+` state of a polling model: the state on which every non-constant
/// unperturbed rule acts as an OR.
fn polling_plus_state(model: &Model) -> Result<Option<State>> {
    let polls: Vec<_> = model
        .rules()
        .iter()
        .filter(|r| !r.is_perturbative() && r.constant_value().is_none())
        .collect();
    if model.n_states() != 2 {
        return Err(Error::ModelShapeMismatch("polling needs exactly two states".into()));
    }
    let is_or = |p: State, r: &crate::model::Rule| {
        let q = State(1 - p.0);
        let arity = r.offsets().len();
        r.table().iter().enumerate().all(|(idx, &out)| {
            let any_p = (0..arity).any(|k| ((idx >> (arity - 1 - k)) & 1) as u8 == p.0);
            out == if any_p { p } else { q }
        })
    };
    let candidates: Vec<State> = [State(0), State(1)]
        .into_iter()
        .filter(|&p| polls.iter().all(|r| is_or(p, r)))
        .collect();
    match candidates.as_slice() {
        [p] => Ok(Some(*p)),
        [] => Err(Error::ModelShapeMismatch(
            "non-constant rules are not OR-polling rules".into(),
        )),
        // Without any polling rule both states qualify; prefer the "+" label.
        _ => Ok(Some(model.states().find("+").unwrap_or(State(0)))),
    }
}

impl Theta {
    pub fn map(&self) -> ThetaMap {
        self.map
    }

    /// Radius bound on the frontier after `explored` events.
    pub fn beta(&self, explored: usize) -> i64 {
        match self.map {
            ThetaMap::FiniteFactor { .. } => self.range,
            _ => self.range.saturating_mul(explored as i64),
        }
    }

    /// Declared bound on `beta(l) / l`.
    pub fn beta_slope(&self) -> i64 {
        self.range
    }

    /// Frontier of the empty event set.
    pub fn start(&self) -> ThetaState {
        let mut st = ThetaState { frontier: self.initial.clone(), sites: Vec::new(), explored: 0 };
        st.refresh();
        st
    }

    /// Folds one more explored event (site relative to the exploration
    /// origin, older than every event folded so far) into the frontier.
    pub fn step(&self, st: &mut ThetaState, rel: &Event) -> Result<()> {
        let action = &self.actions[rel.rule];
        if *action == Action::Perturbative {
            return Err(Error::PerturbativeEvent);
        }
        let y = rel.site;
        match &mut st.frontier {
            Frontier::Box { sites, recent, done } => {
                let h = sites.len();
                recent.push((y, matches!(action, Action::Unconditional(_))));
                if recent.len() > h {
                    recent.remove(0);
                }
                if recent.len() == h && recent.iter().all(|&(_, u)| u) {
                    let mut seen: Vec<Site> = recent.iter().map(|&(s, _)| s).collect();
                    seen.sort_unstable();
                    seen.dedup();
                    *done = seen.len() == h && seen.iter().all(|s| sites.binary_search(s).is_ok());
                }
            }
            Frontier::Lineage(cur) => match action {
                Action::Unconditional(_) => *cur = None,
                Action::Copy(off) => *cur = Some(y + *off),
                _ => unreachable!("voter actions are copies or constants"),
            },
            Frontier::Set(set) => match action {
                Action::Unconditional(v) if Some(*v) == self.plus => set.clear(),
                Action::Unconditional(_) => {
                    set.remove(&y);
                }
                Action::Poll(offs) => {
                    set.remove(&y);
                    set.extend(offs.iter().map(|&o| y + o));
                }
                _ => unreachable!("polling actions are polls or constants"),
            },
        }
        st.explored += 1;
        st.refresh();
        let beta = self.beta(st.explored);
        if st.sites.iter().any(|s| i64::from(s.sup_norm()) > beta) {
            return Err(Error::FrontierEscape { beta, steps: st.explored });
        }
        Ok(())
    }

    /// The exact readout of a terminated voter or polling exploration: the
    /// constant written by the least-time explored event.
    pub fn exact_readout(&self, events: &[Event]) -> Option<Result<State>> {
        if matches!(self.map, ThetaMap::FiniteFactor { .. }) {
            return None;
        }
        let last = events.iter().min()?;
        Some(match self.actions.get(last.rule) {
            Some(Action::Unconditional(v)) => Ok(*v),
            _ => Err(Error::ModelShapeMismatch(
                "least-time event of a terminated exploration is not unconditional".into(),
            )),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl ThetaState {
    /// Current frontier, relative to the exploration origin.
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn explored(&self) -> usize {
        self.explored
    }

    fn refresh(&mut self) {
        match &self.frontier {
            Frontier::Box { sites, done, .. } => {
                if *done {
                    self.sites.clear();
                } else if self.sites.len() != sites.len() {
                    self.sites.clone_from(sites);
                }
            }
            Frontier::Lineage(cur) => {
                self.sites.clear();
                self.sites.extend(cur.iter().copied());
            }
            Frontier::Set(set) => {
                self.sites.clear();
                self.sites.extend(set.iter().copied());
            }
        }
    }
}

/// Convenience for tests: the frontier after folding `events` in order.
pub fn frontier_of(theta: &Theta, events: &[Event]) -> Result<Vec<Site>> {
    let mut st = theta.start();
    for e in events {
        theta.step(&mut st, e)?;
    }
    Ok(st.sites().to_vec())
}
