//! Unperturbed exploration: repeatedly take the latest event below the
//! current time floor on the frontier, until the frontier is empty.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Budget, Error, Result};
use crate::event::{Event, SpaceTime};
use crate::field::EventField;
use crate::model::{Model, State};
use crate::readout::{readout_consensus, Readout};
use crate::site::Site;
use crate::theta::{Theta, ThetaState};

pub const DEFAULT_STEP_CAP: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationStep {
    /// Explored event, absolute coordinates.
    pub event: Event,
    /// Frontier after adding the event, relative to the origin.
    pub frontier: Vec<Site>,
    /// Time floor after the step (the event's time).
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationTrace {
    pub origin: SpaceTime,
    pub initial_frontier: Vec<Site>,
    pub steps: Vec<ExplorationStep>,
    pub terminated: bool,
}

impl ExplorationTrace {
    /// The explored set, latest first.
    pub fn events(&self) -> Vec<Event> {
        self.steps.iter().map(|s| s.event).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Final time floor; the origin time when nothing was explored.
    pub fn gamma(&self) -> f64 {
        self.steps.last().map_or(self.origin.time, |s| s.gamma)
    }

    /// `T^u`, when the exploration terminated.
    pub fn t_u(&self) -> Option<f64> {
        self.terminated.then(|| self.gamma())
    }
}

/// Takes the next event for a frontier at floor `gamma`. `Ok(None)` means the
/// frontier is empty.
pub(crate) fn next_event(
    field: &mut EventField,
    st: &ThetaState,
    origin: Site,
    gamma: f64,
) -> Result<Option<Event>> {
    if st.is_empty() {
        return Ok(None);
    }
    match field.latest_event_before(st.sites().iter().map(|&s| origin + s), gamma)? {
        Some(e) => Ok(Some(e)),
        None => Err(Error::budget(Budget::NoEvents)),
    }
}

/// Runs the exploration from `origin` on the unperturbed dynamics.
pub fn run_exploration(
    theta: &Theta,
    field: &mut EventField,
    origin: SpaceTime,
    cap: usize,
) -> Result<ExplorationTrace> {
    if cap == 0 {
        return Err(Error::InvalidQuery("step cap must be at least 1".into()));
    }
    let mut st = theta.start();
    let mut trace = ExplorationTrace {
        origin,
        initial_frontier: st.sites().to_vec(),
        steps: Vec::new(),
        terminated: false,
    };
    let mut gamma = origin.time;
    loop {
        let ev = match next_event(field, &st, origin.site, gamma) {
            Ok(Some(e)) => e,
            Ok(None) => {
                trace.terminated = true;
                return Ok(trace);
            }
            Err(Error::BudgetExceeded { budget, .. }) => {
                return Err(Error::BudgetExceeded { budget, partial: Some(Box::new(trace)) })
            }
            Err(e) => return Err(e),
        };
        if trace.steps.len() == cap {
            return Err(Error::BudgetExceeded {
                budget: Budget::Steps(cap),
                partial: Some(Box::new(trace)),
            });
        }
        theta.step(&mut st, &ev.relative_to(origin.site))?;
        gamma = ev.time;
        trace.steps.push(ExplorationStep { event: ev, frontier: st.sites().to_vec(), gamma });
    }
}

/// Reads the coupled value at `at` off a terminated event set.
pub fn read_value(
    model: &Model,
    theta: &Theta,
    events: &[Event],
    at: SpaceTime,
    substitutions: &BTreeMap<Event, State>,
    readout: Readout,
) -> Result<State> {
    match readout {
        Readout::Consensus { k, seed } => readout_consensus(model, events, at, substitutions, k, seed),
        Readout::Exact => {
            if substitutions.is_empty() {
                if let Some(v) = theta.exact_readout(events) {
                    return v;
                }
            }
            let d = Readout::default();
            let Readout::Consensus { k, seed } = d else { unreachable!() };
            readout_consensus(model, events, at, substitutions, k, seed)
        }
    }
}

/// Exact readout of a voter trace.
pub fn readout_voter(theta: &Theta, trace: &ExplorationTrace) -> Result<State> {
    exact_of_kind(theta, trace, crate::theta::ThetaMap::Voter)
}

/// Exact readout of a polling trace.
pub fn readout_polling(theta: &Theta, trace: &ExplorationTrace) -> Result<State> {
    exact_of_kind(theta, trace, crate::theta::ThetaMap::Polling)
}

fn exact_of_kind(theta: &Theta, trace: &ExplorationTrace, want: crate::theta::ThetaMap) -> Result<State> {
    if theta.map() != want {
        return Err(Error::ModelShapeMismatch(alloc::format!(
            "trace was produced by {}, not {want}",
            theta.map()
        )));
    }
    if !trace.terminated {
        return Err(Error::InvalidQuery("trace did not terminate".into()));
    }
    theta
        .exact_readout(&trace.events())
        .unwrap_or_else(|| Err(Error::ModelShapeMismatch("empty trace".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::model::{independent_sites, noisy_voter, Model};
    use crate::rng::derive;
    use crate::theta::ThetaMap;

    fn voter() -> Model {
        noisy_voter(1, &["+", "-"], &[(Site::line(-1), 0.5), (Site::line(1), 0.5)], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn independent_sites_radius_zero_stops_at_first_event() {
        let m = independent_sites(1, &[2.0, 1.0]).unwrap();
        let th = ThetaMap::FiniteFactor { radius: 0 }.bind(&m).unwrap();
        for s in 0..50 {
            let mut f = EventField::new(&m, s);
            let tr = run_exploration(&th, &mut f, SpaceTime::ORIGIN, 10).unwrap();
            assert_eq!(tr.len(), 1);
            let first = f.latest_event_before([Site::ORIGIN], 0.0).unwrap().unwrap();
            assert_eq!(tr.events(), vec![first]);
            assert_eq!(tr.t_u(), Some(first.time));
        }
    }

    #[test]
    fn voter_trace_is_a_lineage() {
        let m = voter();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        for s in 0..200 {
            let mut f = EventField::new(&m, derive(1, s));
            let tr = run_exploration(&th, &mut f, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap();
            let evs = tr.events();
            let (last, body) = evs.split_last().unwrap();
            assert!(m.rule(last.rule).constant_value().is_some());
            assert!(body.iter().all(|e| m.rule(e.rule).constant_value().is_none()));
            assert!(tr.steps.windows(2).all(|w| w[1].gamma < w[0].gamma));
            let v = readout_voter(&th, &tr).unwrap();
            let c = read_value(&m, &th, &evs, SpaceTime::ORIGIN, &BTreeMap::new(), Readout::default()).unwrap();
            assert_eq!(v, c);
        }
    }

    #[test]
    fn truncated_trace_is_a_coupling_violation() {
        let m = voter();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let mut violations = 0;
        for s in 0..100 {
            let mut f = EventField::new(&m, derive(2, s));
            let mut evs = run_exploration(&th, &mut f, SpaceTime::ORIGIN, DEFAULT_STEP_CAP).unwrap().events();
            evs.pop();
            let r = read_value(&m, &th, &evs, SpaceTime::ORIGIN, &BTreeMap::new(), Readout::default());
            if matches!(r, Err(Error::CouplingViolation(_))) {
                violations += 1;
            }
        }
        assert_eq!(violations, 100);
    }

    #[test]
    fn cap_and_zero_rates() {
        let m = voter();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let mut hit = false;
        for s in 0..50 {
            let mut f = EventField::new(&m, s);
            match run_exploration(&th, &mut f, SpaceTime::ORIGIN, 1) {
                Err(Error::BudgetExceeded { budget: Budget::Steps(1), partial: Some(p) }) => {
                    assert_eq!(p.len(), 1);
                    hit = true;
                }
                Ok(t) => assert_eq!(t.len(), 1),
                Err(e) => panic!("{e}"),
            }
        }
        assert!(hit);
        let z = independent_sites(1, &[0.0, 0.0]).unwrap();
        let th = ThetaMap::FiniteFactor { radius: 0 }.bind(&z).unwrap();
        let mut f = EventField::new(&z, 1);
        assert!(matches!(
            run_exploration(&th, &mut f, SpaceTime::ORIGIN, 10),
            Err(Error::BudgetExceeded { budget: Budget::NoEvents, .. })
        ));
    }

    #[test]
    fn shifted_origin_uses_absolute_events() {
        let m = voter();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let mut f = EventField::new(&m, 77);
        let origin = SpaceTime::new(Site::line(5), -3.0);
        let tr = run_exploration(&th, &mut f, origin, DEFAULT_STEP_CAP).unwrap();
        let first = f.latest_event_before([Site::line(5)], -3.0).unwrap().unwrap();
        assert_eq!(tr.steps[0].event, first);
    }
}
