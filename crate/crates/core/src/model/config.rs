//! Sparse configurations and the single-event update.

use alloc::collections::BTreeMap;

use super::{Model, State};
use crate::error::{Error, Result};
use crate::event::Event;
use crate::rng::site_uniform;
use crate::site::Site;

/// Where reads outside the explicit patch come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Background {
    Constant(State),
    /// I.i.d. uniform over `n_states`, keyed by `(seed, site)`.
    Uniform { seed: u64, n_states: u8 },
}

impl Background {
    pub fn get(&self, site: Site) -> State {
        match *self {
            Background::Constant(s) => s,
            Background::Uniform { seed, n_states } => {
                State(site_uniform(seed, site, u64::from(n_states)) as u8)
            }
        }
    }
}

/// A configuration on `Z^d`: finitely many explicit sites over a background.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchConfig {
    patch: BTreeMap<Site, State>,
    background: Background,
}

impl PatchConfig {
    pub fn new(background: Background) -> Self {
        PatchConfig { patch: BTreeMap::new(), background }
    }

    pub fn constant(s: State) -> Self {
        PatchConfig::new(Background::Constant(s))
    }

    pub fn uniform(seed: u64, n_states: usize) -> Self {
        PatchConfig::new(Background::Uniform { seed, n_states: n_states as u8 })
    }

    pub fn background(&self) -> Background {
        self.background
    }

    pub fn get(&self, site: Site) -> State {
        self.patch.get(&site).copied().unwrap_or_else(|| self.background.get(site))
    }

    pub fn set(&mut self, site: Site, s: State) {
        self.patch.insert(site, s);
    }

    /// Explicitly written sites.
    pub fn patch(&self) -> &BTreeMap<Site, State> {
        &self.patch
    }

    /// Applies `R^x` for the event `(x, i, t)` in place.
    pub fn apply(&mut self, model: &Model, ev: &Event) {
        let rule = model.rule(ev.rule);
        let v = rule.eval_with(|k| self.get(ev.site + rule.offsets()[k]));
        self.set(ev.site, v);
    }
}

/// `R^x cfg` for the event `ev`.
pub fn apply_rule(model: &Model, cfg: &PatchConfig, ev: &Event) -> PatchConfig {
    let mut out = cfg.clone();
    out.apply(model, ev);
    out
}

/// Replays `events` (increasing time) on `xi`. Events listed in
/// `substitutions` write the given state instead of evaluating their rule.
pub fn flow_replay(
    model: &Model,
    events: &[Event],
    xi: &PatchConfig,
    substitutions: &BTreeMap<Event, State>,
) -> Result<PatchConfig> {
    if events.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::UnsortedEvents);
    }
    let mut cfg = xi.clone();
    for ev in events {
        match substitutions.get(ev) {
            Some(&v) => cfg.set(ev.site, v),
            None => cfg.apply(model, ev),
        }
    }
    Ok(cfg)
}
