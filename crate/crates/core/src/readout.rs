//! Readouts: the coupled value at the origin of a terminated exploration.
//!
//! The consensus readout evaluates the state at `(x, t-)` by recursion over a
//! finite event set, for several initial configurations at once, and
//! insists that they agree.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::event::{Event, SpaceTime};
use crate::model::{Model, PatchConfig, State};
use crate::rng::derive;
use crate::site::Site;

/// Most initial configurations a consensus readout may use.
pub const MAX_CONFIGS: usize = 8;

/// How the coupled value is read off an explored event set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    /// Recursive replay over `k` initial configurations (constant ones first,
    /// then seeded random ones) that must all agree.
    Consensus { k: usize, seed: u64 },
    /// The frontier map's closed-form readout, when it has one; consensus
    /// otherwise.
    Exact,
}

impl Default for Readout {
    fn default() -> Self {
        Readout::Consensus { k: 6, seed: 0x00C0_FFEE }
    }
}

/// The `k` initial configurations used by a consensus readout.
pub fn consensus_configs(n_states: usize, k: usize, seed: u64) -> Vec<PatchConfig> {
    let constants = n_states.min(4).min(k);
    (0..k)
        .map(|j| {
            if j < constants {
                PatchConfig::constant(State(j as u8))
            } else {
                PatchConfig::uniform(derive(seed, j as u64), n_states)
            }
        })
        .collect()
}

/// Evaluates the state at `(at.site, at.time-)` from the events in `events`
/// alone, with reads that reach no event falling through to each of the
/// `k` initial configurations. Events in `substitutions` write their value
/// directly.
pub fn readout_consensus(
    model: &Model,
    events: &[Event],
    at: SpaceTime,
    substitutions: &BTreeMap<Event, State>,
    k: usize,
    seed: u64,
) -> Result<State> {
    if !(2..=MAX_CONFIGS).contains(&k) {
        return Err(Error::InvalidQuery(format!("config count {k} outside 2..={MAX_CONFIGS}")));
    }
    let configs = consensus_configs(model.n_states(), k, seed);
    let values = evaluate(model, events, at, substitutions, &configs)?;
    let first = values[0];
    if let Some(j) = values.iter().position(|&v| v != first) {
        return Err(Error::CouplingViolation(format!(
            "initial configurations 0 and {j} give {} and {} at {:?}",
            model.states().label(first),
            model.states().label(values[j]),
            at,
        )));
    }
    Ok(first)
}

type Values = [State; MAX_CONFIGS];

/// Per-config values at `(at.site, at.time-)`.
pub fn evaluate(
    model: &Model,
    events: &[Event],
    at: SpaceTime,
    substitutions: &BTreeMap<Event, State>,
    configs: &[PatchConfig],
) -> Result<Vec<State>> {
    let k = configs.len();
    assert!(k <= MAX_CONFIGS);
    let mut sorted = events.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    // Per-site time-ordered indices into `sorted`.
    let mut by_site: BTreeMap<Site, Vec<usize>> = BTreeMap::new();
    for (idx, e) in sorted.iter().enumerate() {
        by_site.entry(e.site).or_default().push(idx);
    }
    let latest = |site: Site, t: f64| -> Option<usize> {
        let col = by_site.get(&site)?;
        let p = col.partition_point(|&i| sorted[i].time < t);
        p.checked_sub(1).map(|p| col[p])
    };
    let background = |site: Site| -> Values {
        let mut v = [State(0); MAX_CONFIGS];
        for (c, cfg) in configs.iter().enumerate() {
            v[c] = cfg.get(site);
        }
        v
    };

    let Some(root) = latest(at.site, at.time) else {
        return Ok(background(at.site)[..k].to_vec());
    };

    let mut memo: Vec<Option<Values>> = vec![None; sorted.len()];
    let mut stack = vec![root];
    while let Some(&idx) = stack.last() {
        if memo[idx].is_some() {
            stack.pop();
            continue;
        }
        let ev = sorted[idx];
        if let Some(&v) = substitutions.get(&ev) {
            memo[idx] = Some([v; MAX_CONFIGS]);
            stack.pop();
            continue;
        }
        let rule = model.rule(ev.rule);
        let mut pending = false;
        for (j, &off) in rule.offsets().iter().enumerate() {
            if !rule.is_essential(j) {
                continue;
            }
            if let Some(dep) = latest(ev.site + off, ev.time) {
                if memo[dep].is_none() {
                    stack.push(dep);
                    pending = true;
                }
            }
        }
        if pending {
            continue;
        }
        let inputs: Vec<Values> = rule
            .offsets()
            .iter()
            .enumerate()
            .map(|(j, &off)| {
                if !rule.is_essential(j) {
                    return [State(0); MAX_CONFIGS];
                }
                let site = ev.site + off;
                match latest(site, ev.time) {
                    Some(dep) => memo[dep].unwrap(),
                    None => background(site),
                }
            })
            .collect();
        let mut out = [State(0); MAX_CONFIGS];
        for (c, slot) in out.iter_mut().enumerate().take(k) {
            *slot = rule.eval_with(|j| inputs[j][c]);
        }
        memo[idx] = Some(out);
        stack.pop();
    }
    Ok(memo[root].unwrap()[..k].to_vec())
}
