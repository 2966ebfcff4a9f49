//! Lazy, memoized realization of the driving Poisson process.
//!
//! Each site carries an independent backward column of events with
//! exponential gaps at the total rate and a categorical rule mark. A column
//! is seeded from `(seed, site)` alone and grows backward in chunks, so the
//! answer to any query is independent of which queries came before it.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::event::Event;
use crate::model::Model;
use crate::rng::{derive, site_seed};
use crate::site::{Site, SiteBox};

const CHUNK: usize = 64;

/// Alternative realizations used to test locality properties: parts of the
/// process are replaced by an independent copy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Resample {
    None,
    /// Columns of sites outside `region` come from `seed` instead.
    OutsideBox { region: SiteBox, seed: u64 },
    /// Every column switches to an independent stream below time `cut`.
    Below { cut: f64, seed: u64 },
}

struct Column {
    times: Vec<f64>,
    rules: Vec<u32>,
    rng: ChaCha8Rng,
    clock: f64,
    switched: bool,
}

/// One fixed realization of the Poisson process, in absolute coordinates.
pub struct EventField {
    seed: u64,
    cumulative: Vec<f64>,
    total_rate: f64,
    resample: Resample,
    columns: BTreeMap<Site, Column>,
    overrides: BTreeMap<(Site, u64), usize>,
    generated: u64,
}

impl EventField {
    pub fn new(model: &Model, seed: u64) -> Self {
        EventField::with_resample(model, seed, Resample::None)
    }

    pub fn with_resample(model: &Model, seed: u64, resample: Resample) -> Self {
        let cumulative = model
            .rules()
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r.rate();
                Some(*acc)
            })
            .collect();
        EventField {
            seed,
            cumulative,
            total_rate: model.total_rate(),
            resample,
            columns: BTreeMap::new(),
            overrides: BTreeMap::new(),
            generated: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Replaces the rule mark of the event at `(ev.site, ev.time)`.
    pub fn override_rule(&mut self, ev: Event, rule: usize) {
        self.overrides.insert((ev.site, ev.time.to_bits()), rule);
    }

    fn mark(&self, site: Site, time: f64, rule: u32) -> usize {
        if self.overrides.is_empty() {
            return rule as usize;
        }
        self.overrides.get(&(site, time.to_bits())).copied().unwrap_or(rule as usize)
    }

    /// Number of events generated so far over all columns.
    pub fn generated(&self) -> u64 {
        self.generated
    }

    fn stream_seed(&self, site: Site, alt: bool) -> u64 {
        match self.resample {
            Resample::OutsideBox { region, seed } if !region.contains(site) => site_seed(seed, site),
            Resample::Below { seed, .. } if alt => site_seed(derive(seed, 1), site),
            _ => site_seed(self.seed, site),
        }
    }

    fn column(&mut self, site: Site) -> &mut Column {
        if !self.columns.contains_key(&site) {
            let rng = ChaCha8Rng::seed_from_u64(self.stream_seed(site, false));
            self.columns.insert(
                site,
                Column { times: Vec::new(), rules: Vec::new(), rng, clock: 0.0, switched: false },
            );
        }
        self.columns.get_mut(&site).unwrap()
    }

    /// Extends the column at `site` until it holds an event strictly before `t`.
    fn extend_below(&mut self, site: Site, t: f64) -> usize {
        if self.total_rate <= 0.0 {
            return 0;
        }
        let total = self.total_rate;
        let cut = match self.resample {
            Resample::Below { cut, .. } => Some(cut),
            _ => None,
        };
        let alt_rng = cut.map(|_| ChaCha8Rng::seed_from_u64(self.stream_seed(site, true)));
        let last_rule = self.cumulative.len() - 1;
        let mut added = 0;
        let cumulative = core::mem::take(&mut self.cumulative);
        let col = self.column(site);
        while col.times.last().is_none_or(|&s| s >= t) {
            for _ in 0..CHUNK {
                let gap: f64 = col.rng.sample::<f64, _>(Exp1) / total;
                let mut s = col.clock - gap;
                if let (Some(c), false) = (cut, col.switched) {
                    if s < c {
                        col.switched = true;
                        col.rng = alt_rng.clone().unwrap();
                        col.clock = c;
                        s = c - col.rng.sample::<f64, _>(Exp1) / total;
                    }
                }
                let u = col.rng.random::<f64>() * total;
                let rule = cumulative.partition_point(|&c| c <= u).min(last_rule);
                col.clock = s;
                col.times.push(s);
                col.rules.push(rule as u32);
                added += 1;
            }
        }
        self.cumulative = cumulative;
        self.generated += added as u64;
        added
    }

    /// Latest event of `site` strictly before `t`.
    fn latest_at(&mut self, site: Site, t: f64) -> Option<Event> {
        if self.total_rate <= 0.0 {
            return None;
        }
        self.extend_below(site, t);
        let col = &self.columns[&site];
        let k = col.times.partition_point(|&s| s >= t);
        Some(Event::new(site, self.mark(site, col.times[k], col.rules[k]), col.times[k]))
    }

    /// The event with the highest time strictly below `t` among the columns
    /// of `sites`.
    pub fn latest_event_before<I>(&mut self, sites: I, t: f64) -> Result<Option<Event>>
    where
        I: IntoIterator<Item = Site>,
    {
        check_time(t)?;
        let mut best: Option<Event> = None;
        for site in sites {
            if let Some(ev) = self.latest_at(site, t) {
                if best.is_none_or(|b| ev > b) {
                    best = Some(ev);
                }
            }
        }
        Ok(best)
    }

    /// All events with site in `region` and time in `[t_lo, t_hi)`, sorted.
    pub fn events_in_window(&mut self, region: &SiteBox, t_lo: f64, t_hi: f64) -> Result<Vec<Event>> {
        check_time(t_hi)?;
        if !t_lo.is_finite() || t_lo > t_hi {
            return Err(Error::InvalidQuery(alloc::format!("reversed interval [{t_lo}, {t_hi})")));
        }
        let mut out = Vec::new();
        if self.total_rate <= 0.0 || t_lo == t_hi {
            return Ok(out);
        }
        for site in region {
            self.column_events(site, t_lo, t_hi, &mut out);
        }
        out.sort_unstable();
        Ok(out)
    }

    fn column_events(&mut self, site: Site, t_lo: f64, t_hi: f64, out: &mut Vec<Event>) {
        self.extend_below(site, t_lo);
        let col = &self.columns[&site];
        let start = col.times.partition_point(|&s| s >= t_hi);
        let end = col.times.partition_point(|&s| s >= t_lo);
        out.extend(
            (start..end).map(|k| Event::new(site, self.mark(site, col.times[k], col.rules[k]), col.times[k])),
        );
    }

    /// Events of one column in `[t_lo, 0)`, latest first.
    pub fn column_dump(&mut self, site: Site, t_lo: f64) -> Result<Vec<Event>> {
        let mut out = Vec::new();
        if !t_lo.is_finite() || t_lo > 0.0 {
            return Err(Error::InvalidQuery(alloc::format!("bad horizon {t_lo}")));
        }
        if self.total_rate > 0.0 {
            self.column_events(site, t_lo, 0.0, &mut out);
        }
        Ok(out)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t > 0.0 {
        return Err(Error::InvalidQuery(alloc::format!("time {t} must be finite and <= 0")));
    }
    Ok(())
}

/// Empirical count statistics of one column over independent seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CountStats {
    pub n_trials: usize,
    pub mean: f64,
    pub variance: f64,
    /// Fraction of counted events carrying each rule index.
    pub rule_freq: Vec<f64>,
}

/// Self-test of the generator: counts events of `site` in `[-horizon, 0)`
/// over `n_trials` fields seeded `derive(seed, k)`.
pub fn column_count_rate_check(
    model: &Model,
    site: Site,
    horizon: f64,
    n_trials: usize,
    seed: u64,
) -> Result<CountStats> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidQuery(alloc::format!("horizon {horizon} must be positive")));
    }
    let mut counts = Vec::with_capacity(n_trials);
    let mut per_rule = vec![0u64; model.rules().len()];
    for k in 0..n_trials {
        let mut field = EventField::new(model, derive(seed, k as u64));
        let evs = field.column_dump(site, -horizon)?;
        for e in &evs {
            per_rule[e.rule] += 1;
        }
        counts.push(evs.len() as f64);
    }
    let n = n_trials.max(1) as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let variance = if n_trials > 1 {
        counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let total: u64 = per_rule.iter().sum();
    let rule_freq = per_rule
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    Ok(CountStats { n_trials, mean, variance, rule_freq })
}
