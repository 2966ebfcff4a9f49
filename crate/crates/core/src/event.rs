//! Points of the graphical construction.

use core::cmp::Ordering;
use core::hash::{Hash, Hasher};

use crate::site::Site;

/// A point `(site, rule, time)` of the Poisson process driving the dynamics.
///
/// Events are totally ordered by `(time, site, rule)`; equality compares the
/// time bit pattern, which is exact because every event time in a realization
/// comes out of the generator once and is copied, never recomputed.
#[derive(Clone, Copy, Debug)]
pub struct Event {
    pub site: Site,
    pub rule: usize,
    pub time: f64,
}

impl Event {
    pub fn new(site: Site, rule: usize, time: f64) -> Self {
        Event { site, rule, time }
    }

    /// Same event seen from a shifted spatial origin.
    pub fn relative_to(&self, origin: Site) -> Event {
        Event { site: self.site - origin, ..*self }
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.site.cmp(&other.site))
            .then_with(|| self.rule.cmp(&other.rule))
    }
}

impl Hash for Event {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.time.to_bits().hash(state);
        self.site.hash(state);
        self.rule.hash(state);
    }
}

/// A space-time point `(x, t)`; the origin of an exploration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTime {
    pub site: Site,
    pub time: f64,
}

impl SpaceTime {
    pub const ORIGIN: SpaceTime = SpaceTime { site: Site::ORIGIN, time: 0.0 };

    pub fn new(site: Site, time: f64) -> Self {
        SpaceTime { site, time }
    }

    /// Key usable in ordered maps; exact on the time bit pattern.
    pub fn key(&self) -> (u64, Site) {
        (ordered_bits(self.time), self.site)
    }
}

/// Monotone map from finite `f64` to `u64` (total order preserving).
pub fn ordered_bits(t: f64) -> u64 {
    let bits = t.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}
