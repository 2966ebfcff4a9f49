//! Independent ground truth: exact stationary laws on small periodic tori,
//! forward simulation on finite boxes, and brute-force replay of a
//! realization from many initial configurations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::field::EventField;
use crate::model::{flow_replay, Model, PatchConfig, State};
use crate::readout::consensus_configs;
use crate::rng::derive;
use crate::site::{Site, SiteBox};

/// Default bound on the number of torus configurations (the generator is
/// stored densely).
pub const DEFAULT_TORUS_CAP: usize = 4096;

/// The finite-volume chain on the periodic torus `(Z / nZ)^d`.
#[derive(Clone, Debug)]
pub struct TorusChain {
    pub n: usize,
    pub dim: usize,
    pub n_states: usize,
    pub sites: usize,
    /// Dense generator, rows summing to zero.
    pub generator: DMatrix<f64>,
}

impl TorusChain {
    pub fn new(model: &Model, n: usize, cap: usize) -> Result<Self> {
        let dim = model.dim();
        if n == 0 {
            return Err(Error::InvalidQuery("torus side must be positive".into()));
        }
        if 2 * model.max_range() as usize >= n {
            return Err(Error::InvalidQuery(format!(
                "rule range {} does not fit a torus of side {n}",
                model.max_range()
            )));
        }
        let sites = n.pow(dim as u32);
        let q = model.n_states();
        let count = (q as u128).checked_pow(sites as u32).unwrap_or(u128::MAX);
        if count > cap as u128 {
            return Err(Error::CapExceeded { states: count, cap });
        }
        let count = count as usize;
        let region = SiteBox::new(Site::ORIGIN, Site::new(&vec![n as i32 - 1; dim]), dim);
        let coords: Vec<Site> = region.iter().collect();
        let wrap = |s: Site| -> usize {
            let c: Vec<i32> = (0..dim).map(|k| s.coord(k).rem_euclid(n as i32)).collect();
            region.index_of(Site::new(&c)).unwrap()
        };
        // Neighborhood positions per rule and site.
        let neigh: Vec<Vec<Vec<usize>>> = model
            .rules()
            .iter()
            .map(|r| coords.iter().map(|&x| r.offsets().iter().map(|&o| wrap(x + o)).collect()).collect())
            .collect();
        let pow: Vec<usize> = (0..sites).map(|k| q.pow((sites - 1 - k) as u32)).collect();
        let digit = |c: usize, k: usize| (c / pow[k]) % q;

        let mut gen = DMatrix::<f64>::zeros(count, count);
        for c in 0..count {
            for (i, rule) in model.rules().iter().enumerate() {
                if rule.rate() == 0.0 {
                    continue;
                }
                for x in 0..sites {
                    let v = rule.eval_with(|j| State(digit(c, neigh[i][x][j]) as u8)).index();
                    let old = digit(c, x);
                    if v != old {
                        let c2 = c + v * pow[x] - old * pow[x];
                        gen[(c, c2)] += rule.rate();
                        gen[(c, c)] -= rule.rate();
                    }
                }
            }
        }
        Ok(TorusChain { n, dim, n_states: q, sites, generator: gen })
    }

    pub fn len(&self) -> usize {
        self.generator.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest absolute row sum of the generator.
    pub fn max_row_sum(&self) -> f64 {
        self.generator.row_iter().map(|r| libm::fabs(r.sum())).fold(0.0, f64::max)
    }

    /// Solves `pi Q = 0`, `sum pi = 1`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let m = self.len();
        let mut a = self.generator.transpose();
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(m);
        b[m - 1] = 1.0;
        let pi = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
        if pi.iter().any(|p| !p.is_finite()) {
            return Err(Error::SingularSystem);
        }
        Ok(pi.iter().map(|&p| p.max(0.0)).collect())
    }

    /// Law of the state at the torus origin under `pi`.
    pub fn site_marginal(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        let stride = self.n_states.pow((self.sites - 1) as u32);
        for (c, &p) in pi.iter().enumerate() {
            out[(c / stride) % self.n_states] += p;
        }
        out
    }
}

/// Stationary law of the torus chain and its single-site marginal.
pub fn torus_stationary(model: &Model, n: usize, cap: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let chain = TorusChain::new(model, n, cap)?;
    let pi = chain.stationary()?;
    let marginal = chain.site_marginal(&pi);
    Ok((pi, marginal))
}

/// States on a box at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSnapshot {
    pub region: SiteBox,
    pub states: Vec<State>,
}

impl BoxSnapshot {
    pub fn get(&self, site: Site) -> Option<State> {
        self.region.index_of(site).map(|i| self.states[i])
    }
}

/// Event-driven simulation on `{-radius..radius}^d` from time `-burn_in` to
/// 0, starting from `xi`; sites outside the box keep their `xi` values.
pub fn forward_simulate(model: &Model, radius: i32, burn_in: f64, xi: &PatchConfig, seed: u64) -> Result<BoxSnapshot> {
    if !(burn_in > 0.0 && burn_in.is_finite()) {
        return Err(Error::InvalidQuery(format!("burn-in {burn_in} must be positive")));
    }
    let dim = model.dim();
    let region = SiteBox::centered(Site::ORIGIN, radius, dim);
    let coords: Vec<Site> = region.iter().collect();
    let mut states: Vec<State> = coords.iter().map(|&s| xi.get(s)).collect();
    let total = model.total_rate() * coords.len() as f64;
    if total <= 0.0 || coords.is_empty() {
        return Ok(BoxSnapshot { region, states });
    }
    // Neighborhood reads: index into the box, or the frozen outside value.
    #[derive(Clone, Copy)]
    enum Read {
        Inside(usize),
        Frozen(State),
    }
    let reads: Vec<Vec<Vec<Read>>> = model
        .rules()
        .iter()
        .map(|r| {
            coords
                .iter()
                .map(|&x| {
                    r.offsets()
                        .iter()
                        .map(|&o| match region.index_of(x + o) {
                            Some(i) => Read::Inside(i),
                            None => Read::Frozen(xi.get(x + o)),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xF0_4A4D));
    let rate = model.total_rate();
    let mut t = -burn_in;
    loop {
        t += rng.sample::<f64, _>(Exp1) / total;
        if t >= 0.0 {
            break;
        }
        let x = rng.random_range(0..coords.len());
        let i = model.rule_at(rng.random::<f64>() * rate);
        let rule = model.rule(i);
        let r = &reads[i][x];
        let v = rule.eval_with(|j| match r[j] {
            Read::Inside(k) => states[k],
            Read::Frozen(s) => s,
        });
        states[x] = v;
    }
    Ok(BoxSnapshot { region, states })
}

/// Event-driven simulation of the torus chain over `[-burn_in, 0)` from
/// the configuration `xi` restricted to the torus; returns the torus states
/// in row-major order.
pub fn forward_simulate_torus(model: &Model, n: usize, burn_in: f64, xi: &PatchConfig, seed: u64) -> Result<Vec<State>> {
    if !(burn_in > 0.0 && burn_in.is_finite()) || n == 0 {
        return Err(Error::InvalidQuery(format!("bad torus run: side {n}, burn-in {burn_in}")));
    }
    let dim = model.dim();
    let region = SiteBox::new(Site::ORIGIN, Site::new(&vec![n as i32 - 1; dim]), dim);
    let coords: Vec<Site> = region.iter().collect();
    let wrap = |s: Site| -> usize {
        let c: Vec<i32> = (0..dim).map(|k| s.coord(k).rem_euclid(n as i32)).collect();
        region.index_of(Site::new(&c)).unwrap()
    };
    let mut states: Vec<State> = coords.iter().map(|&s| xi.get(s)).collect();
    let rate = model.total_rate();
    let total = rate * coords.len() as f64;
    if total <= 0.0 {
        return Ok(states);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0x7042));
    let mut t = -burn_in;
    loop {
        t += rng.sample::<f64, _>(Exp1) / total;
        if t >= 0.0 {
            break;
        }
        let x = rng.random_range(0..coords.len());
        let rule = model.rule(model.rule_at(rng.random::<f64>() * rate));
        let v = rule.eval_with(|j| states[wrap(coords[x] + rule.offsets()[j])]);
        states[x] = v;
    }
    Ok(states)
}

/// Half the L1 distance between two distributions on the same outcomes.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| libm::fabs(a - b)).sum::<f64>())
}

/// Empirical law of `values` over `n_states` outcomes.
pub fn histogram(values: &[State], n_states: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_states];
    for v in values {
        out[v.index()] += 1.0;
    }
    let n = values.len().max(1) as f64;
    out.iter_mut().for_each(|c| *c /= n);
    out
}

/// Replays every event of `field` in `region x [t_lo, 0)` from `k`
/// initial configurations and returns the common value at `at`, or a
/// coupling violation if they differ.
pub fn global_consensus(
    model: &Model,
    field: &mut EventField,
    region: &SiteBox,
    t_lo: f64,
    at: Site,
    k: usize,
    seed: u64,
) -> Result<State> {
    let events = field.events_in_window(region, t_lo, 0.0)?;
    let mut value = None;
    for (j, cfg) in consensus_configs(model.n_states(), k, seed).iter().enumerate() {
        let v = flow_replay(model, &events, cfg, &BTreeMap::new())?.get(at);
        match value {
            None => value = Some(v),
            Some(w) if w != v => {
                return Err(Error::CouplingViolation(format!(
                    "replay from configuration {j} gives {} instead of {}",
                    model.states().label(v),
                    model.states().label(w)
                )))
            }
            _ => {}
        }
    }
    value.ok_or_else(|| Error::InvalidQuery("no configurations".into()))
}
