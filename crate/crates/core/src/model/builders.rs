//! Builders for the model families shipped with the engine.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Model, Rule, RuleKind, State, StateSpace};
use crate::error::{Error, Result};
use crate::site::Site;

fn letters(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            if i < 26 {
                String::from(char::from(b'A' + i as u8))
            } else {
                format!("S{i}")
            }
        })
        .collect()
}

/// Non-interacting sites: one unconditional rule per state, labels `A, B, ...`.
pub fn independent_sites(dim: usize, rates: &[f64]) -> Result<Model> {
    let n = rates.len();
    let states = StateSpace::new(&letters(n))?;
    let rules = rates
        .iter()
        .enumerate()
        .map(|(v, &r)| Rule::constant(State(v as u8), r, RuleKind::Unperturbed, n))
        .collect::<Result<_>>()?;
    Model::new(dim, states, rules)
}

/// Linear voter model with noise: for each `(x, p)` in `kernel`, a copy rule
/// `A = {0, x}`, `f(w) = w_x` at rate `p`; then one unconditional rule per
/// state at the given noise rate.
pub fn noisy_voter<S: AsRef<str>>(
    dim: usize,
    labels: &[S],
    kernel: &[(Site, f64)],
    noise: &[f64],
) -> Result<Model> {
    let states = StateSpace::new(labels)?;
    let n = states.len();
    if noise.len() != n {
        return Err(Error::validation("noise", format!("expected {n} rates, got {}", noise.len())));
    }
    let mut rules = Vec::with_capacity(kernel.len() + n);
    for (k, &(x, p)) in kernel.iter().enumerate() {
        if x == Site::ORIGIN {
            return Err(Error::validation(format!("kernel[{k}]"), "copy offset must be non-zero"));
        }
        rules.push(Rule::from_fn(vec![Site::ORIGIN, x], n, p, RuleKind::Unperturbed, |w| w[1])?);
    }
    for (v, &r) in noise.iter().enumerate() {
        rules.push(Rule::constant(State(v as u8), r, RuleKind::Unperturbed, n)?);
    }
    Model::new(dim, states, rules)
}

/// Voter model with asymmetric polling on `{+, -}`: for each poll set
/// `A^(k)`, a rule writing `+` iff some polled site is `+`; then the two
/// unconditional rules at `noise = [r_+, r_-]`.
pub fn asymmetric_polling(dim: usize, polls: &[(Vec<Site>, f64)], noise: [f64; 2]) -> Result<Model> {
    let states = StateSpace::new(&["+", "-"])?;
    let (plus, minus) = (State(0), State(1));
    let mut rules = Vec::with_capacity(polls.len() + 2);
    for (k, (set, rate)) in polls.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::validation(format!("polls[{k}]"), "poll set is empty"));
        }
        rules.push(Rule::from_fn(set.clone(), 2, *rate, RuleKind::Unperturbed, |w| {
            if w.contains(&plus) { plus } else { minus }
        })?);
    }
    rules.push(Rule::constant(plus, noise[0], RuleKind::Unperturbed, 2)?);
    rules.push(Rule::constant(minus, noise[1], RuleKind::Unperturbed, 2)?);
    Model::new(dim, states, rules)
}

/// Rates of the RN+YpR nucleotide substitution family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RnYprRates {
    /// Unconditional rules, in state order `A, C, G, T`.
    pub unconditional: [f64; 4],
    pub transversion: f64,
    pub transition: f64,
    /// Left- and right-dependent rules that change the state.
    pub dependent: f64,
    /// The two CpG rules: `C -> T` before a `G`, `G -> A` after a `C`.
    pub cpg: f64,
    /// Dependent rules whose table is the identity (`v' = v` or `u' = u`).
    pub identity: f64,
}

impl Default for RnYprRates {
    fn default() -> Self {
        RnYprRates {
            unconditional: [2.5, 1.5, 1.5, 2.5],
            transversion: 0.25,
            transition: 0.5,
            dependent: 0.1,
            cpg: 1.0,
            identity: 0.0,
        }
    }
}

/// RN+YpR on `Z` with states `A, C, G, T`, pyrimidines `{C, T}` and purines
/// `{A, G}`. Rules in order: 4 unconditional, 4 transversion, 4 transition,
/// 8 left-dependent `(u, v, v')`, 8 right-dependent `(u, v, u')`.
pub fn rn_ypr(rates: &RnYprRates) -> Result<Model> {
    let states = StateSpace::new(&["A", "C", "G", "T"])?;
    let (a, c, g, t) = (State(0), State(1), State(2), State(3));
    let pyr = [c, t];
    let pur = [a, g];
    let is_pyr = |s: State| pyr.contains(&s);
    let un = RuleKind::Unperturbed;
    let mut rules = Vec::with_capacity(28);

    for v in states.iter() {
        rules.push(Rule::constant(v, rates.unconditional[v.index()], un, 4)?);
    }
    for v in states.iter() {
        rules.push(Rule::from_fn(vec![Site::ORIGIN], 4, rates.transversion, un, |w| {
            if is_pyr(v) != is_pyr(w[0]) { v } else { w[0] }
        })?);
    }
    for v in states.iter() {
        rules.push(Rule::from_fn(vec![Site::ORIGIN], 4, rates.transition, un, |w| {
            if is_pyr(v) == is_pyr(w[0]) { v } else { w[0] }
        })?);
    }
    for u in pyr {
        for v in pur {
            for v2 in pur {
                let rate = if v2 == v {
                    rates.identity
                } else if (u, v, v2) == (c, g, a) {
                    rates.cpg
                } else {
                    rates.dependent
                };
                rules.push(Rule::from_fn(vec![Site::line(-1), Site::ORIGIN], 4, rate, un, |w| {
                    if (w[0], w[1]) == (u, v) { v2 } else { w[1] }
                })?);
            }
        }
    }
    for u in pyr {
        for v in pur {
            for u2 in pyr {
                let rate = if u2 == u {
                    rates.identity
                } else if (u, v, u2) == (c, g, t) {
                    rates.cpg
                } else {
                    rates.dependent
                };
                rules.push(Rule::from_fn(vec![Site::ORIGIN, Site::line(1)], 4, rate, un, |w| {
                    if (w[0], w[1]) == (u, v) { u2 } else { w[0] }
                })?);
            }
        }
    }
    Model::new(1, states, rules)
}

/// `base` with `extra` appended as perturbative rules.
pub fn with_perturbation(base: &Model, extra: Vec<Rule>) -> Result<Model> {
    let mut rules = base.rules().to_vec();
    rules.extend(extra.into_iter().map(|r| r.with_kind(RuleKind::Perturbative)));
    Model::new(base.dim(), base.states().clone(), rules)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_sites_two_states() {
        let m = independent_sites(1, &[2.0, 1.0]).unwrap();
        assert_eq!(m.rules().len(), 2);
        assert_eq!(m.total_rate(), 3.0);
        assert_eq!(m.epsilon().unwrap(), 0.0);
        assert_eq!(m.kappa().unwrap(), 0.0);
        assert_eq!(m.states().labels(), &["A", "B"]);
    }

    #[test]
    fn rn_ypr_has_28_rules() {
        let m = rn_ypr(&RnYprRates::default()).unwrap();
        assert_eq!(m.rules().len(), 28);
        assert_eq!(m.n_states(), 4);
        assert!(m.positive_rates());
        assert_eq!(m.max_range(), 1);
    }

    #[test]
    fn rn_ypr_type_changes_only_without_neighbors() {
        // Every rule reading a neighbor preserves the pyrimidine/purine type.
        let m = rn_ypr(&RnYprRates::default()).unwrap();
        let pyr = |s: State| s == State(1) || s == State(3);
        for r in m.rules().iter().filter(|r| r.offsets().len() == 2) {
            let own = r.offsets().iter().position(|&o| o == Site::ORIGIN).unwrap();
            for a in 0..4u8 {
                for b in 0..4u8 {
                    let w = [State(a), State(b)];
                    assert_eq!(pyr(r.eval(&w)), pyr(w[own]));
                }
            }
        }
    }

    #[test]
    fn noisy_voter_nearest_neighbor_shape() {
        let m = noisy_voter(1, &["+", "-"], &[(Site::line(-1), 0.5), (Site::line(1), 0.5)], &[1.0, 1.0])
            .unwrap();
        assert_eq!(m.rules().len(), 4);
        assert_eq!(m.rules().iter().filter(|r| r.offsets().len() == 2).count(), 2);
        assert_eq!(m.rules().iter().filter(|r| r.offsets().is_empty()).count(), 2);
        assert_eq!(m.rule(0).copied_input(), Some(1));
    }

    #[test]
    fn polling_table_is_or() {
        let m = asymmetric_polling(1, &[(vec![Site::line(-1), Site::line(1)], 1.0)], [0.5, 0.5]).unwrap();
        let r = m.rule(0);
        assert_eq!(r.eval(&[State(1), State(1)]), State(1));
        assert_eq!(r.eval(&[State(1), State(0)]), State(0));
    }

    #[test]
    fn with_perturbation_marks_kind() {
        let base = independent_sites(1, &[2.0, 1.0]).unwrap();
        let extra = Rule::from_fn(vec![Site::line(1)], 2, 0.1, RuleKind::Unperturbed, |w| w[0]).unwrap();
        let m = with_perturbation(&base, vec![extra]).unwrap();
        assert!(m.rule(2).is_perturbative());
        assert!((m.kappa().unwrap() - 0.1 / 3.1).abs() < 1e-15);
    }
}
