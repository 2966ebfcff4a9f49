//! Rule-based dynamics: states, transition rules `(f, A, r)` and models.

mod builders;
mod config;
pub mod presets;

pub use builders::{
    asymmetric_polling, independent_sites, noisy_voter, rn_ypr, with_perturbation, RnYprRates,
};
pub use config::{apply_rule, flow_replay, Background, PatchConfig};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::site::{Site, MAX_DIM};

/// Index of a state in the model's [`StateSpace`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct State(pub u8);

impl State {
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Ordered list of distinct state labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::validation("states", "state space is empty"));
        }
        if labels.len() > usize::from(u8::MAX) {
            return Err(Error::validation("states", "more than 255 states"));
        }
        let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.chars().any(char::is_whitespace) {
                return Err(Error::validation(
                    format!("states[{i}]"),
                    "labels must be non-empty and contain no whitespace",
                ));
            }
            if labels[..i].contains(l) {
                return Err(Error::validation(format!("states[{i}]"), format!("duplicate label {l:?}")));
            }
        }
        Ok(StateSpace { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, s: State) -> &str {
        &self.labels[s.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn find(&self, label: &str) -> Option<State> {
        self.labels.iter().position(|l| l == label).map(|i| State(i as u8))
    }

    pub fn iter(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.labels.len()).map(|i| State(i as u8))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Unperturbed,
    Perturbative,
}

/// A transition rule `(f, A, r)`: at rate `r` per site `x`, the state at `x`
/// becomes `f` of the states on `x + A`.
///
/// `f` is stored as an explicit table over `S^A`, indexed in mixed radix with
/// the first offset most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    offsets: Vec<Site>,
    table: Vec<State>,
    rate: f64,
    kind: RuleKind,
    n_states: usize,
    image: Vec<State>,
    essential: Vec<bool>,
}

impl Rule {
    pub fn new(
        offsets: Vec<Site>,
        table: Vec<State>,
        rate: f64,
        kind: RuleKind,
        n_states: usize,
    ) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::validation("rate", format!("must be finite and >= 0, got {rate}")));
        }
        if n_states == 0 || n_states > usize::from(u8::MAX) {
            return Err(Error::validation("states", "bad state count"));
        }
        for (i, o) in offsets.iter().enumerate() {
            if offsets[..i].contains(o) {
                return Err(Error::validation("offsets", format!("duplicate offset {o:?}")));
            }
        }
        let expected = u32::try_from(offsets.len())
            .ok()
            .and_then(|k| n_states.checked_pow(k))
            .filter(|&n| n <= 1 << 24)
            .ok_or_else(|| Error::validation("offsets", "neighborhood too large"))?;
        if table.len() != expected {
            return Err(Error::validation(
                "table",
                format!("expected {expected} entries, got {}", table.len()),
            ));
        }
        if let Some(bad) = table.iter().find(|s| s.index() >= n_states) {
            return Err(Error::validation("table", format!("unknown state {bad:?}")));
        }

        let mut image = table.clone();
        image.sort_unstable();
        image.dedup();

        let arity = offsets.len();
        let essential = (0..arity)
            .map(|k| {
                let stride = n_states.pow((arity - 1 - k) as u32);
                (0..table.len()).any(|idx| {
                    let digit = (idx / stride) % n_states;
                    let base = idx - digit * stride;
                    (0..n_states).any(|d| table[base + d * stride] != table[idx])
                })
            })
            .collect();

        Ok(Rule { offsets, table, rate, kind, n_states, image, essential })
    }

    /// Builds the table by evaluating `f` on every input tuple.
    pub fn from_fn(
        offsets: Vec<Site>,
        n_states: usize,
        rate: f64,
        kind: RuleKind,
        f: impl Fn(&[State]) -> State,
    ) -> Result<Self> {
        let arity = offsets.len();
        let size = n_states
            .checked_pow(arity as u32)
            .filter(|&n| n <= 1 << 24)
            .ok_or_else(|| Error::validation("offsets", "neighborhood too large"))?;
        let mut inputs = vec![State(0); arity];
        let table = (0..size)
            .map(|mut idx| {
                for k in (0..arity).rev() {
                    inputs[k] = State((idx % n_states) as u8);
                    idx /= n_states;
                }
                f(&inputs)
            })
            .collect();
        Rule::new(offsets, table, rate, kind, n_states)
    }

    /// Unconditional rule `A = {}`, `f = v`.
    pub fn constant(v: State, rate: f64, kind: RuleKind, n_states: usize) -> Result<Self> {
        Rule::new(Vec::new(), vec![v], rate, kind, n_states)
    }

    pub fn offsets(&self) -> &[Site] {
        &self.offsets
    }

    pub fn table(&self) -> &[State] {
        &self.table
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn is_perturbative(&self) -> bool {
        self.kind == RuleKind::Perturbative
    }

    /// Distinct values taken by `f`, in state order.
    pub fn image(&self) -> &[State] {
        &self.image
    }

    /// `Some(v)` for an unconditional rule `f = v`.
    pub fn constant_value(&self) -> Option<State> {
        self.offsets.is_empty().then(|| self.table[0])
    }

    /// Whether the output depends on the input at position `k`.
    pub fn is_essential(&self, k: usize) -> bool {
        self.essential[k]
    }

    /// Position `k` such that `f(w) = w_k` for every input, if any.
    pub fn copied_input(&self) -> Option<usize> {
        let n = self.n_states;
        let arity = self.offsets.len();
        (0..arity).find(|&k| {
            let stride = n.pow((arity - 1 - k) as u32);
            self.table
                .iter()
                .enumerate()
                .all(|(idx, out)| out.index() == (idx / stride) % n)
        })
    }

    pub fn eval(&self, inputs: &[State]) -> State {
        debug_assert_eq!(inputs.len(), self.offsets.len());
        self.eval_with(|k| inputs[k])
    }

    /// Evaluates `f`, asking `input` only for positions the output depends on.
    pub fn eval_with(&self, mut input: impl FnMut(usize) -> State) -> State {
        let mut idx = 0;
        for k in 0..self.offsets.len() {
            let digit = if self.essential[k] { input(k).index() } else { 0 };
            idx = idx * self.n_states + digit;
        }
        self.table[idx]
    }

    pub(crate) fn with_kind(mut self, kind: RuleKind) -> Self {
        self.kind = kind;
        self
    }
}

/// A validated model: dimension, state space and the rule list split into
/// unperturbed and perturbative indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    dim: usize,
    states: StateSpace,
    rules: Vec<Rule>,
    iota: Option<Vec<usize>>,
    total_rate: f64,
    unperturbed_rate: f64,
    cumulative: Vec<f64>,
}

impl Model {
    pub fn new(dim: usize, states: StateSpace, rules: Vec<Rule>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::validation("dim", format!("must be in 1..={MAX_DIM}, got {dim}")));
        }
        if rules.is_empty() {
            return Err(Error::validation("rules", "no rules"));
        }
        for (i, r) in rules.iter().enumerate() {
            if r.n_states != states.len() {
                return Err(Error::validation(
                    format!("rules[{i}]"),
                    "table built for a different state count",
                ));
            }
            if let Some(o) = r.offsets.iter().find(|o| !o.fits_dim(dim)) {
                return Err(Error::validation(
                    format!("rules[{i}].offsets"),
                    format!("offset {o:?} has coordinates beyond dimension {dim}"),
                ));
            }
        }
        if rules.len() > u32::MAX as usize {
            return Err(Error::validation("rules", "too many rules"));
        }

        let iota: Option<Vec<usize>> = states
            .iter()
            .map(|v| {
                rules.iter().position(|r| {
                    r.kind == RuleKind::Unperturbed && r.rate > 0.0 && r.constant_value() == Some(v)
                })
            })
            .collect();

        let mut cumulative = Vec::with_capacity(rules.len());
        let mut acc = 0.0;
        for r in &rules {
            acc += r.rate;
            cumulative.push(acc);
        }
        let unperturbed_rate = rules
            .iter()
            .filter(|r| r.kind == RuleKind::Unperturbed)
            .map(|r| r.rate)
            .sum();

        Ok(Model { dim, states, rules, iota, total_rate: acc, unperturbed_rate, cumulative })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, i: usize) -> &Rule {
        &self.rules[i]
    }

    /// Total rate per site, sum of all `r_i`.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Sum of the unperturbed rates.
    pub fn unperturbed_rate(&self) -> f64 {
        self.unperturbed_rate
    }

    pub fn perturbative_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.rules.len()).filter(|&i| self.rules[i].is_perturbative())
    }

    pub fn has_perturbation(&self) -> bool {
        self.rules.iter().any(Rule::is_perturbative)
    }

    pub fn positive_rates(&self) -> bool {
        self.iota.is_some()
    }

    /// Index of the unperturbed unconditional rule writing `v`.
    pub fn iota(&self, v: State) -> Option<usize> {
        self.iota.as_ref().map(|i| i[v.index()])
    }

    /// Largest sup-norm of any offset of any rule.
    pub fn max_range(&self) -> i32 {
        self.rules
            .iter()
            .flat_map(|r| r.offsets.iter().map(Site::sup_norm))
            .max()
            .unwrap_or(0)
    }

    /// Rule index for `u` drawn uniformly in `[0, total_rate)`.
    pub fn rule_at(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.rules.len() - 1)
    }

    /// Perturbation smallness `sup_v (sum_{j in I^p, v in f_j(S^A_j)} r_j) / r_{iota_v}`.
    pub fn epsilon(&self) -> Result<f64> {
        let iota = self.iota.as_ref().ok_or(Error::PositiveRatesMissing)?;
        Ok(self
            .states
            .iter()
            .map(|v| {
                let mass: f64 = self
                    .rules
                    .iter()
                    .filter(|r| r.is_perturbative() && r.image.contains(&v))
                    .fold(0.0, |acc, r| acc + r.rate);
                mass / self.rules[iota[v.index()]].rate
            })
            .fold(0.0, f64::max))
    }

    /// `(sum_{i in I^p} |A_i| r_i) / (sum_i r_i)`.
    pub fn kappa(&self) -> Result<f64> {
        if self.total_rate <= 0.0 {
            return Err(Error::ZeroTotalRate);
        }
        let weighted: f64 = self
            .rules
            .iter()
            .filter(|r| r.is_perturbative())
            .fold(0.0, |acc, r| acc + r.offsets.len() as f64 * r.rate);
        Ok(weighted / self.total_rate)
    }

    /// The model restricted to its unperturbed rules (re-indexed).
    pub fn unperturbed(&self) -> Result<Model> {
        let rules = self
            .rules
            .iter()
            .filter(|r| !r.is_perturbative())
            .cloned()
            .collect();
        Model::new(self.dim, self.states.clone(), rules)
    }

    /// Merges rules with identical `(A, f, kind)` by adding their rates.
    /// Off by default so that rule indices stay those of the description.
    pub fn merge_identical(self) -> Result<Model> {
        let mut merged: Vec<Rule> = Vec::with_capacity(self.rules.len());
        for r in self.rules {
            match merged
                .iter_mut()
                .find(|m| m.kind == r.kind && m.offsets == r.offsets && m.table == r.table)
            {
                Some(m) => m.rate += r.rate,
                None => merged.push(r),
            }
        }
        Model::new(self.dim, self.states, merged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state_base() -> (StateSpace, Vec<Rule>) {
        let states = StateSpace::new(&["+", "-"]).unwrap();
        let rules = vec![
            Rule::constant(State(0), 1.0, RuleKind::Unperturbed, 2).unwrap(),
            Rule::constant(State(1), 1.0, RuleKind::Unperturbed, 2).unwrap(),
        ];
        (states, rules)
    }

    #[test]
    fn epsilon_and_kappa_without_perturbation_are_zero() {
        let (s, r) = two_state_base();
        let m = Model::new(1, s, r).unwrap();
        assert_eq!(m.epsilon().unwrap(), 0.0);
        assert_eq!(m.kappa().unwrap(), 0.0);
        assert!(m.positive_rates());
    }

    #[test]
    fn epsilon_two_valued_perturbation() {
        // Direct evaluation: both values reachable at rate 0.1, iota rates 1.
        let (s, mut r) = two_state_base();
        r.push(
            Rule::from_fn(vec![Site::line(1)], 2, 0.1, RuleKind::Perturbative, |w| w[0]).unwrap(),
        );
        let m = Model::new(1, s, r).unwrap();
        assert!((m.epsilon().unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn epsilon_constant_perturbation_attains_sup_at_its_value() {
        let (s, mut r) = two_state_base();
        r.push(Rule::constant(State(0), 0.1, RuleKind::Perturbative, 2).unwrap());
        let m = Model::new(1, s, r).unwrap();
        assert!((m.epsilon().unwrap() - 0.1).abs() < 1e-15);
        // |A| = 0 contributes nothing to kappa.
        assert_eq!(m.kappa().unwrap(), 0.0);
    }

    #[test]
    fn kappa_noisy_voter_with_pair_rule() {
        let base = noisy_voter(1, &["+", "-"], &[(Site::line(-1), 0.5), (Site::line(1), 0.5)], &[1.0, 1.0])
            .unwrap();
        let extra = Rule::from_fn(
            vec![Site::line(-1), Site::line(1)],
            2,
            0.1,
            RuleKind::Perturbative,
            |w| w[0],
        )
        .unwrap();
        let m = with_perturbation(&base, vec![extra]).unwrap();
        assert!((m.total_rate() - 3.1).abs() < 1e-12);
        assert!((m.kappa().unwrap() - 0.2 / 3.1).abs() < 1e-15);
    }

    #[test]
    fn epsilon_requires_positive_rates() {
        let states = StateSpace::new(&["a", "b"]).unwrap();
        let rules = vec![Rule::constant(State(0), 1.0, RuleKind::Unperturbed, 2).unwrap()];
        let m = Model::new(1, states, rules).unwrap();
        assert!(!m.positive_rates());
        assert!(matches!(m.epsilon(), Err(Error::PositiveRatesMissing)));
    }

    #[test]
    fn kappa_rejects_zero_rate() {
        let states = StateSpace::new(&["a"]).unwrap();
        let rules = vec![Rule::constant(State(0), 0.0, RuleKind::Unperturbed, 1).unwrap()];
        let m = Model::new(1, states, rules).unwrap();
        assert!(matches!(m.kappa(), Err(Error::ZeroTotalRate)));
    }

    #[test]
    fn validation_errors() {
        assert!(StateSpace::new::<&str>(&[]).is_err());
        assert!(StateSpace::new(&["a", "a"]).is_err());
        assert!(Rule::new(vec![], vec![State(0)], -1.0, RuleKind::Unperturbed, 2).is_err());
        assert!(Rule::new(vec![Site::line(1)], vec![State(0)], 1.0, RuleKind::Unperturbed, 2).is_err());
        assert!(Rule::new(vec![], vec![State(3)], 1.0, RuleKind::Unperturbed, 2).is_err());
        let states = StateSpace::new(&["a", "b"]).unwrap();
        let r = Rule::from_fn(vec![Site::new(&[0, 1])], 2, 1.0, RuleKind::Unperturbed, |w| w[0]).unwrap();
        assert!(Model::new(1, states, vec![r]).is_err());
    }

    #[test]
    fn essential_inputs_and_copy_detection() {
        let copy = Rule::from_fn(vec![Site::ORIGIN, Site::line(1)], 3, 1.0, RuleKind::Unperturbed, |w| w[1])
            .unwrap();
        assert!(!copy.is_essential(0));
        assert!(copy.is_essential(1));
        assert_eq!(copy.copied_input(), Some(1));
        assert_eq!(copy.image(), &[State(0), State(1), State(2)]);
        let mut calls = 0;
        let out = copy.eval_with(|k| {
            calls += 1;
            assert_eq!(k, 1);
            State(2)
        });
        assert_eq!((out, calls), (State(2), 1));
    }

    #[test]
    fn unperturbed_restriction_and_merge() {
        let (s, mut r) = two_state_base();
        r.push(Rule::constant(State(0), 0.5, RuleKind::Unperturbed, 2).unwrap());
        r.push(Rule::constant(State(1), 0.1, RuleKind::Perturbative, 2).unwrap());
        let m = Model::new(1, s, r).unwrap();
        assert_eq!(m.unperturbed().unwrap().rules().len(), 3);
        let merged = m.merge_identical().unwrap();
        assert_eq!(merged.rules().len(), 3);
        assert!((merged.rule(0).rate() - 1.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn epsilon_kappa_monotone_in_perturbative_rates(
            rates in proptest::collection::vec(0.0f64..2.0, 1..4),
            bump in 0.0f64..1.0,
            which in 0usize..4,
            tables in proptest::collection::vec(proptest::collection::vec(0u8..3, 3), 4),
        ) {
            let states = StateSpace::new(&["a", "b", "c"]).unwrap();
            let mut base: Vec<Rule> = (0..3u8)
                .map(|v| Rule::constant(State(v), 1.0 + f64::from(v), RuleKind::Unperturbed, 3).unwrap())
                .collect();
            let pert = |rates: &[f64]| -> Vec<Rule> {
                rates.iter().zip(&tables).map(|(&r, t)| {
                    let t: Vec<State> = t.iter().map(|&s| State(s)).collect();
                    Rule::new(vec![Site::line(1)], t, r, RuleKind::Perturbative, 3).unwrap()
                }).collect()
            };
            let mut bumped = rates.clone();
            let w = which % bumped.len();
            bumped[w] += bump;
            base.extend(pert(&rates));
            let m1 = Model::new(1, states.clone(), base.clone()).unwrap();
            base.truncate(3);
            base.extend(pert(&bumped));
            let m2 = Model::new(1, states, base).unwrap();
            prop_assert!(m2.epsilon().unwrap() >= m1.epsilon().unwrap());
            // kappa is monotone in each perturbative rate: its derivative is
            // |A_j| * (total - weighted) / total^2 >= 0 since weighted <= total.
            prop_assert!(m2.kappa().unwrap() >= m1.kappa().unwrap() - 1e-15);
        }
    }
}
