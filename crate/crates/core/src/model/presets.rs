//! Ready-made configurations: the four model families with small
//! illustrative perturbations, and a noisier voter model for tail studies.
//!
//! The perturbations are illustrative choices; none is canonical.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    asymmetric_polling, independent_sites, noisy_voter, rn_ypr, with_perturbation, Model,
    RnYprRates, Rule, RuleKind, State,
};
use crate::error::Result;
use crate::site::Site;
use crate::theta::ThetaMap;

/// A named model with its frontier map.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub model: Model,
    pub theta: ThetaMap,
}

/// Rate of the voter and polling perturbations.
pub const VOTER_PERTURBATION_RATE: f64 = 0.05;
/// Rate of the copy-right perturbation of independent sites.
pub const INDEPENDENT_PERTURBATION_RATE: f64 = 0.1;
/// Rate of the copy-left perturbation of RN+YpR.
pub const RN_YPR_PERTURBATION_RATE: f64 = 0.1;

/// `+` when the two outer neighbors disagree, `-` otherwise.
pub fn xor_rule(rate: f64) -> Result<Rule> {
    Rule::from_fn(vec![Site::line(-1), Site::line(1)], 2, rate, RuleKind::Perturbative, |w| {
        if w[0] != w[1] { State(0) } else { State(1) }
    })
}

/// Copies the state at `offset`.
pub fn copy_rule(offset: Site, n_states: usize, rate: f64) -> Result<Rule> {
    Rule::from_fn(vec![offset], n_states, rate, RuleKind::Perturbative, |w| w[0])
}

pub fn independent() -> Result<Preset> {
    Ok(Preset {
        name: "independent",
        model: independent_sites(1, &[2.0, 1.0])?,
        theta: ThetaMap::FiniteFactor { radius: 0 },
    })
}

pub fn independent_perturbed() -> Result<Preset> {
    let base = independent()?;
    let extra = copy_rule(Site::line(1), 2, INDEPENDENT_PERTURBATION_RATE)?;
    Ok(Preset { name: "independent_perturbed", model: with_perturbation(&base.model, vec![extra])?, ..base })
}

/// Nearest-neighbor voter model, copy rate 1/2 per side, noise 1/2 per state.
pub fn noisy_voter_1d() -> Result<Preset> {
    Ok(Preset {
        name: "noisy_voter",
        model: noisy_voter(1, &["+", "-"], &[(Site::line(-1), 0.5), (Site::line(1), 0.5)], &[0.5, 0.5])?,
        theta: ThetaMap::Voter,
    })
}

pub fn noisy_voter_perturbed() -> Result<Preset> {
    let base = noisy_voter_1d()?;
    let extra = xor_rule(VOTER_PERTURBATION_RATE)?;
    Ok(Preset { name: "noisy_voter_perturbed", model: with_perturbation(&base.model, vec![extra])?, ..base })
}

/// Voter model whose noise is a fifth of the total rate, so that lineages
/// are long enough for tail fits.
pub fn voter_tail() -> Result<Preset> {
    Ok(Preset {
        name: "voter_tail",
        model: noisy_voter(1, &["+", "-"], &[(Site::line(-1), 2.0), (Site::line(1), 2.0)], &[0.5, 0.5])?,
        theta: ThetaMap::Voter,
    })
}

/// Polls `{-1, 1}` at rate 1 and `{1}` at rate 1/2, noise 1/2 per state.
pub fn polling() -> Result<Preset> {
    Ok(Preset {
        name: "polling",
        model: asymmetric_polling(
            1,
            &[(vec![Site::line(-1), Site::line(1)], 1.0), (vec![Site::line(1)], 0.5)],
            [0.5, 0.5],
        )?,
        theta: ThetaMap::Polling,
    })
}

pub fn polling_perturbed() -> Result<Preset> {
    let base = polling()?;
    let extra = xor_rule(VOTER_PERTURBATION_RATE)?;
    Ok(Preset { name: "polling_perturbed", model: with_perturbation(&base.model, vec![extra])?, ..base })
}

pub fn rn_ypr_default() -> Result<Preset> {
    Ok(Preset {
        name: "rn_ypr",
        model: rn_ypr(&RnYprRates::default())?,
        theta: ThetaMap::FiniteFactor { radius: 1 },
    })
}

pub fn rn_ypr_perturbed() -> Result<Preset> {
    let base = rn_ypr_default()?;
    let extra = copy_rule(Site::line(-1), 4, RN_YPR_PERTURBATION_RATE)?;
    Ok(Preset { name: "rn_ypr_perturbed", model: with_perturbation(&base.model, vec![extra])?, ..base })
}

/// The perturbed configurations, one per family.
pub fn perturbed() -> Result<Vec<Preset>> {
    Ok(vec![independent_perturbed()?, rn_ypr_perturbed()?, noisy_voter_perturbed()?, polling_perturbed()?])
}

/// Every preset, unperturbed ones first.
pub fn all() -> Result<Vec<Preset>> {
    let mut out = vec![independent()?, rn_ypr_default()?, noisy_voter_1d()?, polling()?, voter_tail()?];
    out.extend(perturbed()?);
    Ok(out)
}

pub fn by_name(name: &str) -> Result<Option<Preset>> {
    Ok(all()?.into_iter().find(|p| p.name == name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbations_are_small() {
        for p in perturbed().unwrap() {
            let k = p.model.kappa().unwrap();
            assert!(k <= 0.05, "{}: kappa {k}", p.name);
            assert!(p.model.epsilon().unwrap() < 0.2, "{}", p.name);
            p.theta.bind(&p.model).unwrap();
        }
    }

    #[test]
    fn voter_acceptance_rates() {
        let p = noisy_voter_perturbed().unwrap();
        assert!((p.model.total_rate() - 2.05).abs() < 1e-12);
        assert!((p.model.kappa().unwrap() - 0.1 / 2.05).abs() < 1e-15);
        let t = voter_tail().unwrap();
        let noise: f64 = t.model.rules().iter().filter(|r| r.offsets().is_empty()).map(|r| r.rate()).sum();
        assert!(noise >= 0.2 * t.model.total_rate() - 1e-12);
    }
}
