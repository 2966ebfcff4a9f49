//! Monte Carlo estimators for the quantities that control the sampler:
//! expected ambiguity mass, exponential moments of `T`, `L` and `H`, and
//! empirical checks of the resulting bounds on `T*` and `L*`.
//!
//! Replicate `k` of an estimator with base seed `s` uses the realization
//! `derive(s, k)`. Per-replicate functions are exposed so that callers can
//! evaluate replicates in parallel and aggregate afterwards.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::assembler::{run_sample, Caps};
use crate::error::{Error, Result};
use crate::event::{Event, SpaceTime};
use crate::exploration::run_exploration;
use crate::field::EventField;
use crate::locking::explore_with_locking;
use crate::model::Model;
use crate::readout::Readout;
use crate::rng::derive;
use crate::site::Site;
use crate::theta::Theta;

/// Censoring rate above which a report is flagged as biased.
pub const BIAS_THRESHOLD: f64 = 1e-3;

/// Default grid of exponents.
pub const LAMBDA_GRID: [f64; 7] = [0.0, 0.05, -0.05, 0.1, -0.1, 0.2, -0.2];

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub quantity: String,
    pub estimate: f64,
    pub se: f64,
    /// Replicates used (censored ones excluded).
    pub n: usize,
    pub censored: usize,
    pub censored_rate: f64,
    pub biased: bool,
    pub lambda: Option<f64>,
    pub q: Option<usize>,
}

/// Mean and standard error of `values`, `None` entries counted as censored.
pub fn aggregate(quantity: &str, values: &[Option<f64>]) -> EstimateReport {
    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    let n = kept.len();
    let (mean, var) = mean_var(&kept);
    let censored = values.len() - n;
    let censored_rate = if values.is_empty() { 0.0 } else { censored as f64 / values.len() as f64 };
    EstimateReport {
        quantity: quantity.into(),
        estimate: mean,
        se: if n > 1 { libm::sqrt(var / n as f64) } else { 0.0 },
        n,
        censored,
        censored_rate,
        biased: censored_rate > BIAS_THRESHOLD,
        lambda: None,
        q: None,
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let (mx, _) = mean_var(xs);
    let (my, _) = mean_var(ys);
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1) as f64
}

/// What one locked exploration from the origin contributes to the
/// estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeSummary {
    /// `T`, relative to the origin time 0.
    pub t: f64,
    /// `L`.
    pub width: i64,
    pub nodes: usize,
    /// Ambiguous events, sites relative to the origin.
    pub h: Vec<Event>,
}

/// Locked exploration from `(0, 0)` on replicate `k`; `None` on budget
/// failure.
pub fn outcome_replicate(model: &Model, theta: &Theta, seed: u64, k: u64, caps: Caps) -> Result<Option<OutcomeSummary>> {
    let mut field = EventField::new(model, derive(seed, k));
    match explore_with_locking(model, theta, &mut field, SpaceTime::ORIGIN, caps.lock()) {
        Ok(o) => Ok(Some(OutcomeSummary { t: o.t, width: o.width, nodes: o.work.nodes, h: o.h })),
        Err(e) if e.is_budget() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Functionals whose expectations enter the bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Functional {
    /// `exp(lambda T)`.
    T,
    /// `sum_{(x,i,t) in H} |A_i| exp(lambda t)`.
    HTime,
    /// `exp(lambda L)`.
    L,
    /// `sum_{(x,i,t) in H} sum_{z in A_i} exp(lambda (x_q + z_q))`.
    HSpace(usize),
}

impl Functional {
    pub fn name(&self) -> String {
        match self {
            Functional::T => "lambda_T".into(),
            Functional::HTime => "lambda_H_time".into(),
            Functional::L => "lambda_L".into(),
            Functional::HSpace(q) => format!("lambda_H_space[{q}]"),
        }
    }

    pub fn eval(&self, model: &Model, o: &OutcomeSummary, lambda: f64) -> f64 {
        match *self {
            Functional::T => libm::exp(lambda * o.t),
            Functional::HTime => o
                .h
                .iter()
                .map(|e| model.rule(e.rule).offsets().len() as f64 * libm::exp(lambda * e.time))
                .fold(0.0, |a, b| a + b),
            Functional::L => libm::exp(lambda * o.width as f64),
            Functional::HSpace(q) => o
                .h
                .iter()
                .flat_map(|e| {
                    model
                        .rule(e.rule)
                        .offsets()
                        .iter()
                        .map(move |z| libm::exp(lambda * f64::from(e.site.coord(q) + z.coord(q))))
                })
                .fold(0.0, |a, b| a + b),
        }
    }

    fn check(&self, model: &Model, lambda: f64) -> Result<()> {
        if !lambda.is_finite() {
            return Err(Error::InvalidQuery(format!("lambda {lambda} is not finite")));
        }
        match *self {
            Functional::T | Functional::HTime if lambda > 0.0 => {
                Err(Error::InvalidQuery(format!("time functionals need lambda <= 0, got {lambda}")))
            }
            Functional::HSpace(q) if q >= model.dim() => {
                Err(Error::InvalidQuery(format!("coordinate {q} outside dimension {}", model.dim())))
            }
            _ => Ok(()),
        }
    }
}

fn outcomes(model: &Model, theta: &Theta, n: usize, seed: u64, caps: Caps) -> Result<Vec<Option<OutcomeSummary>>> {
    if n == 0 {
        return Err(Error::InvalidQuery("need at least one replicate".into()));
    }
    (0..n as u64).map(|k| outcome_replicate(model, theta, seed, k, caps)).collect()
}

/// Aggregates `sum_{H} |A_i|` over precomputed outcomes.
pub fn g_from(model: &Model, outs: &[Option<OutcomeSummary>]) -> EstimateReport {
    let vals: Vec<Option<f64>> = outs
        .iter()
        .map(|o| o.as_ref().map(|o| o.h.iter().map(|e| model.rule(e.rule).offsets().len() as f64).fold(0.0, |a, b| a + b)))
        .collect();
    aggregate("g", &vals)
}

/// Expected ambiguity mass `g = E(sum_{(x,i,t) in H} |A_i|)`.
pub fn estimate_g(model: &Model, theta: &Theta, n: usize, seed: u64, caps: Caps) -> Result<EstimateReport> {
    Ok(g_from(model, &outcomes(model, theta, n, seed, caps)?))
}

pub fn lambda_from(
    model: &Model,
    outs: &[Option<OutcomeSummary>],
    which: Functional,
    lambda: f64,
) -> Result<EstimateReport> {
    which.check(model, lambda)?;
    let vals: Vec<Option<f64>> = outs.iter().map(|o| o.as_ref().map(|o| which.eval(model, o, lambda))).collect();
    let mut r = aggregate(&which.name(), &vals);
    r.lambda = Some(lambda);
    if let Functional::HSpace(q) = which {
        r.q = Some(q);
    }
    Ok(r)
}

pub fn estimate_lambda(
    model: &Model,
    theta: &Theta,
    which: Functional,
    lambda: f64,
    n: usize,
    seed: u64,
    caps: Caps,
) -> Result<EstimateReport> {
    which.check(model, lambda)?;
    lambda_from(model, &outcomes(model, theta, n, seed, caps)?, which, lambda)
}

/// One full sample plus the root's locked outcome, for bound checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSummary {
    pub root: OutcomeSummary,
    pub t_star: f64,
    pub l_plus: i64,
    pub l_minus: i64,
}

pub fn sample_replicate(
    model: &Model,
    theta: &Theta,
    seed: u64,
    k: u64,
    caps: Caps,
    readout: Readout,
) -> Result<Option<SampleSummary>> {
    let mut field = EventField::new(model, derive(seed, k));
    match run_sample(model, theta, &mut field, Site::ORIGIN, caps, readout) {
        Ok((c, _)) => {
            let o = &c.points[0].outcome;
            Ok(Some(SampleSummary {
                root: OutcomeSummary { t: o.t, width: o.width, nodes: o.work.nodes, h: o.h.clone() },
                t_star: c.t_star,
                l_plus: c.l_plus,
                l_minus: c.l_minus,
            }))
        }
        Err(e) if e.is_budget() => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The hypothesis `Lambda_H < 1` does not hold for the estimates.
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    /// Empirical left-hand side and its standard error.
    pub lhs: f64,
    pub lhs_se: f64,
    /// Estimated bound and its delta-method standard error.
    pub bound: f64,
    pub bound_se: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub lambda: f64,
    pub n: usize,
    pub censored: usize,
    pub censored_rate: f64,
    pub biased: bool,
    pub checks: Vec<BoundCheck>,
}

/// `lhs <= a / (1 - b)` with all three estimated on the same replicates.
fn ratio_check(name: String, lhs: &[f64], a: &[f64], bs: &[Vec<f64>]) -> BoundCheck {
    let n = lhs.len().max(1) as f64;
    let (ml, vl) = mean_var(lhs);
    let (ma, va) = mean_var(a);
    // The supremum over coordinates: take the worst one.
    let (b, mb) = bs
        .iter()
        .map(|b| (b, mean_var(b).0))
        .fold((&bs[0], f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let lhs_se = libm::sqrt(vl / n);
    if !(mb < 1.0) || lhs.len() < 2 {
        return BoundCheck { name, lhs: ml, lhs_se, bound: f64::INFINITY, bound_se: 0.0, verdict: Verdict::NotApplicable };
    }
    let (_, vb) = mean_var(b);
    let bound = ma / (1.0 - mb);
    let da = 1.0 / (1.0 - mb);
    let db = ma / ((1.0 - mb) * (1.0 - mb));
    let var = da * da * va + db * db * vb + 2.0 * da * db * covariance(a, b);
    let bound_se = libm::sqrt(var.max(0.0) / n);
    let margin = 3.0 * libm::sqrt(lhs_se * lhs_se + bound_se * bound_se);
    let verdict = if ml <= bound + margin { Verdict::Pass } else { Verdict::Fail };
    BoundCheck { name, lhs: ml, lhs_se, bound, bound_se, verdict }
}

/// Compares the empirical exponential moments of `T*` and `L*_+-` with the
/// bounds built from the locked outcome at the root, on shared replicates.
/// `lambda <= 0` is the time exponent; the space checks use `|lambda|`.
pub fn bounds_from(model: &Model, samples: &[Option<SampleSummary>], lambda: f64) -> Result<BoundsReport> {
    if !(lambda <= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidQuery(format!("time exponent must be <= 0, got {lambda}")));
    }
    let kept: Vec<&SampleSummary> = samples.iter().flatten().collect();
    let censored = samples.len() - kept.len();
    let censored_rate = if samples.is_empty() { 0.0 } else { censored as f64 / samples.len() as f64 };
    let mu = -lambda;
    let col = |f: &dyn Fn(&SampleSummary) -> f64| kept.iter().map(|s| f(s)).collect::<Vec<f64>>();

    let mut checks = vec![ratio_check(
        "time".into(),
        &col(&|s| libm::exp(lambda * s.t_star)),
        &col(&|s| Functional::T.eval(model, &s.root, lambda)),
        &[col(&|s| Functional::HTime.eval(model, &s.root, lambda))],
    )];
    let lam_l = col(&|s| Functional::L.eval(model, &s.root, mu));
    let h_plus: Vec<Vec<f64>> =
        (0..model.dim()).map(|q| col(&|s| Functional::HSpace(q).eval(model, &s.root, mu))).collect();
    let h_minus: Vec<Vec<f64>> =
        (0..model.dim()).map(|q| col(&|s| Functional::HSpace(q).eval(model, &s.root, -mu))).collect();
    checks.push(ratio_check("space_plus".into(), &col(&|s| libm::exp(mu * s.l_plus as f64)), &lam_l, &h_plus));
    checks.push(ratio_check("space_minus".into(), &col(&|s| libm::exp(-mu * s.l_minus as f64)), &lam_l, &h_minus));
    Ok(BoundsReport {
        lambda,
        n: kept.len(),
        censored,
        censored_rate,
        biased: censored_rate > BIAS_THRESHOLD,
        checks,
    })
}

pub fn check_bounds(
    model: &Model,
    theta: &Theta,
    lambda: f64,
    n: usize,
    seed: u64,
    caps: Caps,
    readout: Readout,
) -> Result<BoundsReport> {
    let samples = (0..n as u64)
        .map(|k| sample_replicate(model, theta, seed, k, caps, readout))
        .collect::<Result<Vec<_>>>()?;
    bounds_from(model, &samples, lambda)
}

/// Quantities with an empirical survival curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailQuantity {
    /// `|X^u|` of the unperturbed exploration.
    ExplorationSize,
    TreeNodes,
    AmbPoints,
    /// `-T*`.
    NegTStar,
}

impl TailQuantity {
    pub fn name(&self) -> &'static str {
        match self {
            TailQuantity::ExplorationSize => "exploration_size",
            TailQuantity::TreeNodes => "tree_nodes",
            TailQuantity::AmbPoints => "amb_points",
            TailQuantity::NegTStar => "neg_t_star",
        }
    }
}

pub const TAIL_MIN_REPLICATES: usize = 1000;

/// One replicate of a tail quantity; `None` on budget failure. For
/// `ExplorationSize`, `model` and `theta` must be the unperturbed ones.
pub fn tail_replicate(
    model: &Model,
    theta: &Theta,
    quantity: TailQuantity,
    seed: u64,
    k: u64,
    caps: Caps,
) -> Result<Option<f64>> {
    let mut field = EventField::new(model, derive(seed, k));
    let r = match quantity {
        TailQuantity::ExplorationSize => {
            run_exploration(theta, &mut field, SpaceTime::ORIGIN, caps.nodes).map(|t| t.len() as f64)
        }
        TailQuantity::TreeNodes => explore_with_locking(model, theta, &mut field, SpaceTime::ORIGIN, caps.lock())
            .map(|o| o.work.nodes as f64),
        TailQuantity::AmbPoints | TailQuantity::NegTStar => {
            crate::assembler::build_amb_closure(model, theta, &mut field, Site::ORIGIN, caps).map(|c| {
                if quantity == TailQuantity::AmbPoints {
                    c.points.len() as f64
                } else {
                    -c.t_star
                }
            })
        }
    };
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_budget() => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailCurve {
    pub quantity: String,
    pub n: usize,
    pub censored: usize,
    /// `(threshold, P(quantity >= threshold))`.
    pub points: Vec<(f64, f64)>,
}

/// Survival function at thresholds `1, 2, ..., 50` and then decades.
pub fn tail_from(quantity: TailQuantity, values: &[Option<f64>]) -> Result<TailCurve> {
    if values.len() < TAIL_MIN_REPLICATES {
        return Err(Error::InvalidQuery(format!(
            "tail curves need at least {TAIL_MIN_REPLICATES} replicates, got {}",
            values.len()
        )));
    }
    let mut kept: Vec<f64> = values.iter().flatten().copied().collect();
    kept.sort_by(f64::total_cmp);
    let n = kept.len();
    let max = kept.last().copied().unwrap_or(0.0);
    let mut thresholds: Vec<f64> = (1..=50).map(f64::from).take_while(|&t| t <= max.max(1.0)).collect();
    let mut decade = 100.0;
    while decade <= max {
        thresholds.push(decade);
        decade *= 10.0;
    }
    let points = thresholds
        .into_iter()
        .map(|t| {
            let below = kept.partition_point(|&v| v < t);
            (t, (n - below) as f64 / n.max(1) as f64)
        })
        .collect();
    Ok(TailCurve { quantity: quantity.name().into(), n, censored: values.len() - n, points })
}

pub fn tail_curve(
    model: &Model,
    theta: &Theta,
    quantity: TailQuantity,
    n: usize,
    seed: u64,
    caps: Caps,
) -> Result<TailCurve> {
    if n < TAIL_MIN_REPLICATES {
        return Err(Error::InvalidQuery(format!("tail curves need at least {TAIL_MIN_REPLICATES} replicates")));
    }
    let (m, th);
    let (model, theta) = if quantity == TailQuantity::ExplorationSize && model.has_perturbation() {
        m = model.unperturbed()?;
        th = theta.map().bind(&m)?;
        (&m, &th)
    } else {
        (model, theta)
    };
    let values = (0..n as u64)
        .map(|k| tail_replicate(model, theta, quantity, seed, k, caps))
        .collect::<Result<Vec<_>>>()?;
    tail_from(quantity, &values)
}

/// Least-squares line through `(x, ln y)` for points with `lo <= x <= hi`
/// and `y > 0`: `(slope, intercept, r_squared, points used)`.
pub fn log_linear_fit(points: &[(f64, f64)], lo: f64, hi: f64) -> (f64, f64, f64, usize) {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x >= lo && x <= hi && y > 0.0)
        .map(|&(x, y)| (x, libm::log(y)))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN, pts.len());
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2, pts.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::theta::ThetaMap;

    #[test]
    fn unperturbed_g_is_exactly_zero() {
        let p = presets::noisy_voter_1d().unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        let r = estimate_g(&p.model, &th, 200, 1, Caps::default()).unwrap();
        assert_eq!((r.estimate, r.se, r.n), (0.0, 0.0, 200));
        let hs = estimate_lambda(&p.model, &th, Functional::HSpace(0), 0.1, 200, 1, Caps::default()).unwrap();
        assert_eq!(hs.estimate, 0.0);
    }

    #[test]
    fn lambda_zero_identities() {
        let p = presets::noisy_voter_perturbed().unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        let outs = outcomes(&p.model, &th, 500, 2, Caps::default()).unwrap();
        assert_eq!(lambda_from(&p.model, &outs, Functional::T, 0.0).unwrap().estimate, 1.0);
        let g = g_from(&p.model, &outs);
        let ht = lambda_from(&p.model, &outs, Functional::HTime, 0.0).unwrap();
        assert_eq!(g.estimate, ht.estimate);
        assert!(lambda_from(&p.model, &outs, Functional::L, 0.0).unwrap().estimate >= 1.0);
        assert!(lambda_from(&p.model, &outs, Functional::T, 0.1).is_err());
    }

    #[test]
    fn estimators_are_deterministic() {
        let p = presets::polling_perturbed().unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        let a = estimate_g(&p.model, &th, 300, 9, Caps::default()).unwrap();
        let b = estimate_g(&p.model, &th, 300, 9, Caps::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounds_degenerate_without_perturbation() {
        let p = presets::noisy_voter_1d().unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        let r = check_bounds(&p.model, &th, -0.1, 300, 4, Caps::default(), Readout::default()).unwrap();
        let time = &r.checks[0];
        assert_eq!(time.lhs, time.bound);
        assert_eq!(time.verdict, Verdict::Pass);
    }

    #[test]
    fn not_applicable_when_mass_too_large() {
        let base = presets::noisy_voter_1d().unwrap();
        let m = crate::model::with_perturbation(&base.model, vec![presets::xor_rule(3.0).unwrap()]).unwrap();
        let th = ThetaMap::Voter.bind(&m).unwrap();
        let caps = Caps { nodes: 2000, depth: 1000, points: 200, layers: 50 };
        let r = check_bounds(&m, &th, -0.1, 200, 5, caps, Readout::default()).unwrap();
        assert_eq!(r.checks[0].verdict, Verdict::NotApplicable);
    }

    #[test]
    fn tail_of_constant_quantity_is_a_step() {
        let p = presets::independent().unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        let c = tail_curve(&p.model, &th, TailQuantity::ExplorationSize, 1000, 3, Caps::default()).unwrap();
        assert_eq!(c.points, vec![(1.0, 1.0)]);
        assert!(tail_curve(&p.model, &th, TailQuantity::ExplorationSize, 999, 3, Caps::default()).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (1..=20).map(|l| (f64::from(l), libm::exp(-0.3 * f64::from(l) + 0.1))).collect();
        let (s, i, r2, n) = log_linear_fit(&pts, 1.0, 20.0);
        assert!((s + 0.3).abs() < 1e-12 && (i - 0.1).abs() < 1e-12 && r2 > 0.999_999 && n == 20);
    }
}
