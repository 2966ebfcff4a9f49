//! Parallel sample batches and their CSV form.

use std::io::Write;

use cftp_core::rng::derive;
use cftp_core::oracle;
use cftp_core::{sample_site, Caps, Model, PatchConfig, Readout, SampleResult, Site, State, Theta};
use rayon::prelude::*;

/// Failure rate above which a batch counts as failed.
pub const FAILURE_THRESHOLD: f64 = 1e-3;

pub const CSV_HEADER: [&str; 7] = ["seed", "value", "t_star", "l_star", "points", "tree_nodes", "failed"];

#[derive(Clone, Copy, Debug)]
pub struct BatchSpec {
    pub site: Site,
    pub n: u64,
    pub base_seed: u64,
    pub caps: Caps,
    pub readout: Readout,
}

impl BatchSpec {
    /// Seed of sample `k`; independent of scheduling.
    pub fn seed(&self, k: u64) -> u64 {
        derive(self.base_seed, k)
    }
}

/// Runs every sample. Results come back in seed-schedule order.
pub fn run(model: &Model, theta: &Theta, spec: &BatchSpec) -> Vec<SampleResult> {
    (0..spec.n)
        .into_par_iter()
        .map(|k| sample_site(model, theta, spec.site, spec.seed(k), spec.caps, spec.readout))
        .collect()
}

/// Like [`run`] but stops at the first failed sample, returning it.
pub fn run_strict(model: &Model, theta: &Theta, spec: &BatchSpec) -> Result<Vec<SampleResult>, SampleResult> {
    (0..spec.n)
        .into_par_iter()
        .map(|k| {
            let r = sample_site(model, theta, spec.site, spec.seed(k), spec.caps, spec.readout);
            if r.failed() {
                Err(r)
            } else {
                Ok(r)
            }
        })
        .collect()
}

pub fn failure_rate(results: &[SampleResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.failed()).count() as f64 / results.len() as f64
}

/// Failed rows keep their seed with an empty value.
pub fn write_csv<W: Write>(out: W, model: &Model, results: &[SampleResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        let value = r.value.map(|v| model.states().label(v)).unwrap_or("");
        let (t_star, l_star) = if r.failed() { (String::new(), String::new()) } else { (r.t_star.to_string(), r.l_star.to_string()) };
        w.write_record([
            r.seed.to_string().as_str(),
            value,
            &t_star,
            &l_star,
            &r.points.to_string(),
            &r.tree_nodes.to_string(),
            if r.failed() { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical marginal over successful samples.
pub fn marginal(model: &Model, results: &[SampleResult]) -> Vec<f64> {
    let values: Vec<_> = results.iter().filter_map(|r| r.value).collect();
    oracle::histogram(&values, model.n_states())
}

/// Site-0 values of `n` independent forward runs on the box of `radius`,
/// each from a uniform random start.
pub fn forward_values(model: &Model, radius: i32, burn_in: f64, n: u64, seed: u64) -> cftp_core::Result<Vec<State>> {
    (0..n)
        .into_par_iter()
        .map(|k| {
            let xi = PatchConfig::uniform(derive(seed, 2 * k), model.n_states());
            let snap = oracle::forward_simulate(model, radius, burn_in, &xi, derive(seed, 2 * k + 1))?;
            Ok(snap.get(Site::ORIGIN).expect("the origin lies in the box"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cftp_core::model::presets;

    #[test]
    fn order_and_values_do_not_depend_on_threads() {
        let p = presets::polling_perturbed().unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        let spec = BatchSpec { site: Site::ORIGIN, n: 200, base_seed: 3, caps: Caps::default(), readout: Readout::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run(&p.model, &th, &spec));
        let two = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run(&p.model, &th, &spec));
        assert_eq!(one, two);
        for (k, r) in one.iter().enumerate() {
            assert_eq!(r.seed, spec.seed(k as u64));
        }
    }

    #[test]
    fn csv_rows_match_results() {
        let p = presets::noisy_voter_perturbed().unwrap();
        let th = p.theta.bind(&p.model).unwrap();
        let tiny = Caps { nodes: 3, depth: 3, points: 2, layers: 2 };
        let spec = BatchSpec { site: Site::ORIGIN, n: 50, base_seed: 9, caps: tiny, readout: Readout::default() };
        let res = run(&p.model, &th, &spec);
        assert!(res.iter().any(|r| r.failed()) && res.iter().any(|r| !r.failed()));
        let mut buf = Vec::new();
        write_csv(&mut buf, &p.model, &res).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        for (row, r) in rd.records().zip(&res) {
            let row = row.unwrap();
            assert_eq!(row[0].parse::<u64>().unwrap(), r.seed);
            assert_eq!(&row[6] == "1", r.failed());
            if let Some(v) = r.value {
                assert_eq!(&row[1], p.model.states().label(v));
                assert_eq!(row[2].parse::<f64>().unwrap().to_bits(), r.t_star.to_bits());
            } else {
                assert_eq!(&row[1], "");
            }
        }
        assert!(run_strict(&p.model, &th, &spec).is_err());
    }
}
