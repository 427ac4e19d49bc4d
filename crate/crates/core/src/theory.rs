//! Analytical side of synchronized cloning.
//!
//! A group of PS servers that always receives every clone of a request at the
//! same instant, and drops the losers at the instant the first clone is done,
//! holds the same set of requests on every member. Each request then leaves
//! after `min_j X_j / capacity_j` of "own" service at a shared rate `1/n`,
//! which is exactly a single PS server whose service law is that minimum.
//! With Poisson arrivals the group is an M/G/1-PS queue, so its mean response
//! is `E[S] / (1 - λ E[S])` whatever the shape of `S`.

use serde::{Deserialize, Serialize};

use crate::dispatch::{Chooser, DelayConfig, Strategy};
use crate::dist::{min_of, Distribution};
use crate::error::{Error, TheoryError};
use crate::sim::{simulate, DelayHandling, ServerSpec, SimConfig, SimOptions, WorkCorrelation};
use crate::stats::{mean_ci, CiSummary, ReplicationResult};

/// Law of `min_i X_i / capacity_i` for independent `X_i ~ laws[i]`.
pub fn equivalent_server(laws: &[Distribution], capacities: &[f64]) -> Result<Distribution, TheoryError> {
    if laws.len() != capacities.len() {
        return Err(TheoryError::LengthMismatch {
            laws: laws.len(),
            capacities: capacities.len(),
        });
    }
    let scaled = laws
        .iter()
        .zip(capacities)
        .map(|(law, cap)| law.scale(1.0 / cap))
        .collect::<Result<Vec<_>, _>>()?;
    if scaled.len() == 1 {
        return Ok(scaled.into_iter().next().unwrap());
    }
    Ok(min_of(&scaled)?)
}

/// Mean response of an M/G/1-PS queue.
pub fn ps_mean_response(law: &Distribution, arrival_rate: f64) -> Result<f64, TheoryError> {
    let mean = law.mean()?;
    let load = arrival_rate * mean;
    if load >= 1.0 {
        return Err(TheoryError::Unstable {
            load,
            rate: arrival_rate,
            mean,
        });
    }
    Ok(mean / (1.0 - load))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub servers: Vec<ServerSpec>,
    /// Arrival rate per server (1/s).
    pub arrival_rate: f64,
    /// Cloning factors to consider; divisors of N when empty.
    #[serde(default)]
    pub candidates: Vec<usize>,
}

impl TheoryInputs {
    pub fn new(servers: Vec<ServerSpec>, arrival_rate: f64) -> Self {
        TheoryInputs {
            servers,
            arrival_rate,
            candidates: Vec::new(),
        }
    }

    pub fn homogeneous(n: usize, law: Distribution, arrival_rate: f64) -> Self {
        Self::new(vec![ServerSpec::new(1.0, law); n], arrival_rate)
    }

    fn validate(&self) -> Result<(), TheoryError> {
        if self.servers.is_empty() {
            return Err(TheoryError::InvalidInput("cluster needs at least one server".into()));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(TheoryError::InvalidInput(format!(
                "arrival rate {} must be positive",
                self.arrival_rate
            )));
        }
        Ok(())
    }

    pub fn candidate_factors(&self) -> Vec<usize> {
        if self.candidates.is_empty() {
            divisors(self.servers.len())
        } else {
            self.candidates.clone()
        }
    }
}

pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// Equivalent service law of each clone-to-all group of size `clone_factor`.
pub fn group_laws(servers: &[ServerSpec], clone_factor: usize) -> Result<Vec<Distribution>, TheoryError> {
    if clone_factor == 0 || !servers.len().is_multiple_of(clone_factor) {
        return Err(TheoryError::InvalidInput(format!(
            "clone factor {clone_factor} does not divide {}",
            servers.len()
        )));
    }
    servers
        .chunks(clone_factor)
        .map(|g| {
            let laws: Vec<Distribution> = g.iter().map(|s| s.service.clone()).collect();
            let caps: Vec<f64> = g.iter().map(|s| s.capacity).collect();
            equivalent_server(&laws, &caps)
        })
        .collect()
}

/// Offered load on the busiest equivalent group.
pub fn clone_to_all_load(inputs: &TheoryInputs, clone_factor: usize) -> Result<f64, TheoryError> {
    let rate = clone_factor as f64 * inputs.arrival_rate;
    let mut worst: f64 = 0.0;
    for law in group_laws(&inputs.servers, clone_factor)? {
        worst = worst.max(rate * law.mean()?);
    }
    Ok(worst)
}

/// Mean response under clone-to-all with groups of `clone_factor` servers
/// chosen uniformly at random. Each group sees Poisson arrivals at
/// `clone_factor · λ`.
pub fn clone_to_all_mean(inputs: &TheoryInputs, clone_factor: usize) -> Result<f64, TheoryError> {
    inputs.validate()?;
    let rate = clone_factor as f64 * inputs.arrival_rate;
    let laws = group_laws(&inputs.servers, clone_factor)?;
    let mut total = 0.0;
    for law in &laws {
        total += ps_mean_response(law, rate)?;
    }
    Ok(total / laws.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalClone {
    pub clone_factor: usize,
    pub mean_response: f64,
    /// `(c_f, E[T])` for every candidate; `None` when unstable.
    pub curve: Vec<(usize, Option<f64>)>,
}

pub fn optimal_clone_factor(inputs: &TheoryInputs) -> Result<OptimalClone, TheoryError> {
    inputs.validate()?;
    let mut curve = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut min_load = f64::INFINITY;
    for cf in inputs.candidate_factors() {
        match clone_to_all_mean(inputs, cf) {
            Ok(et) => {
                if best.is_none_or(|(_, b)| et < b) {
                    best = Some((cf, et));
                }
                curve.push((cf, Some(et)));
            }
            Err(TheoryError::Unstable { .. }) => {
                min_load = min_load.min(clone_to_all_load(inputs, cf)?);
                curve.push((cf, None));
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((clone_factor, mean_response)) => Ok(OptimalClone {
            clone_factor,
            mean_response,
            curve,
        }),
        None => Err(TheoryError::NoStableCandidate { min_load }),
    }
}

/// Simulation budget for quantities that have no closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub requests: usize,
    pub replications: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            requests: 50_000,
            replications: 5,
            warmup_fraction: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum CodesignEstimate {
    Analytic { mean_response: f64 },
    /// No closed form is available; the value comes from simulating the
    /// clustered system.
    SimulationCalibrated { ci: CiSummary },
}

impl CodesignEstimate {
    pub fn value(&self) -> f64 {
        match self {
            CodesignEstimate::Analytic { mean_response } => *mean_response,
            CodesignEstimate::SimulationCalibrated { ci } => ci.estimate,
        }
    }
}

/// Mean response of the clustered co-design with clusters of `d` servers.
/// Random cluster choice thins the Poisson stream, so every cluster is an
/// independent equivalent server. Shortest-cluster routing has no closed
/// form and is estimated by simulation.
pub fn codesign_theory(
    inputs: &TheoryInputs,
    policy: Chooser,
    d: usize,
    calibration: &Calibration,
) -> Result<CodesignEstimate, Error> {
    match policy {
        Chooser::Random => Ok(CodesignEstimate::Analytic {
            mean_response: clone_to_all_mean(inputs, d)?,
        }),
        Chooser::Jsq => {
            // the JSQ system is no worse than random routing, so random
            // stability is a sufficient precondition
            let load = clone_to_all_load(inputs, d)?;
            if load >= 1.0 {
                let mean = group_laws(&inputs.servers, d)?[0].mean().map_err(TheoryError::from)?;
                return Err(TheoryError::Unstable {
                    load,
                    rate: d as f64 * inputs.arrival_rate,
                    mean,
                }
                .into());
            }
            let n = inputs.servers.len();
            let cfg = SimConfig {
                servers: inputs.servers.clone(),
                arrival_rate: inputs.arrival_rate * n as f64,
                strategy: Strategy::CloneToAllGroups {
                    clone_factor: d,
                    chooser: Chooser::Jsq,
                },
                delays: DelayConfig::synchronized(),
                requests: calibration.requests,
                work: WorkCorrelation::Independent,
                delay_handling: DelayHandling::Apply,
            };
            let warmup = (calibration.warmup_fraction * calibration.requests as f64) as usize;
            let mut means = Vec::with_capacity(calibration.replications);
            for rep in 0..calibration.replications as u64 {
                let out = simulate(&cfg, calibration.seed, rep, &SimOptions::default())?;
                means.push(ReplicationResult::from_responses(rep, calibration.seed, &out.responses, warmup)?.mean);
            }
            Ok(CodesignEstimate::SimulationCalibrated {
                ci: mean_ci(&means, 0.95)?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(r: f64) -> Distribution {
        Distribution::exponential(r).unwrap()
    }

    #[test]
    fn equivalent_server_examples() {
        assert_eq!(equivalent_server(&[exp(1.0)], &[1.0]).unwrap(), exp(1.0));

        let three = equivalent_server(&[exp(1.5), exp(1.5), exp(1.5)], &[1.0; 3]).unwrap();
        for i in 0..40 {
            let t = i as f64 * 0.1;
            assert!((three.cdf(t) - exp(4.5).cdf(t)).abs() < 1e-12);
        }

        // exp(1) at capacity 1 and U(0,2) at capacity 2 (i.e. U(0,1))
        let eq = equivalent_server(&[exp(1.0), Distribution::uniform(0.0, 2.0).unwrap()], &[1.0, 2.0]).unwrap();
        for i in 0..30 {
            let t = i as f64 * 0.05;
            let expect = 1.0 - (-t).exp() * (1.0 - (2.0 * t).min(2.0) / 2.0);
            assert!((eq.cdf(t) - expect).abs() < 1e-12, "t={t}");
        }

        assert!(matches!(
            equivalent_server(&[exp(1.0)], &[1.0, 2.0]),
            Err(TheoryError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ps_mean_examples() {
        assert!((ps_mean_response(&exp(1.0), 0.5).unwrap() - 2.0).abs() < 1e-15);
        let det = Distribution::deterministic(1.0).unwrap();
        assert!((ps_mean_response(&det, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(ps_mean_response(&exp(1.0), 1.0), Err(TheoryError::Unstable { .. })));
    }

    #[test]
    fn ps_mean_is_mm1_for_exponential() {
        for (lam, mu) in [(0.1, 1.0), (0.5, 2.0), (2.9, 3.0), (0.01, 0.02)] {
            let v = ps_mean_response(&exp(mu), lam).unwrap();
            let expect = 1.0 / (mu - lam);
            assert!((v - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn exponential_service_clones_to_everyone() {
        let n = 12;
        for lam in [0.05, 0.2, 0.5, 0.8] {
            let inputs = TheoryInputs::homogeneous(n, exp(1.0), lam);
            let opt = optimal_clone_factor(&inputs).unwrap();
            assert_eq!(opt.clone_factor, n);
            for (cf, et) in &opt.curve {
                let expect = 1.0 / (*cf as f64 * (1.0 - lam));
                assert!((et.unwrap() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_service_never_clones() {
        let det = Distribution::deterministic(1.0).unwrap();
        for lam in [0.01, 0.05, 0.08] {
            let inputs = TheoryInputs::homogeneous(12, det.clone(), lam);
            let opt = optimal_clone_factor(&inputs).unwrap();
            assert_eq!(opt.clone_factor, 1);
            assert!((opt.mean_response - 1.0 / (1.0 - lam)).abs() < 1e-12);
        }
    }

    #[test]
    fn hyperexponential_staircase_is_non_increasing() {
        // brute force over every divisor is itself the oracle here
        let h = Distribution::hyperexponential(vec![0.9, 0.1], vec![1.8, 0.18]).unwrap();
        let mut prev = usize::MAX;
        let mut lam = 0.05;
        while lam <= 0.65 + 1e-9 {
            let opt = optimal_clone_factor(&TheoryInputs::homogeneous(12, h.clone(), lam)).unwrap();
            let brute = opt
                .curve
                .iter()
                .filter_map(|(cf, et)| et.map(|v| (*cf, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert_eq!(brute.0, opt.clone_factor);
            assert!(opt.clone_factor <= prev, "λ={lam}: {} > {prev}", opt.clone_factor);
            prev = opt.clone_factor;
            lam += 0.01;
        }
    }

    #[test]
    fn increasing_hazard_work_gives_a_falling_staircase() {
        let w = Distribution::weibull(1.4, 1.0971849814565748).unwrap();
        assert!((w.mean().unwrap() - 1.0).abs() < 1e-9);
        let picks: Vec<usize> = [0.3, 0.38, 0.5, 0.52, 0.62, 0.7]
            .iter()
            .map(|&lam| optimal_clone_factor(&TheoryInputs::homogeneous(12, w.clone(), lam)).unwrap().clone_factor)
            .collect();
        assert_eq!(picks, vec![12, 12, 4, 3, 2, 1]);
        let at_07 = optimal_clone_factor(&TheoryInputs::homogeneous(12, w, 0.7)).unwrap();
        assert!((at_07.mean_response - 1.0 / 0.3).abs() < 1e-9);
    }

    #[test]
    fn no_stable_candidate_is_reported() {
        let det = Distribution::deterministic(1.0).unwrap();
        let err = optimal_clone_factor(&TheoryInputs::homogeneous(4, det, 1.5)).unwrap_err();
        match err {
            TheoryError::NoStableCandidate { min_load } => assert!((min_load - 1.5).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn codesign_random_consistency() {
        let h = Distribution::hyperexponential(vec![0.9, 0.1], vec![1.8, 0.18]).unwrap();
        let inputs = TheoryInputs::homogeneous(12, h.clone(), 0.3);
        let cal = Calibration::default();
        let all = codesign_theory(&inputs, Chooser::Random, 12, &cal).unwrap().value();
        assert!((all - clone_to_all_mean(&inputs, 12).unwrap()).abs() < 1e-15);
        let one = codesign_theory(&inputs, Chooser::Random, 1, &cal).unwrap().value();
        assert!((one - ps_mean_response(&h, 0.3).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn codesign_jsq_is_labelled_as_simulated() {
        let inputs = TheoryInputs::homogeneous(4, exp(1.0), 0.5);
        let cal = Calibration {
            requests: 5_000,
            replications: 3,
            ..Default::default()
        };
        let est = codesign_theory(&inputs, Chooser::Jsq, 2, &cal).unwrap();
        let CodesignEstimate::SimulationCalibrated { ci } = est else {
            panic!("expected a simulated estimate");
        };
        let random = clone_to_all_mean(&inputs, 2).unwrap();
        assert!(ci.estimate < random * 1.05);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn optimum_is_invariant_to_time_units(
                p in 0.05f64..0.95, r1 in 0.2f64..5.0, r2 in 0.05f64..1.0,
                lam in 0.01f64..0.3, k in 0.2f64..5.0,
            ) {
                let law = Distribution::hyperexponential(vec![p, 1.0 - p], vec![r1, r2]).unwrap();
                let base = TheoryInputs::homogeneous(6, law.clone(), lam);
                let Ok(a) = optimal_clone_factor(&base) else { return Ok(()); };
                let rescaled = TheoryInputs::homogeneous(6, law.scale(1.0 / k).unwrap(), k * lam);
                let b = optimal_clone_factor(&rescaled).unwrap();
                prop_assert_eq!(a.clone_factor, b.clone_factor);
                prop_assert!((b.mean_response - a.mean_response / k).abs() <= 1e-6 * a.mean_response / k);
            }
        }
    }
}
