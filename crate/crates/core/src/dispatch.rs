//! Clone placement strategies and delay configuration.

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chooser {
    #[default]
    Random,
    Jsq,
}

impl Chooser {
    pub fn label(self) -> &'static str {
        match self {
            Chooser::Random => "random",
            Chooser::Jsq => "jsq",
        }
    }
}

/// Where the clones of a request go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Strategy {
    /// Servers are split into `N / clone_factor` fixed groups of consecutive
    /// ids; a request picks one group and is cloned to every member.
    CloneToAllGroups {
        clone_factor: usize,
        #[serde(default)]
        chooser: Chooser,
    },
    /// Each request is cloned to `d` individually chosen servers.
    CloneSubset { d: usize, chooser: Chooser },
}

impl Strategy {
    pub fn clones_per_request(&self) -> usize {
        match self {
            Strategy::CloneToAllGroups { clone_factor, .. } => *clone_factor,
            Strategy::CloneSubset { d, .. } => *d,
        }
    }

    pub fn chooser(&self) -> Chooser {
        match self {
            Strategy::CloneToAllGroups { chooser, .. } | Strategy::CloneSubset { chooser, .. } => {
                *chooser
            }
        }
    }

    pub fn validate(&self, servers: usize) -> Result<(), String> {
        if servers == 0 {
            return Err("cluster has no servers".into());
        }
        match self {
            Strategy::CloneToAllGroups { clone_factor, .. } => {
                if *clone_factor == 0 || !servers.is_multiple_of(*clone_factor) {
                    return Err(format!(
                        "clone factor {clone_factor} does not divide the cluster size {servers}"
                    ));
                }
            }
            Strategy::CloneSubset { d, .. } => {
                if *d == 0 || *d > servers {
                    return Err(format!("d = {d} must lie in 1..={servers}"));
                }
            }
        }
        Ok(())
    }

    /// Server groups for clone-to-all; `None` for subset placement.
    pub fn groups(&self, servers: usize) -> Option<Vec<Vec<usize>>> {
        match self {
            Strategy::CloneToAllGroups { clone_factor, .. } => Some(
                (0..servers / clone_factor)
                    .map(|g| (g * clone_factor..(g + 1) * clone_factor).collect())
                    .collect(),
            ),
            Strategy::CloneSubset { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CancelScope {
    #[default]
    PerClone,
    PerRequest,
}

/// Optional arrival (`a`) and cancellation (`c`) delay laws. With both absent
/// the service is synchronized: all clones join at the arrival instant and
/// losers leave at the instant the first clone completes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cancellation: Option<Distribution>,
    #[serde(default)]
    pub cancel_scope: CancelScope,
}

impl DelayConfig {
    pub fn synchronized() -> Self {
        DelayConfig::default()
    }

    pub fn is_synchronized(&self) -> bool {
        self.arrival.is_none() && self.cancellation.is_none()
    }

    pub fn mean_arrival(&self) -> f64 {
        self.arrival.as_ref().and_then(|d| d.mean().ok()).unwrap_or(0.0)
    }

    pub fn mean_cancellation(&self) -> f64 {
        self.cancellation.as_ref().and_then(|d| d.mean().ok()).unwrap_or(0.0)
    }
}

fn pick_min_with_ties(loads: &[usize], rng: &mut RngStream) -> usize {
    let best = *loads.iter().min().expect("nonempty");
    let tied: Vec<usize> = (0..loads.len()).filter(|&i| loads[i] == best).collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.index(tied.len())]
    }
}

/// Picks the servers that receive clones of the next request. `queue_lens`
/// is the current number of resident clones per server.
pub fn choose_targets(strategy: &Strategy, queue_lens: &[usize], rng: &mut RngStream) -> Vec<usize> {
    let n = queue_lens.len();
    match strategy {
        Strategy::CloneToAllGroups {
            clone_factor,
            chooser,
        } => {
            let groups = n / clone_factor;
            let g = if groups == 1 {
                0
            } else {
                match chooser {
                    Chooser::Random => rng.index(groups),
                    Chooser::Jsq => {
                        let loads: Vec<usize> = (0..groups)
                            .map(|g| queue_lens[g * clone_factor..(g + 1) * clone_factor].iter().sum())
                            .collect();
                        pick_min_with_ties(&loads, rng)
                    }
                }
            };
            (g * clone_factor..(g + 1) * clone_factor).collect()
        }
        Strategy::CloneSubset { d, chooser } => {
            let mut order: Vec<usize> = (0..n).collect();
            match chooser {
                Chooser::Random => {
                    for i in 0..*d {
                        let j = i + rng.index(n - i);
                        order.swap(i, j);
                    }
                }
                Chooser::Jsq => {
                    // random permutation first so the stable sort breaks ties uniformly
                    for i in 0..n.saturating_sub(1) {
                        let j = i + rng.index(n - i);
                        order.swap(i, j);
                    }
                    order.sort_by_key(|&s| queue_lens[s]);
                }
            }
            order.truncate(*d);
            order
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use std::collections::BTreeSet;

    #[test]
    fn single_group_takes_everyone() {
        let s = Strategy::CloneToAllGroups {
            clone_factor: 3,
            chooser: Chooser::Random,
        };
        let mut rng = derive_stream(1, 0, "d");
        for _ in 0..20 {
            assert_eq!(choose_targets(&s, &[4, 0, 9], &mut rng), vec![0, 1, 2]);
        }
    }

    #[test]
    fn jsq_subset_picks_two_shortest() {
        let s = Strategy::CloneSubset {
            d: 2,
            chooser: Chooser::Jsq,
        };
        let mut rng = derive_stream(1, 0, "d");
        let picked: BTreeSet<usize> = choose_targets(&s, &[0, 5, 1, 5], &mut rng).into_iter().collect();
        assert_eq!(picked, BTreeSet::from([0, 2]));
    }

    #[test]
    fn jsq_ties_are_randomized() {
        let s = Strategy::CloneSubset {
            d: 1,
            chooser: Chooser::Jsq,
        };
        let mut rng = derive_stream(3, 0, "d");
        let mut seen = BTreeSet::new();
        for _ in 0..200 {
            seen.insert(choose_targets(&s, &[1, 0, 0, 0], &mut rng)[0]);
        }
        assert_eq!(seen, BTreeSet::from([1, 2, 3]));
    }

    #[test]
    fn random_full_subset_is_everyone() {
        let s = Strategy::CloneSubset {
            d: 4,
            chooser: Chooser::Random,
        };
        let mut rng = derive_stream(1, 0, "d");
        let picked: BTreeSet<usize> = choose_targets(&s, &[0; 4], &mut rng).into_iter().collect();
        assert_eq!(picked, BTreeSet::from([0, 1, 2, 3]));
    }

    #[test]
    fn random_subset_is_uniform() {
        let s = Strategy::CloneSubset {
            d: 2,
            chooser: Chooser::Random,
        };
        let mut rng = derive_stream(5, 0, "d");
        let mut hits = [0usize; 6];
        let rounds = 60_000;
        for _ in 0..rounds {
            let t = choose_targets(&s, &[0; 6], &mut rng);
            assert_ne!(t[0], t[1]);
            for x in t {
                hits[x] += 1;
            }
        }
        // each server appears with probability 1/3
        for h in hits {
            let p = h as f64 / rounds as f64;
            assert!((p - 1.0 / 3.0).abs() < 0.01, "{p}");
        }
    }

    #[test]
    fn group_jsq_picks_least_loaded_group() {
        let s = Strategy::CloneToAllGroups {
            clone_factor: 2,
            chooser: Chooser::Jsq,
        };
        let mut rng = derive_stream(1, 0, "d");
        assert_eq!(choose_targets(&s, &[3, 3, 1, 1, 2, 2], &mut rng), vec![2, 3]);
    }

    #[test]
    fn validation() {
        let bad = Strategy::CloneToAllGroups {
            clone_factor: 5,
            chooser: Chooser::Random,
        };
        assert!(bad.validate(12).is_err());
        assert!(Strategy::CloneSubset { d: 13, chooser: Chooser::Jsq }.validate(12).is_err());
        assert!(Strategy::CloneSubset { d: 0, chooser: Chooser::Jsq }.validate(12).is_err());
        assert!(Strategy::CloneSubset { d: 12, chooser: Chooser::Jsq }.validate(12).is_ok());
    }

    #[test]
    fn delay_config_mode() {
        assert!(DelayConfig::synchronized().is_synchronized());
        let d = DelayConfig {
            arrival: Some(Distribution::deterministic(0.1).unwrap()),
            ..Default::default()
        };
        assert!(!d.is_synchronized());
    }
}
