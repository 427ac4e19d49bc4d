//! Scenario files and their expansion into simulation cells.
//!
//! A scenario is a TOML document describing a cluster, a base strategy and an
//! optional sweep. Expanding it yields one [`Cell`] per simulated system;
//! every cell is replicated `replications` times by the runner.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::{Chooser, DelayConfig, Strategy};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::rng::derive_stream;
use crate::sim::{DelayHandling, ServerSpec, SimConfig, WorkCorrelation};
use crate::theory::{divisors, equivalent_server};

/// Seed offset for cells that must be statistically independent of the
/// cells sharing the scenario seed.
const INDEPENDENT_SEED_OFFSET: u64 = 0x5DEE_CE66_D1CE_B00C;

const STABILITY_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerGroup {
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default = "unit_capacity")]
    pub capacity: f64,
    pub service: Distribution,
}

fn one() -> usize {
    1
}

fn unit_capacity() -> f64 {
    1.0
}

fn default_requests() -> usize {
    100_000
}

fn default_warmup() -> f64 {
    0.1
}

fn default_replications() -> usize {
    5
}

fn default_seed() -> u64 {
    1
}

fn both_choosers() -> Vec<Chooser> {
    vec![Chooser::Jsq, Chooser::Random]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayTarget {
    Arrival,
    Cancellation,
    /// Magnitude split evenly between arrival and cancellation delays.
    Combined,
}

impl DelayTarget {
    pub fn label(self) -> &'static str {
        match self {
            DelayTarget::Arrival => "arrival",
            DelayTarget::Cancellation => "cancellation",
            DelayTarget::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    /// Only the base system.
    #[default]
    Single,
    /// Base system (synchronized clone-to-all over every server) plus its
    /// equivalent single server, simulated from an independent seed.
    Equivalent,
    /// Clone-to-all for every cloning factor at every arrival rate. Factors
    /// that would overload the servers are skipped.
    CloneFactor {
        arrival_rates: Vec<f64>,
        #[serde(default)]
        clone_factors: Vec<usize>,
    },
    /// Clustered synchronized cloning for every cluster size, arrival rate
    /// and cluster chooser. Overloading cluster sizes are skipped.
    Codesign {
        arrival_rates: Vec<f64>,
        #[serde(default = "both_choosers")]
        choosers: Vec<Chooser>,
        #[serde(default)]
        clone_factors: Vec<usize>,
    },
    /// Base system without delays, with exponential delays of mean
    /// `magnitude · E[X]`, and the inflated-work upper bound of the latter.
    Delays {
        target: DelayTarget,
        magnitudes: Vec<f64>,
    },
    /// Clustered (synchronized) against arbitrary-subset placement of `d`
    /// clones at each utilization. Subset cells use the scenario delays.
    SyncVsNonsync {
        loads: Vec<f64>,
        d: usize,
        #[serde(default = "both_choosers")]
        choosers: Vec<Chooser>,
    },
}

impl Sweep {
    pub fn kind(&self) -> &'static str {
        match self {
            Sweep::Single => "single",
            Sweep::Equivalent => "equivalent",
            Sweep::CloneFactor { .. } => "clone-factor",
            Sweep::Codesign { .. } => "codesign",
            Sweep::Delays { .. } => "delays",
            Sweep::SyncVsNonsync { .. } => "sync-vs-nonsync",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub servers: Vec<ServerGroup>,
    /// Poisson arrival rate per server (1/s).
    pub arrival_rate: f64,
    pub strategy: Strategy,
    #[serde(default)]
    pub delays: DelayConfig,
    #[serde(default)]
    pub work: WorkCorrelation,
    #[serde(default = "default_requests")]
    pub requests: usize,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellRole {
    Base,
    Cloned,
    Equivalent,
    Sync,
    Delayed,
    Bound,
    Clustered,
    Subset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub role: CellRole,
    /// Arrival rate per server of the cluster the cell stands for.
    pub arrival_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clone_factor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chooser: Option<Chooser>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
}

impl CellParams {
    pub fn new(role: CellRole, arrival_rate: f64) -> Self {
        CellParams {
            role,
            arrival_rate,
            clone_factor: None,
            chooser: None,
            magnitude: None,
            load: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: String,
    pub params: CellParams,
    pub config: SimConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Scenario = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the canonical JSON form. Any field change changes it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn server_specs(&self) -> Vec<ServerSpec> {
        self.servers
            .iter()
            .flat_map(|g| std::iter::repeat_n(ServerSpec::new(g.capacity, g.service.clone()), g.count))
            .collect()
    }

    pub fn server_count(&self) -> usize {
        self.servers.iter().map(|g| g.count).sum()
    }

    pub fn warmup(&self) -> usize {
        (self.warmup_fraction * self.requests as f64).floor() as usize
    }

    /// Average of the per-server mean service requirements.
    pub fn mean_service(&self) -> Result<f64> {
        let specs = self.server_specs();
        let mut total = 0.0;
        for s in &specs {
            total += s.service.mean()? / s.capacity;
        }
        Ok(total / specs.len() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.name.trim().is_empty() {
            return bad("scenario name is empty".into());
        }
        if self.servers.is_empty() || self.servers.iter().any(|g| g.count == 0) {
            return bad("every server group needs count >= 1".into());
        }
        if !(self.warmup_fraction >= 0.0 && self.warmup_fraction < 1.0) {
            return bad(format!("warmup_fraction {} must lie in [0, 1)", self.warmup_fraction));
        }
        if self.replications < 2 {
            return bad(format!("need at least 2 replications, got {}", self.replications));
        }
        if self.requests <= self.warmup() {
            return bad("no requests left after warm-up".into());
        }
        let n = self.server_count();
        match &self.sweep {
            Sweep::Single => {}
            Sweep::Equivalent => match self.strategy {
                Strategy::CloneToAllGroups { clone_factor, .. } if clone_factor == n => {
                    if !self.delays.is_synchronized() {
                        return bad("equivalent sweep needs synchronized cloning".into());
                    }
                }
                _ => return bad(format!("equivalent sweep needs clone-to-all over all {n} servers")),
            },
            Sweep::CloneFactor {
                arrival_rates,
                clone_factors,
            }
            | Sweep::Codesign {
                arrival_rates,
                clone_factors,
                ..
            } => {
                check_positive("arrival_rates", arrival_rates)?;
                if let Some(cf) = clone_factors.iter().find(|&&cf| cf == 0 || !n.is_multiple_of(cf)) {
                    return bad(format!("clone factor {cf} does not divide {n}"));
                }
                if let Sweep::Codesign { choosers, .. } = &self.sweep {
                    if choosers.is_empty() {
                        return bad("codesign sweep needs at least one chooser".into());
                    }
                }
            }
            Sweep::Delays { magnitudes, .. } => {
                if magnitudes.is_empty() || magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    return bad("delay magnitudes must be finite and non-negative".into());
                }
                if !self.delays.is_synchronized() {
                    return bad("delay sweeps set delays themselves; leave [delays] empty".into());
                }
            }
            Sweep::SyncVsNonsync { loads, d, choosers } => {
                check_positive("loads", loads)?;
                if *d == 0 || !n.is_multiple_of(*d) {
                    return bad(format!("d = {d} does not divide {n}"));
                }
                if choosers.is_empty() {
                    return bad("sync-vs-nonsync sweep needs at least one chooser".into());
                }
            }
        }
        let cells = self.cells()?;
        for cell in &cells {
            cell.config.validate()?;
        }
        if let Sweep::CloneFactor { arrival_rates, .. } | Sweep::Codesign { arrival_rates, .. } = &self.sweep {
            if let Some(rate) = arrival_rates
                .iter()
                .find(|&&r| !cells.iter().any(|c| c.params.arrival_rate == r))
            {
                return bad(format!("no cloning factor keeps the servers stable at arrival rate {rate}"));
            }
        }
        Ok(())
    }

    fn base_config(&self, arrival_rate: f64) -> SimConfig {
        let servers = self.server_specs();
        let total = arrival_rate * servers.len() as f64;
        SimConfig {
            servers,
            arrival_rate: total,
            strategy: self.strategy.clone(),
            delays: self.delays.clone(),
            requests: self.requests,
            work: self.work,
            delay_handling: DelayHandling::Apply,
        }
    }

    /// Expands the sweep. Cells that share the scenario seed share arrival
    /// and service streams, which pairs them replication by replication.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let n = self.server_count();
        let lam = self.arrival_rate;
        let mut cells = Vec::new();
        match &self.sweep {
            Sweep::Single => cells.push(Cell {
                key: "base".into(),
                params: CellParams::new(CellRole::Base, lam),
                config: self.base_config(lam),
                seed: self.seed,
            }),
            Sweep::Equivalent => {
                let specs = self.server_specs();
                let laws: Vec<Distribution> = specs.iter().map(|s| s.service.clone()).collect();
                let caps: Vec<f64> = specs.iter().map(|s| s.capacity).collect();
                let eq = equivalent_server(&laws, &caps)?;
                let mut params = CellParams::new(CellRole::Cloned, lam);
                params.clone_factor = Some(n);
                cells.push(Cell {
                    key: "cloned".into(),
                    params,
                    config: self.base_config(lam),
                    seed: self.seed,
                });
                let mut eq_cfg = self.base_config(lam);
                eq_cfg.servers = vec![ServerSpec::new(1.0, eq)];
                eq_cfg.strategy = Strategy::CloneToAllGroups {
                    clone_factor: 1,
                    chooser: Chooser::Random,
                };
                cells.push(Cell {
                    key: "equivalent".into(),
                    params: CellParams::new(CellRole::Equivalent, lam),
                    config: eq_cfg,
                    seed: self.seed.wrapping_add(INDEPENDENT_SEED_OFFSET),
                });
            }
            Sweep::CloneFactor {
                arrival_rates,
                clone_factors,
            } => {
                let cfs = or_divisors(clone_factors, n);
                let chooser = self.strategy.chooser();
                for &rate in arrival_rates {
                    for &cf in &cfs {
                        let mut cfg = self.base_config(rate);
                        cfg.strategy = Strategy::CloneToAllGroups {
                            clone_factor: cf,
                            chooser,
                        };
                        if effective_load(&cfg)? >= 1.0 {
                            continue;
                        }
                        let mut params = CellParams::new(CellRole::Clustered, rate);
                        params.clone_factor = Some(cf);
                        cells.push(Cell {
                            key: format!("lambda-{rate}_cf-{cf}"),
                            params,
                            config: cfg,
                            seed: self.seed,
                        });
                    }
                }
            }
            Sweep::Codesign {
                arrival_rates,
                choosers,
                clone_factors,
            } => {
                let cfs = or_divisors(clone_factors, n);
                for &chooser in choosers {
                    for &rate in arrival_rates {
                        for &cf in &cfs {
                            let mut cfg = self.base_config(rate);
                            cfg.strategy = Strategy::CloneToAllGroups {
                                clone_factor: cf,
                                chooser,
                            };
                            if effective_load(&cfg)? >= 1.0 {
                                continue;
                            }
                            let mut params = CellParams::new(CellRole::Clustered, rate);
                            params.clone_factor = Some(cf);
                            params.chooser = Some(chooser);
                            cells.push(Cell {
                                key: format!("{}_lambda-{rate}_d-{cf}", chooser.label()),
                                params,
                                config: cfg,
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
            Sweep::Delays { target, magnitudes } => {
                let mean = self.mean_service()?;
                cells.push(Cell {
                    key: "sync".into(),
                    params: CellParams::new(CellRole::Sync, lam),
                    config: self.base_config(lam),
                    seed: self.seed,
                });
                for &x in magnitudes {
                    let delays = delay_config(*target, x * mean)?;
                    for (role, handling, tag) in [
                        (CellRole::Delayed, DelayHandling::Apply, "delayed"),
                        (CellRole::Bound, DelayHandling::InflateWork, "bound"),
                    ] {
                        let mut cfg = self.base_config(lam);
                        cfg.delays = delays.clone();
                        cfg.delay_handling = handling;
                        let mut params = CellParams::new(role, lam);
                        params.magnitude = Some(x);
                        cells.push(Cell {
                            key: format!("{tag}_x-{x}"),
                            params,
                            config: cfg,
                            seed: self.seed,
                        });
                    }
                }
            }
            Sweep::SyncVsNonsync { loads, d, choosers } => {
                let mean = self.mean_service()?;
                for &chooser in choosers {
                    for &rho in loads {
                        let rate = rho / mean;
                        for (role, tag) in [(CellRole::Clustered, "c"), (CellRole::Subset, "a")] {
                            let mut cfg = self.base_config(rate);
                            if role == CellRole::Clustered {
                                cfg.strategy = Strategy::CloneToAllGroups {
                                    clone_factor: *d,
                                    chooser,
                                };
                                cfg.delays = DelayConfig::synchronized();
                            } else {
                                cfg.strategy = Strategy::CloneSubset { d: *d, chooser };
                            }
                            let mut params = CellParams::new(role, rate);
                            params.clone_factor = Some(*d);
                            params.chooser = Some(chooser);
                            params.load = Some(rho);
                            cells.push(Cell {
                                key: format!("{}_rho-{rho}_{tag}", chooser.label()),
                                params,
                                config: cfg,
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    /// Estimated utilization of the busiest server for every cell.
    pub fn stability(&self) -> Result<Vec<(String, f64)>> {
        self.cells()?
            .into_iter()
            .map(|c| Ok((c.key.clone(), effective_load(&c.config)?)))
            .collect()
    }

    /// Fails with a diagnostic if any cell is estimated to be unstable.
    pub fn check_stability(&self) -> Result<()> {
        let unstable: Vec<String> = self
            .stability()?
            .into_iter()
            .filter(|(_, load)| !(*load < 1.0))
            .map(|(key, load)| format!("{key}: estimated load {load:.4}"))
            .collect();
        if unstable.is_empty() {
            Ok(())
        } else {
            Err(Error::Unstable(format!(
                "{} cell(s) at or above load 1 ({}); pass --allow-unstable to run anyway",
                unstable.len(),
                unstable.join("; ")
            )))
        }
    }
}

fn check_positive(field: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Scenario(format!("{field} must be a non-empty list of positive numbers")));
    }
    Ok(())
}

fn or_divisors(given: &[usize], n: usize) -> Vec<usize> {
    if given.is_empty() {
        divisors(n)
    } else {
        given.to_vec()
    }
}

/// Exponential delays with total mean `mean`; zero means delays that are
/// drawn but always 0.
pub fn delay_config(target: DelayTarget, mean: f64) -> Result<DelayConfig> {
    let law = |m: f64| -> Result<Distribution> {
        if m == 0.0 {
            Ok(Distribution::deterministic(0.0)?)
        } else {
            Ok(Distribution::exponential(1.0 / m)?)
        }
    };
    let mut cfg = DelayConfig::synchronized();
    match target {
        DelayTarget::Arrival => cfg.arrival = Some(law(mean)?),
        DelayTarget::Cancellation => cfg.cancellation = Some(law(mean)?),
        DelayTarget::Combined => {
            cfg.arrival = Some(law(mean / 2.0)?);
            cfg.cancellation = Some(law(mean / 2.0)?);
        }
    }
    Ok(cfg)
}

/// Utilization estimate: each request occupies every server it is cloned to
/// for `min_j (X_j / cap_j + a_j + c_j)`. Exact for synchronized cloning;
/// with delays the expectation is estimated from a fixed sample.
pub fn effective_load(cfg: &SimConfig) -> Result<f64> {
    let n = cfg.servers.len();
    let groups: Vec<Vec<usize>> = match cfg.strategy.groups(n) {
        Some(g) => g,
        None => vec![(0..cfg.strategy.clones_per_request()).collect()],
    };
    let per_group_rate = cfg.arrival_rate * cfg.strategy.clones_per_request() as f64 / n as f64;
    let mut worst: f64 = 0.0;
    for group in groups {
        let laws: Vec<Distribution> = group.iter().map(|&i| cfg.servers[i].service.clone()).collect();
        let caps: Vec<f64> = group.iter().map(|&i| cfg.servers[i].capacity).collect();
        let occupancy = if cfg.delays.is_synchronized() {
            equivalent_server(&laws, &caps)?.mean().unwrap_or(f64::INFINITY)
        } else {
            let mut rng = derive_stream(0, 0, "stability");
            let mut total = 0.0;
            for _ in 0..STABILITY_SAMPLES {
                let mut best = f64::INFINITY;
                for (law, cap) in laws.iter().zip(&caps) {
                    let mut t = law.sample(&mut rng) / cap;
                    if let Some(a) = &cfg.delays.arrival {
                        t += a.sample(&mut rng);
                    }
                    if let Some(c) = &cfg.delays.cancellation {
                        t += c.sample(&mut rng);
                    }
                    best = best.min(t);
                }
                total += best;
            }
            total / STABILITY_SAMPLES as f64
        };
        worst = worst.max(per_group_rate * occupancy);
    }
    Ok(worst)
}

pub mod presets {
    //! Scenario files shipped with the crate.

    pub const GG1_3DIST: &str = include_str!("../../../presets/sim_gg1_3dist.toml");
    pub const OPTIMAL_CLONE: &str = include_str!("../../../presets/sim_optimal_clone-ps.toml");
    pub const CODESIGNS: &str = include_str!("../../../presets/sim_codesigns_icpe.toml");
    pub const ARRIVAL_DELAYS: &str = include_str!("../../../presets/sim_randomized_arrival_delays.toml");
    pub const CANCELLATION_DELAYS: &str = include_str!("../../../presets/sim_randomized_cancellation_delays.toml");
    pub const COMBINED_DELAYS: &str = include_str!("../../../presets/sim_randomized_combined_delays.toml");
    pub const SYNC_VS_NONSYNC: &str = include_str!("../../../presets/sim_randomized_sync_vs_nonsync_icpe.toml");

    pub const ALL: [(&str, &str); 7] = [
        ("sim_gg1_3dist", GG1_3DIST),
        ("sim_optimal_clone-ps", OPTIMAL_CLONE),
        ("sim_codesigns_icpe", CODESIGNS),
        ("sim_randomized_arrival_delays", ARRIVAL_DELAYS),
        ("sim_randomized_cancellation_delays", CANCELLATION_DELAYS),
        ("sim_randomized_combined_delays", COMBINED_DELAYS),
        ("sim_randomized_sync_vs_nonsync_icpe", SYNC_VS_NONSYNC),
    ];

    pub fn get(name: &str) -> Option<super::Result<super::Scenario>> {
        let name = name.strip_suffix(".toml").unwrap_or(name);
        ALL.iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| super::Scenario::from_toml(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_validates_and_round_trips() {
        for (name, text) in presets::ALL {
            let s = Scenario::from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
            let back = Scenario::from_toml(&s.to_toml()).unwrap();
            assert_eq!(back, s, "{name}");
            assert_eq!(back.hash(), s.hash());
            s.check_stability().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = presets::get("sim_gg1_3dist").unwrap().unwrap();
        let h = base.hash();
        let mut variants = Vec::new();
        let mut s = base.clone();
        s.seed += 1;
        variants.push(s);
        let mut s = base.clone();
        s.requests += 1;
        variants.push(s);
        let mut s = base.clone();
        s.arrival_rate *= 1.01;
        variants.push(s);
        let mut s = base.clone();
        s.warmup_fraction = 0.2;
        variants.push(s);
        let mut s = base.clone();
        s.name.push('x');
        variants.push(s);
        let mut s = base.clone();
        s.servers[0].capacity = 2.0;
        variants.push(s);
        let mut s = base.clone();
        s.output_dir = Some("elsewhere".into());
        variants.push(s);
        for v in variants {
            assert_ne!(v.hash(), h);
        }
        assert_eq!(base.clone().hash(), h);
    }

    #[test]
    fn unstable_scenario_is_refused() {
        let mut s = presets::get("sim_gg1_3dist").unwrap().unwrap();
        s.arrival_rate = 10.0;
        let err = s.check_stability().unwrap_err();
        assert!(matches!(err, Error::Unstable(ref m) if m.contains("estimated load")), "{err}");
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let text = presets::GG1_3DIST.replace("replications = 5", "replications = 1");
        assert!(Scenario::from_toml(&text).is_err());
        let text = format!("bogus = 1\n{}", presets::GG1_3DIST);
        assert!(Scenario::from_toml(&text).is_err());
        let text = presets::ARRIVAL_DELAYS.replace("magnitudes", "magnitude");
        assert!(Scenario::from_toml(&text).is_err());
        let mut s = presets::get("sim_optimal_clone-ps").unwrap().unwrap();
        if let Sweep::CloneFactor { clone_factors, .. } = &mut s.sweep {
            clone_factors.push(5);
        }
        assert!(s.validate().is_err());
    }

    #[test]
    fn sweeps_expand_to_expected_cells() {
        let s = presets::get("sim_gg1_3dist").unwrap().unwrap();
        let cells = s.cells().unwrap();
        assert_eq!(cells.len(), 2);
        assert_ne!(cells[0].seed, cells[1].seed);
        assert_eq!(cells[1].config.servers.len(), 1);
        assert!((cells[1].config.arrival_rate - cells[0].config.arrival_rate).abs() < 1e-12);

        let s = presets::get("sim_randomized_combined_delays").unwrap().unwrap();
        let cells = s.cells().unwrap();
        let Sweep::Delays { magnitudes, .. } = &s.sweep else { panic!() };
        assert_eq!(cells.len(), 1 + 2 * magnitudes.len());
        let delayed = &cells[1].config.delays;
        let total = delayed.mean_arrival() + delayed.mean_cancellation();
        assert!((total - magnitudes[0] * s.mean_service().unwrap()).abs() < 1e-12);
        assert!(cells.iter().all(|c| c.seed == s.seed));

        let s = presets::get("sim_randomized_sync_vs_nonsync_icpe").unwrap().unwrap();
        for pair in s.cells().unwrap().chunks(2) {
            assert_eq!(pair[0].params.role, CellRole::Clustered);
            assert_eq!(pair[1].params.role, CellRole::Subset);
            assert_eq!(pair[0].config.arrival_rate, pair[1].config.arrival_rate);
        }
    }

    #[test]
    fn synchronized_load_matches_theory() {
        let s = presets::get("sim_optimal_clone-ps").unwrap().unwrap();
        for cell in s.cells().unwrap() {
            let cf = cell.params.clone_factor.unwrap();
            let inputs = crate::theory::TheoryInputs::new(cell.config.servers.clone(), cell.params.arrival_rate);
            let expect = crate::theory::clone_to_all_load(&inputs, cf).unwrap();
            assert!((effective_load(&cell.config).unwrap() - expect).abs() < 1e-12);
        }
    }
}
