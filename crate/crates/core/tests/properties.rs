//! Cross-module properties checked end to end.

use std::fs;

use rayon::prelude::*;

use clonesim::analyze::{analyze, best_per_rate, load_means, parse_error_bars, parse_xy_csv, FigureKind};
use clonesim::dispatch::{Chooser, DelayConfig, Strategy};
use clonesim::dist::Distribution;
use clonesim::oracle::ps_partitioned;
use clonesim::runner::{run, run_in_memory, LoadedRun, RunOptions};
use clonesim::scenario::{presets, Scenario, Sweep};
use clonesim::sim::{simulate, DelayHandling, ServerSpec, SimConfig, SimOptions, WorkCorrelation};
use clonesim::stats::mean_ci;
use clonesim::theory::{clone_to_all_load, clone_to_all_mean, TheoryInputs};

fn config(servers: Vec<ServerSpec>, rate: f64, strategy: Strategy, requests: usize) -> SimConfig {
    SimConfig {
        servers,
        arrival_rate: rate,
        strategy,
        delays: DelayConfig::synchronized(),
        requests,
        work: WorkCorrelation::Independent,
        delay_handling: DelayHandling::Apply,
    }
}

fn mixed_servers() -> Vec<ServerSpec> {
    let exp = Distribution::exponential(1.0).unwrap();
    [1.0, 2.0, 0.5, 1.0]
        .iter()
        .map(|&c| ServerSpec::new(c, exp.clone()))
        .collect()
}

fn assert_matches_partitioned(cfg: &SimConfig, seed: u64) {
    let opts = SimOptions {
        record_requests: true,
        ..Default::default()
    };
    let out = simulate(cfg, seed, 0, &opts).unwrap();
    let records = out.records.unwrap();
    let caps: Vec<f64> = cfg.servers.iter().map(|s| s.capacity).collect();
    let arrivals: Vec<f64> = records.iter().map(|r| r.arrival).collect();
    let targets: Vec<usize> = records
        .iter()
        .map(|r| {
            assert_eq!(r.targets.len(), 1);
            r.targets[0]
        })
        .collect();
    let works: Vec<f64> = records.iter().map(|r| r.works[0]).collect();
    let reference = ps_partitioned(&caps, &arrivals, &targets, &works);
    for (i, (a, b)) in out.responses.iter().zip(&reference).enumerate() {
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "request {i}: {a} vs {b}");
    }
}

#[test]
fn single_clone_groups_match_no_cloning_reference() {
    for chooser in [Chooser::Random, Chooser::Jsq] {
        let strategy = Strategy::CloneToAllGroups {
            clone_factor: 1,
            chooser,
        };
        assert_matches_partitioned(&config(mixed_servers(), 2.5, strategy, 20_000), 11);
    }
}

#[test]
fn single_clone_subsets_match_no_cloning_reference() {
    for chooser in [Chooser::Random, Chooser::Jsq] {
        let strategy = Strategy::CloneSubset { d: 1, chooser };
        assert_matches_partitioned(&config(mixed_servers(), 2.5, strategy, 20_000), 12);
    }
}

#[test]
fn traces_do_not_depend_on_concurrency() {
    let mut cfg = config(
        mixed_servers(),
        2.0,
        Strategy::CloneSubset {
            d: 2,
            chooser: Chooser::Jsq,
        },
        4_000,
    );
    cfg.delays.arrival = Some(Distribution::exponential(10.0).unwrap());
    let opts = SimOptions {
        trace: true,
        ..Default::default()
    };
    let sequential: Vec<_> = (0..6u64)
        .map(|rep| simulate(&cfg, 5, rep, &opts).unwrap().trace.unwrap())
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let concurrent: Vec<_> = pool.install(|| {
        (0..6u64)
            .into_par_iter()
            .map(|rep| simulate(&cfg, 5, rep, &opts).unwrap().trace.unwrap())
            .collect()
    });
    assert_eq!(sequential, concurrent);
    assert_ne!(sequential[0], sequential[1]);
}

#[test]
fn in_memory_results_do_not_depend_on_jobs() {
    let mut s = presets::get("sim_randomized_sync_vs_nonsync_icpe").unwrap().unwrap();
    s.requests = 3_000;
    let cells = s.cells().unwrap();
    let one = run_in_memory(&cells, 2, s.warmup(), 1, &SimOptions::default()).unwrap();
    let four = run_in_memory(&cells, 2, s.warmup(), 4, &SimOptions::default()).unwrap();
    assert_eq!(one, four);
}

#[test]
fn clone_to_all_theory_inside_simulated_ci() {
    let n = 12;
    let weibull = Distribution::weibull(1.4, 1.0971849814565748).unwrap();
    let servers = vec![ServerSpec::new(1.0, weibull); n];
    let mut misses = Vec::new();
    for rate in [0.1, 0.3, 0.5] {
        let inputs = TheoryInputs::new(servers.clone(), rate);
        for cf in [1, 2, 3, 4, 6, 12] {
            if clone_to_all_load(&inputs, cf).unwrap() >= 1.0 {
                continue;
            }
            let theory = clone_to_all_mean(&inputs, cf).unwrap();
            let cfg = config(
                servers.clone(),
                rate * n as f64,
                Strategy::CloneToAllGroups {
                    clone_factor: cf,
                    chooser: Chooser::Random,
                },
                100_000,
            );
            let means: Vec<f64> = (0..5u64)
                .into_par_iter()
                .map(|rep| {
                    let out = simulate(&cfg, 31, rep, &SimOptions::default()).unwrap();
                    let kept = &out.responses[10_000..];
                    kept.iter().sum::<f64>() / kept.len() as f64
                })
                .collect();
            let ci = mean_ci(&means, 0.95).unwrap();
            if !ci.contains(theory) {
                misses.push(format!("λ={rate} c_f={cf}: {ci:?} vs {theory}"));
            }
        }
    }
    assert!(misses.is_empty(), "{misses:?}");
}

fn small(name: &str) -> Scenario {
    let mut s = presets::get(name).unwrap().unwrap();
    s.requests = 2_000;
    s.replications = 3;
    s
}

#[test]
fn every_preset_output_parses_back() {
    for (name, _) in presets::ALL {
        let s = small(name);
        let dir = tempfile::tempdir().unwrap();
        run(&s, &RunOptions::new(dir.path())).unwrap();
        let loaded = LoadedRun::open(dir.path()).unwrap();
        let figure = FigureKind::for_sweep(&s.sweep);
        let mut files = analyze(&loaded, figure, &dir.path().join("data")).unwrap();
        files.extend(analyze(&loaded, FigureKind::Ecdf, &dir.path().join("ecdf")).unwrap());
        assert!(!files.is_empty(), "{name}");
        for path in files {
            let text = fs::read_to_string(&path).unwrap();
            let values: Vec<f64> = if path.extension().unwrap() == "csv" {
                parse_xy_csv(&text)
                    .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
                    .into_iter()
                    .flat_map(|(x, y)| [x, y])
                    .collect()
            } else {
                parse_error_bars(&text)
                    .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
                    .into_iter()
                    .flatten()
                    .collect()
            };
            assert!(!values.is_empty(), "{} is empty", path.display());
            assert!(values.iter().all(|v| v.is_finite()), "{}", path.display());
        }
    }
}

#[test]
fn stored_samples_round_trip_through_the_analyzer() {
    let s = small("sim_optimal_clone-ps");
    let cells = s.cells().unwrap();
    let dir = tempfile::tempdir().unwrap();
    run(&s, &RunOptions::new(dir.path())).unwrap();
    let loaded = LoadedRun::open(dir.path()).unwrap();
    let in_memory = run_in_memory(&cells, s.replications, s.warmup(), 1, &SimOptions::default()).unwrap();
    for (cell, reps) in cells.iter().zip(&in_memory) {
        let record = loaded.cell(&cell.key).unwrap();
        let stored = loaded.replication_means(record).unwrap();
        let expected: Vec<f64> = reps.iter().map(|r| r.mean).collect();
        assert_eq!(stored, expected, "{}", cell.key);
    }

    let best = best_per_rate(&load_means(&loaded).unwrap(), None).unwrap();
    analyze(&loaded, FigureKind::CloneToAll, &dir.path().join("data")).unwrap();
    let band = parse_xy_csv(&fs::read_to_string(dir.path().join("data/clone-to-all/optmean-confint.csv")).unwrap()).unwrap();
    let Sweep::CloneFactor { arrival_rates, .. } = &s.sweep else { unreachable!() };
    assert_eq!(band.len(), 2 * arrival_rates.len());
    for (k, b) in best.iter().enumerate() {
        assert_eq!(band[k], (b.arrival_rate, b.ci.lower()));
        assert_eq!(band[band.len() - 1 - k], (b.arrival_rate, b.ci.upper()));
    }
}
