//! Post-processing of stored runs into plot data.
//!
//! Three file shapes are produced:
//! - `x,y` CSV tables (ECDFs, theory curves, vertical CI segments);
//! - CSV polygons tracing a CI band, lower bound left to right then upper
//!   bound right to left;
//! - whitespace-separated `x xerr y yerr` error-bar tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dispatch::Chooser;
use crate::error::{Error, Result};
use crate::runner::LoadedRun;
use crate::scenario::{CellParams, CellRole, Sweep};
use crate::stats::{ecdf, mean_ci, normalize, sync_error, thin_ecdf, CiSummary};
use crate::theory::{optimal_clone_factor, TheoryInputs};

pub const CONFIDENCE: f64 = 0.95;
pub const ECDF_POINTS: usize = 2000;
const THEORY_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    Gg1,
    CloneToAll,
    Codesign,
    Delays,
    SyncVsNonsync,
    Ecdf,
}

impl FigureKind {
    pub const ALL: [FigureKind; 6] = [
        FigureKind::Gg1,
        FigureKind::CloneToAll,
        FigureKind::Codesign,
        FigureKind::Delays,
        FigureKind::SyncVsNonsync,
        FigureKind::Ecdf,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FigureKind::Gg1 => "gg1",
            FigureKind::CloneToAll => "clone-to-all",
            FigureKind::Codesign => "codesign",
            FigureKind::Delays => "delays",
            FigureKind::SyncVsNonsync => "sync-vs-nonsync",
            FigureKind::Ecdf => "ecdf",
        }
    }

    /// The figure kind a sweep is meant for.
    pub fn for_sweep(sweep: &Sweep) -> FigureKind {
        match sweep {
            Sweep::Single => FigureKind::Ecdf,
            Sweep::Equivalent => FigureKind::Gg1,
            Sweep::CloneFactor { .. } => FigureKind::CloneToAll,
            Sweep::Codesign { .. } => FigureKind::Codesign,
            Sweep::Delays { .. } => FigureKind::Delays,
            Sweep::SyncVsNonsync { .. } => FigureKind::SyncVsNonsync,
        }
    }
}

impl FromStr for FigureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FigureKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| {
                let all: Vec<&str> = FigureKind::ALL.iter().map(|k| k.label()).collect();
                format!("unknown figure kind {s:?} (expected one of {})", all.join(", "))
            })
    }
}

/// Replication means of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeans {
    pub key: String,
    pub params: CellParams,
    pub means: Vec<f64>,
}

impl CellMeans {
    pub fn ci(&self) -> Result<CiSummary> {
        Ok(mean_ci(&self.means, CONFIDENCE)?)
    }
}

pub fn load_means(run: &LoadedRun) -> Result<Vec<CellMeans>> {
    run.manifest
        .cells
        .iter()
        .map(|c| {
            Ok(CellMeans {
                key: c.key.clone(),
                params: c.params.clone(),
                means: run.replication_means(c)?,
            })
        })
        .collect()
}

fn overlaps(a: &CiSummary, b: &CiSummary) -> bool {
    (a.estimate - b.estimate).abs() <= a.half_width + b.half_width
}

/// Best cloning factor among simulated candidates at one arrival rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestPoint {
    pub arrival_rate: f64,
    pub clone_factor: usize,
    pub ci: CiSummary,
    /// Smallest and largest candidate whose CI overlaps the best one.
    pub plausible: (usize, usize),
    pub candidates: Vec<(usize, CiSummary)>,
}

/// Groups clustered cells by arrival rate (restricted to `chooser` when
/// given) and picks the lowest simulated mean at each rate.
pub fn best_per_rate(cells: &[CellMeans], chooser: Option<Chooser>) -> Result<Vec<BestPoint>> {
    let mut by_rate: BTreeMap<u64, (f64, Vec<(usize, CiSummary)>)> = BTreeMap::new();
    for c in cells {
        if c.params.role != CellRole::Clustered || (chooser.is_some() && c.params.chooser != chooser) {
            continue;
        }
        let cf = c.params.clone_factor.ok_or_else(|| Error::Scenario(format!("{}: no clone factor", c.key)))?;
        let rate = c.params.arrival_rate;
        by_rate
            .entry(rate.to_bits())
            .or_insert_with(|| (rate, Vec::new()))
            .1
            .push((cf, c.ci()?));
    }
    let mut points: Vec<BestPoint> = by_rate
        .into_values()
        .map(|(rate, mut cands)| {
            cands.sort_by_key(|(cf, _)| *cf);
            let (best_cf, best) = cands
                .iter()
                .min_by(|a, b| a.1.estimate.total_cmp(&b.1.estimate))
                .copied()
                .unwrap();
            let ok: Vec<usize> = cands.iter().filter(|(_, ci)| overlaps(ci, &best)).map(|(cf, _)| *cf).collect();
            BestPoint {
                arrival_rate: rate,
                clone_factor: best_cf,
                ci: best,
                plausible: (ok[0], ok[ok.len() - 1]),
                candidates: cands,
            }
        })
        .collect();
    points.sort_by(|a, b| a.arrival_rate.total_cmp(&b.arrival_rate));
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaySeries {
    pub sync: CiSummary,
    /// `(magnitude, normalized CI)`, ascending magnitude.
    pub delayed: Vec<(f64, CiSummary)>,
    pub bound: Vec<(f64, CiSummary)>,
    pub raw_delayed: Vec<(f64, CiSummary)>,
    pub raw_bound: Vec<(f64, CiSummary)>,
}

pub fn delay_series(cells: &[CellMeans]) -> Result<DelaySeries> {
    let sync = cells
        .iter()
        .find(|c| c.params.role == CellRole::Sync)
        .ok_or_else(|| Error::Scenario("delay run has no synchronized cell".into()))?
        .ci()?;
    let pick = |role: CellRole| -> Result<Vec<(f64, CiSummary)>> {
        let mut v = cells
            .iter()
            .filter(|c| c.params.role == role)
            .map(|c| Ok((c.params.magnitude.unwrap_or(0.0), c.ci()?)))
            .collect::<Result<Vec<_>>>()?;
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(v)
    };
    let raw_delayed = pick(CellRole::Delayed)?;
    let raw_bound = pick(CellRole::Bound)?;
    let baseline: Vec<(f64, CiSummary)> = raw_delayed.iter().map(|(x, _)| (*x, sync)).collect();
    Ok(DelaySeries {
        sync,
        delayed: normalize(&raw_delayed, &baseline)?,
        bound: normalize(&raw_bound, &baseline)?,
        raw_delayed,
        raw_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncSeries {
    pub chooser: Chooser,
    /// `(utilization, E[ε])`.
    pub error: Vec<(f64, CiSummary)>,
    /// `(utilization, subset E[T] / clustered E[T])`.
    pub normalized: Vec<(f64, CiSummary)>,
}

pub fn sync_series(cells: &[CellMeans]) -> Result<Vec<SyncSeries>> {
    let mut choosers: Vec<Chooser> = Vec::new();
    for c in cells {
        if let Some(ch) = c.params.chooser {
            if !choosers.contains(&ch) {
                choosers.push(ch);
            }
        }
    }
    let mut out = Vec::new();
    for chooser in choosers {
        let mut pairs: BTreeMap<u64, (f64, Option<&CellMeans>, Option<&CellMeans>)> = BTreeMap::new();
        for c in cells.iter().filter(|c| c.params.chooser == Some(chooser)) {
            let rho = c.params.load.unwrap_or(c.params.arrival_rate);
            let slot = pairs.entry(rho.to_bits()).or_insert((rho, None, None));
            match c.params.role {
                CellRole::Clustered => slot.1 = Some(c),
                CellRole::Subset => slot.2 = Some(c),
                _ => {}
            }
        }
        let mut error = Vec::new();
        let mut subset = Vec::new();
        let mut clustered = Vec::new();
        for (_, (rho, c, a)) in pairs {
            let (Some(c), Some(a)) = (c, a) else {
                return Err(Error::Scenario(format!("unpaired cells at utilization {rho}")));
            };
            error.push((rho, sync_error(&a.means, &c.means, CONFIDENCE)?));
            subset.push((rho, a.ci()?));
            clustered.push((rho, c.ci()?));
        }
        error.sort_by(|a, b| a.0.total_cmp(&b.0));
        subset.sort_by(|a, b| a.0.total_cmp(&b.0));
        clustered.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.push(SyncSeries {
            chooser,
            error,
            normalized: normalize(&subset, &clustered)?,
        });
    }
    Ok(out)
}

pub fn xy_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("x,y\n");
    for (x, y) in points {
        writeln!(s, "{x},{y}").unwrap();
    }
    s
}

/// Closed CI band: lower bounds by ascending x, then upper bounds by
/// descending x.
pub fn band_polygon(series: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64, f64)> = series.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = pts.iter().map(|(x, lo, _)| (*x, *lo)).collect();
    out.extend(pts.iter().rev().map(|(x, _, hi)| (*x, *hi)));
    out
}

pub fn error_bars(series: &[(f64, CiSummary)]) -> String {
    let mut s = String::new();
    for (x, ci) in series {
        writeln!(s, "{x} 0 {} {}", ci.estimate, ci.half_width).unwrap();
    }
    s
}

pub fn parse_xy_csv(text: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("x,y") {
        return Err("missing x,y header".into());
    }
    lines
        .map(|l| {
            let (x, y) = l.split_once(',').ok_or_else(|| format!("bad row {l:?}"))?;
            Ok((
                x.parse().map_err(|_| format!("bad x in {l:?}"))?,
                y.parse().map_err(|_| format!("bad y in {l:?}"))?,
            ))
        })
        .collect()
}

pub fn parse_error_bars(text: &str) -> std::result::Result<Vec<[f64; 4]>, String> {
    text.lines()
        .map(|l| {
            let cols: Vec<f64> = l
                .split_whitespace()
                .map(|c| c.parse().map_err(|_| format!("bad number in {l:?}")))
                .collect::<std::result::Result<_, _>>()?;
            cols.try_into().map_err(|_| format!("expected 4 columns in {l:?}"))
        })
        .collect()
}

struct Emitter {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Emitter {
    fn put(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

fn segment_pairs(points: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    points.iter().flat_map(|(x, lo, hi)| [(*x, *lo), (*x, *hi)]).collect()
}

fn ecdf_csv(samples: &[f64]) -> Result<String> {
    Ok(xy_csv(&thin_ecdf(&ecdf(samples)?, ECDF_POINTS)))
}

fn chooser_tag(chooser: Chooser, codesign: bool) -> &'static str {
    match (chooser, codesign) {
        (Chooser::Jsq, true) => "clusterSQF-PS",
        (Chooser::Random, true) => "clusterRandom-PS",
        (Chooser::Jsq, false) => "sqf",
        (Chooser::Random, false) => "random",
    }
}

/// Writes the plot data of `figure` for a stored run under `out` and
/// returns the files written.
pub fn analyze(run: &LoadedRun, figure: FigureKind, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = &run.manifest.scenario;
    let expected = FigureKind::for_sweep(&scenario.sweep);
    if figure != FigureKind::Ecdf && figure != expected {
        return Err(Error::FigureMismatch {
            figure: figure.label().to_string(),
            kind: scenario.sweep.kind().to_string(),
        });
    }
    let mut em = Emitter {
        root: out.to_path_buf(),
        written: Vec::new(),
    };
    match figure {
        FigureKind::Ecdf => {
            for cell in &run.manifest.cells {
                let samples = run.pooled_samples(cell)?;
                em.put(&format!("ecdf/{}.csv", cell.key), &ecdf_csv(&samples)?)?;
            }
        }
        FigureKind::Gg1 => {
            for (key, file) in [("cloned", "3dist-ps.csv"), ("equivalent", "equivalent-ps.csv")] {
                let cell = run
                    .cell(key)
                    .ok_or_else(|| Error::Scenario(format!("run has no {key} cell")))?;
                let samples = run.pooled_samples(cell)?;
                em.put(&format!("gg1-example/{file}"), &ecdf_csv(&samples)?)?;
            }
        }
        FigureKind::CloneToAll => {
            let Sweep::CloneFactor { arrival_rates, .. } = &scenario.sweep else { unreachable!() };
            let lo = arrival_rates.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = arrival_rates.iter().copied().fold(0.0, f64::max);
            let servers = scenario.server_specs();
            let mut mean_curve = Vec::new();
            let mut cf_curve = Vec::new();
            for k in 0..=THEORY_GRID {
                let rate = lo + (hi - lo) * k as f64 / THEORY_GRID as f64;
                if let Ok(opt) = optimal_clone_factor(&TheoryInputs::new(servers.clone(), rate)) {
                    mean_curve.push((rate, opt.mean_response));
                    cf_curve.push((rate, opt.clone_factor as f64));
                }
            }
            em.put("clone-to-all/meanRTs-ps.csv", &xy_csv(&mean_curve))?;
            em.put("clone-to-all/optclones-ps.csv", &xy_csv(&cf_curve))?;
            let best = best_per_rate(&load_means(run)?, None)?;
            let mean_band: Vec<_> = best.iter().map(|b| (b.arrival_rate, b.ci.lower(), b.ci.upper())).collect();
            let cf_band: Vec<_> = best
                .iter()
                .map(|b| (b.arrival_rate, b.plausible.0 as f64, b.plausible.1 as f64))
                .collect();
            em.put("clone-to-all/optmean-confint.csv", &xy_csv(&band_polygon(&mean_band)))?;
            em.put("clone-to-all/optclone-confint.csv", &xy_csv(&band_polygon(&cf_band)))?;
        }
        FigureKind::Codesign => {
            let Sweep::Codesign { choosers, .. } = &scenario.sweep else { unreachable!() };
            let means = load_means(run)?;
            for &chooser in choosers {
                let best = best_per_rate(&means, Some(chooser))?;
                let tag = chooser_tag(chooser, true);
                let rt: Vec<_> = best.iter().map(|b| (b.arrival_rate, b.ci.lower(), b.ci.upper())).collect();
                let cf: Vec<_> = best
                    .iter()
                    .map(|b| (b.arrival_rate, b.plausible.0 as f64, b.plausible.1 as f64))
                    .collect();
                em.put(&format!("co-design/{tag}-RT.csv"), &xy_csv(&segment_pairs(&rt)))?;
                em.put(&format!("co-design/{tag}-clone.csv"), &xy_csv(&segment_pairs(&cf)))?;
                if chooser == Chooser::Random {
                    let servers = scenario.server_specs();
                    let mut theory = Vec::new();
                    let mut theory_cf = Vec::new();
                    for b in &best {
                        if let Ok(opt) = optimal_clone_factor(&TheoryInputs::new(servers.clone(), b.arrival_rate)) {
                            theory.push((b.arrival_rate, opt.mean_response));
                            theory_cf.push((b.arrival_rate, opt.clone_factor as f64));
                        }
                    }
                    em.put(&format!("co-design/{tag}-theory-RT.csv"), &xy_csv(&theory))?;
                    em.put(&format!("co-design/{tag}-theory-clone.csv"), &xy_csv(&theory_cf))?;
                }
            }
        }
        FigureKind::Delays => {
            let Sweep::Delays { target, .. } = &scenario.sweep else { unreachable!() };
            let series = delay_series(&load_means(run)?)?;
            let stem = format!("randomized-delays/randomized_{}_delays_confint", target.label());
            em.put(&format!("{stem}_bound.txt"), &error_bars(&series.bound))?;
            em.put(&format!("{stem}_resp.txt"), &error_bars(&series.delayed))?;
        }
        FigureKind::SyncVsNonsync => {
            for s in sync_series(&load_means(run)?)? {
                let tag = chooser_tag(s.chooser, false);
                em.put(
                    &format!("randomized-sync-vs-nonsync/randomized_{tag}_clone_confint.txt"),
                    &error_bars(&s.error),
                )?;
                em.put(
                    &format!("randomized-sync-vs-nonsync/randomized_{tag}_mean_confint.txt"),
                    &error_bars(&s.normalized),
                )?;
            }
        }
    }
    Ok(em.written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ci(estimate: f64, half_width: f64) -> CiSummary {
        CiSummary {
            estimate,
            half_width,
            replications: 5,
        }
    }

    #[test]
    fn polygon_walks_lower_then_upper() {
        let p = band_polygon(&[(0.3, 2.0, 3.0), (0.1, 1.0, 1.5), (0.2, 1.2, 2.0)]);
        assert_eq!(
            p,
            vec![(0.1, 1.0), (0.2, 1.2), (0.3, 2.0), (0.3, 3.0), (0.2, 2.0), (0.1, 1.5)]
        );
    }

    #[test]
    fn csv_and_error_bars_round_trip() {
        let pts = vec![(0.1, 1.0 / 3.0), (1e-9, 12.5), (0.7, 2.0)];
        assert_eq!(parse_xy_csv(&xy_csv(&pts)).unwrap(), pts);
        let series = vec![(0.01, ci(1.0000001, 0.0042)), (0.8, ci(1.25, 0.1 + 0.2))];
        let rows = parse_error_bars(&error_bars(&series)).unwrap();
        assert_eq!(rows, vec![[0.01, 0.0, 1.0000001, 0.0042], [0.8, 0.0, 1.25, 0.1 + 0.2]]);
        assert!(parse_error_bars("1 2 3").is_err());
        assert!(parse_xy_csv("1,2\n").is_err());
    }

    #[test]
    fn figure_kinds_parse() {
        for k in FigureKind::ALL {
            assert_eq!(k.label().parse::<FigureKind>().unwrap(), k);
        }
        assert!("fig3".parse::<FigureKind>().is_err());
    }

    fn clustered(rate: f64, cf: usize, means: Vec<f64>) -> CellMeans {
        let params = CellParams {
            role: CellRole::Clustered,
            arrival_rate: rate,
            clone_factor: Some(cf),
            chooser: None,
            magnitude: None,
            load: None,
        };
        CellMeans {
            key: format!("{rate}-{cf}"),
            params,
            means,
        }
    }

    #[test]
    fn best_point_and_plausible_range() {
        let cells = vec![
            clustered(0.2, 1, vec![2.0, 2.1, 1.9]),
            clustered(0.2, 2, vec![1.0, 1.1, 0.9]),
            clustered(0.2, 4, vec![1.05, 1.15, 0.95]),
            clustered(0.1, 1, vec![3.0, 3.0, 3.0]),
        ];
        let best = best_per_rate(&cells, None).unwrap();
        assert_eq!(best.len(), 2);
        assert_eq!(best[0].arrival_rate, 0.1);
        assert_eq!(best[1].clone_factor, 2);
        assert_eq!(best[1].plausible, (2, 4));
    }
}
