//! Parallel replication runner and on-disk run layout.
//!
//! ```text
//! <out>/manifest.json
//! <out>/timing.json
//! <out>/cells/<cell>/rep-000.f64    post-warm-up responses, little-endian f64
//! <out>/cells/<cell>/rep-000.toml   sidecar
//! ```
//!
//! Everything except `timing.json` depends only on the scenario, so reruns
//! are byte-identical whatever the worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Cell, CellParams, Scenario};
use crate::sim::{simulate, SimOptions};
use crate::stats::ReplicationResult;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub allow_unstable: bool,
    #[doc(hidden)]
    pub fault_drain_scale: Option<f64>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            jobs: 1,
            out_dir: out_dir.into(),
            allow_unstable: false,
            fault_drain_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFile {
    pub replication: u64,
    /// Relative to the manifest directory.
    pub samples: String,
    pub sidecar: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: String,
    pub params: CellParams,
    pub seed: u64,
    pub replications: Vec<ReplicationFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub scenario: Scenario,
    pub warmup: usize,
    pub cells: Vec<CellRecord>,
    /// Wall-clock timings live in their own file so the manifest stays
    /// reproducible.
    pub timing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub cell: String,
    pub replication: u64,
    pub seed: u64,
    pub count: usize,
    pub warmup: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub jobs: usize,
    pub wall_seconds: f64,
    pub cells: Vec<CellTiming>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellTiming {
    pub key: String,
    pub cpu_seconds: f64,
}

/// Runs every `(cell, replication)` pair on a pool of `jobs` workers and
/// hands the post-warm-up responses to `sink`. Results come back in cell
/// order, then replication order.
pub fn execute<T, F>(
    cells: &[Cell],
    replications: usize,
    warmup: usize,
    jobs: usize,
    opts: &SimOptions,
    sink: F,
) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&Cell, u64, &[f64]) -> Result<T> + Sync,
{
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..replications as u64).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Scenario(format!("cannot start worker pool: {e}")))?;
    let flat: Vec<T> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, rep)| {
                let cell = &cells[c];
                let out = simulate(&cell.config, cell.seed, rep, opts)?;
                let kept = out.responses.get(warmup..).unwrap_or(&[]);
                sink(cell, rep, kept)
            })
            .collect::<Result<Vec<T>>>()
    })?;
    let mut grouped: Vec<Vec<T>> = (0..cells.len()).map(|_| Vec::with_capacity(replications)).collect();
    for ((c, _), item) in tasks.iter().zip(flat) {
        grouped[*c].push(item);
    }
    Ok(grouped)
}

/// Replication means and samples kept in memory.
pub fn run_in_memory(
    cells: &[Cell],
    replications: usize,
    warmup: usize,
    jobs: usize,
    opts: &SimOptions,
) -> Result<Vec<Vec<ReplicationResult>>> {
    execute(cells, replications, warmup, jobs, opts, |cell, rep, kept| {
        Ok(ReplicationResult::from_responses(rep, cell.seed, kept, 0)?)
    })
}

fn cell_dir(key: &str) -> String {
    let safe: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("cells/{safe}")
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_samples(samples: &[f64]) -> Vec<u8> {
    samples.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn decode_samples(bytes: &[u8]) -> Option<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

/// Runs a scenario and persists its samples and manifest under
/// `opts.out_dir`.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunManifest> {
    scenario.validate()?;
    if !opts.allow_unstable {
        scenario.check_stability()?;
    }
    let cells = scenario.cells()?;
    let warmup = scenario.warmup();
    let sim_opts = SimOptions {
        fault_drain_scale: opts.fault_drain_scale,
        ..SimOptions::default()
    };
    let out = &opts.out_dir;
    let started = Instant::now();
    let results = execute(&cells, scenario.replications, warmup, opts.jobs, &sim_opts, |cell, rep, kept| {
        let t = Instant::now();
        let dir = cell_dir(&cell.key);
        let samples = format!("{dir}/rep-{rep:03}.f64");
        let sidecar = format!("{dir}/rep-{rep:03}.toml");
        write(&out.join(&samples), &encode_samples(kept))?;
        let mean = ReplicationResult::from_responses(rep, cell.seed, kept, 0)?.mean;
        let side = Sidecar {
            cell: cell.key.clone(),
            replication: rep,
            seed: cell.seed,
            count: kept.len(),
            warmup,
            mean,
        };
        let text = toml::to_string(&side).map_err(|e| Error::Scenario(e.to_string()))?;
        write(&out.join(&sidecar), text.as_bytes())?;
        let file = ReplicationFile {
            replication: rep,
            samples,
            sidecar,
            count: kept.len(),
        };
        Ok((file, t.elapsed().as_secs_f64()))
    })?;

    let mut records = Vec::with_capacity(cells.len());
    let mut timings = Vec::with_capacity(cells.len());
    for (cell, reps) in cells.iter().zip(results) {
        let cpu_seconds = reps.iter().map(|(_, s)| s).sum();
        timings.push(CellTiming {
            key: cell.key.clone(),
            cpu_seconds,
        });
        records.push(CellRecord {
            key: cell.key.clone(),
            params: cell.params.clone(),
            seed: cell.seed,
            replications: reps.into_iter().map(|(f, _)| f).collect(),
        });
    }
    let manifest = RunManifest {
        scenario_hash: scenario.hash(),
        seed: scenario.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: scenario.clone(),
        warmup,
        cells: records,
        timing: TIMING_FILE.to_string(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Scenario(e.to_string()))?;
    write(&out.join(MANIFEST_FILE), &json)?;
    let timing = Timing {
        jobs: opts.jobs,
        wall_seconds: started.elapsed().as_secs_f64(),
        cells: timings,
    };
    let json = serde_json::to_vec_pretty(&timing).map_err(|e| Error::Scenario(e.to_string()))?;
    write(&out.join(TIMING_FILE), &json)?;
    Ok(manifest)
}

/// A manifest together with the directory its relative paths resolve
/// against.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub root: PathBuf,
}

impl LoadedRun {
    /// Accepts either the manifest file or the run directory.
    pub fn open(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        if !file.exists() {
            return Err(Error::MissingFile(file));
        }
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: RunManifest = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: file.clone(),
            message: e.to_string(),
        })?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedRun { manifest, root })
    }

    pub fn cell(&self, key: &str) -> Option<&CellRecord> {
        self.manifest.cells.iter().find(|c| c.key == key)
    }

    pub fn samples(&self, file: &ReplicationFile) -> Result<Vec<f64>> {
        let path = self.root.join(&file.samples);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        match decode_samples(&bytes) {
            Some(v) if v.len() == file.count => Ok(v),
            _ => Err(Error::Parse {
                path,
                message: format!("expected {} little-endian f64 values", file.count),
            }),
        }
    }

    pub fn sidecar(&self, file: &ReplicationFile) -> Result<Sidecar> {
        let path = self.root.join(&file.sidecar);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path,
            message: e.to_string(),
        })
    }

    /// Per-replication means recomputed from the sample files.
    pub fn replication_means(&self, cell: &CellRecord) -> Result<Vec<f64>> {
        cell.replications
            .iter()
            .map(|f| {
                let s = self.samples(f)?;
                Ok(ReplicationResult::from_responses(f.replication, cell.seed, &s, 0)?.mean)
            })
            .collect()
    }

    pub fn pooled_samples(&self, cell: &CellRecord) -> Result<Vec<f64>> {
        let mut all = Vec::new();
        for f in &cell.replications {
            all.extend(self.samples(f)?);
        }
        Ok(all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::presets;

    fn small(name: &str) -> Scenario {
        let mut s = presets::get(name).unwrap().unwrap();
        s.requests = 2_000;
        s.replications = 3;
        s
    }

    #[test]
    fn samples_round_trip() {
        let xs = vec![0.0, 1.5, f64::MIN_POSITIVE, 1e300, 0.1 + 0.2];
        assert_eq!(decode_samples(&encode_samples(&xs)).unwrap(), xs);
        assert!(decode_samples(&[0u8; 7]).is_none());
    }

    #[test]
    fn run_writes_manifest_samples_and_sidecars() {
        let dir = tempfile::tempdir().unwrap();
        let s = small("sim_gg1_3dist");
        let m = run(&s, &RunOptions::new(dir.path())).unwrap();
        assert_eq!(m.cells.len(), 2);
        let loaded = LoadedRun::open(dir.path()).unwrap();
        assert_eq!(loaded.manifest, m);
        for cell in &m.cells {
            assert_eq!(cell.replications.len(), 3);
            let means = loaded.replication_means(cell).unwrap();
            for (f, mean) in cell.replications.iter().zip(means) {
                let side = loaded.sidecar(f).unwrap();
                assert_eq!(side.count, 2_000 - s.warmup());
                assert_eq!(side.mean, mean);
            }
        }
    }

    #[test]
    fn missing_replication_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = run(&small("sim_gg1_3dist"), &RunOptions::new(dir.path())).unwrap();
        let victim = dir.path().join(&m.cells[0].replications[1].samples);
        fs::remove_file(&victim).unwrap();
        let loaded = LoadedRun::open(dir.path()).unwrap();
        let err = loaded.replication_means(&m.cells[0]).unwrap_err();
        assert!(matches!(err, Error::MissingFile(p) if p == victim));
    }

    #[test]
    fn unstable_run_needs_override() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = small("sim_gg1_3dist");
        s.arrival_rate = 5.0;
        s.requests = 300;
        assert!(matches!(run(&s, &RunOptions::new(dir.path())), Err(Error::Unstable(_))));
        let mut opts = RunOptions::new(dir.path());
        opts.allow_unstable = true;
        run(&s, &opts).unwrap();
    }

    #[test]
    fn in_memory_matches_disk() {
        let dir = tempfile::tempdir().unwrap();
        let s = small("sim_randomized_arrival_delays");
        let m = run(&s, &RunOptions::new(dir.path())).unwrap();
        let cells = s.cells().unwrap();
        let mem = run_in_memory(&cells, s.replications, s.warmup(), 2, &SimOptions::default()).unwrap();
        let loaded = LoadedRun::open(dir.path()).unwrap();
        for (rec, reps) in m.cells.iter().zip(mem) {
            let disk = loaded.replication_means(rec).unwrap();
            let mem: Vec<f64> = reps.iter().map(|r| r.mean).collect();
            assert_eq!(disk, mem);
        }
    }
}
