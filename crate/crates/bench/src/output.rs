//! CSV tables, plot scripts and the run manifest.

use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ScenarioConfig;
use crate::error::{BenchError, Result};
use crate::sweep::{ConvergenceRow, SweepResult};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const PER_USER_CSV: &str = "per_user.csv";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

pub const SWEEP_HEADER: [&str; 7] = [
    "dl_snr_db",
    "strategy",
    "K",
    "avg_capacity_bits",
    "sum_capacity_bits",
    "pilots",
    "seed",
];

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct FlagRecord<'a> {
    dl_snr_db: f64,
    strategy: &'a str,
    #[serde(rename = "K")]
    k: usize,
    reason: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    rows: usize,
    files: Vec<&'a str>,
    flagged: Vec<FlagRecord<'a>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let csv_err = |source| BenchError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

fn manifest(
    dir: &Path,
    cfg: &ScenarioConfig,
    command: &str,
    rows: usize,
    files: Vec<&str>,
    flagged: Vec<FlagRecord<'_>>,
) -> Result<PathBuf> {
    let m = Manifest {
        command,
        config_sha256: cfg.content_hash(),
        seed: cfg.seed,
        rows,
        files,
        flagged,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
    write_file(dir, MANIFEST_JSON, &text)
}

/// Writes `sweep.csv`, `per_user.csv`, both plot scripts and
/// `manifest.json` into `dir`, creating it if needed. Output is a pure
/// function of the configuration, so repeated runs are byte-identical.
pub fn emit_outputs(
    result: &SweepResult,
    cfg: &ScenarioConfig,
    dir: &Path,
    command: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let seed = cfg.seed.to_string();
    let sweep: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.dl_snr_db.to_string(),
                r.strategy.as_str().to_string(),
                r.num_users.to_string(),
                fmt_float(r.avg_capacity),
                fmt_float(r.sum_capacity),
                r.pilots.to_string(),
                seed.clone(),
            ]
        })
        .collect();
    let per_user: Vec<Vec<String>> = result
        .rows
        .iter()
        .flat_map(|r| {
            r.per_user.iter().enumerate().map(move |(k, c)| {
                vec![
                    r.dl_snr_db.to_string(),
                    r.strategy.as_str().to_string(),
                    r.num_users.to_string(),
                    (k + 1).to_string(),
                    fmt_float(*c),
                ]
            })
        })
        .collect();
    let mut paths = vec![
        write_csv(dir, SWEEP_CSV, &SWEEP_HEADER, &sweep)?,
        write_csv(
            dir,
            PER_USER_CSV,
            &["dl_snr_db", "strategy", "K", "user", "capacity_bits"],
            &per_user,
        )?,
        write_file(dir, "capacity_vs_snr.py", CAPACITY_PLOT)?,
        write_file(dir, "pilots_vs_snr.py", PILOTS_PLOT)?,
    ];
    let flagged = result
        .flags
        .iter()
        .map(|f| FlagRecord {
            dl_snr_db: f.dl_snr_db,
            strategy: f.strategy.as_str(),
            k: f.num_users,
            reason: &f.reason,
        })
        .collect();
    let files = vec![SWEEP_CSV, PER_USER_CSV, "capacity_vs_snr.py", "pilots_vs_snr.py"];
    paths.push(manifest(dir, cfg, command, result.rows.len(), files, flagged)?);
    Ok(paths)
}

/// Writes `convergence.csv`, its plot script and `manifest.json`.
pub fn emit_convergence(rows: &[ConvergenceRow], cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.num_antennas.to_string(),
                fmt_float(r.coherence),
                fmt_float(r.large_antenna_avg),
                fmt_float(r.optimal_avg),
                fmt_float(r.capacity_gap_bits),
                r.optimal_converged.to_string(),
                cfg.seed.to_string(),
            ]
        })
        .collect();
    let paths = vec![
        write_csv(
            dir,
            CONVERGENCE_CSV,
            &[
                "M",
                "coherence",
                "large_antenna_avg_bits",
                "optimal_avg_bits",
                "capacity_gap_bits",
                "optimal_converged",
                "seed",
            ],
            &table,
        )?,
        write_file(dir, "convergence.py", CONVERGENCE_PLOT)?,
        manifest(
            dir,
            cfg,
            "converge",
            rows.len(),
            vec![CONVERGENCE_CSV, "convergence.py"],
            Vec::new(),
        )?,
    ];
    Ok(paths)
}

const CAPACITY_PLOT: &str = r#"import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "sweep.csv"
series = defaultdict(list)
with open(path) as f:
    for row in csv.DictReader(f):
        key = (row["strategy"], int(row["K"]))
        series[key].append((float(row["dl_snr_db"]), float(row["avg_capacity_bits"])))

for (strategy, k), pts in sorted(series.items()):
    pts.sort()
    plt.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{strategy}, K={k}")
plt.xlabel("DL SNR [dB]")
plt.ylabel("average capacity [bits]")
plt.grid(True)
plt.legend()
plt.savefig("capacity_vs_snr.png", dpi=150)
"#;

const PILOTS_PLOT: &str = r#"import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "sweep.csv"
series = defaultdict(list)
with open(path) as f:
    for row in csv.DictReader(f):
        key = (row["strategy"], int(row["K"]))
        series[key].append((float(row["dl_snr_db"]), int(row["pilots"])))

for (strategy, k), pts in sorted(series.items()):
    pts.sort()
    plt.step([p[0] for p in pts], [p[1] for p in pts], where="mid", marker="s", label=f"{strategy}, K={k}")
plt.xlabel("DL SNR [dB]")
plt.ylabel("pilots T")
plt.grid(True)
plt.legend()
plt.savefig("pilots_vs_snr.png", dpi=150)
"#;

const CONVERGENCE_PLOT: &str = r#"import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "convergence.csv"
with open(path) as f:
    rows = list(csv.DictReader(f))
m = [int(r["M"]) for r in rows]
fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
a.semilogx(m, [float(r["coherence"]) for r in rows], marker="o")
a.set_xlabel("M")
a.set_ylabel("cross-user coherence")
b.semilogx(m, [float(r["capacity_gap_bits"]) for r in rows], marker="o")
b.set_xlabel("M")
b.set_ylabel("optimal - large antenna [bits]")
for ax in (a, b):
    ax.grid(True)
fig.tight_layout()
fig.savefig("convergence.png", dpi=150)
"#;
