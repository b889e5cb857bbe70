//! Scenario runner: runs, sweeps and the inequality verifier, with their
//! output files.
//!
//! A run directory holds
//! - `diagnostics.csv`: a header row, then one row per cadence tick with the
//!   columns of [`DiagnosticsRecord::COLUMNS`], every value written as
//!   `{:.16e}` (17 significant digits, `NaN` for undefined entries);
//! - `snapshot_<k>_<field>.txt` for the k-th requested snapshot time: two
//!   header lines `# nx ny lx ly t field` and the values, then `ny` rows of
//!   `nx` values (row `j` is the j-th cell row from `y = 0`); the snapshot is
//!   taken at the first step reaching the requested time and the header
//!   records the actual time;
//! - `summary.json`: termination reason, exit code, final time, peaks and the
//!   energy constants used;
//! - `config.toml`: the resolved configuration.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ScenarioConfig};
use crate::diagnostics::{
    empirical_gn_ratio, make_energy_params, verify_interpolation_inequality, verify_phi_bound,
    certify_interpolation_constant, BlowupReport, DiagnosticsRecord, EnergyParams,
    PhiBoundReport,
};
use crate::error::Error;
use crate::grid::{integrate, Field};
use crate::model::State;
use crate::stepper::{run, Observer, RunError, RunResult, Stepper, TerminationReason};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "CHEMOTAXIS_OUTPUT_ROOT";

/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for I/O failures and failed verifications.
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("sweep cell ({i}, {j}) [{assignment}]: {source}")]
    Cell {
        i: usize,
        j: usize,
        assignment: String,
        source: Box<ScenarioError>,
    },
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => EXIT_CONFIG,
            ScenarioError::Io(_) => EXIT_OTHER,
            ScenarioError::Cell { source, .. } => source.exit_code(),
        }
    }
}

/// Resolves a configured output directory: relative paths are taken relative
/// to `$CHEMOTAXIS_OUTPUT_ROOT` when it is set, else to the working directory.
pub fn resolve_output_dir(directory: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => Path::new(&root).join(directory),
        _ => directory.to_path_buf(),
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reason: String,
    pub exit_code: i32,
    pub final_t: f64,
    pub steps: usize,
    pub peak_linf_u: f64,
    pub peak_energy_y: f64,
    /// `None` when `mu = 0`, where the constants are undefined.
    pub energy_params: Option<EnergyParams>,
    pub theorem_regime: bool,
    pub hypothesis_warnings: Vec<String>,
    /// Empirical lower bound for the interpolation constant evaluated on `w0`.
    pub gn_ratio_w0: f64,
    pub c_gn: f64,
    pub blowup: Option<BlowupReport>,
    pub message: Option<String>,
    /// Last row written to `diagnostics.csv`.
    pub final_record: Option<DiagnosticsRecord>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub summary: Summary,
    pub result: RunResult,
    pub output_dir: PathBuf,
}

impl ScenarioOutcome {
    pub fn reason(&self) -> TerminationReason {
        self.result.reason
    }

    pub fn exit_code(&self) -> i32 {
        self.result.reason.exit_code()
    }
}

/// Formats one value of a CSV row or snapshot.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Streams diagnostics rows to a CSV file.
pub struct CsvWriter<W: Write> {
    out: W,
    last: Option<DiagnosticsRecord>,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", DiagnosticsRecord::COLUMNS.join(","))?;
        Ok(Self { out, last: None })
    }

    pub fn write_record(&mut self, rec: &DiagnosticsRecord) -> io::Result<()> {
        let row: Vec<String> = rec.values().iter().map(|&v| format_value(v)).collect();
        writeln!(self.out, "{}", row.join(","))?;
        self.last = Some(*rec);
        Ok(())
    }

    pub fn last(&self) -> Option<DiagnosticsRecord> {
        self.last
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> Observer for CsvWriter<W> {
    fn observe(&mut self, _state: &State, record: &DiagnosticsRecord) -> io::Result<()> {
        self.write_record(record)
    }
}

/// Writes one snapshot file.
pub fn write_snapshot(path: &Path, field: &Field, t: f64, name: &str) -> io::Result<()> {
    let g = field.grid();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# nx ny lx ly t field")?;
    writeln!(
        out,
        "# {} {} {} {} {} {}",
        g.nx(),
        g.ny(),
        format_value(g.lx()),
        format_value(g.ly()),
        format_value(t),
        name
    )?;
    for row in field.values().chunks(g.nx()) {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()
}

/// Reads a snapshot file back: `(nx, ny, lx, ly, t, field name, values)`.
pub fn read_snapshot(path: &Path) -> io::Result<(usize, usize, f64, f64, f64, String, Vec<f64>)> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("# nx ny lx ly t field") {
        return Err(bad("missing snapshot header"));
    }
    let meta: Vec<&str> = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| bad("missing snapshot metadata"))?
        .split_whitespace()
        .collect();
    if meta.len() != 6 {
        return Err(bad("snapshot metadata needs six entries"));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer in metadata"));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
    let (nx, ny) = (int(meta[0])?, int(meta[1])?);
    let (lx, ly, t) = (num(meta[2])?, num(meta[3])?, num(meta[4])?);
    let mut values = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for line in lines {
        let row: Vec<f64> = line.split_whitespace().map(num).collect::<io::Result<_>>()?;
        if row.len() != nx {
            return Err(bad("snapshot row has the wrong length"));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != ny {
        return Err(bad("snapshot has the wrong number of rows"));
    }
    Ok((nx, ny, lx, ly, t, meta[5].to_string(), values))
}

/// Writes the four fields at the first step reaching each requested time.
struct SnapshotWriter {
    dir: PathBuf,
    times: Vec<(usize, f64)>,
    next: usize,
    slack: f64,
}

impl SnapshotWriter {
    fn new(dir: &Path, requested: &[f64]) -> Self {
        let mut times: Vec<(usize, f64)> = requested.iter().copied().enumerate().collect();
        times.sort_by(|a, b| a.1.total_cmp(&b.1));
        let scale = requested.iter().fold(1.0_f64, |m, &t| m.max(t.abs()));
        Self {
            dir: dir.to_path_buf(),
            times,
            next: 0,
            slack: 1e-12 * scale,
        }
    }
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, state: &State, _record: &DiagnosticsRecord) -> io::Result<()> {
        while let Some(&(k, t)) = self.times.get(self.next) {
            if state.t < t - self.slack {
                break;
            }
            for (name, field) in state.fields() {
                let path = self.dir.join(format!("snapshot_{k:03}_{name}.txt"));
                write_snapshot(&path, field, state.t, name)?;
            }
            self.next += 1;
        }
        Ok(())
    }

    fn every_step(&self) -> bool {
        self.next < self.times.len()
    }
}

/// Runs `config`, writing its outputs to `out_dir`.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutcome, ScenarioError> {
    run_scenario_with(config, out_dir, &mut [])
}

/// Like [`run_scenario`], with extra observers called alongside the writers.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    out_dir: &Path,
    extra: &mut [&mut dyn Observer],
) -> Result<ScenarioOutcome, ScenarioError> {
    config.validate()?;
    let grid = config.grid_spec()?;
    let params = config.model_params()?;
    let controls = config.step_controls();
    let stepper = Stepper::new(grid, params, controls)
        .map_err(|e| ConfigError::new("controls", e.to_string()))?;

    let sample = |key: &str, offset: u64, gen: &crate::init::Generator| {
        let field = gen
            .sample(grid, config.seed.wrapping_add(offset))
            .map_err(|e| ConfigError::new(key, e.to_string()))?;
        if let Some((i, j, value)) = field.first_non_finite() {
            return Err(ConfigError::new(
                key,
                format!("non-finite initial value {value} at cell ({i}, {j})"),
            ));
        }
        if let Some(k) = field.values().iter().position(|&v| v < 0.0) {
            let (i, j) = grid.cell(k);
            return Err(ConfigError::new(
                key,
                format!("negative initial value {} at cell ({i}, {j})", field.values()[k]),
            ));
        }
        Ok(field)
    };
    let u0 = sample("initial.u", 0, &config.initial.u)?;
    let w0 = sample("initial.w", 1, &config.initial.w)?;
    let v0 = config.initial.v.as_ref().map(|g| sample("initial.v", 2, g)).transpose()?;
    let z0 = config.initial.z.as_ref().map(|g| sample("initial.z", 3, g)).transpose()?;

    let gn_ratio_w0 = empirical_gn_ratio(&w0).map_err(|e| ConfigError::new("initial.w", e.to_string()))?;
    if config.energy.c_gn < gn_ratio_w0 {
        log::warn!(
            "energy.c_gn = {} is below the empirical ratio {gn_ratio_w0} of w0; \
             it cannot be a valid interpolation constant",
            config.energy.c_gn
        );
    }
    for w in params.hypothesis_warnings() {
        log::warn!("outside the global-boundedness regime: {w}");
    }
    let energy_params = if params.mu > 0.0 {
        Some(
            make_energy_params(&params, integrate(&w0), grid.area(), config.energy.c_gn)
                .map_err(|e| ConfigError::new("energy.c_gn", e.to_string()))?,
        )
    } else {
        None
    };

    let initial = stepper
        .initial_state(u0, w0, v0, z0)
        .map_err(|e| ConfigError::new("initial", e.to_string()))?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.toml"), config.to_toml_string())?;

    let mut options = config.run_options();
    options.energy = energy_params;
    let mut csv = CsvWriter::new(BufWriter::new(File::create(out_dir.join("diagnostics.csv"))?))?;
    let mut snaps = SnapshotWriter::new(out_dir, &config.output.snapshot_times);

    log::info!(
        "running tau = {} p = {} mu = {} r = {} on {}x{} to t = {}",
        params.tau,
        params.p,
        params.mu,
        params.r,
        grid.nx(),
        grid.ny(),
        options.t_end
    );
    let result = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut csv, &mut snaps];
        for obs in extra.iter_mut() {
            observers.push(&mut **obs);
        }
        run(initial, &stepper, &options, &mut observers)
    };
    let result = match result {
        Ok(r) => r,
        Err(RunError::Observer(e)) => return Err(e.into()),
        Err(RunError::Invalid(e)) => return Err(ConfigError::new("", e.to_string()).into()),
    };
    let final_record = csv.last();
    csv.finish()?;

    let summary = Summary {
        reason: result.reason.as_str().to_string(),
        exit_code: result.reason.exit_code(),
        final_t: result.final_state.t,
        steps: result.steps,
        peak_linf_u: result.peak_linf_u,
        peak_energy_y: result.peak_energy,
        energy_params,
        theorem_regime: params.theorem_regime(),
        hypothesis_warnings: params.hypothesis_warnings(),
        gn_ratio_w0,
        c_gn: config.energy.c_gn,
        blowup: result.blowup.clone(),
        message: result.message.clone(),
        final_record,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")?;
    log::info!("finished: {} at t = {} after {} steps", summary.reason, summary.final_t, summary.steps);

    Ok(ScenarioOutcome {
        summary,
        result,
        output_dir: out_dir.to_path_buf(),
    })
}

/// One axis of a sweep: a dotted numeric key and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// Parses `key=v1,v2,...`.
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        let (key, list) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::new(spec, "sweep axis must look like key=v1,v2"))?;
        let key = key.trim();
        let values = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| ConfigError::new(key, format!("`{}` is not a number", s.trim())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(ConfigError::new(key, "sweep axis has no values"));
        }
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub i: usize,
    pub j: usize,
    pub value1: f64,
    pub value2: Option<f64>,
    pub reason: TerminationReason,
    pub final_t: f64,
    pub peak_linf_u: f64,
    pub peak_energy_y: f64,
    pub runtime_s: f64,
}

/// Runs every combination of the axis values; cell `(i, j)` writes to
/// `out_root/cell_<i>_<j>`. Cells run concurrently and the rows come back
/// sorted by `(i, j)`. All cell configs are built before any run starts, so
/// a bad key or value aborts the sweep without output.
pub fn run_sweep(
    base: &ScenarioConfig,
    axis1: &SweepAxis,
    axis2: Option<&SweepAxis>,
    out_root: &Path,
) -> Result<Vec<SweepRow>, ScenarioError> {
    let second: Vec<Option<f64>> = match axis2 {
        Some(a) => a.values.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let mut cells = Vec::new();
    for (i, &v1) in axis1.values.iter().enumerate() {
        for (j, &v2) in second.iter().enumerate() {
            let assignment = match (axis2, v2) {
                (Some(a), Some(v2)) => format!("{}={v1}, {}={v2}", axis1.key, a.key),
                _ => format!("{}={v1}", axis1.key),
            };
            let cell_err = |e: ConfigError| ScenarioError::Cell {
                i,
                j,
                assignment: assignment.clone(),
                source: Box::new(e.into()),
            };
            let mut cfg = base.with_value(&axis1.key, v1).map_err(cell_err)?;
            if let (Some(a), Some(v2)) = (axis2, v2) {
                cfg = cfg.with_value(&a.key, v2).map_err(cell_err)?;
            }
            let dir = out_root.join(format!("cell_{i}_{j}"));
            cfg.output.directory = dir.clone();
            cells.push((i, j, v1, v2, assignment, cfg, dir));
        }
    }
    std::fs::create_dir_all(out_root)?;

    let mut rows = cells
        .into_par_iter()
        .map(|(i, j, v1, v2, assignment, cfg, dir)| {
            let start = Instant::now();
            let outcome = run_scenario(&cfg, &dir).map_err(|e| ScenarioError::Cell {
                i,
                j,
                assignment,
                source: Box::new(e),
            })?;
            Ok(SweepRow {
                i,
                j,
                value1: v1,
                value2: v2,
                reason: outcome.reason(),
                final_t: outcome.summary.final_t,
                peak_linf_u: outcome.summary.peak_linf_u,
                peak_energy_y: outcome.summary.peak_energy_y,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    rows.sort_by_key(|r| (r.i, r.j));

    let mut out = BufWriter::new(File::create(out_root.join("sweep.csv"))?);
    let key2 = axis2.map(|a| a.key.as_str()).unwrap_or("");
    writeln!(
        out,
        "i,j,{},{},reason,exit_code,final_t,peak_linf_u,peak_energy_y,runtime_s",
        axis1.key,
        if key2.is_empty() { "-" } else { key2 }
    )?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.3}",
            r.i,
            r.j,
            format_value(r.value1),
            r.value2.map(format_value).unwrap_or_default(),
            r.reason,
            r.reason.exit_code(),
            format_value(r.final_t),
            format_value(r.peak_linf_u),
            format_value(r.peak_energy_y),
            r.runtime_s
        )?;
    }
    out.flush()?;
    Ok(rows)
}

/// One `delta` of the inequality report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub delta: f64,
    pub c_delta: f64,
    pub argmax_u: f64,
    pub samples: usize,
    pub refinements: usize,
    pub holds: bool,
    /// Sample count of the independent re-check, ten times the scan's.
    pub recheck_samples: usize,
    pub recheck_violations: usize,
    pub pass: bool,
}

/// Contents of `inequalities.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub p: f64,
    pub u_max: f64,
    pub rows: Vec<InequalityRow>,
    /// `C(delta)` does not increase with `delta`.
    pub monotone: bool,
    pub phi_bound: PhiBoundReport,
    pub all_pass: bool,
}

/// Computes `C(delta)` for every delta, re-checks each constant on a ten
/// times finer grid, and scans `phi(u) <= u`.
pub fn verify_command(p: f64, deltas: &[f64], u_max: f64, samples: usize) -> Result<VerifyReport, Error> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1), got {p}")));
    }
    let rows = deltas
        .iter()
        .map(|&delta| {
            let rep = verify_interpolation_inequality(p, delta, u_max, samples)?;
            let recheck_samples = 10 * rep.samples;
            let recheck_violations =
                certify_interpolation_constant(p, delta, rep.c_delta, u_max, recheck_samples);
            Ok(InequalityRow {
                delta,
                c_delta: rep.c_delta,
                argmax_u: rep.argmax_u,
                samples: rep.samples,
                refinements: rep.refinements,
                holds: rep.holds,
                recheck_samples,
                recheck_violations,
                pass: rep.holds && recheck_violations == 0,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut by_delta: Vec<&InequalityRow> = rows.iter().collect();
    by_delta.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let monotone = by_delta
        .windows(2)
        .all(|w| w[1].c_delta <= w[0].c_delta * (1.0 + 1e-12));
    let phi_bound = verify_phi_bound(u_max, samples)?;
    let all_pass = monotone && phi_bound.holds && rows.iter().all(|r| r.pass);
    Ok(VerifyReport {
        p,
        u_max,
        rows,
        monotone,
        phi_bound,
        all_pass,
    })
}

/// Writes `inequalities.json` into `out_dir`.
pub fn write_verify_report(report: &VerifyReport, out_dir: &Path) -> io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("inequalities.json");
    let json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_values_use_17_significant_digits() {
        assert_eq!(format_value(0.1), "1.0000000000000001e-1");
        assert_eq!(format_value(-2.5), "-2.5000000000000000e0");
        assert_eq!(format_value(f64::NAN), "NaN");
        let v: f64 = format_value(std::f64::consts::PI).parse().unwrap();
        assert_eq!(v, std::f64::consts::PI);
    }

    #[test]
    fn sweep_axis_parsing() {
        let a = SweepAxis::parse("model.p=0,0.5, 0.9").unwrap();
        assert_eq!(a.key, "model.p");
        assert_eq!(a.values, vec![0.0, 0.5, 0.9]);
        assert_eq!(SweepAxis::parse("model.p=0,x").unwrap_err().key, "model.p");
        assert!(SweepAxis::parse("model.p").is_err());
    }

    #[test]
    fn verify_rejects_p_one_and_handles_large_delta() {
        assert!(verify_command(1.0, &[0.1], 1e6, 256).is_err());
        let rep = verify_command(0.5, &[1.5], 1e6, 256).unwrap();
        assert_eq!(rep.rows[0].c_delta, 0.0);
        assert!(rep.all_pass);
    }
}
