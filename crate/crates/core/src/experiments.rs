//! Run configuration and the three reproducible experiments: time-resolved
//! dynamics, chirp-rate sweeps and instantaneous spectra. Everything is
//! emitted as CSV plus a JSON metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::drive::{
    diabatic_energies, instantaneous_spectrum, DriveParams, DEFAULT_ALPHA_FACTOR, DEFAULT_CHI,
    DEFAULT_OMEGA_MAX_FACTOR,
};
use crate::dynamics::{evolve, initial_css, IntegratorConfig, Trajectory};
use crate::error::{Error, Result};
use crate::gauge::CorrectionScheme;
use crate::spin_algebra::{SpinBasis, SpinOperators};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// Chirp-rate grid in units of `χ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 1.0,
            count: 10,
            spacing: Spacing::Linear,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Error::Config {
            key: format!("sweep.{key}"),
            reason: reason.into(),
        };
        if self.count == 0 {
            return Err(bad("count", "must be >= 1"));
        }
        if !(self.min.is_finite() && self.min > 0.0) {
            return Err(bad("min", "must be > 0"));
        }
        if !self.max.is_finite() || (self.count > 1 && self.max <= self.min) || self.max < self.min
        {
            return Err(bad("max", "must exceed min"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let f = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.min + (self.max - self.min) * f,
                    Spacing::Log => self.min * (self.max / self.min).powf(f),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// One dynamics row (and one stored state) every this many steps.
    pub decimation: usize,
    /// Adiabatic levels in the spectrum; `min(5, dim)` when absent.
    pub spectrum_levels: Option<usize>,
    pub spectrum_points: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            decimation: 100,
            spectrum_levels: None,
            spectrum_points: 1401,
        }
    }
}

fn default_chi() -> f64 {
    DEFAULT_CHI
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA_FACTOR
}
fn default_omega_factor() -> f64 {
    DEFAULT_OMEGA_MAX_FACTOR
}
fn default_schemes() -> Vec<CorrectionScheme> {
    [
        "none",
        "mid-cd1",
        "mid-cd2",
        "mid-cd3",
        "off-cd1+mid-cd1",
        "off-cd1+mid-cd3",
    ]
    .iter()
    .map(|s| s.parse().expect("built-in scheme"))
    .collect()
}

/// Run-level parameters. `alpha` and the sweep bounds are in units of `χ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_atoms: usize,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_omega_factor")]
    pub omega_max_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub scheme: CorrectionScheme,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<CorrectionScheme>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl RunConfig {
    /// Reference parameters for `n_atoms`.
    pub fn new(n_atoms: usize) -> Self {
        Self {
            n_atoms,
            chi: DEFAULT_CHI,
            alpha: DEFAULT_ALPHA_FACTOR,
            omega_max_factor: DEFAULT_OMEGA_MAX_FACTOR,
            sweep: None,
            scheme: CorrectionScheme::none(),
            schemes: default_schemes(),
            integrator: IntegratorConfig::default(),
            outputs: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Error::Config {
            key: key.into(),
            reason,
        };
        if self.n_atoms == 0 {
            return Err(bad("n_atoms", "must be >= 1".into()));
        }
        if !(self.chi.is_finite() && self.chi > 0.0) {
            return Err(bad("chi", format!("{} is not > 0", self.chi)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(bad("alpha", format!("{} is not > 0", self.alpha)));
        }
        if !(self.omega_max_factor.is_finite() && self.omega_max_factor >= 0.0) {
            return Err(bad(
                "omega_max_factor",
                format!("{} is negative", self.omega_max_factor),
            ));
        }
        if let Some(grid) = &self.sweep {
            grid.validate()?;
        }
        self.scheme
            .validate(self.n_atoms)
            .map_err(|e| bad("scheme", e.to_string()))?;
        if self.schemes.is_empty() {
            return Err(bad("schemes", "must not be empty".into()));
        }
        for s in &self.schemes {
            s.validate(self.n_atoms)
                .map_err(|e| bad("schemes", e.to_string()))?;
        }
        self.integrator.validate()?;
        if self.outputs.decimation == 0 {
            return Err(bad("outputs.decimation", "must be >= 1".into()));
        }
        if self.outputs.spectrum_points < 2 {
            return Err(bad("outputs.spectrum_points", "must be >= 2".into()));
        }
        if self.outputs.spectrum_levels == Some(0) {
            return Err(bad("outputs.spectrum_levels", "must be >= 1".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<SpinBasis> {
        SpinBasis::new(self.n_atoms)
    }

    pub fn params(&self) -> Result<DriveParams> {
        self.params_for(self.alpha)
    }

    pub fn params_for(&self, alpha_factor: f64) -> Result<DriveParams> {
        DriveParams::from_factors(self.chi, alpha_factor, self.omega_max_factor)
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        self.sweep.clone().unwrap_or_default()
    }

    fn dynamics_integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            record_every: self.outputs.decimation,
            state_every: self.outputs.decimation,
            track_ground_state: true,
            ..self.integrator.clone()
        }
    }

    fn sweep_integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            record_every: usize::MAX,
            state_every: usize::MAX,
            track_ground_state: false,
            ..self.integrator.clone()
        }
    }
}

fn config_error(err: serde_json::Error) -> Error {
    let msg = err.to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("<root>")
        .to_string();
    Error::Config { key, reason: msg }
}

/// Parses a config from JSON text. A metadata sidecar is accepted too; its
/// `config` object is used.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(config_error)?;
    let value = match value {
        Value::Object(mut map)
            if map.contains_key("code_version") && map.contains_key("config") =>
        {
            map.remove("config").expect("checked")
        }
        other => other,
    };
    let cfg: RunConfig = serde_json::from_value(value).map_err(config_error)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

/// Fixed 12-significant-digit rendering.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

fn population_headers(basis: &SpinBasis) -> Vec<String> {
    (0..basis.dim())
        .map(|i| format!("P_m={}", basis.m_label(i)))
        .collect()
}

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let row: Vec<String> = cells.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

/// A finished time-resolved run.
#[derive(Clone, Debug)]
pub struct DynamicsRun {
    pub params: DriveParams,
    pub basis: SpinBasis,
    pub scheme: CorrectionScheme,
    pub trajectory: Trajectory,
}

pub fn run_dynamics(cfg: &RunConfig) -> Result<DynamicsRun> {
    cfg.validate()?;
    let params = cfg.params()?;
    let basis = cfg.basis()?;
    let ops = SpinOperators::new(basis);
    let trajectory = evolve(
        &params,
        &ops,
        &cfg.scheme,
        &initial_css(&basis),
        &cfg.dynamics_integrator(),
    )?;
    Ok(DynamicsRun {
        params,
        basis,
        scheme: cfg.scheme,
        trajectory,
    })
}

pub fn dynamics_csv(run: &DynamicsRun) -> String {
    let mut out = String::new();
    let mut header = vec![
        "t".to_string(),
        "t_scaled".into(),
        "beta".into(),
        "omega".into(),
    ];
    header.extend(population_headers(&run.basis));
    header.extend(["fidelity_target".to_string(), "gs_fidelity".into()]);
    push_row(&mut out, header);
    let traj = &run.trajectory;
    for (i, &t) in traj.times.iter().enumerate() {
        let mut row = vec![
            fmt_num(t),
            fmt_num(run.params.scaled_time(t)),
            fmt_num(run.params.beta(t)),
            fmt_num(run.params.omega(t)),
        ];
        row.extend(traj.populations[i].iter().map(|&p| fmt_num(p)));
        row.push(fmt_num(traj.target_fidelity[i]));
        row.push(fmt_num(
            traj.gs_fidelity.get(i).copied().unwrap_or(f64::NAN),
        ));
        push_row(&mut out, row);
    }
    out
}

/// One `(α, scheme)` point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    /// `α` in physical units.
    pub alpha: f64,
    pub scan_factor: f64,
    pub scheme: CorrectionScheme,
    pub outcome: std::result::Result<SweepOutcome, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub final_fidelity: f64,
    pub final_populations: Vec<f64>,
}

/// Runs every scheme at every `α` (units of `χ²`) on a pool of `workers`
/// threads. Rows come back ordered by `α` position, then scheme position.
pub fn run_sweep(
    cfg: &RunConfig,
    alpha_factors: &[f64],
    schemes: &[CorrectionScheme],
    workers: usize,
) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    if schemes.is_empty() {
        return Err(Error::Config {
            key: "schemes".into(),
            reason: "must not be empty".into(),
        });
    }
    let basis = cfg.basis()?;
    let ops = SpinOperators::new(basis);
    let integrator = cfg.sweep_integrator();
    let jobs: Vec<(usize, usize)> = (0..alpha_factors.len())
        .flat_map(|a| (0..schemes.len()).map(move |s| (a, s)))
        .collect();

    let run_one = |&(a, s): &(usize, usize)| -> ((usize, usize), SweepRecord) {
        let scheme = schemes[s];
        let (alpha, scan_factor, outcome) = match cfg.params_for(alpha_factors[a]) {
            Ok(params) => {
                let outcome = evolve(&params, &ops, &scheme, &initial_css(&basis), &integrator)
                    .map(|traj| SweepOutcome {
                        final_fidelity: traj.final_target_fidelity(),
                        final_populations: traj.final_populations().to_vec(),
                    })
                    .map_err(|e| e.to_string());
                (params.alpha(), params.scan_factor(), outcome)
            }
            Err(e) => {
                let alpha = alpha_factors[a] * cfg.chi * cfg.chi;
                (alpha, alpha / (0.1 * cfg.chi * cfg.chi), Err(e.to_string()))
            }
        };
        (
            (a, s),
            SweepRecord {
                alpha,
                scan_factor,
                scheme,
                outcome,
            },
        )
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config {
            key: "workers".into(),
            reason: e.to_string(),
        })?;
    let mut rows: Vec<((usize, usize), SweepRecord)> =
        pool.install(|| jobs.par_iter().map(run_one).collect());
    rows.sort_by_key(|(key, _)| *key);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn sweep_csv(basis: &SpinBasis, records: &[SweepRecord]) -> String {
    let mut out = String::new();
    let mut header = vec![
        "alpha".to_string(),
        "n".into(),
        "scheme_id".into(),
        "final_fidelity".into(),
    ];
    header.extend(population_headers(basis));
    header.push("status".into());
    push_row(&mut out, header);
    for r in records {
        let mut row = vec![
            fmt_num(r.alpha),
            fmt_num(r.scan_factor),
            r.scheme.to_string(),
        ];
        match &r.outcome {
            Ok(o) => {
                row.push(fmt_num(o.final_fidelity));
                row.extend(o.final_populations.iter().map(|&p| fmt_num(p)));
                row.push("ok".into());
            }
            Err(msg) => {
                row.push(fmt_num(f64::NAN));
                row.extend((0..basis.dim()).map(|_| fmt_num(f64::NAN)));
                let clean: String = msg
                    .chars()
                    .map(|c| if c == ',' || c == '\n' { ';' } else { c })
                    .collect();
                row.push(format!("error: {clean}"));
            }
        }
        push_row(&mut out, row);
    }
    out
}

/// Sampled adiabatic and diabatic levels.
#[derive(Clone, Debug)]
pub struct SpectrumTable {
    pub params: DriveParams,
    pub basis: SpinBasis,
    pub levels: usize,
    pub times: Vec<f64>,
    /// Lowest `levels` eigenvalues per time, ascending.
    pub adiabatic: Vec<Vec<f64>>,
    /// `χm² + βm` per time, basis order.
    pub diabatic: Vec<Vec<f64>>,
}

pub fn run_spectrum(cfg: &RunConfig) -> Result<SpectrumTable> {
    cfg.validate()?;
    let params = cfg.params()?;
    let basis = cfg.basis()?;
    let ops = SpinOperators::new(basis);
    let levels = cfg.outputs.spectrum_levels.unwrap_or(5).min(basis.dim());
    let points = cfg.outputs.spectrum_points;
    let (t0, t1) = (params.t_start(), params.t_end());
    let times: Vec<f64> = (0..points)
        .map(|i| t0 + (t1 - t0) * i as f64 / (points - 1) as f64)
        .collect();
    let mut adiabatic = Vec::with_capacity(points);
    let mut diabatic = Vec::with_capacity(points);
    for &t in &times {
        let mut e = instantaneous_spectrum(&params, &ops, t)?;
        e.truncate(levels);
        adiabatic.push(e);
        diabatic.push(diabatic_energies(&params, &basis, t));
    }
    Ok(SpectrumTable {
        params,
        basis,
        levels,
        times,
        adiabatic,
        diabatic,
    })
}

pub fn spectrum_csv(table: &SpectrumTable) -> String {
    let mut out = String::new();
    let mut header = vec!["t".to_string(), "t_scaled".into()];
    header.extend((0..table.levels).map(|k| format!("E_adiabatic_{k}")));
    header
        .extend((0..table.basis.dim()).map(|i| format!("E_diabatic_m={}", table.basis.m_label(i))));
    header.extend((0..table.levels.saturating_sub(1)).map(|k| format!("gap_{k}")));
    push_row(&mut out, header);
    for (i, &t) in table.times.iter().enumerate() {
        let mut row = vec![fmt_num(t), fmt_num(table.params.scaled_time(t))];
        let ad = &table.adiabatic[i];
        row.extend(ad.iter().map(|&e| fmt_num(e)));
        row.extend(table.diabatic[i].iter().map(|&e| fmt_num(e)));
        row.extend(ad.windows(2).map(|w| fmt_num(w[1] - w[0])));
        push_row(&mut out, row);
    }
    out
}

fn write_outputs(
    out_dir: &Path,
    stem: &str,
    csv: &str,
    cfg: &RunConfig,
    started: Instant,
    extra: Value,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv)?;
    let mut meta = json!({
        "code_version": CODE_VERSION,
        "command": stem,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "config": cfg,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut meta, extra) {
        m.extend(e);
    }
    let meta_path = out_dir.join(format!("{stem}.json"));
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok((csv_path, meta_path))
}

pub fn cmd_dynamics(cfg: &RunConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let started = Instant::now();
    let run = run_dynamics(cfg)?;
    let extra = json!({
        "steps": run.trajectory.steps,
        "max_norm_drift": run.trajectory.max_norm_drift,
        "scheme": run.scheme.to_string(),
    });
    write_outputs(
        out_dir,
        "dynamics",
        &dynamics_csv(&run),
        cfg,
        started,
        extra,
    )
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    schemes: &[CorrectionScheme],
    workers: usize,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let started = Instant::now();
    let grid = cfg.sweep_grid();
    grid.validate()?;
    let alphas = grid.values();
    let records = run_sweep(cfg, &alphas, schemes, workers)?;
    let basis = cfg.basis()?;
    let extra = json!({
        "sweep_grid": grid,
        "alpha_grid_chi2_units": alphas,
        "schemes": schemes.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        "workers": workers,
        "failed_runs": records.iter().filter(|r| r.outcome.is_err()).count(),
    });
    write_outputs(
        out_dir,
        "sweep",
        &sweep_csv(&basis, &records),
        cfg,
        started,
        extra,
    )
}

pub fn cmd_spectrum(cfg: &RunConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let started = Instant::now();
    let table = run_spectrum(cfg)?;
    let extra = json!({ "levels": table.levels, "points": table.times.len() });
    write_outputs(
        out_dir,
        "spectrum",
        &spectrum_csv(&table),
        cfg,
        started,
        extra,
    )
}

/// Adjacent diabatic crossings read off a spectrum: `(m, t)` pairs where
/// the tracks of `m` and `m - 1` change order, linearly interpolated.
pub fn diabatic_crossings(table: &SpectrumTable) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..table.basis.dim().saturating_sub(1) {
        let diff: Vec<f64> = table
            .diabatic
            .iter()
            .map(|row| row[i] - row[i + 1])
            .collect();
        for k in 0..diff.len() - 1 {
            let (a, b) = (diff[k], diff[k + 1]);
            if a == 0.0 || (a < 0.0) != (b < 0.0) && b != 0.0 {
                let (t0, t1) = (table.times[k], table.times[k + 1]);
                let t = if a == 0.0 {
                    t0
                } else {
                    t0 + (t1 - t0) * a / (a - b)
                };
                out.push((table.basis.m(i), t));
            }
        }
    }
    out.sort_by(|x, y| x.1.total_cmp(&y.1));
    out
}
