//! Command configurations and their runs.

use std::fs;
use std::path::{Path, PathBuf};

use conic_ke::bergman::{associated_hermitian_weight, bergman_density, conic_ke_metric, gram_matrix, partial_c0_scan, KeSource};
use conic_ke::cone_analysis::{
    ball_cover_cutoff, capacity_at_rule, dirichlet_energy, flat_cone_metric, loglog_cutoff, tube_volume,
    volume_ratio_profile, Annulus, LogLogCutoff, MonteCarlo, SingularSpec, VolumeSource,
};
use conic_ke::geometry::{
    football_potential, fubini_study_potential, refined_cone_angle, ConeConfiguration, ConePoint, Pole, PointLocation,
    RadialKahlerPotential,
};
use conic_ke::ma_solver::{
    continuity_path, relative_potential, ricci_lower_bound_margin, smoothing_family, solve_ma, Schedule, SolverConfig,
};
use conic_ke::stability::{futaki, obstruction_scan, ObstructionFlag, PointConfiguration};
use conic_ke::Grid;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{num, GridEcho, RunDir, Table};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: f64,
    pub n_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = Grid::default();
        GridConfig { t_max: g.t_max(), n_nodes: g.len() }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.t_max, self.n_nodes)?)
    }

    fn echo(&self) -> Option<GridEcho> {
        Some(GridEcho { t_max: self.t_max, n_nodes: self.n_nodes })
    }
}

/// Reads a JSON config file, or the defaults when no file is given.
pub fn load<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn echo<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn profile_table(pot: &RadialKahlerPotential) -> Table {
    let mut t = Table::new(&["t", "phi_prime", "phi_doubleprime"]);
    for i in 0..pot.len() {
        t.numeric_row(&[pot.grid.t(i), pot.phi_prime[i], pot.phi_doubleprime[i]]);
    }
    t
}

/// Reads a `t,phi_prime,phi_doubleprime` profile on a uniform symmetric grid.
pub fn read_profile(path: &Path) -> Result<RadialKahlerPotential, CliError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != "t,phi_prime,phi_doubleprime" {
        return Err(conic_ke::Error::Parse(format!("{}: unexpected header {header:?}", path.display())).into());
    }
    let mut cols = [Vec::new(), Vec::new(), Vec::new()];
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(conic_ke::Error::Parse(format!("line {}: expected 3 fields", k + 2)).into());
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.push(f.trim().parse::<f64>().map_err(|e| conic_ke::Error::Parse(format!("line {}: {e}", k + 2)))?);
        }
    }
    let [t, d1, d2] = cols;
    let n = t.len();
    if n < 9 {
        return Err(conic_ke::Error::Parse("profile has fewer than 9 rows".into()).into());
    }
    let grid = Grid::new(t[n - 1], n)?;
    if t.iter().enumerate().any(|(i, v)| (v - grid.t(i)).abs() > 1e-9 * grid.t_max()) {
        return Err(conic_ke::Error::Parse("profile nodes are not a uniform symmetric grid".into()).into());
    }
    let pot = RadialKahlerPotential::from_profiles(grid, d1, d2, 0.0, (1.0, 1.0))?;
    let angle = |p| refined_cone_angle(&pot, p).unwrap_or(1.0);
    let angles = (angle(Pole::Zero), angle(Pole::Infinity));
    Ok(RadialKahlerPotential { angle_at_zero: angles.0, angle_at_infinity: angles.1, ..pot })
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub beta: f64,
    pub delta: f64,
    /// Defaults to `mu`.
    pub tau: Option<f64>,
    pub grid: GridConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { beta: 1.0, delta: 0.0, tau: None, grid: GridConfig::default() }
    }
}

pub fn solve(cfg: &SolveConfig, out: &Path) -> Result<String, CliError> {
    let grid = cfg.grid.build()?;
    let cone = ConeConfiguration::football(cfg.beta)?;
    let tau = cfg.tau.unwrap_or(cone.mu());
    let solver = SolverConfig::new(cone, cfg.delta, tau)?;
    let sol = solve_ma(&solver, &fubini_study_potential(grid))?;
    let mut run = RunDir::create(out)?;
    run.table("solution.csv", &profile_table(&sol.potential))?;
    let mut phi = Table::new(&["t", "phi"]);
    for (i, v) in relative_potential(&sol.potential).iter().enumerate() {
        phi.numeric_row(&[grid.t(i), *v]);
    }
    run.table("potential.csv", &phi)?;
    let summary = json!({ "iterations": sol.iterations, "residual": sol.residual, "tau": tau });
    run.finish("solve", echo(cfg), cfg.grid.echo(), None, summary)?;
    Ok(format!("converged in {} iterations, residual {}", sol.iterations, num(sol.residual)))
}

// ---------------------------------------------------------------- continue-path

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub beta: f64,
    pub delta: f64,
    pub grid: GridConfig,
    pub schedule: Schedule,
    /// Also write one solution profile per accepted step.
    pub step_profiles: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { beta: 0.8, delta: 1e-3, grid: GridConfig::default(), schedule: Schedule::default(), step_profiles: true }
    }
}

pub fn continue_path(cfg: &PathConfig, out: &Path) -> Result<String, CliError> {
    let grid = cfg.grid.build()?;
    let trace = continuity_path(&ConeConfiguration::football(cfg.beta)?, cfg.delta, &cfg.schedule, &grid)?;
    let mut run = RunDir::create(out)?;
    let mut table = Table::new(&["tau", "J", "F", "lambda1", "newton_iters", "residual"]);
    for s in &trace.steps {
        table.row(vec![num(s.tau), num(s.j), num(s.f), num(s.lambda1), s.newton_iterations.to_string(), num(s.residual)]);
    }
    run.table("trace.csv", &table)?;
    if cfg.step_profiles {
        for (k, s) in trace.steps.iter().enumerate() {
            run.table(&format!("step_{k:04}.csv"), &profile_table(&s.solution.potential))?;
        }
    }
    let summary = json!({ "steps": trace.steps.len(), "rejected_steps": trace.rejected_steps, "mu": trace.mu });
    run.finish("continue-path", echo(cfg), cfg.grid.echo(), None, summary)?;
    Ok(format!("{} accepted steps, {} rejected", trace.steps.len(), trace.rejected_steps))
}

// ---------------------------------------------------------------- smooth-family

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyConfig {
    pub beta: f64,
    pub deltas: Vec<f64>,
    pub grid: GridConfig,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig { beta: 0.75, deltas: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5], grid: GridConfig::default() }
    }
}

pub fn smooth_family(cfg: &FamilyConfig, out: &Path) -> Result<String, CliError> {
    let grid = cfg.grid.build()?;
    let cone = ConeConfiguration::football(cfg.beta)?;
    let fam = smoothing_family(&cone, &cfg.deltas, &grid)?;
    let mut run = RunDir::create(out)?;
    let mut table = Table::new(&["delta", "distance", "core_distance", "min_ricci_margin"]);
    let mut worst = f64::INFINITY;
    for m in &fam.members {
        let margin = ricci_lower_bound_margin(&m.solution.potential, &cone, m.delta).min_margin;
        worst = worst.min(margin);
        table.numeric_row(&[m.delta, m.distance, m.core_distance, margin]);
    }
    run.table("family.csv", &table)?;
    run.table("conic.csv", &profile_table(&fam.conic.potential))?;
    let summary = json!({ "monotone": fam.monotone, "min_ricci_margin": worst });
    run.finish("smooth-family", echo(cfg), cfg.grid.echo(), None, summary)?;
    Ok(format!("{} members, monotone {}", fam.members.len(), fam.monotone))
}

// ---------------------------------------------------------------- bergman-scan

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub betas: Vec<f64>,
    pub ells: Vec<u32>,
    pub grid: GridConfig,
    pub source: KeSource,
    /// Also write `t,rho` for every cell.
    pub profiles: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            betas: vec![0.6, 0.8, 1.0],
            ells: vec![2, 4, 8, 16],
            grid: GridConfig::default(),
            source: KeSource::ClosedForm,
            profiles: false,
        }
    }
}

pub fn bergman_scan(cfg: &ScanConfig, out: &Path) -> Result<String, CliError> {
    let grid = cfg.grid.build()?;
    let rows = partial_c0_scan(&cfg.betas, &cfg.ells, grid, cfg.source)?;
    let mut run = RunDir::create(out)?;
    let mut table = Table::new(&["beta", "ell", "inf_rho", "sup_rho", "trace_check"]);
    for r in &rows {
        table.row(vec![num(r.beta), r.ell.to_string(), num(r.inf_rho), num(r.sup_rho), num(r.trace_check)]);
    }
    run.table("scan.csv", &table)?;
    if cfg.profiles {
        for (bi, &beta) in cfg.betas.iter().enumerate() {
            let pot = conic_ke_metric(beta, grid, cfg.source)?;
            let weight = associated_hermitian_weight(&pot, &ConeConfiguration::football(beta)?)?;
            for &ell in &cfg.ells {
                let density = bergman_density(&gram_matrix(ell, &weight)?, &weight);
                let mut t = Table::new(&["t", "rho"]);
                for (i, v) in density.rho.iter().enumerate() {
                    t.numeric_row(&[grid.t(i), *v]);
                }
                run.table(&format!("density_b{bi:02}_l{ell:03}.csv"), &t)?;
            }
        }
    }
    let inf = rows.iter().map(|r| r.inf_rho).fold(f64::INFINITY, f64::min);
    let trace = rows.iter().map(|r| r.trace_check).fold(0.0, f64::max);
    run.finish("bergman-scan", echo(cfg), cfg.grid.echo(), None, json!({ "inf_rho": inf, "max_trace_check": trace }))?;
    Ok(format!("{} cells, inf rho {}, max trace error {}", rows.len(), num(inf), num(trace)))
}

// ---------------------------------------------------------------- futaki

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FutakiConfig {
    /// Profile CSV; the round metric on `grid` when absent.
    pub metric: Option<PathBuf>,
    pub grid: GridConfig,
}

pub fn futaki_cmd(cfg: &FutakiConfig, out: &Path) -> Result<String, CliError> {
    let pot = match &cfg.metric {
        Some(p) => read_profile(p)?,
        None => fubini_study_potential(cfg.grid.build()?),
    };
    let report = futaki(&pot)?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut table = Table::new(&["from_ricci_potential", "from_hamiltonian", "discrepancy"]);
    table.row(vec![opt(report.from_ricci_potential), num(report.from_hamiltonian), opt(report.discrepancy)]);
    let mut run = RunDir::create(out)?;
    run.table("futaki.csv", &table)?;
    let grid = GridEcho { t_max: pot.grid.t_max(), n_nodes: pot.len() };
    run.finish("futaki", echo(cfg), Some(grid), None, serde_json::to_value(report).unwrap_or_default())?;
    Ok(format!("futaki {}", num(report.from_hamiltonian)))
}

// ---------------------------------------------------------------- log-futaki

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogFutakiConfig {
    pub betas: Vec<f64>,
    pub configs: Vec<PointConfiguration>,
    pub grid: GridConfig,
}

impl Default for LogFutakiConfig {
    fn default() -> Self {
        let p = |location, weight| ConePoint { location, weight };
        LogFutakiConfig {
            betas: vec![0.4, 0.6, 0.8, 0.95],
            configs: vec![
                PointConfiguration {
                    id: "football".into(),
                    points: vec![p(PointLocation::Zero, 1.0), p(PointLocation::Infinity, 1.0)],
                },
                PointConfiguration { id: "teardrop".into(), points: vec![p(PointLocation::Infinity, 2.0)] },
            ],
            grid: GridConfig::default(),
        }
    }
}

pub fn log_futaki_cmd(cfg: &LogFutakiConfig, out: &Path) -> Result<String, CliError> {
    let rows = obstruction_scan(&cfg.configs, &cfg.betas, cfg.grid.build()?)?;
    let mut table = Table::new(&["config_id", "beta", "log_futaki", "flag"]);
    for r in &rows {
        let flag = match r.flag {
            ObstructionFlag::Unobstructed => "UNOBSTRUCTED",
            ObstructionFlag::Obstructed => "OBSTRUCTED",
        };
        table.row(vec![r.config_id.clone(), num(r.beta), num(r.log_futaki), flag.to_string()]);
    }
    let mut run = RunDir::create(out)?;
    run.table("obstruction.csv", &table)?;
    let obstructed = rows.iter().filter(|r| r.flag == ObstructionFlag::Obstructed).count();
    let converged: Vec<_> = rows.iter().map(|r| json!({ "config_id": r.config_id, "beta": r.beta, "solver_converged": r.solver_converged })).collect();
    run.finish("log-futaki", echo(cfg), cfg.grid.echo(), None, json!({ "obstructed": obstructed, "solver": converged }))?;
    Ok(format!("{} rows, {obstructed} obstructed", rows.len()))
}

// ---------------------------------------------------------------- capacity

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DeltaRule {
    /// `delta` from the selection rule.
    Auto,
    /// `delta` as given.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverConfig {
    pub eps0: f64,
    pub region_radius: f64,
    pub samples_per_ball: usize,
    pub seed: u64,
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig { eps0: 0.1, region_radius: 1.0, samples_per_ball: 20000, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    pub n: u32,
    pub eps: f64,
    pub beta_bar: f64,
    pub rule: DeltaRule,
    pub delta: Option<f64>,
    pub profile_points: usize,
    pub cover: Option<CoverConfig>,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig { n: 1, eps: 0.1, beta_bar: 1.0, rule: DeltaRule::Auto, delta: None, profile_points: 200, cover: None }
    }
}

pub fn capacity(cfg: &CapacityConfig, out: &Path) -> Result<String, CliError> {
    let model = flat_cone_metric(cfg.n, cfg.beta_bar)?;
    let report = match cfg.rule {
        DeltaRule::Auto => capacity_at_rule(&model, cfg.eps)?,
        DeltaRule::Fixed => {
            let delta = cfg.delta.ok_or_else(|| CliError::Config("rule \"fixed\" needs delta".into()))?;
            dirichlet_energy(&loglog_cutoff(cfg.eps, delta)?, &model, 1.0 / cfg.eps)?
        }
    };
    let mut run = RunDir::create(out)?;
    let mut table = Table::new(&[
        "n", "beta_bar", "eps_bar", "neg_log_delta", "energy", "energy_coarea", "stated_bound", "angular_bound",
        "within_stated_bound", "within_eps",
    ]);
    table.row(vec![
        report.n.to_string(),
        num(report.beta_bar),
        num(report.eps_bar),
        num(report.neg_log_delta),
        num(report.energy),
        num(report.energy_coarea),
        num(report.stated_bound),
        num(report.angular_bound),
        report.within_stated_bound().to_string(),
        report.within_eps().to_string(),
    ]);
    run.table("capacity.csv", &table)?;
    let cutoff = LogLogCutoff::from_neg_log_delta(report.eps_bar, report.neg_log_delta)?;
    let (lo, hi) = cutoff.log_band();
    // the band is only representable when delta^3 eps_bar does not underflow
    if lo > f64::MIN_POSITIVE.ln() + 1.0 && cfg.profile_points >= 2 {
        let mut profile = Table::new(&["r", "value"]);
        let (a, b) = (lo - 0.5, (hi + 0.5).min(report.eps_bar.ln()));
        for k in 0..cfg.profile_points {
            let x = a + (b - a) * k as f64 / (cfg.profile_points - 1) as f64;
            profile.numeric_row(&[x.exp(), cutoff.value_at_log(x)]);
        }
        run.table("cutoff.csv", &profile)?;
    }
    let mut seed = None;
    let mut summary = serde_json::to_value(report).unwrap_or_default();
    if let Some(c) = cfg.cover {
        let spec = SingularSpec::coordinate(cfg.n)?;
        let cover = ball_cover_cutoff(&model, &spec, c.eps0, c.region_radius, MonteCarlo { samples_per_ball: c.samples_per_ball, seed: c.seed })?;
        run.json("cover.json", &cover)?;
        seed = Some(c.seed);
        summary["cover_energy"] = json!(cover.energy);
        summary["cover_standard_error"] = json!(cover.standard_error);
    }
    run.finish("capacity", echo(cfg), None, seed, summary)?;
    Ok(format!(
        "energy {} (eps {}), stated bound {}, within eps {}",
        num(report.energy),
        num(report.eps_bar),
        num(report.stated_bound),
        report.within_eps()
    ))
}

// ---------------------------------------------------------------- volume-scan

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum VolumeCenter {
    Flat { n: u32, beta_bar: f64, rho0: f64 },
    Football { beta: f64, pole: Pole },
    Round,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeConfig {
    pub n: u32,
    pub beta_bar: f64,
    pub annulus: Annulus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeConfig {
    pub center: VolumeCenter,
    pub radii: Vec<f64>,
    pub grid: GridConfig,
    pub tube: Option<TubeConfig>,
    pub tube_radii: Vec<f64>,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        let radii = (0..12).map(|i| 0.03 * (1.0f64 / 0.03).powf(i as f64 / 11.0)).collect();
        VolumeConfig {
            center: VolumeCenter::Football { beta: 0.6, pole: Pole::Zero },
            radii,
            grid: GridConfig::default(),
            tube: None,
            tube_radii: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
        }
    }
}

pub fn volume_scan(cfg: &VolumeConfig, out: &Path) -> Result<String, CliError> {
    let grid = cfg.grid.build()?;
    let profile = match cfg.center {
        VolumeCenter::Flat { n, beta_bar, rho0 } => {
            volume_ratio_profile(VolumeSource::Flat { model: flat_cone_metric(n, beta_bar)?, rho0 }, &cfg.radii)?
        }
        VolumeCenter::Football { beta, pole } => {
            let pot = football_potential(grid, beta)?;
            volume_ratio_profile(VolumeSource::Radial { potential: &pot, pole }, &cfg.radii)?
        }
        VolumeCenter::Round => {
            let pot = fubini_study_potential(grid);
            volume_ratio_profile(VolumeSource::Radial { potential: &pot, pole: Pole::Zero }, &cfg.radii)?
        }
    };
    let mut run = RunDir::create(out)?;
    let mut table = Table::new(&["r", "value"]);
    for (r, v) in profile.radii.iter().zip(&profile.ratios) {
        table.numeric_row(&[*r, *v]);
    }
    run.table("volume_ratio.csv", &table)?;
    let mut summary = json!({ "max_increase": profile.max_increase, "angle_estimate": profile.angle_estimate });
    if let Some(t) = cfg.tube {
        let report = tube_volume(&flat_cone_metric(t.n, t.beta_bar)?, t.annulus, &cfg.tube_radii)?;
        let mut table = Table::new(&["r", "value"]);
        for (r, v) in report.radii.iter().zip(&report.volumes) {
            table.numeric_row(&[*r, *v]);
        }
        run.table("tube_volume.csv", &table)?;
        summary["tube_exponent"] = json!(report.exponent);
        summary["tube_constant"] = json!(report.constant);
    }
    let grid_echo = if matches!(cfg.center, VolumeCenter::Flat { .. }) { None } else { cfg.grid.echo() };
    run.finish("volume-scan", echo(cfg), grid_echo, None, summary)?;
    Ok(match profile.angle_estimate {
        Some(b) => format!("{} radii, cone fraction estimate {}", profile.radii.len(), num(b)),
        None => format!("{} radii", profile.radii.len()),
    })
}
