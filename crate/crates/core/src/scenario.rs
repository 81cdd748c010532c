//! Scenario files and the experiment runner behind the command line.
//!
//! A scenario is a TOML document naming one experiment, the system (metric
//! and potential), integrator settings and the experiment's own section.
//! Running it produces CSV artifacts plus `report.toml`; everything is kept
//! in memory until the run finishes and then written atomically, so a failed
//! run leaves no partial output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::design::{design, Design, DesignParams, Polynomial};
use crate::dynamics::{integrate_with, CircularPotential, IntegratorOptions, PotentialField, QuadraticPotential, State, Trajectory};
use crate::error::{Error, Result};
use crate::geodesics::{chart_inverse, speed_law_solve, GeodesicCurve};
use crate::io::{csv_row, read_columns, write_atomic};
use crate::manifold::{inner_product, ConstantMetric, DoublePendulumMetric, Euclidean, GridMetric, MetricField};
use crate::modes::{
    detect_period, find_mode, linearized_modes, scaling_invariance_test, turning_points, velocity_zero_crossings,
    verify_strict_mode, CurveFit, ModeCandidate, ModeSearchOptions, ScalingOptions,
};
use crate::numerics::bracketed_root;

/// Built-in scenarios: id, description, TOML source.
const BUILTINS: &[(&str, &str, &str)] = &[
    (
        "paper-3-1",
        "double pendulum, circular potential k0 = 100: mode atlas from 0.01 to 50 J with strict-mode residuals",
        include_str!("../scenarios/paper-3-1.toml"),
    ),
    (
        "paper-3-2",
        "designed strict mode alpha = -5 xi1, beta = -47.86: certification, potential grid and runs at 1, 3, 5.63 J",
        include_str!("../scenarios/paper-3-2.toml"),
    ),
];

/// `(id, description)` of every built-in scenario.
pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    BUILTINS.iter().map(|(id, d, _)| (*id, *d)).collect()
}

/// TOML source of a built-in scenario.
pub fn builtin_source(id: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|b| b.0 == id).map(|b| b.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Geodesic,
    Linearize,
    ModesFind,
    ModesVerify,
    Design,
    Invariance,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Geodesic => "geodesic",
            Experiment::Linearize => "linearize",
            Experiment::ModesFind => "modes-find",
            Experiment::ModesVerify => "modes-verify",
            Experiment::Design => "design",
            Experiment::Invariance => "invariance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricConfig {
    DoublePendulum,
    Euclidean { dim: usize },
    Constant { matrix: Vec<Vec<f64>> },
    /// CSV with columns `q1,q2,g11,g12,g22` on a rectilinear grid.
    Grid { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `f = -k0/2 |q|^2`.
    Circular { k0: f64 },
    /// `f = -1/2 sum k_i q_i^2`.
    Quadratic { stiffness: Vec<f64> },
    /// Built from the `[design]` section.
    Designed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub metric: MetricConfig,
    pub potential: PotentialConfig,
    /// Defaults to the origin (or the designed geodesic's base point).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            metric: MetricConfig::DoublePendulum,
            potential: PotentialConfig::Circular { k0: 100.0 },
            equilibrium: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Relative energy drift bound; 0 disables the check.
    pub energy_tol: f64,
    pub horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: crate::dynamics::DEFAULT_DT,
            energy_tol: crate::dynamics::DEFAULT_ENERGY_TOL,
            horizon: crate::dynamics::DEFAULT_HORIZON,
        }
    }
}

impl IntegratorConfig {
    pub fn options(&self) -> IntegratorOptions {
        IntegratorOptions {
            dt: self.dt,
            energy_tol: (self.energy_tol > 0.0).then_some(self.energy_tol),
        }
    }
}

/// One simulation: either an explicit state, a rest start on the level
/// `f = -energy` at `theta_deg`, or (designed systems) a rest start on the
/// geodesic at that level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qdot: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    pub on_geodesic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub runs: Vec<RunSpec>,
    /// Every n-th sample is exported.
    pub export_stride: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            runs: vec![RunSpec {
                energy: Some(1.0),
                theta_deg: Some(0.0),
                horizon: Some(20.0),
                ..RunSpec::default()
            }],
            export_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicConfig {
    pub q0: Vec<f64>,
    pub direction: Vec<f64>,
    /// Arc length on each side of `q0`.
    pub half_length: f64,
    pub ds: f64,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        let d = DesignParams::default();
        Self {
            q0: d.origin,
            direction: d.direction,
            half_length: d.half_length,
            ds: d.ds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    pub energies: Vec<f64>,
    /// Seed angles; empty means the linearized eigendirections.
    pub seeds_deg: Vec<f64>,
    /// Reuse each energy's optimum as the next energy's seed.
    pub continuation: bool,
    pub bracket: f64,
    pub angle_tol: f64,
    pub scan_points: usize,
    pub scan_horizon: f64,
    pub polish_tol: f64,
    pub min_periodicity: f64,
    pub verify_tol: f64,
}

impl Default for ModesConfig {
    fn default() -> Self {
        let o = ModeSearchOptions::default();
        Self {
            energies: vec![0.01],
            seeds_deg: Vec::new(),
            continuation: true,
            bracket: o.bracket,
            angle_tol: o.angle_tol,
            scan_points: o.scan_points,
            scan_horizon: o.scan_horizon,
            polish_tol: o.polish_tol,
            min_periodicity: o.min_periodicity,
            verify_tol: crate::modes::DETECTED_MODE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveSource {
    /// CSV with `q1,q2` columns (extra columns ignored).
    File { path: PathBuf },
    /// Coordinate straight segment sampled at `points` nodes.
    Line { from: Vec<f64>, to: Vec<f64>, points: usize },
    Geodesic { q0: Vec<f64>, direction: Vec<f64>, half_length: f64, ds: f64 },
    /// The designed geodesic, optionally cut to `|s| <= half_length`.
    DesignGeodesic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_length: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub curve: CurveSource,
    pub tol: f64,
    /// Report a breach when the curve is not strict.
    pub enforce: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            curve: CurveSource::Line {
                from: vec![-0.5, 0.5],
                to: vec![0.5, -0.5],
                points: 201,
            },
            tol: crate::modes::DETECTED_MODE_TOL,
            enforce: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceConfig {
    pub curve: CurveSource,
    pub scales: Vec<f64>,
    pub horizon: f64,
    pub probes: usize,
    pub start_fraction: f64,
    /// Breach when any scale deviates further from the curve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        let o = ScalingOptions::default();
        Self {
            curve: VerifyConfig::default().curve,
            scales: vec![0.5, 1.0, 2.0],
            horizon: o.horizon,
            probes: o.probes,
            start_fraction: o.start_fraction,
            max_deviation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignCheckConfig {
    /// Energies of the on-geodesic runs.
    pub energies: Vec<f64>,
    pub horizon: f64,
    /// Periods over which the distance from the geodesic is measured.
    pub periods: usize,
    /// Periods over which velocity zero crossings must coincide.
    pub unison_periods: usize,
    pub max_deviation: f64,
    /// Bound on `|f + E|` at turning points.
    pub turning_tol: f64,
    /// Bound on the speed-law error before the turning point.
    pub speed_tol: f64,
    pub definiteness_tol: f64,
    pub integrability_tol: f64,
    pub path_tol: f64,
    pub grid_resolution: f64,
    pub field_resolution: f64,
    pub export_stride: usize,
    pub enforce: bool,
}

impl Default for DesignCheckConfig {
    fn default() -> Self {
        Self {
            energies: vec![1.0, 3.0, 5.63],
            horizon: 15.0,
            periods: 3,
            unison_periods: 5,
            max_deviation: 1e-3,
            turning_tol: 1e-6,
            speed_tol: 1e-4,
            definiteness_tol: 1e-3,
            integrability_tol: 1e-6,
            path_tol: 1e-5,
            grid_resolution: 0.05,
            field_resolution: 0.1,
            export_stride: 1,
            enforce: true,
        }
    }
}

/// A parsed scenario. Missing sections take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub geodesic: GeodesicConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub invariance: InvarianceConfig,
    #[serde(default)]
    pub design: DesignParams,
    #[serde(default)]
    pub design_check: DesignCheckConfig,
    /// Directory against which relative paths resolve.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Scenario {
    fn default() -> Self {
        Self::from_toml_str("", Path::new(".")).expect("empty scenario is valid")
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.base_dir = base_dir.to_path_buf();
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn builtin(id: &str) -> Result<Self> {
        let src = builtin_source(id).ok_or_else(|| Error::Config(format!("unknown scenario `{id}`")))?;
        Self::from_toml_str(src, Path::new("."))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output directory with relative paths taken from the working directory.
    pub fn output_dir(&self) -> &Path {
        &self.output
    }

    /// Schema checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let exp = match self.experiment {
            Some(e) => e,
            None => return bad("`experiment` is required".into()),
        };
        let ic = &self.integrator;
        if !(ic.dt > 0.0 && ic.dt.is_finite()) || !(ic.horizon > 0.0) || !(ic.energy_tol >= 0.0) {
            return bad("integrator: dt and horizon must be positive, energy_tol nonnegative".into());
        }
        match &self.system.metric {
            MetricConfig::Euclidean { dim } if *dim == 0 => return bad("system.metric.dim must be positive".into()),
            MetricConfig::Grid { path } if !self.resolve(path).is_file() => {
                return bad(format!("metric grid {} does not exist", self.resolve(path).display()))
            }
            _ => {}
        }
        match &self.system.potential {
            PotentialConfig::Circular { k0 } if !(*k0 > 0.0) => return bad("system.potential.k0 must be positive".into()),
            PotentialConfig::Quadratic { stiffness } if stiffness.iter().any(|k| !(*k > 0.0)) => {
                return bad("system.potential.stiffness must be positive".into())
            }
            _ => {}
        }
        let needs_design = matches!(self.system.potential, PotentialConfig::Designed) || exp == Experiment::Design;
        if needs_design {
            self.design.validate()?;
        }
        let positive = |name: &str, xs: &[f64]| -> Result<()> {
            if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::Config(format!("{name} must be a nonempty list of positive numbers")));
            }
            Ok(())
        };
        match exp {
            Experiment::Simulate => {
                if self.simulate.runs.is_empty() || self.simulate.export_stride == 0 {
                    return bad("simulate: need at least one run and export_stride >= 1".into());
                }
                for (i, r) in self.simulate.runs.iter().enumerate() {
                    let explicit = r.q.is_some();
                    let level = r.energy.is_some() && (r.theta_deg.is_some() || r.on_geodesic);
                    if explicit == level {
                        return bad(format!("simulate.runs[{i}]: give either q (and qdot) or energy with theta_deg/on_geodesic"));
                    }
                    if r.energy.is_some_and(|e| !(e > 0.0)) || r.horizon.is_some_and(|h| !(h > 0.0)) {
                        return bad(format!("simulate.runs[{i}]: energy and horizon must be positive"));
                    }
                }
            }
            Experiment::Geodesic => {
                let g = &self.geodesic;
                if !(g.half_length > 0.0 && g.ds > 0.0) {
                    return bad("geodesic: half_length and ds must be positive".into());
                }
            }
            Experiment::Linearize => {}
            Experiment::ModesFind => {
                let m = &self.modes;
                positive("modes.energies", &m.energies)?;
                positive("modes tolerances", &[m.bracket, m.angle_tol, m.scan_horizon, m.verify_tol])?;
                if !(m.polish_tol >= 0.0) {
                    return bad("modes.polish_tol must be nonnegative".into());
                }
            }
            Experiment::ModesVerify => {
                self.check_curve(&self.verify.curve)?;
                positive("verify.tol", &[self.verify.tol])?;
            }
            Experiment::Invariance => {
                let c = &self.invariance;
                self.check_curve(&c.curve)?;
                positive("invariance.scales", &c.scales)?;
                positive("invariance.horizon", &[c.horizon])?;
                if let Some(d) = c.max_deviation {
                    positive("invariance.max_deviation", &[d])?;
                }
            }
            Experiment::Design => {
                let c = &self.design_check;
                positive("design_check.energies", &c.energies)?;
                positive(
                    "design_check tolerances",
                    &[
                        c.horizon,
                        c.max_deviation,
                        c.turning_tol,
                        c.speed_tol,
                        c.definiteness_tol,
                        c.integrability_tol,
                        c.path_tol,
                        c.grid_resolution,
                        c.field_resolution,
                    ],
                )?;
                if c.periods == 0 || c.unison_periods == 0 || c.export_stride == 0 {
                    return bad("design_check: periods, unison_periods and export_stride must be >= 1".into());
                }
            }
        }
        Ok(())
    }

    fn check_curve(&self, c: &CurveSource) -> Result<()> {
        match c {
            CurveSource::File { path } if !self.resolve(path).is_file() => {
                Err(Error::Config(format!("curve file {} does not exist", self.resolve(path).display())))
            }
            CurveSource::Line { points, .. } if *points < 5 => Err(Error::Config("curve line needs >= 5 points".into())),
            CurveSource::Geodesic { half_length, ds, .. } if !(*half_length > 0.0 && *ds > 0.0) => {
                Err(Error::Config("curve geodesic: half_length and ds must be positive".into()))
            }
            CurveSource::DesignGeodesic { .. } if !matches!(self.system.potential, PotentialConfig::Designed) => {
                Err(Error::Config("design-geodesic curves need system.potential.kind = \"designed\"".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Metric, potential and equilibrium assembled from a scenario.
pub struct System {
    pub metric: Box<dyn MetricField>,
    potential: Option<Box<dyn PotentialField>>,
    pub design: Option<Design>,
    pub equilibrium: Vec<f64>,
}

impl System {
    pub fn build(sc: &Scenario) -> Result<Self> {
        let metric: Box<dyn MetricField> = match &sc.system.metric {
            MetricConfig::DoublePendulum => Box::new(DoublePendulumMetric),
            MetricConfig::Euclidean { dim } => Box::new(Euclidean::new(*dim)),
            MetricConfig::Constant { matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("system.metric.matrix must be square".into()));
                }
                let g = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                Box::new(ConstantMetric::new(g).map_err(|e| Error::Config(e.to_string()))?)
            }
            MetricConfig::Grid { path } => {
                let p = sc.resolve(path);
                let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Box::new(GridMetric::from_csv(&text)?)
            }
        };
        let n = metric.dim();
        let (potential, design): (Option<Box<dyn PotentialField>>, _) = match &sc.system.potential {
            PotentialConfig::Circular { k0 } => (Some(Box::new(CircularPotential::new(*k0))), None),
            PotentialConfig::Quadratic { stiffness } => {
                if stiffness.len() != n {
                    return Err(Error::Config(format!("system.potential.stiffness needs {n} entries")));
                }
                (Some(Box::new(QuadraticPotential::new(stiffness.clone()))), None)
            }
            PotentialConfig::Designed => {
                if n != 2 {
                    return Err(Error::Config("designed potentials need a two-dimensional metric".into()));
                }
                let spec = sc.design.build(&*metric)?;
                (None, Some(design(&*metric, spec)?))
            }
        };
        let equilibrium = match (&sc.system.equilibrium, &design) {
            (Some(e), _) => e.clone(),
            (None, Some(d)) => d.spec.chart.forward([0.0, 0.0]).to_vec(),
            (None, None) => vec![0.0; n],
        };
        if equilibrium.len() != n {
            return Err(Error::Config(format!("system.equilibrium needs {n} entries")));
        }
        Ok(Self {
            metric,
            potential,
            design,
            equilibrium,
        })
    }

    pub fn potential(&self) -> &dyn PotentialField {
        match (&self.potential, &self.design) {
            (Some(p), _) => &**p,
            (None, Some(d)) => &d.potential,
            (None, None) => unreachable!("system without potential"),
        }
    }

    fn require_design(&self) -> Result<&Design> {
        self.design
            .as_ref()
            .ok_or_else(|| Error::Config("this experiment needs system.potential.kind = \"designed\"".into()))
    }

    /// Rest point on the designed geodesic with `f = -energy`, `s > 0`.
    pub fn geodesic_start(&self, energy: f64) -> Result<(f64, Vec<f64>)> {
        let d = self.require_design()?;
        let geo = d.spec.chart.geodesic();
        let pot = self.potential();
        let s_hi = d.spec.chart.xi1_range().1 * (1.0 - 1e-9);
        let g = |s: f64| pot.value(&geo.eval(s).0).map(|f| f + energy).unwrap_or(f64::NAN);
        if !(g(s_hi) < 0.0) {
            return Err(Error::Precondition(format!("level f = -{energy} not reached on the designed geodesic")));
        }
        let s = bracketed_root(g, 0.0, s_hi, 1e-14, 200)
            .ok_or_else(|| Error::NotConverged(format!("geodesic start at E = {energy}")))?;
        Ok((s, geo.eval(s).0))
    }

    fn curve(&self, sc: &Scenario, src: &CurveSource) -> Result<Vec<Vec<f64>>> {
        match src {
            CurveSource::File { path } => {
                let p = sc.resolve(path);
                let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                read_columns(&text, &["q1", "q2"])
            }
            CurveSource::Line { from, to, points } => {
                if from.len() != to.len() {
                    return Err(Error::Config("curve line endpoints differ in dimension".into()));
                }
                Ok((0..*points)
                    .map(|i| {
                        let t = i as f64 / (*points - 1) as f64;
                        from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
                    })
                    .collect())
            }
            CurveSource::Geodesic { q0, direction, half_length, ds } => {
                Ok(GeodesicCurve::two_sided(&*self.metric, q0, direction, *half_length, *ds)?.points())
            }
            CurveSource::DesignGeodesic { half_length } => {
                let geo = self.require_design()?.spec.chart.geodesic();
                let cut = half_length.unwrap_or(f64::INFINITY);
                Ok((0..geo.len()).filter(|&i| geo.s(i).abs() <= cut).map(|i| geo.q(i).to_vec()).collect())
            }
        }
    }
}

/// Artifacts and metrics of a finished run, not yet on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// File name (relative to the output directory) to contents.
    pub files: BTreeMap<String, Vec<u8>>,
    pub metrics: Table,
    pub breaches: Vec<String>,
}

impl RunOutcome {
    fn new() -> Self {
        Self {
            files: BTreeMap::new(),
            metrics: Table::new(),
            breaches: Vec::new(),
        }
    }

    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.insert(name.into(), contents.into_bytes());
    }

    /// Writes every artifact atomically into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            write_atomic(&dir.join(name), bytes)?;
        }
        Ok(())
    }

    /// Process exit status: 0, or 4 when tolerances were breached.
    pub fn exit_code(&self) -> i32 {
        if self.breaches.is_empty() {
            0
        } else {
            4
        }
    }
}

fn num(x: f64) -> Value {
    Value::Float(x)
}

fn opt(x: Option<f64>) -> Value {
    x.map_or_else(|| Value::String("undefined".into()), Value::Float)
}

fn floats(xs: &[f64]) -> Value {
    Value::Array(xs.iter().copied().map(Value::Float).collect())
}

fn table<const N: usize>(pairs: [(&str, Value); N]) -> Value {
    Value::Table(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn energy_tag(e: f64) -> String {
    format!("E{e}")
}

/// Validates and runs the scenario; `jobs` sizes the worker pool (`None`
/// uses every core). Results do not depend on the pool size.
pub fn run(sc: &Scenario, jobs: Option<usize>) -> Result<RunOutcome> {
    sc.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_in_pool(sc))
}

fn run_in_pool(sc: &Scenario) -> Result<RunOutcome> {
    let sys = System::build(sc)?;
    let exp = sc.experiment.expect("validated");
    let mut out = RunOutcome::new();
    match exp {
        Experiment::Simulate => run_simulate(sc, &sys, &mut out)?,
        Experiment::Geodesic => run_geodesic(sc, &sys, &mut out)?,
        Experiment::Linearize => run_linearize(&sys, &mut out)?,
        Experiment::ModesFind => run_modes(sc, &sys, &mut out)?,
        Experiment::ModesVerify => run_verify(sc, &sys, &mut out)?,
        Experiment::Invariance => run_invariance(sc, &sys, &mut out)?,
        Experiment::Design => run_design(sc, &sys, &mut out)?,
    }
    let mut report = Table::new();
    report.insert(
        "toolkit".into(),
        table([
            ("name", Value::String(env!("CARGO_PKG_NAME").into())),
            ("version", Value::String(env!("CARGO_PKG_VERSION").into())),
        ]),
    );
    report.insert("experiment".into(), Value::String(exp.as_str().into()));
    report.insert(
        "verdict".into(),
        Value::String(if out.breaches.is_empty() { "pass" } else { "breach" }.into()),
    );
    report.insert("breaches".into(), Value::Array(out.breaches.iter().cloned().map(Value::String).collect()));
    report.insert("metrics".into(), Value::Table(out.metrics.clone()));
    let echo = Value::try_from(sc).map_err(|e| Error::Config(format!("scenario echo: {e}")))?;
    report.insert("scenario".into(), echo);
    let text = toml::to_string(&report).map_err(|e| Error::Config(format!("report: {e}")))?;
    out.file("report.toml", text);
    Ok(out)
}

fn strided_csv(tr: &Trajectory, stride: usize) -> String {
    let full = tr.to_csv();
    if stride <= 1 {
        return full;
    }
    let mut lines = full.lines();
    let mut s = String::new();
    if let Some(h) = lines.next() {
        s.push_str(h);
        s.push('\n');
    }
    let n = tr.len();
    for (i, l) in lines.enumerate() {
        if i % stride == 0 || i + 1 == n {
            s.push_str(l);
            s.push('\n');
        }
    }
    s
}

fn run_simulate(sc: &Scenario, sys: &System, out: &mut RunOutcome) -> Result<()> {
    let cfg = &sc.simulate;
    let opts = sc.integrator.options();
    let pot = sys.potential();
    let results: Vec<Result<(State, Trajectory)>> = cfg
        .runs
        .par_iter()
        .map(|r| {
            let s0 = if let Some(q) = &r.q {
                let qdot = r.qdot.clone().unwrap_or_else(|| vec![0.0; q.len()]);
                State::new(q.clone(), qdot)
            } else {
                let e = r.energy.expect("validated");
                let q = if r.on_geodesic {
                    sys.geodesic_start(e)?.1
                } else {
                    crate::modes::equipotential_point(pot, &sys.equilibrium, e, r.theta_deg.unwrap_or(0.0).to_radians())?
                };
                State::at_rest(q)
            };
            let tr = integrate_with(&*sys.metric, pot, &s0, r.horizon.unwrap_or(sc.integrator.horizon), &opts)?;
            Ok((s0, tr))
        })
        .collect();
    let mut runs = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        let (s0, tr) = res?;
        let name = format!("trajectory_{i:02}.csv");
        let period = detect_period(&tr, 0).ok();
        runs.push(table([
            ("file", Value::String(name.clone())),
            ("q0", floats(&s0.q)),
            ("qdot0", floats(&s0.qdot)),
            ("energy", num(tr.energies()[0])),
            ("max_energy_drift", num(tr.max_energy_drift())),
            ("samples", Value::Integer(tr.len() as i64)),
            ("period", opt(period.as_ref().map(|p| p.period))),
            ("period_std", opt(period.as_ref().map(|p| p.std_dev))),
        ]));
        out.file(name, strided_csv(&tr, cfg.export_stride));
    }
    out.metrics.insert("runs".into(), Value::Array(runs));
    Ok(())
}

fn run_geodesic(sc: &Scenario, sys: &System, out: &mut RunOutcome) -> Result<()> {
    let g = &sc.geodesic;
    let geo = GeodesicCurve::two_sided(&*sys.metric, &g.q0, &g.direction, g.half_length, g.ds)?;
    let res = geo.geodesic_residuals(&*sys.metric)?;
    out.metrics.insert("points".into(), Value::Integer(geo.len() as i64));
    out.metrics.insert("unit_speed_error".into(), num(geo.unit_speed_error(&*sys.metric)?));
    out.metrics.insert("max_geodesic_residual".into(), num(res.iter().copied().fold(0.0, f64::max)));
    out.metrics.insert("start".into(), floats(geo.q(0)));
    out.metrics.insert("end".into(), floats(geo.q(geo.len() - 1)));
    out.file("geodesic.csv", geo.to_csv());
    Ok(())
}

fn run_linearize(sys: &System, out: &mut RunOutcome) -> Result<()> {
    let modes = linearized_modes(&*sys.metric, sys.potential(), &sys.equilibrium)?;
    let n = sys.metric.dim();
    let mut csv = String::from("omega,period");
    for k in 1..=n {
        csv.push_str(&format!(",v{k}"));
    }
    csv.push('\n');
    let mut list = Vec::new();
    for m in &modes {
        let mut row = vec![m.omega, 2.0 * std::f64::consts::PI / m.omega];
        row.extend(&m.direction);
        csv.push_str(&csv_row(&row));
        let mut t = table([
            ("omega", num(m.omega)),
            ("period", num(row[1])),
            ("direction", floats(&m.direction)),
        ]);
        if n == 2 {
            t.as_table_mut().unwrap().insert("angle_deg".into(), num(m.angle().to_degrees()));
        }
        list.push(t);
    }
    out.metrics.insert("equilibrium".into(), floats(&sys.equilibrium));
    out.metrics.insert("modes".into(), Value::Array(list));
    out.file("linear_modes.csv", csv);
    Ok(())
}

fn chord_deviation(curve: &[Vec<f64>]) -> f64 {
    let (a, b) = (&curve[0], &curve[curve.len() - 1]);
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = d.iter().map(|x| x * x).sum();
    if len2 == 0.0 {
        return 0.0;
    }
    curve
        .iter()
        .map(|p| {
            let r: Vec<f64> = p.iter().zip(a).map(|(x, y)| x - y).collect();
            let t = r.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>() / len2;
            r.iter().zip(&d).map(|(x, y)| (x - t * y).powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
        / len2.sqrt()
}

fn run_modes(sc: &Scenario, sys: &System, out: &mut RunOutcome) -> Result<()> {
    let cfg = &sc.modes;
    let pot = sys.potential();
    if sys.metric.dim() != 2 {
        return Err(Error::Config("mode search works on two-dimensional systems".into()));
    }
    let seeds: Vec<f64> = if cfg.seeds_deg.is_empty() {
        linearized_modes(&*sys.metric, pot, &sys.equilibrium)?.iter().map(|m| m.angle()).collect()
    } else {
        cfg.seeds_deg.iter().map(|d| d.to_radians()).collect()
    };
    let opts = ModeSearchOptions {
        horizon: sc.integrator.horizon,
        integrator: sc.integrator.options(),
        bracket: cfg.bracket,
        angle_tol: cfg.angle_tol,
        max_iter: ModeSearchOptions::default().max_iter,
        min_periodicity: cfg.min_periodicity,
        scan_points: cfg.scan_points,
        scan_horizon: cfg.scan_horizon,
        polish_tol: cfg.polish_tol,
    };
    let search = |theta: f64, e: f64| find_mode(&*sys.metric, pot, &sys.equilibrium, e, theta, &opts);
    // (family, energy index) -> outcome
    let results: Vec<Vec<Result<ModeCandidate>>> = if cfg.continuation {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut theta = seed;
                cfg.energies
                    .iter()
                    .map(|&e| {
                        let r = search(theta, e);
                        if let Ok(c) = &r {
                            theta = c.theta;
                        }
                        r
                    })
                    .collect()
            })
            .collect()
    } else {
        let pairs: Vec<(usize, f64)> =
            (0..seeds.len()).flat_map(|k| cfg.energies.iter().map(move |&e| (k, e))).collect();
        let flat: Vec<Result<ModeCandidate>> = pairs.par_iter().map(|&(k, e)| search(seeds[k], e)).collect();
        let mut it = flat.into_iter();
        (0..seeds.len()).map(|_| it.by_ref().take(cfg.energies.len()).collect()).collect()
    };
    let mut list = Vec::new();
    for (k, fam) in results.into_iter().enumerate() {
        let family = format!("family{}", k + 1);
        for (c, &e) in fam.into_iter().zip(&cfg.energies) {
            let c = match c {
                Ok(c) => c,
                Err(err @ Error::NotConverged(_)) => {
                    out.breaches.push(format!("{family} at E = {e}: {err}"));
                    list.push(table([
                        ("family", Value::String(family.clone())),
                        ("energy", num(e)),
                        ("error", Value::String(err.to_string())),
                    ]));
                    continue;
                }
                Err(err) => return Err(err),
            };
            let rep = verify_strict_mode(&*sys.metric, pot, &c.curve, cfg.verify_tol)?;
            let name = format!("mode_{family}_{}.csv", energy_tag(e));
            let start_speed = c.trajectory.qdot(0).iter().map(|v| v * v).sum::<f64>().sqrt();
            let period = detect_period(&c.trajectory, 0).ok();
            list.push(table([
                ("family", Value::String(family.clone())),
                ("energy", num(e)),
                ("file", Value::String(name.clone())),
                ("theta_deg", num(c.theta.to_degrees())),
                ("start", floats(&c.start)),
                ("start_speed", num(start_speed)),
                ("level_residual", num((pot.value(&c.start)? + e).abs())),
                ("end_kinetic_fraction", num(c.end_kinetic_fraction)),
                ("periodicity", num(c.periodicity)),
                ("period", opt(period.map(|p| p.period))),
                ("amplitude", num(c.amplitude(&*sys.metric, &sys.equilibrium)?)),
                ("chord_deviation", num(chord_deviation(&c.curve))),
                ("max_energy_drift", num(c.trajectory.max_energy_drift())),
                ("max_geodesic_residual", num(rep.max_geodesic_residual)),
                ("max_tangency_residual", num(rep.max_tangency_residual)),
                ("strict", Value::Boolean(rep.strict)),
            ]));
            out.file(name, c.curve_csv());
        }
    }
    out.metrics.insert("seeds_deg".into(), floats(&seeds.iter().map(|s| s.to_degrees()).collect::<Vec<_>>()));
    out.metrics.insert("candidates".into(), Value::Array(list));
    Ok(())
}

fn residual_csv(rep: &crate::modes::StrictModeReport) -> String {
    let mut s = String::from("s,geodesic_residual,tangency_residual\n");
    for i in 0..rep.arc_length.len() {
        s.push_str(&csv_row(&[rep.arc_length[i], rep.geodesic_residual[i], rep.tangency_residual[i]]));
    }
    s
}

fn run_verify(sc: &Scenario, sys: &System, out: &mut RunOutcome) -> Result<()> {
    let cfg = &sc.verify;
    let curve = sys.curve(sc, &cfg.curve)?;
    let rep = verify_strict_mode(&*sys.metric, sys.potential(), &curve, cfg.tol)?;
    out.metrics.insert("points".into(), Value::Integer(curve.len() as i64));
    out.metrics.insert("max_geodesic_residual".into(), num(rep.max_geodesic_residual));
    out.metrics.insert("max_tangency_residual".into(), num(rep.max_tangency_residual));
    out.metrics.insert("tol".into(), num(rep.tol));
    out.metrics.insert("strict".into(), Value::Boolean(rep.strict));
    if cfg.enforce && !rep.strict {
        out.breaches.push(format!(
            "curve is not strict at tol {}: geodesic {:.3e}, tangency {:.3e}",
            rep.tol, rep.max_geodesic_residual, rep.max_tangency_residual
        ));
    }
    out.file("residuals.csv", residual_csv(&rep));
    Ok(())
}

fn run_invariance(sc: &Scenario, sys: &System, out: &mut RunOutcome) -> Result<()> {
    let cfg = &sc.invariance;
    let curve = sys.curve(sc, &cfg.curve)?;
    let opts = ScalingOptions {
        horizon: cfg.horizon,
        integrator: sc.integrator.options(),
        probes: cfg.probes,
        start_fraction: cfg.start_fraction,
    };
    let results = scaling_invariance_test(&*sys.metric, sys.potential(), &curve, &cfg.scales, &opts)?;
    let mut csv = String::from("scale,max_deviation");
    for k in 1..=cfg.probes {
        csv.push_str(&format!(",normal_acceleration_{k},ratio_{k}"));
    }
    csv.push('\n');
    let mut list = Vec::new();
    for r in &results {
        let mut row = vec![r.scale, r.max_deviation];
        for (a, q) in r.normal_acceleration.iter().zip(&r.normal_ratio) {
            row.push(*a);
            row.push(q.unwrap_or(f64::NAN));
        }
        csv.push_str(&csv_row(&row));
        list.push(table([
            ("scale", num(r.scale)),
            ("max_deviation", num(r.max_deviation)),
            ("normal_acceleration", floats(&r.normal_acceleration)),
            ("normal_ratio", Value::Array(r.normal_ratio.iter().map(|x| opt(*x)).collect())),
        ]));
        if let Some(bound) = cfg.max_deviation {
            if r.max_deviation > bound {
                out.breaches.push(format!("scale {}: deviation {:.3e} exceeds {bound:e}", r.scale, r.max_deviation));
            }
        }
    }
    out.metrics.insert("scales".into(), Value::Array(list));
    out.file("invariance.csv", csv);
    Ok(())
}

/// On-geodesic run of the design check.
struct DesignRun {
    traj: Trajectory,
    metrics: Value,
    breaches: Vec<String>,
}

fn design_run(sc: &Scenario, sys: &System, fit: &CurveFit, alpha: &Polynomial, e: f64) -> Result<DesignRun> {
    let c = &sc.design_check;
    let d = sys.require_design()?;
    let pot = sys.potential();
    let metric = &*sys.metric;
    let (s0, q0) = sys.geodesic_start(e)?;
    let traj = integrate_with(metric, pot, &State::at_rest(q0), c.horizon, &sc.integrator.options())?;
    let period = detect_period(&traj, 0)?;
    let p = period.period;
    let dt = sc.integrator.dt;
    let mut breaches = Vec::new();
    for (what, need) in [("periods", c.periods), ("unison_periods", c.unison_periods)] {
        if need as f64 * p > c.horizon {
            breaches.push(format!("E = {e}: horizon {} shorter than {need} {what} of {p:.4} s", c.horizon));
        }
    }
    let mut deviation = 0.0f64;
    let mut speed_error = 0.0f64;
    let law = {
        let a = alpha.clone();
        speed_law_solve(move |s| a.eval(s), e, d.spec.chart.xi1_range().1)?
    };
    let s_turn = law.turning_points.1.unwrap_or(s0);
    for i in 0..traj.len() {
        let q = traj.q(i);
        if traj.t(i) <= c.periods as f64 * p {
            deviation = deviation.max(fit.distance(metric, q)?);
        }
        let xi = chart_inverse(&d.spec.chart, q)?;
        // the radicand's square root loses accuracy at the turning point itself
        if xi[0].abs() < s_turn - 1e-3 {
            let v = inner_product(metric, q, traj.qdot(i), traj.qdot(i))?.sqrt();
            speed_error = speed_error.max((v - law.beta(xi[0]).unwrap_or(0.0)).abs());
        }
    }
    let tps = turning_points(metric, &traj)?;
    let mut turning_error = 0.0f64;
    for tp in &tps {
        turning_error = turning_error.max((pot.value(&tp.q)? + e).abs());
    }
    let half = if tps.len() >= 2 { (tps[tps.len() - 1].t - tps[0].t) / (tps.len() - 1) as f64 } else { f64::NAN };
    let t_unison = c.unison_periods as f64 * p;
    let c1: Vec<_> = velocity_zero_crossings(&traj, 0).into_iter().filter(|x| x.0 <= t_unison).collect();
    let c2: Vec<_> = velocity_zero_crossings(&traj, 1).into_iter().filter(|x| x.0 <= t_unison).collect();
    let unison = if c1.len() == c2.len() {
        c1.iter().zip(&c2).map(|(a, b)| (a.0 - b.0).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let checks = [
        ("max_deviation", deviation, c.max_deviation),
        ("turning_energy_error", turning_error, c.turning_tol),
        ("unison_offset", unison, dt),
        ("speed_law_error", speed_error, c.speed_tol),
    ];
    for (name, v, bound) in checks {
        if !(v <= bound) {
            breaches.push(format!("E = {e}: {name} {v:.3e} exceeds {bound:e}"));
        }
    }
    let metrics = table([
        ("energy", num(e)),
        ("file", Value::String(format!("trajectory_{}.csv", energy_tag(e)))),
        ("start_arc_length", num(s0)),
        ("speed_law_turning_point", num(s_turn)),
        ("period", num(p)),
        ("period_std", num(period.std_dev)),
        ("twice_half_period", num(2.0 * half)),
        ("turning_points", Value::Integer(tps.len() as i64)),
        ("max_deviation", num(deviation)),
        ("turning_energy_error", num(turning_error)),
        ("unison_offset", num(unison)),
        ("unison_crossings", Value::Integer(c1.len() as i64)),
        ("speed_law_error", num(speed_error)),
        ("max_energy_drift", num(traj.max_energy_drift())),
    ]);
    Ok(DesignRun {
        traj,
        metrics,
        breaches,
    })
}

fn run_design(sc: &Scenario, sys: &System, out: &mut RunOutcome) -> Result<()> {
    let c = &sc.design_check;
    // the experiment always certifies the [design] section, even when the
    // system potential is something else
    let owned;
    let sys = if sys.design.is_some() {
        sys
    } else {
        let mut alt = sc.clone();
        alt.system.potential = PotentialConfig::Designed;
        owned = System::build(&alt)?;
        &owned
    };
    let d = sys.require_design()?;
    let metric = &*sys.metric;
    let cert = d.certify(metric, &d.default_box(), c.definiteness_tol)?;
    let geo = d.spec.chart.geodesic();
    let fit = CurveFit::new(metric, &geo.points(), 4000)?;
    let runs: Vec<Result<DesignRun>> =
        c.energies.par_iter().map(|&e| design_run(sc, sys, &fit, &d.spec.alpha, e)).collect();

    let cv = Value::try_from(&cert).map_err(|e| Error::Config(format!("certification: {e}")))?;
    out.metrics.insert("certification".into(), cv);
    if !(cert.integrability_residual < c.integrability_tol) {
        out.breaches.push(format!("integrability residual {:.3e} exceeds {:e}", cert.integrability_residual, c.integrability_tol));
    }
    if !(cert.path_difference < c.path_tol) {
        out.breaches.push(format!("path difference {:.3e} exceeds {:e}", cert.path_difference, c.path_tol));
    }
    if !cert.definiteness.pass {
        out.breaches.push(format!("potential not negative definite: worst violation {:.3e}", cert.definiteness.worst_violation));
    }
    let mut list = Vec::new();
    for (r, &e) in runs.into_iter().zip(&c.energies) {
        let r = r?;
        out.file(format!("trajectory_{}.csv", energy_tag(e)), strided_csv(&r.traj, c.export_stride));
        out.breaches.extend(r.breaches);
        list.push(r.metrics);
    }
    out.metrics.insert("runs".into(), Value::Array(list));
    if !c.enforce {
        out.breaches.clear();
    }
    out.file("geodesic.csv", geo.to_csv());
    out.file("potential_grid.csv", d.potential.grid_csv(c.grid_resolution));
    out.file("force_field.csv", d.potential.force_field().to_csv(&d.spec.chart, c.field_resolution));
    out.file("chart_grid.csv", d.spec.chart.grid_csv(c.field_resolution));
    Ok(())
}
