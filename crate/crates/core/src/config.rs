//! Declarative run configuration, read from TOML or JSON by extension.
//!
//! Relative paths inside a config resolve against the config file's
//! directory. Scalar fields can be overridden with `path.to.field=value`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::io::{read_field_on, read_series};
use crate::linalg::LinearSolver;
use crate::model::ModelParams;
use crate::opt::{CoarseBasis, OptimizerConfig, Problem};
use crate::series::{uniform_times, Control, FieldSeries};
use crate::sim::{simulate_with, SimOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    /// Box side lengths; defaults to the unit box.
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
    /// Control region as an axis-aligned box; the whole domain when absent.
    #[serde(default)]
    pub control_box: Option<BoxConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt_max: f64,
    #[serde(default = "one")]
    pub save_every: usize,
    #[serde(default)]
    pub solver: LinearSolver,
}

fn one() -> usize {
    1
}

/// A spatial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `base + amplitude exp(-|x - center|^2 / (2 width^2))`
    Gaussian {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `base + amplitude prod_a cos(pi k_a x_a / L_a)`
    Cosine {
        base: f64,
        amplitude: f64,
        modes: Vec<usize>,
    },
    /// Random combination of low cosine modes, shifted so its minimum is
    /// `base`.
    RandomSmooth {
        base: f64,
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: usize,
        seed: u64,
    },
    /// A field CSV (with optional JSON header).
    File {
        path: PathBuf,
    },
}

fn default_modes() -> usize {
    4
}

/// Sum of `modes` cosine products with random wave numbers in `0..4` and
/// amplitudes in `[-1, 1)`, shifted to minimum `base`.
pub fn random_smooth_field(grid: &Arc<Grid>, base: f64, amplitude: f64, modes: usize, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.ndim();
    let terms: Vec<(Vec<f64>, f64)> = (0..modes)
        .map(|_| {
            let k = (0..d).map(|_| rng.gen_range(0..4) as f64).collect();
            (k, rng.gen_range(-1.0..1.0))
        })
        .collect();
    let l = grid.lengths();
    let f = Field::from_fn(grid.clone(), |x| {
        terms
            .iter()
            .map(|(k, a)| a * (0..d).map(|i| (PI * k[i] * x[i] / l[i]).cos()).product::<f64>())
            .sum::<f64>()
    });
    let (lo, hi) = (f.min(), f.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    f.map(|y| base + amplitude * (y - lo) / span)
}

impl Profile {
    pub fn field(&self, grid: &Arc<Grid>, base_dir: &Path) -> Result<Field> {
        let l = grid.lengths();
        let f = match self {
            Profile::Constant { value } => Field::constant(grid.clone(), *value),
            Profile::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => {
                if center.len() != grid.ndim() || !(*width > 0.0) {
                    return Err(Error::Config(format!(
                        "gaussian needs a {}-dimensional center and width > 0",
                        grid.ndim()
                    )));
                }
                Field::from_fn(grid.clone(), |x| {
                    let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                    base + amplitude * (-r2 / (2.0 * width * width)).exp()
                })
            }
            Profile::Cosine {
                base,
                amplitude,
                modes,
            } => {
                if modes.len() != grid.ndim() {
                    return Err(Error::Config(format!(
                        "cosine needs {} mode numbers",
                        grid.ndim()
                    )));
                }
                Field::from_fn(grid.clone(), |x| {
                    let p: f64 = (0..x.len())
                        .map(|a| (PI * modes[a] as f64 * x[a] / l[a]).cos())
                        .product();
                    base + amplitude * p
                })
            }
            Profile::RandomSmooth {
                base,
                amplitude,
                modes,
                seed,
            } => random_smooth_field(grid, *base, *amplitude, *modes, *seed),
            Profile::File { path } => {
                let p = resolve(base_dir, path);
                if !p.exists() {
                    return Err(Error::Config(format!("file not found: {}", p.display())));
                }
                return read_field_on(&p, grid);
            }
        };
        if f.values().iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("profile produced non-finite values".into()));
        }
        Ok(f)
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            Profile::File { path } => vec![path.as_path()],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u: Profile,
    pub v: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Zero,
    Constant { value: f64 },
    /// A profile, constant in time.
    Profile { profile: Profile },
    /// Coefficients on the optimizer's coarse basis.
    Coefficients { values: Vec<f64> },
    /// A series directory.
    Series { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Number of time intervals between control knots.
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default = "zero_spec")]
    pub f: ControlSpec,
}

fn default_intervals() -> usize {
    8
}

fn zero_spec() -> ControlSpec {
    ControlSpec::Zero
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            intervals: default_intervals(),
            f: ControlSpec::Zero,
        }
    }
}

/// A desired state over `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesiredSpec {
    /// A profile, constant in time.
    Static { profile: Profile },
    /// `profile(x) exp(-rate t)`
    Decaying { profile: Profile, rate: f64 },
    /// The matching component of the uncontrolled trajectory.
    Uncontrolled,
    /// The matching component of the trajectory driven by the given
    /// coefficients on the optimizer's coarse basis.
    Reference { values: Vec<f64> },
    Series { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub gamma_u: f64,
    pub gamma_v: f64,
    pub gamma_f: f64,
    /// Radius `M` of the control ball.
    pub radius: f64,
    pub u_d: DesiredSpec,
    pub v_d: DesiredSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Energy constant; for admissibility checks this is `K(M)`.
    #[serde(default)]
    pub k: f64,
    /// Weak-residual tolerance; a mesh-scaled default when absent.
    #[serde(default)]
    pub weak_tol: Option<f64>,
    /// Also solve the comparison problem when simulating.
    #[serde(default = "yes")]
    pub comparison: bool,
    /// Control amplitudes for the energy-constant sweep.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_beta() -> f64 {
    1e-3
}

fn yes() -> bool {
    true
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 4.0]
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            beta: default_beta(),
            k: 0.0,
            weak_tol: None,
            comparison: true,
            lambdas: default_lambdas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelParams,
    pub sim: SimConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub cost: Option<CostConfig>,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub audit: AuditConfig,
    /// Radii for the `M` sweep.
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses the text of a config by the file extension.
fn parse_value(path: &Path, text: &str) -> Result<Value> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => {
            let v: toml::Value = toml::from_str(text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))
        }
        Some("json") => serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        _ => Err(Error::Config(format!(
            "{}: config must end in .toml or .json",
            path.display()
        ))),
    }
}

/// Applies `a.b.c=value`; the value is read as JSON when it parses, and as
/// a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("{path}: {key:?} is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("{path}: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::Config(format!(
                    "{path}: cannot descend into a scalar at {key:?}"
                )))
            }
        };
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value = parse_value(path, &text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    fn referenced_files(&self) -> Vec<(&'static str, PathBuf)> {
        let mut out = Vec::new();
        for (what, p) in [("initial.u", &self.initial.u), ("initial.v", &self.initial.v)] {
            out.extend(p.files().into_iter().map(|f| (what, f.to_path_buf())));
        }
        if let ControlSpec::Series { dir } = &self.control.f {
            out.push(("control", dir.join("manifest.json")));
        }
        if let ControlSpec::Profile { profile } = &self.control.f {
            out.extend(profile.files().into_iter().map(|f| ("control", f.to_path_buf())));
        }
        if let Some(c) = &self.cost {
            for (what, d) in [("cost.u_d", &c.u_d), ("cost.v_d", &c.v_d)] {
                match d {
                    DesiredSpec::Static { profile } | DesiredSpec::Decaying { profile, .. } => {
                        out.extend(profile.files().into_iter().map(|f| (what, f.to_path_buf())))
                    }
                    DesiredSpec::Series { dir } => out.push((what, dir.join("manifest.json"))),
                    DesiredSpec::Uncontrolled | DesiredSpec::Reference { .. } => {}
                }
            }
        }
        out
    }

    /// Checks numeric constraints and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        self.model.validate().map_err(|e| field("model", e))?;
        self.grid().map_err(|e| field("grid", e))?;
        if !(self.sim.dt_max > 0.0) || !self.sim.dt_max.is_finite() {
            return Err(Error::Config(format!("sim.dt_max: must be > 0, got {}", self.sim.dt_max)));
        }
        if self.sim.save_every == 0 {
            return Err(Error::Config("sim.save_every: must be >= 1".into()));
        }
        if self.control.intervals == 0 {
            return Err(Error::Config("control.intervals: must be >= 1".into()));
        }
        if let Some(c) = &self.cost {
            for (name, g) in [
                ("cost.gamma_u", c.gamma_u),
                ("cost.gamma_v", c.gamma_v),
                ("cost.gamma_f", c.gamma_f),
                ("cost.radius", c.radius),
            ] {
                if !(g > 0.0) || !g.is_finite() {
                    return Err(Error::Config(format!("{name}: must be > 0, got {g}")));
                }
            }
        }
        if let Some(o) = &self.optimizer {
            o.validate().map_err(|e| field("optimizer", e))?;
            if o.basis.space.len() != self.grid.dims.len() {
                return Err(Error::Config(format!(
                    "optimizer.basis.space: needs {} entries",
                    self.grid.dims.len()
                )));
            }
        }
        if !(self.audit.beta > 0.0) {
            return Err(Error::Config(format!("audit.beta: must be > 0, got {}", self.audit.beta)));
        }
        if self.radii.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config("radii: every M must be > 0".into()));
        }
        for (what, p) in self.referenced_files() {
            let full = resolve(&self.base_dir, &p);
            if !full.exists() {
                return Err(Error::Config(format!("{what}: file not found: {}", full.display())));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        let lengths = self
            .grid
            .lengths
            .clone()
            .unwrap_or_else(|| vec![1.0; self.grid.dims.len()]);
        let mut g = Grid::on_box(self.grid.dims.clone(), &lengths)?;
        if let Some(b) = &self.grid.control_box {
            g = g.with_control_box(&b.lo, &b.hi)?;
        }
        Ok(Arc::new(g))
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions::new(self.sim.dt_max)
            .save_every(self.sim.save_every)
            .solver(self.sim.solver)
    }

    pub fn initial_state(&self, grid: &Arc<Grid>) -> Result<(Field, Field)> {
        Ok((
            self.initial.u.field(grid, &self.base_dir)?,
            self.initial.v.field(grid, &self.base_dir)?,
        ))
    }

    pub fn control_times(&self) -> Vec<f64> {
        uniform_times(self.model.t_final, self.control.intervals)
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        self.optimizer
            .clone()
            .ok_or_else(|| Error::Config("optimizer: section missing".into()))
    }

    /// The optimizer's coarse basis, or two nodes per axis without one.
    pub fn basis(&self, grid: &Grid) -> CoarseBasis {
        self.optimizer
            .as_ref()
            .map(|o| o.basis.clone())
            .unwrap_or(CoarseBasis {
                time: 2,
                space: vec![2; grid.ndim()],
            })
    }

    pub fn control(&self, grid: &Arc<Grid>) -> Result<Control> {
        let times = self.control_times();
        Ok(match &self.control.f {
            ControlSpec::Zero => Control::zero(grid.clone(), times),
            ControlSpec::Constant { value } => Control::constant(grid.clone(), times, *value),
            ControlSpec::Profile { profile } => Control::new(FieldSeries::constant_in_time(
                profile.field(grid, &self.base_dir)?,
                times,
            )?),
            ControlSpec::Coefficients { values } => self.basis(grid).prolong(values, grid, &times)?,
            ControlSpec::Series { dir } => {
                Control::new(read_series(&resolve(&self.base_dir, dir), Some(grid))?)
            }
        })
    }

    fn desired(
        &self,
        spec: &DesiredSpec,
        grid: &Arc<Grid>,
        pick_v: bool,
    ) -> Result<FieldSeries> {
        let steps = (self.model.t_final / self.sim.dt_max).ceil().max(1.0) as usize;
        let times = uniform_times(self.model.t_final, steps.max(self.control.intervals));
        match spec {
            DesiredSpec::Static { profile } => {
                FieldSeries::constant_in_time(profile.field(grid, &self.base_dir)?, times)
            }
            DesiredSpec::Decaying { profile, rate } => {
                let f = profile.field(grid, &self.base_dir)?;
                let fields = times.iter().map(|&t| f.map(|x| x * (-rate * t).exp())).collect();
                FieldSeries::new(grid.clone(), times, fields)
            }
            DesiredSpec::Uncontrolled | DesiredSpec::Reference { .. } => {
                let (u0, v0) = self.initial_state(grid)?;
                let control = match spec {
                    DesiredSpec::Reference { values } => {
                        self.basis(grid).prolong(values, grid, &self.control_times())?
                    }
                    _ => Control::zero(grid.clone(), self.control_times()),
                };
                let opts = self.sim_options().save_every(1);
                let traj = simulate_with(&u0, &v0, &control, &self.model, &opts)?;
                if pick_v {
                    traj.v_series()
                } else {
                    traj.u_series()
                }
            }
            DesiredSpec::Series { dir } => read_series(&resolve(&self.base_dir, dir), Some(grid)),
        }
    }

    pub fn cost_params(&self, grid: &Arc<Grid>) -> Result<CostParams> {
        let c = self
            .cost
            .as_ref()
            .ok_or_else(|| Error::Config("cost: section missing".into()))?;
        let u_d = self.desired(&c.u_d, grid, false)?;
        let v_d = self.desired(&c.v_d, grid, true)?;
        Ok(CostParams {
            gamma_u: c.gamma_u,
            gamma_v: c.gamma_v,
            gamma_f: c.gamma_f,
            q: self.model.q,
            u_d,
            v_d,
            radius: c.radius,
        })
    }

    /// The optimization problem; states are saved at every step so `J` sees
    /// the full time resolution.
    pub fn problem(&self) -> Result<Problem> {
        let grid = self.grid()?;
        let (u0, v0) = self.initial_state(&grid)?;
        let cost = self.cost_params(&grid)?;
        let basis = self.optimizer_config()?.basis;
        Ok(Problem {
            u0,
            v0,
            params: self.model.clone(),
            cost,
            sim: self.sim_options().save_every(1),
            basis,
            control_times: self.control_times(),
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        resolve(&self.base_dir, &self.output_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        [grid]
        dims = [8]
        control_box = { lo = [0.0], hi = [0.5] }
        [model]
        s = 1.0
        t_final = 0.25
        [sim]
        dt_max = 0.0625
        [initial]
        u = { preset = "gaussian", amplitude = 1.0, center = [0.5], width = 0.2 }
        v = { preset = "constant", value = 1.0 }
        [control]
        f = { preset = "constant", value = 0.5 }
    "#;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunConfig::from_toml_str(SMALL, dir.path()).unwrap();
        let json = dir.path().join("c.json");
        std::fs::write(&json, serde_json::to_string(&a).unwrap()).unwrap();
        let b = RunConfig::load(&json, &[]).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.model, b.model);
        assert_eq!(a.control, b.control);
        let g = a.grid().unwrap();
        assert_eq!(g.control_mask().iter().filter(|&&m| m).count(), 4);
        assert_eq!(a.control(&g).unwrap().at(0.1)[7], 0.0);
    }

    #[test]
    fn overrides_edit_scalars() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, SMALL).unwrap();
        let c = RunConfig::load(&p, &["model.s=2.5".into(), "grid.dims.0=12".into()]).unwrap();
        assert_eq!(c.model.s, 2.5);
        assert_eq!(c.grid.dims, vec![12]);
        let bad = RunConfig::load(&p, &["model.s=0.5".into()]);
        assert!(matches!(bad, Err(Error::Config(m)) if m.contains("model")));
    }

    #[test]
    fn missing_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let text = SMALL.replace(
            r#"u = { preset = "gaussian", amplitude = 1.0, center = [0.5], width = 0.2 }"#,
            r#"u = { preset = "file", path = "nowhere/u0.csv" }"#,
        );
        let err = RunConfig::from_toml_str(&text, dir.path()).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("nowhere/u0.csv")), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = SMALL.replace("dt_max = 0.0625", "dt_max = 0.0625\ndtmax = 1");
        assert!(matches!(RunConfig::from_toml_str(&text, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn random_smooth_is_seeded_and_bounded() {
        let g = Arc::new(Grid::on_box(vec![10, 6], &[1.0, 1.0]).unwrap());
        let a = random_smooth_field(&g, 0.2, 1.0, 4, 9);
        let b = random_smooth_field(&g, 0.2, 1.0, 4, 9);
        assert_eq!(a, b);
        assert!(a.min() >= 0.2 - 1e-15 && a.max() <= 1.2 + 1e-15);
    }
}
