//! Scenario configuration: TOML schema, built-in presets and the translation
//! into a [`Problem`], its initial state and the time-loop settings.
//!
//! A file may name a `preset`; its own keys are merged over the preset table
//! by table, so `[time] t_final_days = 2` only shortens the run. Times are
//! given either in seconds (`tau`, `t_final`) or in days (`tau_days`,
//! `t_final_days`) and are stored in seconds.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{FlowState, Problem, SchemeParams};
use crate::dg::{DgField, DgSpace};
use crate::error::{Error, Result};
use crate::limiters::{CompressionUpdate, FluxLimiterConfig, ProductionSign};
use crate::mesh::{BoundaryRule, BoundarySelector, PressureBc, SaturationBc, TriMesh};
use crate::physics::{
    BoundaryData, FluidModel, PermeabilityField, Raster, Rect, RockModel, ScalarData, WellBox, WellModel,
};
use crate::solver::{LimiterMode, NewtonConfig, TimeLoopConfig};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub preset: Option<String>,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub fluid: FluidSpec,
    #[serde(default)]
    pub rock: RockSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub gravity: [f64; 2],
    pub permeability: PermeabilitySpec,
    #[serde(default)]
    pub boundary: Vec<BoundarySpec>,
    #[serde(default)]
    pub wells: Option<WellsSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory relative file names are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Rectangle `[0, lx] x [0, ly]` split into crossed cells of side `h`, or a
/// mesh read from a `node/ele` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    #[serde(default)]
    pub lx: f64,
    #[serde(default)]
    pub ly: f64,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSpec {
    pub rho_w0: f64,
    pub rho_l0: f64,
    pub mu_w: f64,
    pub mu_l: f64,
    pub c_w: f64,
    pub c_l: f64,
    pub s_rw: f64,
    pub s_rl: f64,
    pub clamp_mobility: bool,
}

impl Default for FluidSpec {
    fn default() -> Self {
        Self {
            rho_w0: 1000.0,
            rho_l0: 850.0,
            mu_w: 5e-4,
            mu_l: 2e-3,
            c_w: 1e-10,
            c_l: 1e-6,
            s_rw: 0.15,
            s_rl: 0.15,
            clamp_mobility: true,
        }
    }
}

impl FluidSpec {
    pub fn model(&self) -> FluidModel<f64> {
        FluidModel {
            rho_w0: self.rho_w0,
            rho_l0: self.rho_l0,
            c_w: self.c_w,
            c_l: self.c_l,
            mu_w: self.mu_w,
            mu_l: self.mu_l,
            s_rw: self.s_rw,
            s_rl: self.s_rl,
            clamp_mobility: self.clamp_mobility,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RockSpec {
    pub phi0: f64,
    pub c_r: f64,
}

impl Default for RockSpec {
    fn default() -> Self {
        Self { phi0: 0.15, c_r: 9e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub s0: f64,
    pub p0: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { s0: 0.15, p0: 1e6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSpec {
    pub sigma: f64,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        Self { sigma: 100.0 }
    }
}

/// Step and final time, in seconds after parsing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTime", into = "RawTime")]
pub struct TimeSpec {
    pub tau: f64,
    pub t_final: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau_days: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_final_days: Option<f64>,
}

impl TryFrom<RawTime> for TimeSpec {
    type Error = String;

    fn try_from(r: RawTime) -> std::result::Result<Self, String> {
        let pick = |secs: Option<f64>, days: Option<f64>, key: &str| match (secs, days) {
            (Some(s), None) => Ok(s),
            (None, Some(d)) => Ok(d * SECONDS_PER_DAY),
            (Some(_), Some(_)) => Err(format!("time.{key}: give either `{key}` or `{key}_days`, not both")),
            (None, None) => Err(format!("time.{key}: missing (`{key}` in seconds or `{key}_days`)")),
        };
        Ok(Self {
            tau: pick(r.tau, r.tau_days, "tau")?,
            t_final: pick(r.t_final, r.t_final_days, "t_final")?,
        })
    }
}

impl From<TimeSpec> for RawTime {
    fn from(t: TimeSpec) -> Self {
        RawTime {
            tau: Some(t.tau),
            t_final: Some(t.t_final),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PermeabilitySpec {
    Constant {
        k: f64,
    },
    Blocks {
        background: f64,
        blocks: Vec<BlockSpec>,
    },
    /// Raster file (see [`Raster::parse`]) placed over the domain.
    Raster {
        background: f64,
        file: PathBuf,
    },
    /// Synthetic lognormal raster over `region`, a stand-in for field data.
    Lognormal {
        background: f64,
        region: Rect,
        nx: usize,
        ny: usize,
        geometric_mean: f64,
        sigma_log: f64,
        seed: u64,
    },
    TensorQuadrants {
        k1: f64,
        k2: f64,
        split: [f64; 2],
        /// Degrees, ordered bottom-left, bottom-right, top-left, top-right.
        theta_deg: [f64; 4],
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub selector: BoundarySelector,
    pub pressure: PressureBc,
    pub saturation: SaturationBc,
    #[serde(default)]
    pub g_p: f64,
    #[serde(default)]
    pub g_s: f64,
    #[serde(default)]
    pub j_p: f64,
    #[serde(default)]
    pub j_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellsSpec {
    pub s_in: f64,
    #[serde(default)]
    pub injectors: Vec<WellSpec>,
    #[serde(default)]
    pub producers: Vec<WellSpec>,
}

/// Total rate (m^2/s in 2D) spread uniformly over a box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub limiter: LimiterMode,
    pub newton_rtol: f64,
    pub newton_atol: f64,
    pub newton_floor_factor: f64,
    pub newton_max_iter: usize,
    pub linesearch_max_halvings: usize,
    pub fl_eps1: f64,
    pub fl_eps2: f64,
    pub fl_max_iter: usize,
    pub fl_compression: CompressionUpdate,
    pub fl_clip: bool,
    pub fl_production_sign: ProductionSign,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let n = NewtonConfig::<f64>::default();
        let f = FluxLimiterConfig::<f64>::default();
        Self {
            limiter: LimiterMode::FlSl,
            newton_rtol: n.rtol,
            newton_atol: n.atol,
            newton_floor_factor: n.floor_factor,
            newton_max_iter: n.max_iter,
            linesearch_max_halvings: n.max_halvings,
            fl_eps1: f.eps1,
            fl_eps2: f.eps2,
            fl_max_iter: f.max_iter,
            fl_compression: f.compression,
            fl_clip: f.clip,
            fl_production_sign: f.production_sign,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Write a VTK file every this many steps (0: initial and final only).
    pub vtk_every: usize,
    /// Keep and write the flux-limiter iteration trace.
    pub verbose: bool,
}

/// Names of the built-in scenarios.
pub const PRESETS: [&str; 6] = [
    "pressure_driven_homogeneous",
    "pressure_driven_heterogeneous",
    "pressure_driven_inclusions",
    "pressure_driven_gravity",
    "quarter_five_spot",
    "quarter_five_spot_anisotropic",
];

const PRESSURE_DRIVEN_BOUNDARY: &str = r#"
[[boundary]]
selector = "left"
pressure = "dirichlet"
saturation = "dirichlet"
g_p = 3e6
g_s = 0.85

[[boundary]]
selector = "right"
pressure = "dirichlet"
saturation = "outflow"
g_p = 1e6

[[boundary]]
selector = "all"
pressure = "neumann"
saturation = "neumann"
"#;

const INCLUSIONS: &str = r#"
[permeability]
kind = "blocks"
background = 1e-12
blocks = [
    { x0 = 60.0, x1 = 80.0, y0 = 20.0, y1 = 40.0, k = 1e-15 },
    { x0 = 140.0, x1 = 160.0, y0 = 20.0, y1 = 40.0, k = 1e-15 },
    { x0 = 220.0, x1 = 240.0, y0 = 20.0, y1 = 40.0, k = 1e-15 },
    { x0 = 60.0, x1 = 80.0, y0 = 60.0, y1 = 80.0, k = 1e-15 },
    { x0 = 140.0, x1 = 160.0, y0 = 60.0, y1 = 80.0, k = 1e-15 },
    { x0 = 220.0, x1 = 240.0, y0 = 60.0, y1 = 80.0, k = 1e-15 },
]
"#;

const QUARTER_FIVE_SPOT_WELLS: &str = r#"
[[boundary]]
selector = "all"
pressure = "neumann"
saturation = "neumann"

[wells]
s_in = 0.85
injectors = [{ x0 = 5.0, x1 = 12.5, y0 = 5.0, y1 = 12.5, rate = 9.8437e-4 }]
producers = [{ x0 = 87.5, x1 = 95.0, y0 = 87.5, y1 = 95.0, rate = 9.8437e-4 }]
"#;

fn preset_text(name: &str) -> Option<String> {
    let body = match name {
        "pressure_driven_homogeneous" => format!(
            r#"
[mesh]
lx = 100.0
ly = 30.0
h = 10.0

[time]
tau_days = 0.05
t_final_days = 10.0

[permeability]
kind = "constant"
k = 1e-12
{PRESSURE_DRIVEN_BOUNDARY}"#
        ),
        // the central block stands in for the layer-71 slice of SPE10, which
        // users supply as a raster file
        "pressure_driven_heterogeneous" => format!(
            r#"
[mesh]
lx = 150.0
ly = 100.0
h = 1.6666666666666667

[time]
tau_days = 0.08333333333333333
t_final_days = 68.0

[permeability]
kind = "lognormal"
background = 1e-11
region = {{ x0 = 25.0, x1 = 125.0, y0 = 0.0, y1 = 100.0 }}
nx = 60
ny = 220
geometric_mean = 1e-13
sigma_log = 2.0
seed = 71
{PRESSURE_DRIVEN_BOUNDARY}"#
        ),
        "pressure_driven_inclusions" | "pressure_driven_gravity" => {
            let g = if name == "pressure_driven_gravity" {
                "gravity = [0.0, -9.81]\n"
            } else {
                ""
            };
            format!(
                r#"{g}
[mesh]
lx = 300.0
ly = 100.0
h = 3.3333333333333335

[time]
tau_days = 0.08333333333333333
t_final_days = 30.0
{INCLUSIONS}{PRESSURE_DRIVEN_BOUNDARY}"#
            )
        }
        "quarter_five_spot" => format!(
            r#"
[mesh]
lx = 100.0
ly = 100.0
h = 2.5

[time]
tau_days = 0.05
t_final_days = 11.0

[permeability]
kind = "constant"
k = 1e-12
{QUARTER_FIVE_SPOT_WELLS}"#
        ),
        "quarter_five_spot_anisotropic" => format!(
            r#"
[mesh]
lx = 100.0
ly = 100.0
h = 2.5

[time]
tau_days = 0.05
t_final_days = 5.0

[permeability]
kind = "tensor_quadrants"
k1 = 2.25e-12
k2 = 2.25e-14
split = [50.0, 50.0]
theta_deg = [45.0, 0.0, 90.0, 45.0]
{QUARTER_FIVE_SPOT_WELLS}"#
        ),
        _ => return None,
    };
    Some(format!("preset = \"{name}\"\n{body}"))
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Overlays `top` on `base`, recursing into tables; arrays are replaced, and
/// so are tables whose `kind` changes.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t))
                if t.get("kind").is_none_or(|kind| b.get("kind") == Some(kind)) =>
            {
                merge(b, t)
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ScenarioConfig {
    /// A built-in scenario.
    pub fn preset(name: &str) -> Result<Self> {
        Self::parse_str(&format!("preset = \"{name}\""), Path::new("."))
    }

    /// Parses TOML text; relative paths inside are resolved against `base_dir`.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut user = parse_table(text, "config")?;
        let mut table = match user.get("preset") {
            None => toml::Table::new(),
            Some(toml::Value::String(name)) => {
                let body = preset_text(name).ok_or_else(|| {
                    Error::Config(format!(
                        "preset: unknown preset `{name}` (known: {})",
                        PRESETS.join(", ")
                    ))
                })?;
                parse_table(&body, name)?
            }
            Some(_) => return Err(Error::Config("preset: expected a string".into())),
        };
        // boundary rules are a list and replace the preset's list wholesale
        if user.contains_key("boundary") {
            table.remove("boundary");
        }
        // a step or final time given in either unit replaces both forms
        if let (Some(toml::Value::Table(t)), Some(toml::Value::Table(u))) = (table.get_mut("time"), user.get("time")) {
            for key in ["tau", "t_final"] {
                if u.contains_key(key) || u.contains_key(&format!("{key}_days")) {
                    t.remove(key);
                    t.remove(&format!("{key}_days"));
                }
            }
        }
        merge(&mut table, std::mem::take(&mut user));
        let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!("{path}: {}", inner.message()))
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse_str(&text, dir)
    }

    /// `preset:<name>` or a file path.
    pub fn load(source: &str) -> Result<Self> {
        match source.strip_prefix("preset:") {
            Some(name) => Self::preset(name),
            None => Self::from_file(Path::new(source)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fluid.model().validate()?;
        RockModel {
            phi0: self.rock.phi0,
            c_r: self.rock.c_r,
        }
        .validate()?;
        if !(self.scheme.sigma > 0.0) {
            return Err(Error::param("sigma", "must be positive"));
        }
        if !(self.time.tau > 0.0) {
            return Err(Error::param("time.tau", "must be positive"));
        }
        if !(self.time.t_final >= 0.0) {
            return Err(Error::param("time.t_final", "must be non-negative"));
        }
        TimeLoopConfig::<f64>::new(self.time.t_final, LimiterMode::None).num_steps(self.time.tau)?;
        if self.mesh.file.is_none() {
            self.grid()?;
        }
        let lo = self.fluid.s_rw;
        let hi = 1.0 - self.fluid.s_rl;
        if !(self.initial.s0 >= lo && self.initial.s0 <= hi) {
            return Err(Error::param("initial.s0", format!("must lie in [{lo}, {hi}]")));
        }
        if let Some(w) = &self.wells {
            if !(w.s_in >= lo && w.s_in <= hi) {
                return Err(Error::param("wells.s_in", format!("must lie in [{lo}, {hi}]")));
            }
            for (key, list) in [("wells.injectors", &w.injectors), ("wells.producers", &w.producers)] {
                if list.iter().any(|b| !(b.rate >= 0.0 && b.x1 > b.x0 && b.y1 > b.y0)) {
                    return Err(Error::param(key, "rates must be >= 0 on boxes of positive area"));
                }
            }
        }
        for (i, b) in self.boundary.iter().enumerate() {
            if b.saturation == SaturationBc::Dirichlet && !(b.g_s >= lo && b.g_s <= hi) {
                return Err(Error::param(
                    &format!("boundary[{i}].g_s"),
                    format!("must lie in [{lo}, {hi}]"),
                ));
            }
        }
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(key, format!("must be positive, got {v}")))
            }
        };
        match &self.permeability {
            PermeabilitySpec::Constant { k } => positive("permeability.k", *k)?,
            PermeabilitySpec::Blocks { background, blocks } => {
                positive("permeability.background", *background)?;
                for b in blocks {
                    positive("permeability.blocks.k", b.k)?;
                }
            }
            PermeabilitySpec::Raster { background, file } => {
                positive("permeability.background", *background)?;
                let path = self.resolve(file);
                if !path.is_file() {
                    return Err(Error::param(
                        "permeability.file",
                        format!("{} does not exist", path.display()),
                    ));
                }
            }
            PermeabilitySpec::Lognormal {
                background,
                geometric_mean,
                nx,
                ny,
                ..
            } => {
                positive("permeability.background", *background)?;
                positive("permeability.geometric_mean", *geometric_mean)?;
                if *nx == 0 || *ny == 0 {
                    return Err(Error::param("permeability.nx", "raster dimensions must be positive"));
                }
            }
            PermeabilitySpec::TensorQuadrants { k1, k2, .. } => {
                positive("permeability.k1", *k1)?;
                positive("permeability.k2", *k2)?;
            }
        }
        if let Some(f) = &self.mesh.file {
            let path = self.resolve(f);
            if !path.is_file() {
                return Err(Error::param("mesh.file", format!("{} does not exist", path.display())));
            }
        }
        if self.solver.newton_max_iter == 0 {
            return Err(Error::param("solver.newton_max_iter", "must be at least 1"));
        }
        Ok(())
    }

    /// Cell counts of the crossed grid.
    pub fn grid(&self) -> Result<(usize, usize)> {
        let m = &self.mesh;
        if !(m.lx > 0.0 && m.ly > 0.0) {
            return Err(Error::param("mesh.lx", "domain lengths must be positive"));
        }
        let count = |len: f64, n: Option<usize>, key: &str| -> Result<usize> {
            match (n, m.h) {
                (Some(n), _) if n > 0 => Ok(n),
                (Some(_), _) => Err(Error::param(key, "must be positive")),
                (None, Some(h)) if h > 0.0 => {
                    let n = (len / h).round();
                    if n < 1.0 || (n * h - len).abs() > 1e-9 * len {
                        Err(Error::param("mesh.h", format!("{h} does not divide the length {len}")))
                    } else {
                        Ok(n as usize)
                    }
                }
                _ => Err(Error::param("mesh.h", "give a positive `h` or cell counts `nx`, `ny`")),
            }
        };
        Ok((count(m.lx, m.nx, "mesh.nx")?, count(m.ly, m.ny, "mesh.ny")?))
    }

    pub fn boundary_rules(&self) -> Vec<BoundaryRule> {
        self.boundary
            .iter()
            .map(|b| BoundaryRule::new(b.selector.clone(), b.pressure, b.saturation))
            .collect()
    }

    /// The classified mesh.
    pub fn mesh(&self) -> Result<TriMesh<f64>> {
        let mesh = match &self.mesh.file {
            Some(f) => TriMesh::read_node_ele(&self.resolve(f))?,
            None => {
                let (nx, ny) = self.grid()?;
                TriMesh::generate_crossed(nx, ny, self.mesh.lx, self.mesh.ly)?
            }
        };
        mesh.classify_boundary(&self.boundary_rules())
    }

    pub fn permeability_field(&self) -> Result<PermeabilityField> {
        Ok(match &self.permeability {
            PermeabilitySpec::Constant { k } => PermeabilityField::Constant(*k),
            PermeabilitySpec::Blocks { background, blocks } => PermeabilityField::Blocks {
                background: *background,
                blocks: blocks
                    .iter()
                    .map(|b| (Rect::new(b.x0, b.x1, b.y0, b.y1), b.k))
                    .collect(),
            },
            PermeabilitySpec::Raster { background, file } => PermeabilityField::Raster {
                background: *background,
                raster: Raster::read(&self.resolve(file))?,
            },
            PermeabilitySpec::Lognormal {
                background,
                region,
                nx,
                ny,
                geometric_mean,
                sigma_log,
                seed,
            } => PermeabilityField::Raster {
                background: *background,
                raster: lognormal_raster(*region, *nx, *ny, *geometric_mean, *sigma_log, *seed),
            },
            PermeabilitySpec::TensorQuadrants {
                k1,
                k2,
                split,
                theta_deg,
            } => PermeabilityField::TensorQuadrants {
                k1: *k1,
                k2: *k2,
                split: *split,
                theta_deg: *theta_deg,
            },
        })
    }

    pub fn time_loop(&self) -> TimeLoopConfig<f64> {
        let s = &self.solver;
        TimeLoopConfig {
            t_final: self.time.t_final,
            newton: NewtonConfig {
                rtol: s.newton_rtol,
                atol: s.newton_atol,
                floor_factor: s.newton_floor_factor,
                max_iter: s.newton_max_iter,
                max_halvings: s.linesearch_max_halvings,
            },
            limiter: s.limiter,
            flux_limiter: FluxLimiterConfig {
                eps1: s.fl_eps1,
                eps2: s.fl_eps2,
                max_iter: s.fl_max_iter,
                compression: s.fl_compression,
                clip: s.fl_clip,
                production_sign: s.fl_production_sign,
            },
            bounds: None,
            verbose: self.output.verbose,
        }
    }

    /// Discrete problem, projected initial state and loop settings.
    pub fn build(&self) -> Result<Scenario> {
        let mesh = self.mesh()?;
        let permeability = self.permeability_field()?.evaluate(&mesh)?;
        let wells = match &self.wells {
            Some(w) => {
                let boxes = |v: &[WellSpec]| -> Vec<WellBox> {
                    v.iter()
                        .map(|b| WellBox {
                            region: Rect::new(b.x0, b.x1, b.y0, b.y1),
                            total_rate: b.rate,
                        })
                        .collect()
                };
                Some(WellModel::from_boxes(
                    &mesh,
                    w.s_in,
                    &boxes(&w.injectors),
                    &boxes(&w.producers),
                )?)
            }
            None => None,
        };
        let space = DgSpace::new(mesh);
        let ne = space.num_elements();
        let rock = RockModel {
            phi0: self.rock.phi0,
            c_r: self.rock.c_r,
        };
        let mut pb = Problem::new(
            space,
            self.fluid.model(),
            rock,
            permeability,
            SchemeParams::new(self.scheme.sigma, self.time.tau),
        );
        if let Some(w) = wells {
            pb.wells = w;
        }
        pb.gravity = self.gravity;
        pb.boundary = self
            .boundary
            .iter()
            .map(|b| BoundaryData {
                g_p: ScalarData::Constant(b.g_p),
                g_s: ScalarData::Constant(b.g_s),
                j_p: ScalarData::Constant(b.j_p),
                j_s: ScalarData::Constant(b.j_s),
            })
            .collect();
        pb.validate()?;
        let initial = FlowState::new(
            DgField::constant(ne, self.initial.p0),
            DgField::constant(ne, self.initial.s0),
            0,
            0.0,
        );
        Ok(Scenario {
            problem: pb,
            initial,
            time_loop: self.time_loop(),
        })
    }
}

/// Everything needed to run a configured scenario.
pub struct Scenario {
    pub problem: Problem<f64>,
    pub initial: FlowState<f64>,
    pub time_loop: TimeLoopConfig<f64>,
}

/// Cell values `exp(ln(mean) + sigma_log * z)` with `z` standard normal
/// (Box-Muller), reproducible from `seed`.
pub fn lognormal_raster(region: Rect, nx: usize, ny: usize, mean: f64, sigma_log: f64, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..nx * ny)
        .map(|_| {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            (mean.ln() + sigma_log * z).exp()
        })
        .collect();
    Raster {
        nx,
        ny,
        x0: region.x0,
        y0: region.y0,
        dx: (region.x1 - region.x0) / nx as f64,
        dy: (region.y1 - region.y0) / ny as f64,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_builds_its_mesh() {
        for name in PRESETS {
            let c = ScenarioConfig::preset(name).unwrap();
            assert_eq!(c.preset.as_deref(), Some(name));
            c.mesh().unwrap();
        }
    }

    #[test]
    fn homogeneous_preset_values() {
        let c = ScenarioConfig::preset("pressure_driven_homogeneous").unwrap();
        assert_eq!((c.mesh.lx, c.mesh.ly, c.mesh.h), (100.0, 30.0, Some(10.0)));
        assert_eq!(c.grid().unwrap(), (10, 3));
        assert_eq!(c.permeability, PermeabilitySpec::Constant { k: 1e-12 });
        assert!((c.time.tau - 0.05 * 86400.0).abs() < 1e-9);
        assert_eq!(c.time.t_final, 10.0 * 86400.0);
        assert_eq!(c.boundary[0].g_p, 3e6);
        assert_eq!(c.boundary[0].g_s, 0.85);
        assert_eq!(c.boundary[1].g_p, 1e6);
        assert_eq!(c.boundary[1].saturation, SaturationBc::Outflow);
        assert_eq!(c.gravity, [0.0, 0.0]);
        assert_eq!(c.solver.limiter, LimiterMode::FlSl);
        assert_eq!(c.time_loop().num_steps(c.time.tau).unwrap(), 200);
    }

    #[test]
    fn default_physics_constants() {
        let c = ScenarioConfig::preset("pressure_driven_homogeneous").unwrap();
        let f = c.fluid;
        assert_eq!((f.rho_w0, f.rho_l0, f.mu_w, f.mu_l), (1000.0, 850.0, 5e-4, 2e-3));
        assert_eq!((f.c_w, f.c_l, f.s_rw, f.s_rl), (1e-10, 1e-6, 0.15, 0.15));
        assert_eq!((c.rock.phi0, c.rock.c_r), (0.15, 9e-10));
        assert_eq!((c.initial.s0, c.initial.p0, c.scheme.sigma), (0.15, 1e6, 100.0));
    }

    #[test]
    fn quarter_five_spot_preset_values() {
        let c = ScenarioConfig::preset("quarter_five_spot").unwrap();
        assert_eq!((c.mesh.lx, c.mesh.ly, c.mesh.h), (100.0, 100.0, Some(2.5)));
        assert_eq!(c.grid().unwrap(), (40, 40));
        assert_eq!(c.time.t_final, 11.0 * 86400.0);
        let w = c.wells.as_ref().unwrap();
        assert_eq!(w.s_in, 0.85);
        assert_eq!(
            w.injectors,
            vec![WellSpec {
                x0: 5.0,
                x1: 12.5,
                y0: 5.0,
                y1: 12.5,
                rate: 9.8437e-4
            }]
        );
        assert_eq!(
            w.producers,
            vec![WellSpec {
                x0: 87.5,
                x1: 95.0,
                y0: 87.5,
                y1: 95.0,
                rate: 9.8437e-4
            }]
        );
        let sc = c.build().unwrap();
        let mesh = sc.problem.space.mesh();
        let total: f64 = sc
            .problem
            .wells
            .injection
            .iter()
            .zip(mesh.areas())
            .map(|(q, a)| q * a)
            .sum();
        assert!((total - 9.8437e-4).abs() < 1e-15);
    }

    #[test]
    fn other_preset_values() {
        let c = ScenarioConfig::preset("pressure_driven_heterogeneous").unwrap();
        assert_eq!(c.grid().unwrap(), (90, 60));
        assert_eq!(c.time_loop().num_steps(c.time.tau).unwrap(), 68 * 12);
        let g = ScenarioConfig::preset("pressure_driven_gravity").unwrap();
        assert_eq!(g.grid().unwrap(), (90, 30));
        assert_eq!(g.gravity, [0.0, -9.81]);
        assert_eq!(g.time_loop().num_steps(g.time.tau).unwrap(), 360);
        let field = g.permeability_field().unwrap();
        assert_eq!(field.at([70.0, 30.0]).unwrap().xx, 1e-15);
        assert_eq!(field.at([230.0, 70.0]).unwrap().xx, 1e-15);
        assert_eq!(field.at([110.0, 50.0]).unwrap().xx, 1e-12);
        let n = ScenarioConfig::preset("pressure_driven_inclusions").unwrap();
        assert_eq!(n.gravity, [0.0, 0.0]);
        let a = ScenarioConfig::preset("quarter_five_spot_anisotropic").unwrap();
        let k = a.permeability_field().unwrap();
        let bl = k.at([10.0, 10.0]).unwrap();
        assert!((bl.xy - 0.5 * (2.25e-12 - 2.25e-14)).abs() < 1e-24);
        assert_eq!(k.at([75.0, 10.0]).unwrap().xx, 2.25e-12);
        assert!((k.at([10.0, 75.0]).unwrap().yy - 2.25e-12).abs() < 1e-24);
    }

    #[test]
    fn override_of_another_kind_replaces_the_table() {
        let text = "preset = \"pressure_driven_homogeneous\"\n[permeability]\nkind = \"blocks\"\nbackground = 2e-12\nblocks = []\n";
        let c = ScenarioConfig::parse_str(text, Path::new(".")).unwrap();
        assert_eq!(
            c.permeability,
            PermeabilitySpec::Blocks {
                background: 2e-12,
                blocks: vec![]
            }
        );
        let same = "preset = \"quarter_five_spot_anisotropic\"\n[permeability]\nk2 = 1e-13\n";
        match ScenarioConfig::parse_str(same, Path::new(".")).unwrap().permeability {
            PermeabilitySpec::TensorQuadrants { k1, k2, .. } => assert_eq!((k1, k2), (2.25e-12, 1e-13)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_merge_over_presets() {
        let text = "preset = \"quarter_five_spot\"\n[mesh]\nh = 5.0\n[time]\nt_final_days = 1.0\n[solver]\nlimiter = \"none\"\n";
        let c = ScenarioConfig::parse_str(text, Path::new(".")).unwrap();
        assert_eq!(c.grid().unwrap(), (20, 20));
        assert_eq!(c.mesh.lx, 100.0);
        assert_eq!(c.time.t_final, 86400.0);
        assert!((c.time.tau - 4320.0).abs() < 1e-9);
        assert_eq!(c.solver.limiter, LimiterMode::None);
    }

    #[test]
    fn validation_names_the_key() {
        let bad = |extra: &str| {
            let text = format!("preset = \"pressure_driven_homogeneous\"\n{extra}");
            ScenarioConfig::parse_str(&text, Path::new("."))
                .unwrap_err()
                .to_string()
        };
        assert!(bad("[fluid]\nmu_w = -1.0\n").contains("mu_w"));
        assert!(bad("[rock]\nphi0 = 1.5\n").contains("phi0"));
        assert!(bad("[fluid]\nbogus = 1.0\n").contains("bogus"));
        assert!(bad("[mesh]\nh = 7.0\n").contains("mesh.h"));
        assert!(bad("[time]\ntau = -1.0\n").contains("tau"));
        assert!(bad("[solver]\nlimiter = \"sometimes\"\n").contains("limiter"));
        assert!(bad("unknown_top = 1\n").contains("unknown_top"));
        assert!(ScenarioConfig::parse_str("preset = \"nope\"", Path::new(".")).is_err());
        let missing = "[mesh]\nlx = 1.0\nly = 1.0\nh = 0.5\n[permeability]\nkind = \"constant\"\nk = 1.0\n";
        assert!(ScenarioConfig::parse_str(missing, Path::new("."))
            .unwrap_err()
            .to_string()
            .contains("time"));
    }

    #[test]
    fn raster_file_is_resolved_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let r = lognormal_raster(Rect::new(0.0, 10.0, 0.0, 10.0), 4, 4, 1e-12, 1.0, 3);
        std::fs::write(dir.path().join("k.txt"), r.to_text()).unwrap();
        let cfg = "[mesh]\nlx = 10.0\nly = 10.0\nh = 5.0\n[time]\ntau = 1.0\nt_final = 2.0\n\
                   [permeability]\nkind = \"raster\"\nbackground = 1e-12\nfile = \"k.txt\"\n\
                   [[boundary]]\nselector = \"all\"\npressure = \"neumann\"\nsaturation = \"neumann\"\n";
        std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
        let c = ScenarioConfig::from_file(&dir.path().join("c.toml")).unwrap();
        let sc = c.build().unwrap();
        assert_eq!(sc.problem.permeability.len(), 16);
        std::fs::remove_file(dir.path().join("k.txt")).unwrap();
        assert!(ScenarioConfig::from_file(&dir.path().join("c.toml"))
            .unwrap_err()
            .to_string()
            .contains("permeability.file"));
    }

    #[test]
    fn lognormal_raster_statistics() {
        let r = lognormal_raster(Rect::new(0.0, 1.0, 0.0, 1.0), 100, 100, 1e-13, 2.0, 7);
        let logs: Vec<f64> = r.values.iter().map(|v| v.ln()).collect();
        let m = logs.iter().sum::<f64>() / logs.len() as f64;
        let sd = (logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / logs.len() as f64).sqrt();
        assert!((m - 1e-13f64.ln()).abs() < 0.1);
        assert!((sd - 2.0).abs() < 0.1);
        assert_eq!(
            r,
            lognormal_raster(Rect::new(0.0, 1.0, 0.0, 1.0), 100, 100, 1e-13, 2.0, 7)
        );
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::preset("quarter_five_spot_anisotropic").unwrap();
        let again = ScenarioConfig::parse_str(&c.to_toml(), Path::new(".")).unwrap();
        assert_eq!(again, c);
    }
}
