//! Scenario files: TOML with documented defaults, `--set` overrides and a
//! content hash naming the run directory.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::charfn::GSpec;
use crate::error::{Error, Result};
use crate::itoverify::{ItoSettings, PathwiseSettings};
use crate::kernels::{KernelSpec, ProbeConfig};
use crate::levy::{GridSpec, JumpLaw, JumpSpec, LevyModel};
use crate::quadrature::QuadratureSpec;
use crate::stransform::battery_element;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pathwise,
    Expectation,
    Stransform,
}

/// Options of the Ito verification shared by the Monte Carlo modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoOptions {
    pub stride: usize,
    pub s_nodes: usize,
    pub x_nodes: usize,
    pub pilot_paths: usize,
    pub max_doublings: usize,
    pub oracle_nodes: usize,
    pub weight_variance_cap: f64,
}

impl Default for ItoOptions {
    fn default() -> Self {
        let s = ItoSettings::default();
        Self {
            stride: s.stride,
            s_nodes: s.s_nodes,
            x_nodes: s.x_nodes,
            pilot_paths: s.pilot_paths,
            max_doublings: s.max_doublings,
            oracle_nodes: s.oracle_nodes,
            weight_variance_cap: s.weight_variance_cap,
        }
    }
}

/// Pathwise refinement study (increment kernel only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathwiseOptions {
    /// Cells of the coarsest level.
    pub n_cells: usize,
    pub refinements: usize,
    pub n_paths: usize,
    pub tolerance: f64,
    pub min_reduction: f64,
}

impl Default for PathwiseOptions {
    fn default() -> Self {
        let p = PathwiseSettings::default();
        Self {
            n_cells: p.n_cells,
            refinements: p.refinements,
            n_paths: p.n_paths,
            tolerance: p.tolerance,
            min_reduction: p.min_reduction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    /// Paths written as CSV; the summary uses `n_paths`.
    pub n_out: usize,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { n_out: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharfnOptions {
    /// Times of the lattice; empty means the horizon.
    pub ts: Vec<f64>,
    pub u_min: f64,
    pub u_max: f64,
    pub n_u: usize,
    /// Test functional of `Q_g` (`zero` for `P`).
    pub g: String,
    /// Paths of the empirical comparison (0 disables it).
    pub mc_paths: usize,
}

impl Default for CharfnOptions {
    fn default() -> Self {
        Self { ts: Vec::new(), u_min: -5.0, u_max: 5.0, n_u: 21, g: "zero".into(), mc_paths: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct STransformOptions {
    /// Times at which `S(M(t))(g)` is estimated; empty means the horizon.
    pub ts: Vec<f64>,
}

impl Default for STransformOptions {
    fn default() -> Self {
        Self { ts: vec![0.25, 0.5, 0.75, 1.0] }
    }
}

/// Everything a run needs besides seed, worker count and output location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub kernel: KernelSpec,
    pub horizon: f64,
    /// Truncation point of the past for two-sided kernels.
    pub past: f64,
    pub n_cells: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub modes: Vec<Mode>,
    /// Names of built-in test functionals.
    pub g_battery: Vec<String>,
    #[serde(rename = "G_battery")]
    pub gt_battery: Vec<GSpec>,
    pub model: LevyModel,
    pub quad: QuadratureSpec,
    pub ito: ItoOptions,
    pub pathwise: PathwiseOptions,
    pub simulate: SimulateOptions,
    pub charfn: CharfnOptions,
    pub s_transform: STransformOptions,
    pub probe: ProbeConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Fractional { d: 0.25 },
            horizon: 1.0,
            past: 1e4,
            n_cells: 512,
            n_paths: 2000,
            seed: 1,
            modes: vec![Mode::Expectation, Mode::Stransform],
            g_battery: ["early", "middle", "late", "jump_only"].map(String::from).to_vec(),
            gt_battery: vec![GSpec::BUMP],
            model: LevyModel::new(1.0, JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0))).expect("valid default model"),
            quad: QuadratureSpec::with_tolerances(1e-10, 1e-8),
            ito: ItoOptions::default(),
            pathwise: PathwiseOptions::default(),
            simulate: SimulateOptions::default(),
            charfn: CharfnOptions::default(),
            s_transform: STransformOptions::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The defaults, overlaid by `path` and then by `key=value` overrides.
    pub fn load(path: Option<&std::path::Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut table = Scenario::default().to_table()?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let file: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            merge(&mut table, file);
        }
        for (key, value) in overrides {
            set_path(&mut table, key, value.clone())?;
        }
        let s: Scenario = Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    fn to_table(&self) -> Result<Table> {
        self.to_toml()?.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        if !(self.past >= 0.0) || self.n_cells == 0 || self.n_paths < 2 {
            return bad("past must be >= 0, n_cells > 0 and n_paths >= 2".into());
        }
        for g in &self.g_battery {
            battery_element(g)?;
        }
        battery_element(&self.charfn.g)?;
        if self.modes.contains(&Mode::Pathwise) && self.kernel != KernelSpec::Indicator {
            return bad("pathwise mode needs the indicator kernel".into());
        }
        if self.modes.contains(&Mode::Stransform) && self.g_battery.is_empty() {
            return bad("stransform mode needs a non-empty g_battery".into());
        }
        self.quad.validate()
    }

    /// First 12 hex digits of the SHA-256 of the canonical TOML, seed excluded.
    pub fn config_hash(&self) -> Result<String> {
        let canonical = Scenario { seed: 0, ..self.clone() }.to_toml()?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.horizon, self.past, self.n_cells)
    }

    pub fn ito_settings(&self) -> ItoSettings {
        let o = &self.ito;
        ItoSettings {
            n_paths: self.n_paths,
            seed: self.seed,
            grid: self.grid(),
            stride: o.stride,
            s_nodes: o.s_nodes,
            x_nodes: o.x_nodes,
            pilot_paths: o.pilot_paths,
            max_doublings: o.max_doublings,
            oracle_nodes: o.oracle_nodes,
            weight_variance_cap: o.weight_variance_cap,
            quad: self.quad.clone(),
        }
    }

    pub fn pathwise_settings(&self) -> PathwiseSettings {
        let p = &self.pathwise;
        PathwiseSettings {
            horizon: self.horizon,
            n_cells: p.n_cells,
            refinements: p.refinements,
            n_paths: p.n_paths,
            seed: self.seed,
            tolerance: p.tolerance,
            min_reduction: p.min_reduction,
        }
    }
}

/// Overlays `over` onto `base` table by table. A jump measure is replaced
/// as a whole, since its keys depend on its type.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if k != "jumps" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets `a.b.c = value`, creating intermediate tables.
pub fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads the right side of `key=value` as a TOML value, falling back to a
/// bare string.
pub fn parse_value(text: &str) -> Value {
    let text = text.trim();
    match format!("v = {text}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key just inserted"),
        Err(_) => Value::String(text.to_string()),
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), parse_value(v)))
}

/// Jump measures written `none`, `cp:rate=2,atom=2`, `cp:rate=2,uniform=-1:1`
/// or `ts:alpha=0.5,lambda=1,c=1`.
pub fn parse_nu(s: &str) -> Result<JumpSpec> {
    let s = s.trim();
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let mut kv = Vec::new();
    for part in args.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value in `{s}`")))?;
        kv.push((k.trim(), v.trim()));
    }
    let num = |key: &str| -> Result<f64> {
        let v = kv.iter().find(|(k, _)| *k == key).ok_or_else(|| Error::Config(format!("`{s}` needs {key}=")))?.1;
        v.parse().map_err(|_| Error::Config(format!("`{v}` is not a number")))
    };
    let spec = match name {
        "none" => JumpSpec::None,
        "cp" => {
            let rate = num("rate")?;
            let law = if kv.iter().any(|(k, _)| *k == "atom") {
                JumpLaw::atom(num("atom")?)
            } else if let Some((_, v)) = kv.iter().find(|(k, _)| *k == "uniform") {
                let (a, b) = v.split_once(':').ok_or_else(|| Error::Config(format!("uniform needs low:high in `{s}`")))?;
                let p = |x: &str| x.trim().parse::<f64>().map_err(|_| Error::Config(format!("`{x}` is not a number")));
                JumpLaw::Uniform { low: p(a)?, high: p(b)? }
            } else {
                return Err(Error::Config(format!("`{s}` needs atom= or uniform=")));
            };
            JumpSpec::compound_poisson(rate, law)
        }
        "ts" => JumpSpec::tempered_stable(num("alpha")?, num("lambda")?, num("c")?),
        _ => return Err(Error::Config(format!("unknown jump measure `{s}`"))),
    };
    spec.validate()?;
    Ok(spec)
}

/// `JumpSpec` as a TOML value for overrides.
pub fn nu_value(spec: &JumpSpec) -> Result<Value> {
    Value::try_from(spec).map_err(|e| Error::Config(e.to_string()))
}
