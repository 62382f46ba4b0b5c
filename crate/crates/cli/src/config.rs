//! Experiment configuration: a single TOML file with strict schema
//! validation (unknown keys rejected) plus dotted-path overrides.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub background: BackgroundConfig,
    pub initial: InitialConfig,
    pub flow: FlowConfig,
    pub deturck: DeturckConfig,
    pub scalar_test: ScalarTestConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            grid: GridConfig::default(),
            background: BackgroundConfig::default(),
            initial: InitialConfig::default(),
            flow: FlowConfig::default(),
            deturck: DeturckConfig::default(),
            scalar_test: ScalarTestConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: usize,
    pub res: usize,
    pub period: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 2, res: 128, period: std::f64::consts::TAU }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundConfig {
    /// "flat" or "perturbed": h = (1 + amplitude s(x)) delta with s a
    /// band-limited product of low modes
    pub kind: String,
    pub amplitude: f64,
    pub modes: usize,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self { kind: "flat".into(), amplitude: 0.05, modes: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    /// "flat" | "rough" | "pullback_flat" | "file"
    pub kind: String,
    pub alpha: f64,
    /// pinning amplitude eps_pin; must not exceed flow.eps0
    pub amplitude: f64,
    /// 0 means the grid Nyquist
    pub mode_cutoff: usize,
    /// "all" | "diagonal"
    pub pattern: String,
    pub path: String,
    /// spectral Gaussian mollifier width applied to the generated data
    pub mollify_scale: f64,
    /// pullback_flat pinning target; 0 applies the min(sigma^3, eps0) rule
    pub pinning: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: "rough".into(),
            alpha: 2.5,
            amplitude: 0.1,
            mode_cutoff: 0,
            pattern: "all".into(),
            path: String::new(),
            mollify_scale: 0.0,
            pinning: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// default 0.1 L^2, encoded as a negative sentinel
    pub t_final: f64,
    pub scheme: String,
    pub c_cfl: f64,
    pub eps0: f64,
    /// equispaced snapshot count over the resolved window
    pub snapshots: usize,
    /// explicit snapshot times; overrides the count when nonempty
    pub snapshot_times: Vec<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_final: -1.0,
            scheme: "rk4".into(),
            c_cfl: 0.2,
            eps0: 0.1,
            snapshots: 12,
            snapshot_times: vec![],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DeturckConfig {
    /// anchor time with Phi(S) = Id; negative selects the final snapshot
    pub s_time: f64,
    /// earliest related-flow time; negative selects the resolved window start
    pub t_min: f64,
    pub substeps: usize,
}

impl Default for DeturckConfig {
    fn default() -> Self {
        Self { s_time: -1.0, t_min: -1.0, substeps: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScalarTestConfig {
    pub enabled: bool,
    pub b: f64,
    /// "sigma_cubed" pins eps1 = min(sigma^3, eps0); "fixed" uses eps1
    pub eps1_rule: String,
    pub eps1: f64,
    pub sigma: f64,
    /// number of random nonnegative test functions (one cutoff bump is added)
    pub phi_family: usize,
    /// final time of the conjugate run; negative selects the last snapshot
    pub y_time: f64,
    /// when true the distributional lower bound R_{g0} + b >= 0 is asserted
    /// (exit-code gating); otherwise it is only measured and reported
    pub expect_lower_bound: bool,
}

impl Default for ScalarTestConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            b: 0.0,
            eps1_rule: "sigma_cubed".into(),
            eps1: 0.0,
            sigma: 0.1,
            phi_family: 6,
            y_time: -1.0,
            expect_lower_bound: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub enabled: bool,
    pub sigmas: Vec<f64>,
    pub p_list: Vec<f64>,
    /// ball radius for localized energies; 0 means the full torus
    pub ball_radius: f64,
    pub outer_radius: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sigmas: vec![0.0, 0.1, 0.2],
            p_list: vec![2.0, 4.0],
            ball_radius: 0.0,
            outer_radius: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), formats: vec!["json".into(), "csv".into(), "bin".into()] }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("config schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).context("config parse")?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let cfg: ExperimentConfig =
            value.try_into().context("config schema (after overrides)")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.grid.dim) {
            bail!("grid.dim must be 1..=3");
        }
        if self.grid.res < 8 || !self.grid.res.is_power_of_two() {
            bail!("grid.res must be a power of two >= 8");
        }
        if !(self.grid.period > 0.0) {
            bail!("grid.period must be positive");
        }
        match self.background.kind.as_str() {
            "flat" | "perturbed" => {}
            k => bail!("background.kind '{k}' (expected flat|perturbed)"),
        }
        match self.initial.kind.as_str() {
            "flat" | "rough" | "pullback_flat" | "file" => {}
            k => bail!("initial.kind '{k}' (expected flat|rough|pullback_flat|file)"),
        }
        match self.initial.pattern.as_str() {
            "all" | "diagonal" => {}
            k => bail!("initial.pattern '{k}' (expected all|diagonal)"),
        }
        if self.initial.kind == "rough" && self.initial.amplitude > self.flow.eps0 {
            bail!(
                "initial.amplitude {} exceeds flow.eps0 {}",
                self.initial.amplitude,
                self.flow.eps0
            );
        }
        match self.flow.scheme.as_str() {
            "euler" | "rk2" | "rk4" => {}
            k => bail!("flow.scheme '{k}' (expected euler|rk2|rk4)"),
        }
        if !(self.flow.c_cfl > 0.0 && self.flow.c_cfl <= 1.0) {
            bail!("flow.c_cfl must lie in (0, 1]");
        }
        match self.scalar_test.eps1_rule.as_str() {
            "sigma_cubed" | "fixed" => {}
            k => bail!("scalar_test.eps1_rule '{k}' (expected sigma_cubed|fixed)"),
        }
        for &s in &self.verify.sigmas {
            if !(0.0..=0.25).contains(&s) {
                bail!("verify.sigmas entries must lie in [0, 1/4], got {s}");
            }
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "json" | "csv" | "bin") {
                bail!("output.formats entry '{f}' (expected json|csv|bin)");
            }
        }
        Ok(())
    }

    pub fn scheme(&self) -> rdtf_core::flow::Scheme {
        match self.flow.scheme.as_str() {
            "euler" => rdtf_core::flow::Scheme::Euler,
            "rk2" => rdtf_core::flow::Scheme::Rk2,
            _ => rdtf_core::flow::Scheme::Rk4,
        }
    }

    /// eps1 for the scalar-curvature test: min(sigma^3, eps0) by default.
    pub fn eps1(&self) -> f64 {
        match self.scalar_test.eps1_rule.as_str() {
            "fixed" => self.scalar_test.eps1,
            _ => self.scalar_test.sigma.powi(3).min(self.flow.eps0),
        }
    }

    pub fn t_final(&self) -> f64 {
        if self.flow.t_final > 0.0 {
            self.flow.t_final
        } else {
            0.1 * self.grid.period * self.grid.period
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if raw.starts_with('[') {
        if let Ok(v) = toml::from_str::<toml::Value>(&format!("x = {raw}")) {
            if let Some(t) = v.get("x") {
                return t.clone();
            }
        }
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(value: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .with_context(|| format!("override '{spec}' must be KEY=VALUE"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut cur = value;
    for (i, k) in keys.iter().enumerate() {
        if i + 1 == keys.len() {
            let table = cur
                .as_table_mut()
                .with_context(|| format!("override path '{path}' does not address a table"))?;
            table.insert(k.to_string(), parse_value(raw.trim()));
            return Ok(());
        }
        let table = cur
            .as_table_mut()
            .with_context(|| format!("override path '{path}' does not address a table"))?;
        cur = table
            .entry(k.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}
