//! Experiment config: loading, `--set` overrides and validation.
//!
//! The file is parsed into a generic value first so that syntax errors keep
//! their line numbers, then overrides are spliced in, then the typed
//! structure is deserialised with the failing key path attached. Semantic
//! checks report the line of the offending key when it appears in the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use asis_core::homo::CostFunction;
use asis_core::hetero::CutCost;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSection,
    #[serde(default)]
    pub params: Option<ParamsSection>,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
    #[serde(default)]
    pub design: Option<DesignSection>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Exactly one of `path` and `generate`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub path: Option<PathBuf>,
    pub generate: Option<GenerateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GraphKind {
    ErdosRenyi,
    PreferentialAttachment,
    Cycle,
    Path,
    Complete,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub kind: GraphKind,
    pub n: usize,
    /// Edge probability, Erdős-Rényi only.
    pub p: Option<f64>,
    /// Links per new node, preferential attachment only.
    pub attach: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// A rate given as a scalar, one value per node (or edge), or derived.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum RateSpec {
    Scalar(f64),
    PerItem(Vec<f64>),
    /// `beta = x * delta / rho`, for homogeneous `delta` only.
    TimesDeltaOverRho { times_delta_over_rho: f64 },
    /// `phi` taken from a `hetero_design.json` written by `design-hetero`.
    FromDesign { from_design: PathBuf },
    /// `psi = "beta"` copies the infection rate onto every edge.
    Alias(String),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub beta: RateSpec,
    pub delta: RateSpec,
    /// Defaults to zero.
    #[serde(default)]
    pub phi: Option<RateSpec>,
    /// Per-edge values follow the order of the graph's edge list. Not needed
    /// by `design-homo`, which chooses it.
    #[serde(default)]
    pub psi: Option<RateSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default)]
    pub phi_lo: f64,
    pub phi_hi: f64,
    #[serde(default)]
    pub psi_lo: f64,
    pub psi_hi: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub alpha: f64,
    /// Shift of the heterogeneous program; defaults to `2 * phi_hi`.
    pub r: Option<f64>,
    /// Homogeneous cutting cost; defaults to the normalised reciprocal cost.
    pub cut_cost: Option<CostFunction>,
    /// Homogeneous rewiring cost; defaults to zero.
    pub rewire_cost: Option<CostFunction>,
    /// Heterogeneous cost posynomial; defaults to the normalised reciprocal cost.
    pub posynomial: Option<CutCost>,
    pub gap_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: f64,
    /// Explicit sample times; otherwise `grid_points` evenly spaced on `[0, horizon]`.
    pub grid: Option<Vec<f64>>,
    pub grid_points: Option<usize>,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Node labels infected at time 0; all nodes when absent.
    pub initial_infected: Option<Vec<i64>>,
    #[serde(default)]
    pub stop_when_disease_free: bool,
    #[serde(default)]
    pub with_pairs: bool,
    #[serde(default)]
    pub execution: ExecutionMode,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// A config problem located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub file: PathBuf,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub msg: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": `{key}`")?;
        }
        write!(f, ": {}", self.msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Toml,
    Json,
}

/// Parsed config together with its source, for locating keys later.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    text: String,
    format: Format,
    overridden: Vec<String>,
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigIssue> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigIssue {
            file: path.to_path_buf(),
            line: None,
            key: None,
            msg: format!("cannot read config: {e}"),
        })?;
        Self::from_text(path, text, overrides)
    }

    pub fn from_text(path: &Path, text: String, overrides: &[String]) -> Result<Self, ConfigIssue> {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        };
        let issue = |line: Option<usize>, key: Option<String>, msg: String| ConfigIssue {
            file: path.to_path_buf(),
            line,
            key,
            msg,
        };
        let mut value = match format {
            Format::Json => serde_json::from_str::<Value>(&text)
                .map_err(|e| issue(Some(e.line()), None, e.to_string()))?,
            Format::Toml => {
                let table: toml::Table = toml::from_str(&text).map_err(|e| {
                    let line = e.span().map(|s| line_of_offset(&text, s.start));
                    issue(line, None, e.message().to_string())
                })?;
                serde_json::to_value(table).map_err(|e| issue(None, None, e.to_string()))?
            }
        };
        let mut overridden = Vec::new();
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| issue(None, None, format!("--set expects key=value, got `{o}`")))?;
            let key = key.trim();
            set_path(&mut value, key, parse_override(raw.trim()))
                .map_err(|msg| issue(None, Some(key.to_string()), msg))?;
            overridden.push(key.to_string());
        }
        let mut loaded = Self {
            config: ExperimentConfig {
                graph: GraphSection {
                    path: None,
                    generate: None,
                },
                params: None,
                bounds: None,
                design: None,
                simulation: None,
                output: OutputSection::default(),
            },
            path: path.to_path_buf(),
            text,
            format,
            overridden,
        };
        loaded.config = serde_path_to_error::deserialize(value).map_err(|e| {
            let key = e.path().to_string();
            let key = (key != ".").then_some(key);
            loaded.issue(key.as_deref(), e.inner().to_string())
        })?;
        Ok(loaded)
    }

    /// An issue about `key` (dotted path), located in the text.
    pub fn issue(&self, key: Option<&str>, msg: impl Into<String>) -> ConfigIssue {
        let mut msg = msg.into();
        let line = key.and_then(|k| {
            if self.overridden.iter().any(|o| k == o || k.starts_with(&format!("{o}."))) {
                msg.push_str(" (set on the command line)");
                return None;
            }
            match self.format {
                Format::Toml => locate_toml(&self.text, k),
                Format::Json => locate_json(&self.text, k),
            }
        });
        ConfigIssue {
            file: self.path.clone(),
            line,
            key: key.map(str::to_string),
            msg,
        }
    }

    /// Resolves a path in the config relative to the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        self.path.parent().unwrap_or(Path::new(".")).join(p)
    }

    /// Structural checks that need no graph.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let c = &self.config;
        let mut out = Vec::new();
        let mut bad = |key: &str, msg: String| out.push(self.issue(Some(key), msg));
        match (&c.graph.path, &c.graph.generate) {
            (Some(_), Some(_)) => bad("graph", "give either `path` or `generate`, not both".into()),
            (None, None) => bad("graph", "one of `path` or `generate` is required".into()),
            _ => {}
        }
        if let Some(gen) = &c.graph.generate {
            if gen.n == 0 {
                bad("graph.generate.n", "must be at least 1".into());
            }
            match gen.kind {
                GraphKind::ErdosRenyi => match gen.p {
                    Some(p) if (0.0..=1.0).contains(&p) => {}
                    Some(p) => bad("graph.generate.p", format!("must lie in [0, 1], got {p}")),
                    None => bad("graph.generate", "erdos_renyi needs `p`".into()),
                },
                GraphKind::PreferentialAttachment => match gen.attach {
                    Some(a) if a >= 1 => {}
                    Some(_) => bad("graph.generate.attach", "must be at least 1".into()),
                    None => bad("graph.generate", "preferential_attachment needs `attach`".into()),
                },
                _ => {}
            }
        }
        if let Some(b) = &c.bounds {
            if !(b.phi_lo >= 0.0 && b.phi_lo.is_finite()) {
                bad("bounds.phi_lo", format!("must be finite and nonnegative, got {}", b.phi_lo));
            }
            if !(b.phi_hi > b.phi_lo && b.phi_hi.is_finite()) {
                bad("bounds.phi_hi", format!("must be finite and above phi_lo, got {}", b.phi_hi));
            }
            if !(b.psi_lo >= 0.0 && b.psi_lo.is_finite()) {
                bad("bounds.psi_lo", format!("must be finite and nonnegative, got {}", b.psi_lo));
            }
            if let Some(h) = b.psi_hi {
                if !(h >= b.psi_lo && h.is_finite()) {
                    bad("bounds.psi_hi", format!("must be finite and at least psi_lo, got {h}"));
                }
            }
        }
        if let Some(d) = &c.design {
            if !(d.alpha > 0.0 && d.alpha.is_finite()) {
                bad("design.alpha", format!("must be positive, got {}", d.alpha));
            }
            if let (Some(r), Some(b)) = (d.r, &c.bounds) {
                if !(r > b.phi_hi) {
                    bad("design.r", format!("must exceed bounds.phi_hi = {}, got {r}", b.phi_hi));
                }
            }
            if let Some(t) = d.gap_tol {
                if !(t > 0.0) {
                    bad("design.gap_tol", format!("must be positive, got {t}"));
                }
            }
        }
        if let Some(s) = &c.simulation {
            if s.runs == 0 {
                bad("simulation.runs", "must be at least 1".into());
            }
            if !(s.horizon > 0.0 && s.horizon.is_finite()) {
                bad("simulation.horizon", format!("must be positive, got {}", s.horizon));
            }
            if let Some(grid) = &s.grid {
                if grid.is_empty() {
                    bad("simulation.grid", "must not be empty".into());
                } else if grid.windows(2).any(|w| w[1] < w[0])
                    || grid.iter().any(|&t| !(t >= 0.0 && t <= s.horizon))
                {
                    bad("simulation.grid", "must be nondecreasing within [0, horizon]".into());
                }
            }
            if s.grid.is_some() && s.grid_points.is_some() {
                bad("simulation", "give either `grid` or `grid_points`, not both".into());
            }
            if s.grid_points == Some(0) {
                bad("simulation.grid_points", "must be at least 1".into());
            }
        }
        out
    }

    /// Names of the sections present, for the dry-run summary.
    pub fn sections(&self) -> Vec<&'static str> {
        let c = &self.config;
        let mut s = vec!["graph"];
        for (name, present) in [
            ("params", c.params.is_some()),
            ("bounds", c.bounds.is_some()),
            ("design", c.design.is_some()),
            ("simulation", c.simulation.is_some()),
        ] {
            if present {
                s.push(name);
            }
        }
        s
    }
}

impl SimulationSection {
    pub fn sample_times(&self) -> Vec<f64> {
        if let Some(g) = &self.grid {
            return g.clone();
        }
        let k = self.grid_points.unwrap_or(20).max(1);
        if k == 1 {
            return vec![self.horizon];
        }
        (0..k).map(|i| self.horizon * i as f64 / (k - 1) as f64).collect()
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// `--set` values are TOML literals; anything that does not parse is a string.
fn parse_override(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, key: &str, v: Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty key segment".into());
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("`{p}` is inside a non-table value"))?;
        cur = obj
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| "parent of the key is not a table".to_string())?;
    obj.insert(parts[parts.len() - 1].to_string(), v);
    Ok(())
}

/// Drops `[k]` index suffixes that `serde_path_to_error` appends.
fn key_parts(key: &str) -> Vec<String> {
    key.split('.')
        .map(|p| p.split('[').next().unwrap_or(p).to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

fn locate_toml(text: &str, key: &str) -> Option<usize> {
    let parts = key_parts(key);
    let mut section: Vec<String> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = h.split('.').map(|s| s.trim().to_string()).collect();
            if section == parts {
                return Some(no + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let mut full = section.clone();
        full.extend(lhs.trim().split('.').map(|s| s.trim().trim_matches('"').to_string()));
        if full == parts {
            return Some(no + 1);
        }
        // Longest matching prefix, e.g. an inline table holding the key.
        let common = full.iter().zip(&parts).take_while(|(a, b)| a == b).count();
        if common == full.len() && common > best.map_or(0, |b| b.0) {
            best = Some((common, no + 1));
        }
    }
    best.map(|b| b.1)
}

fn locate_json(text: &str, key: &str) -> Option<usize> {
    let mut pos = 0;
    let mut found = None;
    for p in key_parts(key) {
        let needle = format!("\"{p}\"");
        match text[pos..].find(&needle) {
            Some(off) => {
                pos += off + needle.len();
                found = Some(line_of_offset(text, pos));
            }
            None => break,
        }
    }
    found
}

/// Labels of a `hetero_design.json` rate map.
pub fn read_design_phi(path: &Path) -> Result<BTreeMap<String, f64>, String> {
    #[derive(Deserialize)]
    struct Doc {
        phi: BTreeMap<String, f64>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str::<Doc>(&text)
        .map(|d| d.phi)
        .map_err(|e| format!("{}: {e}", path.display()))
}
