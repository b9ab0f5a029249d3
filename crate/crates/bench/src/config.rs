use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use lba_core::assembly::SchurOptions;
use lba_core::select::DEFAULT_EPSILON;
use lba_core::sim::SceneConfig;
use lba_core::solver::SolveConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Lazier greedy on the camera-only matrix.
    Gg,
    Greedy,
    Covis,
    Random,
    Full,
    /// Exhaustive enumeration; only feasible for tiny scenes.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Gg,
        Method::Greedy,
        Method::Covis,
        Method::Random,
        Method::Full,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gg => "gg",
            Method::Greedy => "greedy",
            Method::Covis => "covis",
            Method::Random => "random",
            Method::Full => "full",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 50 cameras, 2000 points, 20 repeats.
    Ci,
    /// 50 cameras, 6000 points, 100 repeats.
    Paper,
}

impl Preset {
    pub fn scene(self) -> SceneConfig {
        match self {
            Preset::Ci => SceneConfig::ci(),
            Preset::Paper => SceneConfig::full_scale(),
        }
    }

    pub fn repeats(self) -> usize {
        match self {
            Preset::Ci => 20,
            Preset::Paper => 100,
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ci" => Ok(Preset::Ci),
            "paper" => Ok(Preset::Paper),
            _ => Err(format!("unknown preset {s:?} (expected ci or paper)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub scene: SceneConfig,
    /// Problem file (.bal, .g2o or .json) swept instead of synthetic scenes.
    pub input: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub solver: SolveConfig,
    pub schur: SchurOptions,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Record wall-clock times. Disable for bit-reproducible CSVs.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self::preset(Preset::Ci)
    }
}

impl BenchConfig {
    pub fn preset(p: Preset) -> Self {
        Self {
            scene: p.scene(),
            input: None,
            methods: vec![Method::Gg, Method::Covis, Method::Random, Method::Full],
            fractions: (1..=9).map(|i| i as f64 / 10.0).collect(),
            repeats: p.repeats(),
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            solver: SolveConfig::default(),
            schur: SchurOptions::default(),
            workers: 0,
            timing: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.repeats == 0 {
            return Err("repeats must be at least 1".into());
        }
        if self.methods.is_empty() {
            return Err("no methods given".into());
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err("fractions must lie in (0, 1]".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err("epsilon must lie in (0, 1)".into());
        }
        if self.solver.max_iterations == 0 {
            return Err("solver.max_iterations must be at least 1".into());
        }
        self.scene.validate().map_err(|e| e.to_string())
    }
}

/// Comma-separated values parsed with `FromStr`.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}
