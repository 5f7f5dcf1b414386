//! Experiment configuration: a single TOML file with sections for the
//! graph, the objectives, the dynamics, and the ensemble, plus per-kind
//! experiment settings. Scalar fields can be overridden from the command
//! line. A resolved configuration serializes back to TOML verbatim, which
//! is how run manifests support exact replay.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Intensity, NoiseModel, SimConfig, StepSchedule};
use crate::graph::{default_six_agent_schedule, GraphSchedule, Segment, WeightedDigraph};
use crate::linalg::Matrix;
use crate::objective::{
    default_six_agent_objectives, indexed_quadratic, ObjectiveSet, QuadraticObjective, Region,
};
use crate::rng::fnv1a64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: &str, message: impl ToString) -> Self {
        ConfigError::Invalid { field: field.to_string(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Sweep,
    CertifyBounds,
    ConsensusOnly,
    Isometry,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::CertifyBounds => "certify-bounds",
            ExperimentKind::ConsensusOnly => "consensus-only",
            ExperimentKind::Isometry => "isometry",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "simulate" => Ok(ExperimentKind::Simulate),
            "sweep" => Ok(ExperimentKind::Sweep),
            "certify-bounds" => Ok(ExperimentKind::CertifyBounds),
            "consensus-only" => Ok(ExperimentKind::ConsensusOnly),
            "isometry" => Ok(ExperimentKind::Isometry),
            other => Err(ConfigError::invalid(
                "experiment",
                format!("unknown experiment kind `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSection {
    pub from: usize,
    pub to: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSection {
    pub duration: f64,
    pub edges: Vec<EdgeSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    /// `"six-agent-ring"`: four circulant subgraphs on six agents, 0.01 s
    /// holds. Mutually exclusive with explicit segments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(default = "default_true")]
    pub periodic: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentSection>,
    /// Declares the schedule balanced; validated at load time.
    #[serde(default)]
    pub balanced: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternSection {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticSection {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectivesSection {
    /// `"six-agent-quadratics"`: the six indexed demo quadratics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Indexed scalar pattern: agent i (1-based) gets
    /// `a_i x1^2 - b_i x1 + (i/6) x2^2 - ((i+1)/2) x2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quadratic: Vec<QuadraticSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSection {
    /// `"zero"`, `"sin-cos"`, or `"constant"` (with `values`).
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { kind: "zero".into(), values: Vec::new(), scale: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsSection {
    pub beta: f64,
    pub a: f64,
    pub h: f64,
    pub horizon: f64,
    #[serde(default)]
    pub noise: NoiseSection,
    pub x0: Vec<Vec<f64>>,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSection {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "one_usize")]
    pub workers: usize,
    /// Also write the trajectory of path 0.
    #[serde(default)]
    pub export_trajectory: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection { runs: default_runs(), workers: 1, export_trajectory: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default)]
    pub a_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Fit window; defaults to the last 80% of the sweep horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { a_values: vec![0.6, 0.75, 0.95], horizon: None, window: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifySection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_tc")]
    pub tc: f64,
    #[serde(default = "default_decay_horizon")]
    pub decay_horizon: f64,
    #[serde(default = "default_decay_grid")]
    pub decay_grid: usize,
    #[serde(default = "default_region_lo")]
    pub region_lo: Vec<f64>,
    #[serde(default = "default_region_hi")]
    pub region_hi: Vec<f64>,
    #[serde(default = "default_region_samples")]
    pub region_samples: usize,
    #[serde(default = "default_integral_a")]
    pub integral_a: Vec<f64>,
    #[serde(default = "default_integral_lambda")]
    pub integral_lambda: Vec<f64>,
    /// Consensus-only convergence tolerance.
    #[serde(default = "default_consensus_tol")]
    pub consensus_tolerance: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            delta: default_delta(),
            tc: default_tc(),
            decay_horizon: default_decay_horizon(),
            decay_grid: default_decay_grid(),
            region_lo: default_region_lo(),
            region_hi: default_region_hi(),
            region_samples: default_region_samples(),
            integral_a: default_integral_a(),
            integral_lambda: default_integral_lambda(),
            consensus_tolerance: default_consensus_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsometrySection {
    #[serde(default = "default_iso_horizon")]
    pub horizon: f64,
    #[serde(default = "default_iso_h")]
    pub h: f64,
    #[serde(default = "default_iso_runs")]
    pub runs: usize,
}

impl Default for IsometrySection {
    fn default() -> Self {
        IsometrySection { horizon: default_iso_horizon(), h: default_iso_h(), runs: default_iso_runs() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub config_hash: String,
    pub package_version: String,
}

/// The full experiment description, as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment")]
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub graph: GraphSection,
    pub objectives: ObjectivesSection,
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub isometry: IsometrySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestMeta>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_stride() -> usize {
    50
}
fn default_runs() -> usize {
    200
}
fn default_experiment() -> ExperimentKind {
    ExperimentKind::Simulate
}
fn default_seed() -> u64 {
    42
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_delta() -> f64 {
    0.01
}
fn default_tc() -> f64 {
    0.04
}
fn default_decay_horizon() -> f64 {
    24.0
}
fn default_decay_grid() -> usize {
    50
}
fn default_region_lo() -> Vec<f64> {
    vec![-6.0, -6.0]
}
fn default_region_hi() -> Vec<f64> {
    vec![6.0, 6.0]
}
fn default_region_samples() -> usize {
    400
}
fn default_integral_a() -> Vec<f64> {
    vec![0.6, 1.0, 2.0]
}
fn default_integral_lambda() -> Vec<f64> {
    vec![0.3, 0.5, 0.9]
}
fn default_consensus_tol() -> f64 {
    1e-6
}
fn default_iso_horizon() -> f64 {
    5.0
}
fn default_iso_h() -> f64 {
    1e-3
}
fn default_iso_runs() -> usize {
    10_000
}

/// Command-line overrides for scalar config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub workers: Option<usize>,
    pub h: Option<f64>,
    pub horizon: Option<f64>,
    pub a: Option<f64>,
    pub beta: Option<f64>,
    pub out_dir: Option<String>,
    pub noise_scale: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn apply_overrides(&mut self, ov: &Overrides) {
        if let Some(e) = ov.experiment {
            self.experiment = e;
        }
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        if let Some(r) = ov.runs {
            self.ensemble.runs = r;
        }
        if let Some(w) = ov.workers {
            self.ensemble.workers = w;
        }
        if let Some(h) = ov.h {
            self.dynamics.h = h;
        }
        if let Some(t) = ov.horizon {
            self.dynamics.horizon = t;
        }
        if let Some(a) = ov.a {
            self.dynamics.a = a;
        }
        if let Some(b) = ov.beta {
            self.dynamics.beta = b;
        }
        if let Some(o) = &ov.out_dir {
            self.out_dir = o.clone();
        }
        if let Some(s) = ov.noise_scale {
            self.dynamics.noise.scale = s;
        }
        // overrides invalidate a previously recorded manifest hash
        self.manifest = None;
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Fingerprint of the resolved configuration (manifest metadata is
    /// excluded so replaying a manifest reproduces its own hash).
    pub fn config_hash(&self) -> Result<String, ConfigError> {
        let mut without_meta = self.clone();
        without_meta.manifest = None;
        let text = without_meta.to_toml_string()?;
        Ok(format!("{:016x}", fnv1a64(text.as_bytes())))
    }

    pub fn build_schedule(&self) -> Result<GraphSchedule<f64>, ConfigError> {
        let g = &self.graph;
        let schedule = match g.preset.as_deref() {
            Some("six-agent-ring") => {
                if !g.segments.is_empty() {
                    return Err(ConfigError::invalid(
                        "graph.segments",
                        "a preset and explicit segments are mutually exclusive",
                    ));
                }
                default_six_agent_schedule::<f64>()
            }
            Some(other) => {
                return Err(ConfigError::invalid(
                    "graph.preset",
                    format!("unknown preset `{other}`"),
                ))
            }
            None => {
                if g.segments.is_empty() {
                    return Err(ConfigError::invalid(
                        "graph.segments",
                        "a graph needs a preset or at least one segment",
                    ));
                }
                let n = g.agents.ok_or_else(|| {
                    ConfigError::invalid("graph.agents", "agent count required with explicit segments")
                })?;
                let mut segments = Vec::with_capacity(g.segments.len());
                for (i, seg) in g.segments.iter().enumerate() {
                    let mut edges = Vec::with_capacity(seg.edges.len());
                    for e in &seg.edges {
                        if e.from == 0 || e.to == 0 || e.from > n || e.to > n {
                            return Err(ConfigError::invalid(
                                &format!("graph.segments[{i}].edges"),
                                format!("agent ids are 1-based in 1..={n}, got ({}, {})", e.from, e.to),
                            ));
                        }
                        edges.push((e.from - 1, e.to - 1, e.weight));
                    }
                    let graph = WeightedDigraph::from_edges(n, &edges).map_err(|err| {
                        ConfigError::invalid(&format!("graph.segments[{i}]"), err)
                    })?;
                    segments.push(Segment { duration: seg.duration, graph });
                }
                GraphSchedule::new(segments, g.periodic)
                    .map_err(|err| ConfigError::invalid("graph.segments", err))?
            }
        };
        if g.balanced && !schedule.is_balanced(1e-12) {
            return Err(ConfigError::invalid(
                "graph.balanced",
                "schedule declared balanced but a segment has unequal in/out weights",
            ));
        }
        Ok(schedule)
    }

    pub fn build_objectives(&self) -> Result<ObjectiveSet<f64>, ConfigError> {
        let o = &self.objectives;
        match (&o.preset, &o.pattern, o.quadratic.is_empty()) {
            (Some(p), None, true) if p == "six-agent-quadratics" => {
                Ok(default_six_agent_objectives::<f64>())
            }
            (Some(p), _, _) if p != "six-agent-quadratics" => Err(ConfigError::invalid(
                "objectives.preset",
                format!("unknown preset `{p}`"),
            )),
            (Some(_), _, _) => Err(ConfigError::invalid(
                "objectives",
                "a preset excludes pattern/quadratic entries",
            )),
            (None, Some(pat), true) => {
                if pat.a.len() != pat.b.len() || pat.a.is_empty() {
                    return Err(ConfigError::invalid(
                        "objectives.pattern",
                        "a and b must be non-empty and equally long",
                    ));
                }
                let quads: Result<Vec<_>, _> = pat
                    .a
                    .iter()
                    .zip(&pat.b)
                    .enumerate()
                    .map(|(k, (&a, &b))| indexed_quadratic::<f64>(k + 1, a, b))
                    .collect();
                let quads = quads.map_err(|e| ConfigError::invalid("objectives.pattern", e))?;
                ObjectiveSet::from_quadratics(quads)
                    .map_err(|e| ConfigError::invalid("objectives.pattern", e))
            }
            (None, None, false) => {
                let mut quads = Vec::with_capacity(o.quadratic.len());
                for (i, q) in o.quadratic.iter().enumerate() {
                    let field = format!("objectives.quadratic[{i}]");
                    let rows = q.p.len();
                    if rows == 0 || q.p.iter().any(|r| r.len() != rows) {
                        return Err(ConfigError::invalid(&field, "p must be square"));
                    }
                    let p = Matrix::from_rows(&q.p);
                    let quad = QuadraticObjective::new(p, q.q.clone(), q.c)
                        .map_err(|e| ConfigError::invalid(&field, e))?;
                    quads.push(quad);
                }
                ObjectiveSet::from_quadratics(quads)
                    .map_err(|e| ConfigError::invalid("objectives.quadratic", e))
            }
            (None, Some(_), false) => Err(ConfigError::invalid(
                "objectives",
                "pattern and quadratic entries are mutually exclusive",
            )),
            (None, None, true) => Err(ConfigError::invalid(
                "objectives",
                "no objectives configured (need preset, pattern, or quadratic entries)",
            )),
        }
    }

    pub fn build_noise(&self) -> Result<NoiseModel<f64>, ConfigError> {
        let sec = &self.dynamics.noise;
        let intensity = match sec.kind.as_str() {
            "zero" => Intensity::Zero,
            "sin-cos" => Intensity::SinCos,
            "constant" => {
                if sec.values.is_empty() {
                    return Err(ConfigError::invalid(
                        "dynamics.noise.values",
                        "constant noise needs a values vector",
                    ));
                }
                Intensity::Constant(sec.values.clone())
            }
            other => {
                return Err(ConfigError::invalid(
                    "dynamics.noise.kind",
                    format!("unknown noise kind `{other}` (zero | sin-cos | constant)"),
                ))
            }
        };
        Ok(NoiseModel::new(intensity, sec.scale))
    }

    /// Resolve the simulation config this experiment runs on.
    pub fn build_sim_config(&self) -> Result<SimConfig<f64>, ConfigError> {
        let schedule = self.build_schedule()?;
        let objectives = self.build_objectives()?;
        let step = StepSchedule::new(self.dynamics.beta, self.dynamics.a)
            .map_err(|e| ConfigError::invalid("dynamics", e))?;
        let noise = self.build_noise()?;
        let n = schedule.n();
        let m = objectives.dim();
        if self.dynamics.x0.len() != n || self.dynamics.x0.iter().any(|r| r.len() != m) {
            return Err(ConfigError::invalid(
                "dynamics.x0",
                format!("initial states must be {n} rows of {m} coordinates"),
            ));
        }
        let x0 = Matrix::from_rows(&self.dynamics.x0);
        SimConfig::new(
            schedule,
            objectives,
            step,
            noise,
            self.dynamics.h,
            self.dynamics.horizon,
            x0,
            self.seed,
            self.dynamics.sample_stride,
        )
        .map_err(|e| ConfigError::invalid("dynamics", e))
    }

    /// Certification region as configured.
    pub fn build_region(&self) -> Result<Region<f64>, ConfigError> {
        Region::new(self.certify.region_lo.clone(), self.certify.region_hi.clone())
            .map_err(|e| ConfigError::invalid("certify.region_lo/region_hi", e))
    }

    /// Validate sweep exponents before any simulation runs.
    pub fn validate_sweep(&self) -> Result<(), ConfigError> {
        if self.sweep.a_values.is_empty() {
            return Err(ConfigError::invalid("sweep.a_values", "sweep needs at least one exponent"));
        }
        for &a in &self.sweep.a_values {
            crate::analysis::rate_regime(a)
                .map_err(|e| ConfigError::invalid("sweep.a_values", e))?;
        }
        Ok(())
    }
}
