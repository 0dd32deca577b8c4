//! Scenario configuration: a JSON schema covering topology, waveform,
//! channel, priors, array and clock-offset sections plus an experiment
//! description, with dotted-path overrides and the built-in study
//! catalogue.
//!
//! Sections are independent; `eval` computes the bounds of the configured
//! scene, `sweep` runs the configured experiment into a CSV table.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nalgebra::{vector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, ArrayRanging, ReferencePoint};
use crate::channel::{sample_channel, AnchorPaths, ChannelModelParams, MultipathChannel};
use crate::error::{Error, Result};
use crate::experiments::studies::fisher_label;
use crate::experiments::{
    substream, AveragePocStudy, OffsetAnchorStudy, PathSeparationStudy, RaoStudy, ResultTable,
    StebUnits, TwoPathPriorVariant, UlaReferenceStudy,
};
use crate::fim::{efim_from_ranging, position_efim_result, EfimResult};
use crate::geometry::{Anchor, NetworkTopology, Sight};
use crate::priors::{AnchorPrior, Fisher, PositionPrior, PriorSpec};
use crate::scalar::SPEED_OF_LIGHT;
use crate::waveform::Waveform;

// ---------------------------------------------------------------------------
// Raw configuration schema (serde)
// ---------------------------------------------------------------------------

/// A Fisher information value in configuration: a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisherValue(pub Fisher<f64>);

impl Serialize for FisherValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Fisher::Finite(v) => s.serialize_f64(v),
            Fisher::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for FisherValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(FisherValue(Fisher::Finite(v))),
            Raw::Text(t) if t.eq_ignore_ascii_case("inf") => Ok(FisherValue(Fisher::Infinite)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// A sweep grid: an explicit list or an inclusive range.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::List(v) => {
                if v.is_empty() {
                    return Err(Error::Config("empty grid".into()));
                }
                Ok(v.clone())
            }
            GridSpec::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(Error::Config(format!(
                        "invalid grid range {start}..{stop} step {step}"
                    )));
                }
                let n = ((stop - start) / step + 1.5).floor() as usize;
                Ok((0..n)
                    .map(|i| start + i as f64 * step)
                    .filter(|v| *v <= stop + 1e-9 * step)
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub position: [f64; 2],
    #[serde(default = "default_sight")]
    pub sight: Sight,
}

fn default_sight() -> Sight {
    Sight::Los
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub agent: [f64; 2],
    pub anchors: Vec<AnchorConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WaveformConfig {
    GaussianDerivative {
        order: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        duration_ns: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        sigma_ns: Option<f64>,
    },
    Samples {
        csv_path: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathConfig {
    pub bias_m: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorPathsConfig {
    pub paths: Vec<PathConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct GeneratorConfig {
    pub arrival_rate_per_ns: Option<f64>,
    pub path_exponent: Option<f64>,
    pub ref_power_db: Option<f64>,
    pub ref_distance_m: Option<f64>,
    pub shadowing_db: Option<f64>,
    pub decay_const_ns: Option<f64>,
    pub nakagami_m: Option<f64>,
    pub path_count: Option<usize>,
}

impl GeneratorConfig {
    fn to_params(&self) -> ChannelModelParams {
        let d = ChannelModelParams::default();
        ChannelModelParams {
            arrival_rate: self.arrival_rate_per_ns.map_or(d.arrival_rate, |v| v * 1e9),
            path_exponent: self.path_exponent.unwrap_or(d.path_exponent),
            ref_power_db: self.ref_power_db.unwrap_or(d.ref_power_db),
            ref_distance_m: self.ref_distance_m.unwrap_or(d.ref_distance_m),
            shadowing_db: self.shadowing_db.unwrap_or(d.shadowing_db),
            decay_const_s: self.decay_const_ns.map_or(d.decay_const_s, |v| v * 1e-9),
            nakagami_m: self.nakagami_m.unwrap_or(d.nakagami_m),
            path_count: self.path_count.unwrap_or(d.path_count),
        }
    }
}

/// Per-anchor ranging intensities: one per anchor, or one per
/// (antenna, anchor) pair for near-field arrays.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RiiSpec {
    PerAnchor(Vec<f64>),
    PerAntenna(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChannelConfig {
    /// Explicit per-anchor path tables.
    Explicit { anchors: Vec<AnchorPathsConfig> },
    /// Stochastic generator (requires a scenario seed).
    Generated {
        #[serde(default)]
        params: GeneratorConfig,
    },
    /// Direct ranging information intensities.
    Rii { lambdas: RiiSpec },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PositionPriorConfig {
    Token(String),
    Isotropic(f64),
    Matrix([[f64; 2]; 2]),
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AnchorPriorConfig {
    pub xi_distance: Option<f64>,
    /// One entry per path; for LOS anchors the first entry must be absent
    /// or zero (the first-path bias is not a parameter).
    pub xi_bias: Option<Vec<Option<FisherValue>>>,
    pub xi_amplitude: Option<Vec<Option<FisherValue>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PriorsConfig {
    pub position: Option<PositionPriorConfig>,
    pub orientation: Option<FisherValue>,
    pub per_anchor: Option<Vec<AnchorPriorConfig>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceConfig {
    Token(String),
    Local([f64; 2]),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub antennas: Vec<[f64; 2]>,
    #[serde(default)]
    pub orientation_rad: f64,
    #[serde(default = "default_reference")]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub orientation_prior: Option<FisherValue>,
    #[serde(default)]
    pub far_field: bool,
}

fn default_reference() -> ReferenceConfig {
    ReferenceConfig::Token("center".into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffsetConfig {
    pub xi: FisherValue,
    #[serde(default)]
    pub steb_units: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PriorVariantConfig {
    pub label: String,
    #[serde(default = "zero_fisher")]
    pub xi_alpha1: FisherValue,
    #[serde(default = "zero_fisher")]
    pub xi_b2: FisherValue,
    #[serde(default = "zero_fisher")]
    pub xi_alpha2: FisherValue,
}

fn zero_fisher() -> FisherValue {
    FisherValue(Fisher::Finite(0.0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    PathSeparation {
        separations_ns: GridSpec,
        #[serde(default)]
        snr1_db: f64,
        #[serde(default = "default_snr2")]
        snr2_db: f64,
        #[serde(default)]
        prior_variants: Vec<PriorVariantConfig>,
    },
    PocVsArrival {
        inter_arrival_ns: GridSpec,
        path_counts: Vec<usize>,
        replications: usize,
    },
    Rao {
        thresholds: GridSpec,
        inter_arrival_ns: Vec<f64>,
        #[serde(default = "default_rao_paths")]
        path_count: usize,
        replications: usize,
    },
    UlaReference {
        distances_m: GridSpec,
        xi_phi: Vec<FisherValue>,
        xi_p: Vec<FisherValue>,
    },
    OffsetAnchor {
        phi1_rad: GridSpec,
        xi_b: Vec<FisherValue>,
    },
}

fn default_snr2() -> f64 {
    -3.0
}

fn default_rao_paths() -> usize {
    50
}

/// The whole scenario file.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: Option<u64>,
    pub noise_psd: Option<f64>,
    pub topology: Option<TopologyConfig>,
    pub waveform: Option<WaveformConfig>,
    pub channel: Option<ChannelConfig>,
    pub priors: Option<PriorsConfig>,
    pub array: Option<ArrayConfig>,
    pub offset: Option<OffsetConfig>,
    pub experiment: Option<ExperimentConfig>,
}

// ---------------------------------------------------------------------------
// Loading and overrides
// ---------------------------------------------------------------------------

/// Apply a dotted-path override (`priors.offset.xi=inf`,
/// `channel.lambdas.0=12`) onto the raw JSON document. The value is
/// parsed as JSON when possible, otherwise taken as a string.
pub fn apply_override(doc: &mut serde_json::Value, path: &str, raw: &str) -> Result<()> {
    let leaf: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("invalid override path {path:?}")));
    }
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(idx) = seg.parse::<usize>() {
            let arr = cursor.as_array_mut().ok_or_else(|| {
                Error::Config(format!("override {path:?}: {seg:?} indexes a non-array"))
            })?;
            if idx >= arr.len() {
                return Err(Error::Config(format!(
                    "override {path:?}: index {idx} out of bounds"
                )));
            }
            if last {
                arr[idx] = leaf;
                return Ok(());
            }
            cursor = &mut arr[idx];
        } else {
            if !cursor.is_object() {
                return Err(Error::Config(format!(
                    "override {path:?}: {seg:?} indexes a non-object"
                )));
            }
            let obj = cursor.as_object_mut().unwrap();
            if last {
                obj.insert((*seg).to_string(), leaf);
                return Ok(());
            }
            cursor = obj
                .entry((*seg).to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Parse a scenario from JSON text with overrides applied.
pub fn parse_scenario(json: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let mut doc: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
    for (key, value) in overrides {
        apply_override(&mut doc, key, value)?;
    }
    serde_json::from_value(doc).map_err(|e| Error::Config(format!("scenario schema: {e}")))
}

/// Load a scenario from a file path or a builtin name.
pub fn load_scenario(spec: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    if let Some(builtin) = builtin(spec) {
        let mut doc = serde_json::to_value(&builtin.config)
            .map_err(|e| Error::Config(format!("builtin serialize: {e}")))?;
        for (key, value) in overrides {
            apply_override(&mut doc, key, value)?;
        }
        return serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("scenario schema: {e}")));
    }
    let path = Path::new(spec);
    let file =
        File::open(path).map_err(|e| Error::Config(format!("cannot open {spec:?}: {e}")))?;
    let json = std::io::read_to_string(BufReader::new(file))
        .map_err(|e| Error::Config(format!("cannot read {spec:?}: {e}")))?;
    parse_scenario(&json, overrides)
}

// ---------------------------------------------------------------------------
// Resolved scenario
// ---------------------------------------------------------------------------

/// Channel after resolution: explicit paths or direct intensities.
#[derive(Clone, Debug)]
pub enum BuiltChannel {
    Paths(MultipathChannel<f64>),
    RiiPerAnchor(Vec<f64>),
    RiiPerAntenna(Vec<Vec<f64>>),
}

/// A validated, fully-built scenario ready for evaluation.
#[derive(Debug)]
pub struct Scenario {
    pub noise_psd: f64,
    pub seed: Option<u64>,
    pub waveform: Waveform<f64>,
    pub topology: Option<NetworkTopology<f64>>,
    pub channel: Option<BuiltChannel>,
    pub priors: PriorSpec<f64>,
    pub array: Option<(ArrayGeometry<f64>, bool)>, // (geometry, far_field)
    pub offset: Option<(Fisher<f64>, StebUnits)>,
    pub experiment: Option<ExperimentConfig>,
}

/// Build and validate every configured section.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let noise_psd = config.noise_psd.unwrap_or(1.0);
    if !(noise_psd > 0.0) {
        return Err(Error::InvalidNoise(noise_psd));
    }

    let waveform = match &config.waveform {
        None => Waveform::canonical_pulse(),
        Some(WaveformConfig::GaussianDerivative {
            order,
            duration_ns,
            sigma_ns,
        }) => match (duration_ns, sigma_ns) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "specify duration_ns or sigma_ns, not both".into(),
                ))
            }
            (Some(d), None) => Waveform::gaussian_derivative_with_duration(*order, d * 1e-9)?,
            (None, Some(s)) => Waveform::gaussian_derivative(*order, s * 1e-9)?,
            (None, None) => {
                return Err(Error::Config(
                    "gaussian_derivative needs duration_ns or sigma_ns".into(),
                ))
            }
        },
        Some(WaveformConfig::Samples { csv_path }) => {
            let file = File::open(csv_path)
                .map_err(|e| Error::Config(format!("cannot open {csv_path:?}: {e}")))?;
            Waveform::from_sample_csv(BufReader::new(file))?
        }
    };

    let topology = config
        .topology
        .as_ref()
        .map(|t| {
            let anchors = t
                .anchors
                .iter()
                .map(|a| Anchor::new(a.position[0], a.position[1], a.sight))
                .collect();
            NetworkTopology::new(vector![t.agent[0], t.agent[1]], anchors)
        })
        .transpose()?;

    let channel = config
        .channel
        .as_ref()
        .map(|c| -> Result<BuiltChannel> {
            match c {
                ChannelConfig::Explicit { anchors } => {
                    let mut per_anchor = Vec::with_capacity(anchors.len());
                    for a in anchors {
                        let biases = a.paths.iter().map(|p| p.bias_m).collect();
                        let amps = a.paths.iter().map(|p| p.amplitude).collect();
                        per_anchor.push(AnchorPaths::new(biases, amps)?);
                    }
                    Ok(BuiltChannel::Paths(MultipathChannel::new(per_anchor)))
                }
                ChannelConfig::Generated { params } => {
                    let topo = topology.as_ref().ok_or_else(|| {
                        Error::Config("generated channel needs a topology".into())
                    })?;
                    let seed = config.seed.ok_or_else(|| {
                        Error::Config("seed is mandatory when the channel is generated".into())
                    })?;
                    let params = params.to_params();
                    params.validate()?;
                    let mut per_anchor = Vec::with_capacity(topo.anchor_count());
                    for k in 0..topo.anchor_count() {
                        let mut rng = substream(seed, k as u64, 0);
                        per_anchor.push(sample_channel(
                            &params,
                            topo.distance(k)?,
                            topo.sight(k),
                            &mut rng,
                        )?);
                    }
                    Ok(BuiltChannel::Paths(MultipathChannel::new(per_anchor)))
                }
                ChannelConfig::Rii { lambdas } => match lambdas {
                    RiiSpec::PerAnchor(v) => Ok(BuiltChannel::RiiPerAnchor(v.clone())),
                    RiiSpec::PerAntenna(m) => Ok(BuiltChannel::RiiPerAntenna(m.clone())),
                },
            }
        })
        .transpose()?;

    // Cross-checks between channel and topology.
    if let (Some(topo), Some(BuiltChannel::Paths(ch))) = (&topology, &channel) {
        let sights: Vec<Sight> = topo.anchors().iter().map(|a| a.sight).collect();
        ch.validate_sights(&sights)?;
    }
    if let (Some(topo), Some(BuiltChannel::RiiPerAnchor(l))) = (&topology, &channel) {
        if l.len() != topo.anchor_count() {
            return Err(Error::InconsistentScenario(format!(
                "{} intensities for {} anchors",
                l.len(),
                topo.anchor_count()
            )));
        }
        if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "ranging intensities must be finite and nonnegative".into(),
            ));
        }
    }

    let array = config
        .array
        .as_ref()
        .map(|a| -> Result<(ArrayGeometry<f64>, bool)> {
            let local = a
                .antennas
                .iter()
                .map(|p| Vector2::new(p[0], p[1]))
                .collect();
            let reference = match &a.reference {
                ReferenceConfig::Token(t) if t.eq_ignore_ascii_case("center") => {
                    ReferencePoint::ArrayCenter
                }
                ReferenceConfig::Token(t) => {
                    return Err(Error::Config(format!(
                        "unknown array reference {t:?} (expected \"center\" or [x, y])"
                    )))
                }
                ReferenceConfig::Local(p) => ReferencePoint::Local(vector![p[0], p[1]]),
            };
            Ok((ArrayGeometry::new(local, a.orientation_rad, reference)?, a.far_field))
        })
        .transpose()?;

    let offset = config
        .offset
        .as_ref()
        .map(|o| -> Result<(Fisher<f64>, StebUnits)> {
            o.xi.0.validate_nonnegative("offset prior")?;
            let units = match o.steb_units.as_deref() {
                None | Some("m2") => StebUnits::MetersSquared,
                Some("s2") => StebUnits::SecondsSquared,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "unknown steb_units {other:?} (expected \"m2\" or \"s2\")"
                    )))
                }
            };
            Ok((o.xi.0, units))
        })
        .transpose()?;

    let priors = build_priors(config, &topology, &channel, &array, &offset)?;

    if let Some(ExperimentConfig::PocVsArrival { replications, .. })
    | Some(ExperimentConfig::Rao { replications, .. }) = &config.experiment
    {
        if *replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if config.seed.is_none() {
            return Err(Error::Config(
                "seed is mandatory when the channel is generated".into(),
            ));
        }
    }

    Ok(Scenario {
        noise_psd,
        seed: config.seed,
        waveform,
        topology,
        channel,
        priors,
        array,
        offset,
        experiment: config.experiment.clone(),
    })
}

fn build_priors(
    config: &ScenarioConfig,
    topology: &Option<NetworkTopology<f64>>,
    channel: &Option<BuiltChannel>,
    array: &Option<(ArrayGeometry<f64>, bool)>,
    offset: &Option<(Fisher<f64>, StebUnits)>,
) -> Result<PriorSpec<f64>> {
    let mut priors = PriorSpec::none();
    if let Some((xi, _)) = offset {
        priors.offset = *xi;
    }
    if let Some(a) = &config.array {
        if array.is_some() {
            priors.orientation = a.orientation_prior.map_or(Fisher::Finite(0.0), |f| f.0);
            priors.orientation.validate_nonnegative("orientation prior")?;
        }
    }
    let Some(pc) = &config.priors else {
        return Ok(priors);
    };
    if let Some(p) = &pc.position {
        priors.position = match p {
            PositionPriorConfig::Token(t) if t.eq_ignore_ascii_case("inf") => PositionPrior::Known,
            PositionPriorConfig::Token(t) => {
                return Err(Error::Config(format!(
                    "unknown position prior {t:?} (expected \"inf\", a scalar, or a 2x2 matrix)"
                )))
            }
            PositionPriorConfig::Isotropic(g) => PositionPrior::isotropic(*g),
            PositionPriorConfig::Matrix(m) => PositionPrior::Fim(Matrix2::new(
                m[0][0], m[0][1], m[1][0], m[1][1],
            )),
        };
        priors.position.validate()?;
    }
    if let Some(f) = &pc.orientation {
        priors.orientation = f.0;
        priors.orientation.validate_nonnegative("orientation prior")?;
    }
    if let Some(per_anchor) = &pc.per_anchor {
        let (Some(topo), Some(BuiltChannel::Paths(ch))) = (topology, channel) else {
            return Err(Error::Config(
                "per-anchor channel priors need a topology and an explicit or generated channel"
                    .into(),
            ));
        };
        if per_anchor.len() != topo.anchor_count() {
            return Err(Error::InconsistentPrior(format!(
                "{} per-anchor priors for {} anchors",
                per_anchor.len(),
                topo.anchor_count()
            )));
        }
        let mut blocks = Vec::with_capacity(per_anchor.len());
        for (k, pa) in per_anchor.iter().enumerate() {
            let sight = topo.sight(k);
            let l = ch.anchor(k).path_count();
            blocks.push(anchor_prior_from_config(pa, sight, l, k)?);
        }
        priors.per_anchor = blocks;
    }
    Ok(priors)
}

fn anchor_prior_from_config(
    pa: &AnchorPriorConfig,
    sight: Sight,
    path_count: usize,
    k: usize,
) -> Result<AnchorPrior<f64>> {
    let get = |list: &Option<Vec<Option<FisherValue>>>, l: usize, what: &str| -> Result<Fisher<f64>> {
        match list {
            None => Ok(Fisher::Finite(0.0)),
            Some(v) => {
                if v.len() > path_count {
                    return Err(Error::InconsistentPrior(format!(
                        "anchor {k}: {what} has {} entries for {} paths",
                        v.len(),
                        path_count
                    )));
                }
                Ok(v.get(l).copied().flatten().map_or(Fisher::Finite(0.0), |f| f.0))
            }
        }
    };
    if sight.is_los() {
        if let Some(bias) = &pa.xi_bias {
            if let Some(Some(first)) = bias.first() {
                if first.0 != Fisher::Finite(0.0) {
                    return Err(Error::InconsistentPrior(format!(
                        "anchor {k} is LOS: the first-path bias is not a parameter and cannot \
                         carry prior information"
                    )));
                }
            }
        }
    }
    // κ order: LOS (α1, b2, α2, …); NLOS (b1, α1, b2, α2, …).
    let mut kappa = Vec::new();
    for l in 0..path_count {
        if !(l == 0 && sight.is_los()) {
            kappa.push(get(&pa.xi_bias, l, "xi_bias")?);
        }
        kappa.push(get(&pa.xi_amplitude, l, "xi_amplitude")?);
    }
    AnchorPrior::diagonal(pa.xi_distance.unwrap_or(0.0), &kappa)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Point-evaluation output of a scenario.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub speb_m2: f64,
    pub soeb_rad2: Option<f64>,
    pub steb: Option<(f64, StebUnits)>,
    pub efim_eigenvalues: Vec<f64>,
}

fn lambdas_from_paths(scn: &Scenario, topo: &NetworkTopology<f64>, ch: &MultipathChannel<f64>) -> Result<Vec<f64>> {
    let mut lams = Vec::with_capacity(topo.anchor_count());
    for (k, paths) in ch.iter().enumerate() {
        let sight = topo.sight(k);
        let kappa_dim = 2 * paths.path_count() - usize::from(sight.is_los());
        let prior = scn.priors.anchor_prior(k, kappa_dim)?;
        lams.push(crate::priors::rii_with_prior(
            sight,
            paths,
            &scn.waveform,
            scn.noise_psd,
            &prior,
        )?);
    }
    Ok(lams)
}

/// Evaluate the configured scene: SPEB, plus SOEB/STEB when an array or a
/// clock offset is configured.
pub fn evaluate(scn: &Scenario) -> Result<EvalReport> {
    let topo = scn
        .topology
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs a topology section".into()))?;

    // Per-anchor intensities.
    let lambdas: Vec<f64> = match &scn.channel {
        None => return Err(Error::Config("eval needs a channel section".into())),
        Some(BuiltChannel::RiiPerAnchor(l)) => l.clone(),
        Some(BuiltChannel::RiiPerAntenna(_)) if scn.array.is_none() => {
            return Err(Error::Config(
                "per-antenna intensities need an array section".into(),
            ))
        }
        Some(BuiltChannel::RiiPerAntenna(_)) => Vec::new(), // handled below
        Some(BuiltChannel::Paths(ch)) => lambdas_from_paths(scn, topo, ch)?,
    };

    let result: EfimResult<f64> = if let Some((geometry, far_field)) = &scn.array {
        let ranging = match &scn.channel {
            Some(BuiltChannel::RiiPerAntenna(m)) => {
                if *far_field {
                    return Err(Error::Config(
                        "far-field arrays take per-anchor intensities".into(),
                    ));
                }
                if m.len() != geometry.antenna_count() {
                    return Err(Error::InconsistentScenario(format!(
                        "{} intensity rows for {} antennas",
                        m.len(),
                        geometry.antenna_count()
                    )));
                }
                ArrayRanging::PerAntenna { lambdas: m.clone() }
            }
            _ if !*far_field => {
                return Err(Error::Config(
                    "near-field arrays need per-antenna intensities (channel mode \"rii\" with \
                     one row per antenna)"
                        .into(),
                ))
            }
            _ => ArrayRanging::far_field(lambdas.clone()),
        };
        if let Some((xi_b, _)) = scn.offset {
            crate::clock::array_efim_with_offset(
                topo,
                geometry,
                &ranging,
                scn.priors.orientation,
                xi_b,
                &scn.priors.position,
            )?
        } else {
            crate::array::array_efim(
                topo,
                geometry,
                &ranging,
                scn.priors.orientation,
                &scn.priors.position,
            )?
        }
    } else if let Some((xi_b, _)) = scn.offset {
        crate::clock::efim_with_offset_from_riis(
            &topo.angles()?,
            &lambdas,
            xi_b,
            &scn.priors.position,
        )?
    } else {
        let base = efim_from_ranging(&topo.angles()?, &lambdas);
        let with_prior = match &scn.priors.position {
            PositionPrior::Fim(m) => base + m,
            PositionPrior::Known => {
                return Err(Error::InconsistentPrior(
                    "position prior ∞ eliminates the parameter of interest; use a large finite \
                     value"
                        .into(),
                ))
            }
        };
        position_efim_result(with_prior)?
    };

    let steb_units = scn.offset.map(|(_, u)| u).unwrap_or(StebUnits::MetersSquared);
    let unit_scale = match steb_units {
        StebUnits::MetersSquared => 1.0,
        StebUnits::SecondsSquared => 1.0 / (SPEED_OF_LIGHT * SPEED_OF_LIGHT),
    };
    Ok(EvalReport {
        speb_m2: result.speb,
        soeb_rad2: result.soeb,
        steb: result.steb.map(|v| (v * unit_scale, steb_units)),
        efim_eigenvalues: result.efim_eigenvalues(),
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Run the configured experiment.
pub fn sweep(scn: &Scenario) -> Result<ResultTable> {
    let experiment = scn
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs an experiment section".into()))?;
    match experiment {
        ExperimentConfig::PathSeparation {
            separations_ns,
            snr1_db,
            snr2_db,
            prior_variants,
        } => {
            let topology = scn
                .topology
                .clone()
                .ok_or_else(|| Error::Config("path_separation needs a topology".into()))?;
            let study = PathSeparationStudy {
                waveform: scn.waveform.clone(),
                topology,
                separations_s: separations_ns
                    .values()?
                    .into_iter()
                    .map(|v| v * 1e-9)
                    .collect(),
                snr1_db: *snr1_db,
                snr2_db: *snr2_db,
                prior_variants: prior_variants
                    .iter()
                    .map(|v| TwoPathPriorVariant {
                        label: v.label.clone(),
                        xi_alpha1: v.xi_alpha1.0,
                        xi_b2: v.xi_b2.0,
                        xi_alpha2: v.xi_alpha2.0,
                    })
                    .collect(),
            };
            study.run()
        }
        ExperimentConfig::PocVsArrival {
            inter_arrival_ns,
            path_counts,
            replications,
        } => {
            let study = AveragePocStudy {
                waveform: scn.waveform.clone(),
                inter_arrival_s: inter_arrival_ns
                    .values()?
                    .into_iter()
                    .map(|v| v * 1e-9)
                    .collect(),
                path_counts: path_counts.clone(),
                replications: *replications,
                seed: scn.seed.expect("validated: seed present"),
            };
            study.run()
        }
        ExperimentConfig::Rao {
            thresholds,
            inter_arrival_ns,
            path_count,
            replications,
        } => {
            let study = RaoStudy {
                waveform: scn.waveform.clone(),
                thresholds: thresholds.values()?,
                inter_arrival_s: inter_arrival_ns.iter().map(|v| v * 1e-9).collect(),
                path_count: *path_count,
                replications: *replications,
                seed: scn.seed.expect("validated: seed present"),
            };
            study.run()
        }
        ExperimentConfig::UlaReference {
            distances_m,
            xi_phi,
            xi_p,
        } => {
            let topology = scn
                .topology
                .clone()
                .ok_or_else(|| Error::Config("ula_reference needs a topology".into()))?;
            let Some(BuiltChannel::RiiPerAnchor(lambdas)) = &scn.channel else {
                return Err(Error::Config(
                    "ula_reference needs channel mode \"rii\" with per-anchor intensities".into(),
                ));
            };
            let Some((geometry, true)) = &scn.array else {
                return Err(Error::Config(
                    "ula_reference needs an array section with far_field = true".into(),
                ));
            };
            let antenna_locals = (0..geometry.antenna_count())
                .map(|n| geometry.local_offset(n) + geometry.reference_local())
                .collect();
            let study = UlaReferenceStudy {
                topology,
                lambdas: lambdas.clone(),
                antenna_locals,
                orientation_rad: geometry.orientation(),
                distances_m: distances_m.values()?,
                xi_phi: xi_phi.iter().map(|f| f.0).collect(),
                xi_p: xi_p.iter().map(|f| f.0).collect(),
            };
            study.run()
        }
        ExperimentConfig::OffsetAnchor { phi1_rad, xi_b } => {
            let Some(BuiltChannel::RiiPerAnchor(lambdas)) = &scn.channel else {
                return Err(Error::Config(
                    "offset_anchor needs channel mode \"rii\" with per-anchor intensities".into(),
                ));
            };
            let steb_units = scn
                .offset
                .map(|(_, u)| u)
                .unwrap_or(StebUnits::MetersSquared);
            let study = OffsetAnchorStudy {
                lambdas: lambdas.clone(),
                phi1_grid: phi1_rad.values()?,
                xi_b: xi_b.iter().map(|f| f.0).collect(),
                steb_units,
            };
            study.run()
        }
    }
}

// ---------------------------------------------------------------------------
// Builtins
// ---------------------------------------------------------------------------

/// A named built-in scenario.
pub struct Builtin {
    pub name: &'static str,
    pub description: &'static str,
    pub config: ScenarioConfig,
}

fn ring_topology(n: usize, radius: f64) -> TopologyConfig {
    let anchors = (0..n)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / n as f64;
            AnchorConfig {
                position: [-radius * phi.cos(), -radius * phi.sin()],
                sight: Sight::Los,
            }
        })
        .collect();
    TopologyConfig {
        agent: [0.0, 0.0],
        anchors,
    }
}

fn canonical_waveform() -> WaveformConfig {
    WaveformConfig::GaussianDerivative {
        order: 2,
        duration_ns: Some(4.0),
        sigma_ns: None,
    }
}

fn fig4_config(variants: Vec<PriorVariantConfig>) -> ScenarioConfig {
    ScenarioConfig {
        topology: Some(ring_topology(4, 100.0)),
        waveform: Some(canonical_waveform()),
        experiment: Some(ExperimentConfig::PathSeparation {
            separations_ns: GridSpec::Range {
                start: 0.1,
                stop: 8.0,
                step: 0.1,
            },
            snr1_db: 0.0,
            snr2_db: -3.0,
            prior_variants: variants,
        }),
        ..Default::default()
    }
}

fn fv(f: Fisher<f64>) -> FisherValue {
    FisherValue(f)
}

/// The built-in study catalogue.
pub fn builtins() -> Vec<Builtin> {
    let fig5a_variants = vec![
        PriorVariantConfig {
            label: "xiA1_0_xiA2_0".into(),
            xi_alpha1: fv(Fisher::Finite(0.0)),
            xi_b2: fv(Fisher::Finite(0.0)),
            xi_alpha2: fv(Fisher::Finite(0.0)),
        },
        PriorVariantConfig {
            label: "xiA1_inf_xiA2_0".into(),
            xi_alpha1: fv(Fisher::Infinite),
            xi_b2: fv(Fisher::Finite(0.0)),
            xi_alpha2: fv(Fisher::Finite(0.0)),
        },
        PriorVariantConfig {
            label: "xiA1_0_xiA2_inf".into(),
            xi_alpha1: fv(Fisher::Finite(0.0)),
            xi_b2: fv(Fisher::Finite(0.0)),
            xi_alpha2: fv(Fisher::Infinite),
        },
        PriorVariantConfig {
            label: "xiA1_inf_xiA2_inf".into(),
            xi_alpha1: fv(Fisher::Infinite),
            xi_b2: fv(Fisher::Finite(0.0)),
            xi_alpha2: fv(Fisher::Infinite),
        },
    ];
    let fig5b_variants = vec![
        PriorVariantConfig {
            label: "xib2_0".into(),
            xi_alpha1: fv(Fisher::Finite(0.0)),
            xi_b2: fv(Fisher::Finite(0.0)),
            xi_alpha2: fv(Fisher::Finite(0.0)),
        },
        PriorVariantConfig {
            label: "xib2_20".into(),
            xi_alpha1: fv(Fisher::Finite(0.0)),
            xi_b2: fv(Fisher::Finite(20.0)),
            xi_alpha2: fv(Fisher::Finite(0.0)),
        },
        PriorVariantConfig {
            label: "xib2_inf".into(),
            xi_alpha1: fv(Fisher::Finite(0.0)),
            xi_b2: fv(Fisher::Infinite),
            xi_alpha2: fv(Fisher::Finite(0.0)),
        },
    ];

    vec![
        Builtin {
            name: "fig4",
            description: "SPEB vs two-path separation: full, partial and non-overlap models",
            config: fig4_config(vec![]),
        },
        Builtin {
            name: "fig5a",
            description: "SPEB vs separation with amplitude priors (0/inf combinations)",
            config: fig4_config(fig5a_variants),
        },
        Builtin {
            name: "fig5b",
            description: "SPEB vs separation with NLOS-bias priors (0, 20, inf)",
            config: fig4_config(fig5b_variants),
        },
        Builtin {
            name: "fig6",
            description: "average path-overlap coefficient vs inter-arrival time",
            config: ScenarioConfig {
                waveform: Some(canonical_waveform()),
                seed: Some(12345),
                experiment: Some(ExperimentConfig::PocVsArrival {
                    inter_arrival_ns: GridSpec::Range {
                        start: 0.1,
                        stop: 4.0,
                        step: 0.1,
                    },
                    path_counts: vec![2, 3, 5, 50],
                    replications: 1000,
                }),
                ..Default::default()
            },
        },
        Builtin {
            name: "fig7_8",
            description: "SPEB/SOEB vs ULA reference point (6 anchors, 4-antenna array)",
            config: ScenarioConfig {
                topology: Some(ring_topology(6, 100.0)),
                channel: Some(ChannelConfig::Rii {
                    lambdas: RiiSpec::PerAnchor(vec![10.0; 6]),
                }),
                array: Some(ArrayConfig {
                    antennas: vec![[-0.75, 0.0], [-0.25, 0.0], [0.25, 0.0], [0.75, 0.0]],
                    orientation_rad: 0.0,
                    reference: ReferenceConfig::Token("center".into()),
                    orientation_prior: None,
                    far_field: true,
                }),
                experiment: Some(ExperimentConfig::UlaReference {
                    distances_m: GridSpec::Range {
                        start: 0.0,
                        stop: 2.0,
                        step: 0.1,
                    },
                    xi_phi: vec![
                        fv(Fisher::Finite(0.0)),
                        fv(Fisher::Finite(20.0)),
                        fv(Fisher::Finite(200.0)),
                        fv(Fisher::Infinite),
                    ],
                    xi_p: vec![
                        fv(Fisher::Finite(0.0)),
                        fv(Fisher::Finite(10.0)),
                        fv(Fisher::Finite(100.0)),
                        fv(Fisher::Infinite),
                    ],
                }),
                ..Default::default()
            },
        },
        Builtin {
            name: "fig9_10",
            description: "SPEB/STEB vs moving anchor with clock-offset priors",
            config: ScenarioConfig {
                topology: Some(ring_topology(4, 10.0)),
                channel: Some(ChannelConfig::Rii {
                    lambdas: RiiSpec::PerAnchor(vec![10.0; 4]),
                }),
                offset: Some(OffsetConfig {
                    xi: fv(Fisher::Finite(0.0)),
                    steb_units: None,
                }),
                experiment: Some(ExperimentConfig::OffsetAnchor {
                    phi1_rad: GridSpec::Range {
                        start: 0.0,
                        stop: std::f64::consts::TAU,
                        step: std::f64::consts::PI / 30.0,
                    },
                    xi_b: vec![
                        fv(Fisher::Finite(0.0)),
                        fv(Fisher::Finite(10.0)),
                        fv(Fisher::Finite(100.0)),
                        fv(Fisher::Infinite),
                    ],
                }),
                ..Default::default()
            },
        },
    ]
}

/// Look up a builtin by name.
pub fn builtin(name: &str) -> Option<Builtin> {
    builtins().into_iter().find(|b| b.name == name)
}

/// Column label helper shared with the CLI docs.
pub fn fisher_column_label(f: &Fisher<f64>) -> String {
    fisher_label(f)
}
