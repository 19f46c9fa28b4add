//! Run configuration, loaded from TOML or JSON.
//!
//! ```toml
//! manifest = "data/manifest.json"
//! output_dir = "out"
//! tau = 0.40
//! seed = 42
//!
//! [backends.detector]
//! endpoint = "blob-detector"
//! [backends.segmenter]
//! endpoint = "blob-segmenter"
//! [backends.inpainter]
//! endpoint = "http://localhost:8080"
//! model_family = "stable-diffusion"
//!
//! [[perturbations]]
//! type = "removal"
//!
//! [[perturbations]]
//! type = "background"
//! environment = "*"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendDescriptor, BackendKind, InpaintParams};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_TAU;
use crate::perturb::{MaskMode, MaskScope, PerturbationKind, PerturbationSpec};
use crate::prompts::{self, ModelFamily};

pub const DEFAULT_SEED: u64 = 42;
/// `environment = "*"` expands to every registry environment.
pub const ALL_ENVIRONMENTS: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendsConfig {
    pub detector: BackendDescriptor,
    pub segmenter: BackendDescriptor,
    pub inpainter: BackendDescriptor,
}

impl BackendsConfig {
    pub fn mock() -> Self {
        Self {
            detector: BackendDescriptor::mock(BackendKind::Detector, "blob-detector"),
            segmenter: BackendDescriptor::mock(BackendKind::Segmenter, "blob-segmenter"),
            inpainter: BackendDescriptor::mock(BackendKind::Inpainter, "fill-inpainter"),
        }
    }
}

/// `"native"` or `[width, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Named(NativeResolution),
    Size([u32; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NativeResolution {
    Native,
}

/// Field-wise overrides of the family's default sampling parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_inference_steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "prompt_strength")]
    pub strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_resolution: Option<Resolution>,
}

impl ParamsOverride {
    pub fn apply(&self, params: &mut InpaintParams) {
        if let Some(v) = self.guidance_scale {
            params.guidance_scale = v;
        }
        if let Some(v) = self.num_inference_steps {
            params.num_inference_steps = v;
        }
        if let Some(v) = self.strength {
            params.strength = v;
        }
        if let Some(v) = &self.scheduler {
            params.scheduler = v.clone();
        }
        if let Some(v) = self.seed {
            params.seed = v;
        }
        match self.target_resolution {
            Some(Resolution::Named(NativeResolution::Native)) => params.target_resolution = None,
            Some(Resolution::Size([w, h])) => params.target_resolution = Some((w, h)),
            None => {}
        }
    }
}

/// One `[[perturbations]]` entry; unset fields take kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecConfig {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_mode: Option<MaskMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_scope: Option<MaskScope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_px: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feather_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inpaint: Option<ParamsOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl SpecConfig {
    pub fn new(kind: PerturbationKind) -> Self {
        Self {
            kind,
            mask_mode: None,
            mask_scope: None,
            pad_px: None,
            feather_radius: None,
            inpaint: None,
            label: None,
        }
    }

    pub fn removal() -> Self {
        Self::new(PerturbationKind::Removal)
    }

    pub fn replacement(target_class: impl Into<String>) -> Self {
        Self::new(PerturbationKind::Replacement {
            target_class: target_class.into(),
        })
    }

    pub fn background(environment: impl Into<String>) -> Self {
        Self::new(PerturbationKind::Background {
            environment: environment.into(),
        })
    }

    pub fn with_mask_mode(mut self, mode: MaskMode) -> Self {
        self.mask_mode = Some(mode);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub backends: BackendsConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Run-wide overrides of the inpainter family's default parameters.
    #[serde(default)]
    pub inpaint: ParamsOverride,
    pub perturbations: Vec<SpecConfig>,
    /// Parameter grid for `sweep`; keys are sampling parameter names.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<f64>>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Defaults to `{output_dir}/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// JSON object of prompt overrides keyed by purpose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_overrides: Option<PathBuf>,
    /// Also cache inpainting outputs (masks are always cached).
    #[serde(default)]
    pub cache_inpaint: bool,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_workers() -> usize {
    4
}

impl RunConfig {
    /// A mock-backend config with one spec per entry of `perturbations`.
    pub fn new(manifest: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, perturbations: Vec<SpecConfig>) -> Self {
        Self {
            manifest: manifest.into(),
            backends: BackendsConfig::mock(),
            tau: DEFAULT_TAU,
            seed: DEFAULT_SEED,
            inpaint: ParamsOverride::default(),
            perturbations,
            sweep: BTreeMap::new(),
            workers: default_workers(),
            cache_dir: None,
            output_dir: output_dir.into(),
            prompt_overrides: None,
            cache_inpaint: false,
        }
    }

    /// Parses by extension (`.toml`, otherwise JSON), fills in backend
    /// kinds, resolves relative paths and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let mut value: serde_json::Value = if is_toml {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(backends) = value.get_mut("backends").and_then(|b| b.as_object_mut()) {
            for (role, kind) in [("detector", "detector"), ("segmenter", "segmenter"), ("inpainter", "inpainter")] {
                if let Some(d) = backends.get_mut(role).and_then(|d| d.as_object_mut()) {
                    d.entry("kind").or_insert_with(|| kind.into());
                }
            }
        }
        let mut config: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        if let Some(p) = self.cache_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.prompt_overrides.as_mut() {
            fix(p);
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn family(&self) -> ModelFamily {
        self.backends.inpainter.model_family
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.workers < 1 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.perturbations.is_empty() {
            return Err(Error::Config("no perturbations configured".into()));
        }
        for (role, d, kind) in [
            ("detector", &self.backends.detector, BackendKind::Detector),
            ("segmenter", &self.backends.segmenter, BackendKind::Segmenter),
            ("inpainter", &self.backends.inpainter, BackendKind::Inpainter),
        ] {
            d.validate()?;
            if d.kind != kind {
                return Err(Error::Config(format!("backends.{role} has kind {:?}", d.kind)));
            }
        }
        for (name, values) in &self.sweep {
            if values.is_empty() {
                return Err(Error::Config(format!("sweep grid {name:?} has no values")));
            }
        }
        self.resolve_specs().map(|_| ())
    }

    /// Base sampling parameters: family defaults, then the run seed, then
    /// run-wide overrides.
    pub fn base_params(&self) -> InpaintParams {
        let mut params = InpaintParams::defaults_for(self.family());
        params.seed = self.seed;
        self.inpaint.apply(&mut params);
        params
    }

    /// Concrete specs in configuration order, environments expanded.
    pub fn resolve_specs(&self) -> Result<Vec<PerturbationSpec>> {
        let family = self.family();
        let base = self.base_params();
        let mut out = Vec::new();
        for sc in &self.perturbations {
            let kinds = match &sc.kind {
                PerturbationKind::Background { environment } if environment == ALL_ENVIRONMENTS => prompts::list_environments()
                    .iter()
                    .map(|e| PerturbationKind::Background {
                        environment: e.name.to_string(),
                    })
                    .collect(),
                k => vec![k.clone()],
            };
            for kind in kinds {
                let mut spec = PerturbationSpec::new(kind, family);
                spec.inpaint_params = base.clone();
                if let Some(o) = &sc.inpaint {
                    o.apply(&mut spec.inpaint_params);
                }
                if let Some(m) = sc.mask_mode {
                    spec.mask_mode = m;
                }
                if let Some(s) = sc.mask_scope {
                    spec.mask_scope = s;
                }
                if let Some(p) = sc.pad_px {
                    spec.pad_px = p;
                }
                if let Some(f) = sc.feather_radius {
                    spec.feather_radius = f;
                }
                spec.label = sc.label.clone();
                spec.validate()?;
                out.push(spec);
            }
        }
        check_conditions(&out)?;
        Ok(out)
    }
}

/// Each condition must group specs that differ at most in environment, and
/// spec hashes must be unique.
fn check_conditions(specs: &[PerturbationSpec]) -> Result<()> {
    let mut seen_hash = HashMap::new();
    let mut shape: HashMap<String, PerturbationSpec> = HashMap::new();
    for spec in specs {
        let hash = spec.spec_hash();
        if seen_hash.insert(hash.clone(), ()).is_some() {
            return Err(Error::Config(format!("duplicate perturbation: {}", spec.describe())));
        }
        let mut normalized = spec.clone();
        if let PerturbationKind::Background { environment } = &mut normalized.kind {
            environment.clear();
        }
        match shape.get(&spec.condition()) {
            Some(prev) if prev != &normalized => {
                return Err(Error::Config(format!(
                    "condition {:?} names two different perturbations; set distinct labels",
                    spec.condition()
                )));
            }
            Some(_) => {}
            None => {
                shape.insert(spec.condition(), normalized);
            }
        }
    }
    Ok(())
}
