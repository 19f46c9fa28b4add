//! Segmentation versus bounding-box mask timing.
//!
//! Four runs share one fresh mask cache: removal with segmentation masks
//! (cold cache), removal with box masks, then replacement in both modes.
//! The replacement runs find every segmentation mask already cached, so
//! their timings isolate the inpainting step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SpecConfig};
use super::{run_with, write_json, Phase, RunResult};
use crate::backends::Backends;
use crate::error::{Error, Result};
use crate::perturb::{MaskMode, PerturbationKind};

pub const DEFAULT_REPLACEMENT_TARGET: &str = "boat";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTiming {
    pub mask_mode: MaskMode,
    pub images: usize,
    /// Mean over images of the summed wall time of all phases.
    pub mean_total_seconds: f64,
    pub mean_phase_seconds: BTreeMap<Phase, f64>,
    pub per_image_seconds: BTreeMap<String, f64>,
    pub mask_cache_hits: usize,
}

impl ModeTiming {
    pub fn from_run(mode: MaskMode, result: &RunResult) -> Self {
        let mut per_image: BTreeMap<String, f64> = BTreeMap::new();
        let mut phase_sums: BTreeMap<Phase, (f64, usize)> = BTreeMap::new();
        let mut hits = 0;
        for t in &result.timings {
            *per_image.entry(t.image_id.clone()).or_default() += t.wall_seconds;
            let e = phase_sums.entry(t.phase).or_default();
            e.0 += t.wall_seconds;
            e.1 += 1;
            hits += (t.phase == Phase::Mask && t.cache_hit) as usize;
        }
        let included: BTreeMap<String, f64> = per_image
            .into_iter()
            .filter(|(id, _)| result.records.iter().any(|r| &r.image_id == id))
            .collect();
        let n = included.len();
        let mean_total = if n == 0 { 0.0 } else { included.values().sum::<f64>() / n as f64 };
        Self {
            mask_mode: mode,
            images: n,
            mean_total_seconds: mean_total,
            mean_phase_seconds: phase_sums.into_iter().map(|(p, (s, c))| (p, s / c as f64)).collect(),
            per_image_seconds: included,
            mask_cache_hits: hits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingComparison {
    pub perturbation: String,
    pub segmentation: ModeTiming,
    pub bbox: ModeTiming,
    /// `segmentation.mean_total_seconds / bbox.mean_total_seconds`.
    pub speedup: f64,
}

impl TimingComparison {
    fn new(perturbation: &str, segmentation: ModeTiming, bbox: ModeTiming) -> Self {
        let speedup = if bbox.mean_total_seconds > 0.0 {
            segmentation.mean_total_seconds / bbox.mean_total_seconds
        } else {
            f64::NAN
        };
        Self {
            perturbation: perturbation.into(),
            segmentation,
            bbox,
            speedup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub removal: TimingComparison,
    /// Rerun with the masks cached by the removal runs.
    pub replacement: Option<TimingComparison>,
}

pub fn compare_mask_modes(config: &RunConfig, include_replacement: bool) -> Result<TimingReport> {
    let b = &config.backends;
    let backends = Backends::from_descriptors(&b.detector, &b.segmenter, &b.inpainter)?;
    compare_mask_modes_with(config, &backends, include_replacement)
}

/// Writes each run under `{output_dir}/compare/` and the report to
/// `{output_dir}/compare/timing_report.json`. The replacement target is
/// taken from the first replacement spec in `config`, else `boat`.
pub fn compare_mask_modes_with(config: &RunConfig, backends: &Backends, include_replacement: bool) -> Result<TimingReport> {
    let root = config.output_dir.join("compare");
    let cache_dir = root.join("cache");
    if cache_dir.exists() {
        std::fs::remove_dir_all(&cache_dir).map_err(|e| Error::io(&cache_dir, e))?;
    }
    let target = config
        .perturbations
        .iter()
        .find_map(|p| match &p.kind {
            PerturbationKind::Replacement { target_class } => Some(target_class.clone()),
            _ => None,
        })
        .unwrap_or_else(|| DEFAULT_REPLACEMENT_TARGET.to_string());

    let one = |name: &str, spec: SpecConfig, mode: MaskMode| -> Result<ModeTiming> {
        let mut c = config.clone();
        c.perturbations = vec![spec.with_mask_mode(mode)];
        c.cache_dir = Some(cache_dir.clone());
        c.cache_inpaint = false;
        c.sweep.clear();
        c.output_dir = root.join(format!("{name}-{}", mode.as_str()));
        let result = run_with(&c, backends)?;
        Ok(ModeTiming::from_run(mode, &result))
    };

    let removal = TimingComparison::new(
        "removal",
        one("removal", SpecConfig::removal(), MaskMode::Segmentation)?,
        one("removal", SpecConfig::removal(), MaskMode::Bbox)?,
    );
    let replacement = if include_replacement {
        Some(TimingComparison::new(
            "replacement",
            one("replacement", SpecConfig::replacement(&target), MaskMode::Segmentation)?,
            one("replacement", SpecConfig::replacement(&target), MaskMode::Bbox)?,
        ))
    } else {
        None
    };
    let report = TimingReport { removal, replacement };
    write_json(&root.join("timing_report.json"), &report)?;
    Ok(report)
}
