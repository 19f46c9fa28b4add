//! Experiment orchestration.
//!
//! Per image: detect, filter by `tau`, then for every perturbation spec
//! build the edit mask (segmentation masks are cached), perturb, re-detect
//! and record the outcome. Images are processed on a bounded worker pool;
//! results are sorted by `(image_id, spec_hash)` before aggregation, so
//! outputs do not depend on scheduling.
//!
//! Output tree:
//!
//! ```text
//! records.jsonl  summary.json  summary.csv  timings.csv  run_meta.json
//! artifacts/{image_id}/{spec_hash}/{original,mask,perturbed}.png
//! ```

pub mod cache;
pub mod compare;
pub mod config;
pub mod sweep;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{self, wire, BackendError, Backends, InpaintRequest, Inpainter};
use crate::error::{Error, Result};
use crate::manifest::{load_manifest, ManifestEntry};
use crate::metrics::{self, MetricsSummary, OutcomeRecord, RecordStatus, STD_CONVENTION};
use crate::perturb::{self, EditMask, MaskMode, PerturbationKind, PerturbationSpec};
use crate::prompts::{ModelFamily, PromptBook, PromptOverrides, PromptPair, CLASS_PLACEHOLDER};
use crate::raster;
use crate::types::{BinaryMask, Detection, RasterImage};

pub use cache::{Cache, CacheKey, CacheStats};
pub use compare::{compare_mask_modes, compare_mask_modes_with, ModeTiming, TimingComparison, TimingReport};
pub use config::{BackendsConfig, NativeResolution, ParamsOverride, Resolution, RunConfig, SpecConfig, ALL_ENVIRONMENTS};
pub use sweep::{expand_grid, point_label, reference_grid, sweep, sweep_with, valid_params, SweepRun};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const META_FILE: &str = "run_meta.json";
pub const ARTIFACTS_DIR: &str = "artifacts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Detect,
    Mask,
    Inpaint,
    Composite,
    Redetect,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Detect => "detect",
            Phase::Mask => "mask",
            Phase::Inpaint => "inpaint",
            Phase::Composite => "composite",
            Phase::Redetect => "redetect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub image_id: String,
    /// Empty for the per-image detection pass.
    pub spec_hash: String,
    pub phase: Phase,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_mode: Option<MaskMode>,
    #[serde(default)]
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// No detection reached `tau`.
    NoDetections,
    Unreadable,
    DetectFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub image_id: String,
    pub reason: ExclusionReason,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub attempted: usize,
    pub failed: usize,
    pub not_applicable: usize,
    pub spec_hashes: Vec<String>,
    /// Over `ok` records only; `None` when there are none.
    pub metrics: Option<MetricsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub engine_version: String,
    pub schema_version: u32,
    pub tau: f64,
    pub seed: u64,
    pub n_images: usize,
    pub n_included: usize,
    pub exclusions: Vec<Exclusion>,
    pub conditions: BTreeMap<String, ConditionReport>,
    pub std_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecMeta {
    pub spec_hash: String,
    pub condition: String,
    pub spec: PerturbationSpec,
    /// Replacement negatives show the class placeholder unsubstituted.
    pub prompts: PromptPair,
}

/// Everything needed to interpret a run, with no paths or timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub engine_version: String,
    pub schema_version: u32,
    pub tau: f64,
    pub seed: u64,
    pub model_family: ModelFamily,
    pub backends: BTreeMap<String, String>,
    pub specs: Vec<SpecMeta>,
    pub std_convention: String,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub output_dir: PathBuf,
    pub records: Vec<OutcomeRecord>,
    pub summary: RunSummary,
    pub meta: RunMeta,
    pub timings: Vec<PhaseTiming>,
    pub cache: CacheStats,
}

impl RunResult {
    pub fn artifact_dir(output_dir: &Path, image_id: &str, spec_hash: &str) -> PathBuf {
        output_dir.join(ARTIFACTS_DIR).join(image_id).join(spec_hash)
    }

    /// Reads a finished run back from its output directory.
    pub fn load(output_dir: impl AsRef<Path>) -> Result<Self> {
        let dir = output_dir.as_ref();
        let records = read_records(dir.join(RECORDS_FILE))?;
        let summary: RunSummary = read_json(&dir.join(SUMMARY_FILE))?;
        let meta: RunMeta = read_json(&dir.join(META_FILE))?;
        Ok(Self {
            output_dir: dir.to_path_buf(),
            records,
            summary,
            meta,
            timings: Vec::new(),
            cache: CacheStats::default(),
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<OutcomeRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Builds the configured backends, checks they answer, and runs.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    let b = &config.backends;
    let backends = Backends::from_descriptors(&b.detector, &b.segmenter, &b.inpainter)?;
    for (kind, status) in backends.health() {
        if !status.reachable {
            return Err(Error::backend(
                format!("{kind:?} health check"),
                BackendError::Transport(status.cause.unwrap_or_else(|| "unreachable".into())),
            ));
        }
    }
    run_with(config, &backends)
}

struct Ctx<'a> {
    config: &'a RunConfig,
    backends: Backends,
    book: PromptBook,
    cache: Arc<Cache>,
}

struct Prepared {
    entry: ManifestEntry,
    image: RasterImage,
    detections: Vec<Detection>,
}

/// Runs `config` against already-built backends (the configured
/// descriptors are ignored).
pub fn run_with(config: &RunConfig, backends: &Backends) -> Result<RunResult> {
    config.validate()?;
    let manifest = load_manifest(&config.manifest)?;
    let specs = config.resolve_specs()?;
    let overrides = match &config.prompt_overrides {
        Some(p) => PromptOverrides::load(p)?,
        None => PromptOverrides::default(),
    };
    let book = PromptBook::with_overrides(config.family(), overrides);
    let cache = Arc::new(Cache::open(config.cache_dir())?);
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut backends = backends.clone();
    if config.cache_inpaint {
        backends.inpainter = Arc::new(CachedInpainter {
            inner: backends.inpainter.clone(),
            cache: cache.clone(),
        });
    }
    let ctx = Ctx {
        config,
        backends,
        book,
        cache,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let prepared: Vec<(std::result::Result<Prepared, Exclusion>, Vec<PhaseTiming>)> =
        pool.install(|| manifest.entries.par_iter().map(|e| prepare(&ctx, e)).collect());
    let mut timings = Vec::new();
    let mut exclusions = Vec::new();
    let mut included = Vec::new();
    for (p, t) in prepared {
        timings.extend(t);
        match p {
            Ok(p) => included.push(p),
            Err(x) => exclusions.push(x),
        }
    }

    let tasks: Vec<(&Prepared, &PerturbationSpec)> =
        included.iter().flat_map(|p| specs.iter().map(move |s| (p, s))).collect();
    let outputs: Vec<Result<(OutcomeRecord, Vec<PhaseTiming>)>> =
        pool.install(|| tasks.par_iter().map(|(p, s)| process(&ctx, p, s)).collect());
    let mut records = Vec::with_capacity(outputs.len());
    for o in outputs {
        let (r, t) = o?;
        records.push(r);
        timings.extend(t);
    }
    records.sort_by(|a, b| (&a.image_id, &a.spec_hash).cmp(&(&b.image_id, &b.spec_hash)));
    exclusions.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    timings.sort_by(|a, b| {
        (&a.image_id, &a.spec_hash, a.phase).cmp(&(&b.image_id, &b.spec_hash, b.phase))
    });

    let summary = RunSummary {
        engine_version: crate::ENGINE_VERSION.into(),
        schema_version: wire::SCHEMA_VERSION,
        tau: config.tau,
        seed: config.seed,
        n_images: manifest.len(),
        n_included: included.len(),
        exclusions,
        conditions: summarize_conditions(&records, config.tau)?,
        std_convention: STD_CONVENTION.into(),
    };
    let meta = build_meta(config, &ctx, &specs)?;
    let result = RunResult {
        output_dir: out_dir.clone(),
        records,
        summary,
        meta,
        timings,
        cache: ctx.cache.stats(),
    };
    write_outputs(&result)?;
    log::info!(
        "run: {} records, {} excluded, cache {} hits / {} misses",
        result.records.len(),
        result.summary.exclusions.len(),
        result.cache.hits,
        result.cache.misses
    );
    Ok(result)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn prepare(ctx: &Ctx<'_>, entry: &ManifestEntry) -> (std::result::Result<Prepared, Exclusion>, Vec<PhaseTiming>) {
    let exclude = |reason, message: String| Exclusion {
        image_id: entry.image_id.clone(),
        reason,
        message,
    };
    let image = match raster::read_image(&entry.path) {
        Ok(i) => i,
        Err(e) => return (Err(exclude(ExclusionReason::Unreadable, e.to_string())), vec![]),
    };
    let (detections, secs) = timed(|| backends::detect(ctx.backends.detector.as_ref(), &image));
    let timing = vec![PhaseTiming {
        image_id: entry.image_id.clone(),
        spec_hash: String::new(),
        phase: Phase::Detect,
        wall_seconds: secs,
        mask_mode: None,
        cache_hit: false,
    }];
    let detections = match detections {
        Ok(d) => d,
        Err(e) => {
            log::warn!("{}: detection failed: {e}", entry.image_id);
            return (Err(exclude(ExclusionReason::DetectFailed, e.to_string())), timing);
        }
    };
    if metrics::count_above(&detections, ctx.config.tau) == 0 {
        return (Err(exclude(ExclusionReason::NoDetections, String::new())), timing);
    }
    (
        Ok(Prepared {
            entry: entry.clone(),
            image,
            detections,
        }),
        timing,
    )
}

impl Ctx<'_> {
    /// Raw edit mask; segmentation results are served from the cache.
    fn raw_mask(&self, p: &Prepared, spec: &PerturbationSpec) -> Result<(BinaryMask, bool)> {
        let tau = self.config.tau;
        let segmenter = self.backends.segmenter.as_ref();
        if spec.mask_mode == MaskMode::Bbox {
            let m = perturb::raw_edit_mask(&p.image, &p.detections, spec.mask_mode, spec.mask_scope, tau, segmenter)?;
            return Ok((m, false));
        }
        let boxes: Vec<_> = perturb::select_detections(&p.detections, spec.mask_scope, tau)?
            .iter()
            .map(|d| d.bbox)
            .collect();
        let key = CacheKey::builder("segmentation-mask")
            .image("image", &p.image)
            .json("boxes", &boxes)
            .text("segmenter", &segmenter.identity())
            .finish();
        let (bytes, hit) = self.cache.get_or_compute(&key, || {
            let m = perturb::raw_edit_mask(&p.image, &p.detections, spec.mask_mode, spec.mask_scope, tau, segmenter)?;
            raster::encode_binary_mask(&m)
        })?;
        let mask = raster::decode_binary_mask(&bytes)?;
        if mask.is_empty() {
            return Err(Error::NotApplicable("edit mask is empty".into()));
        }
        Ok((mask, hit))
    }
}

fn process(ctx: &Ctx<'_>, p: &Prepared, spec: &PerturbationSpec) -> Result<(OutcomeRecord, Vec<PhaseTiming>)> {
    let tau = ctx.config.tau;
    let id = &p.entry.image_id;
    let hash = spec.spec_hash();
    let mut timings = Vec::new();
    let mut time = |phase, secs, cache_hit| {
        timings.push(PhaseTiming {
            image_id: id.clone(),
            spec_hash: hash.clone(),
            phase,
            wall_seconds: secs,
            mask_mode: Some(spec.mask_mode),
            cache_hit,
        })
    };
    let mut record = OutcomeRecord::new(id.clone(), p.detections.clone(), Vec::new(), tau)
        .with_condition(spec.condition(), hash.clone());
    record.perturbation = spec.describe();
    record.environment = spec.environment().map(str::to_string);

    let outcome = (|| -> Result<RasterImage> {
        let (raw, secs) = timed(|| ctx.raw_mask(p, spec));
        let (raw, hit) = raw?;
        let edit = EditMask::refine(raw, spec.pad_px, spec.feather_radius);
        time(Phase::Mask, secs, hit);
        let inpainter = ctx.backends.inpainter.as_ref();
        let perturbed = match &spec.kind {
            PerturbationKind::Background { .. } => {
                if edit.soft.is_empty() {
                    return Err(Error::NotApplicable("foreground alpha is empty".into()));
                }
                let (w, h) = p.image.dims();
                let (scene, secs) = timed(|| perturb::generate_background(w, h, spec, inpainter, &ctx.book));
                time(Phase::Inpaint, secs, false);
                let (out, secs) = timed(|| crate::maskops::composite(&p.image, &edit.soft, &scene?.0));
                time(Phase::Composite, secs, false);
                out?
            }
            _ => {
                let (out, secs) = timed(|| perturb::apply(&p.image, &p.detections, &edit, spec, tau, inpainter, &ctx.book));
                time(Phase::Inpaint, secs, false);
                out?.image
            }
        };
        write_artifacts(ctx, id, &hash, &p.image, &edit, spec, &perturbed)?;
        Ok(perturbed)
    })();

    match outcome {
        Ok(perturbed) => {
            let (post, secs) = timed(|| backends::detect(ctx.backends.detector.as_ref(), &perturbed));
            time(Phase::Redetect, secs, false);
            match post {
                Ok(post) => {
                    let env = record.environment.take();
                    let perturbation = std::mem::take(&mut record.perturbation);
                    record = OutcomeRecord::new(id.clone(), p.detections.clone(), post, tau)
                        .with_condition(spec.condition(), hash.clone());
                    record.perturbation = perturbation;
                    record.environment = env;
                }
                Err(e) => {
                    log::warn!("{id} [{hash}]: re-detection failed: {e}");
                    record.status = RecordStatus::Failed {
                        error: format!("redetect: {e}"),
                    };
                }
            }
        }
        Err(Error::NotApplicable(reason)) => record.status = RecordStatus::NotApplicable { reason },
        Err(e @ Error::Backend { .. }) => {
            log::warn!("{id} [{hash}]: {e}");
            record.status = RecordStatus::Failed { error: e.to_string() };
        }
        Err(e) => return Err(e),
    }
    Ok((record, timings))
}

fn write_artifacts(
    ctx: &Ctx<'_>,
    image_id: &str,
    spec_hash: &str,
    original: &RasterImage,
    edit: &EditMask,
    spec: &PerturbationSpec,
    perturbed: &RasterImage,
) -> Result<()> {
    let dir = RunResult::artifact_dir(&ctx.config.output_dir, image_id, spec_hash);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    raster::write_image(original, dir.join("original.png"))?;
    match spec.kind {
        PerturbationKind::Background { .. } => raster::write_soft_mask(&edit.soft, dir.join("mask.png"))?,
        _ => raster::write_binary_mask(&edit.binary, dir.join("mask.png"))?,
    }
    raster::write_image(perturbed, dir.join("perturbed.png"))
}

/// Per-condition counts and metrics over `ok` records.
pub fn summarize_conditions(records: &[OutcomeRecord], tau: f64) -> Result<BTreeMap<String, ConditionReport>> {
    let mut groups: BTreeMap<String, Vec<&OutcomeRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.condition.clone()).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (condition, rs) in groups {
        let ok: Vec<OutcomeRecord> = rs.iter().filter(|r| r.is_ok()).map(|r| (*r).clone()).collect();
        let mut hashes: Vec<String> = rs.iter().map(|r| r.spec_hash.clone()).collect();
        hashes.sort();
        hashes.dedup();
        out.insert(
            condition,
            ConditionReport {
                attempted: rs.len(),
                failed: rs.iter().filter(|r| matches!(r.status, RecordStatus::Failed { .. })).count(),
                not_applicable: rs
                    .iter()
                    .filter(|r| matches!(r.status, RecordStatus::NotApplicable { .. }))
                    .count(),
                spec_hashes: hashes,
                metrics: if ok.is_empty() { None } else { Some(metrics::summarize(&ok, tau)?) },
            },
        );
    }
    Ok(out)
}

fn build_meta(config: &RunConfig, ctx: &Ctx<'_>, specs: &[PerturbationSpec]) -> Result<RunMeta> {
    let mut spec_meta = Vec::with_capacity(specs.len());
    for spec in specs {
        let prompts = match &spec.kind {
            PerturbationKind::Removal => ctx.book.removal()?,
            PerturbationKind::Replacement { target_class } => ctx.book.replacement(target_class, CLASS_PLACEHOLDER)?,
            PerturbationKind::Background { environment } => ctx.book.background(environment)?,
        };
        spec_meta.push(SpecMeta {
            spec_hash: spec.spec_hash(),
            condition: spec.condition(),
            spec: spec.clone(),
            prompts,
        });
    }
    spec_meta.sort_by(|a, b| a.spec_hash.cmp(&b.spec_hash));
    let backends = BTreeMap::from([
        ("detector".to_string(), ctx.backends.detector.identity()),
        ("segmenter".to_string(), ctx.backends.segmenter.identity()),
        ("inpainter".to_string(), ctx.backends.inpainter.identity()),
    ]);
    Ok(RunMeta {
        engine_version: crate::ENGINE_VERSION.into(),
        schema_version: wire::SCHEMA_VERSION,
        tau: config.tau,
        seed: config.seed,
        model_family: config.family(),
        backends,
        specs: spec_meta,
        std_convention: STD_CONVENTION.into(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_records(path: &Path, records: &[OutcomeRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// One row per condition, then one row per (condition, environment).
pub fn write_summary_csv(path: &Path, summary: &RunSummary) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "condition",
        "environment",
        "n",
        "flips",
        "flip_rate",
        "cd_all_mean",
        "cd_all_std",
        "cd_persisting_mean",
        "cd_persisting_std",
        "persisting_count",
        "persisting_conf_mean",
        "persisting_conf_std",
        "failed",
        "not_applicable",
        "tau",
    ])
    .map_err(csv_err)?;
    for (condition, report) in &summary.conditions {
        let Some(m) = &report.metrics else {
            w.write_record([
                condition.as_str(),
                "",
                "0",
                "0",
                "",
                "",
                "",
                "",
                "",
                "0",
                "",
                "",
                &report.failed.to_string(),
                &report.not_applicable.to_string(),
                &summary.tau.to_string(),
            ])
            .map_err(csv_err)?;
            continue;
        };
        w.write_record([
            condition.clone(),
            String::new(),
            m.n.to_string(),
            m.flips.to_string(),
            m.flip_rate.to_string(),
            m.cd_all.mean.to_string(),
            m.cd_all.std.to_string(),
            fmt_opt(m.cd_persisting.map(|s| s.mean)),
            fmt_opt(m.cd_persisting.map(|s| s.std)),
            m.persisting.count.to_string(),
            fmt_opt(m.persisting.stats.map(|s| s.mean)),
            fmt_opt(m.persisting.stats.map(|s| s.std)),
            report.failed.to_string(),
            report.not_applicable.to_string(),
            summary.tau.to_string(),
        ])
        .map_err(csv_err)?;
        for (env, g) in &m.per_environment {
            let mut row = vec![String::new(); 15];
            row[0] = condition.clone();
            row[1] = env.clone();
            row[2] = g.n.to_string();
            row[3] = g.flips.to_string();
            row[4] = g.flip_rate.to_string();
            row[14] = summary.tau.to_string();
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_timings_csv(path: &Path, timings: &[PhaseTiming]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["image_id", "spec_hash", "phase", "mask_mode", "wall_seconds", "cache_hit"])
        .map_err(csv_err)?;
    for t in timings {
        w.write_record([
            t.image_id.as_str(),
            t.spec_hash.as_str(),
            t.phase.as_str(),
            t.mask_mode.map(MaskMode::as_str).unwrap_or(""),
            &format!("{:.6}", t.wall_seconds),
            if t.cache_hit { "true" } else { "false" },
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_outputs(result: &RunResult) -> Result<()> {
    let dir = &result.output_dir;
    write_records(&dir.join(RECORDS_FILE), &result.records)?;
    write_json(&dir.join(SUMMARY_FILE), &result.summary)?;
    write_summary_csv(&dir.join(SUMMARY_CSV), &result.summary)?;
    write_timings_csv(&dir.join(TIMINGS_FILE), &result.timings)?;
    write_json(&dir.join(META_FILE), &result.meta)
}

/// Detection pass only, one JSON line per manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLine {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Detection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn detect_only(config: &RunConfig, backends: &Backends) -> Result<Vec<DetectionLine>> {
    let manifest = load_manifest(&config.manifest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let lines: Vec<DetectionLine> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let res = raster::read_image(&e.path)
                    .and_then(|img| backends::detect(backends.detector.as_ref(), &img).map_err(|err| Error::backend("detect", err)));
                match res {
                    Ok(d) => DetectionLine {
                        image_id: e.image_id.clone(),
                        detections: Some(d),
                        error: None,
                    },
                    Err(err) => DetectionLine {
                        image_id: e.image_id.clone(),
                        detections: None,
                        error: Some(err.to_string()),
                    },
                }
            })
            .collect()
    });
    std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let path = config.output_dir.join("detections.jsonl");
    let mut w = create(&path)?;
    for l in &lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(lines)
}

/// Caches inpainting responses keyed by the full request and the service identity.
struct CachedInpainter {
    inner: Arc<dyn Inpainter>,
    cache: Arc<Cache>,
}

impl Inpainter for CachedInpainter {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn inpaint_raw(&self, req: &InpaintRequest<'_>) -> std::result::Result<RasterImage, BackendError> {
        let key = CacheKey::builder("inpaint")
            .image("image", req.image)
            .json("mask", req.mask.bits())
            .text("prompt", req.prompt)
            .text("negative_prompt", req.negative_prompt)
            .json("params", req.params)
            .seed(req.params.seed)
            .text("inpainter", &self.inner.identity())
            .finish();
        let produced = self.cache.get_or_compute(&key, || {
            let img = self.inner.inpaint_raw(req).map_err(|e| Error::backend("inpaint", e))?;
            raster::encode_png(&img)
        });
        match produced {
            Ok((bytes, _)) => raster::decode_image(&bytes).map_err(|e| BackendError::malformed(e.to_string(), "")),
            Err(Error::Backend { source, .. }) => Err(source),
            Err(e) => Err(BackendError::Transport(e.to_string())),
        }
    }

    fn health(&self) -> crate::backends::HealthStatus {
        self.inner.health()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, BlobDatasetSpec};

    #[test]
    fn exclusions_and_records_cover_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth::write_blob_dataset(
            dir.path().join("data"),
            &BlobDatasetSpec {
                n_images: 10,
                n_without_blobs: 6,
                ..BlobDatasetSpec::default()
            },
        )
        .unwrap();
        let config = RunConfig::new(&ds, dir.path().join("out"), vec![SpecConfig::removal()]);
        let result = run_with(&config, &Backends::mock()).unwrap();
        assert_eq!(result.records.len(), 4);
        assert_eq!(result.summary.exclusions.len(), 6);
        assert!(result
            .summary
            .exclusions
            .iter()
            .all(|x| x.reason == ExclusionReason::NoDetections));
        let m = result.summary.conditions["removal-segmentation"].metrics.as_ref().unwrap();
        assert_eq!(m.flip_rate, 1.0);
        let back = RunResult::load(&config.output_dir).unwrap();
        assert_eq!(back.records, result.records);
        assert_eq!(back.summary, result.summary);
    }
}
