//! Parameter sweeps: one run per point of a Cartesian grid.

use std::collections::BTreeMap;

use serde::Serialize;

use super::config::RunConfig;
use super::{run_with, write_json, RunResult};
use crate::backends::Backends;
use crate::error::{Error, Result};
use crate::prompts::ModelFamily;

/// Grid point: parameter name to value.
pub type GridPoint = BTreeMap<String, f64>;

/// Parameters a family accepts in a grid.
pub fn valid_params(family: ModelFamily) -> &'static [&'static str] {
    match family {
        ModelFamily::StableDiffusion => &["guidance_scale", "num_inference_steps", "seed"],
        ModelFamily::Flux => &["guidance_scale", "strength", "num_inference_steps", "seed"],
        ModelFamily::Sdxl => &["guidance_scale", "num_inference_steps", "prompt_strength", "seed"],
        ModelFamily::Lama => &["seed"],
    }
}

/// The model-comparison grids.
pub fn reference_grid(family: ModelFamily) -> BTreeMap<String, Vec<f64>> {
    let seeds = vec![42.0, 123.0];
    let entries: Vec<(&str, Vec<f64>)> = match family {
        ModelFamily::StableDiffusion => vec![
            ("guidance_scale", vec![10.0, 15.0, 20.0]),
            ("num_inference_steps", vec![50.0, 100.0, 250.0, 500.0]),
            ("seed", seeds),
        ],
        ModelFamily::Flux => vec![
            ("guidance_scale", vec![10.0, 15.0, 20.0]),
            ("strength", vec![0.5, 0.75, 1.0]),
            ("num_inference_steps", vec![30.0, 40.0, 50.0]),
            ("seed", seeds),
        ],
        ModelFamily::Sdxl => vec![
            ("guidance_scale", vec![25.0, 35.0, 50.0]),
            ("num_inference_steps", vec![20.0, 40.0, 100.0, 250.0, 500.0]),
            ("prompt_strength", vec![0.5, 0.75, 1.0]),
            ("seed", seeds),
        ],
        ModelFamily::Lama => vec![("seed", seeds)],
    };
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn check_value(name: &str, v: f64) -> Result<()> {
    let ok = match name {
        "guidance_scale" => v.is_finite() && v > 0.0,
        "num_inference_steps" => v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64,
        "strength" | "prompt_strength" => (0.0..=1.0).contains(&v),
        "seed" => v.fract() == 0.0 && v >= 0.0 && v < 2f64.powi(53),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid value {v} for sweep parameter {name:?}")))
    }
}

/// Cartesian product of `grid`, in key order then value order. An empty
/// grid yields a single empty point (the base configuration).
pub fn expand_grid(grid: &BTreeMap<String, Vec<f64>>, family: ModelFamily) -> Result<Vec<GridPoint>> {
    let allowed = valid_params(family);
    for (name, values) in grid {
        if !allowed.contains(&name.as_str()) {
            return Err(Error::Config(format!(
                "parameter {name:?} is not swept for {}; expected one of {allowed:?}",
                family.as_str()
            )));
        }
        if values.is_empty() {
            return Err(Error::Config(format!("sweep grid {name:?} has no values")));
        }
        for &v in values {
            check_value(name, v)?;
        }
    }
    let mut points = vec![GridPoint::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Directory-safe name, e.g. `guidance_scale=10_seed=42`; `base` for the
/// empty point.
pub fn point_label(point: &GridPoint) -> String {
    if point.is_empty() {
        return "base".into();
    }
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_")
}

/// `config` with the point's values applied as run-wide parameter
/// overrides and its output under `{output_dir}/sweep/{label}`. The cache
/// directory is shared across points.
pub fn apply_point(config: &RunConfig, point: &GridPoint) -> RunConfig {
    let mut c = config.clone();
    c.cache_dir = Some(config.cache_dir());
    c.output_dir = config.output_dir.join("sweep").join(point_label(point));
    c.sweep.clear();
    for (name, &v) in point {
        match name.as_str() {
            "guidance_scale" => c.inpaint.guidance_scale = Some(v),
            "num_inference_steps" => c.inpaint.num_inference_steps = Some(v as u32),
            "strength" | "prompt_strength" => c.inpaint.strength = Some(v),
            "seed" => c.inpaint.seed = Some(v as u64),
            _ => unreachable!("expand_grid validates names"),
        }
    }
    c
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub point: GridPoint,
    pub label: String,
    pub result: RunResult,
}

#[derive(Serialize)]
struct IndexRow<'a> {
    label: &'a str,
    point: &'a GridPoint,
    flip_rates: BTreeMap<&'a str, Option<f64>>,
}

pub fn sweep(config: &RunConfig) -> Result<Vec<SweepRun>> {
    let b = &config.backends;
    let backends = Backends::from_descriptors(&b.detector, &b.segmenter, &b.inpainter)?;
    sweep_with(config, &backends)
}

/// Runs every grid point in order and writes `{output_dir}/sweep/index.json`.
pub fn sweep_with(config: &RunConfig, backends: &Backends) -> Result<Vec<SweepRun>> {
    let points = expand_grid(&config.sweep, config.family())?;
    let mut runs = Vec::with_capacity(points.len());
    for point in points {
        let c = apply_point(config, &point);
        let result = run_with(&c, backends)?;
        runs.push(SweepRun {
            label: point_label(&point),
            point,
            result,
        });
    }
    let index: Vec<IndexRow<'_>> = runs
        .iter()
        .map(|r| IndexRow {
            label: &r.label,
            point: &r.point,
            flip_rates: r
                .result
                .summary
                .conditions
                .iter()
                .map(|(k, c)| (k.as_str(), c.metrics.as_ref().map(|m| m.flip_rate)))
                .collect(),
        })
        .collect();
    let dir = config.output_dir.join("sweep");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join("index.json"), &index)?;
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_sizes() {
        let sizes: Vec<usize> = ModelFamily::ALL
            .iter()
            .map(|&f| expand_grid(&reference_grid(f), f).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![24, 90, 54, 2]);
    }

    #[test]
    fn degenerate_grids() {
        let f = ModelFamily::StableDiffusion;
        assert_eq!(expand_grid(&BTreeMap::new(), f).unwrap(), vec![GridPoint::new()]);
        let single = BTreeMap::from([("seed".to_string(), vec![7.0])]);
        assert_eq!(expand_grid(&single, f).unwrap().len(), 1);
        let bad = BTreeMap::from([("strength".to_string(), vec![0.5])]);
        assert!(expand_grid(&bad, f).is_err());
        let lama = BTreeMap::from([("guidance_scale".to_string(), vec![10.0])]);
        assert!(expand_grid(&lama, ModelFamily::Lama).is_err());
        let frac = BTreeMap::from([("num_inference_steps".to_string(), vec![2.5])]);
        assert!(expand_grid(&frac, f).is_err());
    }

    #[test]
    fn labels_are_stable() {
        let p = GridPoint::from([("seed".to_string(), 42.0), ("guidance_scale".to_string(), 10.0)]);
        assert_eq!(point_label(&p), "guidance_scale=10_seed=42");
        assert_eq!(point_label(&GridPoint::new()), "base");
    }
}
