//! Flip rate, confidence drop and the derived per-condition statistics.
//!
//! For a record `i` and threshold `tau`:
//! - `n'_i` = number of post-perturbation detections with confidence >= tau;
//! - `s_i^tau` = top pre-perturbation confidence if >= tau, else 0
//!   (and likewise `s'_i^tau` after perturbation).
//!
//! Flip rate is `mean(1{n'_i == 0})`; confidence drop is
//! `mean(s_i^tau - s'_i^tau)` over all records. Spreads are population
//! standard deviations (divide by N).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Detection;

pub const DEFAULT_TAU: f64 = 0.40;
pub const STD_CONVENTION: &str = "population";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plausibility {
    Plausible,
    Implausible,
    #[default]
    Unjudged,
}

impl std::str::FromStr for Plausibility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plausible" => Ok(Plausibility::Plausible),
            "implausible" => Ok(Plausibility::Implausible),
            "unjudged" | "" => Ok(Plausibility::Unjudged),
            other => Err(Error::InvalidArgument(format!("invalid plausibility label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RecordStatus {
    #[default]
    Ok,
    /// Backend failure after retries; excluded from metrics.
    Failed { error: String },
    /// The spec could not be applied to this image (e.g. detection index out of range).
    NotApplicable { reason: String },
}

/// Pre/post detections for one (image, perturbation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub image_id: String,
    pub spec_hash: String,
    pub condition: String,
    /// Short human-readable description of the perturbation.
    pub perturbation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    pub pre_detections: Vec<Detection>,
    pub post_detections: Vec<Detection>,
    pub pre_top_tau: f64,
    pub post_top_tau: f64,
    pub pre_count_tau: usize,
    pub post_count_tau: usize,
    #[serde(default)]
    pub status: RecordStatus,
    #[serde(default)]
    pub manual_plausibility: Plausibility,
}

impl OutcomeRecord {
    /// Builds a record, deriving the thresholded fields at `tau`.
    pub fn new(
        image_id: impl Into<String>,
        pre_detections: Vec<Detection>,
        post_detections: Vec<Detection>,
        tau: f64,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            spec_hash: String::new(),
            condition: String::new(),
            perturbation: String::new(),
            environment: None,
            pre_top_tau: thresholded_top_confidence(&pre_detections, tau),
            post_top_tau: thresholded_top_confidence(&post_detections, tau),
            pre_count_tau: count_above(&pre_detections, tau),
            post_count_tau: count_above(&post_detections, tau),
            pre_detections,
            post_detections,
            status: RecordStatus::Ok,
            manual_plausibility: Plausibility::Unjudged,
        }
    }

    pub fn with_environment(mut self, env: impl Into<String>) -> Self {
        self.environment = Some(env.into());
        self
    }

    pub fn with_condition(mut self, condition: impl Into<String>, spec_hash: impl Into<String>) -> Self {
        self.condition = condition.into();
        self.spec_hash = spec_hash.into();
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }

    fn pre_top(&self, tau: f64) -> f64 {
        thresholded_top_confidence(&self.pre_detections, tau)
    }

    fn post_top(&self, tau: f64) -> f64 {
        thresholded_top_confidence(&self.post_detections, tau)
    }

    fn post_count(&self, tau: f64) -> usize {
        count_above(&self.post_detections, tau)
    }

    pub fn is_flip(&self, tau: f64) -> bool {
        self.post_count(tau) == 0
    }
}

/// Highest confidence if it reaches `tau`, else 0. Empty input gives 0.
pub fn thresholded_top_confidence(detections: &[Detection], tau: f64) -> f64 {
    let top = detections.iter().map(|d| d.confidence).fold(f64::NEG_INFINITY, f64::max);
    if top >= tau {
        top
    } else {
        0.0
    }
}

pub fn count_above(detections: &[Detection], tau: f64) -> usize {
    detections.iter().filter(|d| d.confidence >= tau).count()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    Ok(())
}

fn check_nonempty(records: &[OutcomeRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to aggregate".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation; `None` for an empty sample.
///
/// Values are sorted first so the result does not depend on input order.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(MeanStd {
        mean,
        std: var.sqrt(),
    })
}

pub fn flip_count(records: &[OutcomeRecord], tau: f64) -> usize {
    records.iter().filter(|r| r.is_flip(tau)).count()
}

pub fn flip_rate(records: &[OutcomeRecord], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_nonempty(records)?;
    Ok(flip_count(records, tau) as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDrop {
    /// Over all N records (the literal definition).
    pub all: MeanStd,
    /// Over records whose detections persisted; `None` if every record flipped.
    pub persisting: Option<MeanStd>,
    /// Over flipped records; `None` if nothing flipped.
    pub flipped: Option<MeanStd>,
}

pub fn confidence_drop(records: &[OutcomeRecord], tau: f64) -> Result<ConfidenceDrop> {
    check_tau(tau)?;
    check_nonempty(records)?;
    let drop = |r: &OutcomeRecord| r.pre_top(tau) - r.post_top(tau);
    let all: Vec<f64> = records.iter().map(drop).collect();
    let persisting: Vec<f64> = records.iter().filter(|r| !r.is_flip(tau)).map(drop).collect();
    let flipped: Vec<f64> = records.iter().filter(|r| r.is_flip(tau)).map(drop).collect();
    Ok(ConfidenceDrop {
        all: mean_std(&all).expect("non-empty"),
        persisting: mean_std(&persisting),
        flipped: mean_std(&flipped),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistingStats {
    pub count: usize,
    /// Post-perturbation thresholded top confidence over the persisting subset.
    pub stats: Option<MeanStd>,
}

pub fn persisting_stats(records: &[OutcomeRecord], tau: f64) -> PersistingStats {
    let values: Vec<f64> = records.iter().filter(|r| !r.is_flip(tau)).map(|r| r.post_top(tau)).collect();
    PersistingStats {
        count: values.len(),
        stats: mean_std(&values),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupFlips {
    pub n: usize,
    pub flips: usize,
    pub flip_rate: f64,
}

pub fn per_environment_breakdown(records: &[OutcomeRecord], tau: f64) -> Result<BTreeMap<String, GroupFlips>> {
    check_tau(tau)?;
    let mut groups: BTreeMap<String, GroupFlips> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let env = r.environment.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "record {i} ({}) has no environment label",
                r.image_id
            ))
        })?;
        let g = groups.entry(env.clone()).or_insert(GroupFlips {
            n: 0,
            flips: 0,
            flip_rate: 0.0,
        });
        g.n += 1;
        g.flips += r.is_flip(tau) as usize;
    }
    for g in groups.values_mut() {
        g.flip_rate = g.flips as f64 / g.n as f64;
    }
    Ok(groups)
}

/// `post_count_tau - pre_count_tau` per record; positive values are
/// candidates for spurious detections.
pub fn detection_count_delta(records: &[OutcomeRecord]) -> Vec<i64> {
    records
        .iter()
        .map(|r| r.post_count_tau as i64 - r.pre_count_tau as i64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityGroup {
    pub n: usize,
    pub flips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    pub flips: usize,
    pub flip_rate: f64,
    pub cd_all: MeanStd,
    pub cd_persisting: Option<MeanStd>,
    pub persisting: PersistingStats,
    /// Mean thresholded top confidence before perturbation.
    pub pre_conf: MeanStd,
    /// Mean thresholded top confidence after perturbation, over all N.
    pub post_conf_all: MeanStd,
    /// Records gaining detections above tau.
    pub spurious_candidates: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_environment: BTreeMap<String, GroupFlips>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausibility: Option<BTreeMap<String, PlausibilityGroup>>,
    pub tau: f64,
    pub std_convention: String,
}

/// Aggregates one condition. Per-environment groups are filled when every
/// record carries an environment label.
pub fn summarize(records: &[OutcomeRecord], tau: f64) -> Result<MetricsSummary> {
    check_tau(tau)?;
    check_nonempty(records)?;
    let flips = flip_count(records, tau);
    let cd = confidence_drop(records, tau)?;
    let pre: Vec<f64> = records.iter().map(|r| r.pre_top(tau)).collect();
    let post: Vec<f64> = records.iter().map(|r| r.post_top(tau)).collect();
    let per_environment = if records.iter().all(|r| r.environment.is_some()) {
        per_environment_breakdown(records, tau)?
    } else {
        BTreeMap::new()
    };
    let spurious_candidates = records
        .iter()
        .filter(|r| count_above(&r.post_detections, tau) > count_above(&r.pre_detections, tau))
        .count();
    let plausibility = records
        .iter()
        .any(|r| r.manual_plausibility != Plausibility::Unjudged)
        .then(|| plausibility_breakdown(records, tau));
    Ok(MetricsSummary {
        n: records.len(),
        flips,
        flip_rate: flips as f64 / records.len() as f64,
        cd_all: cd.all,
        cd_persisting: cd.persisting,
        persisting: persisting_stats(records, tau),
        pre_conf: mean_std(&pre).expect("non-empty"),
        post_conf_all: mean_std(&post).expect("non-empty"),
        spurious_candidates,
        per_environment,
        plausibility,
        tau,
        std_convention: STD_CONVENTION.into(),
    })
}

pub fn plausibility_breakdown(records: &[OutcomeRecord], tau: f64) -> BTreeMap<String, PlausibilityGroup> {
    let mut out = BTreeMap::new();
    for r in records {
        let key = serde_json::to_value(r.manual_plausibility)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let g = out.entry(key).or_insert(PlausibilityGroup { n: 0, flips: 0 });
        g.n += 1;
        g.flips += r.is_flip(tau) as usize;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BBox;

    fn det(c: f64) -> Detection {
        Detection::new("seal", BBox::new(0, 0, 1, 1), c)
    }

    fn rec(pre: &[f64], post: &[f64]) -> OutcomeRecord {
        OutcomeRecord::new(
            "x",
            pre.iter().map(|&c| det(c)).collect(),
            post.iter().map(|&c| det(c)).collect(),
            DEFAULT_TAU,
        )
    }

    #[test]
    fn thresholded_top_examples() {
        assert_eq!(thresholded_top_confidence(&[det(0.7), det(0.3)], 0.4), 0.7);
        assert_eq!(thresholded_top_confidence(&[], 0.4), 0.0);
        assert_eq!(thresholded_top_confidence(&[det(0.39)], 0.40), 0.0);
        assert_eq!(thresholded_top_confidence(&[det(0.40)], 0.40), 0.40);
    }

    #[test]
    fn flip_rate_examples() {
        let mut records: Vec<_> = (0..36).map(|_| rec(&[0.7], &[])).collect();
        records.extend((0..8).map(|_| rec(&[0.7], &[0.6])));
        assert_eq!(flip_rate(&records, 0.4).unwrap(), 36.0 / 44.0);
        let kept: Vec<_> = (0..5).map(|_| rec(&[0.7], &[0.5])).collect();
        assert_eq!(flip_rate(&kept, 0.4).unwrap(), 0.0);
        assert!(flip_rate(&[], 0.4).is_err());
        assert!(flip_rate(&kept, 1.2).is_err());
    }

    #[test]
    fn confidence_drop_examples() {
        let same = vec![rec(&[0.7], &[0.7]), rec(&[0.5], &[0.5])];
        let cd = confidence_drop(&same, 0.4).unwrap();
        assert_eq!((cd.all.mean, cd.all.std), (0.0, 0.0));
        let one = vec![rec(&[0.696], &[])];
        assert_eq!(confidence_drop(&one, 0.4).unwrap().all.mean, 0.696);
    }

    #[test]
    fn persisting_and_delta() {
        let records = vec![rec(&[0.7], &[]), rec(&[0.7], &[0.5, 0.45, 0.9]), rec(&[0.8, 0.6], &[])];
        let p = persisting_stats(&records, 0.4);
        assert_eq!(p.count, 1);
        assert_eq!(p.stats.unwrap().mean, 0.9);
        assert_eq!(detection_count_delta(&records), vec![-1, 2, -2]);
        assert_eq!(persisting_stats(&[rec(&[0.7], &[])], 0.4).count, 0);
        assert!(persisting_stats(&[], 0.4).stats.is_none());
    }

    #[test]
    fn environment_groups() {
        let records = vec![
            rec(&[0.7], &[]).with_environment("beach"),
            rec(&[0.7], &[0.9]).with_environment("beach"),
            rec(&[0.7], &[0.9]).with_environment("desert"),
        ];
        let g = per_environment_breakdown(&records, 0.4).unwrap();
        assert_eq!(g["beach"].flips, 1);
        assert_eq!(g["beach"].flip_rate, 0.5);
        assert_eq!(g["desert"].flip_rate, 0.0);
        assert!(per_environment_breakdown(&[rec(&[0.5], &[])], 0.4).is_err());
    }

    #[test]
    fn plausibility_parse() {
        assert_eq!("Plausible".parse::<Plausibility>().unwrap(), Plausibility::Plausible);
        assert!("maybe".parse::<Plausibility>().is_err());
    }

    #[test]
    fn record_json_round_trip() {
        let r = rec(&[0.7], &[0.5]).with_environment("beach").with_condition("background", "abc");
        let back: OutcomeRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let failed = OutcomeRecord {
            status: RecordStatus::Failed { error: "timeout".into() },
            ..r
        };
        let json = serde_json::to_string(&failed).unwrap();
        assert!(json.contains(r#""status":{"state":"failed","error":"timeout"}"#));
    }
}
