//! Review artifacts: detection overlays, a static HTML gallery, and the
//! plausibility-annotation round trip.
//!
//! The gallery is self-contained (`gallery/index.html`, one page per
//! condition, images copied under `gallery/img/`) and uses relative links
//! only. Regenerating it from the same run gives identical bytes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::{self, OutcomeRecord, Plausibility, RecordStatus};
use crate::raster;
use crate::runner::{self, RunResult};
use crate::types::{Detection, RasterImage};

pub const SOLID_COLOR: [u8; 3] = [255, 214, 0];
pub const DASHED_COLOR: [u8; 3] = [0, 200, 255];
/// Dash pattern along the perimeter: `DASH_ON` pixels drawn, then a gap.
pub const DASH_ON: usize = 3;
pub const DASH_PERIOD: usize = 5;

/// Perimeter pixels of `det`'s box (clamped to the frame), clockwise from
/// the top-left corner. Boxes below `tau` keep only the dash pixels.
pub fn stroke_pixels(det: &Detection, width: u32, height: u32, tau: f64) -> Vec<(u32, u32)> {
    let Some(b) = det.bbox.clamp_to(width, height) else {
        return Vec::new();
    };
    let (x0, y0) = (b.x as u32, b.y as u32);
    let (x1, y1) = (x0 + b.w - 1, y0 + b.h - 1);
    let mut ring = Vec::new();
    for x in x0..=x1 {
        ring.push((x, y0));
    }
    for y in y0 + 1..=y1 {
        ring.push((x1, y));
    }
    if y1 > y0 {
        for x in (x0..x1).rev() {
            ring.push((x, y1));
        }
    }
    if x1 > x0 {
        for y in (y0 + 1..y1).rev() {
            ring.push((x0, y));
        }
    }
    if det.confidence >= tau {
        ring
    } else {
        ring.into_iter()
            .enumerate()
            .filter(|(k, _)| k % DASH_PERIOD < DASH_ON)
            .map(|(_, p)| p)
            .collect()
    }
}

/// Draws 1-px box outlines: solid for detections at or above `tau`, dashed
/// below. Only stroke pixels change; confidence labels are left to the
/// HTML layer.
pub fn draw_detections(image: &RasterImage, detections: &[Detection], tau: f64) -> RasterImage {
    let mut out = image.clone();
    for d in detections {
        let color = if d.confidence >= tau { SOLID_COLOR } else { DASHED_COLOR };
        for (x, y) in stroke_pixels(d, image.width(), image.height(), tau) {
            out.set_pixel(x, y, color);
        }
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// File-name-safe form of a condition label.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryReport {
    pub index: PathBuf,
    pub pages: Vec<PathBuf>,
    /// Missing artifacts, one line each.
    pub warnings: Vec<String>,
}

const STYLE: &str = "body{font-family:sans-serif;margin:1.5em}\
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:4px;vertical-align:top}\
.frame{position:relative;display:inline-block}.frame img{display:block;image-rendering:pixelated}\
.conf{position:absolute;font-size:10px;background:rgba(0,0,0,.6);color:#fff;padding:0 2px}\
.below{color:#7fdfff}.badge{font-weight:bold;padding:1px 6px;border-radius:3px;color:#fff}\
.flip{background:#c0392b}.spurious{background:#8e44ad}.status{background:#7f8c8d}\
.missing{width:96px;height:96px;background:#eee;color:#999;display:flex;align-items:center;justify-content:center}";

struct Cell {
    src: Option<String>,
    labels: Vec<(i64, i64, f64, bool)>,
}

fn frame(cell: &Cell, alt: &str) -> String {
    let Some(src) = &cell.src else {
        return format!("<div class=\"missing\">missing {}</div>", escape(alt));
    };
    let mut s = format!("<div class=\"frame\"><img src=\"{}\" alt=\"{}\">", escape(src), escape(alt));
    for &(x, y, c, above) in &cell.labels {
        let class = if above { "conf" } else { "conf below" };
        let _ = write!(s, "<span class=\"{class}\" style=\"left:{x}px;top:{}px\">{c:.3}</span>", (y - 12).max(0));
    }
    s.push_str("</div>");
    s
}

fn labels(dets: &[Detection], tau: f64) -> Vec<(i64, i64, f64, bool)> {
    dets.iter().map(|d| (d.bbox.x, d.bbox.y, d.confidence, d.confidence >= tau)).collect()
}

/// Writes overlay and mask images for one record; `None` cells mark
/// missing artifacts.
fn stage_images(
    run_dir: &Path,
    gallery: &Path,
    r: &OutcomeRecord,
    tau: f64,
    warnings: &mut Vec<String>,
) -> Result<[Cell; 3]> {
    let src = RunResult::artifact_dir(run_dir, &r.image_id, &r.spec_hash);
    let rel = format!("img/{}/{}", r.image_id, r.spec_hash);
    let dst = gallery.join(&rel);
    let mut load = |name: &str| -> Option<Vec<u8>> {
        let p = src.join(name);
        match std::fs::read(&p) {
            Ok(b) => Some(b),
            Err(_) => {
                warnings.push(format!("{} [{}]: missing {}", r.image_id, r.spec_hash, name));
                None
            }
        }
    };
    let original = load("original.png");
    let mask = load("mask.png");
    let perturbed = load("perturbed.png");
    std::fs::create_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
    let overlay = |bytes: Option<Vec<u8>>, dets: &[Detection], name: &str| -> Result<Cell> {
        let Some(bytes) = bytes else {
            return Ok(Cell { src: None, labels: vec![] });
        };
        let img = raster::decode_image(&bytes)?;
        raster::write_image(&draw_detections(&img, dets, tau), dst.join(name))?;
        Ok(Cell {
            src: Some(format!("{rel}/{name}")),
            labels: labels(dets, tau),
        })
    };
    let pre = overlay(original, &r.pre_detections, "pre.png")?;
    let post = overlay(perturbed, &r.post_detections, "post.png")?;
    let mask_cell = match mask {
        Some(bytes) => {
            let p = dst.join("mask.png");
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            Cell {
                src: Some(format!("{rel}/mask.png")),
                labels: vec![],
            }
        }
        None => Cell { src: None, labels: vec![] },
    };
    Ok([pre, mask_cell, post])
}

fn badges(r: &OutcomeRecord, tau: f64) -> String {
    let mut s = String::new();
    match &r.status {
        RecordStatus::Ok => {
            if r.is_flip(tau) {
                s.push_str("<span class=\"badge flip\">FLIP</span> ");
            }
            let delta = r.post_count_tau as i64 - r.pre_count_tau as i64;
            if delta > 0 {
                let _ = write!(s, "<span class=\"badge spurious\">SPURIOUS +{delta}</span> ");
            }
        }
        RecordStatus::Failed { error } => {
            let _ = write!(s, "<span class=\"badge status\">FAILED</span> {}", escape(error));
        }
        RecordStatus::NotApplicable { reason } => {
            let _ = write!(s, "<span class=\"badge status\">N/A</span> {}", escape(reason));
        }
    }
    s
}

fn row(r: &OutcomeRecord, cells: &[Cell; 3], tau: f64) -> String {
    let mut s = String::from("<tr>");
    let _ = write!(
        s,
        "<td><b>{}</b><br><code>{}</code><br>{}<br>pre {:.3} / post {:.3}<br>{}</td>",
        escape(&r.image_id),
        escape(&r.spec_hash),
        escape(&r.perturbation),
        r.pre_top_tau,
        r.post_top_tau,
        badges(r, tau)
    );
    for (cell, alt) in cells.iter().zip(["original", "mask", "perturbed"]) {
        let _ = write!(s, "<td>{}</td>", frame(cell, alt));
    }
    s.push_str("</tr>\n");
    s
}

const TABLE_HEAD: &str = "<table>\n<tr><th>record</th><th>original + detections</th><th>mask</th><th>perturbed + detections</th></tr>\n";

fn page_header(condition: &str, result: &RunResult) -> String {
    let mut s = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{0}</title><style>{STYLE}</style></head><body>\n<p><a href=\"index.html\">index</a></p>\n<h1>{0}</h1>\n",
        escape(condition)
    );
    if let Some(report) = result.summary.conditions.get(condition) {
        let _ = write!(
            s,
            "<p>attempted {}, failed {}, not applicable {}</p>\n",
            report.attempted, report.failed, report.not_applicable
        );
        if let Some(m) = &report.metrics {
            let _ = write!(
                s,
                "<p>N = {}, flips = {}, flip rate = {}, CD (all) = {:.3} &plusmn; {:.3}, tau = {}</p>\n",
                m.n,
                m.flips,
                pct(m.flip_rate),
                m.cd_all.mean,
                m.cd_all.std,
                m.tau
            );
        }
    }
    s
}

/// Writes the gallery under `out_dir`.
pub fn render_gallery(result: &RunResult, out_dir: impl AsRef<Path>) -> Result<GalleryReport> {
    let gallery = out_dir.as_ref();
    std::fs::create_dir_all(gallery).map_err(|e| Error::io(gallery, e))?;
    let tau = result.summary.tau;
    let mut warnings = Vec::new();
    let mut by_condition: BTreeMap<&str, Vec<&OutcomeRecord>> = BTreeMap::new();
    for r in &result.records {
        by_condition.entry(&r.condition).or_default().push(r);
    }
    let mut pages = Vec::new();
    let mut index = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>gallery</title><style>{STYLE}</style></head><body>\n<h1>Run gallery</h1>\n<p>images {}, included {}, excluded {}; tau = {}</p>\n<table>\n<tr><th>condition</th><th>N</th><th>flips</th><th>flip rate</th><th>CD (all)</th></tr>\n",
        result.summary.n_images,
        result.summary.n_included,
        result.summary.exclusions.len(),
        tau
    );
    for (condition, mut records) in by_condition {
        records.sort_by(|a, b| {
            (a.environment.as_deref(), &a.image_id, &a.spec_hash).cmp(&(b.environment.as_deref(), &b.image_id, &b.spec_hash))
        });
        let file = format!("{}.html", slug(condition));
        let mut html = page_header(condition, result);
        let grouped = records.iter().all(|r| r.environment.is_some());
        if grouped {
            let ok: Vec<OutcomeRecord> = records.iter().filter(|r| r.is_ok()).map(|r| (*r).clone()).collect();
            let groups = metrics::per_environment_breakdown(&ok, tau)?;
            let mut current: Option<&str> = None;
            for r in &records {
                let env = r.environment.as_deref().unwrap_or_default();
                if current != Some(env) {
                    if current.is_some() {
                        html.push_str("</table>\n");
                    }
                    match groups.get(env) {
                        Some(g) => {
                            let _ = write!(html, "<h2>{}: {}/{} flipped ({})</h2>\n", escape(env), g.flips, g.n, pct(g.flip_rate));
                        }
                        None => {
                            let _ = write!(html, "<h2>{}: no completed records</h2>\n", escape(env));
                        }
                    }
                    html.push_str(TABLE_HEAD);
                    current = Some(env);
                }
                let cells = stage_images(&result.output_dir, gallery, r, tau, &mut warnings)?;
                html.push_str(&row(r, &cells, tau));
            }
            if current.is_some() {
                html.push_str("</table>\n");
            }
        } else {
            html.push_str(TABLE_HEAD);
            for r in &records {
                let cells = stage_images(&result.output_dir, gallery, r, tau, &mut warnings)?;
                html.push_str(&row(r, &cells, tau));
            }
            html.push_str("</table>\n");
        }
        html.push_str("</body></html>\n");
        let path = gallery.join(&file);
        std::fs::write(&path, html).map_err(|e| Error::io(&path, e))?;
        pages.push(path);

        let m = result.summary.conditions.get(condition).and_then(|c| c.metrics.as_ref());
        let _ = write!(
            index,
            "<tr><td><a href=\"{}\">{}</a></td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>\n",
            escape(&file),
            escape(condition),
            m.map_or(0, |m| m.n),
            m.map_or(0, |m| m.flips),
            m.map_or_else(String::new, |m| pct(m.flip_rate)),
            m.map_or_else(String::new, |m| format!("{:.3} &plusmn; {:.3}", m.cd_all.mean, m.cd_all.std)),
        );
    }
    index.push_str("</table>\n");
    if !warnings.is_empty() {
        index.push_str("<h2>Warnings</h2>\n<ul>\n");
        for w in &warnings {
            let _ = writeln!(index, "<li>{}</li>", escape(w));
        }
        index.push_str("</ul>\n");
    }
    index.push_str("</body></html>\n");
    let index_path = gallery.join("index.html");
    std::fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    for w in &warnings {
        log::warn!("gallery: {w}");
    }
    Ok(GalleryReport {
        index: index_path,
        pages,
        warnings,
    })
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    image_id: String,
    spec_hash: String,
    plausibility: String,
}

/// Parses an annotations CSV (`image_id,spec_hash,plausibility`). Rows are
/// numbered from 1, header excluded.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<(String, String, Plausibility)>> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(data.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| Error::Annotation { row: 0, message: e.to_string() })?
        .clone();
    for col in ["image_id", "spec_hash", "plausibility"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Annotation {
                row: 0,
                message: format!("missing column {col:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<AnnotationRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Annotation {
            row: row_no,
            message: e.to_string(),
        })?;
        let label = row.plausibility.parse::<Plausibility>().map_err(|_| Error::Annotation {
            row: row_no,
            message: format!("invalid plausibility {:?} (plausible|implausible|unjudged)", row.plausibility),
        })?;
        out.push((row.image_id, row.spec_hash, label));
    }
    Ok(out)
}

/// Applies annotations to `records`; all rows are checked before any
/// record changes. Returns the number of rows applied.
pub fn apply_annotations(records: &mut [OutcomeRecord], rows: &[(String, String, Plausibility)]) -> Result<usize> {
    let index: HashMap<(&str, &str), usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.image_id.as_str(), r.spec_hash.as_str()), i))
        .collect();
    let mut targets = Vec::with_capacity(rows.len());
    for (n, (id, hash, label)) in rows.iter().enumerate() {
        let i = *index.get(&(id.as_str(), hash.as_str())).ok_or_else(|| Error::Annotation {
            row: n + 1,
            message: format!("no record for image_id {id:?}, spec_hash {hash:?}"),
        })?;
        targets.push((i, *label));
    }
    for &(i, label) in &targets {
        records[i].manual_plausibility = label;
    }
    Ok(targets.len())
}

/// Imports annotations into a finished run, rewriting `records.jsonl` and
/// the summaries with the plausibility breakdown.
pub fn import_annotations(csv_path: impl AsRef<Path>, run_dir: impl AsRef<Path>) -> Result<RunResult> {
    let mut result = RunResult::load(run_dir)?;
    let rows = read_annotations(csv_path)?;
    if rows.is_empty() {
        return Ok(result);
    }
    apply_annotations(&mut result.records, &rows)?;
    result.summary.conditions = runner::summarize_conditions(&result.records, result.summary.tau)?;
    let dir = result.output_dir.clone();
    runner::write_records(&dir.join(runner::RECORDS_FILE), &result.records)?;
    runner::write_json(&dir.join(runner::SUMMARY_FILE), &result.summary)?;
    runner::write_summary_csv(&dir.join(runner::SUMMARY_CSV), &result.summary)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BBox;

    fn img() -> RasterImage {
        RasterImage::filled(12, 10, [10, 20, 30]).unwrap()
    }

    #[test]
    fn empty_detections_leave_image_unchanged() {
        assert_eq!(draw_detections(&img(), &[], 0.4), img());
    }

    #[test]
    fn only_stroke_pixels_change() {
        let d = Detection::new("seal", BBox::new(2, 3, 5, 4), 0.9);
        let out = draw_detections(&img(), &[d], 0.4);
        for y in 0..10 {
            for x in 0..12 {
                let on_border = (2..=6).contains(&x) && (3..=6).contains(&y) && (x == 2 || x == 6 || y == 3 || y == 6);
                assert_eq!(out.pixel(x, y) != img().pixel(x, y), on_border, "({x},{y})");
            }
        }
    }

    #[test]
    fn below_tau_is_dashed() {
        let d = Detection::new("seal", BBox::new(0, 0, 10, 10), 0.2);
        let solid = stroke_pixels(&Detection { confidence: 0.9, ..d.clone() }, 12, 10, 0.4);
        let dashed = stroke_pixels(&d, 12, 10, 0.4);
        assert_eq!(solid.len(), 36);
        assert!(dashed.len() < solid.len() && !dashed.is_empty());
        let out = draw_detections(&img(), &[d], 0.4);
        assert_eq!(out.pixel(0, 0), DASHED_COLOR);
    }

    #[test]
    fn degenerate_boxes() {
        let line = Detection::new("seal", BBox::new(1, 1, 4, 1), 0.9);
        assert_eq!(stroke_pixels(&line, 12, 10, 0.4).len(), 4);
        let dot = Detection::new("seal", BBox::new(1, 1, 1, 1), 0.9);
        assert_eq!(stroke_pixels(&dot, 12, 10, 0.4), vec![(1, 1)]);
    }

    #[test]
    fn annotation_errors() {
        let mut records = vec![OutcomeRecord::new("a", vec![], vec![], 0.4).with_condition("c", "h1")];
        let ok = vec![("a".to_string(), "h1".to_string(), Plausibility::Plausible)];
        assert_eq!(apply_annotations(&mut records, &ok).unwrap(), 1);
        assert_eq!(records[0].manual_plausibility, Plausibility::Plausible);
        let unknown = vec![("b".to_string(), "h1".to_string(), Plausibility::Plausible)];
        let err = apply_annotations(&mut records, &unknown).unwrap_err();
        assert!(matches!(err, Error::Annotation { row: 1, .. }), "{err}");

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "image_id,spec_hash,plausibility\na,h1,maybe\n").unwrap();
        assert!(matches!(read_annotations(&p), Err(Error::Annotation { row: 1, .. })));
        std::fs::write(&p, "").unwrap();
        assert!(read_annotations(&p).unwrap().is_empty());
        std::fs::write(&p, "image_id,spec_hash,plausibility\n").unwrap();
        assert!(read_annotations(&p).unwrap().is_empty());
    }
}
