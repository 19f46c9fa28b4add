//! Segmentation versus bounding-box masks with injected service latency.

use perturbex::runner::{self, NativeResolution, Resolution, RunConfig, SpecConfig};
use perturbex::synth::{write_blob_dataset, BlobDatasetSpec};

fn main() -> perturbex::Result<()> {
    let dir = std::env::temp_dir().join("perturbex-timing");
    let manifest = write_blob_dataset(
        dir.join("data"),
        &BlobDatasetSpec {
            n_images: 2,
            ..BlobDatasetSpec::default()
        },
    )?;
    let mut config = RunConfig::new(manifest, dir.join("run"), vec![SpecConfig::replacement("boat")]);
    config.backends.segmenter.delay_ms = 300;
    config.backends.inpainter.delay_ms = 600;
    config.inpaint.target_resolution = Some(Resolution::Named(NativeResolution::Native));
    let report = runner::compare_mask_modes(&config, true)?;
    for cmp in std::iter::once(&report.removal).chain(report.replacement.as_ref()) {
        println!(
            "{:<12} segmentation {:.3}s  bbox {:.3}s  speedup {:.2}x",
            cmp.perturbation, cmp.segmentation.mean_total_seconds, cmp.bbox.mean_total_seconds, cmp.speedup
        );
    }
    Ok(())
}
