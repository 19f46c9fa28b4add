//! Object removal on a synthetic dataset with the mock backends, then an
//! HTML gallery of the results.

use perturbex::report;
use perturbex::runner::{self, RunConfig, SpecConfig};
use perturbex::synth::{write_blob_dataset, BlobDatasetSpec};

fn main() -> perturbex::Result<()> {
    let dir = std::env::temp_dir().join("perturbex-removal");
    let manifest = write_blob_dataset(dir.join("data"), &BlobDatasetSpec::default())?;
    let config = RunConfig::new(manifest, dir.join("run"), vec![SpecConfig::removal()]);
    let result = runner::run(&config)?;
    for (condition, c) in &result.summary.conditions {
        if let Some(m) = &c.metrics {
            println!("{condition}: FR {:.3}, CD {:.3} +/- {:.3}", m.flip_rate, m.cd_all.mean, m.cd_all.std);
        }
    }
    let gallery = report::render_gallery(&result, dir.join("run/gallery"))?;
    println!("gallery: {}", gallery.index.display());
    Ok(())
}
