//! Every environment behind every included image; prints flip rate per
//! environment.

use perturbex::runner::{self, RunConfig, SpecConfig, ALL_ENVIRONMENTS};
use perturbex::synth::{write_blob_dataset, BlobDatasetSpec};

fn main() -> perturbex::Result<()> {
    let dir = std::env::temp_dir().join("perturbex-background");
    let manifest = write_blob_dataset(
        dir.join("data"),
        &BlobDatasetSpec {
            n_images: 5,
            ..BlobDatasetSpec::default()
        },
    )?;
    let mut config = RunConfig::new(manifest, dir.join("run"), vec![SpecConfig::background(ALL_ENVIRONMENTS)]);
    config.backends.inpainter.endpoint = "texture-inpainter".into();
    let result = runner::run(&config)?;
    println!("{} composites", result.records.len());
    for c in result.summary.conditions.values() {
        for (env, g) in c.metrics.iter().flat_map(|m| &m.per_environment) {
            println!("{env:<12} {}/{} flipped", g.flips, g.n);
        }
    }
    Ok(())
}
