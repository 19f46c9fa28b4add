//! A small guidance/seed grid; prints the flip rate at each point.

use std::collections::BTreeMap;

use perturbex::runner::{self, RunConfig, SpecConfig};
use perturbex::synth::{write_blob_dataset, BlobDatasetSpec};

fn main() -> perturbex::Result<()> {
    let dir = std::env::temp_dir().join("perturbex-sweep");
    let manifest = write_blob_dataset(
        dir.join("data"),
        &BlobDatasetSpec {
            n_images: 4,
            ..BlobDatasetSpec::default()
        },
    )?;
    let mut config = RunConfig::new(manifest, dir.join("run"), vec![SpecConfig::replacement("boat")]);
    config.backends.inpainter.endpoint = "stamp-inpainter:boat".into();
    config.sweep = BTreeMap::from([
        ("guidance_scale".to_string(), vec![10.0, 15.0]),
        ("seed".to_string(), vec![42.0, 123.0]),
    ]);
    for run in runner::sweep(&config)? {
        let fr: Vec<String> = run
            .result
            .summary
            .conditions
            .iter()
            .map(|(k, c)| format!("{k} FR {:.2}", c.metrics.as_ref().map_or(f64::NAN, |m| m.flip_rate)))
            .collect();
        println!("{:<32} {}", run.label, fr.join(", "));
    }
    Ok(())
}
