//! Serves the mock backends over HTTP and runs the pipeline against them.

use perturbex::backends::server::MockServer;
use perturbex::backends::Backends;
use perturbex::runner::{self, RunConfig, SpecConfig};
use perturbex::synth::{write_blob_dataset, BlobDatasetSpec};

fn main() -> perturbex::Result<()> {
    let server = MockServer::start("127.0.0.1:0", Backends::mock(), 4)?;
    println!("serving on {}", server.url());
    let dir = std::env::temp_dir().join("perturbex-loopback");
    let manifest = write_blob_dataset(
        dir.join("data"),
        &BlobDatasetSpec {
            n_images: 4,
            ..BlobDatasetSpec::default()
        },
    )?;
    let mut config = RunConfig::new(manifest, dir.join("run"), vec![SpecConfig::removal()]);
    for d in [&mut config.backends.detector, &mut config.backends.segmenter, &mut config.backends.inpainter] {
        d.endpoint = server.url();
    }
    let result = runner::run(&config)?;
    println!("backends: {:?}", result.meta.backends);
    println!("records: {}", result.records.len());
    server.shutdown();
    Ok(())
}
