//! Command-line driver. Exit codes: 0 success, 2 configuration, 3 backend,
//! 4 I/O.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::backends::server::MockServer;
use crate::backends::{mock, Backends};
use crate::error::{Error, Result};
use crate::perturb::MaskMode;
use crate::report;
use crate::runner::{self, RunConfig};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (wire schema 1)");
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";

#[derive(Debug, Parser)]
#[command(name = "perturbex", version = VERSION, about = "Inpainting-based perturbation explanations for object detectors")]
pub struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Parser)]
pub struct Overrides {
    #[arg(long)]
    pub config: PathBuf,
    /// Mask mode for every perturbation.
    #[arg(long, value_parser = parse_mask_mode)]
    pub mask_mode: Option<MaskMode>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detection pass only; writes detections.jsonl.
    Detect(Overrides),
    /// Full pipeline: detect, perturb, re-detect, summarize.
    Run(Overrides),
    /// One run per point of the config's sweep grid.
    Sweep(Overrides),
    /// Segmentation versus bounding-box mask timing.
    CompareMaskModes {
        #[command(flatten)]
        overrides: Overrides,
        /// Skip the cached replacement rerun.
        #[arg(long)]
        no_replacement: bool,
    },
    /// Render the HTML gallery for a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// CSV with image_id, spec_hash, plausibility.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Serve mock backends over the HTTP schema.
    MockServe {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "blob-detector")]
        detector: String,
        #[arg(long, default_value = "blob-segmenter")]
        segmenter: String,
        #[arg(long, default_value = "fill-inpainter")]
        inpainter: String,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
}

fn parse_mask_mode(s: &str) -> std::result::Result<MaskMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Loads the config, applies flag overrides, validates, and echoes the
/// result to `{output_dir}/effective_config.json`.
pub fn effective_config(o: &Overrides) -> Result<RunConfig> {
    let mut c = RunConfig::load(&o.config)?;
    if let Some(m) = o.mask_mode {
        for p in &mut c.perturbations {
            p.mask_mode = Some(m);
        }
    }
    if let Some(t) = o.tau {
        c.tau = t;
    }
    if let Some(s) = o.seed {
        c.seed = s;
    }
    if let Some(w) = o.workers {
        c.workers = w;
    }
    if let Some(d) = &o.output_dir {
        c.output_dir = d.clone();
    }
    c.validate()?;
    std::fs::create_dir_all(&c.output_dir).map_err(|e| Error::io(&c.output_dir, e))?;
    runner::write_json(&c.output_dir.join(EFFECTIVE_CONFIG_FILE), &c)?;
    Ok(c)
}

fn mock_backends(detector: &str, segmenter: &str, inpainter: &str) -> Result<Backends> {
    Ok(Backends {
        detector: mock::detector_by_name(detector)?.into(),
        segmenter: mock::segmenter_by_name(segmenter)?.into(),
        inpainter: mock::inpainter_by_name(inpainter)?.into(),
    })
}

fn print_summary(result: &runner::RunResult) {
    let s = &result.summary;
    println!(
        "images {}  included {}  excluded {}  tau {}",
        s.n_images,
        s.n_included,
        s.exclusions.len(),
        s.tau
    );
    for (condition, c) in &s.conditions {
        match &c.metrics {
            Some(m) => println!(
                "{condition}: N={} flips={} FR={:.3} CD(all)={:.3}+/-{:.3} failed={} n/a={}",
                m.n, m.flips, m.flip_rate, m.cd_all.mean, m.cd_all.std, c.failed, c.not_applicable
            ),
            None => println!("{condition}: no completed records (failed={} n/a={})", c.failed, c.not_applicable),
        }
    }
    println!("output: {}", result.output_dir.display());
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect(o) => {
            let c = effective_config(&o)?;
            let b = &c.backends;
            let backends = Backends::from_descriptors(&b.detector, &b.segmenter, &b.inpainter)?;
            let lines = runner::detect_only(&c, &backends)?;
            let failed = lines.iter().filter(|l| l.error.is_some()).count();
            println!("{} images, {failed} failed: {}", lines.len(), c.output_dir.join("detections.jsonl").display());
        }
        Command::Run(o) => {
            let c = effective_config(&o)?;
            print_summary(&runner::run(&c)?);
        }
        Command::Sweep(o) => {
            let c = effective_config(&o)?;
            for r in runner::sweep(&c)? {
                println!("[{}]", r.label);
                print_summary(&r.result);
            }
        }
        Command::CompareMaskModes {
            overrides,
            no_replacement,
        } => {
            let c = effective_config(&overrides)?;
            let report = runner::compare_mask_modes(&c, !no_replacement)?;
            for cmp in std::iter::once(&report.removal).chain(report.replacement.as_ref()) {
                println!(
                    "{}: segmentation {:.3}s  bbox {:.3}s  speedup {:.3}x",
                    cmp.perturbation, cmp.segmentation.mean_total_seconds, cmp.bbox.mean_total_seconds, cmp.speedup
                );
            }
        }
        Command::Report { run, annotations } => {
            let result = match annotations {
                Some(csv) => report::import_annotations(csv, &run)?,
                None => runner::RunResult::load(&run)?,
            };
            let g = report::render_gallery(&result, run.join("gallery"))?;
            println!("{} ({} pages, {} warnings)", g.index.display(), g.pages.len(), g.warnings.len());
        }
        Command::MockServe {
            port,
            host,
            detector,
            segmenter,
            inpainter,
            threads,
        } => {
            let backends = mock_backends(&detector, &segmenter, &inpainter)
                .map_err(|e| Error::Config(e.to_string()))?;
            let server = MockServer::start(&format!("{host}:{port}"), backends, threads)?;
            println!("listening on http://{host}:{}", server.port());
            let _ = std::io::stdout().flush();
            server.join();
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}
