//! Summarizes a records.jsonl from a finished run (or a built-in sample).
//!
//! Usage: `cargo run --example metrics_replay -- [records.jsonl] [tau]`

use perturbex::metrics::{self, OutcomeRecord, DEFAULT_TAU};
use perturbex::runner;
use perturbex::types::{BBox, Detection};

fn sample() -> Vec<OutcomeRecord> {
    let det = |c| Detection::new("seal", BBox::new(4, 4, 10, 8), c);
    (0..10)
        .map(|i| {
            let post = if i < 7 { vec![det(0.21)] } else { vec![det(0.55 + 0.05 * i as f64)] };
            OutcomeRecord::new(format!("img{i:03}"), vec![det(0.62 + 0.03 * i as f64)], post, DEFAULT_TAU)
        })
        .collect()
}

fn main() -> perturbex::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let records = match args.first() {
        Some(path) => runner::read_records(path)?,
        None => sample(),
    };
    let tau = args.get(1).and_then(|t| t.parse().ok()).unwrap_or(DEFAULT_TAU);
    let ok: Vec<OutcomeRecord> = records.into_iter().filter(OutcomeRecord::is_ok).collect();
    let m = metrics::summarize(&ok, tau)?;
    println!("N {}  flips {}  FR {:.3}", m.n, m.flips, m.flip_rate);
    println!("CD over all records   {:.3} +/- {:.3}", m.cd_all.mean, m.cd_all.std);
    if let Some(p) = m.cd_persisting {
        println!("CD over persisting    {:.3} +/- {:.3}", p.mean, p.std);
    }
    println!("post confidence (all) {:.3} +/- {:.3}", m.post_conf_all.mean, m.post_conf_all.std);
    for (env, g) in &m.per_environment {
        println!("  {env:<12} {}/{} ({:.1}%)", g.flips, g.n, 100.0 * g.flip_rate);
    }
    Ok(())
}
