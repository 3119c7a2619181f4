//! Runs every stage on all six datasets and prints the summary table.
//!
//!     cargo run --release --example full_pipeline -- [seed]

use koopdrift::config::RunConfig;
use koopdrift::datasets::DriftKind;
use koopdrift::pipeline::{self, TABLE_HEADER};

fn main() -> koopdrift::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rows = Vec::new();
    for kind in DriftKind::ALL {
        let mut cfg = RunConfig::new(kind);
        cfg.seed = seed;
        eprintln!("running {kind}");
        rows.push(pipeline::run_all(&cfg)?.table_row());
    }
    println!("{TABLE_HEADER}");
    for r in rows {
        println!("{r}");
    }
    Ok(())
}
