//! Distance correlation and transfer entropy between parameter trajectories,
//! written as CSV and SVG heatmaps.
//!
//!     cargo run --release --example coupling_matrices -- [A-E] [out_dir]

use std::path::PathBuf;

use koopdrift::config::RunConfig;
use koopdrift::coupling::matrix_csv;
use koopdrift::datasets::DriftKind;
use koopdrift::{pipeline, svg};

fn main() -> koopdrift::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: DriftKind = args.next().as_deref().unwrap_or("B").parse()?;
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "coupling_out".into()));
    let mut cfg = RunConfig::new(kind);
    cfg.cold_ablation = false;
    let train = pipeline::train(&cfg)?;
    let c = pipeline::couple(&cfg, &train)?;

    println!("{kind}: window {:?}, {} parameters", c.window, c.names.len());
    println!("  mean off-diagonal dCor {:.3}, pairs above 0.5: {:.1}%", c.dcor_mean_offdiag, 100.0 * c.dcor_frac_above_half);
    match c.te_ratio_l1_l2 {
        Some(r) => println!("  transfer entropy layer1->layer2 / layer2->layer1 = {r:.3}"),
        None => println!("  no information flows from layer 2 to layer 1"),
    }
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("dcor.csv"), matrix_csv(&c.names, &c.dcor_matrix))?;
    std::fs::write(dir.join("te.csv"), matrix_csv(&c.names, &c.te_matrix))?;
    std::fs::write(dir.join("dcor.svg"), svg::heatmap("distance correlation", &c.names, &c.dcor_matrix, c.layer1_len, 1.0, ""))?;
    let vmax = c.te_matrix.iter().flatten().copied().fold(0.0, f64::max).max(1e-12);
    std::fs::write(dir.join("te.svg"), svg::heatmap("normalized transfer entropy", &c.names, &c.te_matrix, c.layer1_len, vmax, ""))?;
    println!("  wrote matrices and heatmaps to {}", dir.display());
    Ok(())
}
