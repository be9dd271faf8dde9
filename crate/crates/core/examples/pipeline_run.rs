//! Run every stage on the bundled reference configuration and list the
//! artifacts by stage.
//!
//! cargo run --release --example pipeline_run -- [out_dir]

use std::collections::BTreeMap;
use std::path::Path;

use resilience::pipeline::{run, PipelineConfig};

fn main() -> resilience::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/reference_synth.json");
    let mut config = PipelineConfig::from_path(&path)?;
    if let Some(out) = std::env::args().nth(1) {
        config.out_dir = out.into();
    }
    let manifest = run(&config)?;
    let mut per_stage: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in &manifest.artifacts {
        per_stage.entry(&a.stage).or_default().push(&a.path);
    }
    for (stage, paths) in per_stage {
        println!("{stage} ({} files)", paths.len());
        for p in paths.iter().take(4) {
            println!("  {p}");
        }
    }
    println!("manifest: {}", config.out_dir.join("manifest.json").display());
    Ok(())
}
