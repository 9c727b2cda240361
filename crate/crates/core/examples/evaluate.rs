//! Run the gallery/probe protocol on a generated dataset and print the
//! comparison table for both scoring modes.
//!
//!     cargo run --example evaluate

use avaface::config::PipelineConfig;
use avaface::dataset::{emit_synth_dataset, SynthDatasetOptions};
use avaface::eval::{evaluate_configs, format_table};
use avaface::matcher::ScoringMode;

fn main() -> avaface::Result<()> {
    let dir = std::env::temp_dir().join(format!("avaface-eval-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|source| avaface::Error::Io {
        path: dir.clone(),
        source,
    })?;
    let opts = SynthDatasetOptions {
        sets: ["A", "B", "C", "D"].map(String::from).to_vec(),
        max_pose_deg: 12.0,
        brightness_delta: 0.15,
        ..SynthDatasetOptions::default()
    };
    let manifest = emit_synth_dataset(&opts, &dir)?;

    let patch_mean = PipelineConfig::default();
    let concat = PipelineConfig {
        mode: ScoringMode::Concat,
        ..patch_mean
    };
    let reports = evaluate_configs(&manifest, &[patch_mean, concat])?;
    print!("{}", format_table(&reports));
    for r in &reports {
        for s in r.sets.iter().filter(|s| !s.cmc.is_empty()) {
            let head: Vec<String> = s.cmc.iter().take(5).map(|v| format!("{v:.3}")).collect();
            println!("{} {}: CMC@1..5 {}", r.config_label, s.set_label, head.join(" "));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
