//! Render a small labelled synthetic dataset.
//!
//!     cargo run --example synth_dataset -- /tmp/faces

use avaface::dataset::{emit_synth_dataset, SynthDatasetOptions};

fn main() -> avaface::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth-faces".into());
    let opts = SynthDatasetOptions {
        subjects: 6,
        seed: 42,
        ..SynthDatasetOptions::default()
    };
    std::fs::create_dir_all(&out).map_err(|source| avaface::Error::Io {
        path: out.clone().into(),
        source,
    })?;
    let manifest = emit_synth_dataset(&opts, out.as_ref())?;
    for set in manifest.set_labels() {
        let n = manifest.entries.iter().filter(|e| e.pose_set == set).count();
        println!("set {set}: {n} images");
    }
    println!("manifest: {out}/manifest.json");
    Ok(())
}
