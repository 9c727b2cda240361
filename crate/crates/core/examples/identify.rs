//! Enroll synthetic subjects, then identify and verify perturbed probes.
//!
//!     cargo run --example identify

use avaface::dataset::{render_synth_face, synth_eye_positions, synth_subject};
use avaface::matcher::{identify, verify, Gallery};
use avaface::pipeline::Engine;

const SIZE: usize = 160;

fn main() -> avaface::Result<()> {
    let engine = Engine::default();
    let mut gallery = Gallery::new();
    for seed in 0..8 {
        let spec = synth_subject(seed);
        let img = render_synth_face(&spec, SIZE, SIZE)?;
        let (_, t) = engine.process(&img, Some(synth_eye_positions(&spec, SIZE, SIZE)))?;
        gallery.enroll(format!("subject-{seed}"), t)?;
    }

    let probe_spec = synth_subject(5).with_capture(4.0, 0.96);
    let img = render_synth_face(&probe_spec, SIZE, SIZE)?;
    let (_, probe) = engine.process(&img, Some(synth_eye_positions(&probe_spec, SIZE, SIZE)))?;

    let list = identify(&probe, &gallery, 3, &engine.match_config())?;
    for (rank, s) in list.ranked.iter().enumerate() {
        println!(
            "{}. {:<10} fused {:.4}  appearance {:.4}  structure {:.4}",
            rank + 1,
            s.subject_id,
            s.fused,
            s.appearance_sim,
            s.structure_sim
        );
    }
    for claim in ["subject-5", "subject-2"] {
        let v = verify(&probe, claim, &gallery, 0.97, &engine.match_config())?;
        println!("claim {claim}: {:?} at {:.4}", v.decision, v.score.fused);
    }
    Ok(())
}
