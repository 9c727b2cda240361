//! Classify a face, derive morph weights and export a textured OBJ head.
//!
//!     cargo run --example avatar -- out-dir [face.png]

use avaface::avatar::{build_avatar, export_obj, generate_head_mesh, obj_string, TextureMode};
use avaface::dataset::{render_synth_face, synth_eye_positions, synth_subject};
use avaface::imaging::load_image;
use avaface::normalize::normalize_face;

fn main() -> avaface::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "avatar-out".into());
    let face = match args.next() {
        Some(path) => normalize_face(&load_image(path)?, None)?,
        None => {
            let spec = synth_subject(17);
            let img = render_synth_face(&spec, 160, 160)?;
            normalize_face(&img, Some(synth_eye_positions(&spec, 160, 160)))?
        }
    };
    let avatar = build_avatar(&face, TextureMode::Projected);
    let a = &avatar.attributes;
    println!(
        "shape {:?} (aspect {:.3}), tone {:?} {:?}, eye spacing {:.3}, body {}",
        a.face_shape, a.aspect_ratio, a.tone_class, a.skin_tone, a.eye_spacing_ratio, a.suggested_body
    );
    println!("weights {:?}", avatar.params.morph_weights);
    export_obj(&avatar.mesh, &avatar.texture, &out)?;
    println!(
        "wrote {out}/model.obj ({} vertices, {} triangles)",
        avatar.mesh.vertices.len(),
        avatar.mesh.triangles.len()
    );

    // Editing a weight only re-poses the mesh; the topology never changes.
    let mut params = avatar.params;
    params.morph_weights.set("jaw_length", 1.0)?;
    let edited = generate_head_mesh(&params);
    println!("edited OBJ is {} bytes", obj_string(&edited).len());
    Ok(())
}
