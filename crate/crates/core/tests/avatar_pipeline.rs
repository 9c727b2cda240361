use avaface::avatar::*;
use avaface::dataset::{render_synth_face, synth_eye_positions, synth_subject};
use avaface::normalize::normalize_face;

#[test]
fn attribute_recovery_on_stratified_sweep() {
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..200 {
        let spec = synth_subject(seed);
        let img = render_synth_face(&spec, 160, 160).unwrap();
        let face = normalize_face(&img, Some(synth_eye_positions(&spec, 160, 160))).unwrap();
        let a = classify_attributes(&face, &face.canonical_eyes());
        let want = (
            FaceShape::from_aspect(spec.params.face_aspect),
            ToneClass::from_luma(spec.params.skin_luma()),
        );
        if (a.face_shape, a.tone_class) == want {
            hits += 1;
        } else {
            misses.push((
                seed,
                a.aspect_ratio,
                spec.params.face_aspect,
                a.skin_tone,
                spec.params.skin_luma(),
            ));
        }
    }
    println!("recovered {hits}/200; misses {misses:?}");
    assert!(hits >= 190, "recovered {hits}/200; misses {misses:?}");
}
