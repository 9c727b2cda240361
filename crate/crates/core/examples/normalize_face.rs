//! Align a face to the 128x128 canonical frame and equalize it.
//!
//!     cargo run --example normalize_face -- photo.png aligned.png
//!
//! Without arguments a synthetic face is used and the located eyes are
//! compared with the generator's ground truth.

use avaface::dataset::{render_synth_face, synth_eye_positions, synth_subject};
use avaface::imaging::{load_image, save_image};
use avaface::normalize::{locate_eyes, normalize_face};

fn main() -> avaface::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (img, truth) = match args.first() {
        Some(path) => (load_image(path)?, None),
        None => {
            let spec = synth_subject(11);
            (
                render_synth_face(&spec, 200, 200)?,
                Some(synth_eye_positions(&spec, 200, 200)),
            )
        }
    };
    let eyes = locate_eyes(&img, None)?;
    println!(
        "eyes at ({:.1}, {:.1}) and ({:.1}, {:.1})",
        eyes.left.x, eyes.left.y, eyes.right.x, eyes.right.y
    );
    if let Some(t) = truth {
        println!(
            "error {:.2} px / {:.2} px",
            eyes.left.distance(&t.left),
            eyes.right.distance(&t.right)
        );
    }
    let face = normalize_face(&img, Some(eyes))?;
    let out = args.get(1).map(String::as_str).unwrap_or("aligned.png");
    save_image(face.image(), out)?;
    println!("wrote {out}");
    Ok(())
}
