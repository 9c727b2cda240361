//! Binary gallery files.
//!
//! Layout (little-endian): magic `AVGL`, u32 version, u32 entry count, then per
//! entry a u32 id length, the UTF-8 id bytes and one `AVFT` template dump.
//! Entries are written in ascending id order, so equal galleries produce
//! identical files.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{read_template, write_template};
use crate::matcher::Gallery;

pub const GALLERY_MAGIC: &[u8; 4] = b"AVGL";
pub const GALLERY_VERSION: u32 = 1;

pub fn write_gallery(g: &Gallery, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(GALLERY_MAGIC)?;
    out.write_all(&GALLERY_VERSION.to_le_bytes())?;
    out.write_all(&(g.len() as u32).to_le_bytes())?;
    for (id, t) in g.iter() {
        out.write_all(&(id.len() as u32).to_le_bytes())?;
        out.write_all(id.as_bytes())?;
        write_template(t, out)?;
    }
    Ok(())
}

pub fn gallery_to_bytes(g: &Gallery) -> Vec<u8> {
    let mut out = Vec::new();
    write_gallery(g, &mut out).expect("writing to a Vec");
    out
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated gallery: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_gallery(input: &mut impl Read) -> Result<Gallery> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("truncated gallery: {e}")))?;
    if &magic != GALLERY_MAGIC {
        return Err(Error::Format("bad gallery magic".into()));
    }
    let version = read_u32(input)?;
    if version != GALLERY_VERSION {
        return Err(Error::Format(format!("unsupported gallery version {version}")));
    }
    let count = read_u32(input)?;
    let mut g = Gallery::new();
    for _ in 0..count {
        let len = read_u32(input)? as usize;
        if len > 4096 {
            return Err(Error::Format(format!("subject id of {len} bytes")));
        }
        let mut id = vec![0u8; len];
        input
            .read_exact(&mut id)
            .map_err(|e| Error::Format(format!("truncated gallery: {e}")))?;
        let id = String::from_utf8(id).map_err(|_| Error::Format("subject id is not UTF-8".into()))?;
        let t = read_template(input)?;
        g.enroll(id, t)
            .map_err(|e| Error::Format(format!("gallery entry rejected: {e}")))?;
    }
    Ok(g)
}

pub fn save_gallery(g: &Gallery, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, gallery_to_bytes(g)).map_err(|e| Error::io(path, e))
}

pub fn load_gallery(path: impl AsRef<Path>) -> Result<Gallery> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_gallery(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{AppearanceDescriptor, FaceTemplate, StructureDescriptor};

    fn toy(v: f64) -> FaceTemplate {
        FaceTemplate::from_patches(
            vec![AppearanceDescriptor::from_values(vec![v, 1.0 - v])],
            vec![StructureDescriptor::from_values(vec![0.25, v])],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_and_determinism() {
        let mut g = Gallery::new();
        g.enroll("zed", toy(0.5)).unwrap();
        g.enroll("amy", toy(0.25)).unwrap();
        let bytes = gallery_to_bytes(&g);
        let back = read_gallery(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, g);
        assert_eq!(gallery_to_bytes(&back), bytes);
        assert!(read_gallery(&mut &bytes[..bytes.len() - 1]).is_err());
        assert!(read_gallery(&mut &b"XXXX"[..]).is_err());
    }
}
