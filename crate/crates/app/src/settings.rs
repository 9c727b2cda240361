//! Pipeline configuration files and shared request plumbing.

use std::path::Path;

use avaface::config::PipelineConfig;
use avaface::normalize::{EyeLandmarks, Point};
use avaface::{Error, Result};

/// Reads a TOML (`.toml`) or JSON config file; absent keys keep their defaults.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let cfg: PipelineConfig = if is_toml {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parses eyes given as `x1,y1,x2,y2` or as JSON `[[x1,y1],[x2,y2]]`.
pub fn parse_eyes(s: &str) -> Result<EyeLandmarks> {
    let s = s.trim();
    let nums: Vec<f64> = if s.starts_with('[') {
        let v: [[f64; 2]; 2] = serde_json::from_str(s).map_err(|e| Error::Format(format!("eyes: {e}")))?;
        vec![v[0][0], v[0][1], v[1][0], v[1][1]]
    } else {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("eyes: bad number `{t}`")))
            })
            .collect::<Result<_>>()?
    };
    match nums[..] {
        [x1, y1, x2, y2] if nums.iter().all(|v| v.is_finite()) => {
            Ok(EyeLandmarks::new(Point::new(x1, y1), Point::new(x2, y2)))
        }
        _ => Err(Error::Format("eyes must be four finite numbers x1,y1,x2,y2".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eyes_in_both_spellings() {
        let a = parse_eyes("56, 71.5,104,71.5").unwrap();
        let b = parse_eyes("[[56,71.5],[104,71.5]]").unwrap();
        assert_eq!(a, b);
        assert!(parse_eyes("1,2,3").is_err());
        assert!(parse_eyes("1,2,3,nan").is_err());
    }

    #[test]
    fn toml_and_json_configs() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(
            &t,
            "mode = \"concat\"\nk = 3\n[weights]\nappearance = 0.7\nstructure = 0.3\n",
        )
        .unwrap();
        let cfg = load_config(&t).unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.weights.appearance, 0.7);
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"stride": 8}"#).unwrap();
        assert_eq!(load_config(&j).unwrap().stride, 8);
        std::fs::write(&j, r#"{"stride": 7}"#).unwrap();
        assert!(matches!(load_config(&j), Err(Error::Config(_))));
    }
}
