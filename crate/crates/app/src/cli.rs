//! `avaface` command line.
//!
//! JSON results go to stdout, human-readable tables and progress to stderr.
//! Exit codes: 0 success, 1 I/O, 2 usage or protocol error, 3 internal
//! invariant failure.

use std::ffi::OsString;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use avaface::avatar::{build_avatar, export_obj, TextureMode};
use avaface::config::PipelineConfig;
use avaface::dataset::{emit_synth_dataset, load_manifest, split_gallery_probe, SynthDatasetOptions};
use avaface::eval::{cmc_csv, evaluate_configs, format_table, summary_csv};
use avaface::gallery_file::{load_gallery, save_gallery};
use avaface::imaging::{load_image, save_image};
use avaface::matcher::{identify, FusionWeights, Gallery, ScoringMode};
use avaface::normalize::NormalizedFace;
use avaface::pipeline::Engine;
use avaface::Error;
use rayon::prelude::*;

use crate::service::{serve, ServiceOptions};
use crate::settings::{load_config, parse_eyes};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "avaface", version, about = "Face identification and avatar generation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline config file (TOML or JSON); flags below override it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Patch stride in pixels [default: 16]
    #[arg(long, global = true, value_name = "PX")]
    pub grid_stride: Option<usize>,
    /// Similarity mode [default: patch-mean]
    #[arg(long, global = true, value_name = "concat|patch-mean")]
    pub mode: Option<ScoringMode>,
    /// Fusion weights `appearance,structure`, summing to 1 [default: 0.5,0.5]
    #[arg(long, global = true, value_name = "A,S", allow_hyphen_values = true)]
    pub weights: Option<FusionWeights>,
    /// Candidate list length [default: 5]
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// Generator seed for `synth` [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write each aligned 128x128 face as PNG into this directory
    #[arg(long, global = true, value_name = "DIR")]
    pub dump_normalized: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a gallery file from the set-A frontal of every subject in a manifest
    Enroll {
        #[arg(long)]
        manifest: PathBuf,
        /// Gallery file to write
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Rank gallery subjects against one probe image (JSON on stdout)
    Identify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        /// Eye centers `x1,y1,x2,y2`; located automatically when omitted
        #[arg(long)]
        eyes: Option<String>,
    },
    /// Run the gallery/probe protocol and print the comparison table
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for eval_summary.csv and eval_cmc.csv
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Add a column for the other scoring mode
        #[arg(long)]
        compare_modes: bool,
        /// Extra config files, one table column each
        #[arg(long = "also", value_name = "FILE")]
        also: Vec<PathBuf>,
    },
    /// Generate an avatar (model.obj, model.mtl, texture.png, attributes.json)
    Avatar {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        eyes: Option<String>,
        #[arg(long, default_value = "projected", value_name = "projected|flat")]
        texture_mode: TextureMode,
    },
    /// Render a synthetic dataset with ground-truth eyes and a manifest
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        subjects: usize,
        /// Comma-separated set labels; the first is the frontal gallery set
        #[arg(long, default_value = "A,B,C", value_delimiter = ',')]
        sets: Vec<String>,
        /// Probes per subject in every set after the first
        #[arg(long, default_value_t = 4)]
        per_set: usize,
        #[arg(long, default_value_t = 160)]
        size: usize,
        /// Largest in-plane rotation of a probe, degrees
        #[arg(long, default_value_t = 5.0)]
        max_pose: f64,
        /// Largest relative brightness change of a probe
        #[arg(long, default_value_t = 0.05)]
        brightness: f64,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Persist gallery, faces and sessions here
        #[arg(long)]
        state_dir: Option<PathBuf>,
        /// Gallery file to load at startup
        #[arg(long)]
        gallery: Option<PathBuf>,
        /// Static viewer bundle served at `/`
        #[arg(long)]
        viewer_dir: Option<PathBuf>,
    },
}

impl GlobalArgs {
    /// Defaults, then the config file, then individual flags.
    pub fn resolve(&self) -> avaface::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.grid_stride {
            cfg.stride = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(w) = self.weights {
            cfg.weights = w;
        }
        if let Some(k) = self.k {
            cfg.k = k as usize;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "avaface: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    let code = run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    let _ = std::io::stdout().flush();
    code
}

fn dump(dir: Option<&Path>, name: &str, face: &NormalizedFace) -> avaface::Result<()> {
    let Some(dir) = dir else { return Ok(()) };
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    save_image(face.image(), dir.join(format!("{name}.png")))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn out_line(stdout: &mut dyn std::io::Write, text: &str) -> avaface::Result<()> {
    writeln!(stdout, "{text}").map_err(io_err(Path::new("<stdout>")))
}

fn execute(cli: &Cli, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> avaface::Result<()> {
    let g = &cli.global;
    let dump_dir = g.dump_normalized.as_deref();
    match &cli.command {
        Command::Enroll { manifest, out } => {
            let engine = Engine::new(g.resolve()?)?;
            let m = load_manifest(manifest)?;
            if m.entries.is_empty() {
                return Err(Error::Protocol(format!(
                    "manifest {} has no entries",
                    manifest.display()
                )));
            }
            let (gallery_entries, _) = split_gallery_probe(&m)?;
            let processed: Vec<_> = gallery_entries
                .par_iter()
                .map(|e| {
                    let img = load_image(&e.path)?;
                    engine.process(&img, e.eyes).map_err(|err| match err {
                        Error::Io { .. } => err,
                        other => Error::Protocol(format!("{}: {other}", e.path.display())),
                    })
                })
                .collect::<avaface::Result<_>>()?;
            let mut gallery = Gallery::new();
            for (e, (face, t)) in gallery_entries.iter().zip(processed) {
                dump(dump_dir, &e.subject_id, &face)?;
                gallery.enroll(e.subject_id.clone(), t.quantized())?;
            }
            save_gallery(&gallery, out)?;
            let _ = writeln!(stderr, "enrolled {} subjects into {}", gallery.len(), out.display());
            out_line(
                stdout,
                &json!({"gallery": out.display().to_string(), "subjects": gallery.len()}).to_string(),
            )
        }
        Command::Identify { image, gallery, eyes } => {
            let cfg = g.resolve()?;
            let eyes = eyes.as_deref().map(parse_eyes).transpose()?;
            let engine = Engine::new(cfg)?;
            let gallery = load_gallery(gallery)?;
            let img = load_image(image)?;
            let (face, template) = engine.process(&img, eyes)?;
            dump(dump_dir, &file_stem(image), &face)?;
            let list = identify(&template, &gallery, cfg.k, &engine.match_config())?;
            out_line(stdout, &list.to_json(&image.display().to_string()))
        }
        Command::Evaluate {
            manifest,
            out_dir,
            compare_modes,
            also,
        } => {
            let base = g.resolve()?;
            let mut configs = vec![base];
            if *compare_modes {
                let mut other = base;
                other.mode = match base.mode {
                    ScoringMode::Concat => ScoringMode::PatchMean,
                    ScoringMode::PatchMean => ScoringMode::Concat,
                };
                configs.push(other);
            }
            for p in also {
                configs.push(load_config(p)?);
            }
            let m = load_manifest(manifest)?;
            let reports = evaluate_configs(&m, &configs)?;
            let _ = write!(stderr, "{}", format_table(&reports));
            for r in &reports {
                if r.degenerate_gallery {
                    let _ = writeln!(
                        stderr,
                        "warning: gallery of {} subject(s); rank-1 is trivial",
                        r.gallery_size
                    );
                }
                for x in &r.exclusions {
                    let _ = writeln!(stderr, "excluded {}: {}", x.path.display(), x.reason);
                }
            }
            std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
            let summary = out_dir.join("eval_summary.csv");
            std::fs::write(&summary, summary_csv(&reports)).map_err(io_err(&summary))?;
            let cmc = out_dir.join("eval_cmc.csv");
            std::fs::write(&cmc, cmc_csv(&reports)).map_err(io_err(&cmc))?;
            let body: Vec<_> = reports
                .iter()
                .map(|r| {
                    json!({
                        "config": r.config_label,
                        "gallery_size": r.gallery_size,
                        "degenerate_gallery": r.degenerate_gallery,
                        "sets": r.sets.iter().map(|s| json!({
                            "set": s.set_label,
                            "images": s.probe_count,
                            "excluded": s.excluded,
                            "rank1": s.rank1_accuracy(),
                            "rank5": s.cmc_at(5),
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect();
            out_line(stdout, &serde_json::Value::Array(body).to_string())
        }
        Command::Avatar {
            image,
            out_dir,
            eyes,
            texture_mode,
        } => {
            let eyes = eyes.as_deref().map(parse_eyes).transpose()?;
            let engine = Engine::new(g.resolve()?)?;
            let img = load_image(image)?;
            let face = engine.normalize(&img, eyes)?;
            dump(dump_dir, &file_stem(image), &face)?;
            let avatar = build_avatar(&face, *texture_mode);
            export_obj(&avatar.mesh, &avatar.texture, out_dir)?;
            let body = avatar_json(&avatar);
            let path = out_dir.join("attributes.json");
            let mut text = serde_json::to_string_pretty(&body).expect("attributes serialize");
            text.push('\n');
            std::fs::write(&path, text).map_err(io_err(&path))?;
            out_line(stdout, &body.to_string())
        }
        Command::Synth {
            out,
            subjects,
            sets,
            per_set,
            size,
            max_pose,
            brightness,
        } => {
            let opts = SynthDatasetOptions {
                subjects: *subjects,
                sets: sets.iter().map(|s| s.trim().to_string()).collect(),
                per_set: *per_set,
                seed: g.seed.unwrap_or(0),
                image_size: *size,
                max_pose_deg: *max_pose,
                brightness_delta: *brightness,
            };
            std::fs::create_dir_all(out).map_err(io_err(out))?;
            let m = emit_synth_dataset(&opts, out)?;
            let _ = writeln!(stderr, "wrote {} images for {} subjects", m.entries.len(), m.subjects());
            out_line(
                stdout,
                &json!({
                    "manifest": out.join("manifest.json").display().to_string(),
                    "images": m.entries.len(),
                    "subjects": m.subjects(),
                })
                .to_string(),
            )
        }
        Command::Serve {
            port,
            host,
            state_dir,
            gallery,
            viewer_dir,
        } => {
            let opts = ServiceOptions {
                engine: Engine::new(g.resolve()?)?,
                gallery: gallery.clone(),
                state_dir: state_dir.clone(),
                viewer_dir: viewer_dir.clone(),
            };
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(io_err(Path::new("<runtime>")))?;
            rt.block_on(serve(opts, SocketAddr::new(*host, *port)))
        }
    }
}

/// The avatar summary shared by the CLI and `POST /avatar` (minus the session id).
pub fn avatar_json(a: &avaface::avatar::Avatar) -> serde_json::Value {
    json!({
        "attributes": a.attributes,
        "suggested_body": a.attributes.suggested_body,
        "params": a.params,
    })
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "face".into())
}
