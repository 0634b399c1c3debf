use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ridgebridge::gradcheck::run_gradcheck;
use ridgebridge::imaging::io::{load_gray, load_mask, save_gray, save_mask};
use ridgebridge::matcheval::{pair_scores, write_scores_csv, CaptureKind, Template, TemplateStore};
use ridgebridge::pipeline::{
    build_templates, extract_one, preprocess_one, run_search, run_verification, synth_dataset, DatasetManifest,
    ManifestEntry, PipelineConfig, SynthSpec,
};
use ridgebridge::segmentation::{iou, segment_distal};

#[derive(Parser)]
#[command(name = "ridgebridge", version, about = "Contact to contactless fingerprint matching")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Exit with status 3 when any item of a batch fails.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Contact,
    Contactless,
}

impl From<Kind> for CaptureKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Contact => CaptureKind::Contact,
            Kind::Contactless => CaptureKind::Contactless,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment the distal phalange and save the mask.
    Segment {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Full contactless preprocessing of one image.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Precomputed mask; skips segmentation.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Where to write the applied parameters (JSON).
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Build templates, either for one image or for a whole manifest.
    Extract {
        /// Single image to extract from.
        #[arg(long, conflicts_with = "manifest", requires = "output")]
        input: Option<PathBuf>,
        /// Template file for --input (.c2tp, or .json).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "unknown")]
        subject: String,
        #[arg(long, default_value = "unknown")]
        finger: String,
        #[arg(long, value_enum, default_value = "contact")]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        impression: u32,
        /// Manifest (JSON Lines or CSV) to process in batch.
        #[arg(long, requires = "store")]
        manifest: Option<PathBuf>,
        /// Template store directory for --manifest.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Score one probe template against one gallery template.
    Match { probe: PathBuf, gallery: PathBuf },
    /// Run the verification protocol over a manifest.
    Verify {
        manifest: PathBuf,
        /// Output directory for report.json, scores.csv and timing.json.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Contactless probes against the contact gallery of a manifest.
    Search {
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Shortlist size (overrides the configuration).
        #[arg(long)]
        k: Option<usize>,
    },
    /// IoU of the segmenter against the ground-truth masks listed in a manifest.
    SegEval {
        manifest: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of the warp and loss gradients.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        configs: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic dataset with its manifest.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        fingers: usize,
        #[arg(long, default_value_t = 2)]
        contactless: u32,
        #[arg(long, default_value_t = 2)]
        contact: u32,
    },
}

/// Bad input or configuration; mapped to exit status 2.
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

enum Status {
    Ok,
    Partial(usize),
    Failed,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let m = if csv {
        DatasetManifest::import_csv(path)
    } else {
        DatasetManifest::load_jsonl(path)
    };
    m.map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn load_template(path: &Path) -> Result<Template> {
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let t = if json {
        Template::from_json(&fs::read_to_string(path)?)
    } else {
        Template::load(path)
    };
    t.map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<Status> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Segment { input, output } => {
            let img = load_gray(input).map_err(invalid)?;
            let seg = segment_distal(&img, &cfg.segment)?;
            save_mask(&seg.mask, output)?;
            emit(None, &json!({ "coverage": seg.mask.coverage(), "low_confidence": seg.low_confidence }))?;
        }
        Command::Preprocess {
            input,
            output,
            mask,
            params,
        } => {
            let img = load_gray(input).map_err(invalid)?;
            let mask = mask.as_ref().map(load_mask).transpose().map_err(invalid)?;
            let p = preprocess_one(&img, mask.as_ref(), &cfg)?;
            save_gray(&p.image, output)?;
            let audit = json!({ "warp": p.warp, "pad": p.pad, "period": p.period, "warnings": p.warnings });
            emit(params.as_deref(), &audit)?;
        }
        Command::Extract {
            input,
            output,
            subject,
            finger,
            kind,
            impression,
            manifest,
            store,
        } => {
            if let (Some(input), Some(output)) = (input, output) {
                let entry = ManifestEntry {
                    subject_id: subject.clone(),
                    finger_position: finger.clone(),
                    impression_index: *impression,
                    capture_kind: (*kind).into(),
                    image_path: input.clone(),
                    mask_path: None,
                    device: "cli".into(),
                };
                let img = load_gray(input).map_err(invalid)?;
                let image = if entry.capture_kind == CaptureKind::Contactless || cfg.preprocess_contact {
                    preprocess_one(&img, None, &cfg)?.image
                } else {
                    img
                };
                let t = extract_one(&image, &entry, &cfg)?;
                if output.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                    fs::write(output, t.to_json())?;
                } else {
                    t.save(output)?;
                }
                for w in &t.warnings {
                    log::warn!("{}: {w}", t.id());
                }
            } else if let (Some(manifest), Some(store)) = (manifest, store) {
                let m = load_manifest(manifest)?;
                let batch = build_templates(&m, &cfg);
                let mut s = TemplateStore::open(store)?;
                for t in batch.templates.values() {
                    s.insert(t)?;
                }
                s.flush()?;
                emit(
                    None,
                    &json!({ "processed": batch.processed(), "failed": batch.failures.len(), "failures": batch.failures }),
                )?;
                if !batch.failures.is_empty() {
                    return Ok(Status::Partial(batch.failures.len()));
                }
            } else {
                return Err(invalid("extract needs --input with --output, or --manifest with --store"));
            }
        }
        Command::Match { probe, gallery } => {
            let (p, g) = (load_template(probe)?, load_template(gallery)?);
            let s = pair_scores(&p, &g, &cfg.search_config())?;
            emit(None, &s)?;
        }
        Command::Verify { manifest, out } => {
            let m = load_manifest(manifest)?;
            let v = run_verification(&m, &cfg)?;
            fs::create_dir_all(out)?;
            write_json(&out.join("report.json"), &v.report)?;
            write_json(&out.join("timing.json"), &v.timing)?;
            write_scores_csv(out.join("scores.csv"), &v.records)?;
            log::info!(
                "{} genuine / {} imposter scored, EER {:?}",
                v.report.counts.scored_genuine,
                v.report.counts.scored_imposter,
                v.report.eer
            );
            if !v.report.failures.is_empty() {
                return Ok(Status::Partial(v.report.failures.len()));
            }
        }
        Command::Search { manifest, out, k } => {
            let mut cfg = cfg.clone();
            if let Some(k) = k {
                cfg.search_k = *k;
                cfg.validate().map_err(invalid)?;
            }
            let m = load_manifest(manifest)?;
            let s = run_search(&m, &cfg)?;
            write_json(out, &json!({ "report": s.report, "timing": s.timing }))?;
            if !s.report.failures.is_empty() {
                return Ok(Status::Partial(s.report.failures.len()));
            }
        }
        Command::SegEval { manifest, out } => {
            let m = load_manifest(manifest)?;
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for e in m.entries.iter() {
                let Some(gt_path) = &e.mask_path else { continue };
                let result = (|| -> Result<f64> {
                    let img = load_gray(&e.image_path)?;
                    let gt = load_mask(gt_path)?;
                    let seg = segment_distal(&img, &cfg.segment)?;
                    Ok(iou(&seg.mask, &gt)?)
                })();
                match result {
                    Ok(v) => rows.push(json!({ "id": e.id(), "iou": v })),
                    Err(err) => failures.push(json!({ "id": e.id(), "message": err.to_string() })),
                }
            }
            let ious: Vec<f64> = rows.iter().filter_map(|r| r["iou"].as_f64()).collect();
            let mean = if ious.is_empty() { None } else { Some(ious.iter().sum::<f64>() / ious.len() as f64) };
            emit(out.as_deref(), &json!({ "evaluated": ious.len(), "mean_iou": mean, "images": rows, "failures": failures }))?;
            if !failures.is_empty() {
                return Ok(Status::Partial(failures.len()));
            }
        }
        Command::Gradcheck { configs, out } => {
            let r = run_gradcheck(*configs, cfg.seed)?;
            for s in r.suites() {
                log::info!("{s}: max relative error {:.2e}", r.worst(&s));
            }
            emit(out.as_deref(), &r)?;
            if !r.passed() {
                return Ok(Status::Failed);
            }
        }
        Command::Synth {
            out,
            fingers,
            contactless,
            contact,
        } => {
            let spec = SynthSpec {
                fingers: *fingers,
                contactless: *contactless,
                contact: *contact,
                seed: cfg.seed,
            };
            let m = synth_dataset(out, &spec)?;
            log::info!("wrote {} images to {}", m.len(), out.display());
        }
    }
    Ok(Status::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("{e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial(n)) => {
            log::warn!("{n} item(s) failed");
            if cli.strict {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Ok(Status::Failed) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
