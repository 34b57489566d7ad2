//! The `mattelab` command line.
//!
//! Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand, ValueEnum};
use mattelab_core::codec::{decode_image, decode_mask, encode_trimap};
use mattelab_core::eval::{
    detector_accuracy, evaluate_dataset, predict_dataset_transparency, run_ablation, DatasetLayout, GuidanceSource,
    PipelinePredictor, TransparencyPolicy,
};
use mattelab_core::trimap::pseudo_trimap;
use mattelab_core::{Image, MorphParams, TransparencyDecision, TransparencyMode};

use crate::config::ServiceConfig;
use crate::guidance::GuidanceScript;
use crate::session::{ArtifactName, Engine, Session, SessionStore};

#[derive(Debug, Parser)]
#[command(name = "mattelab", version, about = "Interactive natural-image matting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    UserTransparent,
    UserOpaque,
}

impl From<ModeArg> for TransparencyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Auto => TransparencyMode::Auto,
            ModeArg::UserTransparent => TransparencyMode::UserTransparent,
            ModeArg::UserOpaque => TransparencyMode::UserOpaque,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    /// Metrics of one configuration, split by transparency label.
    Standard,
    /// Baseline, detector-assisted and user-assisted experiments side by side.
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    GtBox,
    GtMask,
    Precomputed,
}

impl From<SourceArg> for GuidanceSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::GtBox => GuidanceSource::GtBox,
            SourceArg::GtMask => GuidanceSource::GtMask,
            SourceArg::Precomputed => GuidanceSource::PrecomputedMasks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Transparent where labelled so, opaque otherwise.
    Labels,
    Auto,
    UserTransparent,
    UserOpaque,
}

impl From<PolicyArg> for TransparencyPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Labels => TransparencyPolicy::FromLabels,
            PolicyArg::Auto => TransparencyPolicy::Fixed(TransparencyMode::Auto),
            PolicyArg::UserTransparent => TransparencyPolicy::Fixed(TransparencyMode::UserTransparent),
            PolicyArg::UserOpaque => TransparencyPolicy::Fixed(TransparencyMode::UserOpaque),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Matte one image from a guidance file and write all artifacts.
    Matte {
        #[arg(long)]
        image: PathBuf,
        /// JSON guidance object or list of objects, applied in order.
        #[arg(long)]
        guidance_file: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long)]
        kernel: Option<u32>,
        #[arg(long)]
        iters: Option<u32>,
    },
    /// Evaluate the pipeline on a dataset directory.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "standard")]
        mode: EvalMode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "gt-box")]
        guidance: SourceArg,
        /// Transparency policy for standard mode.
        #[arg(long, value_enum, default_value = "labels")]
        policy: PolicyArg,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build a trimap from a binary mask.
    Trimap {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        kernel: u32,
        #[arg(long)]
        iters: u32,
        /// Mark the whole object as unknown (transparent object).
        #[arg(long)]
        transparent: bool,
        #[arg(long, default_value = "trimap.png")]
        out: PathBuf,
    },
    /// Transparency detection accuracy against `labels.csv`.
    Accuracy {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn params_override(base: MorphParams, kernel: Option<u32>, iters: Option<u32>) -> anyhow::Result<MorphParams> {
    Ok(MorphParams::new(
        kernel.unwrap_or(base.kernel_size()),
        iters.unwrap_or(base.iterations()),
    )?)
}

/// Runs a parsed command; `out` receives human-readable output.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { port, bind, config } => {
            let mut cfg = ServiceConfig::load(config.as_deref())?;
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let addr: std::net::SocketAddr = format!("{}:{}", cfg.bind, cfg.port)
                .parse()
                .with_context(|| format!("invalid bind address {}:{}", cfg.bind, cfg.port))?;
            let store = SessionStore::new(Engine::from_config(&cfg)?);
            tokio::runtime::Runtime::new()?.block_on(crate::api::serve(store, addr))
        }
        Command::Matte {
            image,
            guidance_file,
            out_dir,
            config,
            mode,
            kernel,
            iters,
        } => {
            let mut cfg = ServiceConfig::load(config.as_deref())?;
            cfg.pipeline.morph = params_override(cfg.pipeline.morph, kernel, iters)?;
            let engine = Engine::from_config(&cfg)?;
            let img: Image = decode_image(&read(&image)?)?;
            let script: GuidanceScript = serde_json::from_slice(&read(&guidance_file)?)
                .with_context(|| format!("invalid guidance file {}", guidance_file.display()))?;
            let steps = script.into_steps();
            if steps.is_empty() {
                bail!("guidance file holds no guidance");
            }
            let mut session = Session::new("cli".into(), img, engine.config.morph).with_mode(mode.into());
            for step in steps {
                session.apply_guidance(&engine, step.to_guidance()?)?;
            }
            std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
            for which in ArtifactName::ALL {
                let png = session.export(which, engine.settings.composite_background)?;
                write(&out_dir.join(format!("{}.png", which.as_str())), &png)?;
            }
            let state = serde_json::to_vec_pretty(&session.view(&engine))?;
            write(&out_dir.join("state.json"), &state)?;
            writeln!(out, "wrote artifacts to {}", out_dir.display())?;
            Ok(())
        }
        Command::Eval {
            dataset,
            mode,
            config,
            guidance,
            policy,
            report,
        } => {
            let cfg = ServiceConfig::load(config.as_deref())?;
            let backends = mattelab_bridge::resolve_backends::<f64>(&cfg.pipeline, &cfg.client)?;
            let layout = DatasetLayout::open(&dataset)?;
            let (table, json) = match mode {
                EvalMode::Standard => {
                    let predictor = PipelinePredictor {
                        config: cfg.pipeline.clone(),
                        backends,
                        source: guidance.into(),
                        policy: policy.into(),
                    };
                    let r = evaluate_dataset(&layout, &predictor);
                    (r.to_table(), r.to_json())
                }
                EvalMode::Ablation => {
                    let r = run_ablation(&layout, &cfg.pipeline, &backends, guidance.into());
                    (r.to_table(), r.to_json())
                }
            };
            write!(out, "{table}")?;
            if let Some(path) = report {
                write(&path, json.as_bytes())?;
            }
            Ok(())
        }
        Command::Trimap {
            mask,
            kernel,
            iters,
            transparent,
            out: out_path,
        } => {
            let m = decode_mask(&read(&mask)?)?;
            let p = MorphParams::new(kernel, iters)?;
            let decision = if transparent {
                TransparencyDecision::UserTransparent
            } else {
                TransparencyDecision::UserOpaque
            };
            let t = pseudo_trimap(&m, &decision, &p, false)?;
            write(&out_path, &encode_trimap(&t))?;
            writeln!(out, "wrote {}", out_path.display())?;
            Ok(())
        }
        Command::Accuracy { dataset, config } => {
            let cfg = ServiceConfig::load(config.as_deref())?;
            let backends = mattelab_bridge::resolve_backends::<f64>(&cfg.pipeline, &cfg.client)?;
            let layout = DatasetLayout::open(&dataset)?;
            let labels = layout
                .labels()
                .with_context(|| format!("{} has no labels.csv", dataset.display()))?
                .clone();
            let preds = predict_dataset_transparency(&layout, &cfg.pipeline, backends.detector.as_ref())?;
            let preds = preds.into_iter().filter(|(k, _)| labels.contains_key(k)).collect();
            let acc = detector_accuracy(&preds, &labels)?;
            writeln!(out, "accuracy {acc:.4} over {} images", labels.len())?;
            Ok(())
        }
    }
}
