use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use scriptor::dataset::{read_detections_file, write_detections_file, CycleSpec, PageRange};
use scriptor::detector::{self, Backend, InferParams, TemplateBackend, Tiling};
use scriptor::eval::{self, AttributionRule, RuleKind};
use scriptor::matcher::{bootstrap_annotate, load_templates, MatchParams, DEFAULT_NMS_IOU, DEFAULT_TAU};
use scriptor::model::{
    AnnotationFilter, AnnotationStore, ColumnImage, ColumnInfo, Decision, ManuscriptId, Origin, Raster, ScribeId,
    Stage, Status,
};
use scriptor::orchestrator::{self, AppState};
use scriptor::preprocess::{preprocess_page, ManuscriptConfig};
use scriptor::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(
    name = "scriptor",
    version,
    about = "Manuscript glyph annotation and scribe attribution"
)]
struct Cli {
    /// Working directory holding configs, store logs, columns and datasets.
    #[arg(long, short = 'w', default_value = ".", global = true)]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Ms {
    #[arg(long, short = 'm')]
    manuscript: String,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic manuscript (pages, config, templates, truth) into the workdir.
    Synth {
        #[arg(long, default_value = "synth")]
        manuscript: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        recto: u32,
        #[arg(long, default_value_t = 4)]
        verso_first: u32,
        #[arg(long, default_value_t = 4)]
        verso_second: u32,
    },
    /// Crop, clean and binarize every page into column images and register them.
    Preprocess(Ms),
    /// Propose pending annotations on columns by template matching.
    Bootstrap {
        #[command(flatten)]
        ms: Ms,
        /// Use this scribe's templates and columns.
        #[arg(long)]
        scribe: String,
        #[arg(long, default_value = "templates")]
        templates: PathBuf,
        /// Page ranges to annotate, e.g. recto:0:60.
        #[arg(long = "pages")]
        pages: Vec<PageRange>,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
        nms: f64,
    },
    /// Batch review operations.
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Annotation cycle control.
    #[command(subcommand)]
    Cycle(CycleCmd),
    /// Detection files.
    #[command(subcommand)]
    Detections(DetectionsCmd),
    /// Serve the review API (and a UI directory, if given).
    Serve {
        #[command(flatten)]
        ms: Ms,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Threshold sweeps.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Per-scribe extraction statistics as CSV.
    Stats {
        #[command(flatten)]
        ms: Ms,
        /// Detection file; defaults to the detector annotations in the store.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attribute every page to the target scribe or not.
    Attribute {
        #[command(flatten)]
        ms: Ms,
        #[arg(long, value_parser = parse_rule, default_value = "majority_vote")]
        rule: RuleKind,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Accept every pending annotation of an origin.
    AcceptAll {
        #[command(flatten)]
        ms: Ms,
        #[arg(long, value_parser = parse_origin, default_value = "template_match")]
        origin: Origin,
    },
}

#[derive(Subcommand)]
enum CycleCmd {
    /// Build the cycle's manifest and export its dataset directory.
    Start {
        #[command(flatten)]
        ms: Ms,
        #[arg(long)]
        cycle: u32,
        /// Restrict to one scribe's pages.
        #[arg(long)]
        scribe: Option<String>,
        /// Override training page ranges.
        #[arg(long)]
        train: Vec<PageRange>,
        /// Override inference page ranges.
        #[arg(long)]
        inference: Vec<PageRange>,
        #[arg(long)]
        no_export: bool,
    },
    Status(Ms),
    /// Mark the exported dataset as handed to the trainer.
    Await(Ms),
    Merge(Ms),
}

#[derive(Subcommand)]
enum DetectionsCmd {
    /// Ingest a detection file into the open cycle.
    Submit {
        #[command(flatten)]
        ms: Ms,
        #[arg(long)]
        file: PathBuf,
    },
    /// Run a detector over the open cycle's inference columns.
    Infer {
        #[command(flatten)]
        ms: Ms,
        #[arg(long)]
        out: PathBuf,
        /// Template directory for the correlation detector.
        #[arg(long, conflicts_with = "model")]
        templates: Option<PathBuf>,
        #[arg(long)]
        scribe: Option<String>,
        /// ONNX model with a JSON sidecar (needs the `onnx` feature).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        conf_floor: f64,
        #[arg(long, default_value_t = 0.45)]
        nms: f64,
        #[arg(long, default_value_t = 64)]
        tile: u32,
        #[arg(long, default_value_t = 20)]
        glyph_height: u32,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Accuracy and F-score over a threshold grid, as CSV.
    Sweep {
        #[command(flatten)]
        ms: Ms,
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "0.70:0.85:0.01")]
        taus: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// The same sweep, rendered as an SVG chart.
    Plot {
        #[command(flatten)]
        ms: Ms,
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "0.70:0.85:0.01")]
        taus: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_rule(s: &str) -> std::result::Result<RuleKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown rule {s:?}"))
}

fn parse_origin(s: &str) -> std::result::Result<Origin, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown origin {s:?}"))
}

struct Workdir(PathBuf);

impl Workdir {
    fn config_path(&self, m: &str) -> PathBuf {
        self.0.join(format!("{m}.toml"))
    }
    fn store(&self, m: &str) -> Result<AnnotationStore> {
        let p = self.0.join(format!("{m}.jsonl"));
        AnnotationStore::open(&p).with_context(|| format!("opening store {}", p.display()))
    }
    fn columns(&self) -> PathBuf {
        self.0.join("columns")
    }
    fn datasets(&self) -> PathBuf {
        self.0.join("datasets")
    }
}

fn load_column(dir: &Path, info: &ColumnInfo) -> Result<ColumnImage> {
    let path = dir.join(format!("{}.png", info.id));
    let img = image::open(&path)
        .with_context(|| format!("reading {}", path.display()))?
        .into_luma8();
    Ok(ColumnImage {
        page: info.page.clone(),
        column_index: info.id.column_index as usize,
        pixels: Raster::Gray(img),
        stage: Stage::Binary,
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let wd = Workdir(cli.workdir);
    match cli.command {
        Command::Synth {
            manuscript,
            seed,
            recto,
            verso_first,
            verso_second,
        } => {
            let spec = SynthSpec::standard(ManuscriptId::new(manuscript)?, seed, recto, verso_first, verso_second);
            let ms = generate(&spec)?;
            ms.write_to(&wd.0)?;
            println!("wrote {} pages, {} planted glyphs", ms.pages.len(), ms.glyphs().count());
        }
        Command::Preprocess(Ms { manuscript }) => {
            let cfg_path = wd.config_path(&manuscript);
            let cfg = ManuscriptConfig::load(&cfg_path).with_context(|| format!("loading {}", cfg_path.display()))?;
            let base = cfg_path.parent().unwrap_or(Path::new("."));
            let cols_dir = wd.columns();
            std::fs::create_dir_all(&cols_dir)?;
            let pages: Vec<_> = cfg.included_pages().collect();
            let done: Vec<Vec<ColumnInfo>> = pages
                .par_iter()
                .map(|entry| -> Result<Vec<ColumnInfo>> {
                    let img = image::open(base.join(&entry.image))
                        .with_context(|| format!("reading page {}", entry.label()))?
                        .into_rgb8();
                    let page = cfg.page_ref(entry, img.width(), img.height());
                    let roi = cfg.roi_config(entry.layout)?;
                    let cols = preprocess_page(&img, &page, &roi, cfg.red_rule)?;
                    cols.iter()
                        .map(|c| {
                            let Raster::Gray(g) = &c.pixels else {
                                unreachable!("binarized")
                            };
                            g.save(cols_dir.join(format!("{}.png", c.id())))?;
                            Ok(ColumnInfo {
                                id: c.id(),
                                page: c.page.clone(),
                                width: g.width(),
                                height: g.height(),
                            })
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            let mut store = wd.store(&manuscript)?;
            let mut n = 0;
            for info in done.into_iter().flatten() {
                store.register_column(info)?;
                n += 1;
            }
            println!("{} pages, {n} columns", pages.len());
        }
        Command::Bootstrap {
            ms: Ms { manuscript },
            scribe,
            templates,
            pages,
            tau,
            nms,
        } => {
            let scribe = ScribeId::new(scribe)?;
            let mut store = wd.store(&manuscript)?;
            let tdir = if templates.is_absolute() {
                templates
            } else {
                wd.0.join(templates)
            };
            let tmpls: Vec<_> = load_templates(&tdir)?
                .into_iter()
                .filter(|t| t.scribe == scribe)
                .collect();
            if tmpls.is_empty() {
                bail!("no templates for scribe {scribe} in {}", tdir.display());
            }
            let mid = ManuscriptId::new(&manuscript)?;
            let mut spec = CycleSpec::standard(1, mid.clone(), Some(scribe.clone()));
            spec.inference = Vec::new();
            if !pages.is_empty() {
                spec.train = pages;
            }
            spec.val_fraction = 0.0;
            let targets = scriptor::dataset::build_manifest(&store, &spec)?.train_columns;
            let infos: Vec<ColumnInfo> = targets.iter().filter_map(|c| store.column(c).cloned()).collect();
            let params = MatchParams { tau, iou_thresh: nms };
            let drafts: Vec<_> = infos
                .par_iter()
                .map(|info| -> Result<_> {
                    Ok(bootstrap_annotate(
                        &load_column(&wd.columns(), info)?,
                        &tmpls,
                        params,
                        0,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut n = 0;
            for d in drafts.into_iter().flatten() {
                store.put_annotation(d)?;
                n += 1;
            }
            orchestrator::record_bootstrap(&mut store)?;
            println!("{n} candidate boxes on {} columns", infos.len());
        }
        Command::Review(ReviewCmd::AcceptAll {
            ms: Ms { manuscript },
            origin,
        }) => {
            let mut store = wd.store(&manuscript)?;
            let ids: Vec<_> = store
                .query(&AnnotationFilter {
                    manuscript: Some(ManuscriptId::new(&manuscript)?),
                    status: Some(Status::Pending),
                    origin: Some(origin),
                    ..Default::default()
                })
                .iter()
                .map(|a| a.id)
                .collect();
            for id in &ids {
                store.decide(*id, Decision::Accept)?;
            }
            println!("accepted {}", ids.len());
        }
        Command::Cycle(cmd) => cycle(&wd, cmd)?,
        Command::Detections(cmd) => detections(&wd, cmd)?,
        Command::Serve {
            ms: Ms { manuscript },
            port,
            bind,
            ui,
        } => {
            let store = wd.store(&manuscript)?;
            let state = AppState::new(store, wd.columns(), wd.datasets());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((bind.as_str(), port)).await?;
                log::info!("listening on http://{}", listener.local_addr()?);
                orchestrator::serve(state, ui, listener).await
            })?;
        }
        Command::Eval(EvalCmd::Sweep {
            ms: Ms { manuscript },
            target,
            taus,
            out,
        }) => {
            let points = sweep_points(&wd, &manuscript, &target, &taus)?;
            eval::write_sweep_csv(&points, BufWriter::new(File::create(&out)?))?;
            if let Some(best) = points.iter().max_by(|a, b| a.accuracy.total_cmp(&b.accuracy)) {
                println!(
                    "best accuracy {:.2}% at tau {} (F {:.2}%)",
                    best.accuracy * 100.0,
                    best.tau,
                    best.f_score * 100.0
                );
            }
        }
        Command::Eval(EvalCmd::Plot {
            ms: Ms { manuscript },
            target,
            taus,
            out,
        }) => {
            let points = sweep_points(&wd, &manuscript, &target, &taus)?;
            std::fs::write(&out, eval::render_sweep_svg(&points))?;
        }
        Command::Stats {
            ms: Ms { manuscript },
            detections,
            out,
        } => {
            let store = wd.store(&manuscript)?;
            let dets = match detections {
                Some(p) => read_detections_file(&p)?,
                None => eval::stored_detections(&store),
            };
            let table = eval::scribe_stats(&store, &ManuscriptId::new(&manuscript)?, &dets)?;
            eval::write_stats_csv(&table, BufWriter::new(File::create(&out)?))?;
            println!(
                "{} occurrences over {} columns",
                table.total.occurrences, table.total.columns
            );
        }
        Command::Attribute {
            ms: Ms { manuscript },
            rule,
            tau,
            fraction,
            detections,
            out,
        } => {
            let store = wd.store(&manuscript)?;
            let dets = match detections {
                Some(p) => read_detections_file(&p)?,
                None => eval::stored_detections(&store),
            };
            let rule = AttributionRule {
                kind: rule,
                tau,
                fraction,
            };
            let pages = eval::attribute_pages(&store, &ManuscriptId::new(&manuscript)?, &dets, &rule)?;
            let mut text = String::from("page,scribe,detections,decision\n");
            for p in &pages {
                let decision = serde_json::to_value(p.decision)?;
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    p.page,
                    p.scribe.as_ref().map(|s| s.to_string()).unwrap_or_default(),
                    p.detections,
                    decision.as_str().unwrap_or_default()
                ));
            }
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn sweep_points(wd: &Workdir, manuscript: &str, target: &str, taus: &str) -> Result<Vec<eval::SweepPoint>> {
    let store = wd.store(manuscript)?;
    let samples = eval::corpus_samples(&store, &ScribeId::new(target)?)?;
    if samples.is_empty() {
        bail!("no detections in the {manuscript} store");
    }
    Ok(eval::sweep(&samples, &eval::parse_taus(taus)?))
}

fn cycle(wd: &Workdir, cmd: CycleCmd) -> Result<()> {
    let state = match cmd {
        CycleCmd::Start {
            ms: Ms { manuscript },
            cycle,
            scribe,
            train,
            inference,
            no_export,
        } => {
            let mut store = wd.store(&manuscript)?;
            let mut spec = CycleSpec::standard(
                cycle,
                ManuscriptId::new(&manuscript)?,
                scribe.map(ScribeId::new).transpose()?,
            );
            if !train.is_empty() {
                spec.train = train;
            }
            if !inference.is_empty() {
                spec.inference = inference;
            }
            let out = wd.datasets().join(&manuscript).join(format!("cycle-{cycle}"));
            let cols = wd.columns();
            let export = (!no_export).then_some((cols.as_path(), out.as_path()));
            let (state, summary) = orchestrator::start_cycle(&mut store, &spec, export)?;
            if let Some(s) = summary {
                println!(
                    "exported to {}: {} train, {} val, {} inference images, {} labels",
                    out.display(),
                    s.train_images,
                    s.val_images,
                    s.inference_images,
                    s.annotations
                );
            }
            state
        }
        CycleCmd::Status(Ms { manuscript }) => {
            let store = wd.store(&manuscript)?;
            match orchestrator::current_state(&store) {
                Some(s) => s,
                None => {
                    println!("no cycle started");
                    return Ok(());
                }
            }
        }
        CycleCmd::Await(Ms { manuscript }) => orchestrator::await_detections(&mut wd.store(&manuscript)?)?,
        CycleCmd::Merge(Ms { manuscript }) => orchestrator::merge_cycle(&mut wd.store(&manuscript)?)?,
    };
    println!(
        "cycle {} {} ({} pending)",
        state.cycle, state.phase, state.pending_count
    );
    Ok(())
}

fn detections(wd: &Workdir, cmd: DetectionsCmd) -> Result<()> {
    match cmd {
        DetectionsCmd::Submit {
            ms: Ms { manuscript },
            file,
        } => {
            let mut store = wd.store(&manuscript)?;
            let records = read_detections_file(&file)?;
            let state = orchestrator::submit_detections(&mut store, &records)?;
            println!(
                "cycle {} {} ({} pending)",
                state.cycle, state.phase, state.pending_count
            );
        }
        DetectionsCmd::Infer {
            ms: Ms { manuscript },
            out,
            templates,
            scribe,
            model,
            conf_floor,
            nms,
            tile,
            glyph_height,
        } => {
            let store = wd.store(&manuscript)?;
            let state = orchestrator::current_state(&store).context("no cycle started")?;
            let manifest = state.manifest.context("the current cycle has no manifest")?;
            let (backend, model_id): (Box<dyn Backend>, String) = match (templates, model) {
                (Some(dir), None) => {
                    let mut t = load_templates(&dir)?;
                    if let Some(s) = scribe {
                        let s = ScribeId::new(s)?;
                        t.retain(|x| x.scribe == s);
                    }
                    (
                        Box::new(TemplateBackend {
                            templates: t,
                            input_size: tile,
                            nms_iou: nms,
                        }),
                        "template-ncc".into(),
                    )
                }
                (None, Some(path)) => load_model(&path)?,
                _ => bail!("pass exactly one of --templates or --model"),
            };
            let params = InferParams {
                conf_floor,
                nms_iou: nms,
                tiling: Tiling::for_glyph_height(backend.input_size(), glyph_height)?,
            };
            let per_col: Vec<Vec<_>> = manifest
                .inference_columns
                .par_iter()
                .map(|c| -> Result<_> {
                    let info = store.column(c).context("column not registered")?;
                    Ok(detector::infer(
                        backend.as_ref(),
                        &model_id,
                        &load_column(&wd.columns(), info)?,
                        params,
                    )?)
                })
                .collect::<Result<_>>()?;
            let records: Vec<_> = per_col.into_iter().flatten().collect();
            write_detections_file(&out, &records)?;
            println!(
                "{} detections on {} columns",
                records.len(),
                manifest.inference_columns.len()
            );
        }
    }
    Ok(())
}

#[cfg(feature = "onnx")]
fn load_model(path: &Path) -> Result<(Box<dyn Backend>, String)> {
    let handle = detector::DetectorHandle::embedded_model(path)?;
    Ok((Box::new(detector::OnnxBackend::load(path)?), handle.model_id))
}

#[cfg(not(feature = "onnx"))]
fn load_model(_: &Path) -> Result<(Box<dyn Backend>, String)> {
    bail!("this build has no ONNX support; rebuild with --features onnx")
}
