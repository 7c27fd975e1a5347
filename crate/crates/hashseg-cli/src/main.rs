//! Command-line pipeline: `segment` resolves detection boxes to hierarchy
//! region masks, `eval` scores predictions against ground truth, `synth`
//! emits deterministic test scenes, and `index-stats` reports hash-table
//! occupancy.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hashseg::codes::Channels;
use hashseg::eval;
use hashseg::hsh::{self, Detection};
use hashseg::hsp::Connectivity;
use hashseg::io;
use hashseg::synth;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "hashseg", version, about = "Region-hierarchy instance segmentation by L1 hashing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment detections into region masks and write a mask manifest.
    Segment(SegmentArgs),
    /// Score a prediction manifest against ground truth.
    Eval(EvalArgs),
    /// Generate a deterministic synthetic scene.
    Synth(SynthArgs),
    /// Report hash-table bucket occupancy for an image's index.
    IndexStats(IndexStatsArgs),
}

#[derive(Args, Clone)]
struct KnobArgs {
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Descriptor cells per side.
    #[arg(long)]
    grid: Option<u32>,
    /// Descriptor channels: 1 (luma) or 3 (rgb).
    #[arg(long)]
    channels: Option<Channels>,
    /// Zero out pixels outside a region when extracting its code.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    masked: Option<bool>,
    /// Bits per hash key.
    #[arg(short)]
    k: Option<u32>,
    /// Number of hash tables.
    #[arg(short)]
    l: Option<u32>,
    /// Smallest region area (pixels) to index.
    #[arg(long)]
    min_area: Option<u64>,
    /// Detections below this score are dropped at ingestion.
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Box-IoU threshold that triggers pruning.
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Connectivity (4 or 8) for the mask cleanup pass.
    #[arg(long)]
    connectivity: Option<Connectivity>,
    /// Brute-force fallback when all bucket lookups are empty.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    fallback: Option<bool>,
    /// Skip matches whose region box does not touch the detection box.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    require_overlap: Option<bool>,
    /// Image-level parallelism (0 = one thread per core).
    #[arg(long)]
    jobs: Option<usize>,
}

impl KnobArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<RunConfig> {
        let from_file = self
            .config
            .as_deref()
            .map(config::parse_config_file)
            .transpose()?;
        let flags = Overrides {
            grid: self.grid,
            channels: self.channels,
            masked: self.masked,
            k: self.k,
            l: self.l,
            seed,
            min_area: self.min_area,
            score_threshold: self.score_threshold,
            iou_threshold: self.iou_threshold,
            connectivity: self.connectivity,
            fallback: self.fallback,
            require_overlap: self.require_overlap,
            jobs: self.jobs,
        };
        config::resolve(from_file, flags)
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Input image (8-bit PNG or PPM); single-image mode.
    #[arg(long, conflicts_with = "batch", requires = "hierarchy")]
    image: Option<PathBuf>,
    /// Hierarchy: UCM PGM (.pgm) or merge-list manifest (.json).
    #[arg(long, conflicts_with = "batch")]
    hierarchy: Option<PathBuf>,
    /// Image id for single-image mode; defaults to the image file stem.
    #[arg(long, conflicts_with = "batch")]
    image_id: Option<String>,
    /// Batch manifest: JSON array of {image_id, image, hierarchy}.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Detections as JSON Lines.
    #[arg(long)]
    detections: PathBuf,
    /// Output directory for masks and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed for the hash functions.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    knobs: KnobArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction manifest from `segment`.
    #[arg(long)]
    preds: PathBuf,
    /// Ground-truth manifest.
    #[arg(long)]
    gt: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Text table path (default: report path with .txt extension).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Match predictions to ground truth regardless of class.
    #[arg(long)]
    class_agnostic: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the scene files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Number of shapes (1..=6).
    #[arg(long, default_value_t = 3)]
    shapes: u32,
    /// Detection box jitter radius in pixels.
    #[arg(long, default_value_t = 0)]
    jitter: u32,
    #[arg(long, default_value_t = 168)]
    width: u32,
    #[arg(long, default_value_t = 112)]
    height: u32,
}

#[derive(Args)]
struct IndexStatsArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Also write the stats as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    knobs: KnobArgs,
}

/// One image of a batch manifest; paths are relative to the manifest file.
#[derive(Debug, Serialize, Deserialize)]
struct BatchEntry {
    image_id: String,
    image: String,
    hierarchy: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(args) => cmd_segment(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
        Command::IndexStats(args) => cmd_index_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let empty_hierarchy = err
                .chain()
                .any(|c| matches!(c.downcast_ref(), Some(hashseg::Error::EmptyHierarchy)));
            ExitCode::from(if empty_hierarchy { 2 } else { 1 })
        }
    }
}

fn cmd_segment(args: SegmentArgs) -> Result<()> {
    let cfg = args.knobs.resolve(Some(args.seed))?;

    let entries: Vec<(String, PathBuf, PathBuf)> = if let Some(batch_path) = &args.batch {
        let text = std::fs::read_to_string(batch_path)
            .with_context(|| format!("reading batch manifest {}", batch_path.display()))?;
        let batch: Vec<BatchEntry> = serde_json::from_str(&text)
            .with_context(|| format!("parsing batch manifest {}", batch_path.display()))?;
        let mut ids = BTreeSet::new();
        for entry in &batch {
            if !ids.insert(entry.image_id.clone()) {
                bail!("duplicate image id {:?} in batch manifest", entry.image_id);
            }
        }
        batch
            .into_iter()
            .map(|e| {
                (
                    e.image_id,
                    io::sibling(batch_path, &e.image),
                    io::sibling(batch_path, &e.hierarchy),
                )
            })
            .collect()
    } else {
        let image = args.image.clone().context("--image or --batch is required")?;
        let hierarchy = args.hierarchy.clone().context("--hierarchy is required")?;
        let image_id = match &args.image_id {
            Some(id) => id.clone(),
            None => image
                .file_stem()
                .context("image path has no file stem")?
                .to_string_lossy()
                .into_owned(),
        };
        vec![(image_id, image, hierarchy)]
    };

    let detections = io::load_detections(&args.detections)?;
    let known: BTreeSet<&str> = entries.iter().map(|(id, _, _)| id.as_str()).collect();
    let strays = detections
        .iter()
        .filter(|d| !known.contains(d.image_id.as_str()))
        .count();
    if strays > 0 {
        eprintln!("warning: {strays} detection(s) reference images not in this run");
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building thread pool")?;
    let params = cfg.segment_params();
    let per_image: Vec<Vec<io::MaskManifestEntry>> = pool.install(|| {
        entries
            .par_iter()
            .map(|(image_id, image_path, hierarchy_path)| {
                segment_one(image_id, image_path, hierarchy_path, &detections, &cfg, &params, &args.out)
                    .with_context(|| format!("segmenting {image_id}"))
            })
            .collect::<Result<_>>()
    })?;

    let manifest: Vec<io::MaskManifestEntry> = per_image.into_iter().flatten().collect();
    io::write_mask_manifest(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} instance mask(s) across {} image(s) to {}",
        manifest.len(),
        entries.len(),
        args.out.display()
    );
    Ok(())
}

fn segment_one(
    image_id: &str,
    image_path: &Path,
    hierarchy_path: &Path,
    detections: &[Detection],
    cfg: &RunConfig,
    params: &hsh::SegmentParams,
    out_dir: &Path,
) -> Result<Vec<io::MaskManifestEntry>> {
    let image = io::load_image(image_path)?;
    let tree = io::load_hierarchy(hierarchy_path)?;
    if tree.width() != image.width() || tree.height() != image.height() {
        bail!(
            "hierarchy is {}x{} but image is {}x{}",
            tree.width(),
            tree.height(),
            image.width(),
            image.height()
        );
    }
    let mine: Vec<Detection> = detections
        .iter()
        .filter(|d| d.image_id == image_id && d.score >= cfg.score_threshold)
        .cloned()
        .collect();
    for det in &mine {
        if !det.bbox.fits(image.width(), image.height()) {
            bail!(
                "detection box {:?} outside the {}x{} image",
                det.bbox,
                image.width(),
                image.height()
            );
        }
    }

    let instances = hsh::segment_image(&image, &tree, &mine, params)?;
    let mut entries = Vec::with_capacity(instances.len());
    for (index, inst) in instances.iter().enumerate() {
        let mask_name = format!("{image_id}_{index}.pgm");
        io::write_mask_pgm(&out_dir.join(&mask_name), &inst.mask)?;
        entries.push(io::MaskManifestEntry {
            image_id: inst.image_id.clone(),
            class: inst.class_label.clone(),
            score: inst.score,
            node_id: inst.node_id,
            bbox: inst.bbox,
            mask: mask_name,
        });
    }
    Ok(entries)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let preds = io::load_predictions(&args.preds)?;
    let gts = io::load_ground_truth(&args.gt)?;

    let gt_images: BTreeSet<&str> = gts.iter().map(|g| g.image_id.as_str()).collect();
    let unknown: BTreeSet<&str> = preds
        .iter()
        .map(|p| p.image_id.as_str())
        .filter(|id| !gt_images.contains(id))
        .collect();
    if !unknown.is_empty() {
        bail!(
            "prediction image(s) missing from ground truth: {}",
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        );
    }

    let report = eval::evaluate(&preds, &gts, !args.class_agnostic)?;
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    io::write_atomic(&args.out, &json)?;

    let table = eval::format_table(&report);
    let table_path = args
        .table
        .clone()
        .unwrap_or_else(|| args.out.with_extension("txt"));
    io::write_atomic(&table_path, table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let scene = synth::generate(&synth::SynthConfig {
        seed: args.seed,
        shapes: args.shapes,
        jitter: args.jitter,
        width: args.width,
        height: args.height,
    });
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let paths = synth::write_scene(&scene, &args.out)?;
    println!(
        "{}: image={} hierarchy={} detections={} gt={}",
        scene.image_id, paths.image, paths.hierarchy, paths.detections, paths.gt_manifest
    );
    Ok(())
}

#[derive(Serialize)]
struct IndexStats {
    items: usize,
    tables: u32,
    k: u32,
    buckets_per_table: Vec<usize>,
    largest_bucket: usize,
    mean_bucket: f64,
    /// bucket size -> number of buckets of that size, across all tables.
    occupancy: std::collections::BTreeMap<usize, usize>,
}

fn cmd_index_stats(args: IndexStatsArgs) -> Result<()> {
    let cfg = args.knobs.resolve(Some(args.seed))?;
    let image = io::load_image(&args.image)?;
    let tree = io::load_hierarchy(&args.hierarchy)?;
    let map = hsh::build_hsh(
        &image,
        &tree,
        cfg.code_config(),
        cfg.k,
        cfg.l,
        cfg.seed,
        cfg.min_area,
    )?;
    let sizes = map.index().bucket_sizes();

    let mut occupancy = std::collections::BTreeMap::new();
    let mut total = 0usize;
    let mut buckets = 0usize;
    for table in &sizes {
        for &s in table {
            *occupancy.entry(s).or_insert(0) += 1;
            total += s;
            buckets += 1;
        }
    }
    let stats = IndexStats {
        items: map.len(),
        tables: cfg.l,
        k: cfg.k,
        buckets_per_table: sizes.iter().map(Vec::len).collect(),
        largest_bucket: occupancy.keys().max().copied().unwrap_or(0),
        mean_bucket: if buckets == 0 { 0.0 } else { total as f64 / buckets as f64 },
        occupancy,
    };

    println!("indexed items : {}", stats.items);
    println!("tables x bits : {} x {}", stats.tables, stats.k);
    println!("largest bucket: {}", stats.largest_bucket);
    println!("mean bucket   : {:.2}", stats.mean_bucket);
    println!("occupancy (size: buckets):");
    for (size, count) in &stats.occupancy {
        println!("  {size:>6}: {count}");
    }
    if let Some(json_path) = &args.json {
        let mut bytes = serde_json::to_vec_pretty(&stats).expect("stats serialize");
        bytes.push(b'\n');
        io::write_atomic(json_path, &bytes)?;
    }
    Ok(())
}
