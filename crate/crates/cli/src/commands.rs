//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use frameseek_core::dataio::{
    self, generate_synthetic, sample_pairs, FrameCorpus, SynthConfig,
};
use frameseek_core::eval::{
    compression_report, evaluate, render_gallery, EvalConfig, EvalModels, EvalReport,
    GalleryEntry, METHOD_NAMES,
};
use frameseek_core::index::{self, CompressionStats, LatentDtype};
use frameseek_core::models::{
    ae_train, load_model, save_model, siamese_train, vae_train, AeConfig, AeTrainConfig,
    AnyModel, SiameseConfig, SiameseTrainConfig, TrainReport, VaeConfig, VaeTrainConfig,
};
use frameseek_core::retrieval::{
    retrieve, DirCorpusAccess, QueryRequest, RetrievalModels, RetrievalResult,
};

use crate::config::{resolve, FileConfig};

/// Global flag state shared by every subcommand.
pub struct Context {
    pub file: FileConfig,
    pub seed: u64,
}

impl Context {
    pub fn new(config: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let file = FileConfig::load(config)?;
        let seed = resolve(seed, file.get("seed")?, 0);
        Ok(Context { file, seed })
    }
}

fn load_corpus_auto(dir: &Path) -> Result<FrameCorpus> {
    let manifest = dir.join(dataio::MANIFEST_FILE);
    let corpus = dataio::load_corpus(dir, manifest.exists().then_some(manifest.as_path()))?;
    Ok(corpus)
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    if let Some((h, w)) = s.split_once('x') {
        Ok((h.trim().parse()?, w.trim().parse()?))
    } else {
        let n: usize = s.trim().parse()?;
        Ok((n, n))
    }
}

fn parse_channels(v: &[usize]) -> Result<[usize; 3]> {
    <[usize; 3]>::try_from(v.to_vec())
        .map_err(|_| anyhow!("expected exactly 3 channel counts, got {v:?}"))
}

fn print_train_summary(what: &str, report: &TrainReport) {
    let first = report.losses.first().copied().unwrap_or(f32::NAN);
    let last = report.losses.last().copied().unwrap_or(f32::NAN);
    println!(
        "{what}: {} epochs in {:.1}s, loss {first:.4} -> {last:.4} (seed {})",
        report.epochs, report.wall_seconds, report.seed
    );
}

// ---------------------------------------------------------------- gen-data

#[derive(Args)]
pub struct GenDataArgs {
    /// Output directory for PNG frames + manifest.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub per_cluster: Option<usize>,
    /// Frame extent, `64` or `64x64`.
    #[arg(long)]
    pub size: Option<String>,
    /// Rotation angles in degrees, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub angles: Option<Vec<f32>>,
    /// Fraction of frames rendered in the NBI-like modality.
    #[arg(long)]
    pub modality_fraction: Option<f64>,
    /// Varies rotation/modality draws while keeping cluster bases; use a
    /// different salt to generate a query corpus over the same clusters.
    #[arg(long)]
    pub augment_salt: Option<u64>,
}

pub fn gen_data(ctx: &Context, args: GenDataArgs) -> Result<()> {
    let defaults = SynthConfig::default();
    let size = match args.size.or(ctx.file.get("data.size")?) {
        Some(s) => parse_size(&s)?,
        None => defaults.image_size,
    };
    let config = SynthConfig {
        n_clusters: resolve(args.clusters, ctx.file.get("data.clusters")?, defaults.n_clusters),
        frames_per_cluster: resolve(
            args.per_cluster,
            ctx.file.get("data.per_cluster")?,
            defaults.frames_per_cluster,
        ),
        image_size: size,
        rotation_angles: resolve(
            args.angles,
            ctx.file.get_list("data.angles")?,
            defaults.rotation_angles,
        ),
        modality_fraction: resolve(
            args.modality_fraction,
            ctx.file.get("data.modality_fraction")?,
            defaults.modality_fraction,
        ),
        seed: ctx.seed,
        augment_salt: resolve(args.augment_salt, ctx.file.get("data.augment_salt")?, 0),
    };
    let corpus = generate_synthetic(&config)?;
    dataio::save_corpus(&corpus, &args.out)?;
    println!(
        "wrote {} frames ({} clusters x {}) at {}x{} to {}",
        corpus.len(),
        config.n_clusters,
        config.frames_per_cluster,
        config.image_size.0,
        config.image_size.1,
        args.out.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- train-*

#[derive(Args)]
pub struct TrainAeArgs {
    /// Corpus directory (PNG/PPM frames; manifest.csv picked up if present).
    #[arg(long)]
    pub data: PathBuf,
    /// Output weights file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub input_size: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
}

pub fn train_ae(ctx: &Context, args: TrainAeArgs) -> Result<()> {
    let corpus = load_corpus_auto(&args.data)?;
    let arch_default = AeConfig::default();
    let input_size = match args.input_size.or(ctx.file.get("ae.input_size")?) {
        Some(s) => parse_size(&s)?,
        None => arch_default.input_size,
    };
    let channels = match args.channels.or(ctx.file.get_list("ae.channels")?) {
        Some(v) => parse_channels(&v)?,
        None => arch_default.channels,
    };
    let config = AeTrainConfig {
        arch: AeConfig {
            input_size,
            channels,
            latent_dim: resolve(
                args.latent_dim,
                ctx.file.get("ae.latent_dim")?,
                arch_default.latent_dim,
            ),
        },
        epochs: resolve(args.epochs, ctx.file.get("ae.epochs")?, 500),
        batch_size: resolve(args.batch_size, ctx.file.get("ae.batch_size")?, 32),
        learning_rate: resolve(args.lr, ctx.file.get("ae.lr")?, 1.0),
        seed: ctx.seed,
    };
    let (model, report) = ae_train(&corpus, &config)?;
    save_model(&AnyModel::Ae(model), &args.out)?;
    print_train_summary("train-ae", &report);
    println!("weights: {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrainVaeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub input_size: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Latent dimensionality n.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    /// KL weight in BCE + beta * KL.
    #[arg(long)]
    pub beta: Option<f32>,
}

pub fn train_vae(ctx: &Context, args: TrainVaeArgs) -> Result<()> {
    let corpus = load_corpus_auto(&args.data)?;
    let arch_default = VaeConfig::default();
    let input_size = match args.input_size.or(ctx.file.get("vae.input_size")?) {
        Some(s) => parse_size(&s)?,
        None => arch_default.input_size,
    };
    let channels = match args.channels.or(ctx.file.get_list("vae.channels")?) {
        Some(v) => parse_channels(&v)?,
        None => arch_default.channels,
    };
    let config = VaeTrainConfig {
        arch: VaeConfig {
            input_size,
            channels,
            latent_dim: resolve(
                args.latent_dim,
                ctx.file.get("vae.latent_dim")?,
                arch_default.latent_dim,
            ),
            zero_init_heads: true,
        },
        epochs: resolve(args.epochs, ctx.file.get("vae.epochs")?, 500),
        batch_size: resolve(args.batch_size, ctx.file.get("vae.batch_size")?, 32),
        learning_rate: resolve(args.lr, ctx.file.get("vae.lr")?, 1e-3),
        beta: resolve(args.beta, ctx.file.get("vae.beta")?, 1.0),
        seed: ctx.seed,
        zero_noise: false,
    };
    let (model, report) = vae_train(&corpus, &config)?;
    save_model(&AnyModel::Vae(model), &args.out)?;
    print_train_summary("train-vae", &report);
    println!("weights: {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrainSiameseArgs {
    /// Labeled corpus directory (manifest.csv required).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of labeled pairs to sample for training.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub similar_fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch steps per epoch.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub input_size: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub margin: Option<f32>,
    #[arg(long)]
    pub lr: Option<f32>,
}

pub fn train_siamese(ctx: &Context, args: TrainSiameseArgs) -> Result<()> {
    let corpus = load_corpus_auto(&args.data)?;
    let arch_default = SiameseConfig::default();
    let input_size = match args.input_size.or(ctx.file.get("siamese.input_size")?) {
        Some(s) => parse_size(&s)?,
        None => arch_default.input_size,
    };
    let channels = match args.channels.or(ctx.file.get_list("siamese.channels")?) {
        Some(v) => parse_channels(&v)?,
        None => arch_default.channels,
    };
    let n_pairs = resolve(args.pairs, ctx.file.get("siamese.pairs")?, 1000);
    let similar_fraction = resolve(
        args.similar_fraction,
        ctx.file.get("siamese.similar_fraction")?,
        0.5,
    );
    let pairs = sample_pairs(&corpus, n_pairs, similar_fraction, ctx.seed)?;
    let config = SiameseTrainConfig {
        arch: SiameseConfig {
            input_size,
            channels,
            embed_dim: resolve(
                args.embed_dim,
                ctx.file.get("siamese.embed_dim")?,
                arch_default.embed_dim,
            ),
            margin: resolve(args.margin, ctx.file.get("siamese.margin")?, arch_default.margin),
        },
        epochs: resolve(args.epochs, ctx.file.get("siamese.epochs")?, 1000),
        iterations_per_epoch: resolve(args.iterations, ctx.file.get("siamese.iterations")?, 100),
        batch_size: resolve(args.batch_size, ctx.file.get("siamese.batch_size")?, 32),
        learning_rate: resolve(args.lr, ctx.file.get("siamese.lr")?, 0.005),
        seed: ctx.seed,
    };
    let (model, report) = siamese_train(&corpus, &pairs, &config)?;
    save_model(&AnyModel::Siamese(model), &args.out)?;
    print_train_summary("train-siamese", &report);
    println!("weights: {}", args.out.display());
    Ok(())
}

// -------------------------------------------------------------- build-index

/// Stats sidecar written by build-index and consumed by `report`.
#[derive(Serialize, Deserialize)]
pub struct StatsFile {
    pub label: String,
    pub n_frames: usize,
    pub raw_bytes: u64,
    pub index_bytes: u64,
    pub ratio: Option<f64>,
    pub encode_seconds: f64,
}

impl StatsFile {
    fn new(label: String, s: &CompressionStats) -> Self {
        StatsFile {
            label,
            n_frames: s.n_frames,
            raw_bytes: s.raw_bytes,
            index_bytes: s.index_bytes,
            ratio: s.ratio,
            encode_seconds: s.encode_seconds,
        }
    }

    fn into_stats(self) -> (String, CompressionStats) {
        (
            self.label,
            CompressionStats {
                n_frames: self.n_frames,
                raw_bytes: self.raw_bytes,
                index_bytes: self.index_bytes,
                ratio: self.ratio,
                encode_seconds: self.encode_seconds,
            },
        )
    }
}

#[derive(Args)]
pub struct BuildIndexArgs {
    /// AE or VAE weights file.
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus directory to encode.
    #[arg(long)]
    pub data: PathBuf,
    /// Output index file.
    #[arg(long)]
    pub out: PathBuf,
    /// Latent storage type: f32 or f16.
    #[arg(long)]
    pub dtype: Option<String>,
    /// Optional JSON sidecar with compression stats.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

pub fn build_index(ctx: &Context, args: BuildIndexArgs) -> Result<()> {
    let corpus = load_corpus_auto(&args.data)?;
    let (model, checksum) = load_model(&args.model)?;
    let dtype = match resolve(args.dtype, ctx.file.get("index.dtype")?, "f32".into()).as_str() {
        "f32" => LatentDtype::F32,
        "f16" => LatentDtype::F16,
        other => bail!("unknown dtype '{other}' (expected f32 or f16)"),
    };
    let (label, (latent_index, stats)) = match &model {
        AnyModel::Ae(m) => ("ae", index::build_index(m, checksum, &corpus, dtype)?),
        AnyModel::Vae(m) => ("vae", index::build_index(m, checksum, &corpus, dtype)?),
        AnyModel::Siamese(_) => bail!("indexes are built from AE or VAE models"),
    };
    index::save_index(&latent_index, &args.out)?;
    println!(
        "indexed {} frames (dim {}, {:?}) -> {} ({} bytes, ratio {})",
        latent_index.len(),
        latent_index.dim,
        dtype,
        args.out.display(),
        stats.index_bytes,
        stats
            .ratio
            .map(|r| format!("{r:.1}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    if let Some(stats_path) = &args.stats {
        let file = StatsFile::new(label.to_string(), &stats);
        std::fs::write(stats_path, serde_json::to_string_pretty(&file)?)
            .with_context(|| format!("writing {}", stats_path.display()))?;
        println!("stats: {}", stats_path.display());
    }
    Ok(())
}

// -------------------------------------------------------------------- query

#[derive(Args)]
pub struct QueryArgs {
    /// Latent index file.
    #[arg(long)]
    pub index: PathBuf,
    /// Weights of the encoder that built the index.
    #[arg(long)]
    pub model: PathBuf,
    /// Query image (PNG/PPM).
    #[arg(long)]
    pub frame: PathBuf,
    /// Siamese weights; enables re-ranking.
    #[arg(long)]
    pub siamese: Option<PathBuf>,
    /// Target corpus directory for candidate pixels (re-ranking falls back
    /// to decoder reconstructions without it).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Candidate pool size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Results to keep.
    #[arg(long)]
    pub n: Option<usize>,
    /// Re-rank score blend: (1-blend)*siamese + blend*l2.
    #[arg(long)]
    pub blend: Option<f32>,
    /// Write an HTML gallery of this query's results.
    #[arg(long)]
    pub gallery: Option<PathBuf>,
}

fn load_query_image(path: &Path) -> Result<frameseek_core::dataio::Image> {
    let img = image::open(path).map_err(|e| frameseek_core::Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    Ok(frameseek_core::dataio::Image::from_rgb8(
        rgb.height() as usize,
        rgb.width() as usize,
        rgb.as_raw(),
    ))
}

pub fn query(ctx: &Context, args: QueryArgs) -> Result<()> {
    let latent_index = index::load_index(&args.index)?;
    let (model, checksum) = load_model(&args.model)?;
    let siamese_model = match &args.siamese {
        Some(path) => match load_model(path)? {
            (AnyModel::Siamese(s), _) => Some(s),
            _ => bail!("--siamese must point to Siamese weights"),
        },
        None => None,
    };
    let frame = load_query_image(&args.frame)?;

    let request = QueryRequest {
        query_frame: &frame,
        candidate_k: resolve(args.k, ctx.file.get("query.k")?, 100),
        final_n: resolve(args.n, ctx.file.get("query.n")?, 10),
        use_siamese: siamese_model.is_some(),
        rerank_blend: resolve(args.blend, ctx.file.get("query.blend")?, 0.0),
    };
    let dir_access = args.data.as_ref().map(|dir| DirCorpusAccess { dir: dir.clone() });
    let ae_for_decode = match &model {
        AnyModel::Ae(m) => Some(m),
        _ => None,
    };
    let models = RetrievalModels {
        encoder: match &model {
            AnyModel::Ae(m) => m,
            AnyModel::Vae(m) => m,
            AnyModel::Siamese(_) => bail!("query encoder must be an AE or VAE model"),
        },
        encoder_checksum: checksum,
        siamese: siamese_model.as_ref(),
        ae_decoder: ae_for_decode,
    };
    let result = retrieve(
        &request,
        &models,
        &latent_index,
        dir_access.as_ref().map(|d| d as &dyn frameseek_core::retrieval::CorpusAccess),
    )?;

    print_result_table(&result);
    if result.clamped_k {
        eprintln!(
            "warning: candidate_k clamped to index size {}",
            latent_index.len()
        );
    }
    if result.reconstructed_candidates {
        eprintln!("note: candidate pixels were decoder reconstructions (no --data)");
    }

    if let Some(gallery_path) = &args.gallery {
        let store = dir_access
            .as_ref()
            .ok_or_else(|| anyhow!("--gallery needs --data for candidate pixels"))?;
        let entry = GalleryEntry {
            query_id: args
                .frame
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "query".into()),
            query_pixels: frame.clone(),
            methods: vec![(
                if request.use_siamese { "re-ranked" } else { "l2" }.to_string(),
                result.clone(),
            )],
        };
        render_gallery(&[entry], store, gallery_path)?;
        println!("gallery: {}", gallery_path.display());
    }
    Ok(())
}

fn print_result_table(result: &RetrievalResult) {
    println!("{:<5} {:<18} {:>10} {:>10}", "rank", "frame", "l2", "siamese");
    for r in &result.ranked {
        match r.siamese_distance {
            Some(d) => println!(
                "{:<5} {:<18} {:>10.4} {:>10.4}",
                r.final_rank, r.frame_id, r.l2_score, d
            ),
            None => println!(
                "{:<5} {:<18} {:>10.4} {:>10}",
                r.final_rank, r.frame_id, r.l2_score, "-"
            ),
        }
    }
    let t = result.timings;
    println!(
        "timings: encode {:.4}s, search {:.4}s, rerank {:.4}s",
        t.encode_s, t.search_s, t.rerank_s
    );
}

// --------------------------------------------------------------------- eval

#[derive(Args)]
pub struct EvalArgs {
    /// Target corpus directory (labeled).
    #[arg(long)]
    pub target: PathBuf,
    /// Query corpus directory (labeled).
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub ae: PathBuf,
    #[arg(long)]
    pub vae: PathBuf,
    #[arg(long)]
    pub siamese: PathBuf,
    /// Output CSV (method,tp,fp,precision). With multiple seeds, per-seed
    /// files <stem>_seed<N>.csv plus <stem>_mean.csv are written instead.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_queries: Option<usize>,
    #[arg(long)]
    pub final_n: Option<usize>,
    #[arg(long)]
    pub candidate_k: Option<usize>,
    /// Evaluation seeds; defaults to the global --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Render the first few queries into an HTML gallery.
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// How many queries the gallery shows.
    #[arg(long, default_value_t = 2)]
    pub gallery_queries: usize,
}

fn seed_path(out: &Path, tag: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let ext = out.extension().map(|s| s.to_string_lossy().into_owned());
    let name = match ext {
        Some(ext) => format!("{stem}_{tag}.{ext}"),
        None => format!("{stem}_{tag}"),
    };
    out.with_file_name(name)
}

pub fn eval(ctx: &Context, args: EvalArgs) -> Result<()> {
    let target = load_corpus_auto(&args.target)?;
    let queries = load_corpus_auto(&args.queries)?;
    let (ae_model, ae_checksum) = load_model(&args.ae)?;
    let (vae_model, vae_checksum) = load_model(&args.vae)?;
    let (siamese_model, _) = load_model(&args.siamese)?;
    let (AnyModel::Ae(ae_model), AnyModel::Vae(vae_model), AnyModel::Siamese(siamese_model)) =
        (ae_model, vae_model, siamese_model)
    else {
        bail!("--ae/--vae/--siamese must point to weights of the matching kinds");
    };

    let models = EvalModels {
        ae: &ae_model,
        ae_checksum,
        vae: &vae_model,
        vae_checksum,
        siamese: &siamese_model,
    };
    let base = EvalConfig {
        n_queries: resolve(args.n_queries, ctx.file.get("eval.n_queries")?, 49),
        final_n: resolve(args.final_n, ctx.file.get("eval.final_n")?, 10),
        candidate_k: resolve(args.candidate_k, ctx.file.get("eval.candidate_k")?, 100),
        seed: ctx.seed,
    };
    let seeds = args.seeds.unwrap_or_else(|| vec![ctx.seed]);

    let mut reports: Vec<(u64, EvalReport)> = Vec::new();
    for &seed in &seeds {
        let report = evaluate(&queries, &target, &models, &EvalConfig { seed, ..base })?;
        println!("seed {seed}:");
        for (name, m) in METHOD_NAMES.iter().zip(&report.methods) {
            println!("  {name:<12} tp {:>5}  fp {:>5}  precision {:.4}", m.tp, m.fp, m.precision);
        }
        reports.push((seed, report));
    }

    if reports.len() == 1 {
        std::fs::write(&args.out, reports[0].1.to_csv())
            .with_context(|| format!("writing {}", args.out.display()))?;
        println!("report: {}", args.out.display());
    } else {
        for (seed, report) in &reports {
            let path = seed_path(&args.out, &format!("seed{seed}"));
            std::fs::write(&path, report.to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("report: {}", path.display());
        }
        // mean row per method across seeds, the analogue of a mean-across-
        // patients summary
        let mut csv = String::from("method,tp,fp,precision\n");
        for (i, name) in METHOD_NAMES.iter().enumerate() {
            let n = reports.len() as f64;
            let tp: f64 = reports.iter().map(|(_, r)| r.methods[i].tp as f64).sum::<f64>() / n;
            let fp: f64 = reports.iter().map(|(_, r)| r.methods[i].fp as f64).sum::<f64>() / n;
            let p: f64 = reports.iter().map(|(_, r)| r.methods[i].precision).sum::<f64>() / n;
            csv.push_str(&format!("{name},{tp:.1},{fp:.1},{p:.6}\n"));
        }
        let mean_path = seed_path(&args.out, "mean");
        std::fs::write(&mean_path, csv)
            .with_context(|| format!("writing {}", mean_path.display()))?;
        println!("mean report: {}", mean_path.display());
    }

    if let Some(gallery_path) = &args.gallery {
        let entries = gallery_entries(
            &queries,
            &target,
            &models,
            &base,
            args.gallery_queries,
        )?;
        render_gallery(&entries, &target, gallery_path)?;
        println!("gallery: {}", gallery_path.display());
    }
    Ok(())
}

/// Re-run the four methods on the first few sampled queries for the gallery.
fn gallery_entries(
    queries: &FrameCorpus,
    target: &FrameCorpus,
    models: &EvalModels<'_>,
    config: &EvalConfig,
    count: usize,
) -> Result<Vec<GalleryEntry>> {
    use frameseek_core::index::build_index;
    let (ae_index, _) = build_index(models.ae, models.ae_checksum, target, LatentDtype::F32)?;
    let (vae_index, _) = build_index(models.vae, models.vae_checksum, target, LatentDtype::F32)?;
    let mut entries = Vec::new();
    for frame in queries.frames.iter().take(count) {
        let mut methods = Vec::new();
        for name in METHOD_NAMES {
            let use_siamese = name.ends_with("siamese");
            let (encoder, checksum, index): (&dyn frameseek_core::models::LatentEncoder, _, _) =
                if name.starts_with("ae") {
                    (models.ae, models.ae_checksum, &ae_index)
                } else {
                    (models.vae, models.vae_checksum, &vae_index)
                };
            let request = QueryRequest {
                query_frame: &frame.pixels,
                candidate_k: config.candidate_k,
                final_n: config.final_n,
                use_siamese,
                rerank_blend: 0.0,
            };
            let retrieval_models = RetrievalModels {
                encoder,
                encoder_checksum: checksum,
                siamese: use_siamese.then_some(models.siamese),
                ae_decoder: None,
            };
            let result = retrieve(&request, &retrieval_models, index, Some(target))?;
            methods.push((name.to_string(), result));
        }
        entries.push(GalleryEntry {
            query_id: frame.id.clone(),
            query_pixels: frame.pixels.clone(),
            methods,
        });
    }
    Ok(entries)
}

// ------------------------------------------------------------------- report

#[derive(Args)]
pub struct ReportArgs {
    /// Stats JSON files produced by `build-index --stats`.
    #[arg(required = true)]
    pub stats: Vec<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn report(_ctx: &Context, args: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.stats {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read stats file {}", path.display()))?;
        let file: StatsFile = serde_json::from_str(&text)
            .with_context(|| format!("malformed stats file {}", path.display()))?;
        rows.push(file.into_stats());
    }
    let (table, csv) = compression_report(&rows);
    print!("{table}");
    std::fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    println!("report: {}", args.out.display());
    Ok(())
}
