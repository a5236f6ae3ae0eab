//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use shapecomp_core::completion::{complete, fuse, CompletionConfig, CompletionStatus, GroundTruth, RefinementSchedule};
use shapecomp_core::eval::{score, CompletionScore};
use shapecomp_core::mesh::Mesh;
use shapecomp_core::partial::{
    corrupt_correspondence, generate_family, hyperplane_cut, hyperplane_cut_with_normal, remove_patches, virtual_scan,
    PartialShape, Viewpoint,
};
use shapecomp_core::rng::{derive_seed, seeded};
use shapecomp_core::vae::{train_with, LatentVector, TrainStatus, VaeModel};

use crate::bench::{make_cases, run_bench, CaseRecord};
use crate::checkpoint::{load_model, save_model, sidecar_path};
use crate::config::RunConfig;
use crate::csv_out::{write_loss_curve, write_results, write_rows, write_trace, ResultRow};
use crate::dataset::{load_split, write_family, Split};
use crate::error::{Error, Result};
use crate::fs::{create_dir, write_json, write_text};
use crate::manifest::ManifestBuilder;
use crate::mesh_io::{load_mesh, save_mesh};
use crate::parallel::executor;
use crate::partial_io::{load_partial, partial_sidecar_path, save_partial};

#[derive(Debug, Parser)]
#[command(
    name = "shapecomp",
    version,
    about = "Mesh VAE training and latent-space shape completion"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration file (.json or .toml).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Model preset: paper (full scale, default), desk or face.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Progress line to stderr every this many iterations (0 disables).
    #[arg(long, global = true, default_value_t = 100)]
    pub progress_every: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic shape family.
    GenData {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train a VAE on a directory of meshes.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Decode random draws from the prior.
    Sample {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Decode convex combinations of two encoded shapes.
    Interpolate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        to: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Complete a partial shape.
    Complete {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        partial: PathBuf,
        /// Full ground-truth mesh in the partial frame, for error reporting.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[command(flatten)]
        opts: CompletionArgs,
    },
    /// Complete several views and decode the mean latent.
    Fuse {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        partials: Vec<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[command(flatten)]
        opts: CompletionArgs,
    },
    /// Derive a partial shape from a full mesh.
    GenPartial {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum)]
        kind: PartialKind,
        /// Scanner position `x,y,z` (scan).
        #[arg(long, value_parser = parse_point3, allow_hyphen_values = true)]
        viewpoint: Option<[f64; 3]>,
        /// Scanner direction `x,y,z`, scanner at infinity (scan).
        #[arg(long, value_parser = parse_point3, allow_hyphen_values = true)]
        direction: Option<[f64; 3]>,
        /// Number of rectangles (patches).
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0.3)]
        w_frac: f64,
        #[arg(long, default_value_t = 0.3)]
        h_frac: f64,
        /// Cut normal `x,y,z`; random when omitted (cut).
        #[arg(long, value_parser = parse_point3, allow_hyphen_values = true)]
        normal: Option<[f64; 3]>,
        /// Fraction of correspondences to shuffle.
        #[arg(long, default_value_t = 0.0)]
        corrupt: f64,
    },
    /// Score a completed mesh against ground truth.
    Eval {
        #[arg(long)]
        completed: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Partial shape whose mask defines the seen region.
        #[arg(long)]
        partial: PathBuf,
        #[arg(long, default_value = "ours")]
        method: String,
    },
    /// Cases from held-out shapes, completion plus baseline, scores and
    /// convergence summary.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cut_cases: Option<usize>,
        #[arg(long)]
        scan_cases: Option<usize>,
        #[arg(long)]
        corruption: Option<f64>,
        #[arg(long)]
        no_baseline: bool,
        #[command(flatten)]
        opts: CompletionArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartialKind {
    Scan,
    Patches,
    Cut,
}

#[derive(Debug, Args)]
pub struct CompletionArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub latent_lr: Option<f64>,
    /// Random-prior starts; the lowest final objective wins.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Refine correspondences when the seen error plateaus.
    #[arg(long)]
    pub refine: bool,
    /// Refine correspondences at this iteration.
    #[arg(long)]
    pub refine_at: Option<usize>,
}

impl CompletionArgs {
    fn apply(&self, config: &mut CompletionConfig) {
        if let Some(n) = self.iterations {
            config.max_iters = n;
        }
        if let Some(lr) = self.latent_lr {
            config.learning_rate = lr;
        }
        if let Some(k) = self.starts {
            config.starts = k;
        }
        if let Some(k) = self.refine_at {
            config.refinement = RefinementSchedule::at_iteration(k);
        } else if self.refine {
            config.refinement = RefinementSchedule::plateau();
        }
    }
}

struct Context {
    config: RunConfig,
    global: GlobalArgs,
    args: Vec<String>,
}

impl Context {
    fn manifest(&self, command: &str, seed: u64) -> ManifestBuilder {
        ManifestBuilder::new(command, self.args.clone(), seed)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.global.out_dir.join(name)
    }

    fn progress(&self, iteration: usize, line: impl FnOnce() -> String) {
        let every = self.global.progress_every;
        if every > 0 && iteration.is_multiple_of(every) {
            eprintln!("{}", line());
        }
    }

    fn completion_config(&self, opts: &CompletionArgs) -> CompletionConfig {
        let mut c = self.config.completion.clone();
        opts.apply(&mut c);
        c
    }
}

fn require_model(model: &Option<PathBuf>, manifest: &mut ManifestBuilder) -> Result<VaeModel> {
    let path = model.as_ref().ok_or(Error::ModelRequired)?;
    manifest.input(path)?;
    load_model(path)
}

fn parse_point3(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match parts.as_slice() {
        &[x, y, z] => Ok([x, y, z]),
        _ => Err(format!("expected x,y,z, got {} values", parts.len())),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        config.family.seed = seed;
        config.completion.seed = seed;
        config.bench.seed = seed;
        config.vae.insert("seed".into(), seed.into());
    }
    if cli.global.workers == 0 {
        return Err(Error::Usage("--workers must be at least 1".into()));
    }
    let ctx = Context {
        config,
        global: cli.global,
        args,
    };
    create_dir(&ctx.global.out_dir)?;
    match &cli.command {
        Command::GenData { samples } => gen_data(&ctx, *samples),
        Command::Train {
            data,
            iterations,
            lambda,
            learning_rate,
            batch_size,
        } => train_cmd(&ctx, data, *iterations, *lambda, *learning_rate, *batch_size),
        Command::Sample { model, count } => sample_cmd(&ctx, model, *count),
        Command::Interpolate { model, from, to, steps } => interpolate_cmd(&ctx, model, from, to, *steps),
        Command::Complete {
            model,
            partial,
            ground_truth,
            opts,
        } => complete_cmd(&ctx, model, partial, ground_truth.as_deref(), opts),
        Command::Fuse {
            model,
            partials,
            ground_truth,
            opts,
        } => fuse_cmd(&ctx, model, partials, ground_truth.as_deref(), opts),
        Command::GenPartial {
            mesh,
            kind,
            viewpoint,
            direction,
            count,
            w_frac,
            h_frac,
            normal,
            corrupt,
        } => {
            let spec = PartialSpec {
                kind: *kind,
                viewpoint: *viewpoint,
                direction: *direction,
                count: *count,
                w_frac: *w_frac,
                h_frac: *h_frac,
                normal: *normal,
                corrupt: *corrupt,
            };
            gen_partial_cmd(&ctx, mesh, &spec)
        }
        Command::Eval {
            completed,
            ground_truth,
            partial,
            method,
        } => eval_cmd(&ctx, completed, ground_truth, partial, method),
        Command::Bench {
            model,
            data,
            cut_cases,
            scan_cases,
            corruption,
            no_baseline,
            opts,
        } => {
            let mut bench = ctx.config.bench.clone();
            if let Some(n) = cut_cases {
                bench.cut_cases = *n;
            }
            if let Some(n) = scan_cases {
                bench.scan_cases = *n;
            }
            if let Some(c) = corruption {
                bench.corruption = *c;
            }
            if *no_baseline {
                bench.nn_baseline = false;
            }
            bench_cmd(&ctx, model, data, &bench, opts)
        }
    }
}

fn gen_data(ctx: &Context, samples: Option<usize>) -> Result<()> {
    let mut config = ctx.config.family.clone();
    if let Some(n) = samples {
        config.samples = n;
    }
    let mut manifest = ctx.manifest("gen-data", config.seed);
    manifest.config(&config)?;
    let family = generate_family(&config)?;
    for path in write_family(&family, &config, &ctx.global.out_dir)? {
        manifest.output(&path);
    }
    manifest.summary(&serde_json::json!({
        "train": family.train.len(),
        "test": family.test.len(),
        "vertices": family.template.vertex_count(),
    }))?;
    eprintln!(
        "generated {} train and {} test shapes ({} vertices)",
        family.train.len(),
        family.test.len(),
        family.template.vertex_count()
    );
    manifest.finish(&ctx.global.out_dir)?;
    Ok(())
}

#[derive(Serialize)]
struct LogLine<'a> {
    event: &'a str,
    iteration: usize,
    total: f64,
    recon: f64,
    prior: f64,
}

fn train_cmd(
    ctx: &Context,
    data: &Path,
    iterations: Option<usize>,
    lambda: Option<f64>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
) -> Result<()> {
    let mut config = ctx.config.vae_config(ctx.global.preset.as_deref())?;
    if let Some(n) = iterations {
        config.iterations = n;
    }
    if let Some(l) = lambda {
        config.lambda = l;
    }
    if let Some(lr) = learning_rate {
        config.learning_rate = lr;
    }
    if let Some(b) = batch_size {
        config.batch_size = b;
    }
    config.validate()?;
    let mut manifest = ctx.manifest("train", config.seed);
    manifest.config(&config)?;
    let (files, dataset) = load_split(data, Split::Train)?;
    for f in &files {
        manifest.input(f)?;
    }
    let exec = executor(ctx.global.workers)?;
    let mut log = String::new();
    let mut progress = |r: &shapecomp_core::vae::LossRecord| {
        ctx.progress(r.iteration, || {
            format!(
                "iter {:>7}  L {:.6}  L_r {:.6}  L_p {:.3}",
                r.iteration, r.total, r.recon, r.prior
            )
        });
        if ctx.global.progress_every > 0 && r.iteration.is_multiple_of(ctx.global.progress_every) {
            let line = LogLine {
                event: "loss",
                iteration: r.iteration,
                total: r.total,
                recon: r.recon,
                prior: r.prior,
            };
            log.push_str(&serde_json::to_string(&line).unwrap_or_default());
            log.push('\n');
        }
    };
    let outcome = train_with(&dataset, &config, exec.as_ref(), &mut progress)?;
    let ckpt = ctx.out("model.ckpt");
    save_model(&outcome.model, &ckpt)?;
    let loss = ctx.out("loss.csv");
    write_loss_curve(&loss, &outcome.curve)?;
    let log_path = ctx.out("train.log.jsonl");
    write_text(&log_path, &log)?;
    for p in [&ckpt, &sidecar_path(&ckpt), &loss, &log_path] {
        manifest.output(p);
    }
    manifest.summary(&serde_json::json!({
        "status": outcome.status,
        "final": outcome.curve.last(),
        "shapes": dataset.len(),
    }))?;
    manifest.finish(&ctx.global.out_dir)?;
    match outcome.status {
        TrainStatus::Completed => Ok(()),
        TrainStatus::Diverged { iteration } => Err(Error::Diverged {
            iteration,
            checkpoint: ckpt,
        }),
    }
}

fn sample_cmd(ctx: &Context, model: &Option<PathBuf>, count: usize) -> Result<()> {
    let seed = ctx.global.seed.unwrap_or(0);
    let mut manifest = ctx.manifest("sample", seed);
    let model = require_model(model, &mut manifest)?;
    let mut rng = seeded(seed);
    let mut latents = Vec::new();
    for k in 0..count {
        let z = model.sample_prior(&mut rng);
        let path = ctx.out(&format!("sample_{k:03}.obj"));
        save_mesh(&model.decode(&z)?, &path)?;
        manifest.output(&path);
        latents.push(z.into_vec());
    }
    let lat = ctx.out("latents.json");
    write_json(&lat, &latents)?;
    manifest.output(&lat);
    manifest.finish(&ctx.global.out_dir)?;
    Ok(())
}

fn interpolate_cmd(ctx: &Context, model: &Option<PathBuf>, from: &Path, to: &Path, steps: usize) -> Result<()> {
    if steps < 2 {
        return Err(Error::Usage("--steps must be at least 2".into()));
    }
    let mut manifest = ctx.manifest("interpolate", 0);
    let model = require_model(model, &mut manifest)?;
    manifest.input(from)?;
    manifest.input(to)?;
    let za = LatentVector::new(model.encode(&load_mesh(from)?)?.mu)?;
    let zb = LatentVector::new(model.encode(&load_mesh(to)?)?.mu)?;
    for k in 0..steps {
        let alpha = k as f64 / (steps - 1) as f64;
        let path = ctx.out(&format!("interp_{k:03}.obj"));
        save_mesh(&model.interpolate(&za, &zb, alpha)?, &path)?;
        manifest.output(&path);
    }
    manifest.finish(&ctx.global.out_dir)?;
    Ok(())
}

#[derive(Serialize)]
struct CompletionSummary {
    status: CompletionStatus,
    latent: Vec<f64>,
    transform: shapecomp_core::rigid::RigidTransform,
    final_seen_error: Option<f64>,
    final_unseen_error: Option<f64>,
    refinements: Vec<usize>,
    score: Option<CompletionScore>,
}

fn load_truth(path: Option<&Path>, manifest: &mut ManifestBuilder) -> Result<Option<Mesh>> {
    path.map(|p| {
        manifest.input(p)?;
        load_mesh(p)
    })
    .transpose()
}

fn complete_cmd(
    ctx: &Context,
    model: &Option<PathBuf>,
    partial: &Path,
    ground_truth: Option<&Path>,
    opts: &CompletionArgs,
) -> Result<()> {
    let config = ctx.completion_config(opts);
    let mut manifest = ctx.manifest("complete", config.seed);
    manifest.config(&config)?;
    let model = require_model(model, &mut manifest)?;
    manifest.input(partial)?;
    let ps = load_partial(partial)?;
    let truth = load_truth(ground_truth, &mut manifest)?;
    let out = complete(
        &ps.points,
        &ps.correspondence,
        &model,
        &config,
        truth.as_ref().map(|m| GroundTruth {
            vertices: m.vertices(),
            mask: &ps.mask,
        }),
    )?;
    let mesh = out.mesh_in_partial_frame()?;
    let mesh_path = ctx.out("completed.obj");
    save_mesh(&mesh, &mesh_path)?;
    let trace_path = ctx.out("trace.csv");
    write_trace(&trace_path, &out.trace)?;
    manifest.output(&mesh_path);
    manifest.output(&trace_path);
    let last = out.trace.entries.last();
    let summary = CompletionSummary {
        status: out.status,
        latent: out.latent.as_slice().to_vec(),
        transform: out.transform,
        final_seen_error: last.map(|e| e.seen_error),
        final_unseen_error: last.and_then(|e| e.unseen_error),
        refinements: out.trace.refinement_iterations(),
        score: truth.as_ref().map(|gt| score(&mesh, gt, &ps.mask)).transpose()?,
    };
    if let Some(s) = &summary.score {
        eprintln!(
            "seen {:?}  unseen {:?}  total {:.6}  volume {:.3}%",
            s.err_seen, s.err_unseen, s.err_total, s.vol_err_pct
        );
    }
    manifest.summary(&summary)?;
    manifest.finish(&ctx.global.out_dir)?;
    match out.status {
        CompletionStatus::Completed => Ok(()),
        CompletionStatus::Diverged { iteration } => Err(Error::CompletionDiverged(iteration)),
    }
}

fn fuse_cmd(
    ctx: &Context,
    model: &Option<PathBuf>,
    partials: &[PathBuf],
    ground_truth: Option<&Path>,
    opts: &CompletionArgs,
) -> Result<()> {
    let config = ctx.completion_config(opts);
    let mut manifest = ctx.manifest("fuse", config.seed);
    manifest.config(&config)?;
    let model = require_model(model, &mut manifest)?;
    let truth = load_truth(ground_truth, &mut manifest)?;
    let mut latents = Vec::new();
    let mut transforms = Vec::new();
    let mut views = Vec::new();
    for (k, path) in partials.iter().enumerate() {
        manifest.input(path)?;
        let ps = load_partial(path)?;
        let cfg = CompletionConfig {
            seed: derive_seed(config.seed, k as u64),
            ..config.clone()
        };
        let out = complete(&ps.points, &ps.correspondence, &model, &cfg, None)?;
        if let CompletionStatus::Diverged { iteration } = out.status {
            return Err(Error::CompletionDiverged(iteration));
        }
        let mesh = out.mesh_in_partial_frame()?;
        let view_path = ctx.out(&format!("view_{k:02}.obj"));
        save_mesh(&mesh, &view_path)?;
        manifest.output(&view_path);
        let s = truth
            .as_ref()
            .map(|gt| score(&mesh, gt, &vec![false; gt.vertex_count()]))
            .transpose()?;
        views.push(serde_json::json!({ "partial": path, "score": s }));
        latents.push(out.latent);
        transforms.push(out.transform);
    }
    let to_first = transforms[0].inverse();
    let fused = fuse(&latents, &model)?.map_vertices(|v| to_first.apply(*v))?;
    let fused_path = ctx.out("fused.obj");
    save_mesh(&fused, &fused_path)?;
    manifest.output(&fused_path);
    let fused_score = truth
        .as_ref()
        .map(|gt| score(&fused, gt, &vec![false; gt.vertex_count()]))
        .transpose()?;
    let latent = shapecomp_core::completion::mean_latent(&latents)?;
    manifest.summary(&serde_json::json!({
        "views": views,
        "fused_score": fused_score,
        "latent": latent.as_slice(),
    }))?;
    manifest.finish(&ctx.global.out_dir)?;
    Ok(())
}

struct PartialSpec {
    kind: PartialKind,
    viewpoint: Option<[f64; 3]>,
    direction: Option<[f64; 3]>,
    count: usize,
    w_frac: f64,
    h_frac: f64,
    normal: Option<[f64; 3]>,
    corrupt: f64,
}

fn gen_partial_cmd(ctx: &Context, mesh_path: &Path, spec: &PartialSpec) -> Result<()> {
    let seed = ctx.global.seed.unwrap_or(0);
    let mut manifest = ctx.manifest("gen-partial", seed);
    manifest.input(mesh_path)?;
    let mesh = load_mesh(mesh_path)?;
    let ps: PartialShape = match spec.kind {
        PartialKind::Scan => {
            let viewpoint = match (spec.viewpoint, spec.direction) {
                (Some(at), None) => Viewpoint::Position { at },
                (None, Some(towards)) => Viewpoint::Direction { towards },
                _ => {
                    return Err(Error::Usage(
                        "scan needs exactly one of --viewpoint or --direction".into(),
                    ))
                }
            };
            virtual_scan(&mesh, viewpoint)?
        }
        PartialKind::Patches => remove_patches(&mesh, spec.count, spec.w_frac, spec.h_frac, seed)?,
        PartialKind::Cut => match spec.normal {
            Some(n) => hyperplane_cut_with_normal(&mesh, n)?,
            None => hyperplane_cut(&mesh, seed)?,
        },
    };
    let ps = if spec.corrupt > 0.0 {
        corrupt_correspondence(&ps, spec.corrupt, derive_seed(seed, 1))?
    } else {
        ps
    };
    let path = ctx.out("partial.ply");
    save_partial(&ps, &path)?;
    manifest.output(&path);
    manifest.output(&partial_sidecar_path(&path));
    manifest.summary(&serde_json::json!({ "points": ps.len(), "vertices": mesh.vertex_count() }))?;
    eprintln!("kept {} of {} vertices", ps.len(), mesh.vertex_count());
    manifest.finish(&ctx.global.out_dir)?;
    Ok(())
}

fn eval_cmd(ctx: &Context, completed: &Path, ground_truth: &Path, partial: &Path, method: &str) -> Result<()> {
    let mut manifest = ctx.manifest("eval", 0);
    for p in [completed, ground_truth, partial] {
        manifest.input(p)?;
    }
    let ps = load_partial(partial)?;
    let s = score(&load_mesh(completed)?, &load_mesh(ground_truth)?, &ps.mask)?;
    let row = ResultRow {
        case_id: partial
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("case")
            .to_string(),
        method: method.to_string(),
        err_seen: s.err_seen,
        err_unseen: s.err_unseen,
        err_total: s.err_total,
        vol_err_pct: s.vol_err_pct,
        runtime_ms: 0.0,
    };
    let csv = ctx.out("results.csv");
    write_results(&csv, &[row])?;
    let json = ctx.out("score.json");
    write_json(&json, &s)?;
    manifest.output(&csv);
    manifest.output(&json);
    manifest.summary(&s)?;
    manifest.finish(&ctx.global.out_dir)?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    iter: usize,
    mean_seen: f64,
    mean_unseen: Option<f64>,
}

fn bench_cmd(
    ctx: &Context,
    model: &Option<PathBuf>,
    data: &Path,
    bench: &crate::bench::BenchConfig,
    opts: &CompletionArgs,
) -> Result<()> {
    let completion = ctx.completion_config(opts);
    let mut manifest = ctx.manifest("bench", bench.seed);
    manifest.config(&serde_json::json!({ "bench": bench, "completion": completion }))?;
    let model = require_model(model, &mut manifest)?;
    let (test_files, shapes) = load_split(data, Split::Test)?;
    for f in &test_files {
        manifest.input(f)?;
    }
    let training = if bench.nn_baseline {
        Some(load_split(data, Split::Train)?.1)
    } else {
        None
    };
    let cases = make_cases(&shapes, bench)?;
    let cases_path = ctx.out("cases.json");
    write_json(&cases_path, &cases.iter().map(CaseRecord::from).collect::<Vec<_>>())?;
    let output = run_bench(
        &model,
        &shapes,
        training.as_deref(),
        &cases,
        &completion,
        ctx.global.workers,
    )?;
    let results = ctx.out("results.csv");
    write_results(&results, &output.rows())?;
    for (case, outcome) in cases.iter().zip(&output.outcomes) {
        let path = ctx.out(&format!("traces/{}.csv", case.id));
        write_trace(&path, &outcome.completion.trace)?;
    }
    let conv = &output.summary.convergence;
    let curve: Vec<CurveRow> = conv
        .mean_seen
        .iter()
        .enumerate()
        .map(|(i, s)| CurveRow {
            iter: i,
            mean_seen: *s,
            mean_unseen: conv.mean_unseen.as_ref().and_then(|u| u.get(i).copied()),
        })
        .collect();
    let curve_path = ctx.out("convergence.csv");
    write_rows(&curve_path, &curve, &["iter", "mean_seen", "mean_unseen"])?;
    let summary_path = ctx.out("summary.json");
    write_json(&summary_path, &output.summary)?;
    for p in [&cases_path, &results, &curve_path, &summary_path] {
        manifest.output(p);
    }
    eprintln!(
        "{} cases  mean unseen ours {:?}  nn {:?}  win rate {:?}",
        output.summary.cases, output.summary.mean_unseen_ours, output.summary.mean_unseen_nn, output.summary.win_rate
    );
    manifest.summary(&output.summary)?;
    manifest.finish(&ctx.global.out_dir)?;
    Ok(())
}
