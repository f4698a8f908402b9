//! Subcommands. Every command resolves and validates its parameters before
//! reading any input.

use std::fs;
use std::path::{Path, PathBuf};

use atomtrack_core::neighbor::{self, Rect};
use atomtrack_core::stack_io::{self, StackFormat};
use atomtrack_core::synth::{self, SynthParams};
use atomtrack_core::{
    build_tracks, detect_stack, label_tracks, AtomCenter, BlurParams, ClassifyParams, DetectionParams, ImageStack,
    LabeledTrack, TrackParams,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{parse_list, parse_pair, parse_set, parse_value, Config};
use crate::render::{self, RenderStyle};
use crate::{Failure, StageExt};

#[derive(Parser, Debug)]
#[command(name = "atomtrack", version, about = "Detect, track and classify atoms in image stacks")]
pub struct Cli {
    /// `key = value` file of defaults; command-line flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic lattice stack and its ground truth
    Synth(SynthArgs),
    /// Detect atom centers in every frame of a stack
    Detect(DetectArgs),
    /// Link detected centers into full-length tracks
    Track(TrackArgs),
    /// Assign species labels to tracks
    Classify(ClassifyArgs),
    /// Histogram of center-to-center distances in one frame
    Histogram(HistogramArgs),
    /// Render overlays, scatter, trajectory and species maps
    Render(RenderArgs),
    /// Run detect, track, classify and histogram in one go
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputOpts {
    /// Frame directory or raw f32 stack
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// `frame_directory` or `raw_stack`; inferred from the path if omitted
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DetectOpts {
    /// Denoising blur sigma in pixels, 0 to disable [default: 4]
    #[arg(long)]
    pub blur_sigma: Option<String>,
    /// Comma-separated detection scales [default: 2,3,4,6,8,12]
    #[arg(long)]
    pub scales: Option<String>,
    /// `coherent` or `max` [default: coherent]
    #[arg(long)]
    pub scale_selection: Option<String>,
    /// Threshold quantile of the determinant map [default: 0.6]
    #[arg(long)]
    pub percentile: Option<String>,
    /// Smallest region kept, in pixels [default: 5]
    #[arg(long)]
    pub min_region_px: Option<String>,
    /// Re-analyze oversized regions to split merged blobs
    #[arg(long)]
    pub nested_pass: bool,
    /// `weighted` or `plain` [default: weighted]
    #[arg(long)]
    pub centroid: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrackOpts {
    /// Linking radius in pixels [default: 15]
    #[arg(long)]
    pub r0: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ClassifyOpts {
    /// Inner and outer annulus radii [default: 20,30]
    #[arg(long)]
    pub annulus: Option<String>,
    /// Neighbor search radius [default: 30]
    #[arg(long)]
    pub nn_radius: Option<String>,
    /// Shell sizes that take part in voting [default: 2,3,4]
    #[arg(long)]
    pub accept_counts: Option<String>,
    /// Only the focal center votes
    #[arg(long)]
    pub no_cross_vote: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct HistogramOpts {
    /// Bin width in pixels [default: 1]
    #[arg(long)]
    pub bin_width: Option<String>,
    /// Only centers inside `x0,y0,x1,y1`
    #[arg(long)]
    pub region: Option<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// `frame_directory` or `raw_stack`
    #[arg(long, default_value = "frame_directory")]
    pub format: String,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 25.0)]
    pub lattice_constant: f64,
    #[arg(long, default_value_t = 5.0)]
    pub blob_sigma: f64,
    /// Fractional brightness of Se over Mo
    #[arg(long, default_value_t = 0.08)]
    pub contrast: f64,
    /// Mo peak height over noise sigma
    #[arg(long, conflicts_with = "noise_sigma")]
    pub snr: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Per-frame drift `dx,dy` in pixels
    #[arg(long, default_value = "0,0")]
    pub drift: String,
    /// Per-atom positional jitter sigma in pixels
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    pub vacancy: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputOpts,
    /// Centers CSV to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub detect: DetectOpts,
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Centers CSV from `detect`
    #[arg(long)]
    pub centers: PathBuf,
    /// Tracks CSV to write (its summary goes next to it)
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub track: TrackOpts,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub centers: PathBuf,
    /// Tracks CSV from `track`
    #[arg(long)]
    pub tracks: PathBuf,
    /// Labeled tracks CSV to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub classify: ClassifyOpts,
}

#[derive(Args, Debug)]
pub struct HistogramArgs {
    #[arg(long)]
    pub centers: PathBuf,
    /// Histogram CSV to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Use each center's nearest-neighbor distance instead of all pairs
    #[arg(long)]
    pub nearest: bool,
    /// Also write a bar chart
    #[arg(long, value_name = "PNG")]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub hist: HistogramOpts,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub input: InputOpts,
    #[arg(long)]
    pub centers: PathBuf,
    /// Labeled tracks CSV; enables trajectory and species maps
    #[arg(long)]
    pub tracks: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-frame PNG sequences
    #[arg(long)]
    pub sequence: bool,
    #[command(flatten)]
    pub hist: HistogramOpts,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub input: InputOpts,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub detect: DetectOpts,
    #[command(flatten)]
    pub track: TrackOpts,
    #[command(flatten)]
    pub classify: ClassifyOpts,
    #[command(flatten)]
    pub hist: HistogramOpts,
    /// Render images into `<out>/render`
    #[arg(long)]
    pub render: bool,
    /// With `--render`, also write per-frame PNG sequences
    #[arg(long)]
    pub sequence: bool,
}

fn flag<T>(raw: &Option<String>, name: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, Failure> {
    raw.as_deref()
        .map(|s| parse(s).map_err(|e| Failure::usage(format!("--{name}: {e}"))))
        .transpose()
}

fn setting<T: Clone>(
    cfg: &Config,
    raw: &Option<String>,
    key: &str,
    parse: impl Fn(&str) -> Result<T, String> + Copy,
) -> Result<Option<T>, Failure> {
    let f = flag(raw, key, parse)?;
    cfg.pick(f.as_ref(), key, parse)
}

impl DetectOpts {
    pub fn params(&self, cfg: &Config) -> Result<DetectionParams, Failure> {
        let mut p = DetectionParams::default();
        if let Some(s) = setting(cfg, &self.blur_sigma, "blur-sigma", parse_value::<f64>)? {
            p.blur = (s != 0.0).then_some(BlurParams { sigma: s });
        }
        if let Some(v) = setting(cfg, &self.scales, "scales", parse_list::<f64>)? {
            p.scales = v;
        }
        if let Some(v) = setting(cfg, &self.scale_selection, "scale-selection", parse_value)? {
            p.scale_selection = v;
        }
        if let Some(v) = setting(cfg, &self.percentile, "percentile", parse_value::<f64>)? {
            p.percentile = v;
        }
        if let Some(v) = setting(cfg, &self.min_region_px, "min-region-px", parse_value::<usize>)? {
            p.min_region_px = v;
        }
        if let Some(v) = cfg.switch(self.nested_pass.then_some(true), "nested-pass")? {
            p.nested_pass = v;
        }
        if let Some(v) = setting(cfg, &self.centroid, "centroid", parse_value)? {
            p.centroid = v;
        }
        p.validate().stage("detection parameters")?;
        Ok(p)
    }
}

impl TrackOpts {
    pub fn params(&self, cfg: &Config) -> Result<TrackParams, Failure> {
        let mut p = TrackParams::default();
        if let Some(v) = setting(cfg, &self.r0, "r0", parse_value::<f64>)? {
            p.r0 = v;
        }
        p.validate().stage("tracking parameters")?;
        Ok(p)
    }
}

impl ClassifyOpts {
    pub fn params(&self, cfg: &Config) -> Result<ClassifyParams, Failure> {
        let mut p = ClassifyParams::default();
        if let Some((a, b)) = setting(cfg, &self.annulus, "annulus", parse_pair)? {
            p.annulus_inner = a;
            p.annulus_outer = b;
        }
        if let Some(v) = setting(cfg, &self.nn_radius, "nn-radius", parse_value::<f64>)? {
            p.nn_radius = v;
        }
        if let Some(v) = setting(cfg, &self.accept_counts, "accept-counts", parse_set)? {
            p.accepted_neighbor_counts = v;
        }
        if let Some(v) = cfg.switch(self.no_cross_vote.then_some(false), "cross-vote")? {
            p.cross_vote = v;
        }
        p.validate().stage("classification parameters")?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramParams {
    pub bin_width: f64,
    pub region: Option<Rect>,
}

impl HistogramOpts {
    pub fn params(&self, cfg: &Config) -> Result<HistogramParams, Failure> {
        let bin_width = setting(cfg, &self.bin_width, "bin-width", parse_value::<f64>)?.unwrap_or(1.0);
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Failure::usage(format!("bin width must be positive, got {bin_width}")));
        }
        let region = setting(cfg, &self.region, "region", parse_value::<Rect>)?;
        Ok(HistogramParams { bin_width, region })
    }
}

impl InputOpts {
    fn resolve(&self, cfg: &Config) -> Result<(PathBuf, StackFormat), Failure> {
        let format = match setting(cfg, &self.format, "format", parse_value::<StackFormat>)? {
            Some(f) => f,
            None if self.input.is_dir() => StackFormat::FrameDirectory,
            None => StackFormat::RawStack,
        };
        Ok((self.input.clone(), format))
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::data(anyhow::anyhow!("cannot create directory {}: {e}", dir.display())))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn load_input(path: &Path, format: StackFormat) -> Result<ImageStack, Failure> {
    stack_io::load_stack(path, format).stage("load")
}

fn frame_distances(centers: &[AtomCenter], nearest: bool, region: Option<Rect>) -> Vec<f64> {
    if nearest {
        let inside: Vec<&AtomCenter> = centers
            .iter()
            .filter(|c| region.map_or(true, |r| r.contains((c.x, c.y))))
            .collect();
        let pts: Vec<(f64, f64)> = inside.iter().map(|c| (c.x, c.y)).collect();
        neighbor::nearest_neighbor_distances(&pts)
    } else {
        neighbor::pairwise_distances(centers, region)
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = Config::from_flag(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Detect(a) => detect_cmd(a, &cfg),
        Command::Track(a) => track_cmd(a, &cfg),
        Command::Classify(a) => classify_cmd(a, &cfg),
        Command::Histogram(a) => histogram_cmd(a, &cfg),
        Command::Render(a) => render_cmd(a, &cfg),
        Command::Pipeline(a) => pipeline_cmd(a, &cfg),
    }
}

fn synth_cmd(a: &SynthArgs) -> Result<(), Failure> {
    let format: StackFormat = a.format.parse().stage("synth parameters")?;
    let drift = parse_pair(&a.drift).map_err(|e| Failure::usage(format!("--drift: {e}")))?;
    let mut params = SynthParams {
        width: a.width,
        height: a.height,
        n_frames: a.frames,
        lattice_constant: a.lattice_constant,
        blob_sigma: a.blob_sigma,
        species_contrast: a.contrast,
        drift_per_frame: drift,
        jitter_sigma: a.jitter,
        vacancy_fraction: a.vacancy,
        seed: a.seed,
        ..Default::default()
    };
    if let Some(s) = a.noise_sigma {
        params.noise_sigma = s;
    }
    if let Some(snr) = a.snr {
        if !(snr > 0.0) {
            return Err(Failure::usage(format!("--snr must be positive, got {snr}")));
        }
        params = params.with_snr(snr);
    }
    params.validate().stage("synth parameters")?;

    ensure_dir(&a.out)?;
    let (stack, truth) = synth::generate(&params).stage("synth")?;
    let stack_path = match format {
        StackFormat::FrameDirectory => {
            let dir = a.out.join("frames");
            ensure_dir(&dir)?;
            stack_io::save_frame_directory(&stack, &dir).stage("synth")?;
            dir
        }
        StackFormat::RawStack => {
            let path = a.out.join("stack.raw");
            stack_io::save_raw_stack(&stack, &path).stage("synth")?;
            path
        }
    };
    synth::save_truth_centers(&truth, &params, &a.out.join("truth_centers.csv")).stage("synth")?;
    synth::save_truth_tracks(&truth, &params, &a.out.join("truth_tracks.csv")).stage("synth")?;
    println!(
        "wrote {} frames of {}x{} ({} atoms) to {}",
        stack.len(),
        stack.width(),
        stack.height(),
        truth.atoms.len(),
        stack_path.display()
    );
    Ok(())
}

fn detect_cmd(a: &DetectArgs, cfg: &Config) -> Result<(), Failure> {
    let params = a.detect.params(cfg)?;
    let (input, format) = a.input.resolve(cfg)?;
    let stack = load_input(&input, format)?;
    let centers = detect_stack(&stack, &params).stage("detect")?;
    ensure_parent(&a.out)?;
    let flat: Vec<AtomCenter> = centers.into_iter().flatten().collect();
    stack_io::save_centers(&flat, &a.out).stage("detect")?;
    println!("{} centers in {} frames -> {}", flat.len(), stack.len(), a.out.display());
    Ok(())
}

fn track_cmd(a: &TrackArgs, cfg: &Config) -> Result<(), Failure> {
    let params = a.track.params(cfg)?;
    let centers = stack_io::load_centers(&a.centers).stage("track")?;
    let per_frame = stack_io::centers_by_frame(&centers, None);
    let tracks = build_tracks(&per_frame, &params).stage("track")?;
    let labeled: Vec<LabeledTrack> = tracks.into_iter().map(LabeledTrack::unlabeled).collect();
    ensure_parent(&a.out)?;
    stack_io::save_tracks(&labeled, &a.out).stage("track")?;
    println!("{} tracks over {} frames -> {}", labeled.len(), per_frame.len(), a.out.display());
    Ok(())
}

fn classify_cmd(a: &ClassifyArgs, cfg: &Config) -> Result<(), Failure> {
    let params = a.classify.params(cfg)?;
    let centers = stack_io::load_centers(&a.centers).stage("classify")?;
    let tracks = stack_io::load_tracks(&a.tracks).stage("classify")?;
    let n_frames = tracks.first().map(|t| t.track.len());
    let per_frame = stack_io::centers_by_frame(&centers, n_frames);
    let plain: Vec<_> = tracks.into_iter().map(|t| t.track).collect();
    let labeled = label_tracks(&plain, &per_frame, &params).stage("classify")?;
    ensure_parent(&a.out)?;
    stack_io::save_tracks(&labeled, &a.out).stage("classify")?;
    println!("{} labeled tracks -> {}", labeled.len(), a.out.display());
    Ok(())
}

fn histogram_cmd(a: &HistogramArgs, cfg: &Config) -> Result<(), Failure> {
    let hp = a.hist.params(cfg)?;
    let centers = stack_io::load_centers(&a.centers).stage("histogram")?;
    let per_frame = stack_io::centers_by_frame(&centers, Some(a.frame + 1));
    let d = frame_distances(&per_frame[a.frame], a.nearest, hp.region);
    let hist = neighbor::histogram(&d, hp.bin_width).stage("histogram")?;
    ensure_parent(&a.out)?;
    stack_io::save_histogram(&hist, &a.out).stage("histogram")?;
    if let Some(img) = &a.image {
        ensure_parent(img)?;
        render::save_png(&render::render_histogram(&hist), img)?;
    }
    match hist.mode() {
        Some(m) => println!("{} distances, mode {m} px -> {}", hist.total(), a.out.display()),
        None => println!("no distances -> {}", a.out.display()),
    }
    Ok(())
}

fn render_all(
    dir: &Path,
    stack: &ImageStack,
    per_frame: &[Vec<AtomCenter>],
    tracks: Option<&[LabeledTrack]>,
    hp: &HistogramParams,
    sequence: bool,
) -> Result<(), Failure> {
    let style = RenderStyle::default();
    let (w, h) = (stack.width(), stack.height());
    let first = &stack.frames()[0];
    let empty = Vec::new();
    let c0 = per_frame.first().unwrap_or(&empty);
    ensure_dir(dir)?;
    render::save_png(&render::render_overlay(first, c0, None, &style), &dir.join("overlay.png"))?;
    render::save_png(&render::render_scatter(per_frame, w, h), &dir.join("scatter.png"))?;
    let hist = neighbor::histogram(&neighbor::pairwise_distances(c0, hp.region), hp.bin_width).stage("render")?;
    render::save_png(&render::render_histogram(&hist), &dir.join("histogram.png"))?;

    let Some(tracks) = tracks else {
        return Ok(());
    };
    render::save_png(&render::render_tracks(tracks, w, h, None, &style).image, &dir.join("tracks.png"))?;
    render::save_png(&render::render_species(first, tracks, 0, &style), &dir.join("species.png"))?;
    if sequence {
        let (tdir, sdir) = (dir.join("tracks_seq"), dir.join("species_seq"));
        ensure_dir(&tdir)?;
        ensure_dir(&sdir)?;
        stack.frames().par_iter().enumerate().try_for_each(|(t, frame)| {
            let plot = render::render_tracks(tracks, w, h, Some(t), &style);
            render::save_png(&plot.image, &tdir.join(format!("tracks_{t:04}.png")))?;
            render::save_png(&render::render_species(frame, tracks, t, &style), &sdir.join(format!("species_{t:04}.png")))
        })?;
    }
    Ok(())
}

fn render_cmd(a: &RenderArgs, cfg: &Config) -> Result<(), Failure> {
    let hp = a.hist.params(cfg)?;
    let (input, format) = a.input.resolve(cfg)?;
    let stack = load_input(&input, format)?;
    let centers = stack_io::load_centers(&a.centers).stage("render")?;
    let per_frame = stack_io::centers_by_frame(&centers, Some(stack.len()));
    let tracks = a.tracks.as_deref().map(stack_io::load_tracks).transpose().stage("render")?;
    render_all(&a.out, &stack, &per_frame, tracks.as_deref(), &hp, a.sequence)?;
    println!("images -> {}", a.out.display());
    Ok(())
}

fn pipeline_cmd(a: &PipelineArgs, cfg: &Config) -> Result<(), Failure> {
    let detect = a.detect.params(cfg)?;
    let track = a.track.params(cfg)?;
    let classify = a.classify.params(cfg)?;
    let hp = a.hist.params(cfg)?;
    let (input, format) = a.input.resolve(cfg)?;
    ensure_dir(&a.out)?;

    let stack = load_input(&input, format)?;
    let per_frame = detect_stack(&stack, &detect).stage("detect")?;
    let flat: Vec<AtomCenter> = per_frame.iter().flatten().cloned().collect();
    stack_io::save_centers(&flat, &a.out.join("centers.csv")).stage("detect")?;

    let tracks = build_tracks(&per_frame, &track).stage("track")?;
    let unlabeled: Vec<LabeledTrack> = tracks.iter().cloned().map(LabeledTrack::unlabeled).collect();
    stack_io::save_tracks(&unlabeled, &a.out.join("tracks.csv")).stage("track")?;

    let labeled = label_tracks(&tracks, &per_frame, &classify).stage("classify")?;
    stack_io::save_tracks(&labeled, &a.out.join("labels.csv")).stage("classify")?;

    let d = frame_distances(&per_frame[0], false, hp.region);
    let hist = neighbor::histogram(&d, hp.bin_width).stage("histogram")?;
    stack_io::save_histogram(&hist, &a.out.join("histogram.csv")).stage("histogram")?;

    if a.render {
        render_all(&a.out.join("render"), &stack, &per_frame, Some(&labeled), &hp, a.sequence)?;
    }
    println!(
        "{} frames, {} centers, {} tracks -> {}",
        stack.len(),
        flat.len(),
        labeled.len(),
        a.out.display()
    );
    Ok(())
}
