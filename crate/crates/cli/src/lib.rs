//! `uwstyle` command line.
//!
//! Every subcommand reads its settings from, in order of precedence, flags,
//! the matching table of the `--config` TOML file, and built-in defaults. The
//! resolved settings are written next to the outputs as a one-table TOML file
//! that can be passed back through `--config` to repeat the run.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O
//! error, 4 non-finite values encountered.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use uwstyle_core::datasynth::{build_dataset_with, DatasetManifest, DatasetSpec, Split, MANIFEST_FILE};
use uwstyle_core::latentlab::{embed_and_score, harvest_latents, EmbedConfig, EmbeddingMethod};
use uwstyle_core::losses::AdversarialForm;
use uwstyle_core::metrics::{evaluate_folder, folder_items, read_pairs, Metric};
use uwstyle_core::model::{Domain, Model};
use uwstyle_core::trainer::{train, TrainConfig};
use uwstyle_core::{checkpoint, Error, Image};
use uwstyle_serve::{resolve_port, run_blocking, AppState, ServeConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NON_FINITE: i32 = 4;

/// File name of the resolved-config echo inside output directories.
pub const RUN_CONFIG: &str = "run_config.toml";
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            Error::NonFinite(_) => EXIT_NON_FINITE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

#[derive(Parser, Debug)]
#[command(name = "uwstyle", version, about = "Underwater image enhancement through style latents")]
pub struct Cli {
    /// TOML file with one table per subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a procedural paired dataset.
    Synth(SynthArgs),
    /// Train a model on a synthesized dataset.
    Train(TrainArgs),
    /// Enhance one image.
    Enhance(EnhanceArgs),
    /// Re-render an image with the style of another.
    Translate(TranslateArgs),
    /// Decode one image at several blend factors.
    Interpolate(InterpolateArgs),
    /// Score images with quality metrics.
    Eval(EvalArgs),
    /// Harvest and embed style latents of a dataset.
    Latents(LatentsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

// ---------------------------------------------------------------------------
// Resolved settings, as read from and echoed to TOML

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRun {
    pub seed: u64,
    pub count: usize,
    pub out: Option<PathBuf>,
    pub height: usize,
    pub width: usize,
    pub train_fraction: f64,
}

impl Default for SynthRun {
    fn default() -> Self {
        let spec = DatasetSpec::new(0, 64);
        Self {
            seed: spec.seed,
            count: spec.count,
            out: None,
            height: spec.height,
            width: spec.width,
            train_fraction: spec.train_fraction,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    /// Dataset directory or its manifest file.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceRun {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub domain: String,
    pub alpha: f64,
}

impl Default for EnhanceRun {
    fn default() -> Self {
        Self {
            checkpoint: None,
            input: None,
            output: None,
            domain: "real".into(),
            alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslateRun {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub style: Option<PathBuf>,
    pub to: String,
    pub output: Option<PathBuf>,
}

impl Default for TranslateRun {
    fn default() -> Self {
        Self {
            checkpoint: None,
            input: None,
            style: None,
            to: "real".into(),
            output: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolateRun {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub domain: String,
    pub alphas: Vec<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for InterpolateRun {
    fn default() -> Self {
        Self {
            checkpoint: None,
            input: None,
            domain: "real".into(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            out_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub metrics: String,
    /// CSV with `id,image,reference` columns.
    pub pairs: Option<PathBuf>,
    /// Folder of PNGs scored without references.
    pub folder: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            metrics: "uiqm,uciqe".into(),
            pairs: None,
            folder: None,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentsRun {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// `all`, `train` or `test`.
    pub split: String,
    pub method: EmbeddingMethod,
    pub seed: u64,
    pub perplexity: f64,
    pub iterations: usize,
}

impl Default for LatentsRun {
    fn default() -> Self {
        let embed = EmbedConfig::default();
        Self {
            data: None,
            checkpoint: None,
            out_dir: None,
            split: "test".into(),
            method: embed.method,
            seed: embed.seed,
            perplexity: embed.perplexity,
            iterations: embed.iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeRun {
    pub checkpoint: Option<PathBuf>,
    pub host: String,
    pub port: Option<u16>,
    pub cache_capacity: usize,
    pub max_side: usize,
    pub max_upload_bytes: usize,
    pub origin: Option<String>,
}

impl Default for ServeRun {
    fn default() -> Self {
        let serve = ServeConfig::default();
        Self {
            checkpoint: None,
            host: "127.0.0.1".into(),
            port: None,
            cache_capacity: serve.cache_capacity,
            max_side: serve.max_side,
            max_upload_bytes: serve.max_upload_bytes,
            origin: serve.allowed_origin,
        }
    }
}

/// Layout of `--config` files and of the echoes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enhance: Option<EnhanceRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translate: Option<TranslateRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolate: Option<InterpolateRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latents: Option<LatentsRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub serve: Option<ServeRun>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

// ---------------------------------------------------------------------------
// Flags

macro_rules! apply {
    ($run:expr, $args:expr, $($field:ident),+) => {
        $(if let Some(v) = $args.$field.clone() { $run.$field = v.into(); })+
    };
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

impl SynthArgs {
    fn resolve(&self, base: Option<SynthRun>) -> SynthRun {
        let mut run = base.unwrap_or_default();
        apply!(run, self, seed, count, height, width, train_fraction);
        if let Some(out) = &self.out {
            run.out = Some(out.clone());
        }
        run
    }
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory for checkpoints and the loss log.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// least-squares, log or off.
    #[arg(long, value_parser = parse_adversarial)]
    pub adversarial: Option<AdversarialForm>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub disable_cycle: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub disable_l1: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub disable_ssim: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub disable_perceptual: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub hflip: Option<bool>,
    #[arg(long)]
    pub lambda_self: Option<f64>,
    #[arg(long)]
    pub lambda_latent: Option<f64>,
    #[arg(long)]
    pub lambda_tv: Option<f64>,
    #[arg(long)]
    pub lambda_per: Option<f64>,
    #[arg(long)]
    pub lambda_iq: Option<f64>,
    #[arg(long)]
    pub base_filters: Option<usize>,
}

fn parse_adversarial(s: &str) -> std::result::Result<AdversarialForm, String> {
    use serde::de::IntoDeserializer;
    let de: serde::de::value::StrDeserializer<'_, serde::de::value::Error> = s.into_deserializer();
    AdversarialForm::deserialize(de).map_err(|_| format!("expected least-squares, log or off, got {s:?}"))
}

impl TrainArgs {
    fn resolve(&self, base: Option<TrainRun>) -> TrainRun {
        let mut run = base.unwrap_or_default();
        for (slot, flag) in [(&mut run.data, &self.data), (&mut run.out, &self.out), (&mut run.resume, &self.resume)] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        let c = &mut run.config;
        apply!(c, self, steps, patch_size, batch_size, learning_rate, adam_beta1, adam_beta2, seed);
        apply!(c, self, checkpoint_every, adversarial, disable_cycle, disable_l1, disable_ssim);
        apply!(c, self, disable_perceptual, hflip);
        apply!(c.weights, self, lambda_self, lambda_latent, lambda_tv, lambda_per, lambda_iq);
        apply!(c.model, self, base_filters);
        run
    }
}

#[derive(Args, Debug, Default)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output PNG.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Domain of the input: real or syn.
    #[arg(long)]
    pub domain: Option<String>,
    /// 0 keeps the input style, 1 applies the full clean style.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
}

impl EnhanceArgs {
    fn resolve(&self, base: Option<EnhanceRun>) -> EnhanceRun {
        let mut run = base.unwrap_or_default();
        apply!(run, self, domain, alpha);
        for (slot, flag) in [
            (&mut run.checkpoint, &self.checkpoint),
            (&mut run.input, &self.input),
            (&mut run.output, &self.output),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        run
    }
}

#[derive(Args, Debug, Default)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Image supplying the content.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Image supplying the style.
    #[arg(long)]
    pub style: Option<PathBuf>,
    /// Domain of the style image: real or syn.
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl TranslateArgs {
    fn resolve(&self, base: Option<TranslateRun>) -> TranslateRun {
        let mut run = base.unwrap_or_default();
        apply!(run, self, to);
        for (slot, flag) in [
            (&mut run.checkpoint, &self.checkpoint),
            (&mut run.input, &self.input),
            (&mut run.style, &self.style),
            (&mut run.output, &self.output),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        run
    }
}

#[derive(Args, Debug, Default)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub domain: Option<String>,
    /// Comma-separated blend factors.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl InterpolateArgs {
    fn resolve(&self, base: Option<InterpolateRun>) -> InterpolateRun {
        let mut run = base.unwrap_or_default();
        apply!(run, self, domain, alphas);
        for (slot, flag) in [
            (&mut run.checkpoint, &self.checkpoint),
            (&mut run.input, &self.input),
            (&mut run.out_dir, &self.out_dir),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        run
    }
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    /// Comma-separated subset of psnr, ssim, uiqm, uciqe.
    #[arg(long)]
    pub metrics: Option<String>,
    #[arg(long, conflicts_with = "folder")]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub folder: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvalArgs {
    fn resolve(&self, base: Option<EvalRun>) -> EvalRun {
        let mut run = base.unwrap_or_default();
        apply!(run, self, metrics);
        if self.pairs.is_some() {
            run.pairs.clone_from(&self.pairs);
            run.folder = None;
        }
        if self.folder.is_some() {
            run.folder.clone_from(&self.folder);
            run.pairs = None;
        }
        if self.out.is_some() {
            run.out.clone_from(&self.out);
        }
        run
    }
}

#[derive(Args, Debug, Default)]
pub struct LatentsArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// all, train or test.
    #[arg(long)]
    pub split: Option<String>,
    /// pca or tsne.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<EmbeddingMethod>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

fn parse_method(s: &str) -> std::result::Result<EmbeddingMethod, String> {
    match s.to_ascii_lowercase().as_str() {
        "pca" => Ok(EmbeddingMethod::Pca),
        "tsne" | "t-sne" => Ok(EmbeddingMethod::Tsne),
        _ => Err(format!("expected pca or tsne, got {s:?}")),
    }
}

impl LatentsArgs {
    fn resolve(&self, base: Option<LatentsRun>) -> LatentsRun {
        let mut run = base.unwrap_or_default();
        apply!(run, self, split, method, seed, perplexity, iterations);
        for (slot, flag) in [
            (&mut run.data, &self.data),
            (&mut run.checkpoint, &self.checkpoint),
            (&mut run.out_dir, &self.out_dir),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        run
    }
}

#[derive(Args, Debug, Default)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    /// Falls back to UWSTYLE_PORT, then 8787.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub cache_capacity: Option<usize>,
    #[arg(long)]
    pub max_side: Option<usize>,
    #[arg(long)]
    pub max_upload_bytes: Option<usize>,
    /// Allowed CORS origin; any when absent.
    #[arg(long)]
    pub origin: Option<String>,
}

impl ServeArgs {
    fn resolve(&self, base: Option<ServeRun>) -> ServeRun {
        let mut run = base.unwrap_or_default();
        apply!(run, self, host, cache_capacity, max_side, max_upload_bytes);
        if self.checkpoint.is_some() {
            run.checkpoint.clone_from(&self.checkpoint);
        }
        if self.port.is_some() {
            run.port = self.port;
        }
        if self.origin.is_some() {
            run.origin.clone_from(&self.origin);
        }
        run
    }
}

// ---------------------------------------------------------------------------
// Execution

fn need<'a, T>(value: &'a Option<T>, flag: &str) -> Outcome<&'a T> {
    value.as_ref().ok_or_else(|| Failure::usage(format!("--{flag} is required")))
}

fn parse_domain(s: &str) -> Outcome<Domain> {
    s.parse::<Domain>().map_err(Failure::from)
}

fn check_alpha(alpha: f64) -> Outcome<f64> {
    if alpha.is_finite() {
        Ok(alpha)
    } else {
        Err(Failure::usage(format!("alpha must be finite, got {alpha}")))
    }
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST_FILE)
    } else {
        data.to_path_buf()
    }
}

/// `<output>.run.toml` for single-file outputs.
pub fn echo_path_for(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".run.toml");
    PathBuf::from(name)
}

fn write_echo(path: &Path, file: &ConfigFile) -> Outcome<()> {
    fs::write(path, file.to_toml()).map_err(|e| io_failure(path, e))
}

fn create_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn refuse_overwrite(input: &Path, output: &Path) -> Outcome<()> {
    let same = match (fs::canonicalize(input), fs::canonicalize(output)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(Failure::usage(format!(
            "output {} would overwrite the input",
            output.display()
        )));
    }
    Ok(())
}

fn load_input(model: &Model, path: &Path) -> Outcome<Image> {
    let img = Image::load(path)?;
    Ok(model.fit_input(&img)?)
}

/// Directory-relative paths become absolute so the echo replays from anywhere.
fn absolute(p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if let Ok(abs) = std::path::absolute(&*path) {
            *path = abs;
        }
    }
}

fn run_synth(run: SynthRun) -> Outcome<()> {
    let out = need(&run.out, "out")?.clone();
    let spec = DatasetSpec {
        seed: run.seed,
        count: run.count,
        height: run.height,
        width: run.width,
        train_fraction: run.train_fraction,
    };
    let manifest = build_dataset_with(&spec, &out)?;
    write_echo(&out.join(RUN_CONFIG), &ConfigFile {
        synth: Some(run),
        ..ConfigFile::default()
    })?;
    let train = manifest.entries(Some(Split::Train)).count();
    let test = manifest.entries(Some(Split::Test)).count();
    println!("{} ({train} train, {test} test)", out.join(MANIFEST_FILE).display());
    Ok(())
}

fn run_train(run: TrainRun) -> Outcome<()> {
    let data = need(&run.data, "data")?;
    let out = need(&run.out, "out")?.clone();
    run.config.validate()?;
    let manifest = DatasetManifest::load(&manifest_path(data))?;
    create_dir(&out)?;
    write_echo(&out.join(RUN_CONFIG), &ConfigFile {
        train: Some(run.clone()),
        ..ConfigFile::default()
    })?;
    let last = train(run.config, &manifest, &out, run.resume.as_deref())?;
    println!("{}", last.display());
    Ok(())
}

fn run_enhance(run: EnhanceRun) -> Outcome<()> {
    let ckpt = need(&run.checkpoint, "checkpoint")?;
    let input = need(&run.input, "input")?;
    let output = need(&run.output, "output")?;
    let domain = parse_domain(&run.domain)?;
    let alpha = check_alpha(run.alpha)?;
    refuse_overwrite(input, output)?;
    let model = checkpoint::load_model(ckpt)?;
    let img = load_input(&model, input)?;
    model.enhance(&img, domain, alpha)?.save_png(output)?;
    write_echo(&echo_path_for(output), &ConfigFile {
        enhance: Some(run.clone()),
        ..ConfigFile::default()
    })
}

fn run_translate(run: TranslateRun) -> Outcome<()> {
    let ckpt = need(&run.checkpoint, "checkpoint")?;
    let input = need(&run.input, "input")?;
    let style = need(&run.style, "style")?;
    let output = need(&run.output, "output")?;
    let target = parse_domain(&run.to)?;
    refuse_overwrite(input, output)?;
    refuse_overwrite(style, output)?;
    let model = checkpoint::load_model(ckpt)?;
    let content = load_input(&model, input)?;
    let style_img = load_input(&model, style)?;
    model.translate(&content, &style_img, target)?.save_png(output)?;
    write_echo(&echo_path_for(output), &ConfigFile {
        translate: Some(run.clone()),
        ..ConfigFile::default()
    })
}

/// File name for one α of an interpolation sweep.
pub fn alpha_file_name(alpha: f64) -> String {
    format!("alpha_{alpha:+.3}.png")
}

fn run_interpolate(run: InterpolateRun) -> Outcome<()> {
    let ckpt = need(&run.checkpoint, "checkpoint")?;
    let input = need(&run.input, "input")?;
    let out_dir = need(&run.out_dir, "out-dir")?;
    let domain = parse_domain(&run.domain)?;
    if run.alphas.is_empty() {
        return Err(Failure::usage("--alphas must list at least one value"));
    }
    for &a in &run.alphas {
        check_alpha(a)?;
    }
    let model = checkpoint::load_model(ckpt)?;
    let img = load_input(&model, input)?;
    create_dir(out_dir)?;
    for &alpha in &run.alphas {
        let path = out_dir.join(alpha_file_name(alpha));
        model.enhance(&img, domain, alpha)?.save_png(&path)?;
        println!("{}", path.display());
    }
    write_echo(&out_dir.join(RUN_CONFIG), &ConfigFile {
        interpolate: Some(run.clone()),
        ..ConfigFile::default()
    })
}

fn run_eval(run: EvalRun) -> Outcome<()> {
    let metrics = Metric::parse_list(&run.metrics)?;
    let items = match (&run.pairs, &run.folder) {
        (Some(p), None) => read_pairs(p)?,
        (None, Some(f)) => folder_items(f)?,
        _ => return Err(Failure::usage("give exactly one of --pairs or --folder")),
    };
    let report = evaluate_folder(&items, &metrics, run.out.as_deref())?;
    let echo = ConfigFile {
        eval: Some(run.clone()),
        ..ConfigFile::default()
    };
    match &run.out {
        Some(out) => {
            write_echo(&echo_path_for(out), &echo)?;
            for m in &metrics {
                if let Some(v) = report.mean(*m) {
                    println!("{m} {v:.4}");
                }
            }
        }
        None => {
            print!("{}", report.to_csv());
            eprint!("{}", echo.to_toml());
        }
    }
    Ok(())
}

fn parse_split(s: &str) -> Outcome<Option<Split>> {
    match s.to_ascii_lowercase().as_str() {
        "all" => Ok(None),
        "train" => Ok(Some(Split::Train)),
        "test" => Ok(Some(Split::Test)),
        _ => Err(Failure::usage(format!("unknown split {s:?} (expected all, train or test)"))),
    }
}

fn run_latents(run: LatentsRun) -> Outcome<()> {
    let data = need(&run.data, "data")?;
    let ckpt = need(&run.checkpoint, "checkpoint")?;
    let out_dir = need(&run.out_dir, "out-dir")?;
    let split = parse_split(&run.split)?;
    let manifest = DatasetManifest::load(&manifest_path(data))?;
    let model = checkpoint::load_model(ckpt)?;
    let col = harvest_latents(&manifest, &model, split)?;
    let embed = EmbedConfig {
        method: run.method,
        seed: run.seed,
        perplexity: run.perplexity,
        iterations: run.iterations,
    };
    let result = embed_and_score(&col, &embed)?;
    create_dir(out_dir)?;
    col.save(&out_dir.join("latents.csv"))?;

    let mut csv = String::from("id,tag,x,y\n");
    for (rec, [x, y]) in col.records.iter().zip(&result.coords) {
        csv.push_str(&format!("{},{},{x:?},{y:?}\n", rec.id, rec.tag.as_str()));
    }
    let path = out_dir.join("embedding.csv");
    fs::write(&path, csv).map_err(|e| io_failure(&path, e))?;

    let scores = serde_json::json!({
        "method": run.method,
        "points": col.len(),
        "silhouette_tags": result.silhouette_tags,
        "silhouette_merged": result.silhouette_merged,
        "degenerate": result.degenerate,
        "clean_centroid_distance": result.clean_centroid_distance,
        "degraded_centroid_distance": result.degraded_centroid_distance,
    });
    let path = out_dir.join("scores.json");
    let text = serde_json::to_string_pretty(&scores).expect("scores serialize");
    fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
    write_echo(&out_dir.join(RUN_CONFIG), &ConfigFile {
        latents: Some(run.clone()),
        ..ConfigFile::default()
    })?;
    println!("{}", serde_json::to_string(&scores).expect("scores serialize"));
    Ok(())
}

fn run_serve(run: ServeRun) -> Outcome<()> {
    let ckpt = need(&run.checkpoint, "checkpoint")?;
    let port = resolve_port(run.port).map_err(Failure::usage)?;
    let addr: SocketAddr = format!("{}:{port}", run.host)
        .parse()
        .map_err(|e| Failure::usage(format!("address {}:{port}: {e}", run.host)))?;
    let config = ServeConfig {
        cache_capacity: run.cache_capacity,
        max_side: run.max_side,
        max_upload_bytes: run.max_upload_bytes,
        allowed_origin: run.origin.clone(),
    };
    let state = AppState::from_checkpoint(ckpt, config)?;
    eprint!("{}", ConfigFile {
        serve: Some(run.clone()),
        ..ConfigFile::default()
    }
    .to_toml());
    eprintln!("checkpoint {}", state.checkpoint_id());
    run_blocking(addr, state).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("server: {e}"),
    })
}

/// Dispatch a parsed command line.
pub fn execute(cli: Cli) -> Outcome<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Synth(a) => {
            let mut run = a.resolve(file.synth);
            absolute(&mut run.out);
            run_synth(run)
        }
        Command::Train(a) => {
            let mut run = a.resolve(file.train);
            for p in [&mut run.data, &mut run.out, &mut run.resume] {
                absolute(p);
            }
            run_train(run)
        }
        Command::Enhance(a) => {
            let mut run = a.resolve(file.enhance);
            for p in [&mut run.checkpoint, &mut run.input, &mut run.output] {
                absolute(p);
            }
            run_enhance(run)
        }
        Command::Translate(a) => {
            let mut run = a.resolve(file.translate);
            for p in [&mut run.checkpoint, &mut run.input, &mut run.style, &mut run.output] {
                absolute(p);
            }
            run_translate(run)
        }
        Command::Interpolate(a) => {
            let mut run = a.resolve(file.interpolate);
            for p in [&mut run.checkpoint, &mut run.input, &mut run.out_dir] {
                absolute(p);
            }
            run_interpolate(run)
        }
        Command::Eval(a) => {
            let mut run = a.resolve(file.eval);
            for p in [&mut run.pairs, &mut run.folder, &mut run.out] {
                absolute(p);
            }
            run_eval(run)
        }
        Command::Latents(a) => {
            let mut run = a.resolve(file.latents);
            for p in [&mut run.data, &mut run.checkpoint, &mut run.out_dir] {
                absolute(p);
            }
            run_latents(run)
        }
        Command::Serve(a) => {
            let mut run = a.resolve(file.serve);
            absolute(&mut run.checkpoint);
            run_serve(run)
        }
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
