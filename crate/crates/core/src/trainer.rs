//! The alternating adversarial training loop.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uwstyle_tensor::{Adam, AdamConfig, Float, Graph, Tensor, Var};

use crate::checkpoint;
use crate::datasynth::{DatasetManifest, Sample, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{self, AdversarialForm, GanSide, LossReport, LossTerms, LossWeights, PerceptualExtractor};
use crate::model::{Domain, Model, ModelConfig, StyleLatent, StyleTag};

pub const LOSS_LOG: &str = "loss_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub patch_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub adversarial: AdversarialForm,
    pub disable_cycle: bool,
    pub disable_l1: bool,
    pub disable_ssim: bool,
    pub disable_perceptual: bool,
    pub hflip: bool,
    pub weights: LossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            patch_size: 64,
            batch_size: 1,
            learning_rate: 5e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            seed: 0,
            checkpoint_every: 500,
            adversarial: AdversarialForm::LeastSquares,
            disable_cycle: false,
            disable_l1: false,
            disable_ssim: false,
            disable_perceptual: false,
            hflip: false,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "patch_size must be a positive multiple of 4, got {}",
                self.patch_size
            )));
        }
        if self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and checkpoint_every must be positive".into(),
            ));
        }
        let rate_ok = self.learning_rate.is_finite() && self.learning_rate > 0.0;
        let betas_ok = [self.adam_beta1, self.adam_beta2]
            .iter()
            .all(|b| (0.0..1.0).contains(b));
        if !rate_ok || !betas_ok {
            return Err(Error::InvalidArgument(
                "learning_rate must be positive and betas in [0, 1)".into(),
            ));
        }
        self.weights.validate()?;
        self.model.validate()?;
        self.model.check_input(self.patch_size, self.patch_size)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: 1e-8,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("train config: {e}")))
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub step: u64,
    pub model: Model,
    pub adam_gen: Adam<f32>,
    pub adam_dis: Adam<f32>,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model.clone(), config.seed)?;
        let adam_gen = Adam::new(config.adam(), model.gen_params());
        let adam_dis = Adam::new(config.adam(), model.dis_params());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            step: 0,
            model,
            adam_gen,
            adam_dis,
            rng,
        })
    }
}

/// One set of training patches, each `N×3×P×P`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub synthetic: Tensor<f32>,
    pub clean: Tensor<f32>,
    pub real: Tensor<f32>,
}

impl Batch {
    pub fn from_images(synthetic: &Image, clean: &Image, real: &Image) -> Result<Self> {
        if !synthetic.same_shape(clean) || !synthetic.same_shape(real) {
            return Err(Error::Shape("batch images must share one size".into()));
        }
        Ok(Self {
            synthetic: synthetic.to_tensor(),
            clean: clean.to_tensor(),
            real: real.to_tensor(),
        })
    }
}

fn crop_offsets(rng: &mut ChaCha8Rng, img: &Image, patch: usize) -> Result<(usize, usize)> {
    if img.height() < patch || img.width() < patch {
        return Err(Error::Shape(format!(
            "image {}x{} is smaller than patch {patch}",
            img.height(),
            img.width()
        )));
    }
    Ok((
        rng.random_range(0..=img.height() - patch),
        rng.random_range(0..=img.width() - patch),
    ))
}

/// Draw a batch: a (synthetic, clean) pair with a shared crop, and an
/// independently chosen real patch.
pub fn sample_batch(rng: &mut ChaCha8Rng, samples: &[Sample], config: &TrainConfig) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let p = config.patch_size;
    let mut syn = Vec::with_capacity(config.batch_size);
    let mut clean = Vec::with_capacity(config.batch_size);
    let mut real = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let pair = &samples[rng.random_range(0..samples.len())];
        let (top, left) = crop_offsets(rng, &pair.synthetic, p)?;
        let mut s = pair.synthetic.crop(top, left, p, p)?;
        let mut c = pair.clean.crop(top, left, p, p)?;
        let other = &samples[rng.random_range(0..samples.len())];
        let (top, left) = crop_offsets(rng, &other.real, p)?;
        let mut r = other.real.crop(top, left, p, p)?;
        if config.hflip {
            if rng.random::<bool>() {
                s = s.flip_horizontal();
                c = c.flip_horizontal();
            }
            if rng.random::<bool>() {
                r = r.flip_horizontal();
            }
        }
        syn.push(s.to_tensor());
        clean.push(c.to_tensor());
        real.push(r.to_tensor());
    }
    Ok(Batch {
        synthetic: Tensor::stack_batch(&syn)?,
        clean: Tensor::stack_batch(&clean)?,
        real: Tensor::stack_batch(&real)?,
    })
}

/// Graph handles for one forward pass; `x` is synthetic, `y` real.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub content_syn: Var,
    pub style_syn: Var,
    pub content_real: Var,
    pub style_real: Var,
    pub style_syn_clean: Var,
    pub style_real_clean: Var,
    pub syn_to_syn: Var,
    pub real_to_real: Var,
    pub syn_to_real: Var,
    pub real_to_syn: Var,
    pub content_syn_to_real: Var,
    pub style_syn_to_real: Var,
    pub content_real_to_syn: Var,
    pub syn_cycle: Var,
    pub real_cycle: Var,
    pub syn_to_clean: Var,
    pub syn_to_real_to_clean: Var,
    pub real_to_clean: Var,
}

pub fn forward_graph<T: Float>(
    model: &Model,
    g: &mut Graph<T>,
    p: &uwstyle_tensor::Bound,
    x: Var,
    y: Var,
) -> ForwardVars {
    let content_syn = model.encode_content(g, p, x);
    let style_syn = model.encode_style(g, p, x, Domain::Syn);
    let content_real = model.encode_content(g, p, y);
    let style_real = model.encode_style(g, p, y, Domain::Real);
    let style_syn_clean = model.transform_style(g, p, style_syn);
    let style_real_clean = model.transform_style(g, p, style_real);

    let syn_to_syn = model.decode(g, p, content_syn, style_syn);
    let real_to_real = model.decode(g, p, content_real, style_real);
    let syn_to_real = model.decode(g, p, content_syn, style_real);
    let real_to_syn = model.decode(g, p, content_real, style_syn);

    let content_syn_to_real = model.encode_content(g, p, syn_to_real);
    let style_syn_to_real = model.encode_style(g, p, syn_to_real, Domain::Real);
    let content_real_to_syn = model.encode_content(g, p, real_to_syn);

    let syn_cycle = model.decode(g, p, content_syn_to_real, style_syn);
    let real_cycle = model.decode(g, p, content_real_to_syn, style_real);
    let syn_to_clean = model.decode(g, p, content_syn, style_syn_clean);
    let pseudo_clean_style = model.transform_style(g, p, style_syn_to_real);
    let syn_to_real_to_clean = model.decode(g, p, content_syn_to_real, pseudo_clean_style);
    let real_to_clean = model.decode(g, p, content_real, style_real_clean);

    ForwardVars {
        content_syn,
        style_syn,
        content_real,
        style_real,
        style_syn_clean,
        style_real_clean,
        syn_to_syn,
        real_to_real,
        syn_to_real,
        real_to_syn,
        content_syn_to_real,
        style_syn_to_real,
        content_real_to_syn,
        syn_cycle,
        real_cycle,
        syn_to_clean,
        syn_to_real_to_clean,
        real_to_clean,
    }
}

/// Images and latents of one forward pass.
#[derive(Clone, Debug)]
pub struct StepArtifacts {
    pub syn_to_syn: Image,
    pub real_to_real: Image,
    pub syn_to_real: Image,
    pub real_to_syn: Image,
    pub syn_cycle: Image,
    pub real_cycle: Image,
    pub syn_to_clean: Image,
    pub syn_to_real_to_clean: Image,
    pub real_to_clean: Image,
    pub content_syn: Tensor<f32>,
    pub content_real: Tensor<f32>,
    pub style_syn: StyleLatent,
    pub style_real: StyleLatent,
    pub style_syn_clean: StyleLatent,
    pub style_real_clean: StyleLatent,
}

impl StepArtifacts {
    /// The nine images with their names.
    pub fn images(&self) -> [(&'static str, &Image); 9] {
        [
            ("syn_to_syn", &self.syn_to_syn),
            ("real_to_real", &self.real_to_real),
            ("syn_to_real", &self.syn_to_real),
            ("real_to_syn", &self.real_to_syn),
            ("syn_cycle", &self.syn_cycle),
            ("real_cycle", &self.real_cycle),
            ("syn_to_clean", &self.syn_to_clean),
            ("syn_to_real_to_clean", &self.syn_to_real_to_clean),
            ("real_to_clean", &self.real_to_clean),
        ]
    }
}

/// Run every network once on a synthetic image, a real image and the clean
/// counterpart of the synthetic one.
pub fn forward_pass(syn: &Image, real: &Image, clean: &Image, model: &Model) -> Result<StepArtifacts> {
    if !syn.same_shape(real) || !syn.same_shape(clean) {
        return Err(Error::Shape("forward pass images must share one size".into()));
    }
    model.config().check_input(syn.height(), syn.width())?;
    model.infer(|g, p| {
        let x = g.constant(syn.to_tensor());
        let y = g.constant(real.to_tensor());
        let v = forward_graph(model, g, p, x, y);
        let img = |g: &Graph<f32>, v: Var| Image::from_tensor(g.value(v), 0);
        let latent = |g: &Graph<f32>, v: Var, tag: StyleTag| {
            StyleLatent::new(g.value(v).data().iter().map(|&x| f64::from(x)).collect(), tag)
        };
        Ok(StepArtifacts {
            syn_to_syn: img(g, v.syn_to_syn)?,
            real_to_real: img(g, v.real_to_real)?,
            syn_to_real: img(g, v.syn_to_real)?,
            real_to_syn: img(g, v.real_to_syn)?,
            syn_cycle: img(g, v.syn_cycle)?,
            real_cycle: img(g, v.real_cycle)?,
            syn_to_clean: img(g, v.syn_to_clean)?,
            syn_to_real_to_clean: img(g, v.syn_to_real_to_clean)?,
            real_to_clean: img(g, v.real_to_clean)?,
            content_syn: g.value(v.content_syn).clone(),
            content_real: g.value(v.content_real).clone(),
            style_syn: latent(g, v.style_syn, StyleTag::Syn)?,
            style_real: latent(g, v.style_real, StyleTag::Real)?,
            style_syn_clean: latent(g, v.style_syn_clean, StyleTag::Clean)?,
            style_real_clean: latent(g, v.style_real_clean, StyleTag::Clean)?,
        })
    })
}

fn scalar<T: Float>(g: &Graph<T>, v: Var) -> f64 {
    g.value(v).data()[0].to_f64()
}

fn check_finite(report: &LossReport) -> Result<()> {
    match report.first_non_finite() {
        Some(term) => Err(Error::NonFinite(format!("loss term {term}"))),
        None => Ok(()),
    }
}

/// One discriminator update followed by one generator-side update.
pub fn train_step(state: &mut TrainState, batch: &Batch, perceptual: &PerceptualExtractor) -> Result<LossReport> {
    let cfg = state.config.clone();
    let w = cfg.weights;
    let form = cfg.adversarial;
    let model = &state.model;

    let mut g = Graph::<f32>::new();
    let pg = model.gen_params().bind(&mut g, true);
    let x = g.constant(batch.synthetic.clone());
    let y = g.constant(batch.real.clone());
    let target = g.constant(batch.clean.clone());
    let v = forward_graph(model, &mut g, &pg, x, y);

    let mut terms = LossTerms::default();

    // Discriminators see detached translations.
    if form != AdversarialForm::Off {
        let mut gd = Graph::<f32>::new();
        let pd = model.dis_params().bind(&mut gd, true);
        let real_r = gd.constant(batch.real.clone());
        let real_s = gd.constant(batch.synthetic.clone());
        let fake_r = gd.constant(g.value(v.syn_to_real).clone());
        let fake_s = gd.constant(g.value(v.real_to_syn).clone());
        let sr = model.discriminate(&mut gd, &pd, real_r, Domain::Real);
        let fr = model.discriminate(&mut gd, &pd, fake_r, Domain::Real);
        let ss = model.discriminate(&mut gd, &pd, real_s, Domain::Syn);
        let fs = model.discriminate(&mut gd, &pd, fake_s, Domain::Syn);
        let lr = losses::adversarial_graph(&mut gd, &sr, &fr, GanSide::Discriminator, form)?;
        let ls = losses::adversarial_graph(&mut gd, &ss, &fs, GanSide::Discriminator, form)?;
        let loss_d = gd.add(lr, ls);
        terms.gan_d = scalar(&gd, loss_d);
        if !terms.gan_d.is_finite() {
            return Err(Error::NonFinite("loss term gan_d".into()));
        }
        let mut grads = gd.backward(loss_d);
        let dg = pd.collect_grads(&mut grads);
        state.adam_dis.update(state.model.dis_params_mut(), &dg);
    }
    let model = &state.model;

    let mut parts: Vec<(Var, f32)> = Vec::new();
    if form != AdversarialForm::Off {
        let pd = model.dis_params().bind(&mut g, false);
        let fr = model.discriminate(&mut g, &pd, v.syn_to_real, Domain::Real);
        let fs = model.discriminate(&mut g, &pd, v.real_to_syn, Domain::Syn);
        let a = losses::adversarial_graph(&mut g, &[], &fr, GanSide::Generator, form)?;
        let b = losses::adversarial_graph(&mut g, &[], &fs, GanSide::Generator, form)?;
        let gan = g.add(a, b);
        terms.gan_g = scalar(&g, gan);
        parts.push((gan, 1.0));
    }
    if !cfg.disable_cycle {
        let cyc = losses::cycle_graph(&mut g, x, y, v.syn_cycle, v.real_cycle);
        terms.cyc = scalar(&g, cyc);
        parts.push((cyc, 1.0));
    }
    let self_rec = losses::self_graph(&mut g, x, v.syn_to_syn, y, v.real_to_real);
    terms.self_rec = scalar(&g, self_rec);
    parts.push((self_rec, w.lambda_self as f32));

    if !cfg.disable_l1 {
        let pixel = losses::pixel_graph(&mut g, v.syn_to_clean, v.syn_to_real_to_clean, target);
        terms.pixel = scalar(&g, pixel);
        parts.push((pixel, w.lambda_iq as f32));
    }
    if !cfg.disable_ssim {
        let ssim = losses::ssim_pair_graph(&mut g, v.syn_to_clean, v.syn_to_real_to_clean, target)?;
        terms.ssim = scalar(&g, ssim);
        parts.push((ssim, w.lambda_iq as f32));
    }
    if !cfg.disable_perceptual {
        let per = losses::perceptual_graph(&mut g, perceptual, v.syn_to_clean, v.syn_to_real_to_clean, target);
        terms.per = scalar(&g, per);
        parts.push((per, w.lambda_per as f32));
    }
    let tv_a = losses::tv_graph(&mut g, v.syn_to_clean)?;
    let tv_b = losses::tv_graph(&mut g, v.real_to_clean)?;
    let tv = g.add(tv_a, tv_b);
    terms.tv = scalar(&g, tv);
    parts.push((tv, w.lambda_tv as f32));

    let latent = losses::latent_graph(&mut g, v.style_syn_clean, v.style_real_clean);
    terms.latent = scalar(&g, latent);
    parts.push((latent, w.lambda_latent as f32));

    let report = losses::aggregate(&terms, &w);
    check_finite(&report)?;

    let total = g.weighted_sum(&parts);
    let mut grads = g.backward(total);
    let gg = pg.collect_grads(&mut grads);
    state.adam_gen.update(state.model.gen_params_mut(), &gg);
    state.step += 1;
    Ok(report)
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("step_{step:06}.ckpt"))
}

/// Rows of an existing loss log up to and including `step`.
fn retained_log(path: &Path, step: u64) -> Result<Vec<String>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines().skip(1) {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (s, _) = LossReport::parse_csv_row(&line)?;
        if s <= step {
            rows.push(line);
        }
    }
    Ok(rows)
}

/// Train from scratch, or from `resume`, up to `state.config.steps`.
///
/// Writes `loss_log.csv` and checkpoints under `out_dir`; returns the final
/// checkpoint path.
pub fn train(
    config: TrainConfig,
    manifest: &DatasetManifest,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<PathBuf> {
    let mut state = match resume {
        Some(path) => {
            let mut s = checkpoint::load(path)?;
            if s.config.model != config.model {
                return Err(Error::Checkpoint(
                    "model configuration differs from the checkpoint".into(),
                ));
            }
            s.config = TrainConfig {
                steps: config.steps,
                checkpoint_every: config.checkpoint_every,
                ..s.config
            };
            s
        }
        None => TrainState::new(config)?,
    };
    let samples = manifest.load_split(Some(Split::Train))?;
    if samples.is_empty() {
        return Err(Error::Data("manifest has no training samples".into()));
    }
    fs::create_dir_all(out_dir.join(CHECKPOINT_DIR)).map_err(|e| Error::io(out_dir, e))?;

    let log_path = out_dir.join(LOSS_LOG);
    let kept = retained_log(&log_path, state.step)?;
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let io = |e| Error::io(&log_path, e);
    LossReport::write_csv_header(&mut log).map_err(io)?;
    for row in kept {
        writeln!(log, "{row}").map_err(io)?;
    }

    let perceptual = PerceptualExtractor::default();
    let mut last = None;
    while state.step < state.config.steps {
        let batch = sample_batch(&mut state.rng, &samples, &state.config)?;
        let report = train_step(&mut state, &batch, &perceptual)?;
        writeln!(log, "{}", report.csv_row(state.step)).map_err(io)?;
        if state.step % state.config.checkpoint_every == 0 || state.step == state.config.steps {
            log.flush().map_err(io)?;
            let path = checkpoint_path(out_dir, state.step);
            checkpoint::save(&state, &path)?;
            last = Some(path);
        }
    }
    log.flush().map_err(io)?;
    match last {
        Some(p) => Ok(p),
        None => {
            let path = checkpoint_path(out_dir, state.step);
            checkpoint::save(&state, &path)?;
            Ok(path)
        }
    }
}

/// Parse every row of a loss log.
pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, LossReport)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(LossReport::parse_csv_row)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasynth::render_clean_scene;

    fn small_config() -> TrainConfig {
        TrainConfig {
            steps: 3,
            patch_size: 32,
            model: ModelConfig {
                base_filters: 4,
                content_channels: 16,
                num_content_resblocks: 1,
                style_channels: 8,
                generator_resblocks: 1,
                adain_param_net_hidden: 16,
                transform_hidden: 8,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn batch(seed: u64) -> Batch {
        let clean = render_clean_scene(seed, 32, 32).unwrap().0;
        let syn = Image::from_fn(32, 32, |c, y, x| clean.get(c, y, x) * 0.6 + 0.1 * c as f64).unwrap();
        let real = render_clean_scene(seed + 100, 32, 32).unwrap().0;
        Batch::from_images(&syn, &clean, &real).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patch_size: 30,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg = small_config();
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn forward_pass_produces_nine_patch_images() {
        let model = Model::new(small_config().model, 0).unwrap();
        let b = batch(1);
        let syn = Image::from_tensor(&b.synthetic, 0).unwrap();
        let clean = Image::from_tensor(&b.clean, 0).unwrap();
        let real = Image::from_tensor(&b.real, 0).unwrap();
        let art = forward_pass(&syn, &real, &clean, &model).unwrap();
        for (_, img) in art.images() {
            assert_eq!((img.height(), img.width()), (32, 32));
        }
        assert_eq!(art.style_syn_clean.tag, StyleTag::Clean);
        assert!(forward_pass(&syn, &real.crop(0, 0, 16, 16).unwrap(), &clean, &model).is_err());
    }

    #[test]
    fn steps_are_deterministic() {
        let perceptual = PerceptualExtractor::default();
        let run = || {
            let mut s = TrainState::new(small_config()).unwrap();
            (0..3)
                .map(|i| train_step(&mut s, &batch(i), &perceptual).unwrap())
                .collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        for r in &a {
            assert!(r.first_non_finite().is_none());
            assert_eq!(r, &losses::aggregate(&r.terms, &LossWeights::default()));
        }
    }

    #[test]
    fn discriminator_update_leaves_generator_untouched() {
        let perceptual = PerceptualExtractor::default();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            ..small_config()
        };
        let mut s = TrainState::new(cfg).unwrap();
        let before_gen = s.model.gen_params().clone();
        let before_dis = s.model.dis_params().clone();
        train_step(&mut s, &batch(2), &perceptual).unwrap();
        // Both sides moved, each through its own optimizer only.
        assert_eq!(s.adam_dis.step_count(), 1);
        assert_eq!(s.adam_gen.step_count(), 1);
        let moved = |a: &uwstyle_tensor::ParamStore<f32>, b: &uwstyle_tensor::ParamStore<f32>| {
            a.iter().zip(b.iter()).any(|((_, x), (_, y))| x.data() != y.data())
        };
        assert!(moved(&before_gen, s.model.gen_params()));
        assert!(moved(&before_dis, s.model.dis_params()));
    }

    #[test]
    fn ablation_zeroes_only_its_term() {
        let perceptual = PerceptualExtractor::default();
        let mut s = TrainState::new(TrainConfig {
            disable_ssim: true,
            ..small_config()
        })
        .unwrap();
        let r = train_step(&mut s, &batch(3), &perceptual).unwrap();
        assert_eq!(r.terms.ssim, 0.0);
        assert!(r.terms.pixel > 0.0 && r.terms.per > 0.0 && r.terms.cyc > 0.0);
        assert_eq!(r.iq, r.terms.pixel);
    }

    #[test]
    fn only_cycle_trains_when_everything_else_is_off() {
        let perceptual = PerceptualExtractor::default();
        let cfg = TrainConfig {
            adversarial: AdversarialForm::Off,
            disable_l1: true,
            disable_ssim: true,
            disable_perceptual: true,
            weights: LossWeights {
                lambda_self: 0.0,
                lambda_latent: 0.0,
                lambda_tv: 0.0,
                lambda_per: 0.0,
                lambda_iq: 0.0,
            },
            ..small_config()
        };
        let mut s = TrainState::new(cfg).unwrap();
        let dis_before = s.model.dis_params().clone();
        let gen_before = s.model.gen_params().clone();
        let r = train_step(&mut s, &batch(4), &perceptual).unwrap();
        assert_eq!(r.total, r.terms.cyc);
        assert_eq!(r.terms.gan_d, 0.0);
        // Discriminators are untouched; the transform unit gets no gradient
        // from the cycle term, so it keeps its initial values.
        for ((_, a), (_, b)) in dis_before.iter().zip(s.model.dis_params().iter()) {
            assert_eq!(a.data(), b.data());
        }
        for ((name, a), (_, b)) in gen_before.iter().zip(s.model.gen_params().iter()) {
            if name.starts_with("transform/") {
                assert_eq!(a.data(), b.data(), "{name}");
            }
        }
        assert!(gen_before
            .iter()
            .zip(s.model.gen_params().iter())
            .any(|((_, a), (_, b))| a.data() != b.data()));
    }
}
