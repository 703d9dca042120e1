//! Seeded procedural datasets: clean scenes with depth, a synthetic
//! underwater domain from the attenuation/back-scatter formation model, and
//! a "real-proxy" underwater domain with a different functional form.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image, DEPTH_PNG_SCALE, MIN_SIDE};

/// Formation-model parameters: per-channel attenuation `eta` and
/// back-scattered ambient light `ambient`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub eta: [f64; 3],
    pub ambient: [f64; 3],
}

impl DegradationParams {
    pub fn validate(&self) -> Result<()> {
        if self.eta.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "attenuation must be finite and positive, got {:?}",
                self.eta
            )));
        }
        if self
            .ambient
            .iter()
            .any(|a| !a.is_finite() || !(0.0..=1.0).contains(a))
        {
            return Err(Error::InvalidArgument(format!(
                "ambient light must lie in [0, 1], got {:?}",
                self.ambient
            )));
        }
        Ok(())
    }
}

/// Parameters of the real-proxy degradation: per-channel power curve, additive
/// haze colour, haze blend and radial vignetting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealProxyParams {
    pub gamma: [f64; 3],
    pub cast: [f64; 3],
    pub blend: f64,
    pub vignette_strength: f64,
}

impl RealProxyParams {
    pub const IDENTITY: RealProxyParams = RealProxyParams {
        gamma: [1.0; 3],
        cast: [0.0; 3],
        blend: 0.0,
        vignette_strength: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if self
            .gamma
            .iter()
            .any(|g| !g.is_finite() || !(0.3..=3.0).contains(g))
        {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in [0.3, 3], got {:?}",
                self.gamma
            )));
        }
        if !self.cast.iter().all(|&c| unit(c)) || !unit(self.blend) || !unit(self.vignette_strength)
        {
            return Err(Error::InvalidArgument(
                "cast, blend and vignette_strength must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Sampling ranges of the synthetic domain. Red attenuates fastest, the
/// ambient light is green/blue.
pub const SYN_ETA_RANGE: [(f64, f64); 3] = [(0.8, 1.6), (0.2, 0.8), (0.1, 0.5)];
pub const SYN_AMBIENT_RANGE: [(f64, f64); 3] = [(0.0, 0.2), (0.2, 0.6), (0.3, 0.7)];

/// Sampling ranges of the real-proxy domain: green haze, mild red
/// suppression through the power curve, and vignetting.
pub const REAL_GAMMA_RANGE: [(f64, f64); 3] = [(1.2, 1.8), (0.7, 0.95), (0.9, 1.2)];
pub const REAL_CAST_RANGE: [(f64, f64); 3] = [(0.15, 0.3), (0.45, 0.7), (0.15, 0.3)];
pub const REAL_BLEND_RANGE: (f64, f64) = (0.3, 0.55);
pub const REAL_VIGNETTE_RANGE: (f64, f64) = (0.2, 0.5);

/// Depth range of rendered scenes.
pub const MAX_DEPTH: f64 = 3.0;

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn sample_degradation(rng: &mut ChaCha8Rng) -> DegradationParams {
    DegradationParams {
        eta: SYN_ETA_RANGE.map(|r| uniform(rng, r)),
        ambient: SYN_AMBIENT_RANGE.map(|r| uniform(rng, r)),
    }
}

pub fn sample_real_proxy(rng: &mut ChaCha8Rng) -> RealProxyParams {
    RealProxyParams {
        gamma: REAL_GAMMA_RANGE.map(|r| uniform(rng, r)),
        cast: REAL_CAST_RANGE.map(|r| uniform(rng, r)),
        blend: uniform(rng, REAL_BLEND_RANGE),
        vignette_strength: uniform(rng, REAL_VIGNETTE_RANGE),
    }
}

enum Shape {
    Disc { cy: f64, cx: f64, r: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
        }
    }
}

struct SceneObject {
    shape: Shape,
    color: [f64; 3],
    /// Stripe texture: amplitude, spatial frequency, orientation.
    texture: (f64, f64, f64),
    depth_scale: f64,
}

/// Render a procedural in-air scene and its depth map.
///
/// The scene is a two-colour vertical background gradient with three to six
/// textured discs and rectangles on top. Depth is a smooth ramp in a random
/// direction plus low-frequency ripple, pulled closer inside objects.
pub fn render_clean_scene(seed: u64, height: usize, width: usize) -> Result<(Image, DepthMap)> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "scene must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);

    let top: [f64; 3] = std::array::from_fn(|_| uniform(&mut rng, (0.45, 0.95)));
    let bottom: [f64; 3] = std::array::from_fn(|_| uniform(&mut rng, (0.15, 0.6)));

    let count = rng.random_range(3..=6);
    let mut objects = Vec::with_capacity(count);
    for k in 0..count {
        let cy = uniform(&mut rng, (0.15, 0.85)) * hf;
        let cx = uniform(&mut rng, (0.15, 0.85)) * wf;
        let size = uniform(&mut rng, (0.12, 0.3)) * hf.min(wf);
        let shape = if k % 2 == 0 {
            Shape::Disc { cy, cx, r: size }
        } else {
            let aspect = uniform(&mut rng, (0.5, 1.6));
            Shape::Rect {
                y0: cy - size,
                x0: cx - size * aspect,
                y1: cy + size,
                x1: cx + size * aspect,
            }
        };
        // Saturated colours: one dominant channel, one weak.
        let mut color: [f64; 3] = std::array::from_fn(|_| uniform(&mut rng, (0.2, 0.7)));
        let hi = rng.random_range(0..3);
        let lo = (hi + rng.random_range(1..3)) % 3;
        color[hi] = uniform(&mut rng, (0.75, 1.0));
        color[lo] = uniform(&mut rng, (0.0, 0.2));
        let texture = (
            uniform(&mut rng, (0.0, 0.12)),
            uniform(&mut rng, (0.1, 0.5)),
            uniform(&mut rng, (0.0, PI)),
        );
        objects.push(SceneObject {
            shape,
            color,
            texture,
            depth_scale: uniform(&mut rng, (0.4, 0.85)),
        });
    }

    let angle = uniform(&mut rng, (0.0, 2.0 * PI));
    let (dir_y, dir_x) = (angle.sin(), angle.cos());
    let near = uniform(&mut rng, (0.2, 1.0));
    let far = uniform(&mut rng, (1.8, MAX_DEPTH - 0.2));
    let ripple: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                uniform(&mut rng, (0.03, 0.12)),
                uniform(&mut rng, (0.5, 2.0)),
                uniform(&mut rng, (0.5, 2.0)),
                uniform(&mut rng, (0.0, 2.0 * PI)),
            )
        })
        .collect();

    let mut rgb = vec![0.0; 3 * height * width];
    let mut depth = vec![0.0; height * width];
    let plane = height * width;
    for y in 0..height {
        for x in 0..width {
            let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
            let v = yf / hf;
            let mut color: [f64; 3] = std::array::from_fn(|c| top[c] * (1.0 - v) + bottom[c] * v);
            let (ny, nx) = (yf / hf - 0.5, xf / wf - 0.5);
            let t = ((ny * dir_y + nx * dir_x) / std::f64::consts::SQRT_2 + 0.5).clamp(0.0, 1.0);
            let mut d = near + (far - near) * t;
            for &(amp, fy, fx, phase) in &ripple {
                d += amp * (2.0 * PI * (fy * yf / hf + fx * xf / wf) + phase).sin();
            }
            for obj in &objects {
                if obj.shape.contains(yf, xf) {
                    let (amp, freq, orient) = obj.texture;
                    let stripe = amp * (freq * (yf * orient.sin() + xf * orient.cos())).sin();
                    color = obj.color.map(|c| c + stripe);
                    d *= obj.depth_scale;
                }
            }
            for c in 0..3 {
                rgb[c * plane + y * width + x] = color[c].clamp(0.0, 1.0);
            }
            depth[y * width + x] = d.clamp(0.0, MAX_DEPTH);
        }
    }
    Ok((Image::new(height, width, rgb)?, DepthMap::new(height, width, depth)?))
}

/// Underwater formation model: `I = J·e^{−η d} + A·(1 − e^{−η d})` per channel.
pub fn degrade_jaffe(clean: &Image, depth: &DepthMap, params: &DegradationParams) -> Result<Image> {
    if clean.height() != depth.height() || clean.width() != depth.width() {
        return Err(Error::Shape(format!(
            "image {}x{} vs depth {}x{}",
            clean.height(),
            clean.width(),
            depth.height(),
            depth.width()
        )));
    }
    params.validate()?;
    let (h, w) = (clean.height(), clean.width());
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        let (eta, a) = (params.eta[c], params.ambient[c]);
        for (&j, &d) in clean.channel(c).iter().zip(depth.data()) {
            let t = (-eta * d).exp();
            data.push(j * t + a * (1.0 - t));
        }
    }
    Image::new(h, w, data)
}

/// Radial vignette factor, 1 at the image centre and `1 − strength` at the corners.
pub fn vignette_factor(y: usize, x: usize, height: usize, width: usize, strength: f64) -> f64 {
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let ry = (y as f64 - cy) / cy;
    let rx = (x as f64 - cx) / cx;
    1.0 - strength * (ry * ry + rx * rx) / 2.0
}

/// Real-proxy degradation: `clamp(blend·cast + (1 − blend)·J^γ) · vignette`.
pub fn degrade_real_proxy(clean: &Image, params: &RealProxyParams) -> Result<Image> {
    params.validate()?;
    let (h, w) = (clean.height(), clean.width());
    Image::from_fn(h, w, |c, y, x| {
        let j = clean.get(c, y, x);
        let hazy = params.blend * params.cast[c] + (1.0 - params.blend) * j.powf(params.gamma[c]);
        hazy.clamp(0.0, 1.0) * vignette_factor(y, x, h, w, params.vignette_strength)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
    pub clean: PathBuf,
    pub synthetic: PathBuf,
    pub real: PathBuf,
    pub depth: PathBuf,
    pub synthetic_params: DegradationParams,
    pub real_params: RealProxyParams,
}

/// On-disk dataset description. Paths are relative to the manifest's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub seed: u64,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub train_fraction: f64,
    pub depth_scale: f64,
    pub samples: Vec<SampleEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_FORMAT: &str = "uwstyle-dataset/1";

/// A loaded sample.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub clean: Image,
    pub synthetic: Image,
    pub real: Image,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut manifest: DatasetManifest = toml::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Data(format!(
                "unsupported manifest format {:?}",
                manifest.format
            )));
        }
        if manifest.samples.len() != manifest.count {
            return Err(Error::Data(format!(
                "manifest lists {} samples but count = {}",
                manifest.samples.len(),
                manifest.count
            )));
        }
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn entries(&self, split: Option<Split>) -> impl Iterator<Item = &SampleEntry> {
        self.samples
            .iter()
            .filter(move |s| split.is_none_or(|want| s.split == want))
    }

    pub fn load_sample(&self, entry: &SampleEntry) -> Result<Sample> {
        Ok(Sample {
            id: entry.id.clone(),
            split: entry.split,
            clean: Image::load(&self.resolve(&entry.clean))?,
            synthetic: Image::load(&self.resolve(&entry.synthetic))?,
            real: Image::load(&self.resolve(&entry.real))?,
        })
    }

    pub fn load_split(&self, split: Option<Split>) -> Result<Vec<Sample>> {
        self.entries(split).map(|e| self.load_sample(e)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub seed: u64,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Leading fraction of samples assigned to the training split.
    pub train_fraction: f64,
}

impl DatasetSpec {
    pub fn new(seed: u64, count: usize) -> Self {
        Self {
            seed,
            count,
            height: 64,
            width: 64,
            train_fraction: 0.875,
        }
    }
}

/// All in-memory content of sample `index`; a pure function of `(seed, index)`.
pub fn synthesize_sample(
    spec: &DatasetSpec,
    index: usize,
) -> Result<(Image, DepthMap, Image, Image, DegradationParams, RealProxyParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let scene_seed: u64 = rng.random();
    let syn_params = sample_degradation(&mut rng);
    let real_params = sample_real_proxy(&mut rng);
    let (clean, depth) = render_clean_scene(scene_seed, spec.height, spec.width)?;
    let syn = degrade_jaffe(&clean, &depth, &syn_params)?;
    let real = degrade_real_proxy(&clean, &real_params)?;
    Ok((clean, depth, syn, real, syn_params, real_params))
}

/// Build the default 64×64 dataset.
pub fn build_dataset(seed: u64, count: usize, out_dir: &Path) -> Result<DatasetManifest> {
    build_dataset_with(&DatasetSpec::new(seed, count), out_dir)
}

pub fn build_dataset_with(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.count < 4 {
        return Err(Error::InvalidArgument(format!(
            "dataset needs at least 4 samples, got {}",
            spec.count
        )));
    }
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(Error::InvalidArgument("train_fraction must lie in [0, 1]".into()));
    }
    for sub in ["clean", "synthetic", "real", "depth"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let train_count = (spec.count as f64 * spec.train_fraction).round() as usize;
    let mut samples = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let (clean, depth, syn, real, syn_params, real_params) = synthesize_sample(spec, index)?;
        let id = format!("{index:04}");
        let entry = SampleEntry {
            id: id.clone(),
            split: if index < train_count {
                Split::Train
            } else {
                Split::Test
            },
            clean: PathBuf::from(format!("clean/{id}.png")),
            synthetic: PathBuf::from(format!("synthetic/{id}.png")),
            real: PathBuf::from(format!("real/{id}.png")),
            depth: PathBuf::from(format!("depth/{id}.png")),
            synthetic_params: syn_params,
            real_params,
        };
        clean.save_png(&out_dir.join(&entry.clean))?;
        syn.save_png(&out_dir.join(&entry.synthetic))?;
        real.save_png(&out_dir.join(&entry.real))?;
        depth.save_png(&out_dir.join(&entry.depth))?;
        samples.push(entry);
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.to_string(),
        seed: spec.seed,
        count: spec.count,
        height: spec.height,
        width: spec.width,
        train_fraction: spec.train_fraction,
        depth_scale: DEPTH_PNG_SCALE,
        samples,
        root: out_dir.to_path_buf(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
