//! Style-latent manipulation, harvesting, 2-D embedding and cluster statistics.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasynth::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Domain, Model, StyleLatent, StyleTag};

/// `(1 − α)·z + α·z_clean`, computed so both endpoints are exact.
///
/// The result is tagged with `z`'s tag at `α = 0`, `CLEAN` at `α = 1` and
/// `INTERP` elsewhere. Values outside `[0, 1]` extrapolate.
pub fn manipulate_style(z: &StyleLatent, z_clean: &StyleLatent, alpha: f64) -> Result<StyleLatent> {
    if z.vector.len() != z_clean.vector.len() {
        return Err(Error::Shape(format!(
            "style lengths differ: {} vs {}",
            z.vector.len(),
            z_clean.vector.len()
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha {alpha} is not finite")));
    }
    let tag = if alpha == 0.0 {
        z.tag
    } else if alpha == 1.0 {
        StyleTag::Clean
    } else {
        StyleTag::Interp
    };
    let vector = z
        .vector
        .iter()
        .zip(&z_clean.vector)
        .map(|(&a, &b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    StyleLatent::new(vector, tag)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LatentTag {
    #[serde(rename = "SYN")]
    Syn,
    #[serde(rename = "REAL")]
    Real,
    #[serde(rename = "CLEAN_FROM_SYN")]
    CleanFromSyn,
    #[serde(rename = "CLEAN_FROM_REAL")]
    CleanFromReal,
}

impl LatentTag {
    pub const ALL: [LatentTag; 4] = [
        LatentTag::Syn,
        LatentTag::Real,
        LatentTag::CleanFromSyn,
        LatentTag::CleanFromReal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LatentTag::Syn => "SYN",
            LatentTag::Real => "REAL",
            LatentTag::CleanFromSyn => "CLEAN_FROM_SYN",
            LatentTag::CleanFromReal => "CLEAN_FROM_REAL",
        }
    }

    /// Group used for the three-way separation score.
    fn merged(self) -> usize {
        match self {
            LatentTag::Syn => 0,
            LatentTag::Real => 1,
            LatentTag::CleanFromSyn | LatentTag::CleanFromReal => 2,
        }
    }
}

impl fmt::Display for LatentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatentTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LatentTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown latent tag {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub id: String,
    pub tag: LatentTag,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatentCollection {
    pub records: Vec<LatentRecord>,
}

impl LatentCollection {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `id,tag,z0,…`; floats round-trip exactly.
    pub fn to_csv(&self) -> String {
        let dim = self.records.first().map_or(0, |r| r.vector.len());
        let mut out = String::from("id,tag");
        for i in 0..dim {
            out.push_str(&format!(",z{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.id);
            out.push(',');
            out.push_str(r.tag.as_str());
            for v in &r.vector {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty latent CSV".into()))?;
        let dim = header.split(',').count().saturating_sub(2);
        let mut records = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(Error::Data(format!("latent row {} has {} fields", n + 1, fields.len())));
            }
            let vector = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Data(format!("bad value {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            records.push(LatentRecord {
                id: fields[0].to_string(),
                tag: fields[1].parse()?,
                vector,
            });
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Four latents per sample: both degraded styles and their clean transforms.
pub fn harvest_latents(manifest: &DatasetManifest, model: &Model, split: Option<Split>) -> Result<LatentCollection> {
    let mut records = Vec::new();
    for entry in manifest.entries(split) {
        let sample = manifest.load_sample(entry)?;
        for (img, tag, clean_tag) in [
            (&sample.synthetic, StyleTag::Syn, LatentTag::CleanFromSyn),
            (&sample.real, StyleTag::Real, LatentTag::CleanFromReal),
        ] {
            let z = model.style_of(img, tag)?;
            let t = model.transform_latent(&z)?;
            let raw_tag = if tag == StyleTag::Syn {
                LatentTag::Syn
            } else {
                LatentTag::Real
            };
            records.push(LatentRecord {
                id: sample.id.clone(),
                tag: raw_tag,
                vector: z.vector,
            });
            records.push(LatentRecord {
                id: sample.id.clone(),
                tag: clean_tag,
                vector: t.vector,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::Data("no samples to harvest".into()));
    }
    Ok(LatentCollection { records })
}

// ---------------------------------------------------------------------------
// Statistics

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient; `None` when every point coincides.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let n = points.len();
    let groups = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; groups];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    let mut any_spread = false;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; groups];
        for j in 0..n {
            if i != j {
                let d = distance(&points[i], &points[j]);
                any_spread |= d > 0.0;
                sums[labels[j]] += d;
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..groups)
            .filter(|&k| k != own && sizes[k] > 0)
            .map(|k| sums[k] / sizes[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    any_spread.then(|| total / n as f64)
}

fn centroid(points: &[&Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    for p in points {
        for (s, v) in c.iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    c.iter().map(|s| s / points.len() as f64).collect()
}

/// Spearman rank correlation; ties receive their mean rank.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(
            "spearman needs two equal-length series of at least 2 values".into(),
        ));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Embedding

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMethod {
    /// Projection onto the two leading principal axes.
    #[default]
    Pca,
    /// Exact t-SNE, seeded.
    Tsne,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub method: EmbeddingMethod,
    pub seed: u64,
    pub perplexity: f64,
    pub iterations: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            method: EmbeddingMethod::Pca,
            seed: 0,
            perplexity: 15.0,
            iterations: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub coords: Vec<[f64; 2]>,
    /// Silhouette over the tags present in the collection.
    pub silhouette_tags: Option<f64>,
    /// Silhouette over {SYN, REAL, CLEAN}, both clean tags merged.
    pub silhouette_merged: Option<f64>,
    /// True when the geometry leaves the silhouette undefined.
    pub degenerate: bool,
    /// Distance between the CLEAN_FROM_SYN and CLEAN_FROM_REAL centroids.
    pub clean_centroid_distance: Option<f64>,
    /// Distance between the SYN and REAL centroids.
    pub degraded_centroid_distance: Option<f64>,
}

pub const MIN_GROUP: usize = 3;

pub fn embed_and_score(col: &LatentCollection, config: &EmbedConfig) -> Result<EmbeddingResult> {
    if col.is_empty() {
        return Err(Error::InvalidArgument("empty latent collection".into()));
    }
    let dim = col.records[0].vector.len();
    if col.records.iter().any(|r| r.vector.len() != dim) {
        return Err(Error::Shape("latents have different lengths".into()));
    }
    let mut present: Vec<LatentTag> = col.records.iter().map(|r| r.tag).collect();
    present.sort();
    present.dedup();
    for &t in &present {
        let n = col.records.iter().filter(|r| r.tag == t).count();
        if n < MIN_GROUP {
            return Err(Error::InvalidArgument(format!(
                "group {t} has {n} latents, need at least {MIN_GROUP}"
            )));
        }
    }
    let points: Vec<Vec<f64>> = col.records.iter().map(|r| r.vector.clone()).collect();
    let fine: Vec<usize> = col
        .records
        .iter()
        .map(|r| present.iter().position(|&t| t == r.tag).unwrap())
        .collect();
    let merged_ids: Vec<usize> = col.records.iter().map(|r| r.tag.merged()).collect();
    let mut uniq = merged_ids.clone();
    uniq.sort();
    uniq.dedup();
    let merged: Vec<usize> = merged_ids
        .iter()
        .map(|m| uniq.iter().position(|u| u == m).unwrap())
        .collect();

    let silhouette_tags = silhouette(&points, &fine);
    let silhouette_merged = silhouette(&points, &merged);
    let centroid_of = |t: LatentTag| {
        let members: Vec<&Vec<f64>> = col
            .records
            .iter()
            .filter(|r| r.tag == t)
            .map(|r| &r.vector)
            .collect();
        (!members.is_empty()).then(|| centroid(&members))
    };
    let pair = |a: LatentTag, b: LatentTag| match (centroid_of(a), centroid_of(b)) {
        (Some(x), Some(y)) => Some(distance(&x, &y)),
        _ => None,
    };
    let coords = match config.method {
        EmbeddingMethod::Pca => pca_2d(&points),
        EmbeddingMethod::Tsne => tsne_2d(&points, config),
    };
    Ok(EmbeddingResult {
        coords,
        degenerate: silhouette_tags.is_none(),
        silhouette_tags,
        silhouette_merged,
        clean_centroid_distance: pair(LatentTag::CleanFromSyn, LatentTag::CleanFromReal),
        degraded_centroid_distance: pair(LatentTag::Syn, LatentTag::Real),
    })
}

fn pca_2d(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = points.len();
    let dim = points[0].len();
    let refs: Vec<&Vec<f64>> = points.iter().collect();
    let mean = centroid(&refs);
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for p in &centered {
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += p[i] * p[j] / n as f64;
            }
        }
    }
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64 * 0.1).collect();
        for _ in 0..500 {
            let mut next: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| cov[i][j] * v[j]).sum()).collect();
            for a in &axes {
                let dot: f64 = next.iter().zip(a).map(|(x, y)| x * y).sum();
                for (x, y) in next.iter_mut().zip(a) {
                    *x -= dot * y;
                }
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                break;
            }
            v = next.iter().map(|x| x / norm).collect();
        }
        let lead = v.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(v);
    }
    centered
        .iter()
        .map(|p| {
            let proj = |a: &Vec<f64>| p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            [proj(&axes[0]), proj(&axes[1])]
        })
        .collect()
}

fn tsne_2d(points: &[Vec<f64>], config: &EmbedConfig) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d2[i * n + j] = distance(&points[i], &points[j]).powi(2);
        }
    }
    // Conditional affinities with a per-point bandwidth matched to the perplexity.
    let target = config.perplexity.min((n - 1) as f64 / 3.0).max(1.0).ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..64 {
            let mut sum = 0.0;
            let mut hsum = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let w = (-beta * d2[i * n + j]).exp();
                sum += w;
                hsum += beta * d2[i * n + j] * w;
            }
            let entropy = if sum > 0.0 { sum.ln() + hsum / sum } else { 0.0 };
            if (entropy - target).abs() < 1e-6 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let mut sum = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let w = (-beta * d2[i * n + j]).exp();
            p[i * n + j] = w;
            sum += w;
        }
        for j in 0..n {
            p[i * n + j] = if sum > 0.0 { p[i * n + j] / sum } else { 1.0 / (n - 1) as f64 };
        }
    }
    let mut pij = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            pij[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(-1e-2..1e-2), rng.random_range(-1e-2..1e-2)])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    for it in 0..config.iterations {
        let exaggeration = if it < 100 { 4.0 } else { 1.0 };
        let momentum = if it < 100 { 0.5 } else { 0.8 };
        let mut q = vec![0.0; n * n];
        let mut qsum = 0.0;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[i * n + j] = w;
                qsum += w;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in (0..n).filter(|&j| j != i) {
                let w = q[i * n + j];
                let coeff = 4.0 * (exaggeration * pij[i * n + j] - w / qsum) * w;
                grad[0] += coeff * (y[i][0] - y[j][0]);
                grad[1] += coeff * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                velocity[i][k] = momentum * velocity[i][k] - 100.0 * grad[k];
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
    }
    y
}

// ---------------------------------------------------------------------------
// Enhancement-level sweep

/// Mean `|blue − red|` over all pixels.
pub fn color_cast_index(img: &Image) -> f64 {
    let (r, b) = (img.channel(0), img.channel(2));
    r.iter().zip(b).map(|(r, b)| (b - r).abs()).sum::<f64>() / r.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub alphas: Vec<f64>,
    /// Color-cast index at each α, averaged over the images.
    pub cast: Vec<f64>,
    pub spearman: f64,
}

/// Decode every image at each α and rank-correlate α with the color cast.
pub fn alpha_sweep(model: &Model, images: &[Image], domain: Domain, alphas: &[f64]) -> Result<AlphaSweep> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("alpha sweep needs images".into()));
    }
    let mut cast = vec![0.0; alphas.len()];
    for img in images {
        let content = model.content_of(img)?;
        let z = model.style_of(img, domain.into())?;
        let clean = model.transform_latent(&z)?;
        for (slot, &a) in cast.iter_mut().zip(alphas) {
            let zz = manipulate_style(&z, &clean, a)?;
            let out = model.decode_latents(&content, &zz)?;
            *slot += color_cast_index(&out) / images.len() as f64;
        }
    }
    let spearman = spearman(alphas, &cast)?;
    Ok(AlphaSweep {
        alphas: alphas.to_vec(),
        cast,
        spearman,
    })
}
