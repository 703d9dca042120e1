//! Full-reference (PSNR, SSIM) and no-reference (UIQM, UCIQE) image quality.
//!
//! Conventions, frozen here so scores are reproducible inside this crate:
//!
//! * PSNR pools the squared error over all three channels and reports
//!   [`PSNR_CAP`] for identical images.
//! * SSIM is [`crate::losses::ssim`] with the training defaults (7×7 box).
//! * UIQM works on the 0–255 scale. UICM trims [`UICM_TRIM`] of each tail;
//!   UISM and UIConM use [`UIQM_BLOCK`]-pixel blocks, dropping a partial last
//!   row/column of blocks. Sobel filtering replicates the border.
//! * UCIQE converts sRGB to CIELAB under D65 ([`SRGB_TO_XYZ`]). Lightness is
//!   `L*/100`, chroma is `sqrt(a*² + b*²)/100` and saturation is chroma over
//!   lightness (0 where lightness is 0). Contrast is the 99th minus the 1st
//!   percentile of lightness (nearest rank).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::datasynth::Sample;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Domain, Model};
use crate::losses::{self, SsimParams};

pub const PSNR_CAP: f64 = 99.0;

pub const UICM_TRIM: f64 = 0.1;
pub const UIQM_BLOCK: usize = 8;
pub const UIQM_MIN_SIDE: usize = 16;
pub const UIQM_COEFFS: [f64; 3] = [0.0282, 0.2953, 3.5753];
/// Luma weights combining per-channel EME into UISM.
pub const UISM_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

pub const UCIQE_COEFFS: [f64; 3] = [0.4680, 0.2745, 0.2576];
pub const UCIQE_PERCENTILE: f64 = 0.01;
/// Linear sRGB to XYZ (D65). The reference white is the image of RGB
/// (1, 1, 1), i.e. the row sums, so gray always has zero chroma.
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn same_shape(a: &Image, b: &Image, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )))
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b, "mse")?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let p = SsimParams::default();
    losses::ssim(a, b, p.window, p.c1, p.c2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UiqmParts {
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
    pub uiqm: f64,
}

fn check_uiqm_size(img: &Image) -> Result<()> {
    if img.height() < UIQM_MIN_SIDE || img.width() < UIQM_MIN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "UIQM needs at least {UIQM_MIN_SIDE}x{UIQM_MIN_SIDE}, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

fn plane255(img: &Image, c: usize) -> Vec<f64> {
    img.channel(c).iter().map(|v| v * 255.0).collect()
}

/// Mean after dropping `trim` of the sorted values from each tail.
fn trimmed_mean(values: &[f64], trim: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (trim * v.len() as f64).floor() as usize;
    let kept = &v[k..v.len() - k];
    kept.iter().sum::<f64>() / kept.len() as f64
}

pub fn uicm(img: &Image) -> Result<f64> {
    check_uiqm_size(img)?;
    let (r, g, b) = (plane255(img, 0), plane255(img, 1), plane255(img, 2));
    let rg: Vec<f64> = r.iter().zip(&g).map(|(r, g)| r - g).collect();
    let yb: Vec<f64> = r.iter().zip(&g).zip(&b).map(|((r, g), b)| (r + g) / 2.0 - b).collect();
    let stats = |v: &[f64]| {
        let mu = trimmed_mean(v, UICM_TRIM);
        let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64;
        (mu, var)
    };
    let (mu_rg, var_rg) = stats(&rg);
    let (mu_yb, var_yb) = stats(&yb);
    Ok(-0.0268 * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt() + 0.1586 * (var_rg + var_yb).sqrt())
}

fn sobel_magnitude(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        plane[y * w + x]
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// `(min, max)` of every full block, row-major over blocks, across `planes`.
fn block_extrema(planes: &[&[f64]], h: usize, w: usize) -> Vec<(f64, f64)> {
    let (k1, k2) = (h / UIQM_BLOCK, w / UIQM_BLOCK);
    let mut out = Vec::with_capacity(k1 * k2);
    for by in 0..k1 {
        for bx in 0..k2 {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in planes {
                for y in by * UIQM_BLOCK..(by + 1) * UIQM_BLOCK {
                    for &v in &p[y * w + bx * UIQM_BLOCK..y * w + (bx + 1) * UIQM_BLOCK] {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            out.push((lo, hi));
        }
    }
    out
}

/// Blocks with a zero extremum contribute nothing.
fn eme(plane: &[f64], h: usize, w: usize) -> f64 {
    let blocks = block_extrema(&[plane], h, w);
    let sum: f64 = blocks
        .iter()
        .filter(|(lo, hi)| *lo > 0.0 && *hi > 0.0)
        .map(|(lo, hi)| (hi / lo).ln())
        .sum();
    2.0 * sum / blocks.len() as f64
}

pub fn uism(img: &Image) -> Result<f64> {
    check_uiqm_size(img)?;
    let (h, w) = (img.height(), img.width());
    let mut total = 0.0;
    for (c, weight) in UISM_WEIGHTS.iter().enumerate() {
        let plane = plane255(img, c);
        let edges: Vec<f64> = sobel_magnitude(&plane, h, w)
            .iter()
            .zip(&plane)
            .map(|(s, v)| s * v)
            .collect();
        total += weight * eme(&edges, h, w);
    }
    Ok(total)
}

/// Block logAMEE over all three channels jointly.
pub fn uiconm(img: &Image) -> Result<f64> {
    check_uiqm_size(img)?;
    let (h, w) = (img.height(), img.width());
    let planes: Vec<Vec<f64>> = (0..3).map(|c| plane255(img, c)).collect();
    let refs: Vec<&[f64]> = planes.iter().map(|p| p.as_slice()).collect();
    let blocks = block_extrema(&refs, h, w);
    let sum: f64 = blocks
        .iter()
        .map(|(lo, hi)| (hi - lo, hi + lo))
        .filter(|(top, bot)| *top > 0.0 && *bot > 0.0)
        .map(|(top, bot)| (top / bot) * (top / bot).ln())
        .sum();
    Ok(-sum / blocks.len() as f64)
}

pub fn uiqm_parts(img: &Image) -> Result<UiqmParts> {
    let (uicm, uism, uiconm) = (uicm(img)?, uism(img)?, uiconm(img)?);
    let [c1, c2, c3] = UIQM_COEFFS;
    Ok(UiqmParts {
        uicm,
        uism,
        uiconm,
        uiqm: c1 * uicm + c2 * uism + c3 * uiconm,
    })
}

pub fn uiqm(img: &Image) -> Result<f64> {
    Ok(uiqm_parts(img)?.uiqm)
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Rows of [`SRGB_TO_XYZ`] scaled by the reference white.
fn white_normalized() -> [[f64; 3]; 3] {
    SRGB_TO_XYZ.map(|row| {
        let sum: f64 = row.iter().sum();
        row.map(|v| v / sum)
    })
}

fn inverse3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r: usize, c: usize| {
        let (r0, r1) = ((r + 1) % 3, (r + 2) % 3);
        let (c0, c1) = ((c + 1) % 3, (c + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det = m[0][0] * cof(0, 0) + m[0][1] * cof(0, 1) + m[0][2] * cof(0, 2);
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| cof(j, i) / det))
}

const LAB_DELTA: f64 = 6.0 / 29.0;

pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let n = white_normalized();
    let l = rgb.map(srgb_to_linear);
    // X and Z are written as Y plus terms that vanish exactly when r = g = b
    let ty = n[1][0] * l[0] + n[1][1] * l[1] + n[1][2] * l[2];
    let offset = |row: usize| {
        (n[row][0] - n[1][0]) * (l[0] - l[2]) + (n[row][1] - n[1][1]) * (l[1] - l[2])
    };
    let f = |t: f64| {
        if t > LAB_DELTA.powi(3) {
            t.cbrt()
        } else {
            t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(ty + offset(0)), f(ty), f(ty + offset(2)));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`rgb_to_lab`]; the result is not clamped to the gamut.
pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let f = [fy + lab[1] / 500.0, fy, fy - lab[2] / 200.0];
    let finv = |t: f64| {
        if t > LAB_DELTA {
            t * t * t
        } else {
            3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
        }
    };
    let t = f.map(finv);
    let inv = inverse3(white_normalized());
    [0, 1, 2].map(|i| linear_to_srgb(inv[i][0] * t[0] + inv[i][1] * t[1] + inv[i][2] * t[2]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UciqeParts {
    pub chroma_std: f64,
    pub lightness_contrast: f64,
    pub mean_saturation: f64,
    pub uciqe: f64,
}

pub fn uciqe_parts(img: &Image) -> UciqeParts {
    let n = img.height() * img.width();
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    let mut light = Vec::with_capacity(n);
    let mut chroma = Vec::with_capacity(n);
    let mut sat_sum = 0.0;
    for i in 0..n {
        let [l, a, bb] = rgb_to_lab([r[i], g[i], b[i]]);
        let l = (l / 100.0).max(0.0);
        let c = (a * a + bb * bb).sqrt() / 100.0;
        light.push(l);
        chroma.push(c);
        if l > 0.0 {
            sat_sum += c / l;
        }
    }
    let mean_c = chroma.iter().sum::<f64>() / n as f64;
    let chroma_std = (chroma.iter().map(|c| (c - mean_c) * (c - mean_c)).sum::<f64>() / n as f64).sqrt();
    light.sort_by(f64::total_cmp);
    let rank = |p: f64| light[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
    let lightness_contrast = rank(1.0 - UCIQE_PERCENTILE) - rank(UCIQE_PERCENTILE);
    let mean_saturation = sat_sum / n as f64;
    let [c1, c2, c3] = UCIQE_COEFFS;
    UciqeParts {
        chroma_std,
        lightness_contrast,
        mean_saturation,
        uciqe: c1 * chroma_std + c2 * lightness_contrast + c3 * mean_saturation,
    }
}

pub fn uciqe(img: &Image) -> f64 {
    uciqe_parts(img).uciqe
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Psnr,
    Ssim,
    Uiqm,
    Uciqe,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Psnr, Metric::Ssim, Metric::Uiqm, Metric::Uciqe];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::Uiqm => "uiqm",
            Metric::Uciqe => "uciqe",
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, Metric::Psnr | Metric::Ssim)
    }

    /// Comma-separated list, duplicates removed, order kept.
    pub fn parse_list(text: &str) -> Result<Vec<Metric>> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let m: Metric = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("no metrics requested".into()));
        }
        Ok(out)
    }

    pub fn compute(self, img: &Image, reference: Option<&Image>) -> Result<f64> {
        let need = || {
            reference.ok_or_else(|| Error::Data(format!("{self} needs a reference image")))
        };
        match self {
            Metric::Psnr => psnr(img, need()?),
            Metric::Ssim => ssim(img, need()?),
            Metric::Uiqm => uiqm(img),
            Metric::Uciqe => Ok(uciqe(img)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// One image to score, with its reference when full-reference metrics apply.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub image: PathBuf,
    pub reference: Option<PathBuf>,
}

#[derive(Deserialize)]
struct PairRow {
    id: String,
    image: PathBuf,
    #[serde(default)]
    reference: Option<PathBuf>,
}

/// CSV with header `id,image,reference`; relative paths are resolved against
/// the file's directory and `reference` may be empty.
pub fn read_pairs(path: &Path) -> Result<Vec<EvalItem>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<PairRow>() {
        let row = row.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        out.push(EvalItem {
            id: row.id,
            image: base.join(row.image),
            reference: row
                .reference
                .filter(|p| !p.as_os_str().is_empty())
                .map(|p| base.join(p)),
        });
    }
    Ok(out)
}

/// Every `.png` directly inside `dir`, identified by file stem.
pub fn folder_items(dir: &Path) -> Result<Vec<EvalItem>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push(EvalItem {
                id,
                image: path,
                reference: None,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub metrics: Vec<Metric>,
    /// Sorted by id.
    pub rows: Vec<(String, Vec<f64>)>,
    pub means: Vec<f64>,
}

impl MetricReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        let i = self.metrics.iter().position(|m| *m == metric)?;
        Some(self.means[i])
    }

    /// Header `id,<metrics>`, one row per image, then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for m in &self.metrics {
            out.push(',');
            out.push_str(m.as_str());
        }
        out.push('\n');
        let rows = self.rows.iter().map(|(id, v)| (id.as_str(), v));
        for (id, values) in rows.chain(std::iter::once(("mean", &self.means))) {
            out.push_str(id);
            for v in values {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate_images(items: &[(String, Image, Option<Image>)], metrics: &[Metric]) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("no metrics requested".into()));
    }
    let mut rows = Vec::with_capacity(items.len());
    for (id, img, reference) in items {
        let values = metrics
            .iter()
            .map(|m| {
                m.compute(img, reference.as_ref())
                    .map_err(|e| Error::Data(format!("{id}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id.clone(), values));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let means = (0..metrics.len())
        .map(|j| rows.iter().map(|(_, v)| v[j]).sum::<f64>() / rows.len() as f64)
        .collect();
    Ok(MetricReport {
        metrics: metrics.to_vec(),
        rows,
        means,
    })
}

/// Score `items` and, when `out` is given, write the CSV report there.
pub fn evaluate_folder(items: &[EvalItem], metrics: &[Metric], out: Option<&Path>) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    if metrics.iter().any(|m| m.needs_reference()) {
        if let Some(item) = items.iter().find(|i| i.reference.is_none()) {
            return Err(Error::Data(format!(
                "{}: full-reference metrics need a reference image",
                item.id
            )));
        }
    }
    let loaded = items
        .iter()
        .map(|item| {
            let img = Image::load(&item.image)?;
            let reference = item.reference.as_deref().map(Image::load).transpose()?;
            Ok((item.id.clone(), img, reference))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_images(&loaded, metrics)?;
    if let Some(path) = out {
        fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(report)
}

/// Mean full-reference scores of synthetic inputs and their enhancements
/// against the clean ground truth.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnhancementScores {
    pub samples: usize,
    pub psnr_input: f64,
    pub psnr_enhanced: f64,
    pub ssim_input: f64,
    pub ssim_enhanced: f64,
}

/// Score `I_{S→C}` (full enhancement of each synthetic image) against `I_C`.
pub fn enhancement_scores(model: &Model, samples: &[Sample]) -> Result<EnhancementScores> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to score".into()));
    }
    let mut acc = [0.0; 4];
    for s in samples {
        let enhanced = model.enhance(&s.synthetic, Domain::Syn, 1.0)?;
        acc[0] += psnr(&s.synthetic, &s.clean)?;
        acc[1] += psnr(&enhanced, &s.clean)?;
        acc[2] += ssim(&s.synthetic, &s.clean)?;
        acc[3] += ssim(&enhanced, &s.clean)?;
    }
    let n = samples.len() as f64;
    Ok(EnhancementScores {
        samples: samples.len(),
        psnr_input: acc[0] / n,
        psnr_enhanced: acc[1] / n,
        ssim_input: acc[2] / n,
        ssim_enhanced: acc[3] / n,
    })
}
