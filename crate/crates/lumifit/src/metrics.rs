//! Evaluation suite: PSNR/SSIM, scale-invariant albedo metrics, WHDR against
//! human judgments, multi-sample aggregation (mean / best), variance maps and
//! Pearson correlation.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use serde::{Deserialize, Serialize};

/// PSNR in dB, capped at 99 dB when the MSE drops below `peak^2 * 10^-9.9`.
pub fn psnr(pred: &ImageBuffer, gt: &ImageBuffer, peak: f64) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::input("psnr shape mismatch"));
    }
    let mse = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.data().len() as f64;
    let floor = peak * peak * 10f64.powf(-9.9);
    if mse < floor {
        return Ok(99.0);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn ssim_kernel() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            k[((dy + r) * SSIM_WINDOW as isize + dx + r) as usize] = w;
            sum += w;
        }
    }
    for w in &mut k {
        *w /= sum;
    }
    k
}

/// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), C1 = (0.01)^2,
/// C2 = (0.03)^2 for unit peak, valid-region windows, averaged over channels.
pub fn ssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::input("ssim shape mismatch"));
    }
    if pred.width() < SSIM_WINDOW || pred.height() < SSIM_WINDOW {
        return Err(Error::input(format!(
            "image must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM"
        )));
    }
    let kernel = ssim_kernel();
    let c1 = 0.01_f64 * 0.01;
    let c2 = 0.03_f64 * 0.03;
    let (w, h, ch) = (pred.width(), pred.height(), pred.channels());
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        for y0 in 0..=(h - SSIM_WINDOW) {
            for x0 in 0..=(w - SSIM_WINDOW) {
                let mut mu_x = 0.0;
                let mut mu_y = 0.0;
                let mut xx = 0.0;
                let mut yy = 0.0;
                let mut xy = 0.0;
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let wgt = kernel[dy * SSIM_WINDOW + dx];
                        let a = pred.at(x0 + dx, y0 + dy, c);
                        let b = gt.at(x0 + dx, y0 + dy, c);
                        mu_x += wgt * a;
                        mu_y += wgt * b;
                        xx += wgt * a * a;
                        yy += wgt * b * b;
                        xy += wgt * a * b;
                    }
                }
                let var_x = xx - mu_x * mu_x;
                let var_y = yy - mu_y * mu_y;
                let cov = xy - mu_x * mu_y;
                let s = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                    / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
                total += s;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Least-squares global scale aligning `pred` to `gt`:
/// `alpha = <pred, gt> / <pred, pred>`.
pub fn scale_align(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::input("scale_align shape mismatch"));
    }
    let dot_pg: f64 = pred.data().iter().zip(gt.data()).map(|(&p, &g)| p * g).sum();
    let dot_pp: f64 = pred.data().iter().map(|&p| p * p).sum();
    if dot_pp == 0.0 {
        return Err(Error::degenerate("prediction is identically zero"));
    }
    Ok(dot_pg / dot_pp)
}

/// PSNR after least-squares scale alignment.
pub fn si_psnr(pred: &ImageBuffer, gt: &ImageBuffer, peak: f64) -> Result<f64> {
    let alpha = scale_align(pred, gt)?;
    psnr(&pred.map(|v| alpha * v)?, gt, peak)
}

/// SSIM after least-squares scale alignment.
pub fn si_ssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    let alpha = scale_align(pred, gt)?;
    ssim(&pred.map(|v| alpha * v)?, gt)
}

/// Human relative-reflectance label for a point pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Darker {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B")]
    B,
    #[serde(rename = "E")]
    Equal,
}

/// One annotated comparison: which of two pixels has darker reflectance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub point_a: [usize; 2],
    pub point_b: [usize; 2],
    pub darker: Darker,
    pub weight: f64,
}

/// A set of judgments for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JudgmentSet {
    pub judgments: Vec<Judgment>,
}

impl JudgmentSet {
    pub fn new(judgments: Vec<Judgment>) -> Result<Self> {
        for j in &judgments {
            if !(j.weight > 0.0) {
                return Err(Error::input("judgment weights must be positive"));
            }
        }
        Ok(JudgmentSet { judgments })
    }

    /// Parse line-delimited JSON records:
    /// `{"point_a":[x,y],"point_b":[x,y],"darker":"A|B|E","weight":w}`.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut judgments = Vec::new();
        let mut offset = 0u64;
        for line in text.lines() {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                let j: Judgment = serde_json::from_str(trimmed).map_err(|e| {
                    Error::format_at(format!("bad judgment record: {e}"), offset)
                })?;
                judgments.push(j);
            }
            offset += line.len() as u64 + 1;
        }
        JudgmentSet::new(judgments)
    }

    pub fn to_jsonl(&self) -> String {
        self.judgments
            .iter()
            .map(|j| serde_json::to_string(j).expect("judgments serialize"))
            .map(|s| s + "\n")
            .collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.judgments.iter().map(|j| j.weight).sum()
    }
}

fn luminance(albedo: &ImageBuffer, p: [usize; 2]) -> f64 {
    let px = albedo.pixel(p[0], p[1]);
    px.iter().sum::<f64>() / px.len() as f64
}

/// Predicted label from the luminance ratio with threshold `delta`.
fn predict_darker(lum_a: f64, lum_b: f64, delta: f64) -> Darker {
    if lum_b == 0.0 {
        if lum_a == 0.0 {
            return Darker::Equal;
        }
        // Ratio is +inf: A is brighter, so B is darker.
        return Darker::B;
    }
    let r = lum_a / lum_b;
    if r < 1.0 / (1.0 + delta) {
        Darker::A
    } else if r > 1.0 + delta {
        Darker::B
    } else {
        Darker::Equal
    }
}

/// Weighted human disagreement rate, in percent.
pub fn whdr(albedo: &ImageBuffer, judgments: &JudgmentSet, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::input("delta must be positive"));
    }
    let mut total = 0.0;
    let mut wrong = 0.0;
    for j in &judgments.judgments {
        for p in [j.point_a, j.point_b] {
            if p[0] >= albedo.width() || p[1] >= albedo.height() {
                return Err(Error::input(format!(
                    "judgment point ({}, {}) outside the image",
                    p[0], p[1]
                )));
            }
        }
        let predicted = predict_darker(
            luminance(albedo, j.point_a),
            luminance(albedo, j.point_b),
            delta,
        );
        total += j.weight;
        if predicted != j.darker {
            wrong += j.weight;
        }
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * wrong / total)
}

/// K sampled solutions of identical shape for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<ImageBuffer>,
}

impl SampleSet {
    pub fn new(samples: Vec<ImageBuffer>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::input("sample set must not be empty"))?;
        if !samples.iter().all(|s| s.same_shape(first)) {
            return Err(Error::input("all samples must share the same shape"));
        }
        Ok(SampleSet { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[ImageBuffer] {
        &self.samples
    }
}

/// Per-pixel arithmetic mean of the samples.
pub fn mean_sample(samples: &SampleSet) -> ImageBuffer {
    let first = &samples.samples()[0];
    let mut acc = vec![0.0; first.data().len()];
    for s in samples.samples() {
        for (a, &v) in acc.iter_mut().zip(s.data()) {
            *a += v;
        }
    }
    let k = samples.len() as f64;
    for a in &mut acc {
        *a /= k;
    }
    ImageBuffer::new(first.width(), first.height(), first.channels(), acc)
        .expect("mean preserves shape")
}

/// Which score a best-sample query optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Psnr,
    Ssim,
    SiPsnr,
    SiSsim,
    /// Mean squared error; the only min-type metric here.
    Mse,
}

impl MetricKind {
    fn higher_is_better(self) -> bool {
        !matches!(self, MetricKind::Mse)
    }

    pub fn evaluate(self, pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
        match self {
            MetricKind::Psnr => psnr(pred, gt, 1.0),
            MetricKind::Ssim => ssim(pred, gt),
            MetricKind::SiPsnr => si_psnr(pred, gt, 1.0),
            MetricKind::SiSsim => si_ssim(pred, gt),
            MetricKind::Mse => {
                if !pred.same_shape(gt) {
                    return Err(Error::input("mse shape mismatch"));
                }
                Ok(pred
                    .data()
                    .iter()
                    .zip(gt.data())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / pred.data().len() as f64)
            }
        }
    }
}

/// Index and score of the best sample under `metric`; ties go to the lowest
/// index.
pub fn best_sample(
    samples: &SampleSet,
    gt: &ImageBuffer,
    metric: MetricKind,
) -> Result<(usize, f64)> {
    let mut best = (0usize, metric.evaluate(&samples.samples()[0], gt)?);
    for (i, s) in samples.samples().iter().enumerate().skip(1) {
        let score = metric.evaluate(s, gt)?;
        let better = if metric.higher_is_better() {
            score > best.1
        } else {
            score < best.1
        };
        if better {
            best = (i, score);
        }
    }
    Ok(best)
}

/// Std floor below which a channel is not divided during normalization.
const VARIANCE_STD_FLOOR: f64 = 1e-8;

/// Per-pixel channel-averaged standard deviation across samples, after each
/// sample is normalized per channel to zero mean and unit std over its own
/// pixels. Returns the map plus the number of (sample, channel) pairs whose
/// std was below the floor (those are centered but not divided).
pub fn variance_map(samples: &SampleSet) -> Result<(ImageBuffer, usize)> {
    if samples.len() < 2 {
        return Err(Error::input("variance map needs at least 2 samples"));
    }
    let first = &samples.samples()[0];
    let (w, h, ch) = (first.width(), first.height(), first.channels());
    let n_px = (w * h) as f64;
    let k = samples.len();

    let mut normalized: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut skipped = 0usize;
    for s in samples.samples() {
        let mut out = s.data().to_vec();
        for c in 0..ch {
            let mut mean = 0.0;
            for px in 0..(w * h) {
                mean += s.data()[px * ch + c];
            }
            mean /= n_px;
            let mut var = 0.0;
            for px in 0..(w * h) {
                let d = s.data()[px * ch + c] - mean;
                var += d * d;
            }
            let std = (var / n_px).sqrt();
            let divide = std >= VARIANCE_STD_FLOOR;
            if !divide {
                skipped += 1;
            }
            for px in 0..(w * h) {
                let v = &mut out[px * ch + c];
                *v -= mean;
                if divide {
                    *v /= std;
                }
            }
        }
        normalized.push(out);
    }

    let mut map = vec![0.0; w * h];
    for (px, slot) in map.iter_mut().enumerate() {
        let mut channel_avg = 0.0;
        for c in 0..ch {
            // Mean relative to the first sample: identical samples come out
            // exactly zero-variance.
            let first = normalized[0][px * ch + c];
            let mut mean_offset = 0.0;
            for sample in &normalized {
                mean_offset += sample[px * ch + c] - first;
            }
            mean_offset /= k as f64;
            let mut var = 0.0;
            for sample in &normalized {
                let d = (sample[px * ch + c] - first) - mean_offset;
                var += d * d;
            }
            channel_avg += (var / k as f64).sqrt();
        }
        *slot = channel_avg / ch as f64;
    }
    Ok((ImageBuffer::new(w, h, 1, map)?, skipped))
}

/// Sample Pearson correlation between two 1-channel maps over all pixels.
pub fn pearson(map_a: &ImageBuffer, map_b: &ImageBuffer) -> Result<f64> {
    if map_a.channels() != 1 || map_b.channels() != 1 {
        return Err(Error::input("pearson expects 1-channel maps"));
    }
    if !map_a.same_shape(map_b) {
        return Err(Error::input("pearson shape mismatch"));
    }
    let mean_a = map_a.mean();
    let mean_b = map_b.mean();
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&a, &b) in map_a.data().iter().zip(map_b.data()) {
        let da = a - mean_a;
        let db = b - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::degenerate("pearson undefined for constant maps"));
    }
    Ok(cov / (var_a * var_b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn random_image(rng: &mut DetRng, w: usize, h: usize, ch: usize) -> ImageBuffer {
        ImageBuffer::new(w, h, ch, (0..w * h * ch).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let mut rng = DetRng::new(1);
        let gt = random_image(&mut rng, 8, 8, 3);
        assert_eq!(psnr(&gt, &gt, 1.0).unwrap(), 99.0);

        let shifted = gt.map(|v| v + 0.1).unwrap();
        let p = psnr(&shifted, &gt, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "psnr {p}");

        // Known-variance noise: psnr ~ 10 log10(1/sigma^2).
        let sigma = 0.05;
        let mut rng2 = DetRng::new(2);
        let noisy_data: Vec<f64> = gt.data().iter().map(|v| v + sigma * rng2.normal()).collect();
        let noisy = ImageBuffer::new(8, 8, 3, noisy_data).unwrap();
        let p = psnr(&noisy, &gt, 1.0).unwrap();
        let expected = 10.0 * (1.0 / (sigma * sigma)).log10();
        assert!((p - expected).abs() < 1.0, "psnr {p} vs {expected}");
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut rng = DetRng::new(3);
        let img = random_image(&mut rng, 16, 16, 3);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_inverted_binary_is_negative() {
        // Checkerboard vs its inverse: anticorrelated structure.
        let mut data = vec![0.0; 16 * 16];
        for y in 0..16 {
            for x in 0..16 {
                data[y * 16 + x] = ((x + y) % 2) as f64;
            }
        }
        let img = ImageBuffer::new(16, 16, 1, data).unwrap();
        let inv = img.map(|v| 1.0 - v).unwrap();
        assert!(ssim(&inv, &img).unwrap() < 0.0);
    }

    #[test]
    fn ssim_matches_independent_reference() {
        // Frozen reference values computed with an independent NumPy
        // implementation of the same definition (11x11 Gaussian window,
        // sigma 1.5, C1=1e-4, C2=9e-4, valid windows), cross-checked against
        // scikit-image structural_similarity:
        //   pattern A vs pattern B -> 0.0511093655
        //   constant 0.5 vs pattern B -> 0.0089194856
        // where A[y,x] = ((3*x + 7*y) % 13) / 12 and
        //       B[y,x] = ((5*x + 2*y) % 11) / 10 on a 16x16 grid.
        let mut a = vec![0.0; 16 * 16];
        let mut b = vec![0.0; 16 * 16];
        for y in 0..16 {
            for x in 0..16 {
                a[y * 16 + x] = ((3 * x + 7 * y) % 13) as f64 / 12.0;
                b[y * 16 + x] = ((5 * x + 2 * y) % 11) as f64 / 10.0;
            }
        }
        let img_a = ImageBuffer::new(16, 16, 1, a).unwrap();
        let img_b = ImageBuffer::new(16, 16, 1, b).unwrap();
        let s = ssim(&img_a, &img_b).unwrap();
        assert!((s - 0.0511093655).abs() < 1e-4, "ssim {s}");

        let flat = ImageBuffer::filled(16, 16, 1, 0.5).unwrap();
        let s = ssim(&flat, &img_b).unwrap();
        assert!((s - 0.0089194856).abs() < 1e-4, "ssim {s}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let img = ImageBuffer::zeros(8, 8, 1).unwrap();
        assert!(ssim(&img, &img).is_err());
    }

    #[test]
    fn scale_align_cases() {
        let mut rng = DetRng::new(4);
        let gt = random_image(&mut rng, 8, 8, 3);
        let double = gt.map(|v| 2.0 * v).unwrap();
        assert!((scale_align(&double, &gt).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(si_psnr(&double, &gt, 1.0).unwrap(), 99.0);
        assert!((scale_align(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);

        let zero = ImageBuffer::zeros(8, 8, 3).unwrap();
        assert!(matches!(
            scale_align(&zero, &gt),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn scale_align_beats_grid_scan() {
        let mut rng = DetRng::new(5);
        let pred = random_image(&mut rng, 8, 8, 3);
        let gt = random_image(&mut rng, 8, 8, 3);
        let alpha = scale_align(&pred, &gt).unwrap();
        let cost = |a: f64| {
            pred.data()
                .iter()
                .zip(gt.data())
                .map(|(&p, &g)| (a * p - g) * (a * p - g))
                .sum::<f64>()
        };
        let best = cost(alpha);
        for k in 0..400 {
            let a = k as f64 / 200.0;
            assert!(cost(a) >= best - 1e-9, "grid scale {a} beats closed form");
        }
    }

    #[test]
    fn si_psnr_invariant_to_prediction_scaling() {
        let mut rng = DetRng::new(6);
        let pred = random_image(&mut rng, 8, 8, 3);
        let gt = random_image(&mut rng, 8, 8, 3);
        let base = si_psnr(&pred, &gt, 1.0).unwrap();
        for &beta in &[0.1, 3.0, 10.0] {
            let scaled = pred.map(|v| beta * v).unwrap();
            let s = si_psnr(&scaled, &gt, 1.0).unwrap();
            assert!((s - base).abs() < 1e-9, "beta {beta}: {s} vs {base}");
        }
    }

    #[test]
    fn whdr_consistent_predictions_score_zero() {
        let mut data = vec![0.1; 3];
        data.extend_from_slice(&[0.9, 0.9, 0.9]);
        let albedo = ImageBuffer::new(2, 1, 3, data).unwrap();
        let set = JudgmentSet::new(vec![Judgment {
            point_a: [0, 0],
            point_b: [1, 0],
            darker: Darker::A,
            weight: 1.0,
        }])
        .unwrap();
        assert_eq!(whdr(&albedo, &set, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn whdr_weighted_violation() {
        let mut data = vec![0.1; 3];
        data.extend_from_slice(&[0.9, 0.9, 0.9]);
        let albedo = ImageBuffer::new(2, 1, 3, data).unwrap();
        let set = JudgmentSet::new(vec![
            Judgment {
                point_a: [0, 0],
                point_b: [1, 0],
                darker: Darker::A,
                weight: 1.0,
            },
            Judgment {
                point_a: [0, 0],
                point_b: [1, 0],
                darker: Darker::B, // violated: A is clearly darker
                weight: 1.0,
            },
        ])
        .unwrap();
        assert_eq!(whdr(&albedo, &set, 0.1).unwrap(), 50.0);
    }

    /// Brute-force scorer written independently of `whdr` (plain loops and
    /// if-chains over the ratio definition).
    fn whdr_brute_force(albedo: &ImageBuffer, set: &JudgmentSet, delta: f64) -> f64 {
        let lum = |p: [usize; 2]| -> f64 {
            let px = albedo.pixel(p[0], p[1]);
            px.iter().sum::<f64>() / px.len() as f64
        };
        let mut wrong = 0.0;
        let mut total = 0.0;
        for j in &set.judgments {
            let la = lum(j.point_a);
            let lb = lum(j.point_b);
            let label = if la == 0.0 && lb == 0.0 {
                Darker::Equal
            } else if lb == 0.0 {
                Darker::B
            } else if la / lb < 1.0 / (1.0 + delta) {
                Darker::A
            } else if la / lb > 1.0 + delta {
                Darker::B
            } else {
                Darker::Equal
            };
            total += j.weight;
            if label != j.darker {
                wrong += j.weight;
            }
        }
        100.0 * wrong / total
    }

    #[test]
    fn whdr_matches_brute_force_on_random_judgments() {
        let mut rng = DetRng::new(7);
        let albedo = random_image(&mut rng, 16, 16, 3);
        let mut judgments = Vec::new();
        for _ in 0..100 {
            let label = match (rng.uniform() * 3.0) as usize {
                0 => Darker::A,
                1 => Darker::B,
                _ => Darker::Equal,
            };
            judgments.push(Judgment {
                point_a: [(rng.uniform() * 16.0) as usize, (rng.uniform() * 16.0) as usize],
                point_b: [(rng.uniform() * 16.0) as usize, (rng.uniform() * 16.0) as usize],
                darker: label,
                weight: rng.range(0.1, 2.0),
            });
        }
        let set = JudgmentSet::new(judgments).unwrap();
        let fast = whdr(&albedo, &set, 0.1).unwrap();
        let brute = whdr_brute_force(&albedo, &set, 0.1);
        assert_eq!(fast, brute);
    }

    #[test]
    fn whdr_invariant_to_global_scaling() {
        let mut rng = DetRng::new(8);
        let albedo = random_image(&mut rng, 8, 8, 3);
        let scaled = albedo.map(|v| 3.0 * v).unwrap();
        let mut judgments = Vec::new();
        for _ in 0..50 {
            judgments.push(Judgment {
                point_a: [(rng.uniform() * 8.0) as usize, (rng.uniform() * 8.0) as usize],
                point_b: [(rng.uniform() * 8.0) as usize, (rng.uniform() * 8.0) as usize],
                darker: Darker::A,
                weight: 1.0,
            });
        }
        let set = JudgmentSet::new(judgments).unwrap();
        assert_eq!(
            whdr(&albedo, &set, 0.1).unwrap(),
            whdr(&scaled, &set, 0.1).unwrap()
        );
    }

    #[test]
    fn whdr_zero_luminance_handling() {
        let mut data = vec![0.0; 3];
        data.extend_from_slice(&[0.5, 0.5, 0.5]);
        let albedo = ImageBuffer::new(2, 1, 3, data).unwrap();
        // lum(a)=0.5, lum(b)=0 -> ratio inf -> B darker.
        let set = JudgmentSet::new(vec![Judgment {
            point_a: [1, 0],
            point_b: [0, 0],
            darker: Darker::B,
            weight: 1.0,
        }])
        .unwrap();
        assert_eq!(whdr(&albedo, &set, 0.1).unwrap(), 0.0);
        // Both zero -> Equal.
        let both = ImageBuffer::zeros(2, 1, 3).unwrap();
        let set_eq = JudgmentSet::new(vec![Judgment {
            point_a: [0, 0],
            point_b: [1, 0],
            darker: Darker::Equal,
            weight: 2.0,
        }])
        .unwrap();
        assert_eq!(whdr(&both, &set_eq, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn jsonl_round_trip() {
        let set = JudgmentSet::new(vec![Judgment {
            point_a: [1, 2],
            point_b: [3, 4],
            darker: Darker::Equal,
            weight: 0.75,
        }])
        .unwrap();
        let text = set.to_jsonl();
        assert!(text.contains("\"darker\":\"E\""));
        let back = JudgmentSet::from_jsonl(&text).unwrap();
        assert_eq!(back, set);

        let err = JudgmentSet::from_jsonl("{\"oops\": true}\n");
        assert!(matches!(err, Err(Error::Format { .. })));
    }

    #[test]
    fn mean_sample_cases() {
        let mut rng = DetRng::new(9);
        let a = random_image(&mut rng, 4, 4, 3);
        let one = SampleSet::new(vec![a.clone()]).unwrap();
        assert_eq!(mean_sample(&one), a);

        let zeros = ImageBuffer::zeros(4, 4, 3).unwrap();
        let ones = ImageBuffer::filled(4, 4, 3, 1.0).unwrap();
        let two = SampleSet::new(vec![zeros, ones]).unwrap();
        assert!(mean_sample(&two).data().iter().all(|&v| v == 0.5));

        // Power-of-two copy counts keep the mean bit-exact.
        let copies = SampleSet::new(vec![a.clone(), a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(mean_sample(&copies), a);
        let pair = SampleSet::new(vec![a.clone(), a.clone()]).unwrap();
        assert_eq!(mean_sample(&pair), a);
    }

    #[test]
    fn best_sample_cases() {
        let mut rng = DetRng::new(10);
        let gt = random_image(&mut rng, 16, 16, 3);
        let noise = gt.map(|v| (v + 0.2).min(1.0)).unwrap();
        let set = SampleSet::new(vec![noise.clone(), gt.clone(), noise]).unwrap();
        let (idx, score) = best_sample(&set, &gt, MetricKind::Psnr).unwrap();
        assert_eq!(idx, 1);
        assert_eq!(score, 99.0);

        // All identical: tie resolves to index 0.
        let same = SampleSet::new(vec![gt.clone(), gt.clone()]).unwrap();
        assert_eq!(best_sample(&same, &gt, MetricKind::Ssim).unwrap().0, 0);

        // Exhaustive scan is the definition.
        let mut rng = DetRng::new(11);
        let samples: Vec<ImageBuffer> = (0..5).map(|_| random_image(&mut rng, 16, 16, 3)).collect();
        let set = SampleSet::new(samples.clone()).unwrap();
        let (idx, score) = best_sample(&set, &gt, MetricKind::Mse).unwrap();
        let scores: Vec<f64> = samples
            .iter()
            .map(|s| MetricKind::Mse.evaluate(s, &gt).unwrap())
            .collect();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(score, min);
        assert_eq!(scores[idx], min);
    }

    #[test]
    fn variance_map_identical_samples_is_zero() {
        let mut rng = DetRng::new(12);
        let a = random_image(&mut rng, 6, 6, 3);
        let set = SampleSet::new(vec![a.clone(), a.clone(), a]).unwrap();
        let (map, skipped) = variance_map(&set).unwrap();
        assert!(map.data().iter().all(|&v| v == 0.0));
        assert_eq!(skipped, 0);
    }

    #[test]
    fn variance_map_localizes_differences() {
        // Two samples differing in a single pixel: only that pixel varies.
        // (Samples must stay non-constant so normalization is well posed.)
        let mut rng = DetRng::new(13);
        let a = random_image(&mut rng, 6, 6, 1);
        let mut b_data = a.data().to_vec();
        b_data[7] += 0.5;
        let b = ImageBuffer::new(6, 6, 1, b_data).unwrap();
        let set = SampleSet::new(vec![a, b]).unwrap();
        let (map, _) = variance_map(&set).unwrap();
        let hot = map.data()[7];
        for (i, &v) in map.data().iter().enumerate() {
            if i == 7 {
                assert!(v > 0.01);
            } else {
                // Normalization shifts everything slightly; the off pixels
                // stay far below the changed one.
                assert!(v < hot * 0.2, "pixel {i}: {v} vs hot {hot}");
            }
        }
    }

    #[test]
    fn variance_map_hand_computed_case() {
        // Two 2x2 single-channel samples:
        //   s1 = [0, 1, 0, 1]   mean 0.5, std 0.5 -> normalized [-1, 1, -1, 1]
        //   s2 = [0, 1, 1, 0]   mean 0.5, std 0.5 -> normalized [-1, 1, 1, -1]
        // Per-pixel std across the 2 samples (population):
        //   px0: {-1,-1} -> 0, px1: {1,1} -> 0, px2: {-1,1} -> 1, px3: {1,-1} -> 1.
        let s1 = ImageBuffer::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let s2 = ImageBuffer::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let set = SampleSet::new(vec![s1, s2]).unwrap();
        let (map, skipped) = variance_map(&set).unwrap();
        let expect = [0.0, 0.0, 1.0, 1.0];
        for (v, e) in map.data().iter().zip(expect) {
            assert!((v - e).abs() < 1e-6, "{v} vs {e}");
        }
        assert_eq!(skipped, 0);
    }

    #[test]
    fn variance_map_invariant_to_affine_reexposure() {
        let mut rng = DetRng::new(14);
        let samples: Vec<ImageBuffer> = (0..4).map(|_| random_image(&mut rng, 6, 6, 3)).collect();
        let set = SampleSet::new(samples.clone()).unwrap();
        let (base, _) = variance_map(&set).unwrap();
        let warped: Vec<ImageBuffer> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.map(|v| (1.0 + i as f64) * v + 0.2 * i as f64).unwrap())
            .collect();
        let (warped_map, _) = variance_map(&SampleSet::new(warped).unwrap()).unwrap();
        for (a, b) in base.data().iter().zip(warped_map.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_map_flags_constant_channels() {
        let flat = ImageBuffer::filled(4, 4, 1, 0.5).unwrap();
        let mut rng = DetRng::new(15);
        let other = random_image(&mut rng, 4, 4, 1);
        let (_, skipped) = variance_map(&SampleSet::new(vec![flat, other]).unwrap()).unwrap();
        assert_eq!(skipped, 1);
    }

    #[test]
    fn pearson_cases() {
        let mut rng = DetRng::new(16);
        let a = random_image(&mut rng, 8, 8, 1);
        let affine = a.map(|v| 2.0 * v + 3.0).unwrap();
        assert!((pearson(&a, &affine).unwrap() - 1.0).abs() < 1e-9);
        let neg = a.map(|v| -v).unwrap();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-9);

        let flat = ImageBuffer::filled(8, 8, 1, 0.5).unwrap();
        assert!(matches!(pearson(&a, &flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pearson_independent_maps_are_uncorrelated() {
        let mut rng = DetRng::new(17);
        let a = random_image(&mut rng, 100, 100, 1);
        let b = random_image(&mut rng, 100, 100, 1);
        assert!(pearson(&a, &b).unwrap().abs() < 0.05);
    }
}
