//! PSNR and SSIM in the linear and tone-mapped domains, and scene-set
//! evaluation reports.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use rayon::prelude::*;

use crate::data::{build_network_input, list_scene_dirs, load_scene_with, LoadOptions};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tile::{infer_tiled, TileSpec};
use crate::tonemap::{mu_law, TonemapParams};

/// Peak signal-to-noise ratio with peak 1.0, in dB. Identical images produce
/// the positive-infinity sentinel.
pub fn psnr(pred: &Array3<f64>, target: &Array3<f64>) -> Result<f64> {
    check_pair(pred, target)?;
    let n = pred.len() as f64;
    let mse = pred
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// PSNR between mu-law tone-mapped images (inputs clamped to `[0, 1]`).
pub fn psnr_mu(pred: &Array3<f64>, target: &Array3<f64>, params: TonemapParams) -> Result<f64> {
    let p = mu_law(&pred.mapv(|v| v.clamp(0.0, 1.0)), params)?;
    let t = mu_law(&target.mapv(|v| v.clamp(0.0, 1.0)), params)?;
    psnr(&p, &t)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-region Gaussian filter.
fn gauss_filter(img: &ArrayView2<f64>, k: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let oh = h - SSIM_WINDOW + 1;
    let ow = w - SSIM_WINDOW + 1;
    let mut tmp = Array2::zeros((h, ow));
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * img[[y, x + i]];
            }
            tmp[[y, x]] = acc;
        }
    }
    let mut out = Array2::zeros((oh, ow));
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp[[y + i, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Structural similarity with an 11-tap Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, peak 1.0, averaged over channels and positions.
pub fn ssim(pred: &Array3<f64>, target: &Array3<f64>) -> Result<f64> {
    check_pair(pred, target)?;
    let (h, w, channels) = pred.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let k = gaussian_kernel();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..channels {
        let a = pred.index_axis(ndarray::Axis(2), c);
        let b = target.index_axis(ndarray::Axis(2), c);
        let mu_a = gauss_filter(&a, &k);
        let mu_b = gauss_filter(&b, &k);
        let aa = gauss_filter(&(&a * &a).view(), &k);
        let bb = gauss_filter(&(&b * &b).view(), &k);
        let ab = gauss_filter(&(&a * &b).view(), &k);
        for ((y, x), &ma) in mu_a.indexed_iter() {
            let mb = mu_b[[y, x]];
            let va = aa[[y, x]] - ma * ma;
            let vb = bb[[y, x]] - mb * mb;
            let cov = ab[[y, x]] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM between mu-law tone-mapped images.
pub fn ssim_mu(pred: &Array3<f64>, target: &Array3<f64>, params: TonemapParams) -> Result<f64> {
    let p = mu_law(&pred.mapv(|v| v.clamp(0.0, 1.0)), params)?;
    let t = mu_law(&target.mapv(|v| v.clamp(0.0, 1.0)), params)?;
    ssim(&p, &t)
}

fn check_pair(pred: &Array3<f64>, target: &Array3<f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::InvalidArgument(format!(
            "image shape mismatch: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// Metrics of one scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneMetrics {
    pub psnr_mu: f64,
    pub psnr_l: f64,
    pub ssim_mu: f64,
    pub ssim_l: f64,
}

impl SceneMetrics {
    /// Computes all four metrics for one prediction/ground-truth pair.
    pub fn compute(pred: &Array3<f64>, target: &Array3<f64>, params: TonemapParams) -> Result<Self> {
        Ok(Self {
            psnr_mu: psnr_mu(pred, target, params)?,
            psnr_l: psnr(pred, target)?,
            ssim_mu: ssim_mu(pred, target, params)?,
            ssim_l: ssim(pred, target)?,
        })
    }
}

/// Per-scene metrics plus their arithmetic means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_scene: BTreeMap<String, SceneMetrics>,
    pub averages: SceneMetrics,
}

impl MetricsReport {
    pub fn from_scenes(per_scene: BTreeMap<String, SceneMetrics>) -> Result<Self> {
        if per_scene.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot build a report from zero scenes".into(),
            ));
        }
        let n = per_scene.len() as f64;
        let sum = |f: fn(&SceneMetrics) -> f64| per_scene.values().map(f).sum::<f64>() / n;
        let averages = SceneMetrics {
            psnr_mu: sum(|m| m.psnr_mu),
            psnr_l: sum(|m| m.psnr_l),
            ssim_mu: sum(|m| m.ssim_mu),
            ssim_l: sum(|m| m.ssim_l),
        };
        Ok(Self {
            per_scene,
            averages,
        })
    }

    /// Table-formatted CSV: one row per scene, then the average row. Numbers
    /// carry 4 decimals; infinite PSNR prints as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,psnr_mu,psnr_l,ssim_mu,ssim_l\n");
        for (id, m) in &self.per_scene {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                id,
                fmt4(m.psnr_mu),
                fmt4(m.psnr_l),
                fmt4(m.ssim_mu),
                fmt4(m.ssim_l)
            ));
        }
        let a = &self.averages;
        out.push_str(&format!(
            "average,{},{},{},{}\n",
            fmt4(a.psnr_mu),
            fmt4(a.psnr_l),
            fmt4(a.ssim_mu),
            fmt4(a.ssim_l)
        ));
        out
    }

    /// JSON document with the same content as the CSV. Metric values are
    /// numbers, except infinite PSNR which is the string `"inf"`.
    pub fn to_json(&self) -> String {
        fn metrics_json(m: &SceneMetrics) -> String {
            format!(
                "{{\"psnr_mu\": {}, \"psnr_l\": {}, \"ssim_mu\": {}, \"ssim_l\": {}}}",
                json_num(m.psnr_mu),
                json_num(m.psnr_l),
                json_num(m.ssim_mu),
                json_num(m.ssim_l)
            )
        }
        let mut out = String::from("{\n  \"scenes\": {\n");
        let rows: Vec<String> = self
            .per_scene
            .iter()
            .map(|(id, m)| format!("    {}: {}", json_str(id), metrics_json(m)))
            .collect();
        out.push_str(&rows.join(",\n"));
        out.push_str("\n  },\n  \"average\": ");
        out.push_str(&metrics_json(&self.averages));
        out.push_str("\n}\n");
        out
    }
}

fn fmt4(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn json_num(v: f64) -> String {
    if v.is_infinite() {
        "\"inf\"".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn json_str(s: &str) -> String {
    let escaped: String = s
        .chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            c if (c as u32) < 0x20 => format!("\\u{:04x}", c as u32).chars().collect(),
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

/// Evaluation options.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub tile: TileSpec,
    pub tonemap: TonemapParams,
    /// Resize applied at load time (the dataset protocol resizes to
    /// 1000x1500); `None` evaluates at native resolution.
    pub resize_to: Option<(usize, usize)>,
}

/// Runs tiled inference over every ground-truth scene below `root` and
/// reports per-scene and averaged metrics. Scenes without ground truth are
/// skipped with a warning.
pub fn evaluate(model: &Model, root: &Path, options: &EvalOptions) -> Result<MetricsReport> {
    let dirs = list_scene_dirs(root)?;
    if dirs.is_empty() {
        return Err(Error::InvalidData(format!(
            "no scene directories under {}",
            root.display()
        )));
    }
    let load = LoadOptions {
        resize_to: options.resize_to,
    };
    let results: Vec<Option<(String, SceneMetrics)>> = dirs
        .par_iter()
        .map(|dir| -> Result<Option<(String, SceneMetrics)>> {
            let sample = load_scene_with(dir, load)?;
            let Some(gt) = &sample.ground_truth else {
                eprintln!(
                    "warning: scene {} has no ground truth; skipped",
                    sample.scene_id
                );
                return Ok(None);
            };
            let input = build_network_input(&sample.bracket)?;
            let pred = infer_tiled(model, &input, &options.tile)?;
            let metrics = SceneMetrics::compute(&pred, gt, options.tonemap)?;
            Ok(Some((sample.scene_id.clone(), metrics)))
        })
        .collect::<Result<_>>()?;

    let per_scene: BTreeMap<String, SceneMetrics> = results.into_iter().flatten().collect();
    if per_scene.is_empty() {
        return Err(Error::InvalidData(
            "no scene with ground truth found; nothing to evaluate".into(),
        ));
    }
    MetricsReport::from_scenes(per_scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_img(rng: &mut ChaCha12Rng, h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_simple_fn((h, w, 3), || rng.random_range(0.0..1.0))
    }

    #[test]
    fn psnr_closed_form_and_sentinel() {
        let a = Array3::from_elem((8, 8, 3), 0.5);
        let mut b = a.clone();
        b.mapv_inplace(|v| v + 0.01);
        let got = psnr(&a, &b).unwrap();
        assert!((got - 40.0).abs() < 1e-9, "{got}");
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_matches_bruteforce_mse_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(60);
        for _ in 0..10 {
            let a = random_img(&mut rng, 9, 7);
            let b = random_img(&mut rng, 9, 7);
            let got = psnr(&a, &b).unwrap();
            let mut mse = 0.0;
            let mut n = 0usize;
            for y in 0..9 {
                for x in 0..7 {
                    for c in 0..3 {
                        let d = a[[y, x, c]] - b[[y, x, c]];
                        mse += d * d;
                        n += 1;
                    }
                }
            }
            mse /= n as f64;
            let expected = 10.0 * (1.0 / mse).log10();
            assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        }
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let base = random_img(&mut rng, 16, 16);
        let noise = Array3::from_shape_simple_fn((16, 16, 3), || rng.random_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.05, 0.1] {
            let noisy = &base + &(&noise * amp);
            let v = psnr(&base, &noisy).unwrap();
            assert!(v < last, "psnr did not decrease at amplitude {amp}");
            last = v;
        }
    }

    /// Direct per-window SSIM oracle (no separable filtering, its own kernel
    /// derivation).
    fn ssim_oracle(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        let (h, w, channels) = a.dim();
        let mut kernel = [[0.0f64; 11]; 11];
        let mut ksum = 0.0;
        for (i, row) in kernel.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let dy = i as f64 - 5.0;
                let dx = j as f64 - 5.0;
                *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
                ksum += *v;
            }
        }
        for row in kernel.iter_mut() {
            for v in row.iter_mut() {
                *v /= ksum;
            }
        }
        let c1 = 0.01f64 * 0.01;
        let c2 = 0.03f64 * 0.03;
        let mut total = 0.0;
        let mut count = 0usize;
        for c in 0..channels {
            for y in 0..h - 10 {
                for x in 0..w - 10 {
                    let mut ma = 0.0;
                    let mut mb = 0.0;
                    for i in 0..11 {
                        for j in 0..11 {
                            ma += kernel[i][j] * a[[y + i, x + j, c]];
                            mb += kernel[i][j] * b[[y + i, x + j, c]];
                        }
                    }
                    let mut va = 0.0;
                    let mut vb = 0.0;
                    let mut cov = 0.0;
                    for i in 0..11 {
                        for j in 0..11 {
                            let da = a[[y + i, x + j, c]] - ma;
                            let db = b[[y + i, x + j, c]] - mb;
                            va += kernel[i][j] * da * da;
                            vb += kernel[i][j] * db * db;
                            cov += kernel[i][j] * da * db;
                        }
                    }
                    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_identity_and_constant_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(62);
        let a = random_img(&mut rng, 14, 13);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let c = Array3::from_elem((12, 12, 3), 0.3);
        assert!((ssim(&c, &c.clone()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_windowed_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(63);
        // structured content: inverted image scores below 1
        let a = Array3::from_shape_fn((16, 15, 3), |(y, x, c)| {
            0.5 + 0.4 * ((y as f64 / 3.0).sin() * (x as f64 / 2.0).cos()) + c as f64 * 0.01
        });
        let inv = a.mapv(|v| 1.0 - v);
        let got = ssim(&a, &inv).unwrap();
        assert!(got < 1.0);
        let expected = ssim_oracle(&a, &inv);
        assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");

        for _ in 0..3 {
            let p = random_img(&mut rng, 13, 14);
            let q = random_img(&mut rng, 13, 14);
            let got = ssim(&p, &q).unwrap();
            let expected = ssim_oracle(&p, &q);
            assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
        }
    }

    #[test]
    fn ssim_is_symmetric_and_rejects_small_images() {
        let mut rng = ChaCha12Rng::seed_from_u64(64);
        let a = random_img(&mut rng, 12, 12);
        let b = random_img(&mut rng, 12, 12);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
        let tiny = random_img(&mut rng, 8, 12);
        assert!(matches!(
            ssim(&tiny, &tiny.clone()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn tonemapped_psnr_is_composition() {
        let mut rng = ChaCha12Rng::seed_from_u64(65);
        let a = random_img(&mut rng, 10, 10);
        let b = random_img(&mut rng, 10, 10);
        let params = TonemapParams::default();
        let direct = psnr_mu(&a, &b, params).unwrap();
        let composed = psnr(
            &mu_law(&a, params).unwrap(),
            &mu_law(&b, params).unwrap(),
        )
        .unwrap();
        assert_eq!(direct, composed);
    }

    #[test]
    fn report_averages_match_recomputation() {
        let mut per_scene = BTreeMap::new();
        per_scene.insert(
            "a".to_string(),
            SceneMetrics {
                psnr_mu: 40.0,
                psnr_l: 38.0,
                ssim_mu: 0.99,
                ssim_l: 0.98,
            },
        );
        per_scene.insert(
            "b".to_string(),
            SceneMetrics {
                psnr_mu: 42.0,
                psnr_l: 40.0,
                ssim_mu: 0.97,
                ssim_l: 0.96,
            },
        );
        let report = MetricsReport::from_scenes(per_scene).unwrap();
        assert!((report.averages.psnr_mu - 41.0).abs() < 1e-9);
        assert!((report.averages.ssim_l - 0.97).abs() < 1e-9);

        let n = report.per_scene.len() as f64;
        let recomputed = report.per_scene.values().map(|m| m.psnr_l).sum::<f64>() / n;
        assert!((report.averages.psnr_l - recomputed).abs() < 1e-9);
    }

    #[test]
    fn csv_and_json_formatting() {
        let mut per_scene = BTreeMap::new();
        per_scene.insert(
            "scene1".to_string(),
            SceneMetrics {
                psnr_mu: f64::INFINITY,
                psnr_l: 33.123456,
                ssim_mu: 1.0,
                ssim_l: 0.5,
            },
        );
        let report = MetricsReport::from_scenes(per_scene).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("scene,psnr_mu,psnr_l,ssim_mu,ssim_l\n"));
        assert!(csv.contains("scene1,inf,33.1235,1.0000,0.5000"));
        assert!(csv.contains("average,inf,"));
        let json = report.to_json();
        assert!(json.contains("\"psnr_mu\": \"inf\""));
        assert!(json.contains("\"psnr_l\": 33.1235"));
    }

    #[test]
    fn identical_prediction_gives_inf_psnr_and_unit_ssim() {
        let mut rng = ChaCha12Rng::seed_from_u64(66);
        let gt = random_img(&mut rng, 16, 16);
        let m = SceneMetrics::compute(&gt, &gt, TonemapParams::default()).unwrap();
        assert_eq!(m.psnr_mu, f64::INFINITY);
        assert_eq!(m.psnr_l, f64::INFINITY);
        assert!((m.ssim_mu - 1.0).abs() < 1e-12);
        assert!((m.ssim_l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_skips_scenes_without_ground_truth() {
        use crate::model::{Model, ModelConfig};
        use crate::synth::write_synth_dataset;

        let dir = tempfile::tempdir().unwrap();
        write_synth_dataset(dir.path(), 2, 24, 24, 5).unwrap();
        std::fs::remove_file(dir.path().join("002").join("HDRImg.hdr")).unwrap();

        let model = Model::new(ModelConfig::tiny(4, 0, 0), 3).unwrap();
        let report = evaluate(&model, dir.path(), &EvalOptions::default()).unwrap();
        assert_eq!(report.per_scene.len(), 1);
        assert!(report.per_scene.contains_key("001"));
        assert_eq!(report.averages, report.per_scene["001"]);
    }

    #[test]
    fn single_scene_average_equals_scene() {
        let mut per_scene = BTreeMap::new();
        let m = SceneMetrics {
            psnr_mu: 35.5,
            psnr_l: 33.0,
            ssim_mu: 0.98,
            ssim_l: 0.97,
        };
        per_scene.insert("only".to_string(), m);
        let report = MetricsReport::from_scenes(per_scene).unwrap();
        assert_eq!(report.averages, m);
    }
}
