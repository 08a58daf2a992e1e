//! Per-pixel Gaussian scene model.
//!
//! Each pixel carries an independent mean and variance for Y, U and V,
//! learned from person-free frames. A pixel is foreground when its
//! diagonal Mahalanobis distance to the model exceeds `tau`. Visible
//! (non-person) pixels are blended into the model with an exponential
//! update so slow lighting changes are absorbed within a few seconds.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::ForegroundMask;
use crate::imageio::Frame;

pub const DEFAULT_LEARN_FRAMES: usize = 30;
pub const DEFAULT_VAR_FLOOR: f32 = 4.0;
pub const DEFAULT_TAU: f32 = 4.0;
pub const DEFAULT_ALPHA: f32 = 0.05;

const MAGIC: &[u8; 8] = b"HBPTSCN1";

#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub width: usize,
    pub height: usize,
    pub mean: Vec<[f32; 3]>,
    pub var: Vec<[f32; 3]>,
    pub frames_seen: usize,
    pub var_floor: f32,
}

fn check_dims(model_dims: (usize, usize), frame: &Frame) -> Result<()> {
    if model_dims != (frame.width, frame.height) {
        return Err(Error::DimensionMismatch(format!(
            "frame {} is {}x{}, scene model is {}x{}",
            frame.index, frame.width, frame.height, model_dims.0, model_dims.1
        )));
    }
    Ok(())
}

/// Learns the per-pixel mean and population variance of `frames`.
pub fn learn_scene(frames: &[Frame], var_floor: f32) -> Result<SceneModel> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            got: frames.len(),
        });
    }
    let (width, height) = (frames[0].width, frames[0].height);
    let n_px = width * height;
    let mut sum = vec![[0u64; 3]; n_px];
    let mut sum_sq = vec![[0u64; 3]; n_px];
    for frame in frames {
        check_dims((width, height), frame)?;
        for ((s, q), px) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&frame.yuv) {
            for c in 0..3 {
                let v = px[c] as u64;
                s[c] += v;
                q[c] += v * v;
            }
        }
    }
    let n = frames.len() as u64;
    let mut mean = Vec::with_capacity(n_px);
    let mut var = Vec::with_capacity(n_px);
    for (s, q) in sum.iter().zip(&sum_sq) {
        let mut m = [0f32; 3];
        let mut v = [0f32; 3];
        for c in 0..3 {
            m[c] = (s[c] as f64 / n as f64) as f32;
            // exact integer numerator: n·Σx² − (Σx)²
            let num = n * q[c] - s[c] * s[c];
            v[c] = ((num as f64 / (n * n) as f64) as f32).max(var_floor);
        }
        mean.push(m);
        var.push(v);
    }
    Ok(SceneModel {
        width,
        height,
        mean,
        var,
        frames_seen: frames.len(),
        var_floor,
    })
}

/// Flags pixels whose squared diagonal Mahalanobis distance exceeds `tau²`.
pub fn detect_foreground(model: &SceneModel, frame: &Frame, tau: f32) -> Result<ForegroundMask> {
    check_dims((model.width, model.height), frame)?;
    let tau2 = tau * tau;
    let bits = frame
        .yuv
        .iter()
        .zip(model.mean.iter().zip(&model.var))
        .map(|(px, (m, v))| {
            let mut d2 = 0f32;
            for c in 0..3 {
                let d = px[c] as f32 - m[c];
                d2 += d * d / v[c];
            }
            d2 > tau2
        })
        .collect();
    Ok(ForegroundMask {
        width: model.width,
        height: model.height,
        bits,
    })
}

/// Blends the visible (non-`fg`) pixels of `frame` into the model.
pub fn update_scene(model: &mut SceneModel, frame: &Frame, fg: &ForegroundMask, alpha: f32) -> Result<()> {
    check_dims((model.width, model.height), frame)?;
    if (fg.width, fg.height) != (model.width, model.height) {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{}, scene model is {}x{}",
            fg.width, fg.height, model.width, model.height
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParams(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let keep = 1.0 - alpha;
    for (i, px) in frame.yuv.iter().enumerate() {
        if fg.bits[i] {
            continue;
        }
        let m = &mut model.mean[i];
        let v = &mut model.var[i];
        for c in 0..3 {
            let x = px[c] as f32;
            let d = x - m[c];
            m[c] = keep * m[c] + alpha * x;
            v[c] = (keep * v[c] + alpha * d * d).max(model.var_floor);
        }
    }
    model.frames_seen += 1;
    Ok(())
}

impl SceneModel {
    /// Little-endian: magic, width, height, frames_seen (u32), var_floor
    /// (f32), then the mean and variance planes as interleaved YUV f32.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        out.write_all(&(self.frames_seen as u32).to_le_bytes())?;
        out.write_all(&self.var_floor.to_le_bytes())?;
        for plane in [&self.mean, &self.var] {
            for px in plane.iter() {
                for v in px {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let bad = |reason: &str| Error::Decode {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad("not a scene model file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let width = u32_at(8) as usize;
        let height = u32_at(12) as usize;
        let frames_seen = u32_at(16) as usize;
        let var_floor = f32::from_le_bytes(bytes[20..24].try_into().unwrap());
        let n = width * height;
        if bytes.len() != 24 + 2 * n * 12 {
            return Err(bad("truncated planes"));
        }
        let plane = |start: usize| -> Vec<[f32; 3]> {
            bytes[start..start + n * 12]
                .chunks_exact(12)
                .map(|c| {
                    let f = |k: usize| f32::from_le_bytes(c[k * 4..k * 4 + 4].try_into().unwrap());
                    [f(0), f(1), f(2)]
                })
                .collect()
        };
        Ok(Self {
            width,
            height,
            mean: plane(24),
            var: plane(24 + n * 12),
            frames_seen,
            var_floor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn yuv_frame(w: usize, h: usize, f: impl Fn(usize) -> [u8; 3]) -> Frame {
        let yuv: Vec<[u8; 3]> = (0..w * h).map(f).collect();
        Frame {
            index: 0,
            width: w,
            height: h,
            rgb: vec![[0; 3]; w * h],
            yuv,
            source_path: String::new(),
        }
    }

    #[test]
    fn identical_frames_hit_the_floor() {
        let frames: Vec<_> = (0..30).map(|_| yuv_frame(8, 6, |i| [i as u8, 100, 200])).collect();
        let model = learn_scene(&frames, 4.0).unwrap();
        assert!(model.var.iter().all(|v| *v == [4.0; 3]));
        assert_eq!(model.mean[5], [5.0, 100.0, 200.0]);
        assert_eq!(model.frames_seen, 30);
    }

    #[test]
    fn two_point_population_variance() {
        let (v, d) = (100u8, 7u8);
        let frames = [
            yuv_frame(2, 2, |_| [v - d, v - d, v - d]),
            yuv_frame(2, 2, |_| [v + d, v + d, v + d]),
        ];
        let model = learn_scene(&frames, 1.0).unwrap();
        assert_eq!(model.mean[0], [100.0; 3]);
        assert_eq!(model.var[0], [49.0; 3]);
    }

    #[test]
    fn errors() {
        let one = [yuv_frame(2, 2, |_| [0; 3])];
        assert!(matches!(learn_scene(&one, 4.0), Err(Error::TooFewFrames { .. })));
        let mixed = [yuv_frame(2, 2, |_| [0; 3]), yuv_frame(3, 2, |_| [0; 3])];
        assert!(matches!(learn_scene(&mixed, 4.0), Err(Error::DimensionMismatch(_))));
        let model = learn_scene(&[one[0].clone(), one[0].clone()], 4.0).unwrap();
        assert!(detect_foreground(&model, &mixed[1], 4.0).is_err());
    }

    #[test]
    fn matches_per_pixel_accumulation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (w, h) = (17, 11);
        let frames: Vec<_> = (0..30)
            .map(|_| {
                let px: Vec<[u8; 3]> = (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
                yuv_frame(w, h, |i| px[i])
            })
            .collect();
        let model = learn_scene(&frames, 4.0).unwrap();
        // oracle: per pixel, per channel, exact integer moments
        for i in 0..w * h {
            for c in 0..3 {
                let xs: Vec<i64> = frames.iter().map(|f| f.yuv[i][c] as i64).collect();
                let n = xs.len() as i64;
                let s: i64 = xs.iter().sum();
                let pair: i64 = xs.iter().flat_map(|a| xs.iter().map(move |b| (a - b) * (a - b))).sum();
                // Σ_ij (xi−xj)² = 2(nΣx² − (Σx)²)
                let mean = (s as f64 / n as f64) as f32;
                let var = ((pair as f64 / (2 * n * n) as f64) as f32).max(4.0);
                assert_eq!(model.mean[i][c], mean);
                assert_eq!(model.var[i][c], var);
            }
        }
    }

    #[test]
    fn mean_frame_has_no_foreground_and_10_sigma_pixel_is_flagged() {
        let frames: Vec<_> = (0..4)
            .map(|k| yuv_frame(10, 10, |_| if k % 2 == 0 { [98, 128, 128] } else { [102, 128, 128] }))
            .collect();
        let model = learn_scene(&frames, 4.0).unwrap();
        assert_eq!(model.var[0][0], 4.0);
        let at_mean = yuv_frame(10, 10, |_| [100, 128, 128]);
        assert!(detect_foreground(&model, &at_mean, 4.0).unwrap().is_empty());
        let offset = yuv_frame(10, 10, |i| if i == 37 { [120, 128, 128] } else { [100, 128, 128] });
        let fg = detect_foreground(&model, &offset, 4.0).unwrap();
        assert_eq!(fg.count(), 1);
        assert!(fg.bits[37]);
    }

    #[test]
    fn update_respects_mask_and_fixed_point() {
        let frames: Vec<_> = (0..2).map(|_| yuv_frame(4, 4, |_| [50, 60, 70])).collect();
        let model = learn_scene(&frames, 4.0).unwrap();
        let other = yuv_frame(4, 4, |_| [200, 10, 10]);
        let mut m = model.clone();
        let all = ForegroundMask::from_fn(4, 4, |_, _| true);
        update_scene(&mut m, &other, &all, 0.05).unwrap();
        assert_eq!(m.mean, model.mean);
        assert_eq!(m.var, model.var);

        let mut m = model.clone();
        update_scene(&mut m, &frames[0], &ForegroundMask::new(4, 4), 0.05).unwrap();
        assert_eq!(m.mean, model.mean);
        assert_eq!(m.var, model.var);

        assert!(update_scene(&mut m, &frames[0], &ForegroundMask::new(4, 4), 1.0).is_err());
    }

    #[test]
    fn step_decays_geometrically() {
        let base: Vec<_> = (0..2).map(|_| yuv_frame(3, 3, |_| [100, 128, 128])).collect();
        let mut model = learn_scene(&base, 4.0).unwrap();
        let c = 40.0f64;
        let stepped = yuv_frame(3, 3, |_| [140, 128, 128]);
        let alpha = 0.05f32;
        for k in 1..=60 {
            update_scene(&mut model, &stepped, &ForegroundMask::new(3, 3), alpha).unwrap();
            let residual = 140.0 - model.mean[0][0] as f64;
            let expected = c * (1.0 - alpha as f64).powi(k);
            assert!((residual - expected).abs() < 1e-3, "k={k}: {residual} vs {expected}");
        }
    }

    #[test]
    fn save_load_round_trip() {
        let frames: Vec<_> = (0..3).map(|k| yuv_frame(5, 4, |i| [(i * 3 + k) as u8, 7, 9])).collect();
        let model = learn_scene(&frames, 4.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.bin");
        model.save(&path).unwrap();
        assert_eq!(SceneModel::load(&path).unwrap(), model);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"HBPTSCN1");
        assert_eq!(bytes.len(), 24 + 2 * 20 * 12);
    }
}
