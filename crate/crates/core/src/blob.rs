//! Gaussian blobs: a spatial mean and 2x2 covariance plus a mean color.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imageio::Frame;

/// Dimension of the observation vector evaluated by [`blob_density`].
pub const OBSERVATION_DIM: usize = 2;
/// Lower bound on each covariance eigenvalue, in px².
pub const EPS_REG: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartLabel {
    #[serde(rename = "head")]
    Head,
    #[serde(rename = "torso")]
    Torso,
    #[serde(rename = "armL")]
    ArmL,
    #[serde(rename = "armR")]
    ArmR,
    #[serde(rename = "leg1")]
    Leg1,
    #[serde(rename = "leg2")]
    Leg2,
    #[serde(rename = "leg3")]
    Leg3,
    #[serde(rename = "leg4")]
    Leg4,
}

impl PartLabel {
    pub const ALL: [PartLabel; 8] = [
        PartLabel::Head,
        PartLabel::Torso,
        PartLabel::ArmL,
        PartLabel::ArmR,
        PartLabel::Leg1,
        PartLabel::Leg2,
        PartLabel::Leg3,
        PartLabel::Leg4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PartLabel::Head => "head",
            PartLabel::Torso => "torso",
            PartLabel::ArmL => "armL",
            PartLabel::ArmR => "armR",
            PartLabel::Leg1 => "leg1",
            PartLabel::Leg2 => "leg2",
            PartLabel::Leg3 => "leg3",
            PartLabel::Leg4 => "leg4",
        }
    }

    pub fn is_leg(self) -> bool {
        matches!(self, PartLabel::Leg1 | PartLabel::Leg2 | PartLabel::Leg3 | PartLabel::Leg4)
    }
}

impl fmt::Display for PartLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlob {
    pub label: PartLabel,
    pub mu: [f64; 2],
    #[serde(rename = "K")]
    pub k: [[f64; 2]; 2],
    pub color: [f64; 3],
    pub area: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axes `(a, b)` with `a >= b`.
    pub semi_axes: [f64; 2],
    /// Direction of the major axis in (-pi/2, pi/2].
    pub angle: f64,
}

/// Eigenvalues (descending) and major-axis angle of a symmetric 2x2 matrix.
pub fn sym_eigen(k: &[[f64; 2]; 2]) -> (f64, f64, f64) {
    let (a, b, c) = (k[0][0], k[0][1], k[1][1]);
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    (mean + r, mean - r, angle)
}

/// Fits a blob to a pixel cluster from exact integer moments.
pub fn fit_blob(pixels: &[Point], frame: &Frame, label: PartLabel) -> Result<GaussianBlob> {
    if pixels.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let n = pixels.len() as i64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i64, 0i64, 0i64, 0i64, 0i64);
    let mut color = [0u64; 3];
    for p in pixels {
        let (x, y) = (p.x as i64, p.y as i64);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        let c = frame.yuv_at(p.x as usize, p.y as usize);
        for ch in 0..3 {
            color[ch] += c[ch] as u64;
        }
    }
    let n2 = (n * n) as f64;
    let k = [
        [(n * sxx - sx * sx) as f64 / n2, (n * sxy - sx * sy) as f64 / n2],
        [(n * sxy - sx * sy) as f64 / n2, (n * syy - sy * sy) as f64 / n2],
    ];
    let nf = n as f64;
    Ok(GaussianBlob {
        label,
        mu: [sx as f64 / nf, sy as f64 / nf],
        k: floor_eigenvalues(k, EPS_REG),
        color: color.map(|c| c as f64 / nf),
        area: pixels.len(),
    })
}

/// Raises any eigenvalue below `eps` to `eps`; leaves `k` untouched when
/// none needs raising.
pub fn floor_eigenvalues(k: [[f64; 2]; 2], eps: f64) -> [[f64; 2]; 2] {
    let (l1, l2, angle) = sym_eigen(&k);
    if l2 >= eps {
        return k;
    }
    let (l1, l2) = (l1.max(eps), l2.max(eps));
    let (s, c) = angle.sin_cos();
    let off = (l1 - l2) * c * s;
    [[l1 * c * c + l2 * s * s, off], [off, l1 * s * s + l2 * c * c]]
}

/// Gaussian density of the blob at `point`, in px⁻².
pub fn blob_density(blob: &GaussianBlob, point: (f64, f64)) -> f64 {
    let [[a, b], [_, c]] = blob.k;
    let det = a * c - b * b;
    let dx = point.0 - blob.mu[0];
    let dy = point.1 - blob.mu[1];
    let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    (-0.5 * q).exp() / ((2.0 * PI).powf(OBSERVATION_DIM as f64 / 2.0) * det.sqrt())
}

/// The k-sigma ellipse of the blob.
pub fn blob_ellipse(blob: &GaussianBlob, k: f64) -> Ellipse {
    let (l1, l2, angle) = sym_eigen(&blob.k);
    Ellipse {
        center: blob.mu,
        semi_axes: [k * l1.max(0.0).sqrt(), k * l2.max(0.0).sqrt()],
        angle,
    }
}
