//! Pipeline configuration, read from TOML. Every key is optional.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hbpt_core::activity::ActivityParams;
use hbpt_core::baseline::{LabelParams, DEFAULT_D_MIN, DEFAULT_KCOS_ANGLE_DEG, DEFAULT_KCOS_K};
use hbpt_core::bodyparts::DEFAULT_MIN_PART_AREA;
use hbpt_core::maskops::{RefineParams, DEFAULT_MIN_AREA_FRACTION};
use hbpt_core::scene::{DEFAULT_ALPHA, DEFAULT_LEARN_FRAMES, DEFAULT_TAU, DEFAULT_VAR_FLOOR};
use hbpt_core::tracker::MspfParams;
use hbpt_core::Rect;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub frame_pattern: String,
    pub depth_pattern: String,
    pub seed: u64,
    pub emit_overlays: bool,
    pub use_depth: bool,
    /// Also run the hull-vertex labeler during `track`.
    pub baseline_mode: bool,
    pub scene: SceneConfig,
    pub refine: RefineConfig,
    pub tracker: MspfParams,
    pub person: PersonConfig,
    pub parts: PartsConfig,
    pub activity: ActivityParams,
    #[serde(rename = "box")]
    pub box_region: BoxConfig,
    pub baseline: BaselineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("."),
            output: PathBuf::from("out"),
            frame_pattern: "frame_*".into(),
            depth_pattern: "depth_*".into(),
            seed: 0,
            emit_overlays: false,
            use_depth: true,
            baseline_mode: false,
            scene: SceneConfig::default(),
            refine: RefineConfig::default(),
            tracker: MspfParams::default(),
            person: PersonConfig::default(),
            parts: PartsConfig::default(),
            activity: ActivityParams::default(),
            box_region: BoxConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub learn_frames: usize,
    pub var_floor: f32,
    pub tau: f32,
    pub alpha: f32,
    /// Dilation passes applied to the person silhouette before it is
    /// excluded from the scene update.
    pub update_guard: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            learn_frames: DEFAULT_LEARN_FRAMES,
            var_floor: DEFAULT_VAR_FLOOR,
            tau: DEFAULT_TAU,
            alpha: DEFAULT_ALPHA,
            update_guard: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub se_size: usize,
    pub iterations: usize,
    /// Minimum component area as a fraction of the frame.
    pub min_area_fraction: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        let r = RefineParams::default();
        Self { se_size: r.se_size, iterations: r.iterations, min_area_fraction: DEFAULT_MIN_AREA_FRACTION }
    }
}

impl RefineConfig {
    pub fn params(&self) -> RefineParams {
        RefineParams { se_size: self.se_size, iterations: self.iterations }
    }

    pub fn min_area(&self, width: usize, height: usize) -> usize {
        ((width * height) as f64 * self.min_area_fraction).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonConfig {
    /// Tracks whose confidence decays below this are dropped.
    pub drop_confidence: f64,
    /// With depth, silhouette pixels farther than this from the median
    /// person depth are dropped.
    pub depth_gate_mm: f64,
}

impl Default for PersonConfig {
    fn default() -> Self {
        Self { drop_confidence: 0.1, depth_gate_mm: 500.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartsConfig {
    pub min_part_area: usize,
}

impl Default for PartsConfig {
    fn default() -> Self {
        Self { min_part_area: DEFAULT_MIN_PART_AREA }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxConfig {
    /// `[x, y, width, height]` of the object region; no activity
    /// recognition without it.
    pub rect: Option<[i32; 4]>,
    /// Frame whose pixels give the reference histogram.
    pub ref_frame: usize,
}

impl BoxConfig {
    pub fn rect(&self) -> Option<Rect> {
        self.rect.map(|[x, y, w, h]| Rect::new(x, y, w, h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub d_min: f64,
    pub kcos_k: usize,
    pub kcos_angle_deg: f64,
    pub labels: LabelParams,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            d_min: DEFAULT_D_MIN,
            kcos_k: DEFAULT_KCOS_K,
            kcos_angle_deg: DEFAULT_KCOS_ANGLE_DEG,
            labels: LabelParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        anyhow::ensure!(s.learn_frames >= 2, "scene.learn_frames must be at least 2");
        anyhow::ensure!(s.var_floor > 0.0, "scene.var_floor must be positive");
        anyhow::ensure!(s.tau > 0.0, "scene.tau must be positive");
        anyhow::ensure!(s.alpha > 0.0 && s.alpha < 1.0, "scene.alpha must be in (0, 1)");
        anyhow::ensure!(self.refine.se_size % 2 == 1, "refine.se_size must be odd");
        anyhow::ensure!(
            (0.0..1.0).contains(&self.refine.min_area_fraction),
            "refine.min_area_fraction must be in [0, 1)"
        );
        anyhow::ensure!(self.tracker.n_particles > 0, "tracker.n_particles must be positive");
        if let Some(r) = self.box_region.rect() {
            anyhow::ensure!(!r.is_empty(), "box.rect must have positive size");
        }
        Ok(())
    }
}
