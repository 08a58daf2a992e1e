//! Pipeline driver behind the `hbpt` binary.

pub mod config;
pub mod eval;
pub mod pipeline;

use std::path::Path;

use anyhow::{Context, Result};
use hbpt_core::synthgen::{generate_scenario, write_sequence, Scenario, TRUTH_FILE};

pub use config::PipelineConfig;
pub use eval::{evaluate, EvalReport};
pub use pipeline::{run_baseline, run_learn, run_pipeline, Metrics, Pipeline};

pub const CONFIG_FILE: &str = "config.toml";
pub const EVAL_FILE: &str = "eval.json";

/// Writes a synthetic scenario into `dir` along with a `config.toml`
/// that points `track` at it.
pub fn run_synth(scenario: &Scenario, dir: &Path) -> Result<PipelineConfig> {
    let seq = generate_scenario(scenario)?;
    write_sequence(&seq, dir).with_context(|| format!("writing {}", dir.display()))?;
    let mut cfg = PipelineConfig {
        input: dir.to_path_buf(),
        output: dir.join("out"),
        seed: scenario.seed,
        ..PipelineConfig::default()
    };
    cfg.box_region.rect = seq.truth.box_rect.map(|r| [r.x, r.y, r.width, r.height]);
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    Ok(cfg)
}

/// Scores the `track` output in `cfg.output` against `truth.json` in
/// `cfg.input` and writes `eval.json` next to the output.
pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    let truth = hbpt_core::synthgen::read_truth(&cfg.input.join(TRUTH_FILE))
        .with_context(|| format!("reading ground truth in {}", cfg.input.display()))?;
    let records = pipeline::read_blobs(&cfg.output.join(pipeline::BLOBS_FILE))?;
    let events = pipeline::read_events(&cfg.output.join(pipeline::EVENTS_FILE))?;
    let report = evaluate(&truth, &records, &events);
    std::fs::write(cfg.output.join(EVAL_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}
