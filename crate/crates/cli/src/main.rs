use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hbpt::{run_baseline, run_eval, run_learn, run_pipeline, run_synth, PipelineConfig};
use hbpt_core::synthgen::{Scenario, ScenarioName};

#[derive(Parser)]
#[command(name = "hbpt", version, about = "Body-parts blob tracking and activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario with ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Scenario name, e.g. walker or carry_box.
        #[arg(long, default_value = "walker")]
        scenario: String,
        /// Frame count (defaults to the scenario's own length).
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Learn the scene model from the first frames and save it.
    Learn(Common),
    /// Run the full tracking pipeline.
    Track(Common),
    /// Run the hull-vertex silhouette labeler.
    Baseline(Common),
    /// Compare track output with truth.json.
    Eval(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write annotated frames to OUTPUT/overlays.
    #[arg(long)]
    overlays: bool,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(i) = &self.input {
            cfg.input = i.clone();
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.emit_overlays |= self.overlays;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, scenario, frames } => {
            let name: ScenarioName = scenario.parse()?;
            let mut s = Scenario::new(name, common.seed.unwrap_or(0));
            s.params.frames = frames;
            let dir = common.output.clone().unwrap_or_else(|| PathBuf::from(name.as_str()));
            run_synth(&s, &dir)?;
            println!("wrote {} frames of {name} to {}", s.frame_count(), dir.display());
        }
        Command::Learn(common) => {
            let path = run_learn(&common.config()?)?;
            println!("scene model written to {}", path.display());
        }
        Command::Track(common) => {
            let m = run_pipeline(&common.config()?)?;
            println!("{} frames, {:.1} fps, {} events", m.frames, m.fps, m.events);
        }
        Command::Baseline(common) => {
            let n = run_baseline(&common.config()?)?;
            println!("{n} frames labeled");
        }
        Command::Eval(common) => {
            let r = run_eval(&common.config()?)?;
            println!("person frames      {}", r.person_frames);
            println!("missed             {}", r.missed);
            println!("centroid rms (px)  {:.3}", r.centroid_rms_px);
            println!("torso inside       {:.3}", r.torso_inside_fraction);
            println!("parts within tol   {:.3}", r.parts_fraction);
            println!("arm agreement      {:.3}", r.arm_presence_agreement);
            for m in &r.events {
                println!("event {:?} scripted {} detected {:?}", m.kind, m.scripted, m.detected);
            }
            println!("spurious events    {}", r.spurious_events.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
