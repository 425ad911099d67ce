use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slnet::pipeline::{self, PipelineConfig, SceneChoice, Split};
use slnet::{Error, Result};

#[derive(Parser)]
#[command(name = "slnet", version, about = "Scene-aware radar object detection")]
struct Cli {
    /// TOML configuration file; built-in desk-scale defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labelled dataset.
    GenData {
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long = "static")]
        static_count: Option<usize>,
        #[arg(long = "dynamic")]
        dynamic_count: Option<usize>,
    },
    /// Universal training, per-scene fine-tuning and the scene classifier.
    Train,
    /// Detect objects in sequences.
    Infer {
        /// Sequence directories.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Infer every sequence of a dataset split instead.
        #[arg(long)]
        split: Option<String>,
        #[arg(long, default_value = "auto")]
        scene: String,
        #[arg(long)]
        no_postproc: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score inference output, or compare two reports.
    Eval {
        #[arg(long, required_unless_present = "compare")]
        detections: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["BASELINE", "CANDIDATE"])]
        compare: Option<Vec<PathBuf>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write PGM/PPM images of a sequence.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        first: usize,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::GenData { root, static_count, dynamic_count } => {
            if let Some(r) = root {
                cfg.dataset_root = r;
            }
            if let Some(n) = static_count {
                cfg.data.static_sequences = n;
                cfg.data.val_static = cfg.data.val_static.min(n);
            }
            if let Some(n) = dynamic_count {
                cfg.data.dynamic_sequences = n;
                cfg.data.val_dynamic = cfg.data.val_dynamic.min(n);
            }
            let m = pipeline::cmd_gen_data(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&m).expect("manifest serializes"));
        }
        Command::Train => {
            let s = pipeline::cmd_train(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
        }
        Command::Infer { mut inputs, split, scene, no_postproc, out } => {
            let scene: SceneChoice = scene.parse()?;
            if let Some(s) = split {
                let split: Split = s.parse()?;
                let m = pipeline::DatasetManifest::load(&cfg.dataset_root)?;
                inputs.extend(m.split_dirs(&cfg.dataset_root, split));
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.join("infer"));
            let ms = pipeline::cmd_infer(&cfg, &inputs, scene, !no_postproc, &out)?;
            for m in ms {
                println!(
                    "{} scene={} ({}) detections={} removed={} added={}",
                    m.sequence_id, m.scene, m.scene_source, m.num_detections, m.audit.removed, m.audit.added
                );
            }
        }
        Command::Eval { detections, compare, out } => {
            let out = out.unwrap_or_else(|| cfg.output_dir.join("eval"));
            if let Some(pair) = compare {
                print!("{}", pipeline::cmd_compare(&pair[0], &pair[1], &out)?);
            } else {
                let det = detections.ok_or_else(|| Error::Config("--detections is required".into()))?;
                let r = pipeline::cmd_eval(&cfg, &det, &out)?;
                for (k, v) in r.summary() {
                    println!("{k:<16} {v:8.2}");
                }
            }
        }
        Command::Render { input, first, count, detections, out } => {
            let out = out.unwrap_or_else(|| cfg.output_dir.join("render"));
            let files = pipeline::cmd_render(&cfg, &input, first, count, detections.as_deref(), &out)?;
            println!("wrote {} images to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
