use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use talkhead::anim::Role;
use talkhead::config::Config;
use talkhead::dataset::EMOTIONS;
use talkhead::pipeline::{self, Layout};
use talkhead::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "talkhead", version, about = "Text-driven talking-head pipeline")]
struct Cli {
    /// Flat TOML configuration; defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Artifact directory shared by all commands.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Emotion for `generate`.
    #[arg(long, global = true, value_enum)]
    emotion: Option<Emotion>,
    /// Stamp a visible SYNTHETIC mark on generated frames.
    #[arg(long, global = true)]
    watermark: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic corpus, reference set and face model
    SynthData,
    /// Train the mouth, upper-face or head animation network
    TrainAnim {
        #[arg(value_enum)]
        role: RoleArg,
    },
    /// Fit the face model to the reference landmarks
    FitFace,
    /// Train the speaker style map
    TrainStyle,
    /// Train the neural renderer
    TrainRender,
    /// Produce parameters, landmarks and frames for one utterance
    Generate,
    /// Score test utterances and write report.json
    Eval,
    /// Check analytic gradients of every network
    Gradcheck,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    Mouth,
    Upper,
    Head,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Emotion {
    Surprise,
    Anger,
    Neutral,
    Happiness,
}

impl Emotion {
    fn index(self) -> usize {
        let name = format!("{self:?}").to_lowercase();
        EMOTIONS.iter().position(|e| *e == name).expect("known emotion")
    }
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let out = Layout::new(&cli.out);
    match &cli.command {
        Command::SynthData => pipeline::synth_data(&cfg, cli.seed, &out),
        Command::TrainAnim { role } => {
            let role = match role {
                RoleArg::Mouth => Role::Mouth,
                RoleArg::Upper => Role::Upper,
                RoleArg::Head => Role::Head,
            };
            pipeline::train_anim(&cfg, cli.seed, &out, role)
        }
        Command::FitFace => pipeline::fit_face(&cfg, &out),
        Command::TrainStyle => pipeline::train_style_cmd(&cfg, cli.seed, &out),
        Command::TrainRender => pipeline::train_render(&cfg, cli.seed, &out),
        Command::Generate => {
            let emotion = cli
                .emotion
                .ok_or_else(|| Error::InvalidArgument("generate needs --emotion".into()))?;
            pipeline::generate(&cfg, &out, emotion.index(), cli.watermark)
        }
        Command::Eval => pipeline::eval(&cfg, &out),
        Command::Gradcheck => pipeline::gradcheck(cli.seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
