use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use table_affordance::affordance;
use table_affordance::codec::{self, EncodedState};
use table_affordance::env::{CellState, EnvState, GridDims, GridPos, HeldObject};
use table_affordance::harness::{self, ExperimentConfig};
use table_affordance::learner::{LearnerConfig, Mode};

#[derive(Parser, Debug)]
#[command(
    name = "table-affordance",
    version,
    about = "Table-cleaning SARSA with contextual affordances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train standard and/or affordance-masked SARSA and write learning curves
    Train(TrainArgs),
    /// Print state and (state, action) pair counts of the encoding
    Table3,
    /// Pack a state into its integer encoding
    Encode(EncodeArgs),
    /// Unpack an integer encoding into state fields
    Decode(DecodeArgs),
    /// Build a noisy affordance oracle and report its measured accuracy
    OracleCheck(OracleArgs),
}

#[derive(Args, Debug)]
struct DimsArgs {
    #[arg(long, default_value_t = 3)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    height: usize,
}

impl DimsArgs {
    fn dims(&self) -> Result<GridDims, String> {
        GridDims::new(self.width, self.height).map_err(|e| e.to_string())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Standard,
    Affordance,
    Both,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    dims: DimsArgs,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0.9)]
    oracle_accuracy: f64,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Moving-average window in episodes
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[command(flatten)]
    dims: DimsArgs,
    /// Row-major cells, `#` or `d` for dirty and `.` or `c` for clean
    #[arg(long)]
    cells: String,
    /// Arm position as `x,y`
    #[arg(long)]
    arm: String,
    #[arg(long)]
    cup: String,
    #[arg(long)]
    sponge: String,
    #[arg(long, value_enum, default_value_t = HeldArg::None)]
    held: HeldArg,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum HeldArg {
    None,
    Cup,
    Sponge,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[command(flatten)]
    dims: DimsArgs,
    value: u64,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    dims: DimsArgs,
    #[arg(long, default_value_t = 0.9)]
    accuracy: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the label table to this file
    #[arg(long)]
    dump: Option<PathBuf>,
}

fn parse_pos(text: &str) -> Result<GridPos, String> {
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| format!("position `{text}` must be `x,y`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad coordinate `{v}`"))
    };
    Ok(GridPos::new(parse(x)?, parse(y)?))
}

fn train(args: &TrainArgs) -> Result<(), String> {
    let modes = match args.mode {
        ModeArg::Standard => vec![Mode::Standard],
        ModeArg::Affordance => vec![Mode::Affordance],
        ModeArg::Both => vec![Mode::Standard, Mode::Affordance],
    };
    let cfg = ExperimentConfig {
        dims: args.dims.dims()?,
        modes,
        runs: args.runs,
        learner: LearnerConfig {
            alpha: args.alpha,
            gamma: args.gamma,
            epsilon: args.epsilon,
            episodes: args.episodes,
            max_steps_per_episode: args.max_steps,
            oracle_accuracy: args.oracle_accuracy,
            seed: args.seed,
            ..LearnerConfig::default()
        },
        smoothing_window: args.window,
        output_dir: Some(args.out.clone()),
    };
    let report = harness::run_experiment(&cfg).map_err(|e| e.to_string())?;
    for (summary, curve) in report.summaries.iter().zip(&report.curves) {
        println!(
            "{:<10} final-window mean reward {:>7.3}  success {:>5.1}%  last-100 smoothed {:>7.3}",
            summary.mode,
            summary.final_window_mean,
            100.0 * summary.final_window_success,
            curve.tail_mean(100),
        );
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn encode_cmd(args: &EncodeArgs) -> Result<(), String> {
    let dims = args.dims.dims()?;
    let cells = args
        .cells
        .chars()
        .map(|c| match c {
            '#' | 'd' | 'D' => Ok(CellState::Dirty),
            '.' | 'c' | 'C' => Ok(CellState::Clean),
            other => Err(format!("bad cell `{other}`")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let held = match args.held {
        HeldArg::None => HeldObject::None,
        HeldArg::Cup => HeldObject::Cup,
        HeldArg::Sponge => HeldObject::Sponge,
    };
    let state = EnvState::new(
        dims,
        &cells,
        parse_pos(&args.arm)?,
        parse_pos(&args.cup)?,
        parse_pos(&args.sponge)?,
        held,
    )
    .map_err(|e| e.to_string())?;
    println!("{}", codec::encode(&state));
    Ok(())
}

fn decode_cmd(args: &DecodeArgs) -> Result<(), String> {
    let dims = args.dims.dims()?;
    let s = codec::decode(EncodedState(args.value), dims).map_err(|e| e.to_string())?;
    let cells: String = s
        .cells()
        .iter()
        .map(|c| if *c == CellState::Dirty { '#' } else { '.' })
        .collect();
    println!("cells={cells}");
    println!("arm={},{}", s.arm().x, s.arm().y);
    println!("sponge={},{}", s.sponge().x, s.sponge().y);
    println!("cup={},{}", s.cup().x, s.cup().y);
    println!("held={}", s.held());
    Ok(())
}

fn oracle_check(args: &OracleArgs) -> Result<(), String> {
    let dims = args.dims.dims()?;
    let oracle =
        affordance::build_oracle(dims, args.accuracy, args.seed).map_err(|e| e.to_string())?;
    println!(
        "{} pairs, configured accuracy {}, measured accuracy {:.4}",
        oracle.len(),
        args.accuracy,
        oracle.measure_accuracy()
    );
    if let Some(path) = &args.dump {
        let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        oracle
            .dump(BufWriter::new(file))
            .map_err(|e| format!("{}: {e}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => train(args),
        Command::Table3 => {
            print!("{}", harness::render_table3(&harness::table3_report()));
            Ok(())
        }
        Command::Encode(args) => encode_cmd(args),
        Command::Decode(args) => decode_cmd(args),
        Command::OracleCheck(args) => oracle_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
