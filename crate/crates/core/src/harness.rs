//! Experiment orchestration: training runs, learning-curve aggregation,
//! file output, the exact shortest-path oracle and the encoding-size report.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::affordance::{build_oracle, AffordanceError, AffordancePredictor};
use crate::codec::{encode, state_action_pair_count, state_space_size, EncodedState};
use crate::env::{
    self, available_actions, EnvState, GridDims, StepResult, REWARD_FINAL, STEP_PENALTY,
};
use crate::learner::{run_episode, EpisodeOutcome, LearnerConfig, LearnerError, Mode, QTable};

/// Largest table the exact oracle will search.
pub const MAX_SEARCH_CELLS: usize = 7;

/// Table sizes listed in the encoding-size report.
pub const TABLE3_DIMS: [(usize, usize); 7] =
    [(3, 1), (4, 1), (5, 1), (6, 1), (7, 1), (2, 2), (3, 2)];

const ORACLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("table {0} is too large for exhaustive search (limit {MAX_SEARCH_CELLS} cells)")]
    TooLarge(GridDims),
    #[error("no action sequence reaches a clean table from {0}")]
    Unreachable(EnvState),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Affordance(#[from] AffordanceError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dims: GridDims,
    pub modes: Vec<Mode>,
    /// Independent seeds per mode; run `r` uses seed `learner.seed + r`.
    pub runs: usize,
    /// Shared hyperparameters. `mode` is overridden per mode.
    pub learner: LearnerConfig,
    pub smoothing_window: usize,
    /// Where to write CSV and chart files; nothing is written when `None`.
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dims: GridDims) -> Self {
        ExperimentConfig {
            dims,
            modes: vec![Mode::Standard, Mode::Affordance],
            runs: 10,
            learner: LearnerConfig::default(),
            smoothing_window: 50,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.learner.validate()?;
        if self.runs == 0 {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(HarnessError::Config("no modes selected".into()));
        }
        if self.smoothing_window == 0 || self.smoothing_window > self.learner.episodes {
            return Err(HarnessError::Config(format!(
                "smoothing window {} must be in [1, {}]",
                self.smoothing_window, self.learner.episodes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub run_id: usize,
    pub episode_index: usize,
    pub mode: Mode,
    pub total_reward: f64,
    pub steps: usize,
    pub outcome: EpisodeOutcome,
    pub start_state: EncodedState,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<EpisodeRecord>,
    pub q: QTable,
}

pub fn run_seed(base: u64, run_id: usize) -> u64 {
    base.wrapping_add(run_id as u64)
}

/// Trains one fresh learner. Episodes start from random all-dirty placements
/// drawn from the run's generator; affordance mode builds its own oracle
/// from a seed derived from the run seed.
pub fn train_run(
    dims: GridDims,
    learner: &LearnerConfig,
    mode: Mode,
    run_id: usize,
) -> Result<RunResult, HarnessError> {
    let cfg = LearnerConfig {
        mode,
        ..learner.clone()
    };
    cfg.validate()?;
    let seed = run_seed(cfg.seed, run_id);
    let oracle = match mode {
        Mode::Affordance => Some(build_oracle(
            dims,
            cfg.oracle_accuracy,
            seed ^ ORACLE_STREAM,
        )?),
        Mode::Standard => None,
    };
    let predictor = oracle.as_ref().map(|o| o as &dyn AffordancePredictor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QTable::new();
    let mut records = Vec::with_capacity(cfg.episodes);
    for episode_index in 0..cfg.episodes {
        let start = env::random_initial_state(dims, &mut rng);
        let ep = run_episode(start, &mut q, &cfg, predictor, &mut rng)?;
        records.push(EpisodeRecord {
            run_id,
            episode_index,
            mode,
            total_reward: ep.total_reward,
            steps: ep.steps,
            outcome: ep.outcome,
            start_state: encode(&start),
        });
    }
    Ok(RunResult { records, q })
}

/// Learning curve of one mode.
#[derive(Debug, Clone)]
pub struct ModeCurve {
    pub mode: Mode,
    /// Per-episode reward averaged over runs.
    pub mean: Vec<f64>,
    /// `mean` after trailing moving-average smoothing.
    pub smoothed: Vec<f64>,
    /// Per-episode minimum and maximum over runs.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Fraction of episodes ending in a clean table, per episode over runs.
    pub success: Vec<f64>,
}

impl ModeCurve {
    fn from_runs(mode: Mode, runs: &[RunResult], window: usize) -> Self {
        let episodes = runs[0].records.len();
        let mut mean = vec![0.0; episodes];
        let mut min = vec![f64::INFINITY; episodes];
        let mut max = vec![f64::NEG_INFINITY; episodes];
        let mut success = vec![0.0; episodes];
        for run in runs {
            for (i, r) in run.records.iter().enumerate() {
                mean[i] += r.total_reward;
                min[i] = min[i].min(r.total_reward);
                max[i] = max[i].max(r.total_reward);
                if r.outcome == EpisodeOutcome::Final {
                    success[i] += 1.0;
                }
            }
        }
        let n = runs.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        success.iter_mut().for_each(|s| *s /= n);
        let smoothed = moving_average(&mean, window).expect("window validated");
        ModeCurve {
            mode,
            mean,
            smoothed,
            min,
            max,
            success,
        }
    }

    /// Mean of the smoothed curve over the last `k` episodes.
    pub fn tail_mean(&self, k: usize) -> f64 {
        let k = k.clamp(1, self.smoothed.len());
        self.smoothed[self.smoothed.len() - k..].iter().sum::<f64>() / k as f64
    }

    pub fn points(&self) -> Vec<CurvePoint> {
        self.smoothed
            .iter()
            .enumerate()
            .map(|(episode_index, &mean_reward)| CurvePoint {
                episode_index,
                mean_reward,
                mode: self.mode,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode_index: usize,
    pub mean_reward: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct ModeSummary {
    pub mode: Mode,
    /// Smoothed reward at the last episode: the raw mean over the final window.
    pub final_window_mean: f64,
    /// Share of Final outcomes over the final window, across runs.
    pub final_window_success: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub records: Vec<EpisodeRecord>,
    pub curves: Vec<ModeCurve>,
    pub summaries: Vec<ModeSummary>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn curve(&self, mode: Mode) -> Option<&ModeCurve> {
        self.curves.iter().find(|c| c.mode == mode)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let mut modes = cfg.modes.clone();
    modes.sort();
    modes.dedup();
    let jobs: Vec<(Mode, usize)> = modes
        .iter()
        .flat_map(|&m| (0..cfg.runs).map(move |r| (m, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(mode, run)| train_run(cfg.dims, &cfg.learner, mode, run))
        .collect::<Result<Vec<_>, _>>()?;

    let window = cfg.smoothing_window;
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    for (mode, runs) in modes.iter().zip(results.chunks(cfg.runs)) {
        let curve = ModeCurve::from_runs(*mode, runs, window);
        let tail = curve.success.len() - window;
        summaries.push(ModeSummary {
            mode: *mode,
            final_window_mean: *curve.smoothed.last().expect("episodes > 0"),
            final_window_success: curve.success[tail..].iter().sum::<f64>() / window as f64,
        });
        curves.push(curve);
    }
    let records: Vec<EpisodeRecord> = results.into_iter().flat_map(|r| r.records).collect();

    let mut files = Vec::new();
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
        files.push(write_file(&dir.join("episodes.csv"), |w| {
            write_episodes_csv(w, &records)
        })?);
        files.push(write_file(&dir.join("curve.csv"), |w| {
            write_curve_csv(w, &curves)
        })?);
        let title = format!("{} table, {} runs, window {}", cfg.dims, cfg.runs, window);
        files.push(write_file(&dir.join("curve.svg"), |w| {
            w.write_all(render_svg(&curves, &title).as_bytes())
        })?);
    }
    Ok(ExperimentReport {
        records,
        curves,
        summaries,
        files,
    })
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
) -> Result<PathBuf, HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    body(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(path.to_path_buf())
}

pub const EPISODES_CSV_HEADER: &str = "run,episode,mode,total_reward,steps,outcome,start_state";

/// One row per episode, in the order given (mode, run, episode for
/// [`run_experiment`] output).
pub fn write_episodes_csv<W: Write>(mut w: W, records: &[EpisodeRecord]) -> io::Result<()> {
    writeln!(w, "{EPISODES_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.run_id, r.episode_index, r.mode, r.total_reward, r.steps, r.outcome, r.start_state
        )?;
    }
    Ok(())
}

pub fn write_curve_csv<W: Write>(mut w: W, curves: &[ModeCurve]) -> io::Result<()> {
    writeln!(w, "episode,mode,mean_reward,smoothed_reward,success_rate")?;
    for c in curves {
        for i in 0..c.mean.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                i, c.mode, c.mean[i], c.smoothed[i], c.success[i]
            )?;
        }
    }
    Ok(())
}

/// Line chart of the smoothed curves as a standalone SVG document.
pub fn render_svg(curves: &[ModeCurve], title: &str) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    let episodes = curves
        .iter()
        .map(|c| c.smoothed.len())
        .max()
        .unwrap_or(1)
        .max(2);
    let (lo, hi) = curves
        .iter()
        .flat_map(|c| c.smoothed.iter().copied())
        .fold((-1.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let x = |i: usize| LEFT + (W - LEFT - RIGHT) * i as f64 / (episodes - 1) as f64;
    let y = |v: f64| TOP + (H - TOP - BOTTOM) * (hi - v) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    for tick in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        if tick < lo || tick > hi {
            continue;
        }
        let ty = y(tick);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{ty:.1}" x2="{}" y2="{ty:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            ty + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{LEFT}" y="{}">0</text><text x="{}" y="{}" text-anchor="end">{}</text>"#,
        H - BOTTOM + 16.0,
        W - RIGHT,
        H - BOTTOM + 16.0,
        episodes - 1
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">episode</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">average collected reward</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (k, c) in curves.iter().enumerate() {
        let (color, dash) = match c.mode {
            Mode::Standard => ("#1f77b4", ""),
            Mode::Affordance => ("#ff7f0e", r#" stroke-dasharray="6 4""#),
        };
        let points: Vec<String> = c
            .smoothed
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 16.0 * k as f64 + 8.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT - 130.0,
            W - RIGHT - 100.0,
            W - RIGHT - 94.0,
            ly + 4.0,
            c.mode
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Trailing moving average; element `i` averages `series[i+1-window ..= i]`,
/// using a shorter window at the start.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, HarnessError> {
    if window == 0 {
        return Err(HarnessError::Config("window must be at least 1".into()));
    }
    let out = (0..series.len())
        .map(|i| {
            let from = (i + 1).saturating_sub(window);
            let slice = &series[from..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    Ok(out)
}

/// Exact optimal undiscounted return from `start`: `1 - 0.01 * (T - 1)` for
/// the fewest steps `T` that clean the table, found by breadth-first search.
/// A start that is already clean returns 0.
pub fn optimal_return(start: &EnvState) -> Result<f64, HarnessError> {
    let steps = min_steps_to_final(start)?;
    Ok(if steps == 0 {
        0.0
    } else {
        REWARD_FINAL + STEP_PENALTY * (steps - 1) as f64
    })
}

/// Fewest actions from `start` to a clean table.
pub fn min_steps_to_final(start: &EnvState) -> Result<usize, HarnessError> {
    let dims = start.dims();
    if dims.cell_count() > MAX_SEARCH_CELLS {
        return Err(HarnessError::TooLarge(dims));
    }
    if env::is_final(start) {
        return Ok(0);
    }
    let mut seen = HashSet::from([*start]);
    let mut queue = VecDeque::from([(*start, 0usize)]);
    while let Some((s, depth)) = queue.pop_front() {
        for &a in available_actions(dims) {
            match env::step(&s, a).expect("available action").result {
                StepResult::Final => return Ok(depth + 1),
                StepResult::Continue(next) => {
                    if seen.insert(next) {
                        queue.push_back((next, depth + 1));
                    }
                }
                StepResult::Failed => {}
            }
        }
    }
    Err(HarnessError::Unreachable(*start))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Table3Row {
    pub dims: GridDims,
    pub states: u128,
    pub pairs: u128,
}

pub fn table3_report() -> Vec<Table3Row> {
    TABLE3_DIMS
        .iter()
        .map(|&(w, h)| {
            let dims = GridDims::new(w, h).expect("listed dims are valid");
            Table3Row {
                dims,
                states: state_space_size(dims),
                pairs: state_action_pair_count(dims),
            }
        })
        .collect()
}

fn thousands(n: u128) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn render_table3(rows: &[Table3Row]) -> String {
    let mut out = format!(
        "{:<12}{:>14}{:>28}\n",
        "Dimensions", "Total states", "Total (state, action) pairs"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12}{:>14}{:>28}",
            format!("{} x {}", r.dims.width(), r.dims.height()),
            thousands(r.states),
            thousands(r.pairs)
        );
    }
    out
}
