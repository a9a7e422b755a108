use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lrapm::eval::{self, BacktestConfig, LambdaSelection};
use lrapm::ingest::{self, IngestOptions, PossessionSet};
use lrapm::lineup::{self, LineupRatings};
use lrapm::rapm::{self, Split, DEFAULT_FALLBACK_RATING};
use lrapm::synth::{self, League, SynthConfig};
use lrapm::{LambdaPair, LineupKey, PlayerRatings, SolveOptions};

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "lrapm",
    version,
    about = "Player and lineup plus-minus ratings from possession data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic league with known player effects.
    Synth(SynthArgs),
    /// Fit player ratings (RAPM).
    FitRapm(FitRapmArgs),
    /// Fit lineup ratings shrunk toward player-derived priors.
    FitLrapm(FitLrapmArgs),
    /// Predict points for a lineup matchup.
    Predict(PredictArgs),
    /// Expanding-window backtest against raw lineup ratings.
    Backtest(BacktestArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    possessions: PathBuf,
    /// First day of week 1 (YYYY-MM-DD); defaults to the earliest game date.
    #[arg(long)]
    season_start: Option<NaiveDate>,
    #[arg(long)]
    skip_bad_rows: bool,
}

impl InputArgs {
    fn load(&self) -> anyhow::Result<PossessionSet> {
        require_file(&self.possessions)?;
        let opts = IngestOptions {
            season_start: self.season_start,
            skip_bad_rows: self.skip_bad_rows,
            season_label: self.possessions.display().to_string(),
            ..IngestOptions::default()
        };
        let ps = ingest::read_possessions(&self.possessions, &opts)
            .with_context(|| format!("reading {}", self.possessions.display()))?;
        if ps.skipped_rows > 0 {
            log::warn!("skipped {} bad rows", ps.skipped_rows);
        }
        Ok(ps)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    teams: Option<usize>,
    #[arg(long)]
    roster_size: Option<usize>,
    #[arg(long)]
    weeks: Option<u32>,
    #[arg(long)]
    games_per_week: Option<usize>,
    #[arg(long)]
    possessions_per_game: Option<usize>,
    #[arg(long)]
    sd_gamma_off: Option<f64>,
    #[arg(long)]
    sd_gamma_def: Option<f64>,
    #[arg(long)]
    league_mean: Option<f64>,
    #[arg(long)]
    rotation_concentration: Option<f64>,
    #[arg(long)]
    lineup_pool: Option<usize>,
    #[arg(long)]
    point_dispersion: Option<f64>,
    /// Also simulate an earlier season of the same league into
    /// `prior_possessions.csv`, for fitting player ratings.
    #[arg(long)]
    prior_season: bool,
}

#[derive(Args)]
struct FitRapmArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, conflicts_with = "grid")]
    lambda_off: Option<f64>,
    #[arg(long, conflicts_with = "grid")]
    lambda_def: Option<f64>,
    /// Comma-separated λ candidates, searched over offense × defense.
    #[arg(long)]
    grid: Option<String>,
    /// Separate defensive candidates; defaults to `--grid`.
    #[arg(long, requires = "grid")]
    grid_def: Option<String>,
    /// Trailing weeks held out for λ selection.
    #[arg(long, default_value_t = 1)]
    val_weeks: u32,
    /// Report correlation of fitted and true effects.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FitLrapmArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    player_ratings: PathBuf,
    #[arg(long, conflicts_with = "grid")]
    lambda: Option<f64>,
    /// Comma-separated λ candidates.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    val_weeks: u32,
    #[arg(long, default_value_t = DEFAULT_FALLBACK_RATING, allow_negative_numbers = true)]
    fallback_rating: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Needed to build priors for lineups absent from the model.
    #[arg(long)]
    player_ratings: Option<PathBuf>,
    #[arg(long)]
    off: String,
    #[arg(long)]
    def: String,
    /// Print the net rating per 100 possessions of `--off` over `--def`.
    #[arg(long)]
    per_100: bool,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    player_ratings: PathBuf,
    #[arg(long, default_value_t = 5)]
    first_test_week: u32,
    #[arg(long, conflicts_with = "grid")]
    lambda: Option<f64>,
    #[arg(long)]
    grid: Option<String>,
    /// Re-run λ selection for every test week.
    #[arg(long, requires = "grid")]
    reselect: bool,
    /// Lower bucket edges by training possessions.
    #[arg(long)]
    buckets: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FALLBACK_RATING, allow_negative_numbers = true)]
    fallback_rating: f64,
    #[arg(long)]
    adjusted_baseline: bool,
    #[arg(long)]
    no_unseen: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(usage(format!("no such file: {}", path.display())));
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> anyhow::Result<Vec<T>> {
    let items: Result<Vec<T>, _> = spec.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(usage(format!("bad {what} list: {spec:?}"))),
    }
}

fn parse_lineup(s: &str) -> anyhow::Result<LineupKey> {
    LineupKey::parse(s).map_err(|e| usage(format!("bad lineup {s:?}: {e}")))
}

fn week_split(ps: &PossessionSet, val_weeks: u32) -> anyhow::Result<Split> {
    if val_weeks == 0 || val_weeks >= ps.weeks {
        return Err(usage(format!("--val-weeks must be in 1..{}", ps.weeks)));
    }
    Ok(Split::WeekCutoff(ps.weeks - val_weeks))
}

fn json_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg = SynthConfig {
        seed: a.seed,
        ..SynthConfig::default()
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { cfg.$field = v; })*
        };
    }
    set!(teams => n_teams, roster_size => roster_size, weeks => weeks,
        games_per_week => games_per_week, possessions_per_game => possessions_per_game,
        sd_gamma_off => sd_gamma_off, sd_gamma_def => sd_gamma_def,
        league_mean => league_mean_ppp, rotation_concentration => rotation_concentration,
        lineup_pool => lineup_pool_size, point_dispersion => point_dispersion);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let league = League::new(cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let season = league.simulate_season(0)?;
    season.write_csv_path(a.out.join("possessions.csv"))?;
    synth::write_ground_truth_path(a.out.join("ground_truth.csv"), league.truth())?;
    if a.prior_season {
        league
            .simulate_season(1)?
            .write_csv_path(a.out.join("prior_possessions.csv"))?;
    }
    let stats = season.usage_stats()?;
    println!(
        "possessions={} lineups={} mean_off_per_lineup={} std={}",
        season.len(),
        stats.offense.lineups,
        lrapm::fmt::sig6(stats.offense.mean),
        lrapm::fmt::sig6(stats.offense.std)
    );
    Ok(())
}

fn fit_rapm_cmd(a: FitRapmArgs) -> anyhow::Result<()> {
    let ps = a.input.load()?;
    let opts = SolveOptions::default();
    let ratings: PlayerRatings = match (&a.grid, a.lambda_off, a.lambda_def) {
        (Some(grid), _, _) => {
            let off_grid: Vec<f64> = parse_list(grid, "lambda")?;
            let def_grid: Vec<f64> = match &a.grid_def {
                Some(g) => parse_list(g, "lambda")?,
                None => off_grid.clone(),
            };
            let split = week_split(&ps, a.val_weeks)?;
            let (ratings, search) = rapm::fit_rapm_with_selection(&ps, split, &off_grid, &def_grid, opts)?;
            log::info!("selected {:?} with validation rmse {}", search.best, search.best_rmse);
            ratings
        }
        (None, Some(off), Some(def)) => rapm::fit_rapm(&ps.possessions, LambdaPair::new(off, def), opts)?,
        _ => return Err(usage("give --lambda-off and --lambda-def, or --grid")),
    };
    rapm::write_player_ratings_path(&a.out, &ratings)?;
    if a.json {
        write_json(&json_path(&a.out), &ratings)?;
    }
    println!(
        "players={} lambda_off={} lambda_def={} gamma0={}",
        ratings.len(),
        lrapm::fmt::sig6(ratings.lambda_off),
        lrapm::fmt::sig6(ratings.lambda_def),
        lrapm::fmt::sig6(ratings.gamma0)
    );
    if let Some(path) = &a.ground_truth {
        require_file(path)?;
        let gt = synth::GroundTruth::read_csv(fs::File::open(path)?)?;
        let (c_off, c_def) = synth::recovery_correlation(&ratings, &gt);
        println!(
            "corr_off={} corr_def={}",
            lrapm::fmt::sig6(c_off),
            lrapm::fmt::sig6(c_def)
        );
    }
    Ok(())
}

fn fit_lrapm_cmd(a: FitLrapmArgs) -> anyhow::Result<()> {
    require_file(&a.player_ratings)?;
    let ps = a.input.load()?;
    let players = rapm::read_player_ratings_path(&a.player_ratings)?;
    let priors = lineup::build_priors(
        &players,
        ps.iter().flat_map(|p| [&p.offense, &p.defense]),
        ps.league_ppp()?,
        a.fallback_rating,
    );
    let opts = SolveOptions::default();
    let lambda = match (&a.grid, a.lambda) {
        (Some(grid), _) => {
            let grid: Vec<f64> = parse_list(grid, "lambda")?;
            let split = week_split(&ps, a.val_weeks)?;
            let search = lineup::select_lrapm_lambda(&ps.possessions, &priors, split, &grid, opts)?;
            log::info!("selected {:?} with validation rmse {}", search.best, search.best_rmse);
            search.best
        }
        (None, Some(l)) => LambdaPair::uniform(l),
        _ => return Err(usage("give --lambda or --grid")),
    };
    let lr = lineup::fit_lrapm(&ps.possessions, &priors, lambda, opts)?;
    lineup::write_lineup_ratings_path(&a.out, &lr)?;
    if a.json {
        write_json(&json_path(&a.out), &lr)?;
    }
    println!(
        "lineups={} lambda={} beta0={}",
        lr.len(),
        lrapm::fmt::sig6(lambda.off),
        lrapm::fmt::sig6(lr.beta0)
    );
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> anyhow::Result<()> {
    let off = parse_lineup(&a.off)?;
    let def = parse_lineup(&a.def)?;
    require_file(&a.model)?;
    let players = match &a.player_ratings {
        Some(path) => {
            require_file(path)?;
            Some(rapm::read_player_ratings_path(path)?)
        }
        None => None,
    };
    let lr: LineupRatings = lineup::read_lineup_ratings_path(&a.model, players)?;
    let (value, source) = if a.per_100 {
        let there = lr.predict_detailed(&off, &def);
        let back = lr.predict_detailed(&def, &off);
        (100.0 * (there.value - back.value), there.source().max(back.source()))
    } else {
        let p = lr.predict_detailed(&off, &def);
        (p.value, p.source())
    };
    println!("{} source={source}", lrapm::fmt::sig6(value));
    Ok(())
}

fn backtest_cmd(a: BacktestArgs) -> anyhow::Result<()> {
    require_file(&a.player_ratings)?;
    let ps = a.input.load()?;
    let players = rapm::read_player_ratings_path(&a.player_ratings)?;
    let mut cfg = BacktestConfig {
        first_test_week: a.first_test_week,
        fallback_rating: a.fallback_rating,
        include_unseen: !a.no_unseen,
        include_adjusted: a.adjusted_baseline,
        ..BacktestConfig::default()
    };
    if let Some(l) = a.lambda {
        cfg.lambda = LambdaSelection::Fixed(LambdaPair::uniform(l));
    } else if let Some(grid) = &a.grid {
        let grid: Vec<f64> = parse_list(grid, "lambda")?;
        cfg.lambda = LambdaSelection::Grid {
            candidates: grid.into_iter().map(LambdaPair::uniform).collect(),
            reselect_each_week: a.reselect,
        };
    }
    if let Some(spec) = &a.buckets {
        cfg.bucket_edges = parse_list(spec, "bucket")?;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let report = eval::expanding_backtest(&ps, &cfg, &players)?;
    report.write_dir(&a.out, cfg.include_unseen, a.json)?;
    if report.max_overlap() > 0 {
        bail!("train/test overlap detected ({} possessions)", report.max_overlap());
    }
    let show = |name: &str, pooled: Option<eval::Pooled>| {
        if let Some(p) = pooled {
            println!(
                "{name}: rmse_model={} rmse_baseline={} delta={} n={}",
                lrapm::fmt::sig6(p.rmse_model),
                lrapm::fmt::sig6(p.rmse_baseline),
                lrapm::fmt::sig6(p.delta),
                p.n
            );
        }
    };
    show("overall", report.overall());
    show("unseen", report.unseen_overall());
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("LRAPM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("LRAPM_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::FitRapm(a) => fit_rapm_cmd(a),
        Command::FitLrapm(a) => fit_lrapm_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Backtest(a) => backtest_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
