//! Expanding-window backtest of lineup ratings against raw-rating baselines.
//!
//! For every test week `n`, both models are fit on weeks `1..n` and score the
//! possessions of week `n`. Possessions where either lineup has no training
//! possessions are scored separately (the unseen-lineup track): the lineup
//! model falls back to its prior, the baseline to the league average.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{baseline_predict, AdjustedRatingTable, RawRatingTable};
use crate::domain::{PlayerRatings, Possession};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::ingest::{league_ppp, PossessionSet};
use crate::lineup::{build_priors, fit_lrapm, select_lrapm_lambdas, LineupPriorTable};
use crate::rapm::{Split, DEFAULT_FALLBACK_RATING};
use crate::solver::{LambdaPair, SolveOptions};

pub const DEFAULT_BUCKET_EDGES: [u64; 7] = [0, 10, 25, 50, 100, 250, 500];

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSelection {
    Fixed(LambdaPair),
    /// Pick from uniform candidates by validation RMSE on the first training
    /// window (holding out its last week), or on every window when
    /// `reselect_each_week` is set.
    Grid {
        candidates: Vec<LambdaPair>,
        reselect_each_week: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub first_test_week: u32,
    pub lambda: LambdaSelection,
    pub fallback_rating: f64,
    /// Lower bounds of training-sample buckets; the last bucket is open.
    pub bucket_edges: Vec<u64>,
    pub include_unseen: bool,
    /// Also score the opponent-adjusted baseline.
    pub include_adjusted: bool,
    pub solve: SolveOptions,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            first_test_week: 5,
            lambda: LambdaSelection::Grid {
                candidates: [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0]
                    .map(LambdaPair::uniform)
                    .to_vec(),
                reselect_each_week: false,
            },
            fallback_rating: DEFAULT_FALLBACK_RATING,
            bucket_edges: DEFAULT_BUCKET_EDGES.to_vec(),
            include_unseen: true,
            include_adjusted: false,
            solve: SolveOptions::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.first_test_week < 2 {
            return Err(Error::InvalidConfig("first_test_week must be >= 2".into()));
        }
        validate_edges(&self.bucket_edges)?;
        if let LambdaSelection::Grid { candidates, .. } = &self.lambda {
            if candidates.is_empty() {
                return Err(Error::InvalidConfig("empty lambda grid".into()));
            }
        }
        Ok(())
    }
}

fn validate_edges(edges: &[u64]) -> Result<()> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "bucket edges must be non-empty and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Squared errors for one scored possession.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub week: u32,
    /// Position of the possession in the season.
    pub possession: usize,
    /// Smaller of the two lineups' training possessions (offense plus defense).
    pub train_samples: u64,
    pub sq_err_model: f64,
    pub sq_err_baseline: f64,
    pub sq_err_adjusted: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeekRow {
    pub week: u32,
    pub rmse_model: f64,
    pub rmse_baseline: f64,
    pub rmse_adjusted: Option<f64>,
    pub delta: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketRow {
    pub lo: u64,
    /// `None` for the open last bucket.
    pub hi: Option<u64>,
    pub rmse_model: f64,
    pub rmse_baseline: f64,
    pub delta: f64,
    pub n: usize,
}

/// Train/test bookkeeping for one week.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeekAudit {
    pub week: u32,
    pub train: usize,
    pub test: usize,
    /// Possessions used both to fit and to score; must be zero.
    pub overlap: usize,
    pub lambda: LambdaPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub weekly: Vec<WeekRow>,
    pub records: Vec<PredictionRecord>,
    pub unseen_weekly: Vec<WeekRow>,
    pub unseen_records: Vec<PredictionRecord>,
    pub audit: Vec<WeekAudit>,
    pub bucket_edges: Vec<u64>,
}

/// Relative improvement `(rmse_model - rmse_baseline) / rmse_baseline`;
/// negative means the model is better.
pub fn delta(rmse_model: f64, rmse_baseline: f64) -> Result<f64> {
    if rmse_baseline == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok((rmse_model - rmse_baseline) / rmse_baseline)
}

/// Report rows treat two perfect models as equal.
fn row_delta(rmse_model: f64, rmse_baseline: f64) -> f64 {
    if rmse_model == 0.0 && rmse_baseline == 0.0 {
        0.0
    } else {
        delta(rmse_model, rmse_baseline).unwrap_or(f64::INFINITY)
    }
}

/// Points per game gained from a relative per-possession improvement.
pub fn game_impact(delta_ppp: f64, league_ppp: f64, possessions_per_game: u32) -> f64 {
    delta_ppp.abs() * league_ppp * possessions_per_game as f64
}

/// Pooled RMSEs over a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pooled {
    pub rmse_model: f64,
    pub rmse_baseline: f64,
    pub rmse_adjusted: Option<f64>,
    pub delta: f64,
    pub n: usize,
}

pub fn pool<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> Option<Pooled> {
    let mut n = 0usize;
    let (mut m, mut b, mut a) = (0.0, 0.0, 0.0);
    let mut has_adjusted = true;
    for r in records {
        n += 1;
        m += r.sq_err_model;
        b += r.sq_err_baseline;
        match r.sq_err_adjusted {
            Some(x) => a += x,
            None => has_adjusted = false,
        }
    }
    if n == 0 {
        return None;
    }
    let rmse_model = (m / n as f64).sqrt();
    let rmse_baseline = (b / n as f64).sqrt();
    Some(Pooled {
        rmse_model,
        rmse_baseline,
        rmse_adjusted: has_adjusted.then(|| (a / n as f64).sqrt()),
        delta: row_delta(rmse_model, rmse_baseline),
        n,
    })
}

fn weekly_rows(records: &[PredictionRecord]) -> Vec<WeekRow> {
    let mut by_week: BTreeMap<u32, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_week.entry(r.week).or_default().push(r);
    }
    by_week
        .into_iter()
        .filter_map(|(week, rs)| {
            let p = pool(rs)?;
            Some(WeekRow {
                week,
                rmse_model: p.rmse_model,
                rmse_baseline: p.rmse_baseline,
                rmse_adjusted: p.rmse_adjusted,
                delta: p.delta,
                n: p.n,
            })
        })
        .collect()
}

/// Pools squared errors across all test weeks by training-sample bucket.
/// Empty buckets are left out.
pub fn bucket_report(report: &BacktestReport, edges: &[u64]) -> Result<Vec<BucketRow>> {
    validate_edges(edges)?;
    let mut rows = Vec::new();
    for (i, &lo) in edges.iter().enumerate() {
        let hi = edges.get(i + 1).copied();
        let in_bucket = report
            .records
            .iter()
            .filter(|r| r.train_samples >= lo && hi.is_none_or(|h| r.train_samples < h));
        if let Some(p) = pool(in_bucket) {
            rows.push(BucketRow {
                lo,
                hi,
                rmse_model: p.rmse_model,
                rmse_baseline: p.rmse_baseline,
                delta: p.delta,
                n: p.n,
            });
        }
    }
    Ok(rows)
}

impl BacktestReport {
    /// Main-track pooled result over all weeks.
    pub fn overall(&self) -> Option<Pooled> {
        pool(&self.records)
    }

    /// Unseen-lineup track pooled over all weeks.
    pub fn unseen_overall(&self) -> Option<Pooled> {
        pool(&self.unseen_records)
    }

    pub fn buckets(&self) -> Vec<BucketRow> {
        bucket_report(self, &self.bucket_edges).unwrap_or_default()
    }

    pub fn max_overlap(&self) -> usize {
        self.audit.iter().map(|a| a.overlap).max().unwrap_or(0)
    }

    pub fn write_weekly<W: Write>(&self, w: W) -> Result<()> {
        let with_adjusted = self.weekly.iter().any(|r| r.rmse_adjusted.is_some());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["week", "rmse_model", "rmse_baseline", "delta", "n"];
        if with_adjusted {
            header.push("rmse_adjusted");
        }
        out.write_record(&header)?;
        for r in &self.weekly {
            let mut rec = vec![
                r.week.to_string(),
                sig6(r.rmse_model),
                sig6(r.rmse_baseline),
                sig6(r.delta),
                r.n.to_string(),
            ];
            if with_adjusted {
                rec.push(r.rmse_adjusted.map(sig6).unwrap_or_default());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_buckets<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bucket_lo", "bucket_hi", "rmse_model", "rmse_baseline", "delta", "n"])?;
        for r in self.buckets() {
            out.write_record([
                r.lo.to_string(),
                r.hi.map_or_else(|| "inf".to_owned(), |h| h.to_string()),
                sig6(r.rmse_model),
                sig6(r.rmse_baseline),
                sig6(r.delta),
                r.n.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_unseen<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["week", "rmse_prior", "rmse_league", "delta", "n"])?;
        for r in &self.unseen_weekly {
            out.write_record([
                r.week.to_string(),
                sig6(r.rmse_model),
                sig6(r.rmse_baseline),
                sig6(r.delta),
                r.n.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `weekly.csv`, `buckets.csv` and, when the unseen track ran,
    /// `unseen.csv` into `dir`; with `json`, also `report.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>, include_unseen: bool, json: bool) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_weekly(fs::File::create(dir.join("weekly.csv"))?)?;
        self.write_buckets(fs::File::create(dir.join("buckets.csv"))?)?;
        if include_unseen {
            self.write_unseen(fs::File::create(dir.join("unseen.csv"))?)?;
        }
        if json {
            #[derive(Serialize)]
            struct Summary<'a> {
                weekly: &'a [WeekRow],
                buckets: Vec<BucketRow>,
                unseen: &'a [WeekRow],
                overall: Option<Pooled>,
                unseen_overall: Option<Pooled>,
                audit: &'a [WeekAudit],
            }
            let summary = Summary {
                weekly: &self.weekly,
                buckets: self.buckets(),
                unseen: &self.unseen_weekly,
                overall: self.overall(),
                unseen_overall: self.unseen_overall(),
                audit: &self.audit,
            };
            serde_json::to_writer_pretty(fs::File::create(dir.join("report.json"))?, &summary)?;
        }
        Ok(())
    }
}

fn holdout_split(first_test_week: u32) -> Split {
    if first_test_week >= 3 {
        Split::WeekCutoff(first_test_week - 2)
    } else {
        Split::Fraction(0.8)
    }
}

fn window_priors(train: &[Possession], players: &PlayerRatings, fallback: f64) -> Result<LineupPriorTable> {
    let league = league_ppp(train)?;
    let lineups = train.iter().flat_map(|p| [&p.offense, &p.defense]);
    Ok(build_priors(players, lineups, league, fallback))
}

fn select_lambda(
    train: &[Possession],
    players: &PlayerRatings,
    test_week: u32,
    candidates: &[LambdaPair],
    cfg: &BacktestConfig,
) -> Result<LambdaPair> {
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let priors = window_priors(train, players, cfg.fallback_rating)?;
    let res = select_lrapm_lambdas(train, &priors, holdout_split(test_week), candidates, cfg.solve)?;
    log::info!(
        "week {test_week}: selected lambda {:?} (validation RMSE {:.5})",
        res.best,
        res.best_rmse
    );
    Ok(res.best)
}

struct WeekResult {
    main: Vec<PredictionRecord>,
    unseen: Vec<PredictionRecord>,
    audit: WeekAudit,
}

fn count_overlap(a: &[usize], b: &[usize]) -> usize {
    // both sorted ascending
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn evaluate_week(
    ps: &PossessionSet,
    week: u32,
    fixed: Option<LambdaPair>,
    players: &PlayerRatings,
    cfg: &BacktestConfig,
) -> Result<Option<WeekResult>> {
    let train_idx: Vec<usize> = (0..ps.len()).filter(|&i| ps.possessions[i].week < week).collect();
    let test_idx: Vec<usize> = (0..ps.len()).filter(|&i| ps.possessions[i].week == week).collect();
    if test_idx.is_empty() {
        log::warn!("week {week} has no possessions to score");
        return Ok(None);
    }
    let train: Vec<Possession> = train_idx.iter().map(|&i| ps.possessions[i].clone()).collect();
    if train.is_empty() {
        return Err(Error::EmptyData);
    }

    let lambda = match (fixed, &cfg.lambda) {
        (Some(l), _) => l,
        (None, LambdaSelection::Grid { candidates, .. }) => select_lambda(&train, players, week, candidates, cfg)?,
        (None, LambdaSelection::Fixed(l)) => *l,
    };

    let priors = window_priors(&train, players, cfg.fallback_rating)?;
    let model = fit_lrapm(&train, &priors, lambda, cfg.solve)?;
    let raw = RawRatingTable::from_possessions(&train);
    let adjusted = cfg
        .include_adjusted
        .then(|| AdjustedRatingTable::from_possessions(&train, players, cfg.fallback_rating));

    let mut main = Vec::new();
    let mut unseen = Vec::new();
    for &i in &test_idx {
        let p = &ps.possessions[i];
        let y = p.points as f64;
        let n_off = raw.total_possessions(&p.offense);
        let n_def = raw.total_possessions(&p.defense);
        let record = PredictionRecord {
            week,
            possession: i,
            train_samples: n_off.min(n_def),
            sq_err_model: (model.predict_possession(&p.offense, &p.defense) - y).powi(2),
            sq_err_baseline: (baseline_predict(&raw, &p.offense, &p.defense) - y).powi(2),
            sq_err_adjusted: adjusted
                .as_ref()
                .map(|a| (a.predict(&p.offense, &p.defense) - y).powi(2)),
        };
        if n_off > 0 && n_def > 0 {
            main.push(record);
        } else if cfg.include_unseen {
            unseen.push(record);
        }
    }
    Ok(Some(WeekResult {
        main,
        unseen,
        audit: WeekAudit {
            week,
            train: train_idx.len(),
            test: test_idx.len(),
            overlap: count_overlap(&train_idx, &test_idx),
            lambda,
        },
    }))
}

/// Runs the expanding-window backtest. Test weeks are evaluated in
/// parallel; output is ordered by week.
pub fn expanding_backtest(ps: &PossessionSet, cfg: &BacktestConfig, players: &PlayerRatings) -> Result<BacktestReport> {
    cfg.validate()?;
    if ps.weeks < cfg.first_test_week {
        return Err(Error::InsufficientWeeks {
            needed: cfg.first_test_week,
            available: ps.weeks,
        });
    }

    let fixed = match &cfg.lambda {
        LambdaSelection::Fixed(l) => Some(*l),
        LambdaSelection::Grid {
            reselect_each_week: true,
            ..
        } => None,
        LambdaSelection::Grid { candidates, .. } => {
            let first: Vec<Possession> = ps.iter().filter(|p| p.week < cfg.first_test_week).cloned().collect();
            if first.is_empty() {
                return Err(Error::EmptyData);
            }
            Some(select_lambda(&first, players, cfg.first_test_week, candidates, cfg)?)
        }
    };

    let weeks: Vec<u32> = (cfg.first_test_week..=ps.weeks).collect();
    let results = weeks
        .par_iter()
        .map(|&w| evaluate_week(ps, w, fixed, players, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut unseen_records = Vec::new();
    let mut audit = Vec::new();
    for r in results.into_iter().flatten() {
        records.extend(r.main);
        unseen_records.extend(r.unseen);
        audit.push(r.audit);
    }
    Ok(BacktestReport {
        weekly: weekly_rows(&records),
        unseen_weekly: weekly_rows(&unseen_records),
        records,
        unseen_records,
        audit,
        bucket_edges: cfg.bucket_edges.clone(),
    })
}
