//! Lineup ratings shrunk toward player-derived priors.
//!
//! A lineup's prior offensive rating is the league average plus the sum of
//! its players' offensive RAPM values (defense likewise). The lineup
//! regression uses the same +1 offense / -1 defense encoding as player RAPM,
//! so a possession is predicted as
//!
//! ```text
//! y = beta0 + beta_off(offense) - beta_def(defense)
//! ```
//!
//! The league-average term sits in both priors and cancels in that
//! difference; the intercept carries the league average instead.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::domain::{LineupKey, PlayerRatings, Possession, Side};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::rapm::{meta_f64, parse_meta, player_rating, Split};
use crate::solver::{
    self, grid_search, lineup_design, ColumnIndex, GridSearchResult, LambdaPair, PenaltyTemplate, SolveOptions,
};

/// Where a lineup rating came from, best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingSource {
    Fitted,
    Prior,
    League,
}

impl std::fmt::Display for RatingSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RatingSource::Fitted => "fitted",
            RatingSource::Prior => "prior",
            RatingSource::League => "league",
        })
    }
}

/// Per-lineup prior ratings in points per possession.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineupPriorTable {
    pub off: BTreeMap<LineupKey, f64>,
    pub def: BTreeMap<LineupKey, f64>,
    pub league_ppp: f64,
    pub fallback_player_rating: f64,
    /// Used to build priors for lineups that are not in the table.
    #[serde(skip)]
    pub players: Option<Arc<PlayerRatings>>,
}

impl LineupPriorTable {
    /// An empty table that only knows the league average.
    pub fn league_only(league_ppp: f64) -> Self {
        Self {
            off: BTreeMap::new(),
            def: BTreeMap::new(),
            league_ppp,
            fallback_player_rating: 0.0,
            players: None,
        }
    }

    fn computed(&self, lineup: &LineupKey, side: Side) -> Option<f64> {
        let players = self.players.as_ref()?;
        Some(
            self.league_ppp
                + lineup
                    .players()
                    .iter()
                    .map(|p| player_rating(players, p, side, self.fallback_player_rating))
                    .sum::<f64>(),
        )
    }

    /// Table entry, else a prior computed from player ratings, else the
    /// league average.
    pub fn prior(&self, lineup: &LineupKey, side: Side) -> (f64, RatingSource) {
        let table = match side {
            Side::Offense => &self.off,
            Side::Defense => &self.def,
        };
        if let Some(&v) = table.get(lineup) {
            return (v, RatingSource::Prior);
        }
        match self.computed(lineup, side) {
            Some(v) => (v, RatingSource::Prior),
            None => (self.league_ppp, RatingSource::League),
        }
    }

    pub fn get(&self, lineup: &LineupKey, side: Side) -> Option<f64> {
        match side {
            Side::Offense => self.off.get(lineup).copied(),
            Side::Defense => self.def.get(lineup).copied(),
        }
    }
}

/// Builds priors: `league_ppp + sum of the five players' ratings` per side,
/// with `fallback` standing in for unrated players.
pub fn build_priors<'a, I>(r: &PlayerRatings, lineups: I, league_ppp: f64, fallback: f64) -> LineupPriorTable
where
    I: IntoIterator<Item = &'a LineupKey>,
{
    let mut table = LineupPriorTable {
        off: BTreeMap::new(),
        def: BTreeMap::new(),
        league_ppp,
        fallback_player_rating: fallback,
        players: Some(Arc::new(r.clone())),
    };
    for lineup in lineups {
        if table.off.contains_key(lineup) {
            continue;
        }
        let off = table.computed(lineup, Side::Offense).expect("player ratings set");
        let def = table.computed(lineup, Side::Defense).expect("player ratings set");
        table.off.insert(lineup.clone(), off);
        table.def.insert(lineup.clone(), def);
    }
    table
}

/// Offense and defense possession counts for one lineup in training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Usage {
    pub off: usize,
    pub def: usize,
}

impl Usage {
    pub fn total(&self) -> usize {
        self.off + self.def
    }
}

/// Fitted lineup coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineupRatings {
    pub beta0: f64,
    pub off: BTreeMap<LineupKey, f64>,
    pub def: BTreeMap<LineupKey, f64>,
    pub lambda: LambdaPair,
    pub priors: LineupPriorTable,
    pub usage: BTreeMap<LineupKey, Usage>,
}

/// A possession prediction with the provenance of each side's rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub value: f64,
    pub off_source: RatingSource,
    pub def_source: RatingSource,
}

impl Prediction {
    /// The weaker of the two sources.
    pub fn source(&self) -> RatingSource {
        self.off_source.max(self.def_source)
    }
}

impl LineupRatings {
    /// Fitted β, else prior π, else league average.
    pub fn rating(&self, lineup: &LineupKey, side: Side) -> (f64, RatingSource) {
        let fitted = match side {
            Side::Offense => self.off.get(lineup),
            Side::Defense => self.def.get(lineup),
        };
        match fitted {
            Some(&b) => (b, RatingSource::Fitted),
            None => self.priors.prior(lineup, side),
        }
    }

    pub fn predict_detailed(&self, off: &LineupKey, def: &LineupKey) -> Prediction {
        let (b_off, off_source) = self.rating(off, Side::Offense);
        let (b_def, def_source) = self.rating(def, Side::Defense);
        Prediction {
            value: self.beta0 + (b_off - b_def),
            off_source,
            def_source,
        }
    }

    /// Expected points for `off` attacking `def`.
    pub fn predict_possession(&self, off: &LineupKey, def: &LineupKey) -> f64 {
        self.predict_detailed(off, def).value
    }

    /// Net points per 100 possessions of `mine` over `theirs`.
    pub fn predict_matchup(&self, mine: &LineupKey, theirs: &LineupKey) -> f64 {
        100.0 * (self.predict_possession(mine, theirs) - self.predict_possession(theirs, mine))
    }

    pub fn lineups(&self) -> impl Iterator<Item = &LineupKey> {
        self.off.keys()
    }

    pub fn len(&self) -> usize {
        self.off.len()
    }

    pub fn is_empty(&self) -> bool {
        self.off.is_empty()
    }
}

fn usage<'a>(possessions: impl IntoIterator<Item = &'a Possession>) -> BTreeMap<LineupKey, Usage> {
    let mut usage: BTreeMap<LineupKey, Usage> = BTreeMap::new();
    for p in possessions {
        usage.entry(p.offense.clone()).or_default().off += 1;
        usage.entry(p.defense.clone()).or_default().def += 1;
    }
    usage
}

fn template_for(index: &ColumnIndex<LineupKey>, priors: &LineupPriorTable) -> Result<PenaltyTemplate> {
    let mut centers = Vec::with_capacity(index.n_cols());
    let mut sides = Vec::with_capacity(index.n_cols());
    for side in [Side::Offense, Side::Defense] {
        for lineup in index.entities() {
            let pi = priors
                .get(lineup, side)
                .ok_or_else(|| Error::MissingPrior(lineup.to_string()))?;
            centers.push(pi);
            sides.push(side);
        }
    }
    Ok(PenaltyTemplate { centers, sides })
}

/// Fits lineup coefficients shrunk toward `priors`.
///
/// `lambda` is normally uniform; a split pair applies separate strengths to
/// offense and defense columns.
pub fn fit_lrapm<'a, I>(
    possessions: I,
    priors: &LineupPriorTable,
    lambda: LambdaPair,
    opts: SolveOptions,
) -> Result<LineupRatings>
where
    I: IntoIterator<Item = &'a Possession> + Clone,
{
    if !(lambda.off >= 0.0 && lambda.def >= 0.0) {
        return Err(Error::InvalidPenalty(format!("lambda must be >= 0, got {lambda:?}")));
    }
    let index = ColumnIndex::lineups(possessions.clone());
    let template = template_for(&index, priors)?;
    let design = lineup_design(possessions.clone(), &index)?;
    let sol = solver::solve(&design.matrix, &design.y, &template.with_lambdas(lambda), opts)?;
    log::debug!(
        "lrapm fit: {} lineups, {} possessions, {} CG iterations",
        index.n_entities(),
        design.n_rows(),
        sol.iterations
    );
    let (off, def) = index.unpack(&sol.coefficients);
    let lineups = index.entities();
    Ok(LineupRatings {
        beta0: sol.intercept,
        off: lineups.iter().cloned().zip(off).collect(),
        def: lineups.iter().cloned().zip(def).collect(),
        lambda,
        priors: priors.clone(),
        usage: usage(possessions),
    })
}

/// Picks a single λ from `grid` by validation RMSE.
pub fn select_lrapm_lambda(
    possessions: &[Possession],
    priors: &LineupPriorTable,
    split: Split,
    grid: &[f64],
    opts: SolveOptions,
) -> Result<GridSearchResult> {
    let candidates: Vec<LambdaPair> = grid.iter().map(|&l| LambdaPair::uniform(l)).collect();
    select_lrapm_lambdas(possessions, priors, split, &candidates, opts)
}

/// Like [`select_lrapm_lambda`] over arbitrary (offense, defense) pairs.
pub fn select_lrapm_lambdas(
    possessions: &[Possession],
    priors: &LineupPriorTable,
    split: Split,
    candidates: &[LambdaPair],
    opts: SolveOptions,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyData);
    }
    let (train, val) = split.apply(possessions)?;
    let index = ColumnIndex::lineups(train.iter().chain(val.iter()).copied());
    let template = template_for(&index, priors)?;
    let train = lineup_design(train, &index)?;
    let val = lineup_design(val, &index)?;
    grid_search(&train, &val, candidates, &template, opts)
}

pub const LINEUP_HEADER: [&str; 10] = [
    "p1",
    "p2",
    "p3",
    "p4",
    "p5",
    "beta_off",
    "beta_def",
    "pi_off",
    "pi_def",
    "train_possessions",
];

/// Writes one row per fitted lineup. The first line is a `#` metadata
/// record with the intercept, λ, league average and fallback rating.
pub fn write_lineup_ratings<W: Write>(mut w: W, lr: &LineupRatings) -> Result<()> {
    writeln!(
        w,
        "# beta0={},lambda_off={},lambda_def={},league_ppp={},fallback_rating={}",
        sig6(lr.beta0),
        sig6(lr.lambda.off),
        sig6(lr.lambda.def),
        sig6(lr.priors.league_ppp),
        sig6(lr.priors.fallback_player_rating),
    )?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LINEUP_HEADER)?;
    for (lineup, &b_off) in &lr.off {
        let b_def = lr.def[lineup];
        let (pi_off, _) = lr.priors.prior(lineup, Side::Offense);
        let (pi_def, _) = lr.priors.prior(lineup, Side::Defense);
        let n = lr.usage.get(lineup).map_or(0, Usage::total);
        let mut rec: Vec<String> = lineup.players().iter().map(|p| p.to_string()).collect();
        rec.extend([sig6(b_off), sig6(b_def), sig6(pi_off), sig6(pi_def), n.to_string()]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_lineup_ratings_path(path: impl AsRef<Path>, lr: &LineupRatings) -> Result<()> {
    write_lineup_ratings(File::create(path)?, lr)
}

/// Reads a lineup ratings file. Player ratings are not part of the file;
/// attach them with `players` to get player-built priors for lineups the
/// file does not list.
pub fn read_lineup_ratings<R: Read>(r: R, players: Option<PlayerRatings>) -> Result<LineupRatings> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let meta = parse_meta(&first)?;
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if csv.headers()?.iter().ne(LINEUP_HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "lineup header must be `{}`",
            LINEUP_HEADER.join(",")
        )));
    }
    let mut priors = LineupPriorTable {
        off: BTreeMap::new(),
        def: BTreeMap::new(),
        league_ppp: meta_f64(&meta, "league_ppp")?,
        fallback_player_rating: meta_f64(&meta, "fallback_rating")?,
        players: players.map(Arc::new),
    };
    let mut off = BTreeMap::new();
    let mut def = BTreeMap::new();
    let mut usage = BTreeMap::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let tokens: Vec<&str> = (0..5).map(|i| rec.get(i).unwrap_or("")).collect();
        let lineup = LineupKey::from_tokens(&tokens).map_err(|e| Error::Validation {
            line,
            reason: e.to_string(),
        })?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                line,
                message: format!("column {} is not a number", LINEUP_HEADER[i]),
            })
        };
        off.insert(lineup.clone(), num(5)?);
        def.insert(lineup.clone(), num(6)?);
        priors.off.insert(lineup.clone(), num(7)?);
        priors.def.insert(lineup.clone(), num(8)?);
        usage.insert(
            lineup,
            Usage {
                off: num(9)? as usize,
                def: 0,
            },
        );
    }
    Ok(LineupRatings {
        beta0: meta_f64(&meta, "beta0")?,
        off,
        def,
        lambda: LambdaPair::new(meta_f64(&meta, "lambda_off")?, meta_f64(&meta, "lambda_def")?),
        priors,
        usage,
    })
}

pub fn read_lineup_ratings_path(path: impl AsRef<Path>, players: Option<PlayerRatings>) -> Result<LineupRatings> {
    read_lineup_ratings(File::open(path)?, players)
}
