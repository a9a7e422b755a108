//! Player-level regularized adjusted plus-minus.
//!
//! Every player gets an offense coefficient (+1 when on offense) and a
//! defense coefficient (-1 when on defense); both are shrunk toward zero with
//! separate strengths for the two sides.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::domain::{PlayerId, PlayerRatings, Possession, Side};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::ingest::PossessionSet;
use crate::solver::{
    self, grid_search, player_design, ColumnIndex, GridSearchResult, LambdaPair, PenaltySpec, PenaltyTemplate,
    SolveOptions,
};

/// Fallback rating for players without a rating, in points per possession
/// (a below-average prior of -1 point per 100 possessions).
pub const DEFAULT_FALLBACK_RATING: f64 = -0.01;

/// How to carve a validation set out of a training season.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split {
    /// The first `fraction` of possessions (in file order) train, the rest validate.
    Fraction(f64),
    /// Weeks `<= cutoff` train, later weeks validate.
    WeekCutoff(u32),
}

impl Split {
    pub fn apply<'a>(&self, possessions: &'a [Possession]) -> Result<(Vec<&'a Possession>, Vec<&'a Possession>)> {
        let (train, val): (Vec<&Possession>, Vec<&Possession>) = match *self {
            Split::Fraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::InvalidConfig(format!("split fraction {f} must be in (0, 1)")));
                }
                let cut = (possessions.len() as f64 * f).floor() as usize;
                (possessions[..cut].iter().collect(), possessions[cut..].iter().collect())
            }
            Split::WeekCutoff(w) => possessions.iter().partition(|p| p.week <= w),
        };
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok((train, val))
    }
}

fn side_template(m: usize) -> Vec<Side> {
    let mut sides = vec![Side::Offense; m];
    sides.extend(std::iter::repeat_n(Side::Defense, m));
    sides
}

/// Fits player ratings on `possessions`.
pub fn fit_rapm<'a, I>(possessions: I, lambdas: LambdaPair, opts: SolveOptions) -> Result<PlayerRatings>
where
    I: IntoIterator<Item = &'a Possession> + Clone,
{
    if !(lambdas.off >= 0.0 && lambdas.def >= 0.0) {
        return Err(Error::InvalidPenalty(format!("lambdas must be >= 0, got {lambdas:?}")));
    }
    let index = ColumnIndex::players(possessions.clone());
    let design = player_design(possessions, &index)?;
    let template = PenaltyTemplate {
        centers: vec![0.0; index.n_cols()],
        sides: side_template(index.n_entities()),
    };
    let sol = solver::solve(&design.matrix, &design.y, &template.with_lambdas(lambdas), opts)?;
    log::debug!(
        "rapm fit: {} players, {} possessions, {} CG iterations",
        index.n_entities(),
        design.n_rows(),
        sol.iterations
    );
    let (off, def) = index.unpack(&sol.coefficients);
    let players = index.entities();
    Ok(PlayerRatings {
        gamma0: sol.intercept,
        off: players.iter().cloned().zip(off).collect(),
        def: players.iter().cloned().zip(def).collect(),
        lambda_off: lambdas.off,
        lambda_def: lambdas.def,
        n_train: design.n_rows(),
    })
}

/// Grid-searches `(lambda_off, lambda_def)` over the Cartesian product of
/// the candidate lists, scoring on a held-out validation split.
pub fn select_rapm_lambdas(
    ps: &PossessionSet,
    split: Split,
    off_grid: &[f64],
    def_grid: &[f64],
    opts: SolveOptions,
) -> Result<GridSearchResult> {
    let candidates = LambdaPair::grid(off_grid, def_grid);
    if candidates.is_empty() {
        return Err(Error::EmptyData);
    }
    let (train, val) = split.apply(&ps.possessions)?;
    let index = ColumnIndex::players(train.iter().chain(val.iter()).copied());
    let train = player_design(train, &index)?;
    let val = player_design(val, &index)?;
    let template = PenaltyTemplate {
        centers: vec![0.0; index.n_cols()],
        sides: side_template(index.n_entities()),
    };
    grid_search(&train, &val, &candidates, &template, opts)
}

/// Selects λs on a validation split, then refits on the whole set.
pub fn fit_rapm_with_selection(
    ps: &PossessionSet,
    split: Split,
    off_grid: &[f64],
    def_grid: &[f64],
    opts: SolveOptions,
) -> Result<(PlayerRatings, GridSearchResult)> {
    let search = select_rapm_lambdas(ps, split, off_grid, def_grid, opts)?;
    let ratings = fit_rapm(&ps.possessions, search.best, opts)?;
    Ok((ratings, search))
}

/// A player's rating on one side, or `fallback` when the player is unrated.
pub fn player_rating(r: &PlayerRatings, p: &PlayerId, side: Side, fallback: f64) -> f64 {
    r.get(p, side).unwrap_or(fallback)
}

/// Penalty spec used by [`fit_rapm`], exposed for callers that build their
/// own designs.
pub fn rapm_penalty(index: &ColumnIndex<PlayerId>, lambdas: LambdaPair) -> PenaltySpec {
    PenaltyTemplate {
        centers: vec![0.0; index.n_cols()],
        sides: side_template(index.n_entities()),
    }
    .with_lambdas(lambdas)
}

const RATINGS_HEADER: [&str; 3] = ["player_id", "gamma_off", "gamma_def"];

/// Writes ratings as CSV. The first line is a `#` metadata record carrying
/// the intercept and regularization constants.
pub fn write_player_ratings<W: Write>(mut w: W, r: &PlayerRatings) -> Result<()> {
    let per_n = |l: f64| if r.n_train > 0 { l / r.n_train as f64 } else { f64::NAN };
    writeln!(
        w,
        "# gamma0={},lambda_off={},lambda_def={},n_train={},lambda_off_per_n={},lambda_def_per_n={}",
        sig6(r.gamma0),
        sig6(r.lambda_off),
        sig6(r.lambda_def),
        r.n_train,
        sig6(per_n(r.lambda_off)),
        sig6(per_n(r.lambda_def)),
    )?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RATINGS_HEADER)?;
    for (p, off) in &r.off {
        let def = r.def.get(p).copied().unwrap_or(0.0);
        out.write_record([p.as_str(), &sig6(*off), &sig6(def)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_player_ratings_path(path: impl AsRef<Path>, r: &PlayerRatings) -> Result<()> {
    write_player_ratings(File::create(path)?, r)
}

/// Parses `key=value` pairs from a `#` metadata line.
pub(crate) fn parse_meta(line: &str) -> Result<BTreeMap<String, String>> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("missing `#` metadata line".into()))?;
    body.split(',')
        .filter(|kv| !kv.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad metadata entry {kv:?}")))?;
            Ok((k.trim().to_owned(), v.trim().to_owned()))
        })
        .collect()
}

pub(crate) fn meta_f64(meta: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    meta.get(key)
        .ok_or_else(|| Error::Format(format!("metadata missing {key}")))?
        .parse()
        .map_err(|_| Error::Format(format!("metadata {key} is not a number")))
}

pub fn read_player_ratings<R: Read>(r: R) -> Result<PlayerRatings> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let meta = parse_meta(&first)?;
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if csv.headers()?.iter().ne(RATINGS_HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "ratings header must be `{}`",
            RATINGS_HEADER.join(",")
        )));
    }
    let mut off = BTreeMap::new();
    let mut def = BTreeMap::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                line,
                message: format!("column {} is not a number", RATINGS_HEADER[i]),
            })
        };
        let id = PlayerId::new(rec.get(0).unwrap_or(""))?;
        off.insert(id.clone(), num(1)?);
        def.insert(id, num(2)?);
    }
    Ok(PlayerRatings {
        gamma0: meta_f64(&meta, "gamma0")?,
        off,
        def,
        lambda_off: meta_f64(&meta, "lambda_off")?,
        lambda_def: meta_f64(&meta, "lambda_def")?,
        n_train: meta_f64(&meta, "n_train").map(|n| n as usize).unwrap_or(0),
    })
}

pub fn read_player_ratings_path(path: impl AsRef<Path>) -> Result<PlayerRatings> {
    read_player_ratings(File::open(path)?)
}
