//! Possession file parsing, week assignment and league-level statistics.
//!
//! The possession file is a UTF-8 CSV with the header
//!
//! ```text
//! points,off1,off2,off3,off4,off5,def1,def2,def3,def4,def5,game_id,game_date
//! ```
//!
//! with `game_date` in `YYYY-MM-DD`. Rows are grouped by game in
//! chronological order. Each possession gets a week index
//! `1 + floor((game_date - season_start) / week_length_days)`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::Serialize;

use crate::domain::{LineupKey, PlayerId, Possession};
use crate::error::{Error, Result};

pub const HEADER: [&str; 13] = [
    "points",
    "off1",
    "off2",
    "off3",
    "off4",
    "off5",
    "def1",
    "def2",
    "def3",
    "def4",
    "def5",
    "game_id",
    "game_date",
];

pub const DEFAULT_WEEK_LENGTH_DAYS: u32 = 7;

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// First day of week 1. `None` uses the earliest game date in the file.
    pub season_start: Option<NaiveDate>,
    pub week_length_days: u32,
    /// Count and drop rows that fail parsing or validation instead of aborting.
    pub skip_bad_rows: bool,
    pub season_label: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            season_start: None,
            week_length_days: DEFAULT_WEEK_LENGTH_DAYS,
            skip_bad_rows: false,
            season_label: String::new(),
        }
    }
}

impl IngestOptions {
    pub fn starting(season_start: NaiveDate) -> Self {
        Self {
            season_start: Some(season_start),
            ..Self::default()
        }
    }
}

/// An ordered, week-indexed season of possessions.
#[derive(Debug, Clone, PartialEq)]
pub struct PossessionSet {
    pub possessions: Vec<Possession>,
    pub season_label: String,
    pub season_start: NaiveDate,
    pub week_length_days: u32,
    /// Highest week index present.
    pub weeks: u32,
    pub skipped_rows: usize,
}

impl PossessionSet {
    /// Assembles a set from already-validated possessions, (re)assigning
    /// `order` and `week` from the given calendar.
    pub fn from_possessions(
        mut possessions: Vec<Possession>,
        season_start: NaiveDate,
        week_length_days: u32,
        season_label: impl Into<String>,
    ) -> Result<Self> {
        if week_length_days == 0 {
            return Err(Error::InvalidConfig("week length must be positive".into()));
        }
        for (i, p) in possessions.iter_mut().enumerate() {
            p.order = i;
            p.week = week_of(p.game_date, season_start, week_length_days).ok_or_else(|| Error::Validation {
                line: i as u64 + 2,
                reason: format!("game date {} precedes season start {season_start}", p.game_date),
            })?;
        }
        let weeks = possessions.iter().map(|p| p.week).max().unwrap_or(0);
        let set = Self {
            possessions,
            season_label: season_label.into(),
            season_start,
            week_length_days,
            weeks,
            skipped_rows: 0,
        };
        set.warn_on_week_gaps();
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.possessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.possessions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Possession> {
        self.possessions.iter()
    }

    /// Possessions with `week <= through_week`.
    pub fn through_week(&self, through_week: u32) -> impl Iterator<Item = &Possession> {
        self.possessions.iter().filter(move |p| p.week <= through_week)
    }

    pub fn in_week(&self, week: u32) -> impl Iterator<Item = &Possession> {
        self.possessions.iter().filter(move |p| p.week == week)
    }

    /// Number of possessions per week, indexed `1..=weeks` (slot 0 unused).
    pub fn week_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.weeks as usize + 1];
        for p in &self.possessions {
            counts[p.week as usize] += 1;
        }
        counts
    }

    fn warn_on_week_gaps(&self) {
        let counts = self.week_counts();
        for (w, &c) in counts.iter().enumerate().skip(1) {
            if c == 0 {
                log::warn!("week {w} has no possessions");
            }
        }
    }

    pub fn league_ppp(&self) -> Result<f64> {
        league_ppp(&self.possessions)
    }

    pub fn usage_stats(&self) -> Result<LineupUsageStats> {
        usage_stats(&self.possessions)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_possessions(w, &self.possessions)
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

fn week_of(date: NaiveDate, start: NaiveDate, week_length_days: u32) -> Option<u32> {
    let days = (date - start).num_days();
    if days < 0 {
        return None;
    }
    Some(1 + (days / week_length_days as i64) as u32)
}

struct RawRow {
    line: u64,
    points: i64,
    offense: LineupKey,
    defense: LineupKey,
    game_id: Arc<str>,
    game_date: NaiveDate,
}

#[derive(Default)]
struct Interner {
    players: HashMap<String, PlayerId>,
    games: HashMap<String, Arc<str>>,
}

impl Interner {
    fn player(&mut self, token: &str) -> Result<PlayerId> {
        if let Some(p) = self.players.get(token) {
            return Ok(p.clone());
        }
        let id = PlayerId::new(token)?;
        self.players.insert(token.to_owned(), id.clone());
        Ok(id)
    }

    fn game(&mut self, token: &str) -> Arc<str> {
        self.games
            .entry(token.to_owned())
            .or_insert_with(|| Arc::from(token))
            .clone()
    }

    fn lineup(&mut self, tokens: &[&str]) -> Result<LineupKey> {
        let ids = tokens.iter().map(|t| self.player(t)).collect::<Result<Vec<_>>>()?;
        LineupKey::new(ids)
    }
}

fn parse_row(record: &csv::StringRecord, line: u64, interner: &mut Interner) -> Result<RawRow> {
    if record.len() != HEADER.len() {
        return Err(Error::Parse {
            line,
            message: format!("expected {} fields, found {}", HEADER.len(), record.len()),
        });
    }
    let points: i64 = record[0].trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("points {:?} is not an integer", &record[0]),
    })?;
    let game_date = NaiveDate::parse_from_str(record[12].trim(), "%Y-%m-%d").map_err(|_| Error::Parse {
        line,
        message: format!("game_date {:?} is not YYYY-MM-DD", &record[12]),
    })?;
    let invalid = |e: Error| Error::Validation {
        line,
        reason: e.to_string(),
    };
    let off: Vec<&str> = (1..=5).map(|i| record[i].trim()).collect();
    let def: Vec<&str> = (6..=10).map(|i| record[i].trim()).collect();
    let offense = interner.lineup(&off).map_err(invalid)?;
    let defense = interner.lineup(&def).map_err(invalid)?;
    let game = record[11].trim();
    if game.is_empty() {
        return Err(Error::Parse {
            line,
            message: "empty game_id".into(),
        });
    }
    Ok(RawRow {
        line,
        points,
        offense,
        defense,
        game_id: interner.game(game),
        game_date,
    })
}

/// Parses and validates a possession file.
pub fn parse_possessions<R: Read>(reader: R, opts: &IngestOptions) -> Result<PossessionSet> {
    if opts.week_length_days == 0 {
        return Err(Error::InvalidConfig("week length must be positive".into()));
    }
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = csv.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be `{}`", HEADER.join(",")),
        });
    }

    let mut interner = Interner::default();
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        let more = match csv.read_record(&mut record) {
            Ok(more) => more,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                let err = Error::Parse {
                    line,
                    message: e.to_string(),
                };
                if opts.skip_bad_rows {
                    log::warn!("skipping row: {err}");
                    skipped += 1;
                    continue;
                }
                return Err(err);
            }
        };
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        match parse_row(&record, line, &mut interner) {
            Ok(row) => rows.push(row),
            Err(e) if opts.skip_bad_rows => {
                log::warn!("skipping row: {e}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }

    let season_start = match opts.season_start {
        Some(d) => d,
        None => match rows.iter().map(|r| r.game_date).min() {
            Some(d) => d,
            None => return Err(Error::EmptyData),
        },
    };

    let mut possessions = Vec::with_capacity(rows.len());
    for row in rows {
        let line = row.line;
        let week = match week_of(row.game_date, season_start, opts.week_length_days) {
            Some(w) => Ok(w),
            None => Err(Error::Validation {
                line,
                reason: format!("game date {} precedes season start {season_start}", row.game_date),
            }),
        };
        let built = week.and_then(|week| {
            Possession::new(
                row.points,
                row.offense,
                row.defense,
                row.game_id,
                row.game_date,
                possessions.len(),
                week,
            )
            .map_err(|e| Error::Validation {
                line,
                reason: e.to_string(),
            })
        });
        match built {
            Ok(p) => possessions.push(p),
            Err(e) if opts.skip_bad_rows => {
                log::warn!("skipping row: {e}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} bad rows");
    }

    let weeks = possessions.iter().map(|p| p.week).max().unwrap_or(0);
    let set = PossessionSet {
        possessions,
        season_label: opts.season_label.clone(),
        season_start,
        week_length_days: opts.week_length_days,
        weeks,
        skipped_rows: skipped,
    };
    set.warn_on_week_gaps();
    Ok(set)
}

pub fn read_possessions(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<PossessionSet> {
    parse_possessions(File::open(path)?, opts)
}

pub fn write_possessions<'a, W, I>(w: W, possessions: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Possession>,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    let mut fields: Vec<String> = Vec::with_capacity(HEADER.len());
    for p in possessions {
        fields.clear();
        fields.push(p.points.to_string());
        fields.extend(p.offense.players().iter().map(|id| id.to_string()));
        fields.extend(p.defense.players().iter().map(|id| id.to_string()));
        fields.push(p.game_id.to_string());
        fields.push(p.game_date.format("%Y-%m-%d").to_string());
        out.write_record(&fields)?;
    }
    out.flush()?;
    Ok(())
}

/// Total points divided by total possessions.
pub fn league_ppp<'a, I>(possessions: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a Possession>,
{
    let (n, pts) = possessions
        .into_iter()
        .fold((0usize, 0u64), |(n, pts), p| (n + 1, pts + p.points as u64));
    if n == 0 {
        return Err(Error::EmptyData);
    }
    Ok(pts as f64 / n as f64)
}

/// Summary of a count distribution (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountSummary {
    pub lineups: usize,
    pub mean: f64,
    pub std: f64,
    pub max: usize,
    /// Log2-binned histogram.
    pub histogram: Vec<HistogramBin>,
}

/// Counts `c` with `lo <= c < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
}

impl CountSummary {
    fn from_counts<'a>(counts: impl Iterator<Item = &'a usize> + Clone) -> Self {
        let n = counts.clone().count();
        let (mean, std) = mean_std(counts.clone().map(|&c| c as f64));
        let max = counts.clone().copied().max().unwrap_or(0);
        let mut histogram: Vec<HistogramBin> = Vec::new();
        let mut lo = 1usize;
        while lo <= max {
            let hi = lo * 2;
            let count = counts.clone().filter(|&&c| c >= lo && c < hi).count();
            histogram.push(HistogramBin { lo, hi, count });
            lo = hi;
        }
        Self {
            lineups: n,
            mean,
            std,
            max,
            histogram,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Per-lineup possession counts on each side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineupUsageStats {
    pub off_counts: BTreeMap<LineupKey, usize>,
    pub def_counts: BTreeMap<LineupKey, usize>,
    pub offense: CountSummary,
    pub defense: CountSummary,
    /// Offense plus defense possessions per lineup.
    pub total: CountSummary,
}

pub fn usage_stats<'a, I>(possessions: I) -> Result<LineupUsageStats>
where
    I: IntoIterator<Item = &'a Possession>,
{
    let mut off_counts: BTreeMap<LineupKey, usize> = BTreeMap::new();
    let mut def_counts: BTreeMap<LineupKey, usize> = BTreeMap::new();
    for p in possessions {
        *off_counts.entry(p.offense.clone()).or_default() += 1;
        *def_counts.entry(p.defense.clone()).or_default() += 1;
    }
    if off_counts.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut total: BTreeMap<&LineupKey, usize> = BTreeMap::new();
    for (k, &c) in off_counts.iter().chain(def_counts.iter()) {
        *total.entry(k).or_default() += c;
    }
    Ok(LineupUsageStats {
        offense: CountSummary::from_counts(off_counts.values()),
        defense: CountSummary::from_counts(def_counts.values()),
        total: CountSummary::from_counts(total.values()),
        off_counts,
        def_counts,
    })
}
