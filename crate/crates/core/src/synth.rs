//! Synthetic leagues with known player effects.
//!
//! Every player gets true offensive and defensive effects; a possession's
//! expected points are `league_mean + sum(off effects) - sum(def effects)`,
//! clamped to `[0, 3]`, and realized points are drawn from a distribution on
//! `{0, 1, 2, 3}` with exactly that mean. Teams rotate through a pool of
//! lineups with usage concentrated on the starters, which gives the heavily
//! right-skewed possessions-per-lineup distribution of real seasons.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::domain::{LineupKey, PlayerId, Possession};
use crate::error::{Error, Result};
use crate::ingest::PossessionSet;

/// Upper clamp on expected points per possession.
pub const MAX_EXPECTED_POINTS: f64 = 3.0;

/// Point distribution at the reference mean; about half of possessions are
/// scoreless.
const BASE_DISTRIBUTION: [f64; 4] = [0.50, 0.05, 0.30, 0.15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_teams: usize,
    pub roster_size: usize,
    pub weeks: u32,
    pub games_per_week: usize,
    pub possessions_per_game: usize,
    pub sd_gamma_off: f64,
    pub sd_gamma_def: f64,
    pub league_mean_ppp: f64,
    /// Decay of usage weight with depth-chart rank; larger means starters
    /// play more of the minutes.
    pub rotation_concentration: f64,
    /// Lineups per team that ever see the floor.
    pub lineup_pool_size: usize,
    /// Possessions per stint are drawn uniformly from this range.
    pub stint_min: usize,
    pub stint_max: usize,
    /// Weight of the realistic point distribution; the remainder goes to the
    /// least-variance law on the two integers around the mean.
    pub point_dispersion: f64,
    pub season_start: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_teams: 30,
            roster_size: 13,
            weeks: 25,
            games_per_week: 50,
            possessions_per_game: 200,
            sd_gamma_off: 0.02,
            sd_gamma_def: 0.02,
            league_mean_ppp: 1.10,
            rotation_concentration: 0.35,
            lineup_pool_size: 800,
            stint_min: 2,
            stint_max: 12,
            point_dispersion: 1.0,
            season_start: NaiveDate::from_ymd_opt(2023, 10, 24).expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.n_teams < 2 {
            return bad("need at least 2 teams");
        }
        if self.roster_size < 5 {
            return bad("roster_size must be >= 5");
        }
        if self.weeks == 0 || self.games_per_week == 0 || self.possessions_per_game == 0 {
            return bad("weeks, games_per_week and possessions_per_game must be positive");
        }
        if !(self.sd_gamma_off >= 0.0 && self.sd_gamma_def >= 0.0) {
            return bad("effect spreads must be >= 0");
        }
        if !(self.league_mean_ppp > 0.0 && self.league_mean_ppp < MAX_EXPECTED_POINTS) {
            return bad("league_mean_ppp must be in (0, 3)");
        }
        if !(self.rotation_concentration >= 0.0 && self.rotation_concentration.is_finite()) {
            return bad("rotation_concentration must be >= 0");
        }
        if self.lineup_pool_size == 0 {
            return bad("lineup_pool_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.point_dispersion) {
            return bad("point_dispersion must be in [0, 1]");
        }
        if self.stint_min == 0 || self.stint_max < self.stint_min {
            return bad("stint range must satisfy 1 <= stint_min <= stint_max");
        }
        Ok(())
    }
}

/// True player effects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub gamma_off: BTreeMap<PlayerId, f64>,
    pub gamma_def: BTreeMap<PlayerId, f64>,
    pub league_mean: f64,
}

impl GroundTruth {
    /// Clamped additive expected points for `off` attacking `def`.
    pub fn true_expected_points(&self, off: &LineupKey, def: &LineupKey) -> Result<f64> {
        let sum = |lineup: &LineupKey, table: &BTreeMap<PlayerId, f64>| -> Result<f64> {
            lineup
                .players()
                .iter()
                .map(|p| table.get(p).copied().ok_or_else(|| Error::UnknownPlayer(p.to_string())))
                .sum()
        };
        let raw = self.league_mean + sum(off, &self.gamma_off)? - sum(def, &self.gamma_def)?;
        Ok(raw.clamp(0.0, MAX_EXPECTED_POINTS))
    }

    /// CSV `player_id,gamma_off_true,gamma_def_true`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["player_id", "gamma_off_true", "gamma_def_true"])?;
        for (p, off) in &self.gamma_off {
            out.write_record([p.as_str(), &format!("{off:e}"), &format!("{:e}", self.gamma_def[p])])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut gamma_off = BTreeMap::new();
        let mut gamma_def = BTreeMap::new();
        for rec in csv.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let num = |i: usize| -> Result<f64> {
                rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                    line,
                    message: "bad number".into(),
                })
            };
            let id = PlayerId::new(rec.get(0).unwrap_or(""))?;
            gamma_off.insert(id.clone(), num(1)?);
            gamma_def.insert(id, num(2)?);
        }
        Ok(Self {
            gamma_off,
            gamma_def,
            league_mean: f64::NAN,
        })
    }
}

/// Distribution over `{0, 1, 2, 3}` points with mean `mean` (clamped to
/// `[0, 3]`). With `dispersion = 1` it is the reference shape mixed with a
/// point mass at 0 or at 3; with `dispersion = 0` it only puts mass on the
/// two integers around the mean.
pub fn point_distribution(mean: f64, dispersion: f64) -> [f64; 4] {
    let mean = mean.clamp(0.0, MAX_EXPECTED_POINTS);
    let wide = wide_distribution(mean);
    let lo = (mean.floor() as usize).min(2);
    let frac = mean - lo as f64;
    let mut narrow = [0.0; 4];
    narrow[lo] = 1.0 - frac;
    narrow[lo + 1] = frac;
    let mut probs = [0.0; 4];
    for k in 0..4 {
        probs[k] = dispersion * wide[k] + (1.0 - dispersion) * narrow[k];
    }
    probs
}

fn wide_distribution(mean: f64) -> [f64; 4] {
    let base_mean: f64 = BASE_DISTRIBUTION.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let mut probs = BASE_DISTRIBUTION;
    if mean <= base_mean {
        let w = mean / base_mean;
        probs.iter_mut().for_each(|p| *p *= w);
        probs[0] += 1.0 - w;
    } else {
        let w = (MAX_EXPECTED_POINTS - mean) / (MAX_EXPECTED_POINTS - base_mean);
        probs.iter_mut().for_each(|p| *p *= w);
        probs[3] += 1.0 - w;
    }
    probs
}

fn draw_points(rng: &mut impl Rng, mean: f64, dispersion: f64) -> u8 {
    let probs = point_distribution(mean, dispersion);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate().take(3) {
        acc += p;
        if u < acc {
            return k as u8;
        }
    }
    3
}

#[derive(Debug, Clone)]
struct Team {
    pool: Vec<LineupKey>,
    usage: WeightedIndex<f64>,
}

/// A league with fixed rosters and player effects; seasons are simulated
/// from it independently.
#[derive(Debug, Clone)]
pub struct League {
    config: SynthConfig,
    teams: Vec<Team>,
    truth: GroundTruth,
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

impl League {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let off_dist = Normal::new(0.0, config.sd_gamma_off).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let def_dist = Normal::new(0.0, config.sd_gamma_def).map_err(|e| Error::InvalidConfig(e.to_string()))?;

        let subsets = combinations(config.roster_size, 5);
        let mut gamma_off = BTreeMap::new();
        let mut gamma_def = BTreeMap::new();
        let mut teams = Vec::with_capacity(config.n_teams);
        for t in 0..config.n_teams {
            // roster index doubles as depth-chart rank
            let roster: Vec<PlayerId> = (0..config.roster_size)
                .map(|i| PlayerId::new(&format!("T{t:02}P{i:02}")).expect("non-empty"))
                .collect();
            for p in &roster {
                gamma_off.insert(p.clone(), off_dist.sample(&mut rng));
                gamma_def.insert(p.clone(), def_dist.sample(&mut rng));
            }
            let mut ranked: Vec<(f64, &Vec<usize>)> = subsets
                .iter()
                .map(|s| {
                    let depth: usize = s.iter().sum();
                    // jitter breaks ties between lineups of equal depth
                    let jitter: f64 = rng.random_range(-0.5..0.5);
                    (-config.rotation_concentration * (depth as f64 + jitter), s)
                })
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
            ranked.truncate(config.lineup_pool_size);
            let top = ranked[0].0;
            let weights: Vec<f64> = ranked.iter().map(|(lw, _)| (lw - top).exp()).collect();
            let pool = ranked
                .iter()
                .map(|(_, s)| LineupKey::new(s.iter().map(|&i| roster[i].clone())).expect("distinct players"))
                .collect();
            let usage = WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            teams.push(Team { pool, usage });
        }
        Ok(Self {
            truth: GroundTruth {
                gamma_off,
                gamma_def,
                league_mean: config.league_mean_ppp,
            },
            config,
            teams,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Simulates one season. Different `season` indices give independent
    /// seasons of the same league.
    pub fn simulate_season(&self, season: u64) -> Result<PossessionSet> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(season + 1);
        let mut possessions = Vec::with_capacity(cfg.weeks as usize * cfg.games_per_week * cfg.possessions_per_game);
        for week in 1..=cfg.weeks {
            for g in 0..cfg.games_per_week {
                let home = rng.random_range(0..cfg.n_teams);
                let mut away = rng.random_range(0..cfg.n_teams - 1);
                if away >= home {
                    away += 1;
                }
                let day = (week as u64 - 1) * 7 + (g * 7 / cfg.games_per_week) as u64;
                let date = cfg.season_start + Days::new(day);
                let game_id: Arc<str> = Arc::from(format!("S{season}W{week:02}G{g:03}"));
                let mut home_on_offense = rng.random_bool(0.5);
                let mut left_in_stint = 0;
                let mut lineups = (&self.teams[home].pool[0], &self.teams[away].pool[0]);
                for _ in 0..cfg.possessions_per_game {
                    if left_in_stint == 0 {
                        left_in_stint = rng.random_range(cfg.stint_min..=cfg.stint_max);
                        let h = &self.teams[home];
                        let a = &self.teams[away];
                        lineups = (&h.pool[h.usage.sample(&mut rng)], &a.pool[a.usage.sample(&mut rng)]);
                    }
                    left_in_stint -= 1;
                    let (off, def) = if home_on_offense {
                        lineups
                    } else {
                        (lineups.1, lineups.0)
                    };
                    home_on_offense = !home_on_offense;
                    let mean = self.truth.true_expected_points(off, def)?;
                    let points = draw_points(&mut rng, mean, self.config.point_dispersion);
                    possessions.push(Possession::new(
                        points as i64,
                        off.clone(),
                        def.clone(),
                        game_id.clone(),
                        date,
                        possessions.len(),
                        week,
                    )?);
                }
            }
        }
        PossessionSet::from_possessions(
            possessions,
            cfg.season_start,
            7,
            format!("synthetic-{}-{season}", cfg.seed),
        )
    }
}

/// Builds a league from `cfg` and simulates its first season.
pub fn generate(cfg: &SynthConfig) -> Result<(PossessionSet, GroundTruth)> {
    let league = League::new(cfg.clone())?;
    let ps = league.simulate_season(0)?;
    Ok((ps, league.truth.clone()))
}

pub fn true_expected_points(gt: &GroundTruth, off: &LineupKey, def: &LineupKey) -> Result<f64> {
    gt.true_expected_points(off, def)
}

pub fn write_ground_truth_path(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    gt.write_csv(File::create(path)?)
}

/// Pearson correlation of two equally long samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

/// Pearson correlations (offense, defense) between fitted and true effects
/// over players present in both.
pub fn recovery_correlation(fitted: &crate::domain::PlayerRatings, gt: &GroundTruth) -> (f64, f64) {
    let mut fo = Vec::new();
    let mut to = Vec::new();
    let mut fd = Vec::new();
    let mut td = Vec::new();
    for (p, &g) in &fitted.off {
        if let (Some(&t_off), Some(&t_def), Some(&g_def)) =
            (gt.gamma_off.get(p), gt.gamma_def.get(p), fitted.def.get(p))
        {
            fo.push(g);
            to.push(t_off);
            fd.push(g_def);
            td.push(t_def);
        }
    }
    (pearson(&fo, &to), pearson(&fd, &td))
}
