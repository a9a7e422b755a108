use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use lrapm::baseline::{baseline_predict, RawRatingTable};
use lrapm::eval::{expanding_backtest, BacktestConfig, LambdaSelection};
use lrapm::ingest::league_ppp;
use lrapm::lineup::{build_priors, fit_lrapm, select_lrapm_lambda, LineupPriorTable};
use lrapm::rapm::{fit_rapm, select_rapm_lambdas, Split};
use lrapm::synth::{generate, League, SynthConfig};
use lrapm::{LambdaPair, LineupKey, PlayerRatings, Possession, SolveOptions};

fn lineup(prefix: &str) -> LineupKey {
    LineupKey::new((1..=5).map(|i| lrapm::PlayerId::new(&format!("{prefix}{i}")).unwrap())).unwrap()
}

fn zero_ratings() -> PlayerRatings {
    PlayerRatings {
        gamma0: 0.0,
        off: BTreeMap::new(),
        def: BTreeMap::new(),
        lambda_off: 0.0,
        lambda_def: 0.0,
        n_train: 0,
    }
}

#[test]
fn unpenalized_lineup_fit_matches_least_squares_projection() {
    let keys: Vec<LineupKey> = ["a", "b", "c", "d"].iter().map(|p| lineup(p)).collect();
    let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    let mut possessions = Vec::new();
    for rep in 0..3 {
        for (i, off) in keys.iter().enumerate() {
            for (j, def) in keys.iter().enumerate() {
                if i != j {
                    let points = ((i * 7 + j * 3 + rep * 5) % 4) as i64;
                    let order = possessions.len();
                    possessions
                        .push(Possession::new(points, off.clone(), def.clone(), "G".into(), date, order, 1).unwrap());
                }
            }
        }
    }
    let priors = build_priors(&zero_ratings(), keys.iter(), 1.1, 0.0);
    let lr = fit_lrapm(
        &possessions,
        &priors,
        LambdaPair::uniform(0.0),
        SolveOptions::with_tol(1e-13),
    )
    .unwrap();

    // the intercept and the offense columns are collinear, so compare fitted values
    let n = possessions.len();
    let x = DMatrix::from_fn(n, 9, |r, c| {
        let p = &possessions[r];
        match c {
            0 => 1.0,
            1..=4 if keys[c - 1] == p.offense => 1.0,
            5..=8 if keys[c - 5] == p.defense => -1.0,
            _ => 0.0,
        }
    });
    let y = DVector::from_iterator(n, possessions.iter().map(|p| p.points as f64));
    let coef = x.clone().svd(true, true).solve(&y, 1e-10).unwrap();
    let fitted = &x * coef;
    for (p, want) in possessions.iter().zip(fitted.iter()) {
        let got = lr.predict_possession(&p.offense, &p.defense);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

#[test]
fn league_ppp_of_synthetic_league() {
    let cfg = SynthConfig {
        n_teams: 10,
        weeks: 10,
        games_per_week: 50,
        sd_gamma_off: 0.0,
        sd_gamma_def: 0.0,
        ..SynthConfig::default()
    };
    let (ps, _) = generate(&cfg).unwrap();
    assert!(ps.len() >= 100_000);
    let ppp = league_ppp(ps.iter()).unwrap();
    assert!((ppp - 1.10).abs() <= 0.01, "{ppp}");
}

#[test]
fn empirical_mean_tracks_true_expected_points() {
    let cfg = SynthConfig {
        weeks: 10,
        sd_gamma_off: 0.05,
        sd_gamma_def: 0.05,
        seed: 4,
        ..SynthConfig::default()
    };
    let (ps, truth) = generate(&cfg).unwrap();
    assert!(ps.len() >= 100_000);
    let n = ps.len() as f64;
    let observed = ps.iter().map(|p| p.points as f64).sum::<f64>() / n;
    let expected = ps
        .iter()
        .map(|p| truth.true_expected_points(&p.offense, &p.defense).unwrap())
        .sum::<f64>()
        / n;
    assert!((observed - expected).abs() <= 0.01, "{observed} vs {expected}");
}

#[test]
fn default_league_usage_is_right_skewed() {
    let (ps, _) = generate(&SynthConfig::default()).unwrap();
    let stats = ps.usage_stats().unwrap();
    let off = &stats.offense;
    assert!((10.0..=25.0).contains(&off.mean), "mean {}", off.mean);
    assert!(off.std / off.mean >= 2.0, "std {} mean {}", off.std, off.mean);
}

fn null_league() -> lrapm::ingest::PossessionSet {
    let cfg = SynthConfig {
        n_teams: 6,
        roster_size: 8,
        weeks: 6,
        games_per_week: 30,
        sd_gamma_off: 0.0,
        sd_gamma_def: 0.0,
        seed: 2,
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap().0
}

#[test]
fn zero_effects_select_largest_player_lambda() {
    let ps = null_league();
    let grid = [1.0, 10.0, 100.0, 1e3, 1e4, 1e5];
    let search = select_rapm_lambdas(&ps, Split::WeekCutoff(4), &grid, &grid, SolveOptions::default()).unwrap();
    assert_eq!(search.best, LambdaPair::uniform(1e5));
}

#[test]
fn zero_effects_select_largest_lineup_lambda() {
    let ps = null_league();
    let priors = build_priors(
        &zero_ratings(),
        ps.iter().flat_map(|p| [&p.offense, &p.defense]),
        1.1,
        0.0,
    );
    let grid = [1.0, 10.0, 100.0, 1e3, 1e4, 1e5];
    let search = select_lrapm_lambda(
        &ps.possessions,
        &priors,
        Split::WeekCutoff(4),
        &grid,
        SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(search.best, LambdaPair::uniform(1e5));
}

#[test]
fn strong_lineup_effects_select_less_than_largest_lambda() {
    let cfg = SynthConfig {
        n_teams: 6,
        roster_size: 8,
        weeks: 8,
        games_per_week: 30,
        sd_gamma_off: 0.08,
        sd_gamma_def: 0.08,
        lineup_pool_size: 6,
        seed: 3,
        ..SynthConfig::default()
    };
    let (ps, _) = generate(&cfg).unwrap();
    let priors = build_priors(
        &zero_ratings(),
        ps.iter().flat_map(|p| [&p.offense, &p.defense]),
        1.1,
        0.0,
    );
    let search = select_lrapm_lambda(
        &ps.possessions,
        &priors,
        Split::WeekCutoff(6),
        &[10.0, 100.0, 1000.0],
        SolveOptions::default(),
    )
    .unwrap();
    assert!(search.best.off < 1000.0, "{:?}", search.best);
}

#[test]
fn well_sampled_lineups_approach_raw_ratings() {
    let cfg = SynthConfig {
        n_teams: 6,
        roster_size: 8,
        weeks: 12,
        games_per_week: 30,
        lineup_pool_size: 20,
        seed: 6,
        ..SynthConfig::default()
    };
    let (ps, _) = generate(&cfg).unwrap();
    let players = fit_rapm(&ps.possessions, LambdaPair::uniform(1000.0), SolveOptions::default()).unwrap();
    let priors = build_priors(
        &players,
        ps.iter().flat_map(|p| [&p.offense, &p.defense]),
        ps.league_ppp().unwrap(),
        -0.01,
    );
    let lr = fit_lrapm(
        &ps.possessions,
        &priors,
        LambdaPair::uniform(10.0),
        SolveOptions::default(),
    )
    .unwrap();
    let raw = RawRatingTable::from_possessions(ps.iter());

    let mut gaps: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
    for (l, counts) in &raw.lineups {
        if counts.off_possessions < 500 {
            continue;
        }
        let gap = (lr.off[l] - counts.off_rating().unwrap() / 100.0).abs();
        if counts.off_possessions >= 1000 {
            assert!(gap <= 0.05, "{l}: gap {gap} at {} possessions", counts.off_possessions);
        }
        gaps.entry(counts.off_possessions >= 1000).or_default().push(gap);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mid, high) = (&gaps[&false], &gaps[&true]);
    assert!(mean(high) < mean(mid), "{} vs {}", mean(high), mean(mid));
}

fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

#[test]
fn small_sample_predictions_are_closer_to_truth_than_raw_ratings() {
    let league = League::new(SynthConfig {
        weeks: 12,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let previous = league.simulate_season(1).unwrap();
    let players = fit_rapm(
        &previous.possessions,
        LambdaPair::uniform(3000.0),
        SolveOptions::default(),
    )
    .unwrap();
    let season = league.simulate_season(0).unwrap();
    let train: Vec<&Possession> = season.through_week(10).collect();
    let league_avg = league_ppp(train.iter().copied()).unwrap();
    let priors: LineupPriorTable = build_priors(
        &players,
        train.iter().flat_map(|p| [&p.offense, &p.defense]),
        league_avg,
        -0.01,
    );
    let lr = fit_lrapm(
        train.iter().copied(),
        &priors,
        LambdaPair::uniform(300.0),
        SolveOptions::default(),
    )
    .unwrap();
    let raw = RawRatingTable::from_possessions(train.iter().copied());

    let mut model_err = Vec::new();
    let mut raw_err = Vec::new();
    for p in season.iter().filter(|p| p.week > 10) {
        let samples = |l: &LineupKey| raw.total_possessions(l);
        let (so, sd) = (samples(&p.offense), samples(&p.defense));
        if so == 0 || sd == 0 || so.min(sd) >= 50 {
            continue;
        }
        let truth = league.truth().true_expected_points(&p.offense, &p.defense).unwrap();
        model_err.push(lr.predict_possession(&p.offense, &p.defense) - truth);
        let base = baseline_predict(&raw, &p.offense, &p.defense);
        raw_err.push(base - truth);
    }
    assert!(model_err.len() > 1000);
    assert!(
        rmse(&model_err) < rmse(&raw_err),
        "{} vs {}",
        rmse(&model_err),
        rmse(&raw_err)
    );
}

#[test]
fn backtest_trends_on_synthetic_season() {
    let league = League::new(SynthConfig {
        seed: 12,
        ..SynthConfig::default()
    })
    .unwrap();
    let previous = league.simulate_season(1).unwrap();
    let players = fit_rapm(
        &previous.possessions,
        LambdaPair::uniform(3000.0),
        SolveOptions::default(),
    )
    .unwrap();
    let season = league.simulate_season(0).unwrap();
    let cfg = BacktestConfig {
        lambda: LambdaSelection::Fixed(LambdaPair::uniform(1000.0)),
        ..BacktestConfig::default()
    };
    let report = expanding_backtest(&season, &cfg, &players).unwrap();

    let mean_delta = report.weekly.iter().map(|w| w.delta).sum::<f64>() / report.weekly.len() as f64;
    assert!(mean_delta < 0.0, "{mean_delta}");

    let magnitudes: Vec<f64> = report.buckets().iter().map(|b| b.delta.abs()).collect();
    let inversions = magnitudes.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(inversions <= 1, "{magnitudes:?}");

    let better = report.unseen_weekly.iter().filter(|w| w.delta < 0.0).count();
    assert!(
        2 * better > report.unseen_weekly.len(),
        "{better} of {}",
        report.unseen_weekly.len()
    );
}
