//! Raw lineup ratings, the opponent adjustment, and the baseline predictor.
//!
//!     cargo run --release --example raw_baselines

use lrapm::baseline::{baseline_predict, winston_adjust, AdjustedRatingTable, RawRatingTable};
use lrapm::rapm::{fit_rapm, DEFAULT_FALLBACK_RATING};
use lrapm::synth::{generate, SynthConfig};
use lrapm::{LambdaPair, SolveOptions};

fn main() -> lrapm::Result<()> {
    println!(
        "113.2 against defenders averaging +0.26 -> {:.1}",
        winston_adjust(113.2, 0.26)
    );

    let (season, _) = generate(&SynthConfig {
        n_teams: 6,
        weeks: 6,
        seed: 9,
        ..SynthConfig::default()
    })?;
    let raw = RawRatingTable::from_possessions(season.iter());
    let mut busiest: Vec<_> = raw.lineups.iter().collect();
    busiest.sort_by_key(|(_, c)| std::cmp::Reverse(c.total_possessions()));
    println!("league {:.4} ppp over {} possessions", raw.league_ppp, raw.possessions);
    for (l, c) in busiest.iter().take(5) {
        println!(
            "  {l}  off {:.1} over {}, def {:.1} over {}",
            c.off_rating().unwrap_or(f64::NAN),
            c.off_possessions,
            c.def_rating().unwrap_or(f64::NAN),
            c.def_possessions
        );
    }

    let players = fit_rapm(
        &season.possessions,
        LambdaPair::uniform(3000.0),
        SolveOptions::default(),
    )?;
    let adjusted = AdjustedRatingTable::from_possessions(season.iter(), &players, DEFAULT_FALLBACK_RATING);
    let (a, b) = (busiest[0].0, busiest[1].0);
    if a.overlaps(b).is_none() {
        println!(
            "{a} vs {b}: raw {:.4}, adjusted {:.4}",
            baseline_predict(&raw, a, b),
            adjusted.predict(a, b)
        );
    }
    Ok(())
}
