//! Fits player ratings with validation-selected penalties and compares them
//! with the generator's true effects.
//!
//!     cargo run --release --example player_ratings

use lrapm::rapm::{fit_rapm_with_selection, write_player_ratings, Split};
use lrapm::synth::{generate, recovery_correlation, SynthConfig};
use lrapm::SolveOptions;

fn main() -> lrapm::Result<()> {
    let cfg = SynthConfig {
        n_teams: 8,
        roster_size: 8,
        weeks: 10,
        games_per_week: 25,
        point_dispersion: 0.0,
        seed: 1,
        ..SynthConfig::default()
    };
    let (season, truth) = generate(&cfg)?;
    let grid = [10.0, 100.0, 1000.0, 10000.0];
    let (ratings, search) = fit_rapm_with_selection(
        &season,
        Split::WeekCutoff(season.weeks - 2),
        &grid,
        &grid,
        SolveOptions::default(),
    )?;

    println!("validation rmse by (lambda_off, lambda_def):");
    for s in &search.scores {
        println!(
            "  ({:>6}, {:>6})  {:.5}",
            s.lambdas.off, s.lambdas.def, s.validation_rmse
        );
    }
    let (c_off, c_def) = recovery_correlation(&ratings, &truth);
    println!(
        "selected {:?}; correlation with truth: offense {c_off:.3}, defense {c_def:.3}",
        search.best
    );

    let mut best: Vec<_> = ratings
        .players()
        .into_iter()
        .map(|p| (ratings.off[p] + ratings.def[p], p.clone()))
        .collect();
    best.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("top five by combined rating:");
    for (net, p) in best.iter().take(5) {
        println!("  {p}  {:+.2} per 100", 100.0 * net);
    }

    let mut out = Vec::new();
    write_player_ratings(&mut out, &ratings)?;
    let text = String::from_utf8(out).expect("utf8");
    println!(
        "ratings file starts:\n{}",
        text.lines().take(4).collect::<Vec<_>>().join("\n")
    );
    Ok(())
}
