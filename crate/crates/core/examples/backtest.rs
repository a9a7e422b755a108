//! Expanding-window backtest of lineup ratings against raw ratings on a
//! synthetic season, printing weekly, per-bucket and unseen-lineup results.
//!
//!     cargo run --release --example backtest -- [out_dir]

use lrapm::eval::{expanding_backtest, game_impact, BacktestConfig};
use lrapm::rapm::{fit_rapm_with_selection, Split};
use lrapm::synth::{League, SynthConfig};
use lrapm::SolveOptions;

fn main() -> lrapm::Result<()> {
    let out = std::env::args().nth(1);
    let league = League::new(SynthConfig {
        seed: 5,
        ..SynthConfig::default()
    })?;
    let last = league.simulate_season(1)?;
    let grid = [300.0, 1000.0, 3000.0, 10000.0];
    let (players, _) = fit_rapm_with_selection(
        &last,
        Split::WeekCutoff(last.weeks - 3),
        &grid,
        &grid,
        SolveOptions::default(),
    )?;

    let season = league.simulate_season(0)?;
    let cfg = BacktestConfig {
        include_adjusted: true,
        ..BacktestConfig::default()
    };
    let report = expanding_backtest(&season, &cfg, &players)?;

    println!("week  model   raw     delta");
    for w in &report.weekly {
        println!(
            "{:>4}  {:.4}  {:.4}  {:+.4}",
            w.week, w.rmse_model, w.rmse_baseline, w.delta
        );
    }
    println!("by training possessions of the less-seen lineup:");
    for b in report.buckets() {
        let hi = b.hi.map_or("inf".to_string(), |h| h.to_string());
        println!("  [{:>3}, {:>3})  delta {:+.4}  n {}", b.lo, hi, b.delta, b.n);
    }
    if let Some(all) = report.overall() {
        println!("overall delta {:+.4} over {} possessions", all.delta, all.n);
    }
    if let Some(u) = report.unseen_overall() {
        println!(
            "unseen lineups: prior {:.4} vs league average {:.4}, delta {:+.4}",
            u.rmse_model, u.rmse_baseline, u.delta
        );
    }
    println!("max train/test overlap: {}", report.max_overlap());
    println!(
        "1.5% of 1.13 ppp over 200 possessions = {:.2} points per game",
        game_impact(0.015, 1.13, 200)
    );

    if let Some(dir) = out {
        report.write_dir(&dir, true, true)?;
        println!("wrote {dir}/weekly.csv, buckets.csv, unseen.csv, report.json");
    }
    Ok(())
}
