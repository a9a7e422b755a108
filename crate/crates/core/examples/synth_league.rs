//! Simulates a league, writes it to disk, reads it back and prints the
//! per-lineup usage distribution.
//!
//!     cargo run --release --example synth_league -- [out_dir]

use lrapm::ingest::{read_possessions, IngestOptions};
use lrapm::synth::{generate, write_ground_truth_path, SynthConfig};

fn main() -> lrapm::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth-out".into());
    std::fs::create_dir_all(&out)?;
    let cfg = SynthConfig {
        seed: 42,
        ..SynthConfig::default()
    };
    let (season, truth) = generate(&cfg)?;
    let path = format!("{out}/possessions.csv");
    season.write_csv_path(&path)?;
    write_ground_truth_path(format!("{out}/ground_truth.csv"), &truth)?;

    let reread = read_possessions(&path, &IngestOptions::starting(cfg.season_start))?;
    assert_eq!(reread.possessions, season.possessions);
    println!(
        "{} possessions over {} weeks, league ppp {:.4}",
        reread.len(),
        reread.weeks,
        reread.league_ppp()?
    );

    let stats = reread.usage_stats()?;
    for (name, s) in [("offense", &stats.offense), ("defense", &stats.defense)] {
        println!(
            "{name}: {} lineups, mean {:.1}, std {:.1}, max {}",
            s.lineups, s.mean, s.std, s.max
        );
    }
    println!("possessions per lineup (offense)");
    for bin in &stats.offense.histogram {
        println!("  [{:>5}, {:>5})  {}", bin.lo, bin.hi, bin.count);
    }
    Ok(())
}
