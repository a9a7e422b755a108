//! Builds lineup priors from last season's player ratings, fits lineup
//! ratings on this season and ranks matchups against one opposing lineup.
//!
//!     cargo run --release --example lineup_ratings

use lrapm::lineup::{build_priors, fit_lrapm, select_lrapm_lambda};
use lrapm::rapm::{fit_rapm, Split, DEFAULT_FALLBACK_RATING};
use lrapm::synth::{League, SynthConfig};
use lrapm::{LambdaPair, SolveOptions};

fn main() -> lrapm::Result<()> {
    let league = League::new(SynthConfig {
        n_teams: 10,
        weeks: 12,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let last = league.simulate_season(1)?;
    let players = fit_rapm(&last.possessions, LambdaPair::uniform(3000.0), SolveOptions::default())?;

    let season = league.simulate_season(0)?;
    let priors = build_priors(
        &players,
        season.iter().flat_map(|p| [&p.offense, &p.defense]),
        season.league_ppp()?,
        DEFAULT_FALLBACK_RATING,
    );
    let search = select_lrapm_lambda(
        &season.possessions,
        &priors,
        Split::WeekCutoff(season.weeks - 2),
        &[10.0, 30.0, 100.0, 300.0, 1000.0],
        SolveOptions::default(),
    )?;
    let model = fit_lrapm(&season.possessions, &priors, search.best, SolveOptions::default())?;
    println!(
        "{} lineups, lambda {}, beta0 {:.4}",
        model.len(),
        search.best.off,
        model.beta0
    );

    // the opponent's most used lineup, and our team's lineups
    let opponent = model
        .usage
        .iter()
        .filter(|(l, _)| l.players()[0].as_str().starts_with("T01"))
        .max_by_key(|(_, u)| u.total())
        .map(|(l, _)| l.clone())
        .expect("team 1 played");
    let mut ours: Vec<_> = model
        .lineups()
        .filter(|l| l.players()[0].as_str().starts_with("T00"))
        .map(|l| (model.predict_matchup(l, &opponent), model.usage[l].total(), l.clone()))
        .collect();
    ours.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("best T00 lineups against {opponent}:");
    for (net, n, l) in ours.iter().take(5) {
        println!("  {net:+6.2} per 100  ({n:>4} possessions)  {l}");
    }

    let unseen = lrapm::LineupKey::parse("T00P00,T00P01,T00P10,T00P11,T00P12")?;
    let p = model.predict_detailed(&unseen, &opponent);
    println!("{unseen} on offense: {:.4} ppp (source {})", p.value, p.source());
    Ok(())
}
