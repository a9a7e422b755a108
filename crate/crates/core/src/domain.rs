//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest point total accepted for a single possession.
pub const MAX_POINTS: u8 = 6;

/// Opaque player token. Cloning is cheap; equality is exact token equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlayerId(Arc<str>);

impl PlayerId {
    pub fn new(token: &str) -> Result<Self> {
        if token.is_empty() {
            return Err(Error::EmptyPlayerId);
        }
        Ok(Self(Arc::from(token)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for PlayerId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for PlayerId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PlayerId::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Five distinct players, stored sorted so that any ordering of the same
/// players yields an equal key.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LineupKey([PlayerId; 5]);

impl LineupKey {
    pub fn new<I>(players: I) -> Result<Self>
    where
        I: IntoIterator<Item = PlayerId>,
    {
        let mut players: Vec<PlayerId> = players.into_iter().collect();
        if players.len() != 5 {
            return Err(Error::BadLineupSize(players.len()));
        }
        players.sort_unstable();
        if let Some(w) = players.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicatePlayer(w[0].to_string()));
        }
        let players: [PlayerId; 5] = players.try_into().expect("length checked above");
        Ok(Self(players))
    }

    /// Builds a key from raw tokens, e.g. the five fields of a CSV row.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let ids = tokens
            .iter()
            .map(|t| PlayerId::new(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids)
    }

    /// Parses `"p1,p2,p3,p4,p5"`.
    pub fn parse(s: &str) -> Result<Self> {
        let tokens: Vec<&str> = s.split(',').map(str::trim).collect();
        Self::from_tokens(&tokens)
    }

    pub fn players(&self) -> &[PlayerId; 5] {
        &self.0
    }

    pub fn contains(&self, p: &PlayerId) -> bool {
        self.0.binary_search(p).is_ok()
    }

    pub fn overlaps(&self, other: &LineupKey) -> Option<&PlayerId> {
        self.0.iter().find(|p| other.contains(p))
    }
}

impl fmt::Debug for LineupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LineupKey({self})")
    }
}

impl fmt::Display for LineupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(p.as_str())?;
        }
        Ok(())
    }
}

impl Serialize for LineupKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Offense,
    Defense,
}

/// One observed offensive possession.
#[derive(Debug, Clone, PartialEq)]
pub struct Possession {
    pub points: u8,
    pub offense: LineupKey,
    pub defense: LineupKey,
    pub game_id: Arc<str>,
    pub game_date: NaiveDate,
    /// Position in the source file; gives a total chronological order.
    pub order: usize,
    pub week: u32,
}

impl Possession {
    pub fn new(
        points: i64,
        offense: LineupKey,
        defense: LineupKey,
        game_id: Arc<str>,
        game_date: NaiveDate,
        order: usize,
        week: u32,
    ) -> Result<Self> {
        if !(0..=MAX_POINTS as i64).contains(&points) {
            return Err(Error::PointsOutOfRange(points));
        }
        if let Some(p) = offense.overlaps(&defense) {
            return Err(Error::LineupOverlap(p.to_string()));
        }
        Ok(Self {
            points: points as u8,
            offense,
            defense,
            game_id,
            game_date,
            order,
            week,
        })
    }
}

/// Per-player RAPM coefficients. `off` is points per possession added on
/// offense, `def` is points per possession saved on defense.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerRatings {
    pub gamma0: f64,
    pub off: BTreeMap<PlayerId, f64>,
    pub def: BTreeMap<PlayerId, f64>,
    pub lambda_off: f64,
    pub lambda_def: f64,
    /// Number of training possessions, so λ/n can be reported.
    pub n_train: usize,
}

impl PlayerRatings {
    pub fn get(&self, p: &PlayerId, side: Side) -> Option<f64> {
        match side {
            Side::Offense => self.off.get(p).copied(),
            Side::Defense => self.def.get(p).copied(),
        }
    }

    pub fn players(&self) -> BTreeSet<&PlayerId> {
        self.off.keys().chain(self.def.keys()).collect()
    }

    pub fn len(&self) -> usize {
        self.off.len()
    }

    pub fn is_empty(&self) -> bool {
        self.off.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(tokens: &[&str]) -> Vec<PlayerId> {
        tokens.iter().map(|t| PlayerId::new(t).unwrap()).collect()
    }

    #[test]
    fn lineup_key_is_order_insensitive() {
        let a = LineupKey::new(ids(&["p3", "p1", "p2", "p5", "p4"])).unwrap();
        let b = LineupKey::new(ids(&["p1", "p2", "p3", "p4", "p5"])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "p1,p2,p3,p4,p5");
    }

    #[test]
    fn lineup_key_rejects_duplicates_and_bad_sizes() {
        let dup = LineupKey::new(ids(&["p1", "p1", "p2", "p3", "p4"]));
        assert!(matches!(dup, Err(Error::DuplicatePlayer(p)) if p == "p1"));
        let short = LineupKey::new(ids(&["p1", "p2", "p3", "p4"]));
        assert!(matches!(short, Err(Error::BadLineupSize(4))));
        let long = LineupKey::new(ids(&["a", "b", "c", "d", "e", "f"]));
        assert!(matches!(long, Err(Error::BadLineupSize(6))));
    }

    #[test]
    fn empty_player_id_rejected() {
        assert!(matches!(PlayerId::new(""), Err(Error::EmptyPlayerId)));
        assert!(LineupKey::parse("a,b,,c,d").is_err());
    }

    #[test]
    fn possession_rejects_overlap_and_points() {
        let off = LineupKey::parse("a1,a2,a3,a4,a5").unwrap();
        let def = LineupKey::parse("a1,b2,b3,b4,b5").unwrap();
        let date = NaiveDate::from_ymd_opt(2023, 10, 24).unwrap();
        let err = Possession::new(2, off.clone(), def, "G".into(), date, 0, 1);
        assert!(matches!(err, Err(Error::LineupOverlap(p)) if p == "a1"));

        let def = LineupKey::parse("b1,b2,b3,b4,b5").unwrap();
        assert!(Possession::new(7, off.clone(), def.clone(), "G".into(), date, 0, 1).is_err());
        assert!(Possession::new(-1, off.clone(), def.clone(), "G".into(), date, 0, 1).is_err());
        assert!(Possession::new(6, off, def, "G".into(), date, 0, 1).is_ok());
    }

    proptest! {
        #[test]
        fn lineup_key_permutation_invariant(perm in Just(vec![0usize, 1, 2, 3, 4]).prop_shuffle()) {
            let base = ["zed", "amy", "kim", "bob", "lou"];
            let a = LineupKey::from_tokens(&base).unwrap();
            let shuffled: Vec<&str> = perm.iter().map(|&i| base[i]).collect();
            let b = LineupKey::from_tokens(&shuffled).unwrap();
            use std::hash::{BuildHasher, RandomState};
            let h = RandomState::new();
            prop_assert_eq!(h.hash_one(&a), h.hash_one(&b));
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn all_120_permutations_compare_equal() {
        let base = ["e", "d", "c", "b", "a"];
        let reference = LineupKey::from_tokens(&base).unwrap();
        let mut count = 0;
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    for l in 0..5 {
                        for m in 0..5 {
                            let idx = [i, j, k, l, m];
                            let mut seen = idx.to_vec();
                            seen.sort_unstable();
                            seen.dedup();
                            if seen.len() < 5 {
                                continue;
                            }
                            let toks: Vec<&str> = idx.iter().map(|&x| base[x]).collect();
                            assert_eq!(LineupKey::from_tokens(&toks).unwrap(), reference);
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(count, 120);
    }
}
