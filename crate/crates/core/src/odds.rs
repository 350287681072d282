//! Money-line quotes, conservative merging across books, and bet settlement.
//!
//! A quote names a favorite and an underdog. The favorite line is what must be
//! staked to win $100; the underdog line is what a $100 stake wins. The pair
//! `(110, -110)` marks a Pick 'em, where either side pays `10000/110`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

/// Stake every settlement is expressed against.
pub const STAKE: i64 = 100;
pub const PICKEM_FAV_LINE: i64 = 110;
pub const PICKEM_DOG_LINE: i64 = -110;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TeamId(String);

impl TeamId {
    pub fn new(name: impl Into<String>) -> Self {
        TeamId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

impl From<&str> for TeamId {
    fn from(s: &str) -> Self {
        TeamId(s.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OddsError {
    #[error("favorite line {0} is below 100")]
    FavLineTooLow(i64),
    #[error("underdog line {0} is below 100 and is not the Pick 'em sentinel (110, -110)")]
    DogLineTooLow(i64),
    #[error("favorite and underdog are the same team `{0}`")]
    SameTeam(TeamId),
    #[error("favorite pays {fav} but underdog only {dog}")]
    FavoritePaysMore { fav: Money, dog: Money },
    #[error("no quotes to merge")]
    NoQuotes,
    #[error("books disagree on the match: {0}")]
    InconsistentQuotes(String),
    #[error("team `{0}` is not part of this line")]
    NotAParticipant(TeamId),
}

/// One book's quote for one match, as published.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuote {
    pub book_id: String,
    pub fav_team: TeamId,
    pub dog_team: TeamId,
    pub fav_line: i64,
    pub dog_line: i64,
    /// Explicit Pick 'em marker from the data; the sentinel pair is recognized either way.
    pub pickem: bool,
}

impl RawQuote {
    pub fn new(
        book_id: impl Into<String>,
        fav_team: impl Into<TeamId>,
        dog_team: impl Into<TeamId>,
        fav_line: i64,
        dog_line: i64,
    ) -> Self {
        RawQuote {
            book_id: book_id.into(),
            fav_team: fav_team.into(),
            dog_team: dog_team.into(),
            fav_line,
            dog_line,
            pickem: false,
        }
    }

    pub fn is_sentinel_pickem(&self) -> bool {
        self.fav_line == PICKEM_FAV_LINE && self.dog_line == PICKEM_DOG_LINE
    }
}

/// Canonical per-match line: pay-out per $100 stake on each side.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MoneyLine {
    fav_team: TeamId,
    dog_team: TeamId,
    fav_payout: Money,
    dog_payout: Money,
    is_pickem: bool,
}

impl MoneyLine {
    /// Builds a non-Pick 'em line from pay-outs directly.
    pub fn from_payouts(
        fav_team: TeamId,
        dog_team: TeamId,
        fav_payout: Money,
        dog_payout: Money,
    ) -> Result<Self, OddsError> {
        if fav_team == dog_team {
            return Err(OddsError::SameTeam(fav_team));
        }
        if fav_payout > dog_payout {
            return Err(OddsError::FavoritePaysMore {
                fav: fav_payout,
                dog: dog_payout,
            });
        }
        Ok(MoneyLine {
            fav_team,
            dog_team,
            fav_payout,
            dog_payout,
            is_pickem: false,
        })
    }

    /// A Pick 'em: either side pays `10000/110`. `nominal_fav` is only a label.
    pub fn pickem(nominal_fav: TeamId, other: TeamId) -> Result<Self, OddsError> {
        if nominal_fav == other {
            return Err(OddsError::SameTeam(other));
        }
        Ok(MoneyLine {
            fav_team: nominal_fav,
            dog_team: other,
            fav_payout: pickem_payout(),
            dog_payout: pickem_payout(),
            is_pickem: true,
        })
    }

    pub fn fav_team(&self) -> &TeamId {
        &self.fav_team
    }

    pub fn dog_team(&self) -> &TeamId {
        &self.dog_team
    }

    pub fn fav_payout(&self) -> &Money {
        &self.fav_payout
    }

    pub fn dog_payout(&self) -> &Money {
        &self.dog_payout
    }

    pub fn is_pickem(&self) -> bool {
        self.is_pickem
    }

    pub fn involves(&self, team: &TeamId) -> bool {
        &self.fav_team == team || &self.dog_team == team
    }

    /// Same pair of teams, in either designation.
    pub fn same_teams(&self, a: &TeamId, b: &TeamId) -> bool {
        (&self.fav_team == a && &self.dog_team == b) || (&self.fav_team == b && &self.dog_team == a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BetCategory {
    FavCorrect,
    DogCorrect,
    PickemCorrect,
    Incorrect,
}

impl BetCategory {
    pub fn is_correct(self) -> bool {
        self != BetCategory::Incorrect
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BetOutcome {
    pub category: BetCategory,
    pub delta: Money,
}

impl BetOutcome {
    /// The same outcome for a stake other than $100.
    pub fn at_stake(&self, stake: &Money) -> BetOutcome {
        BetOutcome {
            category: self.category,
            delta: self.delta.scale(stake, &Money::dollars(STAKE)),
        }
    }
}

/// `10000/110`, what a correct Pick 'em bet wins.
pub fn pickem_payout() -> Money {
    Money::ratio(STAKE * STAKE, PICKEM_FAV_LINE)
}

/// Difference between getting one Pick 'em right and wrong: the lost gain plus the stake.
pub fn pickem_swing() -> Money {
    pickem_payout() + Money::dollars(STAKE)
}

pub fn canonicalize(q: &RawQuote) -> Result<MoneyLine, OddsError> {
    if q.fav_team == q.dog_team {
        return Err(OddsError::SameTeam(q.fav_team.clone()));
    }
    if q.fav_line < STAKE {
        return Err(OddsError::FavLineTooLow(q.fav_line));
    }
    if q.is_sentinel_pickem() {
        return MoneyLine::pickem(q.fav_team.clone(), q.dog_team.clone());
    }
    if q.pickem {
        // Flagged Pick 'ems may be quoted as e.g. (105, -105).
        if q.dog_line.abs() < STAKE {
            return Err(OddsError::DogLineTooLow(q.dog_line));
        }
        return MoneyLine::pickem(q.fav_team.clone(), q.dog_team.clone());
    }
    if q.dog_line < STAKE {
        return Err(OddsError::DogLineTooLow(q.dog_line));
    }
    MoneyLine::from_payouts(
        q.fav_team.clone(),
        q.dog_team.clone(),
        Money::ratio(STAKE * STAKE, q.fav_line),
        Money::dollars(q.dog_line),
    )
}

/// Merges several books' lines for one match into a line that pays no more
/// than any of them, whichever side is bet. Takes the minimum per side, so the
/// two sides may come from different books.
pub fn conservative_merge(quotes: &[MoneyLine]) -> Result<MoneyLine, OddsError> {
    let (first, rest) = quotes.split_first().ok_or(OddsError::NoQuotes)?;
    let mut merged = first.clone();
    for q in rest {
        if q.is_pickem != merged.is_pickem {
            return Err(OddsError::InconsistentQuotes(format!(
                "Pick 'em for some books only ({} vs {})",
                merged.fav_team, merged.dog_team
            )));
        }
        if merged.is_pickem {
            if !q.same_teams(&merged.fav_team, &merged.dog_team) {
                return Err(OddsError::InconsistentQuotes(format!(
                    "Pick 'em between different teams: {}/{} vs {}/{}",
                    merged.fav_team, merged.dog_team, q.fav_team, q.dog_team
                )));
            }
            continue;
        }
        if q.fav_team != merged.fav_team || q.dog_team != merged.dog_team {
            return Err(OddsError::InconsistentQuotes(format!(
                "favorite {} over {} vs favorite {} over {}",
                merged.fav_team, merged.dog_team, q.fav_team, q.dog_team
            )));
        }
        merged.fav_payout = merged.fav_payout.min(q.fav_payout.clone());
        merged.dog_payout = merged.dog_payout.min(q.dog_payout.clone());
    }
    Ok(merged)
}

/// Settles a $100 bet on `pick` given the actual `winner`.
pub fn settle(line: &MoneyLine, pick: &TeamId, winner: &TeamId) -> Result<BetOutcome, OddsError> {
    for team in [pick, winner] {
        if !line.involves(team) {
            return Err(OddsError::NotAParticipant(team.clone()));
        }
    }
    let outcome = if pick != winner {
        BetOutcome {
            category: BetCategory::Incorrect,
            delta: Money::dollars(-STAKE),
        }
    } else if line.is_pickem {
        BetOutcome {
            category: BetCategory::PickemCorrect,
            delta: pickem_payout(),
        }
    } else if pick == &line.fav_team {
        BetOutcome {
            category: BetCategory::FavCorrect,
            delta: line.fav_payout.clone(),
        }
    } else {
        BetOutcome {
            category: BetCategory::DogCorrect,
            delta: line.dog_payout.clone(),
        }
    };
    Ok(outcome)
}
