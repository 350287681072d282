//! Fixed-stake backtests, the favorite-following baseline and winnings-curve analytics.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use chrono::NaiveDate;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;
use crate::odds::{self, BetCategory, BetOutcome, MoneyLine, OddsError, TeamId, STAKE};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatchId(String);

impl MatchId {
    pub fn new(id: impl Into<String>) -> Self {
        MatchId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

impl From<&str> for MatchId {
    fn from(s: &str) -> Self {
        MatchId(s.to_string())
    }
}

/// Exact fraction of correct picks.
pub type Accuracy = Ratio<u64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("match {0}: winner `{1}` did not play")]
    WinnerNotPlaying(MatchId, TeamId),
    #[error("match {0}: scores {1}-{2} do not agree with the recorded winner")]
    ScoreMismatch(MatchId, u32, u32),
    #[error("match {0}: money line is for {1} vs {2}, not the scheduled teams")]
    LineTeamsMismatch(MatchId, TeamId, TeamId),
    #[error("match {0}: home and away team are both `{1}`")]
    SameTeam(MatchId, TeamId),
    #[error("no pick for match {0}")]
    MissingPick(MatchId),
    #[error("match {0}: {1}")]
    Settlement(MatchId, OddsError),
    #[error("winnings curve is empty")]
    EmptyCurve,
    #[error("stake must be positive")]
    NonPositiveStake,
}

/// One playable match with its merged line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRecord {
    pub match_id: MatchId,
    pub date: NaiveDate,
    pub home_team: TeamId,
    pub away_team: TeamId,
    /// Neither side is at home, e.g. tournament games.
    pub neutral: bool,
    pub winner: TeamId,
    pub home_score: Option<u32>,
    pub away_score: Option<u32>,
    pub line: MoneyLine,
}

impl MatchRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        match_id: MatchId,
        date: NaiveDate,
        home_team: TeamId,
        away_team: TeamId,
        neutral: bool,
        winner: TeamId,
        scores: Option<(u32, u32)>,
        line: MoneyLine,
    ) -> Result<Self, LedgerError> {
        if home_team == away_team {
            return Err(LedgerError::SameTeam(match_id, home_team));
        }
        if winner != home_team && winner != away_team {
            return Err(LedgerError::WinnerNotPlaying(match_id, winner));
        }
        if let Some((home, away)) = scores {
            let home_won = winner == home_team;
            if (home_won && home <= away) || (!home_won && away <= home) {
                return Err(LedgerError::ScoreMismatch(match_id, home, away));
            }
        }
        if !line.same_teams(&home_team, &away_team) {
            return Err(LedgerError::LineTeamsMismatch(
                match_id,
                line.fav_team().clone(),
                line.dog_team().clone(),
            ));
        }
        Ok(MatchRecord {
            match_id,
            date,
            home_team,
            away_team,
            neutral,
            winner,
            home_score: scores.map(|s| s.0),
            away_score: scores.map(|s| s.1),
            line,
        })
    }

    pub fn involves(&self, team: &TeamId) -> bool {
        &self.home_team == team || &self.away_team == team
    }

    pub fn opponent_of(&self, team: &TeamId) -> Option<&TeamId> {
        if team == &self.home_team {
            Some(&self.away_team)
        } else if team == &self.away_team {
            Some(&self.home_team)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub match_id: MatchId,
    pub date: NaiveDate,
    pub pick: TeamId,
    pub outcome: BetOutcome,
    /// Running total at the end of this entry's day.
    pub cumulative: Money,
}

/// Cumulative winnings per betting day; an implicit zero precedes the first point.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WinningsCurve {
    points: Vec<(NaiveDate, Money)>,
}

impl WinningsCurve {
    pub fn from_points(points: Vec<(NaiveDate, Money)>) -> Self {
        WinningsCurve { points }
    }

    pub fn points(&self) -> &[(NaiveDate, Money)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Final value, zero for an empty curve.
    pub fn final_value(&self) -> Money {
        self.points.last().map(|p| p.1.clone()).unwrap_or_default()
    }

    /// `date,cumulative` rows with a header.
    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "cumulative"])?;
        for (date, value) in &self.points {
            w.write_record([date.to_string(), value.to_string()])?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Backtest {
    pub entries: Vec<LedgerEntry>,
    pub curve: WinningsCurve,
}

impl Backtest {
    pub fn total(&self) -> Money {
        self.curve.final_value()
    }

    pub fn correct(&self) -> usize {
        self.entries.iter().filter(|e| e.outcome.category.is_correct()).count()
    }
}

/// Indices of `matches` in date order, input order within a day.
fn date_order(matches: &[MatchRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matches.len()).collect();
    order.sort_by_key(|&i| matches[i].date);
    order
}

pub fn run_backtest(
    matches: &[MatchRecord],
    picks: &BTreeMap<MatchId, TeamId>,
) -> Result<Backtest, LedgerError> {
    run_backtest_with_stake(matches, picks, &Money::dollars(STAKE))
}

pub fn run_backtest_with_stake(
    matches: &[MatchRecord],
    picks: &BTreeMap<MatchId, TeamId>,
    stake: &Money,
) -> Result<Backtest, LedgerError> {
    if *stake <= 0 {
        return Err(LedgerError::NonPositiveStake);
    }
    let mut entries: Vec<LedgerEntry> = Vec::with_capacity(matches.len());
    let mut points: Vec<(NaiveDate, Money)> = Vec::new();
    let mut running = Money::zero();
    let mut day_start = 0;

    let order = date_order(matches);
    for (pos, &i) in order.iter().enumerate() {
        let m = &matches[i];
        let pick = picks
            .get(&m.match_id)
            .ok_or_else(|| LedgerError::MissingPick(m.match_id.clone()))?;
        let outcome = odds::settle(&m.line, pick, &m.winner)
            .map_err(|e| LedgerError::Settlement(m.match_id.clone(), e))?
            .at_stake(stake);
        running += &outcome.delta;
        entries.push(LedgerEntry {
            match_id: m.match_id.clone(),
            date: m.date,
            pick: pick.clone(),
            outcome,
            cumulative: Money::zero(),
        });

        let day_ends = order.get(pos + 1).is_none_or(|&next| matches[next].date != m.date);
        if day_ends {
            for e in &mut entries[day_start..] {
                e.cumulative = running.clone();
            }
            day_start = entries.len();
            points.push((m.date, running.clone()));
        }
    }
    Ok(Backtest {
        entries,
        curve: WinningsCurve { points },
    })
}

/// Follow-the-favorite results with Pick 'ems treated as coin flips.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineReport {
    pub n_matches: u64,
    pub n_pickems: u64,
    /// Favorites that won, among non-Pick 'em matches.
    pub favorites_correct: u64,
    /// `None` when every match is a Pick 'em.
    pub acc_without_pickems: Option<Accuracy>,
    pub payout_without_pickems: Money,
    pub best_acc: Option<Accuracy>,
    pub best_payout: Money,
    pub expected_acc: Option<Accuracy>,
    pub expected_payout: Money,
    pub worst_acc: Option<Accuracy>,
    pub worst_payout: Money,
}

impl BaselineReport {
    /// Machine-readable record with the eight table columns plus counts.
    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        use crate::report::format_accuracy;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "matches",
            "pickems",
            "accuracy",
            "payout",
            "best_accuracy",
            "best_payout",
            "expected_accuracy",
            "expected_payout",
            "worst_accuracy",
            "worst_payout",
        ])?;
        w.write_record([
            self.n_matches.to_string(),
            self.n_pickems.to_string(),
            format_accuracy(self.acc_without_pickems),
            self.payout_without_pickems.to_string(),
            format_accuracy(self.best_acc),
            self.best_payout.to_string(),
            format_accuracy(self.expected_acc),
            self.expected_payout.to_string(),
            format_accuracy(self.worst_acc),
            self.worst_payout.to_string(),
        ])?;
        w.flush()
    }
}

fn fraction(num: u64, den: u64) -> Option<Accuracy> {
    (den > 0).then(|| Ratio::new(num, den))
}

pub fn vegas_baseline(matches: &[MatchRecord]) -> BaselineReport {
    vegas_baseline_with_stake(matches, &Money::dollars(STAKE))
}

pub fn vegas_baseline_with_stake(matches: &[MatchRecord], stake: &Money) -> BaselineReport {
    let unit = Money::dollars(STAKE);
    let mut n_pickems = 0u64;
    let mut favorites_correct = 0u64;
    let mut payout = Money::zero();
    for m in matches {
        if m.line.is_pickem() {
            n_pickems += 1;
            continue;
        }
        let fav = m.line.fav_team();
        let outcome = if &m.winner == fav {
            favorites_correct += 1;
            m.line.fav_payout().clone()
        } else {
            Money::dollars(-STAKE)
        };
        payout += outcome.scale(stake, &unit);
    }
    let n = matches.len() as u64;
    let pickems = n_pickems as i64;
    let best_payout = &payout + &(&odds::pickem_payout() * pickems).scale(stake, &unit);
    let worst_payout = &payout - &(&unit * pickems).scale(stake, &unit);
    let expected_payout = (&best_payout + &worst_payout) / 2;
    BaselineReport {
        n_matches: n,
        n_pickems,
        favorites_correct,
        acc_without_pickems: fraction(favorites_correct, n - n_pickems),
        payout_without_pickems: payout,
        best_acc: fraction(favorites_correct + n_pickems, n),
        expected_acc: fraction(2 * favorites_correct + n_pickems, 2 * n),
        worst_acc: fraction(favorites_correct, n),
        best_payout,
        expected_payout,
        worst_payout,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurvePoint {
    pub date: NaiveDate,
    pub value: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TroughToPeak {
    pub trough: CurvePoint,
    pub peak: CurvePoint,
    pub gain: Money,
}

/// Global minimum (earliest on ties) and the highest point at or after it.
pub fn trough_to_peak(curve: &WinningsCurve) -> Result<TroughToPeak, LedgerError> {
    let points = curve.points();
    let trough_idx = earliest_extreme(points, |candidate, best| candidate < best)?;
    let peak_idx = trough_idx
        + earliest_extreme(&points[trough_idx..], |candidate, best| candidate > best)?;
    let trough = point(points, trough_idx);
    let peak = point(points, peak_idx);
    let gain = &peak.value - &trough.value;
    Ok(TroughToPeak { trough, peak, gain })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeakExit {
    pub peak: CurvePoint,
    /// Peak minus final value.
    pub forfeited: Money,
}

/// Where stopping would have been best, and what staying to the end cost.
pub fn peak_before_end(curve: &WinningsCurve) -> Result<PeakExit, LedgerError> {
    let points = curve.points();
    let peak = point(points, earliest_extreme(points, |c, b| c > b)?);
    let forfeited = &peak.value - &curve.final_value();
    Ok(PeakExit { peak, forfeited })
}

fn earliest_extreme(
    points: &[(NaiveDate, Money)],
    better: impl Fn(&Money, &Money) -> bool,
) -> Result<usize, LedgerError> {
    if points.is_empty() {
        return Err(LedgerError::EmptyCurve);
    }
    let mut best = 0;
    for (i, (_, v)) in points.iter().enumerate().skip(1) {
        if better(v, &points[best].1) {
            best = i;
        }
    }
    Ok(best)
}

fn point(points: &[(NaiveDate, Money)], i: usize) -> CurvePoint {
    CurvePoint {
        date: points[i].0,
        value: points[i].1.clone(),
    }
}

/// Correct-pick category counts for a set of entries.
pub fn category_counts(entries: &[LedgerEntry]) -> BTreeMap<BetCategory, u64> {
    let mut counts = BTreeMap::new();
    for e in entries {
        *counts.entry(e.outcome.category).or_insert(0) += 1;
    }
    counts
}
