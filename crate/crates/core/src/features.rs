//! Team representations built from per-team game logs.
//!
//! Every builder takes an `as_of` date and only reads games dated strictly
//! before it. Representations:
//!
//! - basic averages: per-possession box-score stats, own and allowed, recency weighted
//! - opponents' averages: the basic averages of the teams faced so far
//! - adjusted averages: own and allowed stats corrected for opponent strength
//! - adjusted efficiencies: points scored/allowed per 100 possessions, corrected the same way
//! - SRS: weighted margin plus weighted opponent rating

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::odds::TeamId;

pub const POINTS_FOR: &str = "points_for";
pub const POINTS_AGAINST: &str = "points_against";
pub const ALLOWED_SUFFIX: &str = "_allowed";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("no rows to average")]
    EmptyInput,
    #[error("team `{0}` has no games before the cutoff")]
    NoGames(TeamId),
    #[error("stat vector mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{team} on {date}: estimated possessions are {possessions}")]
    ZeroPossessions {
        team: TeamId,
        date: NaiveDate,
        possessions: f64,
    },
    #[error("league average of `{0}` is zero")]
    ZeroLeagueAverage(String),
    #[error("adjusted `{stat}` for {team} reached zero")]
    DegenerateStat { stat: String, team: TeamId },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },
    #[error("invalid recency weights: {0}")]
    InvalidWeights(String),
    #[error("invalid game log row {index}: {reason}")]
    InvalidRow { index: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Venue {
    Home,
    Away,
    Neutral,
}

impl Venue {
    pub fn mirrored(self) -> Venue {
        match self {
            Venue::Home => Venue::Away,
            Venue::Away => Venue::Home,
            Venue::Neutral => Venue::Neutral,
        }
    }
}

/// Named numeric features in a fixed (sorted) order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatVector(BTreeMap<String, f64>);

impl StatVector {
    pub fn new() -> Self {
        StatVector(BTreeMap::new())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn same_names(&self, other: &StatVector) -> bool {
        self.0.len() == other.0.len() && self.0.keys().zip(other.0.keys()).all(|(a, b)| a == b)
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for StatVector {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        StatVector(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// One team's box score for one game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameLogRow {
    pub date: NaiveDate,
    pub team: TeamId,
    pub opponent: TeamId,
    pub venue: Venue,
    pub stats: StatVector,
    pub points_for: f64,
    pub points_against: f64,
}

/// Which stats a sport's logs carry and how possessions are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SportSchema {
    pub name: String,
    /// Countable box-score stats every row must carry.
    pub stats: Vec<String>,
    /// Possessions = Σ coefficient × stat.
    pub possession_formula: BTreeMap<String, f64>,
    /// Per-possession stats are scaled to this many possessions.
    pub target_possessions: f64,
    /// Stats (from `stats`) that get opponent-adjusted; empty means all.
    #[serde(default)]
    pub adjusted_stats: Vec<String>,
}

impl SportSchema {
    /// FGA − OREB + TO + 0.475·FTA.
    pub fn basketball() -> Self {
        let stats = ["fgm", "fga", "fg3m", "fg3a", "ftm", "fta", "oreb", "dreb", "ast", "stl", "blk", "tov", "pf"];
        SportSchema {
            name: "basketball".into(),
            stats: stats.iter().map(|s| s.to_string()).collect(),
            possession_formula: [("fga", 1.0), ("oreb", -1.0), ("tov", 1.0), ("fta", 0.475)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            target_possessions: 65.0,
            adjusted_stats: Vec::new(),
        }
    }

    /// Offensive drives stand in for possessions.
    pub fn football() -> Self {
        let stats = [
            "drives", "first_downs", "rush_att", "rush_yds", "pass_cmp", "pass_att", "pass_yds", "sacks",
            "sack_yds", "fumbles_lost", "interceptions", "penalties", "penalty_yds",
        ];
        SportSchema {
            name: "football".into(),
            stats: stats.iter().map(|s| s.to_string()).collect(),
            possession_formula: [("drives".to_string(), 1.0)].into_iter().collect(),
            target_possessions: 65.0,
            adjusted_stats: Vec::new(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "basketball" => Some(Self::basketball()),
            "football" => Some(Self::football()),
            _ => None,
        }
    }

    pub fn adjusted(&self) -> &[String] {
        if self.adjusted_stats.is_empty() {
            &self.stats
        } else {
            &self.adjusted_stats
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_possessions > 0.0 && self.target_possessions.is_finite()) {
            return Err(FeatureError::SchemaMismatch(format!(
                "target possessions {} must be positive",
                self.target_possessions
            )));
        }
        let declared: BTreeSet<&String> = self.stats.iter().collect();
        for name in self.possession_formula.keys().chain(&self.adjusted_stats) {
            if !declared.contains(name) {
                return Err(FeatureError::SchemaMismatch(format!("`{name}` is not a declared stat")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// Oldest game weighs 1, each later game `parameter` more.
    Linear,
    /// Most recent game weighs 1, each older game `parameter` times the next.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecencyWeights {
    pub scheme: WeightScheme,
    pub parameter: f64,
}

impl Default for RecencyWeights {
    fn default() -> Self {
        RecencyWeights {
            scheme: WeightScheme::Exponential,
            parameter: 0.95,
        }
    }
}

impl RecencyWeights {
    pub fn uniform() -> Self {
        RecencyWeights {
            scheme: WeightScheme::Exponential,
            parameter: 1.0,
        }
    }

    pub fn exponential(decay: f64) -> Self {
        RecencyWeights {
            scheme: WeightScheme::Exponential,
            parameter: decay,
        }
    }

    pub fn linear(step: f64) -> Self {
        RecencyWeights {
            scheme: WeightScheme::Linear,
            parameter: step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.scheme {
            WeightScheme::Exponential => self.parameter > 0.0 && self.parameter <= 1.0,
            WeightScheme::Linear => self.parameter >= 0.0 && self.parameter.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(FeatureError::InvalidWeights(format!(
                "{:?} parameter {} out of range",
                self.scheme, self.parameter
            )))
        }
    }

    /// Weights for `n` games, oldest first.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        match self.scheme {
            WeightScheme::Exponential => (0..n).map(|i| self.parameter.powi((n - 1 - i) as i32)).collect(),
            WeightScheme::Linear => (0..n).map(|i| 1.0 + self.parameter * i as f64).collect(),
        }
    }
}

/// Fixed-point iteration limits shared by the adjusted-stat and SRS solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-9,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    BasicAvg,
    OppAvg,
    AdjAvg,
    Srs,
    AdjEff,
}

impl RepresentationKind {
    pub const ALL: [RepresentationKind; 5] = [
        RepresentationKind::BasicAvg,
        RepresentationKind::OppAvg,
        RepresentationKind::AdjAvg,
        RepresentationKind::Srs,
        RepresentationKind::AdjEff,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            RepresentationKind::BasicAvg => "basic",
            RepresentationKind::OppAvg => "opp",
            RepresentationKind::AdjAvg => "adj",
            RepresentationKind::Srs => "srs",
            RepresentationKind::AdjEff => "eff",
        }
    }
}

impl fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamRepresentation {
    pub team: TeamId,
    pub as_of: NaiveDate,
    pub kind: RepresentationKind,
    pub features: StatVector,
}

/// Validated collection of team-game rows in which every row has its mirror:
/// the opponent's row for the same game.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GameLog {
    rows: Vec<GameLogRow>,
    mirror: Vec<usize>,
}

impl GameLog {
    pub fn new(rows: Vec<GameLogRow>) -> Result<Self> {
        let mut index: BTreeMap<(NaiveDate, &TeamId, &TeamId), usize> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            let bad = |reason: String| FeatureError::InvalidRow { index: i, reason };
            if r.team == r.opponent {
                return Err(bad(format!("team `{}` plays itself", r.team)));
            }
            let values = r.stats.iter().map(|(_, v)| v).chain([r.points_for, r.points_against]);
            for v in values {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad(format!("stat value {v} is not a finite non-negative number")));
                }
            }
            if index.insert((r.date, &r.team, &r.opponent), i).is_some() {
                return Err(bad(format!("duplicate row for {} vs {} on {}", r.team, r.opponent, r.date)));
            }
        }
        let mut mirror = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let bad = |reason: String| FeatureError::InvalidRow { index: i, reason };
            let j = *index
                .get(&(r.date, &r.opponent, &r.team))
                .ok_or_else(|| bad(format!("no row for {} vs {} on {}", r.opponent, r.team, r.date)))?;
            let m = &rows[j];
            if m.venue != r.venue.mirrored() {
                return Err(bad(format!("venue {:?} does not mirror {:?}", r.venue, m.venue)));
            }
            if m.points_for != r.points_against || m.points_against != r.points_for {
                return Err(bad("points disagree with the opponent's row".into()));
            }
            if !r.stats.same_names(&m.stats) {
                return Err(bad("stat names differ from the opponent's row".into()));
            }
            mirror.push(j);
        }
        Ok(GameLog { rows, mirror })
    }

    pub fn rows(&self) -> &[GameLogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The opponent's row for the same game.
    pub fn mirror_of(&self, i: usize) -> &GameLogRow {
        &self.rows[self.mirror[i]]
    }

    /// Games dated strictly before `as_of`. Mirrors share a date, so the result stays paired.
    pub fn prior_to(&self, as_of: NaiveDate) -> GameLog {
        let keep: Vec<usize> = (0..self.rows.len()).filter(|&i| self.rows[i].date < as_of).collect();
        let mut new_index = vec![usize::MAX; self.rows.len()];
        for (n, &i) in keep.iter().enumerate() {
            new_index[i] = n;
        }
        GameLog {
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            mirror: keep.iter().map(|&i| new_index[self.mirror[i]]).collect(),
        }
    }

    pub fn teams(&self) -> BTreeSet<TeamId> {
        self.rows.iter().map(|r| r.team.clone()).collect()
    }

    /// Row indices of `team`'s games, oldest first (input order within a date).
    pub fn team_games(&self, team: &TeamId) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).filter(|&i| &self.rows[i].team == team).collect();
        idx.sort_by_key(|&i| self.rows[i].date);
        idx
    }

    fn games_by_team(&self) -> BTreeMap<&TeamId, Vec<usize>> {
        let mut map: BTreeMap<&TeamId, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            map.entry(&r.team).or_default().push(i);
        }
        for games in map.values_mut() {
            games.sort_by_key(|&i| self.rows[i].date);
        }
        map
    }
}

pub fn possessions(row: &GameLogRow, schema: &SportSchema) -> Result<f64> {
    let mut total = 0.0;
    for (stat, coef) in &schema.possession_formula {
        let value = row
            .stats
            .get(stat)
            .ok_or_else(|| FeatureError::SchemaMismatch(format!("row lacks possession stat `{stat}`")))?;
        total += coef * value;
    }
    Ok(total)
}

/// Scales the schema's stats and both point totals to `schema.target_possessions`.
pub fn normalize_per_possessions(row: &GameLogRow, schema: &SportSchema) -> Result<StatVector> {
    let poss = possessions(row, schema)?;
    if !(poss > 0.0) {
        return Err(FeatureError::ZeroPossessions {
            team: row.team.clone(),
            date: row.date,
            possessions: poss,
        });
    }
    let factor = schema.target_possessions / poss;
    let mut out = StatVector::new();
    for stat in &schema.stats {
        let v = row
            .stats
            .get(stat)
            .ok_or_else(|| FeatureError::SchemaMismatch(format!("row lacks stat `{stat}`")))?;
        out.insert(stat.clone(), v * factor);
    }
    out.insert(POINTS_FOR, row.points_for * factor);
    out.insert(POINTS_AGAINST, row.points_against * factor);
    Ok(out)
}

/// Recency-weighted mean of `rows`, given oldest first.
pub fn weighted_average(rows: &[StatVector], w: &RecencyWeights) -> Result<StatVector> {
    w.validate()?;
    let (first, rest) = rows.split_first().ok_or(FeatureError::EmptyInput)?;
    if let Some(bad) = rest.iter().find(|r| !r.same_names(first)) {
        return Err(FeatureError::SchemaMismatch(format!(
            "expected {:?}, found {:?}",
            first.names().collect::<Vec<_>>(),
            bad.names().collect::<Vec<_>>()
        )));
    }
    let weights = w.weights(rows.len());
    let total: f64 = weights.iter().sum();
    Ok(first
        .names()
        .map(|name| {
            let s: f64 = rows.iter().zip(&weights).map(|(r, wi)| wi * r.0[name]).sum();
            (name.to_string(), s / total)
        })
        .collect())
}

fn allowed(stat: &str) -> String {
    format!("{stat}{ALLOWED_SUFFIX}")
}

/// Own normalized stats plus the opponent's, suffixed `_allowed`.
fn two_sided_row(log: &GameLog, i: usize, schema: &SportSchema) -> Result<StatVector> {
    let mut own = normalize_per_possessions(&log.rows[i], schema)?;
    let theirs = normalize_per_possessions(log.mirror_of(i), schema)?;
    for stat in &schema.stats {
        own.insert(allowed(stat), theirs.0[stat]);
    }
    Ok(own)
}

pub fn basic_average(
    log: &GameLog,
    team: &TeamId,
    as_of: NaiveDate,
    schema: &SportSchema,
    w: &RecencyWeights,
) -> Result<TeamRepresentation> {
    let log = log.prior_to(as_of);
    basic_average_in(&log, team, as_of, schema, w)
}

fn basic_average_in(
    log: &GameLog,
    team: &TeamId,
    as_of: NaiveDate,
    schema: &SportSchema,
    w: &RecencyWeights,
) -> Result<TeamRepresentation> {
    let games = log.team_games(team);
    if games.is_empty() {
        return Err(FeatureError::NoGames(team.clone()));
    }
    let rows = games
        .iter()
        .map(|&i| two_sided_row(log, i, schema))
        .collect::<Result<Vec<_>>>()?;
    Ok(TeamRepresentation {
        team: team.clone(),
        as_of,
        kind: RepresentationKind::BasicAvg,
        features: weighted_average(&rows, w)?,
    })
}

/// Recency-weighted mean of the current basic averages of every opponent
/// faced so far, one entry per game.
pub fn opponents_average(
    log: &GameLog,
    team: &TeamId,
    as_of: NaiveDate,
    schema: &SportSchema,
    w: &RecencyWeights,
) -> Result<TeamRepresentation> {
    let log = log.prior_to(as_of);
    let mut cache: BTreeMap<TeamId, StatVector> = BTreeMap::new();
    opponents_average_in(&log, team, as_of, schema, w, &mut cache)
}

fn opponents_average_in(
    log: &GameLog,
    team: &TeamId,
    as_of: NaiveDate,
    schema: &SportSchema,
    w: &RecencyWeights,
    cache: &mut BTreeMap<TeamId, StatVector>,
) -> Result<TeamRepresentation> {
    let games = log.team_games(team);
    if games.is_empty() {
        return Err(FeatureError::NoGames(team.clone()));
    }
    let mut rows = Vec::with_capacity(games.len());
    for &i in &games {
        let opp = &log.rows[i].opponent;
        if !cache.contains_key(opp) {
            let rep = basic_average_in(log, opp, as_of, schema, w)?;
            cache.insert(opp.clone(), rep.features);
        }
        rows.push(cache[opp].clone());
    }
    Ok(TeamRepresentation {
        team: team.clone(),
        as_of,
        kind: RepresentationKind::OppAvg,
        features: weighted_average(&rows, w)?,
    })
}

/// One team-game for the opponent-adjustment solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub team: usize,
    pub opponent: usize,
    pub weight: f64,
    /// The team's value of the stat.
    pub offense: f64,
    /// The opponent's value of the same stat (what the team allowed).
    pub defense: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adjusted {
    pub offense: Vec<f64>,
    pub defense: Vec<f64>,
    pub iterations: usize,
}

/// Connected components of the schedule graph, as a component id per team.
fn components(n_teams: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n_teams).collect();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let roots: Vec<usize> = (0..n_teams).map(|t| find(&mut parent, t)).collect();
    let mut ids = BTreeMap::new();
    roots
        .iter()
        .map(|r| {
            let next = ids.len();
            *ids.entry(*r).or_insert(next)
        })
        .collect()
}

fn component_means(values: &[f64], comp: &[usize], n_comp: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_comp];
    let mut count = vec![0usize; n_comp];
    for (v, &c) in values.iter().zip(comp) {
        sum[c] += v;
        count[c] += 1;
    }
    sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect()
}

fn weighted_means(obs: &[Observation], n_teams: usize, value: impl Fn(&Observation) -> f64) -> Vec<f64> {
    let mut num = vec![0.0; n_teams];
    let mut den = vec![0.0; n_teams];
    for o in obs {
        num[o.team] += o.weight * value(o);
        den[o.team] += o.weight;
    }
    num.iter().zip(&den).map(|(n, d)| n / d).collect()
}

/// Multiplicative opponent adjustment.
///
/// Each game's offensive value is scaled by (league average of the defensive
/// stat) / (opponent's adjusted defense) and recency-averaged; defense is
/// adjusted symmetrically against adjusted offenses. One sweep updates all
/// offenses from the current defenses, then all defenses from the new
/// offenses. After each half-sweep the adjusted values of every connected
/// component are rescaled so their mean equals the component's mean raw
/// weighted average. Every team in `0..n_teams` needs at least one observation.
pub fn solve_opponent_adjusted(
    obs: &[Observation],
    n_teams: usize,
    settings: &SolverSettings,
) -> std::result::Result<Adjusted, SolveError> {
    if obs.is_empty() {
        return Err(SolveError::Empty);
    }
    let mut games = vec![0usize; n_teams];
    for o in obs {
        games[o.team] += 1;
    }
    if let Some(t) = games.iter().position(|&g| g == 0) {
        return Err(SolveError::NoGames(t));
    }
    let league_off = obs.iter().map(|o| o.offense).sum::<f64>() / obs.len() as f64;
    let league_def = obs.iter().map(|o| o.defense).sum::<f64>() / obs.len() as f64;
    if league_off == 0.0 || league_def == 0.0 {
        return Err(SolveError::ZeroLeagueAverage);
    }

    let comp = components(n_teams, obs.iter().map(|o| (o.team, o.opponent)));
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let raw_off = weighted_means(obs, n_teams, |o| o.offense);
    let raw_def = weighted_means(obs, n_teams, |o| o.defense);
    let target_off = component_means(&raw_off, &comp, n_comp);
    let target_def = component_means(&raw_def, &comp, n_comp);

    let rescale = |values: &mut [f64], target: &[f64]| -> std::result::Result<(), SolveError> {
        let means = component_means(values, &comp, n_comp);
        for (v, &c) in values.iter_mut().zip(&comp) {
            *v *= target[c] / means[c];
        }
        match values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            Some(t) => Err(SolveError::Degenerate(t)),
            None => Ok(()),
        }
    };

    let mut off = raw_off;
    let mut def = raw_def;
    if let Some(t) = off.iter().chain(&def).position(|v| *v <= 0.0) {
        return Err(SolveError::Degenerate(t % n_teams));
    }
    let mut residual = f64::INFINITY;
    for iteration in 1..=settings.max_iterations {
        let mut new_off = weighted_means(obs, n_teams, |o| o.offense * league_def / def[o.opponent]);
        rescale(&mut new_off, &target_off)?;
        let mut new_def = weighted_means(obs, n_teams, |o| o.defense * league_off / new_off[o.opponent]);
        rescale(&mut new_def, &target_def)?;

        residual = off
            .iter()
            .zip(&new_off)
            .chain(def.iter().zip(&new_def))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        off = new_off;
        def = new_def;
        if residual < settings.tolerance {
            return Ok(Adjusted {
                offense: off,
                defense: def,
                iterations: iteration,
            });
        }
    }
    Err(SolveError::NonConvergence {
        iterations: settings.max_iterations,
        residual,
    })
}

/// Rating = weighted margin + weighted mean opponent rating, shifted to zero
/// mean per connected component. Solved by damped (½) Jacobi iteration,
/// which avoids the period-2 oscillation plain Jacobi shows on bipartite
/// schedules.
pub fn solve_weighted_srs(
    games: &[(usize, usize, f64, f64)],
    n_teams: usize,
    settings: &SolverSettings,
) -> std::result::Result<(Vec<f64>, Vec<f64>, usize), SolveError> {
    let obs: Vec<Observation> = games
        .iter()
        .map(|&(team, opponent, weight, margin)| Observation {
            team,
            opponent,
            weight,
            offense: margin,
            defense: 0.0,
        })
        .collect();
    if obs.is_empty() {
        return Err(SolveError::Empty);
    }
    let mut den = vec![0.0; n_teams];
    for o in &obs {
        den[o.team] += o.weight;
    }
    if let Some(t) = den.iter().position(|&d| d == 0.0) {
        return Err(SolveError::NoGames(t));
    }
    let margin = weighted_means(&obs, n_teams, |o| o.offense);
    let comp = components(n_teams, obs.iter().map(|o| (o.team, o.opponent)));
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let center = |r: &mut [f64]| {
        let means = component_means(r, &comp, n_comp);
        for (v, &c) in r.iter_mut().zip(&comp) {
            *v -= means[c];
        }
    };

    let mut rating = margin.clone();
    center(&mut rating);
    let mut residual = f64::INFINITY;
    for iteration in 1..=settings.max_iterations {
        let sos = weighted_means(&obs, n_teams, |o| rating[o.opponent]);
        let mut next: Vec<f64> = (0..n_teams)
            .map(|t| 0.5 * rating[t] + 0.5 * (margin[t] + sos[t]))
            .collect();
        center(&mut next);
        residual = rating.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rating = next;
        if residual < settings.tolerance {
            return Ok((rating, margin, iteration));
        }
    }
    Err(SolveError::NonConvergence {
        iterations: settings.max_iterations,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no observations")]
    Empty,
    #[error("team index {0} has no games")]
    NoGames(usize),
    #[error("league average is zero")]
    ZeroLeagueAverage,
    #[error("team index {0} reached a non-positive value")]
    Degenerate(usize),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

struct Indexed<'a> {
    teams: Vec<&'a TeamId>,
    position: BTreeMap<&'a TeamId, usize>,
}

impl<'a> Indexed<'a> {
    fn new(log: &'a GameLog) -> Self {
        let teams: Vec<&TeamId> = log.games_by_team().into_keys().collect();
        let position = teams.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        Indexed { teams, position }
    }
}

fn map_solve_error(err: SolveError, what: &str, idx: &Indexed<'_>) -> FeatureError {
    match err {
        SolveError::Empty => FeatureError::EmptyInput,
        SolveError::NoGames(t) => FeatureError::NoGames(idx.teams[t].clone()),
        SolveError::ZeroLeagueAverage => FeatureError::ZeroLeagueAverage(what.to_string()),
        SolveError::Degenerate(t) => FeatureError::DegenerateStat {
            stat: what.to_string(),
            team: idx.teams[t].clone(),
        },
        SolveError::NonConvergence { iterations, residual } => FeatureError::NonConvergence {
            what: what.to_string(),
            iterations,
            residual,
        },
    }
}

/// Per-game observations of one stat, with each team's recency weights.
fn observations(
    log: &GameLog,
    idx: &Indexed<'_>,
    w: &RecencyWeights,
    mut value: impl FnMut(usize) -> Result<(f64, f64)>,
) -> Result<Vec<Observation>> {
    let mut obs = Vec::with_capacity(log.len());
    for (team, games) in log.games_by_team() {
        let weights = w.weights(games.len());
        for (&i, weight) in games.iter().zip(weights) {
            let (offense, defense) = value(i)?;
            obs.push(Observation {
                team: idx.position[team],
                opponent: idx.position[&log.rows[i].opponent],
                weight,
                offense,
                defense,
            });
        }
    }
    Ok(obs)
}

/// Opponent-adjusted own (`stat`) and allowed (`stat_allowed`) values for
/// every stat in `schema.adjusted()`, per possession-normalized game.
pub fn adjusted_averages(
    log: &GameLog,
    as_of: NaiveDate,
    schema: &SportSchema,
    w: &RecencyWeights,
    settings: &SolverSettings,
) -> Result<BTreeMap<TeamId, TeamRepresentation>> {
    w.validate()?;
    let log = log.prior_to(as_of);
    if log.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let idx = Indexed::new(&log);
    let normalized = (0..log.len())
        .map(|i| normalize_per_possessions(&log.rows[i], schema))
        .collect::<Result<Vec<_>>>()?;
    let mut features = vec![StatVector::new(); idx.teams.len()];
    for stat in schema.adjusted() {
        let get = |i: usize| -> Result<f64> {
            normalized[i]
                .get(stat)
                .ok_or_else(|| FeatureError::SchemaMismatch(format!("unknown stat `{stat}`")))
        };
        let obs = observations(&log, &idx, w, |i| Ok((get(i)?, get(log.mirror[i])?)))?;
        let solved = solve_opponent_adjusted(&obs, idx.teams.len(), settings)
            .map_err(|e| map_solve_error(e, stat, &idx))?;
        for (t, fv) in features.iter_mut().enumerate() {
            fv.insert(stat.clone(), solved.offense[t]);
            fv.insert(allowed(stat), solved.defense[t]);
        }
    }
    Ok(idx
        .teams
        .iter()
        .zip(features)
        .map(|(team, features)| {
            let rep = TeamRepresentation {
                team: (*team).clone(),
                as_of,
                kind: RepresentationKind::AdjAvg,
                features,
            };
            ((*team).clone(), rep)
        })
        .collect())
}

pub const ADJ_OE: &str = "adj_oe";
pub const ADJ_DE: &str = "adj_de";

/// Adjusted offensive and defensive efficiency (points per 100 possessions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub adj_oe: f64,
    pub adj_de: f64,
}

impl Efficiency {
    pub fn from_representation(rep: &TeamRepresentation) -> Option<Efficiency> {
        Some(Efficiency {
            adj_oe: rep.features.get(ADJ_OE)?,
            adj_de: rep.features.get(ADJ_DE)?,
        })
    }
}

pub fn adjusted_efficiencies(
    log: &GameLog,
    as_of: NaiveDate,
    schema: &SportSchema,
    w: &RecencyWeights,
    settings: &SolverSettings,
) -> Result<BTreeMap<TeamId, TeamRepresentation>> {
    w.validate()?;
    let log = log.prior_to(as_of);
    if log.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let idx = Indexed::new(&log);
    let obs = observations(&log, &idx, w, |i| {
        let row = &log.rows[i];
        let poss = possessions(row, schema)?;
        if !(poss > 0.0) {
            return Err(FeatureError::ZeroPossessions {
                team: row.team.clone(),
                date: row.date,
                possessions: poss,
            });
        }
        Ok((100.0 * row.points_for / poss, 100.0 * row.points_against / poss))
    })?;
    let solved = solve_opponent_adjusted(&obs, idx.teams.len(), settings)
        .map_err(|e| map_solve_error(e, "efficiency", &idx))?;
    Ok(idx
        .teams
        .iter()
        .enumerate()
        .map(|(t, team)| {
            let features: StatVector = [(ADJ_OE, solved.offense[t]), (ADJ_DE, solved.defense[t])].into_iter().collect();
            let rep = TeamRepresentation {
                team: (*team).clone(),
                as_of,
                kind: RepresentationKind::AdjEff,
                features,
            };
            ((*team).clone(), rep)
        })
        .collect())
}

pub const SRS_RATING: &str = "srs";
pub const SRS_SOS: &str = "sos";
pub const SRS_MARGIN: &str = "margin";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrsRating {
    pub rating: f64,
    /// Strength of schedule, rating − margin.
    pub sos: f64,
    /// Weighted average scoring margin.
    pub margin: f64,
}

pub fn srs_weighted(
    log: &GameLog,
    as_of: NaiveDate,
    w: &RecencyWeights,
    settings: &SolverSettings,
) -> Result<BTreeMap<TeamId, SrsRating>> {
    w.validate()?;
    let log = log.prior_to(as_of);
    if log.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let idx = Indexed::new(&log);
    let obs = observations(&log, &idx, w, |i| {
        let r = &log.rows[i];
        Ok((r.points_for - r.points_against, 0.0))
    })?;
    let games: Vec<_> = obs.iter().map(|o| (o.team, o.opponent, o.weight, o.offense)).collect();
    let (rating, margin, _) =
        solve_weighted_srs(&games, idx.teams.len(), settings).map_err(|e| map_solve_error(e, "SRS", &idx))?;
    Ok(idx
        .teams
        .iter()
        .enumerate()
        .map(|(t, team)| {
            let r = SrsRating {
                rating: rating[t],
                sos: rating[t] - margin[t],
                margin: margin[t],
            };
            ((*team).clone(), r)
        })
        .collect())
}

impl SrsRating {
    pub fn to_representation(self, team: TeamId, as_of: NaiveDate) -> TeamRepresentation {
        TeamRepresentation {
            team,
            as_of,
            kind: RepresentationKind::Srs,
            features: [(SRS_RATING, self.rating), (SRS_SOS, self.sos), (SRS_MARGIN, self.margin)]
                .into_iter()
                .collect(),
        }
    }
}

/// Every requested representation of every team, as of one date.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    pub as_of: Option<NaiveDate>,
    pub reps: BTreeMap<RepresentationKind, BTreeMap<TeamId, TeamRepresentation>>,
}

impl Snapshot {
    pub fn get(&self, kind: RepresentationKind, team: &TeamId) -> Option<&TeamRepresentation> {
        self.reps.get(&kind)?.get(team)
    }

    /// Features of several kinds concatenated as `kind.name`.
    pub fn combined(&self, kinds: &[RepresentationKind], team: &TeamId) -> Option<StatVector> {
        let mut out = StatVector::new();
        for &kind in kinds {
            for (name, v) in self.get(kind, team)?.features.iter() {
                out.insert(format!("{}.{name}", kind.prefix()), v);
            }
        }
        Some(out)
    }
}

/// Feature-building settings shared by all representations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSettings {
    pub schema: SportSchema,
    pub weights: RecencyWeights,
    pub solver: SolverSettings,
}

/// Builds the requested representations from games before `as_of`. Teams
/// with no prior games are absent.
pub fn build_snapshot(
    log: &GameLog,
    as_of: NaiveDate,
    kinds: &BTreeSet<RepresentationKind>,
    settings: &FeatureSettings,
) -> Result<Snapshot> {
    let prior = log.prior_to(as_of);
    let mut snap = Snapshot {
        as_of: Some(as_of),
        reps: BTreeMap::new(),
    };
    if prior.is_empty() {
        return Ok(snap);
    }
    let (schema, w) = (&settings.schema, &settings.weights);
    let teams = prior.teams();
    for &kind in kinds {
        let reps = match kind {
            RepresentationKind::BasicAvg => teams
                .iter()
                .map(|t| Ok((t.clone(), basic_average_in(&prior, t, as_of, schema, w)?)))
                .collect::<Result<BTreeMap<_, _>>>()?,
            RepresentationKind::OppAvg => {
                let mut cache = BTreeMap::new();
                teams
                    .iter()
                    .map(|t| Ok((t.clone(), opponents_average_in(&prior, t, as_of, schema, w, &mut cache)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?
            }
            RepresentationKind::AdjAvg => adjusted_averages(&prior, as_of, schema, w, &settings.solver)?,
            RepresentationKind::AdjEff => adjusted_efficiencies(&prior, as_of, schema, w, &settings.solver)?,
            RepresentationKind::Srs => srs_weighted(&prior, as_of, w, &settings.solver)?
                .into_iter()
                .map(|(t, r)| (t.clone(), r.to_representation(t, as_of)))
                .collect(),
        };
        snap.reps.insert(kind, reps);
    }
    Ok(snap)
}
