//! Season configuration, CSV readers and the schedule/line join.
//!
//! Input files (header row required, comma separated, ISO dates):
//!
//! - lines: `date,away_team,home_team,fav_team,dog_team,fav_line,dog_line,book_id[,is_pickem]`
//! - schedule: `match_id,date,home_team,away_team,winner,home_score,away_score[,neutral]`
//! - game log: `date,team,opponent,venue,points_for,points_against,<schema stats...>`

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{join_rows, RowError};
use crate::features::{
    FeatureError, GameLog, GameLogRow, RecencyWeights, RepresentationKind, SolverSettings, SportSchema, StatVector,
    Venue,
};
use crate::ledger::{MatchId, MatchRecord};
use crate::money::Money;
use crate::odds::{canonicalize, conservative_merge, MoneyLine, RawQuote, TeamId, STAKE};
use crate::predictors::KpParams;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{0}")]
    Unreadable(RowError),
    #[error("game log rejected: {0}")]
    GameLog(RowError),
}

/// Maps alternative spellings to canonical team names. Unknown names map to themselves.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TeamAliases(BTreeMap<String, String>);

impl TeamAliases {
    pub fn from_pairs<A: Into<String>, B: Into<String>>(pairs: impl IntoIterator<Item = (A, B)>) -> Self {
        TeamAliases(pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect())
    }

    pub fn canonical(&self, name: &str) -> TeamId {
        let name = name.trim();
        TeamId::new(self.0.get(name).map_or(name, String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipUnit {
    /// The first `count` distinct match dates.
    Days,
    /// Everything within `7 × count` days of the first match date.
    Weeks,
}

/// Opening stretch of the season that is not bet on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRule {
    pub unit: SkipUnit,
    pub count: u32,
}

impl Default for SkipRule {
    fn default() -> Self {
        SkipRule {
            unit: SkipUnit::Days,
            count: 0,
        }
    }
}

impl SkipRule {
    /// First date that is not skipped, given all match dates.
    pub fn first_kept_date(&self, dates: &BTreeSet<NaiveDate>) -> Option<NaiveDate> {
        let first = *dates.first()?;
        match self.unit {
            SkipUnit::Days => dates.iter().nth(self.count as usize).copied(),
            SkipUnit::Weeks => Some(first + Duration::days(7 * self.count as i64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFiles {
    pub schedule: PathBuf,
    pub lines: PathBuf,
    /// Needed only by feature-based predictors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game_log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Kp,
    Srs,
    Nb,
    External,
}

/// One predictor entry. Parameters that do not apply to `kind` are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    pub id: String,
    pub kind: PredictorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pyth_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_advantage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_bonus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<RepresentationKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

pub const DEFAULT_NB_FEATURES: [RepresentationKind; 2] = [RepresentationKind::BasicAvg, RepresentationKind::Srs];

impl PredictorSpec {
    pub fn kp_params(&self) -> KpParams {
        let d = KpParams::default();
        KpParams {
            pyth_exponent: self.pyth_exponent.unwrap_or(d.pyth_exponent),
            home_advantage: self.home_advantage.unwrap_or(d.home_advantage),
        }
    }

    pub fn home_bonus(&self) -> f64 {
        self.home_bonus.unwrap_or(0.0)
    }

    pub fn kernel(&self) -> bool {
        self.kernel.unwrap_or(true)
    }

    pub fn nb_features(&self) -> Vec<RepresentationKind> {
        self.features.clone().unwrap_or_else(|| DEFAULT_NB_FEATURES.to_vec())
    }

    /// Representations this predictor reads.
    pub fn representations(&self) -> Vec<RepresentationKind> {
        match self.kind {
            PredictorKind::Kp => vec![RepresentationKind::AdjEff],
            PredictorKind::Srs => vec![RepresentationKind::Srs],
            PredictorKind::Nb => self.nb_features(),
            PredictorKind::External => Vec::new(),
        }
    }

    /// Copy with every default filled in, for the run report.
    pub fn resolved(&self) -> PredictorSpec {
        let mut out = PredictorSpec {
            id: self.id.clone(),
            kind: self.kind,
            pyth_exponent: None,
            home_advantage: None,
            home_bonus: None,
            kernel: None,
            features: None,
            file: self.file.clone(),
        };
        match self.kind {
            PredictorKind::Kp => {
                let p = self.kp_params();
                out.pyth_exponent = Some(p.pyth_exponent);
                out.home_advantage = Some(p.home_advantage);
            }
            PredictorKind::Srs => out.home_bonus = Some(self.home_bonus()),
            PredictorKind::Nb => {
                out.kernel = Some(self.kernel());
                out.features = Some(self.nb_features());
            }
            PredictorKind::External => {}
        }
        out
    }

    fn validate(&self) -> Result<(), String> {
        let id_ok = !self.id.is_empty()
            && self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !id_ok {
            return Err(format!("predictor id `{}` must be non-empty [A-Za-z0-9_-]", self.id));
        }
        let kp = self.pyth_exponent.is_some() || self.home_advantage.is_some();
        let misplaced = match self.kind {
            PredictorKind::Kp => self.home_bonus.is_some() || self.kernel.is_some() || self.features.is_some() || self.file.is_some(),
            PredictorKind::Srs => kp || self.kernel.is_some() || self.features.is_some() || self.file.is_some(),
            PredictorKind::Nb => kp || self.home_bonus.is_some() || self.file.is_some(),
            PredictorKind::External => kp || self.home_bonus.is_some() || self.kernel.is_some() || self.features.is_some(),
        };
        if misplaced {
            return Err(format!("predictor `{}` has parameters that do not apply to {:?}", self.id, self.kind));
        }
        match self.kind {
            PredictorKind::Kp => self.kp_params().validate().map_err(|e| format!("predictor `{}`: {e}", self.id)),
            PredictorKind::Srs if !self.home_bonus().is_finite() => Err(format!("predictor `{}`: home_bonus", self.id)),
            PredictorKind::Nb if self.nb_features().is_empty() => {
                Err(format!("predictor `{}` needs at least one feature set", self.id))
            }
            PredictorKind::External if self.file.is_none() => Err(format!("predictor `{}` needs a `file`", self.id)),
            _ => Ok(()),
        }
    }
}

/// Stake in dollars: an integer or a decimal string such as `"12.50"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StakeValue {
    Dollars(i64),
    Decimal(String),
}

impl StakeValue {
    pub fn to_money(&self) -> Result<Money, String> {
        match self {
            StakeValue::Dollars(d) => Ok(Money::dollars(*d)),
            StakeValue::Decimal(s) => Money::parse_decimal(s).ok_or_else(|| format!("stake `{s}` is not a decimal")),
        }
    }
}

fn default_sport() -> String {
    "basketball".into()
}

fn default_stake() -> StakeValue {
    StakeValue::Dollars(STAKE)
}

fn default_true() -> bool {
    true
}

/// The whole run, as read from one TOML file. Paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonConfig {
    /// Schema preset (`basketball` or `football`), unless `schema` is given.
    #[serde(default = "default_sport")]
    pub sport: String,
    #[serde(default = "default_stake")]
    pub stake: StakeValue,
    /// First post-season date, `"YYYY-MM-DD"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_season_start: Option<NaiveDate>,
    /// Emit the follow-the-favorite baseline.
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default)]
    pub skip: SkipRule,
    pub files: DataFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SportSchema>,
    #[serde(default)]
    pub recency: RecencyWeights,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub aliases: TeamAliases,
    #[serde(default)]
    pub predictors: Vec<PredictorSpec>,
}

impl SeasonConfig {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let config: SeasonConfig = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn schema(&self) -> Result<SportSchema, IngestError> {
        match &self.schema {
            Some(s) => Ok(s.clone()),
            None => SportSchema::preset(&self.sport)
                .ok_or_else(|| IngestError::Config(format!("unknown sport `{}`", self.sport))),
        }
    }

    pub fn stake_money(&self) -> Result<Money, IngestError> {
        self.stake.to_money().map_err(IngestError::Config)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let cfg = |m: String| IngestError::Config(m);
        let stake = self.stake_money()?;
        if stake <= 0 {
            return Err(cfg(format!("stake must be positive, got {stake}")));
        }
        self.schema()?.validate().map_err(|e| cfg(e.to_string()))?;
        self.recency.validate().map_err(|e| cfg(e.to_string()))?;
        if !(self.solver.tolerance > 0.0 && self.solver.max_iterations > 0) {
            return Err(cfg("solver tolerance and max_iterations must be positive".into()));
        }
        let mut ids = BTreeSet::new();
        for p in &self.predictors {
            p.validate().map_err(cfg)?;
            if !ids.insert(p.id.as_str()) {
                return Err(cfg(format!("duplicate predictor id `{}`", p.id)));
            }
            if !p.representations().is_empty() && self.files.game_log.is_none() {
                return Err(cfg(format!("predictor `{}` needs `files.game_log`", p.id)));
            }
        }
        Ok(())
    }

    /// The configuration with all defaults written out.
    pub fn effective(&self) -> Result<SeasonConfig, IngestError> {
        let mut out = self.clone();
        out.schema = Some(self.schema()?);
        out.predictors = self.predictors.iter().map(PredictorSpec::resolved).collect();
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }
}

/// Named text of one input file.
#[derive(Debug, Clone, Copy)]
pub struct Source<'a> {
    pub name: &'a str,
    pub text: &'a str,
}

struct Table<'a> {
    name: &'a str,
    header: csv::StringRecord,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl<'a> Table<'a> {
    fn read(src: Source<'a>, errors: &mut Vec<RowError>) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(src.text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| IngestError::Unreadable(RowError::new(src.name, 1, e.to_string())))?
            .clone();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i as u64 + 2;
            match rec {
                Ok(r) if r.len() != header.len() => errors.push(RowError::new(
                    src.name,
                    r.position().map_or(line, |p| p.line()),
                    format!("expected {} fields, found {}", header.len(), r.len()),
                )),
                Ok(r) => rows.push((r.position().map_or(line, |p| p.line()), r)),
                Err(e) => errors.push(RowError::new(src.name, line, e.to_string())),
            }
        }
        Ok(Table {
            name: src.name,
            header,
            rows,
        })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize, IngestError> {
        self.column(name).ok_or_else(|| IngestError::MissingColumn {
            file: self.name.to_string(),
            column: name.to_string(),
        })
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("bad date `{s}` (expected YYYY-MM-DD)"))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad {what} `{s}`"))
}

fn parse_flag(s: &str, what: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "n" => Ok(false),
        "1" | "true" | "yes" | "y" => Ok(true),
        _ => Err(format!("bad {what} flag `{s}`")),
    }
}

fn non_empty(s: &str, what: &str) -> Result<(), String> {
    if s.is_empty() {
        Err(format!("empty {what}"))
    } else {
        Ok(())
    }
}

type Key = (NaiveDate, TeamId, TeamId);

/// A quote keyed by (date, home, away).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatedQuote {
    pub line: u64,
    pub date: NaiveDate,
    pub home: TeamId,
    pub away: TeamId,
    pub quote: RawQuote,
}

pub fn read_lines(src: Source<'_>, aliases: &TeamAliases) -> Result<(Vec<DatedQuote>, Vec<RowError>), IngestError> {
    let mut errors = Vec::new();
    let t = Table::read(src, &mut errors)?;
    let cols = ["date", "away_team", "home_team", "fav_team", "dog_team", "fav_line", "dog_line", "book_id"]
        .map(|c| t.require(c));
    let [date, away, home, fav, dog, fav_line, dog_line, book] = {
        let mut out = [0usize; 8];
        for (o, c) in out.iter_mut().zip(cols) {
            *o = c?;
        }
        out
    };
    let pickem = t.column("is_pickem");
    let mut quotes = Vec::new();
    for (line, r) in &t.rows {
        let parsed = (|| -> Result<DatedQuote, String> {
            for (c, what) in [(home, "home_team"), (away, "away_team"), (fav, "fav_team"), (dog, "dog_team"), (book, "book_id")] {
                non_empty(&r[c], what)?;
            }
            let home_team = aliases.canonical(&r[home]);
            let away_team = aliases.canonical(&r[away]);
            let mut quote = RawQuote::new(
                &r[book],
                aliases.canonical(&r[fav]),
                aliases.canonical(&r[dog]),
                parse_num(&r[fav_line], "fav_line")?,
                parse_num(&r[dog_line], "dog_line")?,
            );
            quote.pickem = match pickem {
                Some(c) => parse_flag(&r[c], "is_pickem")?,
                None => false,
            };
            let teams = BTreeSet::from([&quote.fav_team, &quote.dog_team]);
            if teams != BTreeSet::from([&home_team, &away_team]) {
                return Err(format!(
                    "quote teams {} / {} do not match {} at {}",
                    quote.fav_team, quote.dog_team, away_team, home_team
                ));
            }
            Ok(DatedQuote {
                line: *line,
                date: parse_date(&r[date])?,
                home: home_team,
                away: away_team,
                quote,
            })
        })();
        match parsed {
            Ok(q) => quotes.push(q),
            Err(msg) => errors.push(RowError::new(t.name, *line, msg)),
        }
    }
    Ok((quotes, errors))
}

/// One parsed, played schedule row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleRow {
    pub line: u64,
    pub match_id: MatchId,
    pub date: NaiveDate,
    pub home: TeamId,
    pub away: TeamId,
    pub neutral: bool,
    pub winner: TeamId,
    pub scores: Option<(u32, u32)>,
}

/// Returns parsed rows, row errors and the number of data rows read.
pub fn read_schedule(
    src: Source<'_>,
    aliases: &TeamAliases,
) -> Result<(Vec<ScheduleRow>, Vec<RowError>, u64), IngestError> {
    let mut errors = Vec::new();
    let t = Table::read(src, &mut errors)?;
    let total = (t.rows.len() + errors.len()) as u64;
    let id = t.require("match_id")?;
    let date = t.require("date")?;
    let home = t.require("home_team")?;
    let away = t.require("away_team")?;
    let winner = t.require("winner")?;
    let home_score = t.require("home_score")?;
    let away_score = t.require("away_score")?;
    let neutral = t.column("neutral");
    let mut rows = Vec::new();
    for (line, r) in &t.rows {
        let parsed = (|| -> Result<ScheduleRow, String> {
            non_empty(&r[id], "match_id")?;
            non_empty(&r[home], "home_team")?;
            non_empty(&r[away], "away_team")?;
            let h = aliases.canonical(&r[home]);
            let a = aliases.canonical(&r[away]);
            let scores = match (&r[home_score], &r[away_score]) {
                ("", "") => None,
                (hs, as_) => Some((parse_num(hs, "home_score")?, parse_num(as_, "away_score")?)),
            };
            let winner = if r[winner].is_empty() {
                match scores {
                    Some((hs, as_)) if hs > as_ => h.clone(),
                    Some((hs, as_)) if as_ > hs => a.clone(),
                    Some(_) => return Err("tied matches cannot be settled".into()),
                    None => return Err("no result (winner and scores empty)".into()),
                }
            } else {
                aliases.canonical(&r[winner])
            };
            Ok(ScheduleRow {
                line: *line,
                match_id: MatchId::new(&r[id]),
                date: parse_date(&r[date])?,
                home: h,
                away: a,
                neutral: match neutral {
                    Some(c) => parse_flag(&r[c], "neutral")?,
                    None => false,
                },
                winner,
                scores,
            })
        })();
        match parsed {
            Ok(row) => rows.push(row),
            Err(msg) => errors.push(RowError::new(t.name, *line, msg)),
        }
    }
    Ok((rows, errors, total))
}

fn parse_venue(s: &str) -> Result<Venue, String> {
    match s.to_ascii_lowercase().as_str() {
        "home" | "h" => Ok(Venue::Home),
        "away" | "a" | "@" => Ok(Venue::Away),
        "neutral" | "n" => Ok(Venue::Neutral),
        _ => Err(format!("bad venue `{s}` (expected home, away or neutral)")),
    }
}

/// Parses and validates a game log. Unparseable rows are collected; a row
/// set that fails pairing validation is rejected as a whole.
pub fn read_game_log(
    src: Source<'_>,
    schema: &SportSchema,
    aliases: &TeamAliases,
) -> Result<(GameLog, Vec<RowError>), IngestError> {
    let mut errors = Vec::new();
    let t = Table::read(src, &mut errors)?;
    let date = t.require("date")?;
    let team = t.require("team")?;
    let opp = t.require("opponent")?;
    let venue = t.require("venue")?;
    let pf = t.require("points_for")?;
    let pa = t.require("points_against")?;
    let stat_cols: Vec<(usize, &String)> = schema
        .stats
        .iter()
        .map(|s| t.require(s).map(|c| (c, s)))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (line, r) in &t.rows {
        let parsed = (|| -> Result<GameLogRow, String> {
            non_empty(&r[team], "team")?;
            non_empty(&r[opp], "opponent")?;
            let mut stats = StatVector::new();
            for &(c, name) in &stat_cols {
                stats.insert(name.clone(), parse_num::<f64>(&r[c], name)?);
            }
            Ok(GameLogRow {
                date: parse_date(&r[date])?,
                team: aliases.canonical(&r[team]),
                opponent: aliases.canonical(&r[opp]),
                venue: parse_venue(&r[venue])?,
                stats,
                points_for: parse_num(&r[pf], "points_for")?,
                points_against: parse_num(&r[pa], "points_against")?,
            })
        })();
        match parsed {
            Ok(row) => {
                rows.push(row);
                lines.push(*line);
            }
            Err(msg) => errors.push(RowError::new(t.name, *line, msg)),
        }
    }
    let log = GameLog::new(rows).map_err(|e| match e {
        FeatureError::InvalidRow { index, reason } => IngestError::GameLog(RowError::new(t.name, lines[index], reason)),
        other => IngestError::GameLog(RowError::new(t.name, 0, other.to_string())),
    })?;
    Ok((log, errors))
}

/// Where every schedule row went. `matched + skipped + unquoted + rejected = schedule_rows`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JoinReport {
    pub schedule_rows: u64,
    pub matched: u64,
    /// Joined but inside the opening skip window.
    pub skipped: u64,
    pub unquoted: u64,
    pub rejected: u64,
    /// (date, home, away) keys quoted by some book but absent from the schedule.
    pub unplayed_quotes: u64,
    /// Every row-level problem in any input file.
    pub errors: Vec<RowError>,
}

impl JoinReport {
    pub fn is_conserved(&self) -> bool {
        self.matched + self.skipped + self.unquoted + self.rejected == self.schedule_rows
    }
}

impl fmt::Display for JoinReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "schedule rows:   {}", self.schedule_rows)?;
        writeln!(f, "matched:         {}", self.matched)?;
        writeln!(f, "skipped:         {}", self.skipped)?;
        writeln!(f, "unquoted:        {}", self.unquoted)?;
        writeln!(f, "rejected:        {}", self.rejected)?;
        writeln!(f, "unplayed quotes: {}", self.unplayed_quotes)?;
        writeln!(f, "row errors:      {}", self.errors.len())?;
        if !self.errors.is_empty() {
            writeln!(f, "{}", join_rows(&self.errors))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Matches to bet on, in schedule order.
    pub matches: Vec<MatchRecord>,
    /// Joined matches inside the skip window.
    pub skipped: Vec<MatchRecord>,
    pub game_log: Option<GameLog>,
    pub report: JoinReport,
}

/// Reads all inputs and joins schedule rows to merged lines on (date, home, away).
pub fn ingest_and_join(
    schedule: Source<'_>,
    lines: Source<'_>,
    game_log: Option<Source<'_>>,
    config: &SeasonConfig,
) -> Result<Ingested, IngestError> {
    let aliases = &config.aliases;
    let (sched, mut sched_errors, total) = read_schedule(schedule, aliases)?;
    let (quotes, quote_errors) = read_lines(lines, aliases)?;
    let mut report = JoinReport {
        schedule_rows: total,
        rejected: sched_errors.len() as u64,
        ..JoinReport::default()
    };

    // Canonicalize and merge quotes per key.
    let mut errors = quote_errors;
    let mut by_key: BTreeMap<Key, Vec<(u64, MoneyLine)>> = BTreeMap::new();
    for q in quotes {
        match canonicalize(&q.quote) {
            Ok(line) => by_key.entry((q.date, q.home, q.away)).or_default().push((q.line, line)),
            Err(e) => errors.push(RowError::new(lines.name, q.line, e.to_string())),
        }
    }
    let mut merged: BTreeMap<Key, Result<MoneyLine, String>> = BTreeMap::new();
    for (key, group) in by_key {
        let lines_only: Vec<MoneyLine> = group.iter().map(|(_, l)| l.clone()).collect();
        let result = conservative_merge(&lines_only).map_err(|e| {
            let at: Vec<String> = group.iter().map(|(l, _)| l.to_string()).collect();
            format!("quotes on lines {} cannot be merged: {e}", at.join(", "))
        });
        merged.insert(key, result);
    }

    let mut seen_ids = BTreeSet::new();
    let mut seen_keys = BTreeSet::new();
    let mut joined = Vec::new();
    for row in sched {
        let key: Key = (row.date, row.home.clone(), row.away.clone());
        let mut reject = |msg: String| sched_errors.push(RowError::new(schedule.name, row.line, msg));
        if !seen_ids.insert(row.match_id.clone()) {
            reject(format!("duplicate match_id `{}`", row.match_id));
            continue;
        }
        if !seen_keys.insert(key.clone()) {
            reject(format!("duplicate match {} at {} on {}", row.away, row.home, row.date));
            continue;
        }
        match merged.get(&key) {
            None => {
                log::debug!("{}: no quote for {}", schedule.name, row.match_id);
                report.unquoted += 1;
            }
            Some(Err(msg)) => reject(msg.clone()),
            Some(Ok(line)) => {
                let rec = MatchRecord::new(
                    row.match_id.clone(),
                    row.date,
                    row.home.clone(),
                    row.away.clone(),
                    row.neutral,
                    row.winner.clone(),
                    row.scores,
                    line.clone(),
                );
                match rec {
                    Ok(m) => joined.push(m),
                    Err(e) => reject(e.to_string()),
                }
            }
        }
    }
    report.rejected = sched_errors.len() as u64;
    report.unplayed_quotes = merged.keys().filter(|k| !seen_keys.contains(*k)).count() as u64;

    let dates: BTreeSet<NaiveDate> = seen_keys.iter().map(|k| k.0).collect();
    let (matches, skipped): (Vec<MatchRecord>, Vec<MatchRecord>) = match config.skip.first_kept_date(&dates) {
        Some(first) => joined.into_iter().partition(|m| m.date >= first),
        None => (Vec::new(), joined),
    };
    report.matched = matches.len() as u64;
    report.skipped = skipped.len() as u64;

    let game_log = match game_log {
        Some(src) => {
            let (log, log_errors) = read_game_log(src, &config.schema()?, aliases)?;
            errors.extend(log_errors);
            Some(log)
        }
        None => None,
    };
    sched_errors.extend(errors);
    report.errors = sched_errors;
    debug_assert!(report.is_conserved());
    Ok(Ingested {
        matches,
        skipped,
        game_log,
        report,
    })
}

/// Reads a configured file relative to `base`.
pub fn read_input(base: &Path, file: &Path) -> Result<String, IngestError> {
    let path = base.join(file);
    fs::read_to_string(&path).map_err(|source| IngestError::Io { path, source })
}
