//! Summary tables, categorization of correct picks and winnings-curve files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{
    peak_before_end, trough_to_peak, vegas_baseline_with_stake, Accuracy, Backtest, BaselineReport, LedgerEntry,
    MatchId, MatchRecord, WinningsCurve,
};
use crate::money::Money;
use crate::odds::BetCategory;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("ledger and match set disagree: {0}")]
    MismatchedMatches(String),
    #[error("nothing to report: no backtests and no baseline requested")]
    NothingToReport,
}

/// Four decimals, truncated; `-` when undefined.
pub fn format_accuracy(acc: Option<Accuracy>) -> String {
    match acc {
        None => "-".into(),
        Some(r) => {
            let scaled = (*r.numer() as u128 * 10_000) / *r.denom() as u128;
            format!("{}.{:04}", scaled / 10_000, scaled % 10_000)
        }
    }
}

/// Two decimals rounded half-up with trailing zeros dropped, e.g. `0.4`.
pub fn format_rate(rate: Ratio<u64>) -> String {
    let (n, d) = (*rate.numer() as u128, *rate.denom() as u128);
    let hundredths = (n * 200 + d) / (2 * d);
    let s = format!("{}.{:02}", hundredths / 100, hundredths % 100);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Regular,
    Post,
    Combined,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Regular, Phase::Post, Phase::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Regular => "regular",
            Phase::Post => "post",
            Phase::Combined => "combined",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(Phase::Regular),
            "post" => Ok(Phase::Post),
            "combined" => Ok(Phase::Combined),
            other => Err(format!("unknown phase `{other}` (expected regular, post or combined)")),
        }
    }
}

/// Regular season runs until the day before `post_season_start`; without a
/// boundary everything is regular season.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeasonSplit {
    pub post_season_start: Option<NaiveDate>,
}

impl SeasonSplit {
    pub fn phase_of(&self, date: NaiveDate) -> Phase {
        match self.post_season_start {
            Some(start) if date >= start => Phase::Post,
            _ => Phase::Regular,
        }
    }

    pub fn contains(&self, phase: Phase, date: NaiveDate) -> bool {
        phase == Phase::Combined || self.phase_of(date) == phase
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseTally {
    pub bets: u64,
    pub correct: u64,
    pub payout: Money,
}

impl PhaseTally {
    fn empty() -> Self {
        PhaseTally {
            bets: 0,
            correct: 0,
            payout: Money::zero(),
        }
    }

    pub fn accuracy(&self) -> Option<Accuracy> {
        (self.bets > 0).then(|| Ratio::new(self.correct, self.bets))
    }

    fn add(&mut self, e: &LedgerEntry) {
        self.bets += 1;
        self.correct += e.outcome.category.is_correct() as u64;
        self.payout += &e.outcome.delta;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeasonSummary {
    pub regular: PhaseTally,
    pub post: PhaseTally,
    pub combined: PhaseTally,
}

impl SeasonSummary {
    pub fn get(&self, phase: Phase) -> &PhaseTally {
        match phase {
            Phase::Regular => &self.regular,
            Phase::Post => &self.post,
            Phase::Combined => &self.combined,
        }
    }
}

pub fn summarize(entries: &[LedgerEntry], split: &SeasonSplit) -> SeasonSummary {
    let mut s = SeasonSummary {
        regular: PhaseTally::empty(),
        post: PhaseTally::empty(),
        combined: PhaseTally::empty(),
    };
    for e in entries {
        match split.phase_of(e.date) {
            Phase::Post => s.post.add(e),
            _ => s.regular.add(e),
        }
        s.combined.add(e);
    }
    s
}

/// One predictor's correct picks by money-line category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategorizationRow {
    pub predictor: String,
    pub bets: u64,
    pub correct_favs: u64,
    pub correct_dogs: u64,
    pub correct_pickems: u64,
    pub pickem_total: u64,
}

impl CategorizationRow {
    pub fn total_correct(&self) -> u64 {
        self.correct_favs + self.correct_dogs + self.correct_pickems
    }

    /// Zero when there were no Pick 'ems.
    pub fn pickem_rate(&self) -> Ratio<u64> {
        if self.pickem_total == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(self.correct_pickems, self.pickem_total)
        }
    }

    /// `2 (0.4)`, or just the count when nothing was correct.
    pub fn pickem_cell(&self) -> String {
        if self.correct_pickems == 0 {
            "0".into()
        } else {
            format!("{} ({})", self.correct_pickems, format_rate(self.pickem_rate()))
        }
    }
}

/// `entries` and `matches` must describe the same set of matches.
pub fn categorize(
    predictor: &str,
    entries: &[LedgerEntry],
    matches: &[MatchRecord],
) -> Result<CategorizationRow, ReportError> {
    let by_id: BTreeMap<&MatchId, &MatchRecord> = matches.iter().map(|m| (&m.match_id, m)).collect();
    let entry_ids: BTreeSet<&MatchId> = entries.iter().map(|e| &e.match_id).collect();
    if entry_ids.len() != entries.len() {
        return Err(ReportError::MismatchedMatches(format!("{predictor}: duplicate ledger entries")));
    }
    if let Some(missing) = entry_ids.iter().find(|id| !by_id.contains_key(**id)) {
        return Err(ReportError::MismatchedMatches(format!(
            "{predictor}: ledger has unknown match {missing}"
        )));
    }
    if let Some(missing) = by_id.keys().find(|id| !entry_ids.contains(**id)) {
        return Err(ReportError::MismatchedMatches(format!(
            "{predictor}: no ledger entry for match {missing}"
        )));
    }
    let mut row = CategorizationRow {
        predictor: predictor.to_string(),
        bets: entries.len() as u64,
        correct_favs: 0,
        correct_dogs: 0,
        correct_pickems: 0,
        pickem_total: matches.iter().filter(|m| m.line.is_pickem()).count() as u64,
    };
    for e in entries {
        match e.outcome.category {
            BetCategory::FavCorrect => row.correct_favs += 1,
            BetCategory::DogCorrect => row.correct_dogs += 1,
            BetCategory::PickemCorrect => row.correct_pickems += 1,
            BetCategory::Incorrect => {}
        }
    }
    Ok(row)
}

/// Aligned plain-text table; the first column is left-aligned, the rest right-aligned.
pub fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn render_baseline(report: &BaselineReport, phase: Phase) -> String {
    let mut out = format!(
        "Follow-the-favorite baseline ({phase}): {} matches, {} Pick 'ems\n\n",
        report.n_matches, report.n_pickems
    );
    let header = strings([
        "Accuracy",
        "Pay-out",
        "Best Acc.",
        "Pay-out",
        "Exp. Acc.",
        "Pay-out",
        "Worst Acc.",
        "Pay-out",
    ]);
    let row = vec![
        format_accuracy(report.acc_without_pickems),
        report.payout_without_pickems.to_string(),
        format_accuracy(report.best_acc),
        report.best_payout.to_string(),
        format_accuracy(report.expected_acc),
        report.expected_payout.to_string(),
        format_accuracy(report.worst_acc),
        report.worst_payout.to_string(),
    ];
    out.push_str("Accuracy and pay-out without Pick 'ems, then best/expected/worst with them\n");
    out.push_str(&render_table(&header, &[row]));
    out
}

pub fn render_categorization(rows: &[(CategorizationRow, PhaseTally)], phase: Phase) -> String {
    let pickems = rows.first().map_or(0, |(r, _)| r.pickem_total);
    let mut out = format!("Correct picks by money-line category ({phase})\n\n");
    let header = vec![
        "Predictor".to_string(),
        "Accuracy".into(),
        "Pay-out".into(),
        "Favs".into(),
        "Dogs".into(),
        format!("Pick 'ems (of {pickems})"),
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(r, t)| {
            vec![
                r.predictor.clone(),
                format_accuracy(t.accuracy()),
                t.payout.to_string(),
                r.correct_favs.to_string(),
                r.correct_dogs.to_string(),
                r.pickem_cell(),
            ]
        })
        .collect();
    out.push_str(&render_table(&header, &body));
    out
}

fn write_categorization_csv<W: io::Write>(rows: &[(CategorizationRow, PhaseTally)], phase: Phase, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "predictor",
        "phase",
        "bets",
        "correct",
        "accuracy",
        "payout",
        "correct_favs",
        "correct_dogs",
        "correct_pickems",
        "pickem_total",
        "pickem_rate",
    ])?;
    for (r, t) in rows {
        w.write_record([
            r.predictor.clone(),
            phase.to_string(),
            r.bets.to_string(),
            r.total_correct().to_string(),
            format_accuracy(t.accuracy()),
            t.payout.to_string(),
            r.correct_favs.to_string(),
            r.correct_dogs.to_string(),
            r.correct_pickems.to_string(),
            r.pickem_total.to_string(),
            format_rate(r.pickem_rate()),
        ])?;
    }
    w.flush()
}

/// Curve of the entries in one phase, restarting from zero.
pub fn phase_curve(entries: &[LedgerEntry], split: &SeasonSplit, phase: Phase) -> WinningsCurve {
    let mut points: Vec<(NaiveDate, Money)> = Vec::new();
    let mut running = Money::zero();
    for e in entries.iter().filter(|e| split.contains(phase, e.date)) {
        running += &e.outcome.delta;
        match points.last_mut() {
            Some((d, v)) if *d == e.date => *v = running.clone(),
            _ => points.push((e.date, running.clone())),
        }
    }
    WinningsCurve::from_points(points)
}

fn render_summary(runs: &[PredictorRun], split: &SeasonSplit, phase: Phase, stake: &Money) -> String {
    let mut out = format!("Season summary (stake {stake} per bet", stake = stake);
    match split.post_season_start {
        Some(d) => out.push_str(&format!(", post-season from {d})\n\n")),
        None => out.push_str(", no post-season boundary)\n\n"),
    }
    let mut header = vec!["Predictor".to_string()];
    for p in Phase::ALL {
        header.push(format!("{p} bets"));
        header.push(format!("{p} acc."));
        header.push(format!("{p} pay-out"));
    }
    let body: Vec<Vec<String>> = runs
        .iter()
        .map(|run| {
            let s = summarize(&run.backtest.entries, split);
            let mut row = vec![run.id.clone()];
            for p in Phase::ALL {
                let t = s.get(p);
                row.push(t.bets.to_string());
                row.push(format_accuracy(t.accuracy()));
                row.push(t.payout.to_string());
            }
            row
        })
        .collect();
    out.push_str(&render_table(&header, &body));

    out.push_str(&format!("\nWinnings-curve extremes ({phase})\n\n"));
    let header = strings(["Predictor", "Trough", "Peak after", "Gain", "Best exit", "Exit value", "Forfeited"]);
    let body: Vec<Vec<String>> = runs
        .iter()
        .map(|run| {
            let curve = phase_curve(&run.backtest.entries, split, phase);
            let mut row = vec![run.id.clone()];
            match (trough_to_peak(&curve), peak_before_end(&curve)) {
                (Ok(tp), Ok(pe)) => {
                    row.push(format!("{} {}", tp.trough.date, tp.trough.value));
                    row.push(format!("{} {}", tp.peak.date, tp.peak.value));
                    row.push(tp.gain.to_string());
                    row.push(pe.peak.date.to_string());
                    row.push(pe.peak.value.to_string());
                    row.push(pe.forfeited.to_string());
                }
                _ => row.extend(std::iter::repeat_n("-".to_string(), 6)),
            }
            row
        })
        .collect();
    out.push_str(&render_table(&header, &body));
    out
}

/// A predictor's id (used in file names) and its full-season backtest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorRun {
    pub id: String,
    pub backtest: Backtest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportFormats {
    /// Also write the baseline as CSV.
    pub csv: bool,
}

pub struct ReportInput<'a> {
    pub matches: &'a [MatchRecord],
    pub runs: &'a [PredictorRun],
    pub split: SeasonSplit,
    pub stake: Money,
    pub baseline: bool,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    let io_err = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(contents).map_err(io_err)?;
    Ok(())
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// Writes the report files for one phase into `out_dir` and returns their
/// paths in write order. Output depends only on the inputs.
pub fn emit_reports(
    out_dir: &Path,
    input: &ReportInput<'_>,
    phase: Phase,
    formats: ReportFormats,
) -> Result<Vec<PathBuf>, ReportError> {
    if input.runs.is_empty() && !input.baseline {
        return Err(ReportError::NothingToReport);
    }
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let split = &input.split;
    let matches: Vec<MatchRecord> = input
        .matches
        .iter()
        .filter(|m| split.contains(phase, m.date))
        .cloned()
        .collect();
    let mut written = Vec::new();
    let mut emit = |name: String, contents: Vec<u8>| -> Result<(), ReportError> {
        let path = out_dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };

    if input.baseline {
        let report = vegas_baseline_with_stake(&matches, &input.stake);
        emit("baseline.txt".into(), render_baseline(&report, phase).into_bytes())?;
        if formats.csv {
            emit("baseline.csv".into(), to_bytes(|b| report.write_csv(b)))?;
        }
    }

    if !input.runs.is_empty() {
        let mut rows = Vec::with_capacity(input.runs.len());
        for run in input.runs {
            let entries: Vec<LedgerEntry> = run
                .backtest
                .entries
                .iter()
                .filter(|e| split.contains(phase, e.date))
                .cloned()
                .collect();
            let row = categorize(&run.id, &entries, &matches)?;
            let tally = summarize(&entries, split).combined;
            rows.push((row, tally));
        }
        emit("categorization.txt".into(), render_categorization(&rows, phase).into_bytes())?;
        emit("categorization.csv".into(), to_bytes(|b| write_categorization_csv(&rows, phase, b)))?;
        emit(
            "summary.txt".into(),
            render_summary(input.runs, split, phase, &input.stake).into_bytes(),
        )?;
        for run in input.runs {
            let curve = phase_curve(&run.backtest.entries, split, phase);
            emit(format!("{}_{phase}.csv", run.id), to_bytes(|b| curve.write_csv(b)))?;
        }
    }
    Ok(written)
}
