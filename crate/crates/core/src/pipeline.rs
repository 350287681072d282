//! End-to-end runs: ingest, walk-forward predictions, backtests and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::features::{
    build_snapshot, Efficiency, FeatureSettings, GameLog, RepresentationKind, Snapshot, Venue, SRS_RATING,
};
use crate::ingest::{ingest_and_join, read_input, IngestError, Ingested, PredictorKind, PredictorSpec, SeasonConfig, Source};
use crate::ledger::{run_backtest_with_stake, MatchId, MatchRecord};
use crate::odds::TeamId;
use crate::predictors::{kp_predict, load_external_picks, nb_predict, nb_train, srs_predict, Matchup, NbModel, Prediction, Side};
use crate::report::{emit_reports, Phase, PredictorRun, ReportError, ReportFormats, ReportInput, SeasonSplit};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("no usable matches after joining and skipping")]
    NoMatches,
    #[error("unknown predictor `{0}`")]
    UnknownPredictor(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Validate inputs and print the join report.
    Ingest,
    /// Baseline table only.
    Baseline,
    /// Predictor curves, categorization and summary.
    Backtest,
    /// Baseline plus predictor outputs.
    Report,
    /// Everything, plus `run.txt` with the effective configuration.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: RunMode,
    pub phase: Phase,
    /// Restrict to these predictor ids; empty means all configured.
    pub predictors: Vec<String>,
    pub formats: ReportFormats,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: RunMode::All,
            phase: Phase::Combined,
            predictors: Vec::new(),
            formats: ReportFormats { csv: true },
        }
    }
}

/// Predictions of one predictor over a season.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    pub picks: BTreeMap<MatchId, Prediction>,
    /// Matches where the model had no input and the home (or
    /// alphabetically first) team was picked instead.
    pub fallbacks: u64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub ingested: Ingested,
    /// Errors that do not stop the run: row problems and rejected predictors.
    pub errors: Vec<String>,
    /// Per-predictor status lines for the run report.
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// 0 when nothing went wrong, 1 when any error was reported.
    pub fn exit_code(&self) -> i32 {
        if self.errors.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Every snapshot needed during a season, built lazily per date and kind.
struct Snapshots<'a> {
    log: &'a GameLog,
    settings: &'a FeatureSettings,
    kinds: BTreeSet<RepresentationKind>,
    cache: BTreeMap<NaiveDate, (Snapshot, BTreeMap<RepresentationKind, String>)>,
}

impl<'a> Snapshots<'a> {
    fn at(&mut self, date: NaiveDate) -> &(Snapshot, BTreeMap<RepresentationKind, String>) {
        let (log, settings, kinds) = (self.log, self.settings, &self.kinds);
        self.cache.entry(date).or_insert_with(|| {
            let mut snap = Snapshot {
                as_of: Some(date),
                reps: BTreeMap::new(),
            };
            let mut failed = BTreeMap::new();
            for &kind in kinds {
                match build_snapshot(log, date, &BTreeSet::from([kind]), settings) {
                    Ok(mut s) => {
                        if let Some(reps) = s.reps.remove(&kind) {
                            snap.reps.insert(kind, reps);
                        }
                    }
                    Err(e) => {
                        log::warn!("{kind} representations as of {date}: {e}");
                        failed.insert(kind, e.to_string());
                    }
                }
            }
            (snap, failed)
        })
    }
}

fn fallback(m: &Matchup) -> Prediction {
    Prediction {
        match_id: m.match_id.clone(),
        pick: m.first.clone(),
        win_probability: None,
    }
}

/// Side-ordered feature vector: the first team's features then the second's.
fn pair_features(snap: &Snapshot, kinds: &[RepresentationKind], first: &TeamId, second: &TeamId) -> Option<(Vec<String>, Vec<f64>)> {
    let a = snap.combined(kinds, first)?;
    let b = snap.combined(kinds, second)?;
    let names = a.names().map(|n| format!("first.{n}")).chain(b.names().map(|n| format!("second.{n}"))).collect();
    let values = a.iter().chain(b.iter()).map(|(_, v)| v).collect();
    Some((names, values))
}

/// Decisive games in the log as (date, first team, second team, winning side).
fn training_games(log: &GameLog) -> Vec<(NaiveDate, TeamId, TeamId, Side)> {
    let mut games: Vec<_> = log
        .rows()
        .iter()
        .filter(|r| match r.venue {
            Venue::Home => true,
            Venue::Away => false,
            Venue::Neutral => r.team < r.opponent,
        })
        .filter(|r| r.points_for != r.points_against)
        .map(|r| {
            let side = if r.points_for > r.points_against { Side::First } else { Side::Second };
            (r.date, r.team.clone(), r.opponent.clone(), side)
        })
        .collect();
    games.sort_by_key(|g| g.0);
    games
}

struct NbState {
    kinds: Vec<RepresentationKind>,
    kernel: bool,
    names: Option<Vec<String>>,
    rows: Vec<(Side, Vec<f64>)>,
    next_game: usize,
    model: Option<NbModel<Side>>,
}

/// Predictions for every feature-based predictor, using for each match only
/// games dated strictly before it. Predictors that cannot run are `Err`.
pub fn walk_forward(
    matches: &[MatchRecord],
    log: &GameLog,
    specs: &[PredictorSpec],
    settings: &FeatureSettings,
) -> BTreeMap<String, Result<Predictions, String>> {
    let specs: Vec<&PredictorSpec> = specs.iter().filter(|s| s.kind != PredictorKind::External).collect();
    let mut snaps = Snapshots {
        log,
        settings,
        kinds: specs.iter().flat_map(|s| s.representations()).collect(),
        cache: BTreeMap::new(),
    };
    let games = training_games(log);
    let mut nb: BTreeMap<&str, NbState> = specs
        .iter()
        .filter(|s| s.kind == PredictorKind::Nb)
        .map(|s| {
            let state = NbState {
                kinds: s.nb_features(),
                kernel: s.kernel(),
                names: None,
                rows: Vec::new(),
                next_game: 0,
                model: None,
            };
            (s.id.as_str(), state)
        })
        .collect();
    let mut out: BTreeMap<String, Result<Predictions, String>> =
        specs.iter().map(|s| (s.id.clone(), Ok(Predictions::default()))).collect();

    let mut by_date: BTreeMap<NaiveDate, Vec<&MatchRecord>> = BTreeMap::new();
    for m in matches {
        by_date.entry(m.date).or_default().push(m);
    }
    for (&date, day) in &by_date {
        // Extend NB training sets with games finished before today.
        for state in nb.values_mut() {
            let before = state.rows.len();
            while state.next_game < games.len() && games[state.next_game].0 < date {
                let (gdate, first, second, side) = &games[state.next_game];
                state.next_game += 1;
                let (snap, _) = snaps.at(*gdate);
                if let Some((names, values)) = pair_features(snap, &state.kinds, first, second) {
                    let names_ok = state.names.get_or_insert_with(|| names.clone()) == &names;
                    if names_ok {
                        state.rows.push((*side, values));
                    }
                }
            }
            if state.rows.len() != before || state.model.is_none() {
                let names = state.names.clone().unwrap_or_default();
                state.model = nb_train(&state.rows, names, &[Side::First, Side::Second], state.kernel).ok();
            }
        }

        let (snap, _) = snaps.at(date);
        for spec in &specs {
            let Some(Ok(preds)) = out.get_mut(&spec.id) else { continue };
            for m in day {
                let matchup = Matchup::from_record(m);
                let (first, second) = (&matchup.first, &matchup.second);
                let predicted: Result<Option<Prediction>, String> = match spec.kind {
                    PredictorKind::Kp => {
                        let eff = |t: &TeamId| {
                            snap.get(RepresentationKind::AdjEff, t).and_then(Efficiency::from_representation)
                        };
                        match (eff(first), eff(second)) {
                            (Some(a), Some(b)) => kp_predict(&matchup, a, b, &spec.kp_params()).map(Some).map_err(|e| e.to_string()),
                            _ => Ok(None),
                        }
                    }
                    PredictorKind::Srs => {
                        let rating =
                            |t: &TeamId| snap.get(RepresentationKind::Srs, t).and_then(|r| r.features.get(SRS_RATING));
                        Ok(match (rating(first), rating(second)) {
                            (Some(a), Some(b)) => Some(srs_predict(&matchup, a, b, spec.home_bonus())),
                            _ => None,
                        })
                    }
                    PredictorKind::Nb => {
                        let state = &nb[spec.id.as_str()];
                        match (&state.model, pair_features(snap, &state.kinds, first, second)) {
                            (Some(model), Some((names, values))) if names == model.feature_names => {
                                nb_predict(model, &matchup, &values).map(Some).map_err(|e| e.to_string())
                            }
                            _ => Ok(None),
                        }
                    }
                    PredictorKind::External => unreachable!("external predictors are filtered out"),
                };
                match predicted {
                    Ok(Some(p)) => {
                        preds.picks.insert(m.match_id.clone(), p);
                    }
                    Ok(None) => {
                        preds.fallbacks += 1;
                        preds.picks.insert(m.match_id.clone(), fallback(&matchup));
                    }
                    Err(e) => {
                        out.insert(spec.id.clone(), Err(format!("{}: {e}", m.match_id)));
                        break;
                    }
                }
            }
        }
    }
    out
}

fn selected<'a>(config: &'a SeasonConfig, wanted: &[String]) -> Result<Vec<&'a PredictorSpec>, PipelineError> {
    for w in wanted {
        if !config.predictors.iter().any(|p| &p.id == w) {
            return Err(PipelineError::UnknownPredictor(w.clone()));
        }
    }
    Ok(config
        .predictors
        .iter()
        .filter(|p| wanted.is_empty() || wanted.contains(&p.id))
        .collect())
}

/// Runs with a configuration file; relative data paths resolve against its directory.
pub fn run_pipeline(config_path: &Path, out_dir: &Path, options: &RunOptions) -> Result<RunOutcome, PipelineError> {
    let (config, base) = SeasonConfig::load(config_path)?;
    run_with_config(&config, &base, out_dir, options)
}

pub fn run_with_config(
    config: &SeasonConfig,
    base: &Path,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let specs = selected(config, &options.predictors)?;
    let uses_predictors = matches!(options.mode, RunMode::Backtest | RunMode::Report | RunMode::All);
    let needs_log = uses_predictors && specs.iter().any(|s| !s.representations().is_empty());

    let schedule_text = read_input(base, &config.files.schedule)?;
    let lines_text = read_input(base, &config.files.lines)?;
    let log_text = match (&config.files.game_log, needs_log) {
        (Some(p), true) => Some((p.display().to_string(), read_input(base, p)?)),
        _ => None,
    };
    let schedule_name = config.files.schedule.display().to_string();
    let lines_name = config.files.lines.display().to_string();
    let ingested = ingest_and_join(
        Source {
            name: &schedule_name,
            text: &schedule_text,
        },
        Source {
            name: &lines_name,
            text: &lines_text,
        },
        log_text.as_ref().map(|(name, text)| Source { name, text }),
        config,
    )?;
    let mut errors: Vec<String> = ingested.report.errors.iter().map(ToString::to_string).collect();
    let mut notes = Vec::new();

    if options.mode == RunMode::Ingest {
        if ingested.matches.is_empty() {
            errors.push(PipelineError::NoMatches.to_string());
        }
        return Ok(RunOutcome {
            ingested,
            errors,
            notes,
            files: Vec::new(),
        });
    }
    if ingested.matches.is_empty() {
        return Err(PipelineError::NoMatches);
    }

    let stake = config.stake_money()?;
    let matches = &ingested.matches;
    let mut runs = Vec::new();
    if uses_predictors {
        let settings = FeatureSettings {
            schema: config.schema()?,
            weights: config.recency,
            solver: config.solver,
        };
        let feature_specs: Vec<PredictorSpec> = specs.iter().map(|s| (*s).clone()).collect();
        let mut predicted = match &ingested.game_log {
            Some(log) => walk_forward(matches, log, &feature_specs, &settings),
            None => BTreeMap::new(),
        };
        let all_joined: Vec<MatchRecord> = matches.iter().chain(&ingested.skipped).cloned().collect();
        for spec in &specs {
            let result = if spec.kind == PredictorKind::External {
                let file = spec.file.as_ref().expect("validated");
                read_input(base, file)
                    .map_err(|e| e.to_string())
                    .and_then(|text| {
                        load_external_picks(text.as_bytes(), &file.display().to_string(), &all_joined, &config.aliases)
                            .map_err(|e| e.to_string())
                    })
                    .map(|picks| Predictions {
                        picks: picks.into_iter().filter(|(id, _)| matches.iter().any(|m| &m.match_id == id)).collect(),
                        fallbacks: 0,
                    })
            } else {
                predicted.remove(&spec.id).unwrap_or_else(|| Err("no game log".into()))
            };
            let backtest = result.and_then(|p| {
                let picks: BTreeMap<MatchId, TeamId> = p.picks.iter().map(|(k, v)| (k.clone(), v.pick.clone())).collect();
                run_backtest_with_stake(matches, &picks, &stake)
                    .map(|bt| (bt, p.fallbacks))
                    .map_err(|e| e.to_string())
            });
            match backtest {
                Ok((bt, fallbacks)) => {
                    notes.push(format!(
                        "{}: {} bets, {} correct, {} fallback picks, pay-out {}",
                        spec.id,
                        bt.entries.len(),
                        bt.correct(),
                        fallbacks,
                        bt.total()
                    ));
                    runs.push(PredictorRun {
                        id: spec.id.clone(),
                        backtest: bt,
                    });
                }
                Err(e) => {
                    notes.push(format!("{}: rejected", spec.id));
                    errors.push(format!("predictor `{}` rejected: {e}", spec.id));
                }
            }
        }
    }

    let baseline = match options.mode {
        RunMode::Baseline => true,
        RunMode::Backtest => false,
        _ => config.baseline,
    };
    let mut files = Vec::new();
    if baseline || !runs.is_empty() {
        let input = ReportInput {
            matches,
            runs: &runs,
            split: SeasonSplit {
                post_season_start: config.post_season_start,
            },
            stake,
            baseline,
        };
        files = emit_reports(out_dir, &input, options.phase, options.formats)?;
    } else {
        errors.push("nothing to report: every predictor was rejected and no baseline was requested".into());
    }

    let outcome = RunOutcome {
        ingested,
        errors,
        notes,
        files,
    };
    if options.mode == RunMode::All {
        let path = out_dir.join("run.txt");
        fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        let text = run_report(config, options, &outcome)?;
        fs::write(&path, text).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        let mut outcome = outcome;
        outcome.files.push(path);
        return Ok(outcome);
    }
    Ok(outcome)
}

/// Effective configuration, join report and predictor status, as text.
pub fn run_report(config: &SeasonConfig, options: &RunOptions, outcome: &RunOutcome) -> Result<String, PipelineError> {
    let mut s = String::new();
    let _ = writeln!(s, "# effective configuration");
    s.push_str(&config.effective()?.to_toml());
    let _ = writeln!(s, "\n# options");
    let _ = writeln!(s, "phase = {}", options.phase);
    let _ = writeln!(s, "predictors = {:?}", options.predictors);
    let _ = writeln!(s, "\n# join");
    let _ = write!(s, "{}", outcome.ingested.report);
    let _ = writeln!(s, "\n# predictors");
    for n in &outcome.notes {
        let _ = writeln!(s, "{n}");
    }
    let _ = writeln!(s, "\n# errors");
    for e in &outcome.errors {
        let _ = writeln!(s, "{e}");
    }
    Ok(s)
}
