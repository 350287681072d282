//! Pick generators: Pythagorean/log5 ("KP"), SRS, Naive Bayes with Gaussian
//! or kernel densities, and picks imported from external models.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{join_rows, RowError};
use crate::features::{Efficiency, StatVector};
use crate::ingest::TeamAliases;
use crate::ledger::{MatchId, MatchRecord};
use crate::odds::TeamId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("efficiencies must be positive (got {0}, {1})")]
    NonPositiveEfficiency(f64, f64),
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("invalid KP parameters: {0}")]
    InvalidParams(String),
    #[error("no {kind} representation for `{team}`")]
    MissingRepresentation { kind: String, team: TeamId },
    #[error("class {0} has no training rows")]
    MissingClass(String),
    #[error("training rows disagree on feature count: {0}")]
    RaggedTraining(String),
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("external picks rejected:\n{}", join_rows(.0))]
    ExternalPicks(Vec<RowError>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub match_id: MatchId,
    pub pick: TeamId,
    /// Probability that the picked team wins, when the model produces one.
    pub win_probability: Option<f64>,
}

/// The two sides of a match. `first` is the home team, or the alphabetically
/// first team at neutral sites; exact ties are resolved toward `first`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matchup {
    pub match_id: MatchId,
    pub first: TeamId,
    pub second: TeamId,
    pub neutral: bool,
}

impl Matchup {
    pub fn new(match_id: MatchId, home: TeamId, away: TeamId, neutral: bool) -> Self {
        let (first, second) = if neutral && away < home { (away, home) } else { (home, away) };
        Matchup {
            match_id,
            first,
            second,
            neutral,
        }
    }

    pub fn from_record(m: &MatchRecord) -> Self {
        Matchup::new(m.match_id.clone(), m.home_team.clone(), m.away_team.clone(), m.neutral)
    }

    pub fn home(&self) -> Option<&TeamId> {
        (!self.neutral).then_some(&self.first)
    }

    pub fn team(&self, side: Side) -> &TeamId {
        match side {
            Side::First => &self.first,
            Side::Second => &self.second,
        }
    }

    /// Pick from the probability that `first` wins.
    fn pick_from_probability(&self, p_first: f64) -> Prediction {
        let (pick, p) = if p_first >= 0.5 {
            (self.first.clone(), p_first)
        } else {
            (self.second.clone(), 1.0 - p_first)
        };
        Prediction {
            match_id: self.match_id.clone(),
            pick,
            win_probability: Some(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    First,
    Second,
}

pub fn pythagorean_wpct(adj_oe: f64, adj_de: f64, exponent: f64) -> Result<f64, PredictError> {
    if !(adj_oe > 0.0 && adj_de > 0.0) {
        return Err(PredictError::NonPositiveEfficiency(adj_oe, adj_de));
    }
    // oe^x / (oe^x + de^x) = 1 / (1 + (de/oe)^x), which does not overflow for large x.
    Ok(1.0 / (1.0 + (adj_de / adj_oe).powf(exponent)))
}

/// Probability that a team with win fraction `pa` beats one with `pb`.
pub fn log5(pa: f64, pb: f64) -> Result<f64, PredictError> {
    for p in [pa, pb] {
        if !(p > 0.0 && p < 1.0) {
            return Err(PredictError::ProbabilityOutOfRange(p));
        }
    }
    let a = pa * (1.0 - pb);
    let b = pb * (1.0 - pa);
    Ok(a / (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpParams {
    pub pyth_exponent: f64,
    /// Multiplies the home team's offense and divides its defense.
    pub home_advantage: f64,
}

impl Default for KpParams {
    fn default() -> Self {
        KpParams {
            pyth_exponent: 11.5,
            home_advantage: 1.014,
        }
    }
}

impl KpParams {
    pub fn validate(&self) -> Result<(), PredictError> {
        if !(self.pyth_exponent > 0.0 && self.pyth_exponent.is_finite()) {
            return Err(PredictError::InvalidParams(format!("exponent {}", self.pyth_exponent)));
        }
        if !(self.home_advantage >= 1.0 && self.home_advantage.is_finite()) {
            return Err(PredictError::InvalidParams(format!(
                "home advantage {} must be at least 1",
                self.home_advantage
            )));
        }
        Ok(())
    }
}

/// `first_eff` and `second_eff` belong to `matchup.first` and `matchup.second`.
pub fn kp_predict(
    matchup: &Matchup,
    first_eff: Efficiency,
    second_eff: Efficiency,
    params: &KpParams,
) -> Result<Prediction, PredictError> {
    params.validate()?;
    let mut first = first_eff;
    if !matchup.neutral {
        first.adj_oe *= params.home_advantage;
        first.adj_de /= params.home_advantage;
    }
    let wa = pythagorean_wpct(first.adj_oe, first.adj_de, params.pyth_exponent)?;
    let wb = pythagorean_wpct(second_eff.adj_oe, second_eff.adj_de, params.pyth_exponent)?;
    let p = log5(wa, wb)?;
    Ok(matchup.pick_from_probability(p))
}

/// Picks the higher rating after adding `home_bonus` points to the home team.
pub fn srs_predict(matchup: &Matchup, first_rating: f64, second_rating: f64, home_bonus: f64) -> Prediction {
    let bonus = if matchup.neutral { 0.0 } else { home_bonus };
    let pick = if first_rating + bonus >= second_rating {
        matchup.first.clone()
    } else {
        matchup.second.clone()
    };
    Prediction {
        match_id: matchup.match_id.clone(),
        pick,
        win_probability: None,
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Relative floor on bandwidths and standard deviations.
pub const SPREAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Density {
    Gaussian { mean: f64, sd: f64 },
    /// Equal-weight Gaussian kernels centred on the training values.
    Kernel { centers: Vec<f64>, bandwidth: f64 },
}

impl Density {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            Density::Kernel { centers, bandwidth } => {
                let exps: Vec<f64> = centers
                    .iter()
                    .map(|c| {
                        let z = (x - c) / bandwidth;
                        -0.5 * z * z
                    })
                    .collect();
                log_sum_exp(&exps) - (centers.len() as f64).ln() - bandwidth.ln() - LN_SQRT_2PI
            }
        }
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel<L> {
    pub label: L,
    pub prior: f64,
    pub densities: Vec<Density>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel<L> {
    pub feature_names: Vec<String>,
    pub kernel: bool,
    pub classes: Vec<ClassModel<L>>,
}

/// Kernel bandwidth for one feature: range / number of distinct values,
/// floored at `SPREAD_FLOOR` × range (or `SPREAD_FLOOR` for a constant feature).
pub fn kernel_bandwidth(values: &[f64]) -> f64 {
    let (range, distinct) = range_and_distinct(values);
    let floor = spread_floor(range);
    if distinct == 0 {
        return floor;
    }
    (range / distinct as f64).max(floor)
}

fn spread_floor(range: f64) -> f64 {
    if range > 0.0 {
        SPREAD_FLOOR * range
    } else {
        SPREAD_FLOOR
    }
}

fn range_and_distinct(values: &[f64]) -> (f64, usize) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let range = match (sorted.first(), sorted.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    };
    (range, sorted.len())
}

/// Trains on `(label, features)` rows. Every label in `classes` needs at least one row.
pub fn nb_train<L: Clone + PartialEq + std::fmt::Debug>(
    rows: &[(L, Vec<f64>)],
    feature_names: Vec<String>,
    classes: &[L],
    kernel: bool,
) -> Result<NbModel<L>, PredictError> {
    let n_features = feature_names.len();
    if let Some((_, bad)) = rows.iter().find(|(_, f)| f.len() != n_features) {
        return Err(PredictError::RaggedTraining(format!(
            "expected {n_features} features, found {}",
            bad.len()
        )));
    }
    if let Some((_, bad)) = rows.iter().find(|(_, f)| f.iter().any(|v| !v.is_finite())) {
        return Err(PredictError::RaggedTraining(format!("non-finite feature in {bad:?}")));
    }
    let columns: Vec<Vec<f64>> = (0..n_features).map(|j| rows.iter().map(|(_, f)| f[j]).collect()).collect();
    let spreads: Vec<(f64, f64)> = columns
        .iter()
        .map(|col| {
            let (range, _) = range_and_distinct(col);
            (kernel_bandwidth(col), spread_floor(range))
        })
        .collect();

    let mut models = Vec::with_capacity(classes.len());
    for label in classes {
        let members: Vec<&Vec<f64>> = rows.iter().filter(|(l, _)| l == label).map(|(_, f)| f).collect();
        if members.is_empty() {
            return Err(PredictError::MissingClass(format!("{label:?}")));
        }
        let n = members.len() as f64;
        let densities = (0..n_features)
            .map(|j| {
                let values: Vec<f64> = members.iter().map(|f| f[j]).collect();
                let (bandwidth, floor) = spreads[j];
                if kernel {
                    Density::Kernel { centers: values, bandwidth }
                } else {
                    let mean = values.iter().sum::<f64>() / n;
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    Density::Gaussian {
                        mean,
                        sd: var.sqrt().max(floor),
                    }
                }
            })
            .collect();
        models.push(ClassModel {
            label: label.clone(),
            prior: n / rows.len() as f64,
            densities,
        });
    }
    Ok(NbModel {
        feature_names,
        kernel,
        classes: models,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<L> {
    /// Normalized posterior per class, in the model's class order.
    pub probabilities: Vec<(L, f64)>,
}

impl<L: Clone> Posterior<L> {
    /// Most probable class; the earliest class wins exact ties.
    pub fn best(&self) -> (L, f64) {
        let mut best = &self.probabilities[0];
        for p in &self.probabilities[1..] {
            if p.1 > best.1 {
                best = p;
            }
        }
        best.clone()
    }
}

impl<L: Clone> NbModel<L> {
    pub fn predict(&self, features: &[f64]) -> Result<Posterior<L>, PredictError> {
        if features.len() != self.feature_names.len() {
            return Err(PredictError::SchemaMismatch(format!(
                "model has {} features, input has {}",
                self.feature_names.len(),
                features.len()
            )));
        }
        let log_joint: Vec<f64> = self
            .classes
            .iter()
            .map(|c| c.prior.ln() + c.densities.iter().zip(features).map(|(d, &x)| d.ln_pdf(x)).sum::<f64>())
            .collect();
        let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probabilities = if max.is_finite() {
            // Shift by the maximum and normalize the ratios directly; subtracting a
            // log-sum-exp total loses everything when the log joints are huge.
            let rel: Vec<f64> = log_joint.iter().map(|lj| (lj - max).exp()).collect();
            let sum: f64 = rel.iter().sum();
            self.classes.iter().zip(&rel).map(|(c, r)| (c.label.clone(), r / sum)).collect()
        } else {
            // Every class has zero likelihood; fall back to the priors.
            self.classes.iter().map(|c| (c.label.clone(), c.prior)).collect()
        };
        Ok(Posterior { probabilities })
    }

    pub fn predict_named(&self, features: &StatVector) -> Result<Posterior<L>, PredictError> {
        let names: Vec<&str> = features.names().collect();
        if names != self.feature_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(PredictError::SchemaMismatch(format!(
                "expected {:?}, got {names:?}",
                self.feature_names
            )));
        }
        let values: Vec<f64> = features.iter().map(|(_, v)| v).collect();
        self.predict(&values)
    }
}

/// Side-labelled Naive Bayes prediction for one matchup.
pub fn nb_predict(model: &NbModel<Side>, matchup: &Matchup, features: &[f64]) -> Result<Prediction, PredictError> {
    let posterior = model.predict(features)?;
    let p_first = posterior
        .probabilities
        .iter()
        .find(|(l, _)| *l == Side::First)
        .map(|(_, p)| *p)
        .ok_or_else(|| PredictError::MissingClass("First".into()))?;
    Ok(matchup.pick_from_probability(p_first))
}

#[derive(Debug, Deserialize)]
struct PickRow {
    match_id: String,
    pick_team: String,
    #[serde(default)]
    probability: Option<f64>,
}

/// Reads `match_id,pick_team[,probability]` rows. All row problems are
/// collected and returned together.
pub fn load_external_picks<R: io::Read>(
    source: R,
    source_name: &str,
    matches: &[MatchRecord],
    aliases: &TeamAliases,
) -> Result<BTreeMap<MatchId, Prediction>, PredictError> {
    let by_id: BTreeMap<&MatchId, &MatchRecord> = matches.iter().map(|m| (&m.match_id, m)).collect();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, row) in reader.deserialize::<PickRow>().enumerate() {
        let line = i as u64 + 2;
        let err = |msg: String| RowError::new(source_name, line, msg);
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(err(format!("unreadable row: {e}")));
                continue;
            }
        };
        let id = MatchId::new(row.match_id.clone());
        let Some(m) = by_id.get(&id) else {
            errors.push(err(format!("unknown match `{}`", row.match_id)));
            continue;
        };
        let pick = aliases.canonical(&row.pick_team);
        if !m.involves(&pick) {
            errors.push(err(format!(
                "pick `{pick}` is not playing in {} ({} vs {})",
                id, m.home_team, m.away_team
            )));
            continue;
        }
        if let Some(p) = row.probability {
            if !(0.5..1.0).contains(&p) {
                errors.push(err(format!("probability {p} must be in [0.5, 1)")));
                continue;
            }
        }
        if out.contains_key(&id) {
            errors.push(err(format!("duplicate pick for {id}")));
            continue;
        }
        out.insert(
            id.clone(),
            Prediction {
                match_id: id,
                pick,
                win_probability: row.probability,
            },
        );
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(PredictError::ExternalPicks(errors))
    }
}
