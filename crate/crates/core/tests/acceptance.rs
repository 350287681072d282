//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::process::ExitCode;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use pickem::features::{
    adjusted_efficiencies, srs_weighted, FeatureSettings, GameLog, GameLogRow, RecencyWeights, SolverSettings,
    SportSchema, StatVector, Venue, ADJ_DE, ADJ_OE,
};
use pickem::ingest::{PredictorKind, PredictorSpec};
use pickem::ledger::{run_backtest, vegas_baseline, MatchId, MatchRecord};
use pickem::odds::{canonicalize, pickem_swing, settle, BetCategory, RawQuote, TeamId};
use pickem::pipeline::walk_forward;
use pickem::predictors::{nb_train, Density};
use pickem::report::{
    categorize, emit_reports, format_accuracy, Phase, PredictorRun, ReportFormats, ReportInput, SeasonSplit,
};
use pickem::Money;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn day(n: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + Duration::days(n)
}

fn dollars(s: &str) -> Money {
    Money::parse_decimal(s).unwrap()
}

/// Non-Pick 'em match with the favorite at home.
fn game(id: usize, date: NaiveDate, fav_line: i64, dog_line: i64, fav_wins: bool) -> MatchRecord {
    let (fav, dog) = (format!("F{id}"), format!("D{id}"));
    let line = canonicalize(&RawQuote::new("book", fav.as_str(), dog.as_str(), fav_line, dog_line)).unwrap();
    let winner = if fav_wins { &fav } else { &dog };
    MatchRecord::new(
        MatchId::new(format!("m{id}")),
        date,
        TeamId::new(&fav),
        TeamId::new(&dog),
        false,
        TeamId::new(winner),
        None,
        line,
    )
    .unwrap()
}

fn pickem_game(id: usize, date: NaiveDate, nominal_fav_wins: bool) -> MatchRecord {
    game(id, date, 110, -110, nominal_fav_wins)
}

// 1 -----------------------------------------------------------------------

fn payout_unit_values() -> Check {
    let line = canonicalize(&RawQuote::new("b", "FAV", "DOG", 300, 240)).unwrap();
    let fav = settle(&line, &"FAV".into(), &"FAV".into()).unwrap();
    let dog = settle(&line, &"DOG".into(), &"DOG".into()).unwrap();
    let lost = settle(&line, &"FAV".into(), &"DOG".into()).unwrap();
    let pk = canonicalize(&RawQuote::new("b", "A", "B", 110, -110)).unwrap();
    let pick = settle(&pk, &"B".into(), &"B".into()).unwrap();

    ensure(fav.category == BetCategory::FavCorrect, || "favorite category".into())?;
    ensure((fav.delta.to_f64() - 33.33).abs() <= 0.005, || format!("favorite pays {}", fav.delta))?;
    ensure(fav.delta == Money::ratio(10000, 300), || "favorite pay-out is not 10000/300".into())?;
    ensure(dog.delta == Money::dollars(240), || format!("underdog pays {}", dog.delta))?;
    ensure(pick.delta == Money::ratio(10000, 110), || "Pick 'em pay-out is not 10000/110".into())?;
    ensure(pick.delta.to_string() == "90.91", || format!("Pick 'em displays {}", pick.delta))?;
    ensure(lost.delta == Money::dollars(-100), || format!("loss is {}", lost.delta))?;
    Ok(format!("fav {} / dog {} / pick 'em {} / loss {}", fav.delta, dog.delta, pick.delta, lost.delta))
}

// 2 -----------------------------------------------------------------------

/// `n_pickems` Pick 'ems among some ordinary matches.
fn season_with_pickems(n_pickems: usize, n_regular: usize, rng: &mut ChaCha8Rng) -> Vec<MatchRecord> {
    let mut ms = Vec::new();
    for i in 0..n_regular {
        ms.push(game(i, day((i % 30) as i64), rng.gen_range(101..600), rng.gen_range(100..500), rng.gen_bool(0.7)));
    }
    for i in 0..n_pickems {
        ms.push(pickem_game(n_regular + i, day((i % 30) as i64), rng.gen_bool(0.5)));
    }
    ms
}

fn pickem_swing_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut shown = Vec::new();
    for (name, n, table, tol) in [
        ("NCAAB", 5, "954.49", "0.10"),
        ("NBA", 115, "21954.65", "0.15"),
        ("NFL", 29, "5536.10", "0.30"),
    ] {
        let season = season_with_pickems(n, 3 * n + 7, &mut rng);
        let b = vegas_baseline(&season);
        let swing = &b.best_payout - &b.worst_payout;
        ensure(swing == pickem_swing() * n as i64, || format!("{name}: swing {swing} != {n} x 190.909..."))?;
        let gap = (&swing - &dollars(table)).abs();
        ensure(gap <= dollars(tol), || format!("{name}: {swing} vs table {table} differs by {gap}"))?;
        shown.push(format!("{name} {swing} (table {table})"));
    }
    Ok(shown.join(", "))
}

// 3 -----------------------------------------------------------------------

fn expected_payout_midpoint() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..300 {
        let n_p = rng.gen_range(0..12);
        let n_r = rng.gen_range(0..40);
        let season = season_with_pickems(n_p, n_r, &mut rng);
        let b = vegas_baseline(&season);
        ensure(&b.expected_payout * 2 == &b.best_payout + &b.worst_payout, || {
            format!("case {case}: {} is not the midpoint of {} and {}", b.expected_payout, b.best_payout, b.worst_payout)
        })?;
    }
    let ncaab = (dollars("484.76") + dollars("-469.73")) / 2;
    ensure((&ncaab - &dollars("7.51")).abs() <= dollars("0.01"), || format!("NCAAB midpoint {ncaab}"))?;
    let nba = (dollars("9125.84") + dollars("-12828.81")) / 2;
    ensure(nba.to_string() == "-1851.49", || format!("NBA midpoint {nba}"))?;
    Ok(format!(
        "300 random seasons exact; NCAAB midpoint {ncaab} (table 7.51); NBA midpoint {nba} \
         [documented discrepancy: table prints -1857.3]"
    ))
}

// 4 -----------------------------------------------------------------------

fn categorization_consistency() -> Check {
    // 62 priced matches, 5 Pick 'ems. 39 favorites and 5 underdogs picked
    // correctly, 2 of 5 Pick 'ems, everything else wrong.
    let mut ms = Vec::new();
    let mut picks = BTreeMap::new();
    for i in 0..62 {
        let fav_wins = i < 39 || (44..53).contains(&i);
        let m = game(i, day(i as i64 / 4), 150 + i as i64, 130 + i as i64, fav_wins);
        // Right for the first 44, wrong for the rest.
        let pick = if (i < 44) == fav_wins {
            m.line.fav_team().clone()
        } else {
            m.line.dog_team().clone()
        };
        picks.insert(m.match_id.clone(), pick);
        ms.push(m);
    }
    for i in 62..67 {
        let m = pickem_game(i, day(16), true);
        let pick = if i < 64 { m.line.fav_team().clone() } else { m.line.dog_team().clone() };
        picks.insert(m.match_id.clone(), pick);
        ms.push(m);
    }
    let bt = run_backtest(&ms, &picks).map_err(|e| e.to_string())?;
    let row = categorize("NB", &bt.entries, &ms).map_err(|e| e.to_string())?;
    let shown = format_accuracy(Some(Ratio::new(bt.correct() as u64, ms.len() as u64)));
    let value: f64 = shown.parse().map_err(|_| format!("unparseable accuracy {shown}"))?;
    ensure((value - 0.6865).abs() <= 5e-5, || format!("accuracy shows {shown}"))?;
    ensure(
        (row.correct_favs, row.correct_dogs, row.correct_pickems, row.pickem_total) == (39, 5, 2, 5),
        || format!("{row:?}"),
    )?;
    ensure(row.total_correct() == bt.correct() as u64, || "category sum differs from total correct".into())?;
    ensure(row.pickem_cell() == "2 (0.4)", || format!("Pick 'em cell {}", row.pickem_cell()))?;
    Ok(format!(
        "accuracy {shown}; favs {} + dogs {} + Pick 'ems {} = {} correct",
        row.correct_favs,
        row.correct_dogs,
        row.pickem_cell(),
        row.total_correct()
    ))
}

// 5 -----------------------------------------------------------------------

fn accuracy_is_not_payout() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut smallest_gap: Option<Money> = None;
    for case in 0..200 {
        // k favorite wins and k underdog wins, plus Pick 'ems split evenly.
        let k = rng.gen_range(1..15);
        let p = rng.gen_range(0..4);
        let mut ms = Vec::new();
        for i in 0..2 * k {
            ms.push(game(i, day(i as i64), rng.gen_range(101..500), rng.gen_range(100..500), i < k));
        }
        for i in 0..2 * p {
            ms.push(pickem_game(2 * k + i, day(i as i64), i < p));
        }
        ms.shuffle(&mut rng);
        let favs: BTreeMap<MatchId, TeamId> = ms.iter().map(|m| (m.match_id.clone(), m.line.fav_team().clone())).collect();
        let dogs: BTreeMap<MatchId, TeamId> = ms.iter().map(|m| (m.match_id.clone(), m.line.dog_team().clone())).collect();
        let a = run_backtest(&ms, &favs).map_err(|e| e.to_string())?;
        let b = run_backtest(&ms, &dogs).map_err(|e| e.to_string())?;
        ensure(a.correct() == b.correct(), || format!("case {case}: accuracies differ"))?;

        // Losses cancel; the gap is what the correct underdogs paid minus the correct favorites.
        let gap: Money = ms
            .iter()
            .filter(|m| !m.line.is_pickem())
            .map(|m| {
                if &m.winner == m.line.dog_team() {
                    m.line.dog_payout().clone()
                } else {
                    -m.line.fav_payout().clone()
                }
            })
            .sum();
        ensure(gap > 0, || format!("case {case}: analytic gap {gap} is not positive"))?;
        let diff = &b.total() - &a.total();
        ensure(diff.abs() >= gap, || format!("case {case}: pay-outs differ by {diff}, gap {gap}"))?;
        ensure(diff == gap, || format!("case {case}: pay-out difference {diff} != analytic {gap}"))?;
        smallest_gap = Some(match smallest_gap {
            Some(s) => s.min(gap),
            None => gap,
        });
    }
    Ok(format!("200 equal-accuracy pairs, smallest pay-out gap {}", smallest_gap.unwrap()))
}

// 6 -----------------------------------------------------------------------

fn tiny_schema() -> SportSchema {
    SportSchema {
        name: "tiny".into(),
        stats: vec!["poss".into()],
        possession_formula: [("poss".to_string(), 1.0)].into_iter().collect(),
        target_possessions: 65.0,
        adjusted_stats: Vec::new(),
    }
}

struct Game {
    date: NaiveDate,
    home: usize,
    away: usize,
    home_points: f64,
    away_points: f64,
    home_poss: f64,
    away_poss: f64,
}

fn team(i: usize) -> TeamId {
    TeamId::new(format!("T{i:02}"))
}

fn to_log(games: &[Game]) -> GameLog {
    let mut rows = Vec::new();
    for g in games {
        for (t, o, pf, pa, poss, venue) in [
            (g.home, g.away, g.home_points, g.away_points, g.home_poss, Venue::Home),
            (g.away, g.home, g.away_points, g.home_points, g.away_poss, Venue::Away),
        ] {
            rows.push(GameLogRow {
                date: g.date,
                team: team(t),
                opponent: team(o),
                venue,
                stats: [("poss", poss)].into_iter().collect::<StatVector>(),
                points_for: pf,
                points_against: pa,
            });
        }
    }
    GameLog::new(rows).unwrap()
}

/// Random connected schedule: a random spanning tree plus extra games, one per date.
fn connected_schedule(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|i| (order[i], order[rng.gen_range(0..i)])).collect();
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        pairs.push((a, b));
    }
    pairs.shuffle(rng);
    pairs
}

fn srs_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(4..=8);
        let pairs = connected_schedule(n, rng.gen_range(0..2 * n), &mut rng);
        let games: Vec<Game> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(h, a))| {
                let hp = rng.gen_range(50..110) as f64;
                let mut ap = rng.gen_range(50..110) as f64;
                if ap == hp {
                    ap += 1.0;
                }
                Game {
                    date: day(i as i64),
                    home: h,
                    away: a,
                    home_points: hp,
                    away_points: ap,
                    home_poss: 70.0,
                    away_poss: 70.0,
                }
            })
            .collect();
        let log = to_log(&games);
        let ratings = srs_weighted(&log, day(10_000), &RecencyWeights::uniform(), &SolverSettings::default())
            .map_err(|e| format!("case {case}: {e}"))?;

        // (D - A) r = total margin, with one row replaced by Σ r = 0.
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for g in &games {
            for (t, o, margin) in [
                (g.home, g.away, g.home_points - g.away_points),
                (g.away, g.home, g.away_points - g.home_points),
            ] {
                m[(t, t)] += 1.0;
                m[(t, o)] -= 1.0;
                rhs[t] += margin;
            }
        }
        for j in 0..n {
            m[(0, j)] = 1.0;
        }
        rhs[0] = 0.0;
        let exact = m.lu().solve(&rhs).ok_or_else(|| format!("case {case}: singular oracle system"))?;
        for t in 0..n {
            let got = ratings[&team(t)].rating;
            let err = (got - exact[t]).abs();
            worst = worst.max(err);
            ensure(err <= 1e-6, || format!("case {case}: team {t} rating {got} vs oracle {}", exact[t]))?;
        }
    }
    Ok(format!("100 schedules, max deviation {worst:.2e}"))
}

// 7 -----------------------------------------------------------------------

fn oracle_bandwidth(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let distinct = values.iter().map(|v| (v + 0.0).to_bits()).collect::<BTreeSet<_>>().len();
    if range == 0.0 {
        1e-6
    } else {
        (range / distinct as f64).max(1e-6 * range)
    }
}

fn oracle_sd_floor(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        1e-6 * (hi - lo)
    } else {
        1e-6
    }
}

fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

fn nb_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..100 {
        let kernel = case % 2 == 1;
        let n_classes = rng.gen_range(2..=3usize);
        let n_features = rng.gen_range(1..=5);
        let n_rows = rng.gen_range(n_classes..=100);
        let coarse = rng.gen_bool(0.5);
        let centers: Vec<Vec<f64>> = (0..n_classes)
            .map(|_| (0..n_features).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let rows: Vec<(u8, Vec<f64>)> = (0..n_rows)
            .map(|i| {
                let c = if i < n_classes { i } else { rng.gen_range(0..n_classes) };
                let f = (0..n_features)
                    .map(|j| {
                        let v: f64 = centers[c][j] + rng.gen_range(-1.5..1.5);
                        if coarse {
                            (v * 10.0).round() / 10.0
                        } else {
                            v
                        }
                    })
                    .collect();
                (c as u8, f)
            })
            .collect();
        let labels: Vec<u8> = (0..n_classes as u8).collect();
        let names: Vec<String> = (0..n_features).map(|j| format!("f{j}")).collect();
        let model = nb_train(&rows, names, &labels, kernel).map_err(|e| format!("case {case}: {e}"))?;

        let columns: Vec<Vec<f64>> = (0..n_features).map(|j| rows.iter().map(|r| r.1[j]).collect()).collect();
        for _ in 0..5 {
            let anchor = &rows[rng.gen_range(0..rows.len())].1;
            let x: Vec<f64> = anchor.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
            // Products of densities in log space, each density evaluated directly.
            let log_joint: Vec<f64> = labels
                .iter()
                .map(|&c| {
                    let members: Vec<&Vec<f64>> = rows.iter().filter(|r| r.0 == c).map(|r| &r.1).collect();
                    let mut lp = (members.len() as f64 / rows.len() as f64).ln();
                    for j in 0..n_features {
                        let vals: Vec<f64> = members.iter().map(|m| m[j]).collect();
                        lp += if kernel {
                            let h = oracle_bandwidth(&columns[j]);
                            let terms: Vec<f64> = vals.iter().map(|&v| ln_normal_pdf(x[j], v, h)).collect();
                            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            top + (terms.iter().map(|t| (t - top).exp()).sum::<f64>() / vals.len() as f64).ln()
                        } else {
                            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                            ln_normal_pdf(x[j], mean, var.sqrt().max(oracle_sd_floor(&columns[j])))
                        };
                    }
                    lp
                })
                .collect();
            let top = log_joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ensure(top.is_finite(), || format!("case {case}: oracle has no finite class"))?;
            let joint: Vec<f64> = log_joint.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = joint.iter().sum();
            let post = model.predict(&x).map_err(|e| e.to_string())?;
            for (k, (label, p)) in post.probabilities.iter().enumerate() {
                let q = joint[k] / total;
                ensure(*label == labels[k], || "class order".into())?;
                let rel = if q == 0.0 { p.abs() } else { (p - q).abs() / q };
                worst = worst.max(rel);
                ensure(rel <= 1e-9, || format!("case {case} (kernel {kernel}): posterior {p} vs oracle {q}"))?;
            }
            checked += 1;
        }
    }
    // Sanity: the density the model stores for a single-row class is one Gaussian.
    let model = nb_train(&[(0u8, vec![1.0]), (1u8, vec![3.0])], vec!["x".into()], &[0, 1], true).unwrap();
    ensure(
        matches!(&model.classes[0].densities[0], Density::Kernel { centers, .. } if centers == &vec![1.0]),
        || "single-row kernel".into(),
    )?;
    Ok(format!("{checked} posteriors over 100 models, max relative error {worst:.2e}"))
}

// 8 -----------------------------------------------------------------------

/// Simultaneous multiplicative update of all offenses and defenses, each
/// renormalized to the mean of the raw weighted averages.
fn efficiency_oracle(log: &GameLog, w: &RecencyWeights) -> BTreeMap<TeamId, (f64, f64)> {
    let teams: Vec<TeamId> = log.teams().into_iter().collect();
    let idx: BTreeMap<&TeamId, usize> = teams.iter().enumerate().map(|(i, t)| (t, i)).collect();
    // (team, opponent, weight, oe, de) per team-game.
    let mut obs = Vec::new();
    for t in &teams {
        let games = log.team_games(t);
        let weights = w.weights(games.len());
        for (&g, wt) in games.iter().zip(weights) {
            let r = &log.rows()[g];
            let poss = r.stats.get("poss").unwrap();
            obs.push((idx[t], idx[&r.opponent], wt, 100.0 * r.points_for / poss, 100.0 * r.points_against / poss));
        }
    }
    let n = teams.len();
    let league_o = obs.iter().map(|o| o.3).sum::<f64>() / obs.len() as f64;
    let league_d = obs.iter().map(|o| o.4).sum::<f64>() / obs.len() as f64;
    let avg = |f: &dyn Fn(&(usize, usize, f64, f64, f64)) -> f64| -> Vec<f64> {
        let mut num = vec![0.0; n];
        let mut den = vec![0.0; n];
        for o in &obs {
            num[o.0] += o.2 * f(o);
            den[o.0] += o.2;
        }
        (0..n).map(|t| num[t] / den[t]).collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let raw_o = avg(&|o| o.3);
    let raw_d = avg(&|o| o.4);
    let (target_o, target_d) = (mean(&raw_o), mean(&raw_d));
    let (mut off, mut def) = (raw_o, raw_d);
    for _ in 0..100_000 {
        let mut no = avg(&|o| o.3 * league_d / def[o.1]);
        let mut nd = avg(&|o| o.4 * league_o / off[o.1]);
        let (mo, md) = (mean(&no), mean(&nd));
        no.iter_mut().for_each(|v| *v *= target_o / mo);
        nd.iter_mut().for_each(|v| *v *= target_d / md);
        let change = off.iter().zip(&no).chain(def.iter().zip(&nd)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        off = no;
        def = nd;
        if change < 1e-13 {
            break;
        }
    }
    teams.into_iter().enumerate().map(|(i, t)| (t, (off[i], def[i]))).collect()
}

fn fixed_point_sanity() -> Check {
    let schema = tiny_schema();
    let settings = SolverSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Symmetric leagues: every game has the same box score on both sides.
    for case in 0..20 {
        let n = rng.gen_range(3..=10);
        let pairs = connected_schedule(n, rng.gen_range(0..n), &mut rng);
        let (pts, poss) = (rng.gen_range(50.0..100.0), rng.gen_range(55.0..80.0));
        let games: Vec<Game> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(h, a))| Game {
                date: day(i as i64),
                home: h,
                away: a,
                home_points: pts,
                away_points: pts,
                home_poss: poss,
                away_poss: poss,
            })
            .collect();
        let log = to_log(&games);
        let w = RecencyWeights::default();
        let eff = adjusted_efficiencies(&log, day(10_000), &schema, &w, &settings).map_err(|e| e.to_string())?;
        let raw = 100.0 * pts / poss;
        for rep in eff.values() {
            for key in [ADJ_OE, ADJ_DE] {
                let v = rep.features.get(key).unwrap();
                ensure((v - raw).abs() <= 1e-9, || format!("symmetric case {case}: {key} {v} vs raw {raw}"))?;
            }
        }
    }

    // Random three-team round-robins against the simultaneous-update oracle.
    let mut worst = 0.0f64;
    for case in 0..100 {
        let rounds = rng.gen_range(1..=3);
        let mut games = Vec::new();
        for r in 0..rounds {
            for (h, a) in [(0, 1), (1, 2), (2, 0)] {
                let (h, a) = if rng.gen_bool(0.5) { (h, a) } else { (a, h) };
                games.push(Game {
                    date: day(games.len() as i64 + 10 * r),
                    home: h,
                    away: a,
                    home_points: rng.gen_range(50.0..110.0),
                    away_points: rng.gen_range(50.0..110.0),
                    home_poss: rng.gen_range(55.0..80.0),
                    away_poss: rng.gen_range(55.0..80.0),
                });
            }
        }
        games.shuffle(&mut rng);
        let log = to_log(&games);
        let w = if case % 2 == 0 { RecencyWeights::default() } else { RecencyWeights::uniform() };
        let eff = adjusted_efficiencies(&log, day(10_000), &schema, &w, &settings).map_err(|e| e.to_string())?;
        let oracle = efficiency_oracle(&log, &w);
        for (t, (o, d)) in &oracle {
            let rep = &eff[t];
            for (got, want) in [(rep.features.get(ADJ_OE).unwrap(), *o), (rep.features.get(ADJ_DE).unwrap(), *d)] {
                let err = (got - want).abs();
                worst = worst.max(err);
                ensure(err <= 1e-6, || format!("round-robin case {case}: {t} {got} vs oracle {want}"))?;
            }
        }
    }
    Ok(format!("20 symmetric leagues exact; 100 round-robins, max deviation {worst:.2e}"))
}

// 9 -----------------------------------------------------------------------

fn spec(id: &str, kind: PredictorKind) -> PredictorSpec {
    PredictorSpec {
        id: id.into(),
        kind,
        pyth_exponent: None,
        home_advantage: None,
        home_bonus: None,
        kernel: None,
        features: None,
        file: None,
    }
}

fn box_score(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let hp = rng.gen_range(50..110) as f64;
    let mut ap = rng.gen_range(50..110) as f64;
    if ap == hp {
        ap += 1.0;
    }
    (hp, ap, rng.gen_range(55.0..80.0), rng.gen_range(55.0..80.0))
}

fn prediction_hash<T: std::fmt::Debug>(p: &T) -> u64 {
    let mut h = DefaultHasher::new();
    format!("{p:?}").hash(&mut h);
    h.finish()
}

fn walk_forward_sentinel() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n_teams = 8;
    let mut games = Vec::new();
    let mut matches = Vec::new();
    for d in 0..25 {
        let mut order: Vec<usize> = (0..n_teams).collect();
        order.shuffle(&mut rng);
        for pair in order.chunks(2).take(2) {
            let (hp, ap, hposs, aposs) = box_score(&mut rng);
            let g = Game {
                date: day(d),
                home: pair[0],
                away: pair[1],
                home_points: hp,
                away_points: ap,
                home_poss: hposs,
                away_poss: aposs,
            };
            let (h, a) = (team(g.home), team(g.away));
            let winner = if hp > ap { h.clone() } else { a.clone() };
            let line = canonicalize(&RawQuote::new("b", h.clone(), a.clone(), 150, 130)).unwrap();
            matches.push(
                MatchRecord::new(MatchId::new(format!("g{}", matches.len())), g.date, h, a, false, winner, None, line)
                    .unwrap(),
            );
            games.push(g);
        }
    }
    let mut nb_gauss = spec("nb_gauss", PredictorKind::Nb);
    nb_gauss.kernel = Some(false);
    let specs = vec![
        spec("kp", PredictorKind::Kp),
        spec("srs", PredictorKind::Srs),
        spec("nb", PredictorKind::Nb),
        nb_gauss,
    ];
    let settings = FeatureSettings {
        schema: tiny_schema(),
        weights: RecencyWeights::default(),
        solver: SolverSettings::default(),
    };
    let run = |games: &[Game]| -> Result<BTreeMap<String, BTreeMap<MatchId, u64>>, String> {
        let out = walk_forward(&matches, &to_log(games), &specs, &settings);
        out.into_iter()
            .map(|(id, r)| {
                let preds = r.map_err(|e| format!("{id}: {e}"))?;
                Ok((id, preds.picks.iter().map(|(m, p)| (m.clone(), prediction_hash(p))).collect()))
            })
            .collect()
    };
    let base = run(&games)?;
    ensure(base.values().all(|p| p.len() == matches.len()), || "missing predictions".into())?;

    let mut later_changed = 0;
    for cutoff in [3i64, 8, 12, 17, 21, 24] {
        let mut mutated_rng = ChaCha8Rng::seed_from_u64(900 + cutoff as u64);
        let mutated: Vec<Game> = games
            .iter()
            .map(|g| {
                if g.date >= day(cutoff) {
                    let (hp, ap, hposs, aposs) = box_score(&mut mutated_rng);
                    Game {
                        home_points: hp,
                        away_points: ap,
                        home_poss: hposs,
                        away_poss: aposs,
                        ..*g
                    }
                } else {
                    Game { ..*g }
                }
            })
            .collect();
        let after = run(&mutated)?;
        for (id, preds) in &base {
            for m in &matches {
                let same = preds[&m.match_id] == after[id][&m.match_id];
                if m.date <= day(cutoff) {
                    ensure(same, || {
                        format!("{id}: prediction for {} on {} changed after mutating games from {}", m.match_id, m.date, day(cutoff))
                    })?;
                } else if !same {
                    later_changed += 1;
                }
            }
        }
    }
    ensure(later_changed > 0, || "mutations never changed any later prediction".into())?;
    Ok(format!(
        "{} matches x {} predictors x 6 cutoffs unchanged; {later_changed} later predictions did change",
        matches.len(),
        specs.len()
    ))
}

// 10 ----------------------------------------------------------------------

fn ledger_conservation() -> Check {
    let strategy = prop::collection::vec(
        (101i64..800, 100i64..800, any::<bool>(), any::<bool>(), any::<bool>(), 0i64..8, any::<bool>()),
        1..40,
    );
    let mut runner = TestRunner::new(Config {
        cases: 256,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |spec| {
            let mut ms = Vec::new();
            let mut picks = BTreeMap::new();
            for (i, &(fl, dl, pk, fav_wins, pick_fav, d, home_is_fav)) in spec.iter().enumerate() {
                let (fl, dl) = if pk { (110, -110) } else { (fl, dl) };
                let (fav, dog) = (format!("F{i}"), format!("D{i}"));
                let line = canonicalize(&RawQuote::new("b", fav.as_str(), dog.as_str(), fl, dl)).unwrap();
                let (home, away) = if home_is_fav { (&fav, &dog) } else { (&dog, &fav) };
                let winner = if fav_wins { &fav } else { &dog };
                let m = MatchRecord::new(
                    MatchId::new(format!("m{i:02}")),
                    day(d),
                    TeamId::new(home),
                    TeamId::new(away),
                    false,
                    TeamId::new(winner),
                    None,
                    line,
                )
                .unwrap();
                picks.insert(m.match_id.clone(), TeamId::new(if pick_fav { &fav } else { &dog }));
                ms.push(m);
            }
            let bt = run_backtest(&ms, &picks).unwrap();
            let sum: Money = ms
                .iter()
                .map(|m| settle(&m.line, &picks[&m.match_id], &m.winner).unwrap().delta)
                .sum();
            prop_assert_eq!(bt.total(), sum);
            prop_assert_eq!(bt.entries.len(), ms.len());

            let again = run_backtest(&ms, &picks).unwrap();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            bt.curve.write_csv(&mut a).unwrap();
            again.curve.write_csv(&mut b).unwrap();
            prop_assert_eq!(a, b);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // Whole report directory twice.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ms = season_with_pickems(6, 30, &mut rng);
    let picks: BTreeMap<MatchId, TeamId> = ms
        .iter()
        .map(|m| {
            let t = if rng.gen_bool(0.5) { m.line.fav_team() } else { m.line.dog_team() };
            (m.match_id.clone(), t.clone())
        })
        .collect();
    let runs = vec![PredictorRun {
        id: "random".into(),
        backtest: run_backtest(&ms, &picks).map_err(|e| e.to_string())?,
    }];
    let input = ReportInput {
        matches: &ms,
        runs: &runs,
        split: SeasonSplit {
            post_season_start: Some(day(20)),
        },
        stake: Money::dollars(100),
        baseline: true,
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        let files = emit_reports(d.path(), &input, Phase::Combined, ReportFormats { csv: true }).map_err(|e| e.to_string())?;
        let contents: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(f).unwrap()))
            .collect();
        outputs.push(contents);
    }
    ensure(outputs[0] == outputs[1], || "report reruns differ".into())?;
    Ok(format!("256 random ledgers exact; {} report files byte-identical on rerun", outputs[0].len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("pay-out unit values", payout_unit_values),
        ("Pick 'em swing identity", pickem_swing_identity),
        ("expected-payout midpoint", expected_payout_midpoint),
        ("categorization consistency", categorization_consistency),
        ("accuracy is not pay-out", accuracy_is_not_payout),
        ("SRS oracle equivalence", srs_oracle_equivalence),
        ("Naive Bayes oracle equivalence", nb_oracle_equivalence),
        ("fixed-point sanity", fixed_point_sanity),
        ("walk-forward sentinel", walk_forward_sentinel),
        ("ledger conservation and determinism", ledger_conservation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = std::time::Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let ms = started.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS {:>2}. {name} ({ms} ms): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2}. {name} ({ms} ms): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
