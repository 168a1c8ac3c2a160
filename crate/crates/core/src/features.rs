//! Per-forecast predictor rows.
//!
//! Four predictors are derived for every eligible forecast, in tier order:
//! the absolute difference between the forecast and the consensus, the
//! corrected forecast value, days before the question closes, and the
//! forecaster's mean standardized Brier score (MSBS) over questions already
//! resolved. Tier `t` uses the first `t` predictors.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregateParams, ConsensusEngine};
use crate::error::{Error, Result};
use crate::ingest::{format_time, parse_time, Tournament};
use crate::util::{mean, pop_sd, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    AbsDiffAgg,
    ForecastValue,
    DaysPrior,
    Msbs,
}

impl Predictor {
    pub const ALL: [Predictor; 4] = [
        Predictor::AbsDiffAgg,
        Predictor::ForecastValue,
        Predictor::DaysPrior,
        Predictor::Msbs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::AbsDiffAgg => "abs_diff_agg",
            Predictor::ForecastValue => "forecast_value",
            Predictor::DaysPrior => "days_prior",
            Predictor::Msbs => "msbs",
        }
    }

    /// Label used in coefficient tables.
    pub fn label(self) -> &'static str {
        match self {
            Predictor::AbsDiffAgg => "Abs Diff Agg",
            Predictor::ForecastValue => "Forecast Value",
            Predictor::DaysPrior => "Days Prior Closed",
            Predictor::Msbs => "MSBS",
        }
    }

    pub fn from_name(name: &str) -> Option<Predictor> {
        Predictor::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Predictors used by a tier (1 to 4).
pub fn tier_predictors(tier: u8) -> Result<&'static [Predictor]> {
    match tier {
        1..=4 => Ok(&Predictor::ALL[..tier as usize]),
        _ => Err(Error::config(format!("tier must be 1..=4, got {tier}"))),
    }
}

/// Whether a question resolving exactly at the query instant counts as resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionCutoff {
    /// `resolution_time < instant`.
    #[default]
    Strict,
    /// `resolution_time <= instant`.
    Inclusive,
}

/// Squared error of a probability against a binary outcome.
pub fn brier(p: f64, outcome: u8) -> f64 {
    (p - outcome as f64).powi(2)
}

/// Standardizes `target` against `others`; zero when the others have no
/// spread. The flag is set when `others` is empty (the score is then 0).
pub fn standardize_brier_within_question(target: f64, others: &[f64]) -> (f64, bool) {
    if others.is_empty() {
        return (0.0, true);
    }
    if others.iter().all(|&o| o == others[0]) {
        return (0.0, false);
    }
    let sd = pop_sd(others);
    ((target - mean(others)) / sd, false)
}

/// Per-forecaster history of within-question standardized Brier scores,
/// ordered by question resolution time, with prefix sums for O(log n) MSBS.
#[derive(Debug, Clone, Default)]
pub struct MsbsIndex {
    entries: Vec<Vec<(DateTime<Utc>, f64)>>,
    prefix: Vec<Vec<f64>>,
    sole_forecaster_scores: usize,
}

impl MsbsIndex {
    pub fn build(tournament: &Tournament) -> Self {
        let forecasts = tournament.forecasts();
        let mut entries: Vec<Vec<(DateTime<Utc>, f64)>> =
            vec![Vec::new(); tournament.forecasters().len()];
        let mut sole = 0;
        for (q, refs) in tournament.forecasts_by_question().iter().enumerate() {
            let meta = tournament.question(q);
            // final forecast per forecaster (refs are in time order)
            let mut last: HashMap<usize, f64> = HashMap::new();
            for &r in refs {
                last.insert(forecasts[r].forecaster, forecasts[r].corrected_value);
            }
            let mut scored: Vec<(usize, f64)> = last
                .into_iter()
                .map(|(f, p)| (f, brier(p, meta.outcome)))
                .collect();
            scored.sort_by_key(|&(f, _)| f);
            for (f, z, flagged) in standardize_leave_one_out(&scored) {
                sole += usize::from(flagged);
                entries[f].push((meta.resolution_time, z));
            }
        }
        let mut prefix = Vec::with_capacity(entries.len());
        for list in &mut entries {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut acc = 0.0;
            let mut p = Vec::with_capacity(list.len() + 1);
            p.push(0.0);
            for &(_, z) in list.iter() {
                acc += z;
                p.push(acc);
            }
            prefix.push(p);
        }
        Self {
            entries,
            prefix,
            sole_forecaster_scores: sole,
        }
    }

    /// Raw MSBS of a forecaster from questions resolved before `instant`.
    pub fn msbs_at(
        &self,
        forecaster: usize,
        instant: DateTime<Utc>,
        cutoff: ResolutionCutoff,
    ) -> Option<f64> {
        let list = self.entries.get(forecaster)?;
        let n = match cutoff {
            ResolutionCutoff::Strict => list.partition_point(|(t, _)| *t < instant),
            ResolutionCutoff::Inclusive => list.partition_point(|(t, _)| *t <= instant),
        };
        (n > 0).then(|| self.prefix[forecaster][n] / n as f64)
    }

    /// Resolution times of the questions that would enter `msbs_at`.
    pub fn contributing_resolutions(
        &self,
        forecaster: usize,
        instant: DateTime<Utc>,
        cutoff: ResolutionCutoff,
    ) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        self.entries[forecaster]
            .iter()
            .map(|(t, _)| *t)
            .take_while(move |t| match cutoff {
                ResolutionCutoff::Strict => *t < instant,
                ResolutionCutoff::Inclusive => *t <= instant,
            })
    }

    /// Number of per-question scores that had no peers to standardize against.
    pub fn sole_forecaster_scores(&self) -> usize {
        self.sole_forecaster_scores
    }
}

/// Standardizes each score against all others in O(n) using shifted sums.
/// Zero spread among the others is detected exactly from value multiplicities.
fn standardize_leave_one_out(scored: &[(usize, f64)]) -> Vec<(usize, f64, bool)> {
    let n = scored.len();
    if n == 1 {
        return vec![(scored[0].0, 0.0, true)];
    }
    let mut multiplicity: HashMap<u64, usize> = HashMap::new();
    for &(_, b) in scored {
        *multiplicity.entry(b.to_bits()).or_default() += 1;
    }
    let distinct = multiplicity.len();
    let shift = scored.iter().map(|s| s.1).sum::<f64>() / n as f64;
    let s1: f64 = scored.iter().map(|s| s.1 - shift).sum();
    let s2: f64 = scored.iter().map(|s| (s.1 - shift).powi(2)).sum();
    let m = (n - 1) as f64;
    scored
        .iter()
        .map(|&(f, b)| {
            let others_constant =
                distinct == 1 || (distinct == 2 && multiplicity[&b.to_bits()] == 1);
            if others_constant {
                return (f, 0.0, false);
            }
            let c = b - shift;
            let mean_o = (s1 - c) / m;
            let var_o = ((s2 - c * c) / m - mean_o * mean_o).max(0.0);
            let z = if var_o > 0.0 {
                (c - mean_o) / var_o.sqrt()
            } else {
                0.0
            };
            (f, z, false)
        })
        .collect()
}

/// Fractional days from `timestamp` until `close`.
pub fn days_prior(timestamp: DateTime<Utc>, close: DateTime<Utc>) -> Result<f64> {
    let ms = (close - timestamp).num_milliseconds();
    if ms < 0 {
        return Err(Error::domain("forecast made after question close"));
    }
    Ok(ms as f64 / 86_400_000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub aggregate: AggregateParams,
    pub resolution_cutoff: ResolutionCutoff,
    /// Winsorization bound for the globally standardized MSBS.
    pub winsor_bound: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            aggregate: AggregateParams::default(),
            resolution_cutoff: ResolutionCutoff::Strict,
            winsor_bound: 3.0,
        }
    }
}

impl FeatureParams {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("params serialize"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub question_id: String,
    pub forecaster_id: String,
    pub timestamp: DateTime<Utc>,
    /// Recalibrated consensus at the forecast's instant (the baseline score).
    pub consensus: f64,
    pub forecast_value: f64,
    pub abs_diff_agg: f64,
    pub days_prior: f64,
    /// Globally standardized and winsorized MSBS.
    pub msbs: Option<f64>,
    pub outcome: u8,
}

impl FeatureRow {
    pub fn value(&self, p: Predictor) -> Option<f64> {
        match p {
            Predictor::AbsDiffAgg => Some(self.abs_diff_agg),
            Predictor::ForecastValue => Some(self.forecast_value),
            Predictor::DaysPrior => Some(self.days_prior),
            Predictor::Msbs => self.msbs,
        }
    }
}

/// All forecasts with every predictor computed; MSBS may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
    /// Raw (pre-standardization) MSBS per row.
    pub raw_msbs: Vec<Option<f64>>,
    /// Mean and population sd used for the global MSBS standardization.
    pub msbs_scale: (f64, f64),
    pub tournament_hash: String,
    pub params_hash: String,
    pub sole_forecaster_scores: usize,
}

pub fn build_feature_table(
    tournament: &Tournament,
    params: &FeatureParams,
) -> Result<FeatureTable> {
    let engine = ConsensusEngine::new(tournament, params.aggregate.clone())?;
    let trace = engine.trace();
    let msbs = engine.msbs_index();
    let forecasts = tournament.forecasts();
    let mut rows = Vec::with_capacity(forecasts.len());
    let mut raw = Vec::with_capacity(forecasts.len());
    for (f, tr) in forecasts.iter().zip(&trace) {
        let q = tournament.question(f.question);
        rows.push(FeatureRow {
            question_id: q.question_id.clone(),
            forecaster_id: tournament.forecaster_id(f.forecaster).to_string(),
            timestamp: f.timestamp,
            consensus: tr.p_hat,
            forecast_value: f.corrected_value,
            abs_diff_agg: (f.corrected_value - tr.p_hat).abs(),
            days_prior: days_prior(f.timestamp, q.close_time)?,
            msbs: None,
            outcome: q.outcome,
        });
        raw.push(msbs.msbs_at(f.forecaster, f.timestamp, params.resolution_cutoff));
    }
    let present: Vec<f64> = raw.iter().flatten().copied().collect();
    let (m, sd) = if present.is_empty() {
        (0.0, 0.0)
    } else {
        (mean(&present), pop_sd(&present))
    };
    for (row, r) in rows.iter_mut().zip(&raw) {
        row.msbs = r.map(|x| {
            let z = if sd > 0.0 { (x - m) / sd } else { 0.0 };
            z.clamp(-params.winsor_bound, params.winsor_bound)
        });
    }
    Ok(FeatureTable {
        rows,
        raw_msbs: raw,
        msbs_scale: (m, sd),
        tournament_hash: tournament.content_hash(),
        params_hash: params.hash(),
        sole_forecaster_scores: msbs.sole_forecaster_scores(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tournament_hash: String,
    pub params_hash: String,
}

/// Rows restricted to a tier's predictors. Tier 4 keeps only rows whose
/// forecaster had a resolved question before the forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct TierDataset {
    pub tier: u8,
    pub rows: Vec<FeatureRow>,
    pub provenance: Provenance,
}

impl TierDataset {
    pub fn from_table(table: &FeatureTable, tier: u8) -> Result<Self> {
        let predictors = tier_predictors(tier)?;
        let rows = table
            .rows
            .iter()
            .filter(|r| predictors.iter().all(|&p| r.value(p).is_some()))
            .cloned()
            .collect();
        Ok(Self {
            tier,
            rows,
            provenance: Provenance {
                tournament_hash: table.tournament_hash.clone(),
                params_hash: table.params_hash.clone(),
            },
        })
    }

    pub fn predictors(&self) -> &'static [Predictor] {
        tier_predictors(self.tier).expect("tier validated at construction")
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, p: Predictor) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.value(p).expect("tier rows carry all tier predictors"))
            .collect()
    }

    pub fn outcomes(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.outcome).collect()
    }

    pub fn consensus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.consensus).collect()
    }

    pub fn question_ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.question_id.as_str()).collect()
    }

    /// CSV with a `#` provenance line, then a header; absent values are empty.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(
            writer,
            "# tier={} params_hash={} tournament_hash={}",
            self.tier, self.provenance.params_hash, self.provenance.tournament_hash
        )?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "question_id",
            "forecaster_id",
            "timestamp",
            "outcome",
            "consensus",
        ];
        header.extend(self.predictors().iter().map(|p| p.name()));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.question_id.clone(),
                r.forecaster_id.clone(),
                format_time(r.timestamp),
                r.outcome.to_string(),
                r.consensus.to_string(),
            ];
            for &p in self.predictors() {
                rec.push(r.value(p).map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let mut tier = None;
        let mut params_hash = String::new();
        let mut tournament_hash = String::new();
        for tok in first.trim().trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("tier", v)) => tier = v.parse::<u8>().ok(),
                Some(("params_hash", v)) => params_hash = v.to_string(),
                Some(("tournament_hash", v)) => tournament_hash = v.to_string(),
                _ => {}
            }
        }
        let tier =
            tier.ok_or_else(|| Error::Header("tier dataset lacks a provenance line".into()))?;
        let predictors = tier_predictors(tier)?;
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let idx = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Header(format!("missing column `{name}`")))
        };
        let (iq, ifc, it, io, ic) = (
            idx("question_id")?,
            idx("forecaster_id")?,
            idx("timestamp")?,
            idx("outcome")?,
            idx("consensus")?,
        );
        let pidx: Vec<(Predictor, usize)> = predictors
            .iter()
            .map(|&p| Ok((p, idx(p.name())?)))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() + 1).unwrap_or(0);
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|e| Error::Row {
                    line,
                    message: format!("bad number `{}`: {e}", &rec[i]),
                })
            };
            let mut row = FeatureRow {
                question_id: rec[iq].to_string(),
                forecaster_id: rec[ifc].to_string(),
                timestamp: parse_time(&rec[it]).map_err(|message| Error::Row { line, message })?,
                consensus: num(ic)?,
                forecast_value: f64::NAN,
                abs_diff_agg: f64::NAN,
                days_prior: f64::NAN,
                msbs: None,
                outcome: match &rec[io] {
                    "0" => 0,
                    "1" => 1,
                    o => {
                        return Err(Error::Row {
                            line,
                            message: format!("bad outcome `{o}`"),
                        })
                    }
                },
            };
            for &(p, i) in &pidx {
                let v = num(i)?;
                match p {
                    Predictor::AbsDiffAgg => row.abs_diff_agg = v,
                    Predictor::ForecastValue => row.forecast_value = v,
                    Predictor::DaysPrior => row.days_prior = v,
                    Predictor::Msbs => row.msbs = Some(v),
                }
            }
            rows.push(row);
        }
        Ok(Self {
            tier,
            rows,
            provenance: Provenance {
                tournament_hash,
                params_hash,
            },
        })
    }
}

/// Builds the feature table and restricts it to `tier`.
pub fn build_tier_dataset(
    tournament: &Tournament,
    tier: u8,
    params: &FeatureParams,
) -> Result<TierDataset> {
    tier_predictors(tier)?;
    TierDataset::from_table(&build_feature_table(tournament, params)?, tier)
}
