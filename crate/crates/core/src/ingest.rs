//! Tournament ingestion: CSV parsing, eligibility filtering, extreme-value
//! correction and seeded synthetic tournaments.
//!
//! A [`Tournament`] only ever holds eligible questions (binary, not
//! conditional, not voided, resolved) and the forecasts made on them at or
//! before the question close. Forecasts are kept in a total order
//! `(timestamp, question_id, forecaster_id)` so that every downstream stage is
//! deterministic.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, SecondsFormat, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, logistic};

/// Lower replacement for a forecast of exactly 0.
pub const CORRECTED_MIN: f64 = 0.001;
/// Upper replacement for a forecast of exactly 1.
pub const CORRECTED_MAX: f64 = 0.999;

/// Index of a forecast inside [`Tournament::forecasts`].
pub type ForecastRef = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMeta {
    pub question_id: String,
    pub close_time: DateTime<Utc>,
    pub resolution_time: DateTime<Utc>,
    /// 0 or 1.
    pub outcome: u8,
    pub is_binary: bool,
    pub is_conditional: bool,
    pub is_voided: bool,
}

/// One probability forecast. `question` and `forecaster` index the
/// tournament's sorted id tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub question: usize,
    pub forecaster: usize,
    pub timestamp: DateTime<Utc>,
    pub raw_value: f64,
    pub corrected_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tournament {
    questions: Vec<QuestionMeta>,
    forecasters: Vec<String>,
    forecasts: Vec<ForecastRecord>,
}

/// A forecast row before eligibility filtering and id interning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawForecast {
    pub question_id: String,
    pub forecaster_id: String,
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

/// Question metadata as read from the source, before eligibility filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuestion {
    pub question_id: String,
    pub close_time: DateTime<Utc>,
    pub resolution_time: Option<DateTime<Utc>>,
    pub outcome: Option<u8>,
    pub is_binary: bool,
    pub is_conditional: bool,
    pub is_voided: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: u64,
    pub rows_kept: u64,
    pub drops_by_reason: BTreeMap<String, u64>,
}

impl IngestSummary {
    fn drop(&mut self, reason: &str) {
        *self.drops_by_reason.entry(reason.to_string()).or_default() += 1;
    }
}

/// Replaces exact 0 and 1 by 0.001 and 0.999; identity elsewhere on [0, 1].
pub fn correct_extremes(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(if p == 0.0 {
        CORRECTED_MIN
    } else if p == 1.0 {
        CORRECTED_MAX
    } else {
        p
    })
}

impl Tournament {
    /// Filters, deduplicates, corrects and orders raw rows.
    ///
    /// Forecasts must be given in source order: duplicates on
    /// `(question, forecaster, timestamp)` keep the last occurrence.
    pub fn from_raw(
        questions: Vec<RawQuestion>,
        forecasts: Vec<RawForecast>,
    ) -> Result<(Tournament, IngestSummary)> {
        let mut summary = IngestSummary {
            rows_read: forecasts.len() as u64,
            ..Default::default()
        };

        let mut eligible: BTreeMap<String, QuestionMeta> = BTreeMap::new();
        let mut rejected: HashMap<String, &'static str> = HashMap::new();
        for q in questions {
            match eligibility(&q) {
                Ok(meta) => {
                    eligible.insert(q.question_id.clone(), meta);
                }
                Err(reason) => {
                    rejected.insert(q.question_id.clone(), reason);
                }
            }
        }

        let mut kept: Vec<RawForecast> = Vec::with_capacity(forecasts.len());
        for f in forecasts {
            if !(0.0..=1.0).contains(&f.value) {
                return Err(Error::domain(format!(
                    "forecast value {} outside [0, 1]",
                    f.value
                )));
            }
            if let Some(reason) = rejected.get(&f.question_id) {
                summary.drop(reason);
                continue;
            }
            let Some(meta) = eligible.get(&f.question_id) else {
                return Err(Error::Lookup {
                    kind: "question",
                    id: f.question_id.clone(),
                });
            };
            if f.timestamp > meta.close_time {
                summary.drop("after_close");
                continue;
            }
            kept.push(f);
        }

        // Keep the last occurrence of each (question, forecaster, timestamp).
        let mut last: HashMap<(&str, &str, DateTime<Utc>), usize> = HashMap::new();
        for (i, f) in kept.iter().enumerate() {
            last.insert((&f.question_id, &f.forecaster_id, f.timestamp), i);
        }
        let keep_mask: Vec<bool> = kept
            .iter()
            .enumerate()
            .map(|(i, f)| {
                last[&(
                    f.question_id.as_str(),
                    f.forecaster_id.as_str(),
                    f.timestamp,
                )] == i
            })
            .collect();
        let duplicates = keep_mask.iter().filter(|k| !**k).count();
        for _ in 0..duplicates {
            summary.drop("duplicate");
        }
        let kept: Vec<RawForecast> = kept
            .into_iter()
            .zip(keep_mask)
            .filter_map(|(f, k)| k.then_some(f))
            .collect();

        // Only questions that carry at least one forecast are retained.
        let mut used: BTreeMap<&str, ()> = BTreeMap::new();
        let mut forecaster_names: Vec<String> = Vec::new();
        for f in &kept {
            used.insert(&f.question_id, ());
            forecaster_names.push(f.forecaster_id.clone());
        }
        forecaster_names.sort();
        forecaster_names.dedup();
        let questions: Vec<QuestionMeta> = eligible
            .into_values()
            .filter(|q| used.contains_key(q.question_id.as_str()))
            .collect();
        let q_index: HashMap<&str, usize> = questions
            .iter()
            .enumerate()
            .map(|(i, q)| (q.question_id.as_str(), i))
            .collect();
        let f_index: HashMap<&str, usize> = forecaster_names
            .iter()
            .enumerate()
            .map(|(i, f)| (f.as_str(), i))
            .collect();

        let mut records: Vec<ForecastRecord> = kept
            .iter()
            .map(|f| {
                Ok(ForecastRecord {
                    question: q_index[f.question_id.as_str()],
                    forecaster: f_index[f.forecaster_id.as_str()],
                    timestamp: f.timestamp,
                    raw_value: f.value,
                    corrected_value: correct_extremes(f.value)?,
                })
            })
            .collect::<Result<_>>()?;
        records.sort_by(|a, b| {
            (a.timestamp, a.question, a.forecaster).cmp(&(b.timestamp, b.question, b.forecaster))
        });
        summary.rows_kept = records.len() as u64;

        Ok((
            Tournament {
                questions,
                forecasters: forecaster_names,
                forecasts: records,
            },
            summary,
        ))
    }

    pub fn questions(&self) -> &[QuestionMeta] {
        &self.questions
    }

    pub fn forecasters(&self) -> &[String] {
        &self.forecasters
    }

    pub fn forecasts(&self) -> &[ForecastRecord] {
        &self.forecasts
    }

    pub fn question(&self, idx: usize) -> &QuestionMeta {
        &self.questions[idx]
    }

    pub fn question_index(&self, question_id: &str) -> Result<usize> {
        self.questions
            .binary_search_by(|q| q.question_id.as_str().cmp(question_id))
            .map_err(|_| Error::Lookup {
                kind: "question",
                id: question_id.to_string(),
            })
    }

    pub fn forecaster_id(&self, idx: usize) -> &str {
        &self.forecasters[idx]
    }

    pub fn is_empty(&self) -> bool {
        self.forecasts.is_empty()
    }

    /// Forecast references grouped by question, each group in tournament order.
    pub fn forecasts_by_question(&self) -> Vec<Vec<ForecastRef>> {
        let mut groups = vec![Vec::new(); self.questions.len()];
        for (i, f) in self.forecasts.iter().enumerate() {
            groups[f.question].push(i);
        }
        groups
    }

    /// SHA-256 of the canonical CSV serialization.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        crate::util::sha256_hex(&buf)
    }

    /// Writes the canonical tournament CSV (default column names).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let schema = CsvSchema::default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(schema.columns())?;
        for f in &self.forecasts {
            let q = &self.questions[f.question];
            w.write_record([
                q.question_id.as_str(),
                self.forecasters[f.forecaster].as_str(),
                &format_time(f.timestamp),
                &f.raw_value.to_string(),
                &format_time(q.close_time),
                &format_time(q.resolution_time),
                &q.outcome.to_string(),
                "binary",
                "false",
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn eligibility(q: &RawQuestion) -> std::result::Result<QuestionMeta, &'static str> {
    if !q.is_binary {
        return Err("non_binary");
    }
    if q.is_conditional {
        return Err("conditional");
    }
    if q.is_voided {
        return Err("voided");
    }
    match (q.resolution_time, q.outcome) {
        (Some(resolution_time), Some(outcome)) => Ok(QuestionMeta {
            question_id: q.question_id.clone(),
            close_time: q.close_time,
            resolution_time,
            outcome,
            is_binary: true,
            is_conditional: false,
            is_voided: false,
        }),
        _ => Err("unresolved"),
    }
}

/// Maps the logical input fields to source column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub question_id: String,
    pub forecaster_id: String,
    pub timestamp: String,
    pub forecast_value: String,
    pub question_close: String,
    pub question_resolution: String,
    pub outcome: String,
    pub question_type: String,
    pub voided: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            question_id: "question_id".into(),
            forecaster_id: "forecaster_id".into(),
            timestamp: "timestamp".into(),
            forecast_value: "forecast_value".into(),
            question_close: "question_close".into(),
            question_resolution: "question_resolution".into(),
            outcome: "outcome".into(),
            question_type: "question_type".into(),
            voided: "voided".into(),
        }
    }
}

impl CsvSchema {
    fn columns(&self) -> [&str; 9] {
        [
            &self.question_id,
            &self.forecaster_id,
            &self.timestamp,
            &self.forecast_value,
            &self.question_close,
            &self.question_resolution,
            &self.outcome,
            &self.question_type,
            &self.voided,
        ]
    }
}

/// Formats a UTC instant as RFC 3339 with a `Z` suffix.
pub fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Parses an ISO 8601 instant that is explicitly UTC (`Z` or `+00:00`).
/// A bare `YYYY-MM-DD` date is read as midnight UTC.
pub fn parse_time(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc());
    }
    let t = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp `{s}`: {e}"))?;
    if t.offset().local_minus_utc() != 0 {
        return Err(format!("timestamp `{s}` is not UTC"));
    }
    Ok(t.with_timezone(&Utc))
}

fn parse_flag(s: &str) -> std::result::Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "f" | "n" => Ok(false),
        "1" | "true" | "yes" | "t" | "y" => Ok(true),
        other => Err(format!("bad flag `{other}`")),
    }
}

/// Parses a tournament CSV, applying the eligibility filter.
pub fn parse_forecasts<R: Read>(
    source: R,
    schema: &CsvSchema,
) -> Result<(Tournament, IngestSummary)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::Header("missing header row".into()));
    }
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Header(format!("missing column `{name}`")))
    };
    let c_q = col(&schema.question_id)?;
    let c_f = col(&schema.forecaster_id)?;
    let c_t = col(&schema.timestamp)?;
    let c_v = col(&schema.forecast_value)?;
    let c_close = col(&schema.question_close)?;
    let c_res = col(&schema.question_resolution)?;
    let c_out = col(&schema.outcome)?;
    let c_type = col(&schema.question_type)?;
    let c_void = col(&schema.voided)?;

    let mut questions: BTreeMap<String, RawQuestion> = BTreeMap::new();
    let mut forecasts = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row { line, message };
        let field = |i: usize, name: &str| -> Result<&str> {
            let v = record.get(i).unwrap_or("").trim();
            if v.is_empty() {
                Err(Error::Row {
                    line,
                    message: format!("missing field `{name}`"),
                })
            } else {
                Ok(v)
            }
        };

        let question_id = field(c_q, &schema.question_id)?.to_string();
        let forecaster_id = field(c_f, &schema.forecaster_id)?.to_string();
        let timestamp = parse_time(field(c_t, &schema.timestamp)?).map_err(row_err)?;
        let value: f64 = field(c_v, &schema.forecast_value)?
            .parse()
            .map_err(|e| row_err(format!("bad forecast value: {e}")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(row_err(format!("forecast value {value} outside [0, 1]")));
        }
        let close_time = parse_time(field(c_close, &schema.question_close)?).map_err(row_err)?;
        let res = record.get(c_res).unwrap_or("").trim();
        let resolution_time = if res.is_empty() {
            None
        } else {
            Some(parse_time(res).map_err(row_err)?)
        };
        let outcome = match record.get(c_out).unwrap_or("").trim() {
            "" => None,
            "0" => Some(0u8),
            "1" => Some(1u8),
            other => return Err(row_err(format!("bad outcome `{other}`"))),
        };
        let qtype = record.get(c_type).unwrap_or("").trim().to_ascii_lowercase();
        let (is_binary, is_conditional) = match qtype.as_str() {
            "" | "binary" => (true, false),
            "conditional" => (true, true),
            _ => (false, false),
        };
        let is_voided = parse_flag(record.get(c_void).unwrap_or("")).map_err(row_err)?;

        let meta = RawQuestion {
            question_id: question_id.clone(),
            close_time,
            resolution_time,
            outcome,
            is_binary,
            is_conditional,
            is_voided,
        };
        match questions.get(&question_id) {
            Some(existing) if *existing != meta => {
                return Err(row_err(format!(
                    "question `{question_id}` metadata differs from an earlier row"
                )));
            }
            Some(_) => {}
            None => {
                questions.insert(question_id.clone(), meta);
            }
        }
        forecasts.push(RawForecast {
            question_id,
            forecaster_id,
            timestamp,
            value,
        });
    }
    Tournament::from_raw(questions.into_values().collect(), forecasts)
}

/// Settings for a seeded synthetic tournament.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_questions: usize,
    pub n_forecasters: usize,
    /// Width of the uniform skill distribution around 0.5, in [0, 1].
    pub skill_spread: f64,
    /// Probability that a question resolves 1.
    pub base_rate: f64,
    /// Probability that a forecaster takes part in a given question.
    pub participation: f64,
    /// Mean number of forecasts per participant per question (geometric, >= 1).
    pub mean_updates: f64,
    /// How strongly forecasts track the outcome; 0 gives pure-noise forecasters.
    pub signal: f64,
    /// Days each question stays open.
    pub question_days: f64,
    /// Days between successive question openings.
    pub stagger_days: f64,
    pub start: DateTime<Utc>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_questions: 40,
            n_forecasters: 40,
            skill_spread: 0.8,
            base_rate: 0.35,
            participation: 0.5,
            mean_updates: 2.5,
            signal: 2.0,
            question_days: 60.0,
            stagger_days: 6.0,
            start: "2011-09-01T00:00:00Z".parse().expect("valid literal"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_questions == 0 || self.n_forecasters == 0 {
            return Err(Error::config("synthetic counts must be at least 1"));
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(Error::config("base_rate must lie in (0, 1)"));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::config("participation must lie in (0, 1]"));
        }
        if !(self.mean_updates >= 1.0) {
            return Err(Error::config("mean_updates must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.skill_spread) {
            return Err(Error::config("skill_spread must lie in [0, 1]"));
        }
        if !(self.signal >= 0.0) || !(self.question_days > 0.0) || !(self.stagger_days >= 0.0) {
            return Err(Error::config(
                "signal, question_days and stagger_days must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Per-forecaster skill in [0, 1] assigned by the generator for `seed`.
pub fn synthetic_skills(config: &SynthConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth/skill"));
    (0..config.n_forecasters)
        .map(|_| 0.5 + config.skill_spread * (rng.random::<f64>() - 0.5))
        .collect()
}

/// Generates a deterministic synthetic tournament.
///
/// Each forecaster reads a question through a logit-scale signal whose gain
/// grows with skill and with elapsed question time, plus a question-level
/// bias shared by the crowd and private noise that shrinks with skill.
/// Values are rounded to two decimals, so exact 0 and 1 occur.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(Tournament, IngestSummary)> {
    config.validate()?;
    let skills = synthetic_skills(config, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth/forecasts"));
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let updates = Geometric::new(1.0 / config.mean_updates).expect("p in (0, 1]");
    let day = TimeDelta::seconds(86_400);
    let secs = |days: f64| TimeDelta::seconds((days * 86_400.0).round() as i64);

    let width = config.n_questions.to_string().len().max(3);
    let fwidth = config.n_forecasters.to_string().len().max(3);
    let mut questions = Vec::with_capacity(config.n_questions);
    let mut forecasts = Vec::new();
    for qi in 0..config.n_questions {
        let open = config.start + secs(config.stagger_days * qi as f64);
        let close = open + secs(config.question_days);
        let outcome = u8::from(rng.random::<f64>() < config.base_rate);
        let bias = 0.8 * unit.sample(&mut rng);
        let question_id = format!("Q{qi:0width$}");
        questions.push(RawQuestion {
            question_id: question_id.clone(),
            close_time: close,
            resolution_time: Some(close + day),
            outcome: Some(outcome),
            is_binary: true,
            is_conditional: false,
            is_voided: false,
        });
        let direction = if outcome == 1 { 1.0 } else { -1.0 };
        for (fi, &skill) in skills.iter().enumerate() {
            if rng.random::<f64>() >= config.participation {
                continue;
            }
            let n = 1 + updates.sample(&mut rng) as usize;
            let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            times.sort_by(f64::total_cmp);
            let noise_sd = 0.4 + 1.2 * (1.0 - skill);
            let gain = config.signal * (0.5 + skill);
            for frac in times {
                let info = 0.25 + 0.75 * frac;
                let logit = direction * gain * info + bias + noise_sd * unit.sample(&mut rng);
                let value = (logistic(logit) * 100.0).round() / 100.0;
                forecasts.push(RawForecast {
                    question_id: question_id.clone(),
                    forecaster_id: format!("F{fi:0fwidth$}"),
                    timestamp: open + secs(config.question_days * frac),
                    value,
                });
            }
        }
    }
    Tournament::from_raw(questions, forecasts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "question_id,forecaster_id,timestamp,forecast_value,question_close,question_resolution,outcome,question_type,voided\n";

    #[test]
    fn correct_extremes_replaces_only_endpoints() {
        assert_eq!(correct_extremes(0.0).unwrap(), 0.001);
        assert_eq!(correct_extremes(1.0).unwrap(), 0.999);
        assert_eq!(correct_extremes(0.37).unwrap(), 0.37);
        assert!(correct_extremes(1.2).is_err());
        assert!(correct_extremes(-0.1).is_err());
    }

    #[test]
    fn empty_file_with_header_gives_empty_tournament() {
        let (t, s) = parse_forecasts(HEADER.as_bytes(), &CsvSchema::default()).unwrap();
        assert!(t.questions().is_empty());
        assert!(t.forecasts().is_empty());
        assert_eq!(s.rows_read, 0);
    }

    #[test]
    fn missing_header_is_fatal() {
        let err = parse_forecasts("".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Header(_)), "{err}");
        let err = parse_forecasts("a,b\n1,2\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Header(_)), "{err}");
    }

    #[test]
    fn voided_question_rows_are_dropped() {
        let csv = format!(
            "{HEADER}Q1,F1,2011-10-01T00:00:00Z,0.4,2011-12-31T00:00:00Z,2011-12-31T00:00:00Z,,binary,true\n\
             Q1,F2,2011-10-02T00:00:00Z,0.6,2011-12-31T00:00:00Z,2011-12-31T00:00:00Z,,binary,true\n"
        );
        let (t, s) = parse_forecasts(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(t.questions().len(), 0);
        assert_eq!(s.rows_kept, 0);
        assert_eq!(s.drops_by_reason["voided"], 2);
    }

    #[test]
    fn row_errors_carry_line_numbers() {
        let csv = format!(
            "{HEADER}Q1,F1,2011-10-01T00:00:00Z,0.4,2011-12-31T00:00:00Z,2011-12-31T00:00:00Z,1,binary,false\n\
             Q1,F2,2011-10-02T00:00:00Z,1.4,2011-12-31T00:00:00Z,2011-12-31T00:00:00Z,1,binary,false\n"
        );
        match parse_forecasts(csv.as_bytes(), &CsvSchema::default()).unwrap_err() {
            Error::Row { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let csv = format!("{HEADER}Q1,F1,yesterday,0.4,2011-12-31T00:00:00Z,2011-12-31T00:00:00Z,1,binary,false\n");
        assert!(matches!(
            parse_forecasts(csv.as_bytes(), &CsvSchema::default()),
            Err(Error::Row { line: 2, .. })
        ));
        let csv = format!("{HEADER}Q1,,2011-10-01T00:00:00Z,0.4,2011-12-31T00:00:00Z,2011-12-31T00:00:00Z,1,binary,false\n");
        assert!(matches!(
            parse_forecasts(csv.as_bytes(), &CsvSchema::default()),
            Err(Error::Row { line: 2, .. })
        ));
    }

    #[test]
    fn non_utc_offsets_are_rejected() {
        assert!(parse_time("2011-10-01T00:00:00+02:00").is_err());
        assert!(parse_time("2011-10-01T00:00:00+00:00").is_ok());
        assert_eq!(
            parse_time("2011-10-01").unwrap(),
            parse_time("2011-10-01T00:00:00Z").unwrap()
        );
    }

    #[test]
    fn filters_late_duplicate_and_ineligible_rows() {
        let close = "2011-12-31T00:00:00Z";
        let csv = format!(
            "{HEADER}\
             Q1,F1,2011-10-01T00:00:00Z,0.4,{close},{close},1,binary,false\n\
             Q1,F1,2011-10-01T00:00:00Z,0.5,{close},{close},1,binary,false\n\
             Q1,F2,2012-01-02T00:00:00Z,0.9,{close},{close},1,binary,false\n\
             Q2,F1,2011-10-01T00:00:00Z,0.4,{close},{close},1,conditional,false\n\
             Q3,F1,2011-10-01T00:00:00Z,0.4,{close},{close},,multinomial,false\n\
             Q4,F3,2011-11-01T00:00:00Z,0,{close},{close},0,binary,false\n"
        );
        let (t, s) = parse_forecasts(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(s.rows_read, 6);
        assert_eq!(s.rows_kept, 2);
        assert_eq!(s.drops_by_reason["duplicate"], 1);
        assert_eq!(s.drops_by_reason["after_close"], 1);
        assert_eq!(s.drops_by_reason["conditional"], 1);
        assert_eq!(s.drops_by_reason["non_binary"], 1);
        assert_eq!(t.questions().len(), 2);
        // last duplicate wins
        let q1 = t.question_index("Q1").unwrap();
        let f = t.forecasts().iter().find(|f| f.question == q1).unwrap();
        assert_eq!(f.raw_value, 0.5);
        let q4 = t.question_index("Q4").unwrap();
        let f = t.forecasts().iter().find(|f| f.question == q4).unwrap();
        assert_eq!(f.corrected_value, 0.001);
    }

    #[test]
    fn remapped_schema_is_honoured() {
        let schema = CsvSchema {
            question_id: "ifp_id".into(),
            forecaster_id: "user_id".into(),
            ..CsvSchema::default()
        };
        let csv = "ifp_id,user_id,timestamp,forecast_value,question_close,question_resolution,outcome,question_type,voided\n\
                   Q1,F1,2011-10-01,0.4,2011-12-31,2011-12-31,1,binary,0\n";
        let (t, _) = parse_forecasts(csv.as_bytes(), &schema).unwrap();
        assert_eq!(t.forecasts().len(), 1);
    }

    #[test]
    fn canonical_round_trip_preserves_content() {
        let (t, _) = generate_synthetic(&SynthConfig::default(), 11).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let (t2, s2) = parse_forecasts(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(t, t2);
        assert_eq!(s2.rows_kept, s2.rows_read);
        // eligibility filter is idempotent
        let mut buf2 = Vec::new();
        t2.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let cfg = SynthConfig {
            n_questions: 20,
            n_forecasters: 50,
            ..SynthConfig::default()
        };
        let (a, _) = generate_synthetic(&cfg, 7).unwrap();
        let (b, _) = generate_synthetic(&cfg, 7).unwrap();
        let (c, _) = generate_synthetic(&cfg, 8).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        assert!(a.forecasts().windows(2).all(|w| {
            (w[0].timestamp, w[0].question, w[0].forecaster)
                < (w[1].timestamp, w[1].question, w[1].forecaster)
        }));
    }

    #[test]
    fn synthetic_rejects_zero_counts() {
        let cfg = SynthConfig {
            n_questions: 0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg, 1), Err(Error::Config(_))));
        let cfg = SynthConfig {
            base_rate: 1.0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg, 1), Err(Error::Config(_))));
    }
}
