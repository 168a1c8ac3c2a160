//! Recalibrated weighted consensus forecasts.
//!
//! For a question and an instant the consensus pools the latest forecast of
//! every forecaster made strictly before that instant, keeps the most recent
//! `decay_fraction` of them, weights each by a rescaled accuracy score and a
//! rescaled update count, takes the normalized weighted mean and finally
//! extremizes it with a power transform.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MsbsIndex, ResolutionCutoff};
use crate::ingest::{format_time, ForecastRef, Tournament};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateParams {
    /// Share of the most recent pooled forecasts that are kept.
    pub decay_fraction: f64,
    /// Exponent on the accuracy component.
    pub gamma: f64,
    /// Exponent on the update-frequency component.
    pub delta: f64,
    /// Extremizing exponent.
    pub extremizing_a: f64,
    /// Lower end of the min-max rescaling of both components.
    pub weight_floor: f64,
    /// Whether the focal forecast joins its own consensus pool.
    pub include_current: bool,
}

impl Default for AggregateParams {
    fn default() -> Self {
        Self {
            decay_fraction: 0.72,
            gamma: 1.0,
            delta: 1.0,
            extremizing_a: 1.5,
            weight_floor: 0.1,
            include_current: false,
        }
    }
}

impl AggregateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_fraction > 0.0 && self.decay_fraction <= 1.0) {
            return Err(Error::config("decay_fraction must lie in (0, 1]"));
        }
        if !(self.extremizing_a > 0.0) {
            return Err(Error::config("extremizing_a must be positive"));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor <= 1.0) {
            return Err(Error::config("weight_floor must lie in (0, 1]"));
        }
        if !self.gamma.is_finite() || !self.delta.is_finite() {
            return Err(Error::config("gamma and delta must be finite"));
        }
        Ok(())
    }
}

/// Latest forecast of one forecaster inside a consensus pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub forecaster: usize,
    pub forecast: ForecastRef,
    pub timestamp: DateTime<Utc>,
    /// Corrected forecast value.
    pub value: f64,
}

/// Accuracy and per-question update count of a pooled forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecasterState {
    /// Cumulative mean standardized Brier score; lower is better.
    pub accuracy: Option<f64>,
    pub update_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledForecast {
    pub member: PoolMember,
    pub state: ForecasterState,
    pub decay: u8,
    /// Zero for decayed members.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSnapshot {
    pub question_id: String,
    pub as_of: DateTime<Utc>,
    pub pooled: Vec<PooledForecast>,
    pub p_bar: f64,
    pub p_hat: f64,
    /// Set when the pool was empty and the uninformative 0.5 was used.
    pub synthetic: bool,
}

/// One consensus evaluation per forecast, without the pool contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub forecast: ForecastRef,
    pub pool_size: usize,
    pub p_bar: f64,
    pub p_hat: f64,
    pub synthetic: bool,
}

/// Number of members kept by the decay rule: `ceil(fraction * n)`, at least one.
pub fn decay_keep_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // The small slack absorbs representation error in products such as 0.72 * 25.
    let k = (fraction * n as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n)
}

/// Decay indicators aligned with `pooled`: the `ceil(fraction * n)` most
/// recent members get 1. Equal timestamps are ordered by forecaster index
/// ascending, which is forecaster id order.
pub fn decay_mask(pooled: &[PoolMember], fraction: f64) -> Vec<u8> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by_key(|&i| (Reverse(pooled[i].timestamp), pooled[i].forecaster));
    let keep = decay_keep_count(pooled.len(), fraction);
    let mut d = vec![0u8; pooled.len()];
    for &i in &order[..keep] {
        d[i] = 1;
    }
    d
}

fn min_max_rescale(values: &[f64], floor: f64) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return vec![1.0; values.len()];
    }
    values
        .iter()
        .map(|&v| floor + (1.0 - floor) * (v - lo) / (hi - lo))
        .collect()
}

/// Per-member weights `c^gamma * f^delta`.
///
/// The accuracy component rescales `-MSBS` over the members that have a
/// score; members without one get 1.0. The frequency component rescales the
/// update counts. Both land in `[weight_floor, 1]`, and a component whose
/// values are all equal is 1.0 for everyone.
pub fn forecaster_weights(states: &[ForecasterState], params: &AggregateParams) -> Vec<f64> {
    let scored: Vec<f64> = states
        .iter()
        .filter_map(|s| s.accuracy.map(|a| -a))
        .collect();
    let scored = min_max_rescale(&scored, params.weight_floor);
    let mut scored = scored.into_iter();
    let accuracy: Vec<f64> = states
        .iter()
        .map(|s| match s.accuracy {
            Some(_) => scored.next().expect("one rescaled value per scored member"),
            None => 1.0,
        })
        .collect();
    let counts: Vec<f64> = states.iter().map(|s| s.update_count as f64).collect();
    let frequency = min_max_rescale(&counts, params.weight_floor);
    accuracy
        .iter()
        .zip(&frequency)
        .map(|(c, f)| c.powf(params.gamma) * f.powf(params.delta))
        .collect()
}

/// Normalized weighted mean `sum(d w p) / sum(d w)`; `None` when the
/// effective weight is zero.
pub fn weighted_aggregate(values: &[f64], decay: &[u8], weights: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&p, &d), &w) in values.iter().zip(decay).zip(weights) {
        let dw = d as f64 * w;
        num += dw * p;
        den += dw;
    }
    (den > 0.0).then(|| num / den)
}

/// Extremizing transform `p^a / (p^a + (1 - p)^a)`.
pub fn recalibrate(p_bar: f64, a: f64) -> f64 {
    debug_assert!(p_bar > 0.0 && p_bar < 1.0 && a > 0.0);
    // Evaluated as logistic(a * logit(p)) to stay finite near 0 and 1.
    crate::util::logistic(a * (p_bar / (1.0 - p_bar)).ln())
}

/// Consensus calculator bound to one tournament.
pub struct ConsensusEngine<'a> {
    tournament: &'a Tournament,
    params: AggregateParams,
    msbs: MsbsIndex,
    by_question: Vec<Vec<ForecastRef>>,
}

impl<'a> ConsensusEngine<'a> {
    pub fn new(tournament: &'a Tournament, params: AggregateParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            msbs: MsbsIndex::build(tournament),
            by_question: tournament.forecasts_by_question(),
            tournament,
            params,
        })
    }

    pub fn params(&self) -> &AggregateParams {
        &self.params
    }

    pub fn msbs_index(&self) -> &MsbsIndex {
        &self.msbs
    }

    /// Consensus on `question_id` as of `instant`. `current` names the focal
    /// forecast, which joins the pool only when `include_current` is set.
    pub fn at(
        &self,
        question_id: &str,
        instant: DateTime<Utc>,
        current: Option<ForecastRef>,
    ) -> Result<ConsensusSnapshot> {
        let q = self.tournament.question_index(question_id)?;
        let meta = self.tournament.question(q);
        if instant > meta.close_time {
            return Err(Error::domain(format!(
                "instant {} is after the close of `{question_id}`",
                format_time(instant)
            )));
        }
        let forecasts = self.tournament.forecasts();
        let mut latest: HashMap<usize, (PoolMember, u32)> = HashMap::new();
        let mut admit = |r: ForecastRef| {
            let f = &forecasts[r];
            let e = latest.entry(f.forecaster).or_insert((
                PoolMember {
                    forecaster: f.forecaster,
                    forecast: r,
                    timestamp: f.timestamp,
                    value: f.corrected_value,
                },
                0,
            ));
            e.0 = PoolMember {
                forecaster: f.forecaster,
                forecast: r,
                timestamp: f.timestamp,
                value: f.corrected_value,
            };
            e.1 += 1;
        };
        for &r in &self.by_question[q] {
            if forecasts[r].timestamp < instant && Some(r) != current {
                admit(r);
            }
        }
        if self.params.include_current {
            if let Some(r) = current {
                if forecasts[r].question != q {
                    return Err(Error::domain(
                        "current forecast belongs to another question",
                    ));
                }
                admit(r);
            }
        }
        let mut members: Vec<(PoolMember, u32)> = latest.into_values().collect();
        members.sort_by_key(|(m, _)| (Reverse(m.timestamp), m.forecaster));
        let (pooled, p_bar, p_hat, synthetic) = self.evaluate_pool(&members, instant);
        Ok(ConsensusSnapshot {
            question_id: question_id.to_string(),
            as_of: instant,
            pooled,
            p_bar,
            p_hat,
            synthetic,
        })
    }

    /// `members` must be in recency order (newest first, forecaster index on ties).
    fn evaluate_pool(
        &self,
        members: &[(PoolMember, u32)],
        instant: DateTime<Utc>,
    ) -> (Vec<PooledForecast>, f64, f64, bool) {
        if members.is_empty() {
            return (Vec::new(), 0.5, 0.5, true);
        }
        let keep = decay_keep_count(members.len(), self.params.decay_fraction);
        let retained = &members[..keep];
        let states: Vec<ForecasterState> = retained
            .iter()
            .map(|(m, count)| ForecasterState {
                accuracy: self
                    .msbs
                    .msbs_at(m.forecaster, instant, ResolutionCutoff::Strict),
                update_count: *count,
            })
            .collect();
        let weights = forecaster_weights(&states, &self.params);
        let values: Vec<f64> = retained.iter().map(|(m, _)| m.value).collect();
        let ones = vec![1u8; keep];
        let p_bar =
            weighted_aggregate(&values, &ones, &weights).expect("weights are strictly positive");
        let p_hat = recalibrate(p_bar, self.params.extremizing_a);
        let mut pooled = Vec::with_capacity(members.len());
        for (i, (m, count)) in members.iter().enumerate() {
            let (decay, weight, state) = if i < keep {
                (1, weights[i], states[i])
            } else {
                (
                    0,
                    0.0,
                    ForecasterState {
                        accuracy: None,
                        update_count: *count,
                    },
                )
            };
            pooled.push(PooledForecast {
                member: *m,
                state,
                decay,
                weight,
            });
        }
        (pooled, p_bar, p_hat, false)
    }

    /// Consensus for every forecast as of its own timestamp, in tournament order.
    pub fn trace(&self) -> Vec<TraceRow> {
        let forecasts = self.tournament.forecasts();
        let mut out: Vec<Option<TraceRow>> = vec![None; forecasts.len()];
        for refs in &self.by_question {
            // latest per forecaster plus a recency-ordered index over it
            let mut latest: HashMap<usize, (PoolMember, u32)> = HashMap::new();
            let mut order: BTreeSet<(Reverse<DateTime<Utc>>, usize)> = BTreeSet::new();
            let mut i = 0;
            while i < refs.len() {
                let ts = forecasts[refs[i]].timestamp;
                let mut j = i;
                while j < refs.len() && forecasts[refs[j]].timestamp == ts {
                    j += 1;
                }
                let base: Vec<(PoolMember, u32)> = order.iter().map(|&(_, f)| latest[&f]).collect();
                for &r in &refs[i..j] {
                    let members = if self.params.include_current {
                        with_current(&base, &latest, &forecasts[r], r)
                    } else {
                        base.clone()
                    };
                    let (_, p_bar, p_hat, synthetic) = self.evaluate_pool(&members, ts);
                    out[r] = Some(TraceRow {
                        forecast: r,
                        pool_size: members.len(),
                        p_bar,
                        p_hat,
                        synthetic,
                    });
                }
                for &r in &refs[i..j] {
                    let f = &forecasts[r];
                    let member = PoolMember {
                        forecaster: f.forecaster,
                        forecast: r,
                        timestamp: f.timestamp,
                        value: f.corrected_value,
                    };
                    let count = match latest.get(&f.forecaster) {
                        Some((old, c)) => {
                            order.remove(&(Reverse(old.timestamp), f.forecaster));
                            c + 1
                        }
                        None => 1,
                    };
                    latest.insert(f.forecaster, (member, count));
                    order.insert((Reverse(f.timestamp), f.forecaster));
                }
                i = j;
            }
        }
        out.into_iter()
            .map(|r| r.expect("every forecast belongs to a question"))
            .collect()
    }

    /// Writes a trace as CSV.
    pub fn write_trace<W: Write>(&self, trace: &[TraceRow], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "question_id",
            "forecast_ref",
            "as_of",
            "pool_size",
            "p_bar",
            "p_hat",
            "synthetic_flag",
        ])?;
        for row in trace {
            let f = &self.tournament.forecasts()[row.forecast];
            w.write_record([
                self.tournament.question(f.question).question_id.as_str(),
                &row.forecast.to_string(),
                &format_time(f.timestamp),
                &row.pool_size.to_string(),
                &row.p_bar.to_string(),
                &row.p_hat.to_string(),
                if row.synthetic { "1" } else { "0" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn with_current(
    base: &[(PoolMember, u32)],
    latest: &HashMap<usize, (PoolMember, u32)>,
    f: &crate::ingest::ForecastRecord,
    r: ForecastRef,
) -> Vec<(PoolMember, u32)> {
    let count = latest.get(&f.forecaster).map_or(1, |(_, c)| c + 1);
    let mut members: Vec<(PoolMember, u32)> = base
        .iter()
        .filter(|(m, _)| m.forecaster != f.forecaster)
        .copied()
        .collect();
    members.insert(
        0,
        (
            PoolMember {
                forecaster: f.forecaster,
                forecast: r,
                timestamp: f.timestamp,
                value: f.corrected_value,
            },
            count,
        ),
    );
    members.sort_by_key(|(m, _)| (Reverse(m.timestamp), m.forecaster));
    members
}

/// One-shot consensus query; builds the accuracy index on every call.
pub fn consensus_at(
    tournament: &Tournament,
    question_id: &str,
    instant: DateTime<Utc>,
    current: Option<ForecastRef>,
    params: &AggregateParams,
) -> Result<ConsensusSnapshot> {
    ConsensusEngine::new(tournament, params.clone())?.at(question_id, instant, current)
}
