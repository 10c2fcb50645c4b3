//! Dataset conditioning on the two low-probability events the lower-bound
//! constructions rely on, plus Monte-Carlo estimation of their rates.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::analytics::{
    anti_concentration_probability, anti_concentration_threshold, permutation_event_probability,
};
use crate::instances::{Dataset, LossInstance, Sample};
use crate::{Real, Scalar};

/// Conditioning events over an n-sample dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// Sign-valued samples summing to at most -sqrt(n)/2.
    AntiConcentration,
    /// Index-valued samples forming a permutation of {1..n}.
    Permutation,
}

impl Event {
    pub const ALL: [Event; 2] = [Event::AntiConcentration, Event::Permutation];

    pub fn as_str(self) -> &'static str {
        match self {
            Event::AntiConcentration => "anti_concentration",
            Event::Permutation => "permutation",
        }
    }

    /// Closed-form probability of the event under i.i.d. sampling.
    pub fn exact_probability(self, n: usize) -> Result<Real, ExperimentError> {
        let p = match self {
            Event::AntiConcentration => anti_concentration_probability::<Real>(n)?,
            Event::Permutation => permutation_event_probability::<Real>(n)?,
        };
        Ok(p)
    }
}

impl core::fmt::Display for Event {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Event {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Event::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                ExperimentError::InvalidParameter(format!(
                    "unknown event {s:?}; known events: anti_concentration, permutation"
                ))
            })
    }
}

/// How a conditioned dataset is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Build a satisfying dataset directly.
    #[default]
    Forced,
    /// Resample i.i.d. datasets until the event holds.
    Rejection,
}

impl ConditioningMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditioningMode::Forced => "forced",
            ConditioningMode::Rejection => "rejection",
        }
    }
}

impl core::fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ConditioningMode {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forced" => Ok(ConditioningMode::Forced),
            "rejection" => Ok(ConditioningMode::Rejection),
            other => Err(ExperimentError::InvalidParameter(format!(
                "unknown conditioning mode {other:?}; known modes: forced, rejection"
            ))),
        }
    }
}

/// Attempt budget for rejection sampling.
pub const REJECTION_CAP: usize = 1_000_000;

/// Whether `data` satisfies `event`. Errors when the samples are of the
/// wrong kind for the event rather than reporting a vacuous false.
pub fn event_holds(event: Event, data: &Dataset) -> Result<bool, ExperimentError> {
    let n = data.len();
    match event {
        Event::AntiConcentration => {
            let mut total: i64 = 0;
            for z in &data.samples {
                match z {
                    Sample::Sign(s) => total += i64::from(*s),
                    other => {
                        return Err(ExperimentError::InvalidParameter(format!(
                            "event anti_concentration needs sign samples, dataset holds {other}"
                        )))
                    }
                }
            }
            Ok(total as Real <= -(n as Real).sqrt() / 2.0)
        }
        Event::Permutation => {
            let mut seen = vec![false; n];
            for z in &data.samples {
                match z {
                    Sample::Index(i) if (1..=n).contains(i) => {
                        if seen[i - 1] {
                            return Ok(false);
                        }
                        seen[i - 1] = true;
                    }
                    Sample::Index(_) => return Ok(false),
                    other => {
                        return Err(ExperimentError::InvalidParameter(format!(
                            "event permutation needs index samples, dataset holds {other}"
                        )))
                    }
                }
            }
            Ok(true)
        }
    }
}

fn tagged(mut data: Dataset, event: Event) -> Dataset {
    data.conditioning = Some(event.as_str().to_string());
    data
}

fn check_in_space<F: Scalar>(
    instance: &dyn LossInstance<F>,
    samples: &[Sample],
    event: Event,
) -> Result<(), ExperimentError> {
    for z in samples {
        if !instance.in_sample_space(z) {
            return Err(ExperimentError::InvalidParameter(format!(
                "event {event} produces sample {z}, outside the sample space of {} ({})",
                instance.name(),
                instance.sample_space()
            )));
        }
    }
    Ok(())
}

/// An n-sample dataset satisfying `event`, tagged with the event name.
///
/// Forced mode constructs a witness directly: anti-concentration places
/// exactly ceil((n + sqrt(n)/2)/2) of the signs at -1 and shuffles; the
/// permutation witness is the identity (1, 2, ..., n). Rejection mode
/// redraws i.i.d. datasets until the event holds, up to [`REJECTION_CAP`]
/// attempts.
pub fn condition_dataset<F: Scalar>(
    instance: &dyn LossInstance<F>,
    n: usize,
    event: Event,
    mode: ConditioningMode,
    rng: &mut dyn RngCore,
) -> Result<Dataset, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::InvalidParameter(
            "dataset size must be at least 1".to_string(),
        ));
    }
    match mode {
        ConditioningMode::Forced => {
            let samples = match event {
                Event::AntiConcentration => {
                    // ceil((n + sqrt(n)/2)/2) minus-ones push the sum to
                    // -sqrt(n)/2 or just below it.
                    let minus = anti_concentration_threshold(n);
                    let mut samples: Vec<Sample> = (0..n)
                        .map(|i| Sample::Sign(if i < minus { -1 } else { 1 }))
                        .collect();
                    samples.shuffle(rng);
                    samples
                }
                Event::Permutation => (1..=n).map(Sample::Index).collect(),
            };
            check_in_space(instance, &samples, event)?;
            debug_assert!(matches!(
                event_holds(event, &Dataset::new(samples.clone(), instance.name()).unwrap()),
                Ok(true)
            ));
            Ok(tagged(Dataset::new(samples, instance.name())?, event))
        }
        ConditioningMode::Rejection => {
            for _ in 0..REJECTION_CAP {
                let data = instance.draw_dataset(n, rng)?;
                if event_holds(event, &data)? {
                    return Ok(tagged(data, event));
                }
            }
            Err(ExperimentError::ConditioningFailure {
                event: event.as_str(),
                attempts: REJECTION_CAP,
                hit_rate: 0.0,
            })
        }
    }
}

/// Monte-Carlo estimate of one event's probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStats {
    pub event: Event,
    pub trials: usize,
    pub hits: usize,
    /// hits / trials.
    pub estimate: Real,
    /// Closed-form probability, when finite and representable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Real>,
    /// (estimate - exact) / sqrt(exact·(1-exact)/trials).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_score: Option<Real>,
}

/// Draws `trials` i.i.d. datasets of size n, counts how often `event`
/// holds, and scores the estimate against the closed-form probability.
pub fn estimate_event_probability<F: Scalar>(
    instance: &dyn LossInstance<F>,
    n: usize,
    event: Event,
    trials: usize,
    rng: &mut dyn RngCore,
) -> Result<EventStats, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::InvalidParameter(
            "trials must be at least 1".to_string(),
        ));
    }
    let mut hits = 0usize;
    for _ in 0..trials {
        let data = instance.draw_dataset(n, rng)?;
        if event_holds(event, &data)? {
            hits += 1;
        }
    }
    let estimate = hits as Real / trials as Real;
    let exact = event.exact_probability(n)?;
    let spread = exact * (1.0 - exact);
    let z_score = if spread > 0.0 {
        Some((estimate - exact) / (spread / trials as Real).sqrt())
    } else {
        None
    };
    Ok(EventStats {
        event,
        trials,
        hits,
        estimate,
        exact: Some(exact),
        z_score,
    })
}
