use serde::{Deserialize, Serialize};

use crate::diffcore::Rng;
use crate::error::{Error, Result};

/// Class id reserved for the null (unconditional) condition.
pub const NULL_CLASS: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    pub class_id: usize,
    /// Preparatory motion before the sound.
    pub motion_lead_s: f64,
    /// Residual motion after the sound.
    pub motion_lag_s: f64,
    pub amplitude: f64,
}

/// Ground-truth acoustic events of one clip; drives both audio and latents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventScript {
    pub duration_s: f64,
    pub events: Vec<Event>,
}

impl EventScript {
    pub fn new(duration_s: f64, events: Vec<Event>) -> Result<Self> {
        let s = EventScript { duration_s, events };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(duration_s: f64) -> Self {
        EventScript {
            duration_s,
            events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::invalid("script duration must be positive"));
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(0.0..=self.duration_s).contains(&e.time_s) {
                return Err(Error::invalid(format!("event {i} at {} s outside clip", e.time_s)));
            }
            if !(e.motion_lead_s >= 0.0 && e.motion_lag_s >= 0.0) {
                return Err(Error::invalid(format!("event {i} has negative lead/lag")));
            }
            if !(0.0..=1.0).contains(&e.amplitude) {
                return Err(Error::invalid(format!("event {i} amplitude {} not in [0, 1]", e.amplitude)));
            }
        }
        if self.events.windows(2).any(|w| w[1].time_s < w[0].time_s) {
            return Err(Error::invalid("event times must be sorted"));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time_s).collect()
    }

    /// Class of the first event, or the null class for an empty script.
    pub fn class_id(&self) -> usize {
        self.events.first().map_or(NULL_CLASS, |e| e.class_id)
    }
}

/// Distribution of random scripts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptParams {
    pub events_min: usize,
    pub events_max: usize,
    /// Classes are drawn from `1..=n_classes`.
    pub n_classes: usize,
    pub lead_range: [f64; 2],
    pub lag_range: [f64; 2],
    pub amplitude_range: [f64; 2],
    /// Minimum gap between consecutive events.
    pub min_spacing_s: f64,
    /// Events stay this far from either clip edge.
    pub edge_margin_s: f64,
}

impl Default for ScriptParams {
    fn default() -> Self {
        ScriptParams {
            events_min: 1,
            events_max: 4,
            n_classes: 3,
            lead_range: [0.0, 0.1],
            lag_range: [0.0, 0.1],
            amplitude_range: [0.5, 1.0],
            min_spacing_s: 0.3,
            edge_margin_s: 0.15,
        }
    }
}

impl ScriptParams {
    pub fn zero_lag(mut self) -> Self {
        self.lead_range = [0.0, 0.0];
        self.lag_range = [0.0, 0.0];
        self
    }
}

/// Draws a single-class script; event times are rejection-sampled to respect
/// the spacing constraint (a crowded clip keeps fewer events).
pub fn random_script(rng: &mut Rng, params: &ScriptParams, duration_s: f64) -> Result<EventScript> {
    if params.n_classes == 0 || params.events_min > params.events_max {
        return Err(Error::invalid("bad script parameters"));
    }
    let n_events = rng.int_in(params.events_min, params.events_max);
    let class_id = 1 + rng.below(params.n_classes);
    let (lo, hi) = (params.edge_margin_s, duration_s - params.edge_margin_s);
    let mut times: Vec<f64> = Vec::with_capacity(n_events);
    let mut attempts = 0;
    while times.len() < n_events && attempts < 200 {
        attempts += 1;
        let t = rng.uniform_in(lo, hi);
        if times.iter().all(|u| (u - t).abs() >= params.min_spacing_s) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    let events = times
        .into_iter()
        .map(|time_s| Event {
            time_s,
            class_id,
            motion_lead_s: rng.uniform_in(params.lead_range[0], params.lead_range[1]),
            motion_lag_s: rng.uniform_in(params.lag_range[0], params.lag_range[1]),
            amplitude: rng.uniform_in(params.amplitude_range[0], params.amplitude_range[1]),
        })
        .collect();
    EventScript::new(duration_s, events)
}
