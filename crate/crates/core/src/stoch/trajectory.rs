use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::SystemState;
use crate::stoch::bound::RateBound;

/// One accepted configuration change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    /// Compartment.
    pub k: usize,
    /// Channel type.
    pub i: usize,
    pub from: usize,
    pub to: usize,
}

/// Receives the simulation as it runs.
///
/// `snapshot` is called at the start, at every recording-grid time, after
/// every accepted event and at the horizon; the state passed is the one
/// *after* any event at that time. Times are nondecreasing; consecutive
/// calls may share a time when several events coincide.
pub trait Observer {
    fn snapshot(&mut self, state: &SystemState) -> Result<()>;

    fn event(&mut self, _event: &Event) {}
}

/// Observer that ignores everything.
pub struct NullObserver;

impl Observer for NullObserver {
    fn snapshot(&mut self, _state: &SystemState) -> Result<()> {
        Ok(())
    }
}

/// Counters reported by every simulator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Candidate events drawn (PET/IL) or `(k, i)` trials (oracle).
    pub candidates: u64,
    pub events: u64,
    pub bound: Option<RateBound>,
}

/// Recorded path of one simulation.
///
/// Voltages are stored per snapshot; the occupancy at any snapshot is
/// rebuilt by replaying the event log onto the initial state, which keeps
/// memory at `O(n)` per snapshot instead of `O(n I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: SystemState,
    pub times: Vec<f64>,
    voltages: Vec<f64>,
    /// Number of events applied before each snapshot.
    applied: Vec<usize>,
    pub events: Vec<Event>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.initial.n()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn voltage(&self, idx: usize) -> &[f64] {
        let n = self.n();
        &self.voltages[idx * n..(idx + 1) * n]
    }

    /// Full state at snapshot `idx`.
    pub fn state(&self, idx: usize) -> SystemState {
        let mut s = self.initial.clone();
        for e in &self.events[..self.applied[idx]] {
            s.set_config(e.k, e.i, e.to);
        }
        s.t = self.times[idx];
        s.v = self.voltage(idx).to_vec();
        s
    }

    pub fn final_state(&self) -> SystemState {
        self.state(self.len() - 1)
    }

    /// Voltage of compartment `k` at every snapshot.
    pub fn site_series(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|idx| self.voltage(idx)[k]).collect()
    }

    /// Linear interpolation of compartment `k` at time `t` (clamped to the
    /// recorded span).
    pub fn site_at(&self, k: usize, t: f64) -> f64 {
        let hi = self.times.partition_point(|&s| s <= t);
        if hi == 0 {
            return self.voltage(0)[k];
        }
        if hi == self.len() {
            return self.voltage(hi - 1)[k];
        }
        let (t0, t1) = (self.times[hi - 1], self.times[hi]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        (1.0 - w) * self.voltage(hi - 1)[k] + w * self.voltage(hi)[k]
    }

    /// Rebuilds a trajectory from its parts; checks the shapes.
    pub fn from_parts(
        initial: SystemState,
        times: Vec<f64>,
        voltages: Vec<f64>,
        applied: Vec<usize>,
        events: Vec<Event>,
        stats: RunStats,
    ) -> Result<Self> {
        let n = initial.n();
        if voltages.len() != times.len() * n
            || applied.len() != times.len()
            || applied.iter().any(|&a| a > events.len())
            || applied.windows(2).any(|w| w[0] > w[1])
        {
            return Err(crate::error::Error::Dimension(
                "inconsistent trajectory parts".into(),
            ));
        }
        Ok(Self {
            initial,
            times,
            voltages,
            applied,
            events,
            stats,
        })
    }

    pub fn applied(&self) -> &[usize] {
        &self.applied
    }
}

/// Observer that builds a [`Trajectory`]. Snapshots sharing a time collapse
/// into the latest one, so recorded times are strictly increasing.
#[derive(Debug, Default)]
pub struct Recorder {
    initial: Option<SystemState>,
    times: Vec<f64>,
    voltages: Vec<f64>,
    applied: Vec<usize>,
    events: Vec<Event>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self, stats: RunStats) -> Trajectory {
        Trajectory {
            initial: self
                .initial
                .expect("simulators always record the initial state"),
            times: self.times,
            voltages: self.voltages,
            applied: self.applied,
            events: self.events,
            stats,
        }
    }
}

impl Observer for Recorder {
    fn snapshot(&mut self, state: &SystemState) -> Result<()> {
        if self.initial.is_none() {
            self.initial = Some(state.clone());
        }
        if self.times.last() == Some(&state.t) {
            let n = state.n();
            let start = self.voltages.len() - n;
            self.voltages[start..].copy_from_slice(&state.v);
            *self.applied.last_mut().unwrap() = self.events.len();
        } else {
            self.times.push(state.t);
            self.voltages.extend_from_slice(&state.v);
            self.applied.push(self.events.len());
        }
        Ok(())
    }

    fn event(&mut self, event: &Event) {
        self.events.push(*event);
    }
}

/// Forwards every call to two observers.
pub struct Tee<'a, A: Observer + ?Sized, B: Observer + ?Sized>(pub &'a mut A, pub &'a mut B);

impl<A: Observer + ?Sized, B: Observer + ?Sized> Observer for Tee<'_, A, B> {
    fn snapshot(&mut self, state: &SystemState) -> Result<()> {
        self.0.snapshot(state)?;
        self.1.snapshot(state)
    }

    fn event(&mut self, event: &Event) {
        self.0.event(event);
        self.1.event(event);
    }
}
