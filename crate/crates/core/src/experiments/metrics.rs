use crate::averaging::local_average_with;
use crate::det::MeanFieldTrajectory;
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::SystemState;
use crate::stoch::{Observer, Trajectory};

/// Streaming sup-norm distance between a stochastic path and the mean field.
///
/// The voltage gap `max_k |V - U|` is evaluated at every snapshot (grid
/// points and jump times) against `U` interpolated linearly, and at every
/// mean-field step inside the path against `V` interpolated linearly between
/// snapshots. With [`with_average`](Self::with_average) it also tracks
/// `max_k |Zbar - S|` at the snapshots.
pub struct SupError<'a> {
    mf: &'a MeanFieldTrajectory,
    average: Option<(CircleLattice, usize)>,
    next_mf: usize,
    last: Option<(f64, Vec<f64>)>,
    u: Vec<f64>,
    s: Vec<f64>,
    pub voltage: f64,
    pub occupancy: f64,
}

impl<'a> SupError<'a> {
    pub fn new(mf: &'a MeanFieldTrajectory) -> Self {
        Self {
            mf,
            average: None,
            next_mf: 0,
            last: None,
            u: vec![0.0; mf.n()],
            s: Vec::new(),
            voltage: 0.0,
            occupancy: 0.0,
        }
    }

    /// Also track the local-average error with window `window`; the mean
    /// field must have kept its occupancy.
    pub fn with_average(mut self, lattice: &CircleLattice, window: usize) -> Result<Self> {
        if self.mf.occupancy(0).is_none() {
            return Err(Error::Data("mean-field occupancy was not recorded".into()));
        }
        self.s = vec![0.0; self.mf.n() * self.mf.types() * self.mf.configs()];
        self.average = Some((*lattice, window));
        Ok(self)
    }

    /// Feeds the voltage at time `t`; times must be nondecreasing.
    pub fn observe_voltage(&mut self, t: f64, v: &[f64]) -> Result<()> {
        if v.len() != self.mf.n() {
            return Err(Error::Dimension(format!(
                "stochastic path has {} compartments, mean field {}",
                v.len(),
                self.mf.n()
            )));
        }
        let times = &self.mf.times;
        if let Some((t0, v0)) = &self.last {
            while self.next_mf < times.len() && times[self.next_mf] < t {
                let tm = times[self.next_mf];
                if tm > *t0 {
                    let w = (tm - t0) / (t - t0);
                    let u = self.mf.voltage(self.next_mf);
                    for ((a, b), c) in v0.iter().zip(v).zip(u) {
                        self.voltage = self.voltage.max(((1.0 - w) * a + w * b - c).abs());
                    }
                }
                self.next_mf += 1;
            }
        } else {
            while self.next_mf < times.len() && times[self.next_mf] < t {
                self.next_mf += 1;
            }
        }
        self.mf.voltage_at(t, &mut self.u);
        for (a, b) in v.iter().zip(&self.u) {
            self.voltage = self.voltage.max((a - b).abs());
        }
        match &mut self.last {
            Some((t0, v0)) => {
                *t0 = t;
                v0.copy_from_slice(v);
            }
            None => self.last = Some((t, v.to_vec())),
        }
        Ok(())
    }

    fn observe_occupancy(&mut self, state: &SystemState) -> Result<()> {
        let Some((lattice, window)) = &self.average else {
            return Ok(());
        };
        let slices = state.types() * state.configs();
        let avg = local_average_with(&state.occupancy_tensor(), slices, lattice, *window)?;
        self.mf.occupancy_at(state.t, &mut self.s);
        for (a, b) in avg.values.iter().zip(&self.s) {
            self.occupancy = self.occupancy.max((a - b).abs());
        }
        Ok(())
    }
}

impl Observer for SupError<'_> {
    fn snapshot(&mut self, state: &SystemState) -> Result<()> {
        self.observe_voltage(state.t, &state.v)?;
        self.observe_occupancy(state)
    }
}

/// `sup_t max_k |V(t) - U(t)|` over the snapshots of `traj` and the steps of
/// `mf` that fall inside it.
pub fn sup_error(traj: &Trajectory, mf: &MeanFieldTrajectory) -> Result<f64> {
    let mut probe = SupError::new(mf);
    for idx in 0..traj.len() {
        probe.observe_voltage(traj.times[idx], traj.voltage(idx))?;
    }
    Ok(probe.voltage)
}
