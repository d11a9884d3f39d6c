use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChannelModel;

/// How the per-type bound is assembled from the per-configuration exit-rate
/// suprema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundPolicy {
    /// `lambda_i = sum_a sup_v exit_{i,a}(v)`; for a two-state gate with
    /// monotone rates this is `alpha(v_max) + beta(v_min)`.
    #[default]
    Sum,
    /// `lambda_i = max_a sup_v exit_{i,a}(v)`: fewer rejected candidates.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub policy: BoundPolicy,
    /// Multiplier applied to every per-type bound (`1.1` = 10% head room).
    pub margin: f64,
    /// Interior sample points used to estimate each supremum.
    pub samples: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            policy: BoundPolicy::Sum,
            margin: 1.1,
            samples: 2049,
        }
    }
}

impl BoundOptions {
    pub fn exact() -> Self {
        Self {
            margin: 1.0,
            ..Self::default()
        }
    }
}

/// Candidate-event rates for thinning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    /// Per-type bounds, margin included.
    pub per_type: Vec<f64>,
    /// Per-compartment bound `sum_i per_type[i]`.
    pub lambda_local: f64,
    /// `n_sites * lambda_local`.
    pub lambda_global: f64,
}

impl RateBound {
    pub fn is_zero(&self) -> bool {
        self.lambda_global == 0.0
    }

    /// Picks a channel type in proportion to its share of the local bound
    /// from a uniform `u` in `[0, 1)`.
    #[inline]
    pub(crate) fn pick_type(&self, u: f64) -> usize {
        let target = u * self.lambda_local;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &l) in self.per_type.iter().enumerate() {
            if l <= 0.0 {
                continue;
            }
            acc += l;
            last = i;
            if target < acc {
                return i;
            }
        }
        last
    }
}

/// Supremum of the total exit rate of configuration `a` of type `i` over the
/// model's voltage range, estimated on a uniform grid including both ends.
pub fn exit_rate_sup(model: &ChannelModel, i: usize, a: usize, samples: usize) -> Result<f64> {
    let (lo, hi) = model.voltage_range();
    if model.targets(i, a).is_empty() {
        return Ok(0.0);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::UnboundedRate {
            channel: i,
            v_min: lo,
            v_max: hi,
        });
    }
    let m = samples.max(1) + 1;
    let mut sup: f64 = 0.0;
    for s in 0..=m {
        let v = if s == m {
            hi
        } else {
            lo + (hi - lo) * s as f64 / m as f64
        };
        for &b in model.targets(i, a) {
            let r = model.rate(i, a, b, v);
            if r < 0.0 {
                return Err(Error::NegativeRate {
                    channel: i,
                    from: a,
                    to: b,
                    v,
                    value: r,
                });
            }
        }
        let e = model.exit_rate(i, a, v);
        if !e.is_finite() {
            return Err(Error::UnboundedRate {
                channel: i,
                v_min: lo,
                v_max: hi,
            });
        }
        sup = sup.max(e);
    }
    Ok(sup)
}

/// Thinning bound for `n_sites` compartments over the model's declared
/// operating range. Independent of the current state, so it holds for the
/// whole horizon as long as the voltage stays in range; the simulators
/// detect (and refuse) any excursion that breaks it.
pub fn rate_bound(
    model: &ChannelModel,
    n_sites: usize,
    options: &BoundOptions,
) -> Result<RateBound> {
    if !(options.margin >= 1.0) {
        return Err(Error::Parameter {
            name: "margin".into(),
            reason: format!("must be at least 1, got {}", options.margin),
        });
    }
    let per_type = (0..model.types())
        .map(|i| {
            let sups = (0..model.configs())
                .map(|a| exit_rate_sup(model, i, a, options.samples))
                .collect::<Result<Vec<f64>>>()?;
            let raw = match options.policy {
                BoundPolicy::Sum => sups.iter().sum(),
                BoundPolicy::Max => sups.iter().copied().fold(0.0, f64::max),
            };
            Ok(raw * options.margin)
        })
        .collect::<Result<Vec<f64>>>()?;
    let lambda_local: f64 = per_type.iter().sum();
    Ok(RateBound {
        per_type,
        lambda_local,
        lambda_global: n_sites as f64 * lambda_local,
    })
}
