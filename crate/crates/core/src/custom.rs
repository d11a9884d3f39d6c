//! Channel models written entirely as expressions, e.g. from a config file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{ChannelModel, InitialData, ScalarFn};

/// One off-diagonal rate `from -> to` of channel type `channel`, in `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomRate {
    pub channel: usize,
    pub from: usize,
    pub to: usize,
    pub rate: String,
}

/// `drift[i][j]` is a function of `v`; `v0` and `z0[i][j]` are functions of
/// the position `x`. Rates not listed are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    pub drift: Vec<Vec<String>>,
    pub rates: Vec<CustomRate>,
    pub v0: String,
    pub z0: Vec<Vec<String>>,
}

impl CustomModel {
    pub fn types(&self) -> usize {
        self.drift.len()
    }

    pub fn configs(&self) -> usize {
        self.drift.first().map_or(0, Vec::len)
    }

    pub fn build(
        &self,
        lattice: &CircleLattice,
        range: (f64, f64),
    ) -> Result<(ChannelModel, InitialData)> {
        let (types, configs) = (self.types(), self.configs());
        let table = |name: &str, t: &[Vec<String>]| {
            if types == 0
                || configs == 0
                || t.len() != types
                || t.iter().any(|r| r.len() != configs)
            {
                return Err(Error::Dimension(format!(
                    "{name} must be a non-empty {types} x {configs} table"
                )));
            }
            Ok(())
        };
        table("drift", &self.drift)?;
        table("z0", &self.z0)?;
        let mut builder = ChannelModel::builder("custom", types, configs);
        for (i, row) in self.drift.iter().enumerate() {
            for (j, src) in row.iter().enumerate() {
                builder = builder.drift(i, j, ScalarFn::parse(src, "v")?);
            }
        }
        for r in &self.rates {
            if r.channel >= types || r.from >= configs || r.to >= configs || r.from == r.to {
                return Err(Error::Model(format!(
                    "rate ({}: {} -> {}) is not an off-diagonal entry of a {types} x {configs} model",
                    r.channel, r.from, r.to
                )));
            }
            builder = builder.rate(r.channel, r.from, r.to, ScalarFn::parse(&r.rate, "v")?);
        }
        let model = builder.voltage_range(range.0, range.1).build()?;
        let z0 = self
            .z0
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| ScalarFn::parse(s, "x"))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let init = InitialData::new(ScalarFn::parse(&self.v0, "x")?, z0)?;
        init.check_compatible(&model)?;
        for i in 0..types {
            for k in 0..lattice.n() {
                init.probabilities(i, lattice.position(k))?;
            }
        }
        Ok((model, init))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{preset_model, PresetParams};

    fn toy_text() -> CustomModel {
        let s = |x: &str| x.to_string();
        CustomModel {
            drift: vec![vec![s("1-v"), s("0")], vec![s("-v/10"), s("-v/10")]],
            rates: vec![
                CustomRate {
                    channel: 0,
                    from: 0,
                    to: 1,
                    rate: s("exp(-10*(v-0.5))"),
                },
                CustomRate {
                    channel: 0,
                    from: 1,
                    to: 0,
                    rate: s("exp(10*(v-0.5))"),
                },
            ],
            v0: s("0.5"),
            z0: vec![vec![s("0.5"), s("0.5")], vec![s("1"), s("0")]],
        }
    }

    #[test]
    fn written_toy_matches_the_preset() {
        let lat = CircleLattice::new(8, 1.0, 1.0).unwrap();
        let (custom, _) = toy_text().build(&lat, (0.0, 1.0)).unwrap();
        let (toy, _) = preset_model("toy", &PresetParams::new(), &lat, None).unwrap();
        for v in [0.0, 0.3, 0.9] {
            assert_eq!(
                custom.transition_rates(v, 0).unwrap(),
                toy.transition_rates(v, 0).unwrap()
            );
            for occ in [[0, 0], [1, 0]] {
                assert!((custom.reaction(&occ, v) - toy.reaction(&occ, v)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn malformed_models_are_rejected() {
        let lat = CircleLattice::new(4, 1.0, 1.0).unwrap();
        let mut m = toy_text();
        m.rates[0].to = 0;
        assert!(m.build(&lat, (0.0, 1.0)).is_err());
        let mut m = toy_text();
        m.z0[0][0] = "0.7".into();
        assert!(matches!(
            m.build(&lat, (0.0, 1.0)),
            Err(Error::Simplex { .. })
        ));
        let mut m = toy_text();
        m.drift[1].pop();
        assert!(matches!(
            m.build(&lat, (0.0, 1.0)),
            Err(Error::Dimension(_))
        ));
        let mut m = toy_text();
        m.v0 = "v".into();
        assert!(matches!(m.build(&lat, (0.0, 1.0)), Err(Error::Expr(_))));
    }
}
