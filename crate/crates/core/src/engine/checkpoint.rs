use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::normalize::NormStats;
use crate::engine::model::{ModelSpec, Objective};
use crate::engine::params::ParameterSet;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Self-describing trained model: architecture, objective, seed, the
/// normalization it was trained under, and every named parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub model: ModelSpec,
    pub objective: Objective,
    pub seed: u64,
    pub norm: Option<NormStats>,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn new(model: ModelSpec, objective: Objective, seed: u64, norm: Option<NormStats>, params: ParameterSet) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            model,
            objective,
            seed,
            norm,
            params,
        }
    }

    /// JSON text; floats use shortest round-trip decimal form, so reloading
    /// reproduces every value bit for bit.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::config(
                "format",
                format!("unsupported checkpoint format {}", ck.format),
            ));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::model::MpsSsm;
    use crate::engine::train::init_for_seed;
    use crate::ssm::SsmConfig;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut cfg = SsmConfig::new(2, 6, 2);
        cfg.embed_dim = 3;
        cfg.state_dim = 3;
        cfg.bottleneck_dim = 3;
        let model = MpsSsm::new(cfg).unwrap();
        let mut params = init_for_seed(&model, 5);
        params.get_mut("ssm.skip_d").unwrap()[0] = 0.1 + 0.2;
        params.get_mut("embed.b").unwrap()[1] = 1e-300;
        let ck = Checkpoint::new(ModelSpec::MpsSsm(model), Objective::rate(2.0), 5, None, params);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        for (a, b) in ck.params.iter().zip(back.params.iter()) {
            let bits_a: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "{}", a.name);
        }
        assert_eq!(ck, back);
    }
}
