use serde::{Deserialize, Serialize};

use crate::sim::MAX_OBJECTS;
use crate::types::EnvState;

/// Bumped whenever the layout below changes; checkpoints record it.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// `[gripper xyz, gripper closed]` followed by, per object slot,
/// `[object - gripper xyz, attached]`. Missing slots are zero.
pub const FEATURE_DIM: usize = 4 + 4 * MAX_OBJECTS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFeatures(#[serde(with = "features_serde")] pub [f64; FEATURE_DIM]);

mod features_serde {
    use super::FEATURE_DIM;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; FEATURE_DIM], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; FEATURE_DIM], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into().map_err(|v: Vec<f64>| D::Error::invalid_length(v.len(), &"feature vector"))
    }
}

impl StateFeatures {
    pub fn encode(state: &EnvState) -> Self {
        let mut f = [0.0; FEATURE_DIM];
        let g = state.gripper_pos;
        f[..3].copy_from_slice(&g.to_array());
        f[3] = if state.gripper_closed { 1.0 } else { 0.0 };
        for (slot, obj) in state.objects.iter().take(MAX_OBJECTS).enumerate() {
            let base = 4 + 4 * slot;
            f[base..base + 3].copy_from_slice(&(obj.pos - g).to_array());
            f[base + 3] = if state.attached_object == Some(slot) { 1.0 } else { 0.0 };
        }
        Self(f)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::sim::Sim;

    #[test]
    fn layout() {
        let sim = Sim::builtin("stack_two").unwrap();
        let mut s = sim.reset(&mut Rng::from_seed(2)).unwrap();
        s.gripper_closed = true;
        s.attached_object = Some(1);
        let f = StateFeatures::encode(&s);
        assert_eq!(FEATURE_DIM, 20);
        assert_eq!(&f.0[..3], &s.gripper_pos.to_array());
        assert_eq!(f.0[3], 1.0);
        assert_eq!(f.0[4], s.objects[0].pos.x - s.gripper_pos.x);
        assert_eq!(f.0[7], 0.0);
        assert_eq!(f.0[11], 1.0);
        assert!(f.0[12..].iter().all(|&v| v == 0.0));
    }
}
