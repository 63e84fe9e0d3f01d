//! Per-link channel behaviour.

use serde::{Deserialize, Serialize};

use sitan_core::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    /// Probability that a copy is lost.
    pub loss: f64,
    /// Delay bounds in milliseconds, drawn uniformly.
    pub delay_min: SimTime,
    pub delay_max: SimTime,
    /// Probability that a copy arrives twice.
    pub duplicate: f64,
    /// Probability that a copy arrives with a flipped byte.
    pub corrupt: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            loss: 0.0,
            delay_min: 1,
            delay_max: 5,
            duplicate: 0.0,
            corrupt: 0.0,
        }
    }
}

impl LinkModel {
    pub fn lossy(loss: f64) -> Self {
        LinkModel {
            loss,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("loss", self.loss),
            ("duplicate", self.duplicate),
            ("corrupt", self.corrupt),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("link {name} probability {p} is outside [0, 1]"));
            }
        }
        if self.delay_min > self.delay_max {
            return Err(format!(
                "link delay_min {} exceeds delay_max {}",
                self.delay_min, self.delay_max
            ));
        }
        Ok(())
    }
}
