//! Scenario files.
//!
//! A scenario is a TOML document; every field except `n` has a default:
//!
//! ```toml
//! n = 7
//! f = 2                     # default: (n - 1) / 3
//! protocol = "binary"       # binary | multivalued | vector | full_stack_bootstrap
//! proposals = "divergent"   # unanimous | divergent
//! sink_mode = "all_nodes"   # all_nodes | sink_only
//! sink_cap = 16             # optional cap on the sink size
//! rrb_forwards = 4          # optional per-message forward budget of each relay
//! trials = 10
//! seed = 0                  # trial i uses seed + i
//! time_budget = 10000       # simulated ms allowed from proposal to decision
//! trace = "events"          # events | full
//!
//! [topology]
//! range = 50.0
//! layout = { kind = "grid", spacing = 3.0 }
//! # mobility = { width = 30.0, height = 30.0, speed = 1.0, step = 100 }
//!
//! [link]                    # applies to every sender/receiver pair
//! loss = 0.0
//! duplicate = 0.0
//! corrupt = 0.0
//! delay_min = 1
//! delay_max = 5
//!
//! [adversary]               # optional
//! behavior = "random_values"
//! nodes = [5, 6]            # default: the f highest ids
//! forge_rate = 0.2
//!
//! [[adversary.network]]     # optional link faults; from/to default to all
//! from = 3
//! loss = 0.5
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversarySpec;
use crate::netsim::{Layout, LinkModel, RandomWaypoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Binary,
    Multivalued,
    Vector,
    /// Neighbor discovery and sink formation followed by one instance of
    /// each consensus protocol, run concurrently.
    FullStackBootstrap,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Binary => "binary",
            Protocol::Multivalued => "multivalued",
            Protocol::Vector => "vector",
            Protocol::FullStackBootstrap => "full_stack_bootstrap",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposals {
    Unanimous,
    /// Every node proposes something different; binary proposals follow
    /// the parity of the node id.
    Divergent,
}

impl Proposals {
    pub fn name(self) -> &'static str {
        match self {
            Proposals::Unanimous => "unanimous",
            Proposals::Divergent => "divergent",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkMode {
    /// Consensus among all nodes, with no membership phase.
    AllNodes,
    /// Membership first; consensus in the sink, results disseminated.
    SinkOnly,
}

impl SinkMode {
    pub fn name(self) -> &'static str {
        match self {
            SinkMode::AllNodes => "all_nodes",
            SinkMode::SinkOnly => "sink_only",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    Events,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub range: f64,
    pub layout: Layout,
    pub mobility: Option<RandomWaypoint>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            range: 50.0,
            layout: Layout::default(),
            mobility: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    #[serde(default)]
    pub f: Option<usize>,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_proposals")]
    pub proposals: Proposals,
    #[serde(default = "default_sink_mode")]
    pub sink_mode: SinkMode,
    #[serde(default)]
    pub sink_cap: Option<usize>,
    #[serde(default)]
    pub rrb_forwards: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub time_budget: u64,
    #[serde(default = "default_trace")]
    pub trace: TraceMode,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub link: LinkModel,
    #[serde(default)]
    pub adversary: Option<AdversarySpec>,
}

fn default_protocol() -> Protocol {
    Protocol::Binary
}
fn default_proposals() -> Proposals {
    Proposals::Divergent
}
fn default_sink_mode() -> SinkMode {
    SinkMode::AllNodes
}
fn default_trials() -> usize {
    1
}
fn default_budget() -> u64 {
    10_000
}
fn default_trace() -> TraceMode {
    TraceMode::Events
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("n = {n} cannot tolerate f = {f} (need n >= 3f + 1)")]
    Budget { n: usize, f: usize },
    #[error("n must be at least 1")]
    Empty,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("invalid link model: {0}")]
    Link(String),
    #[error("adversary controls {got} nodes but f = {f}")]
    TooManyByzantine { got: usize, f: usize },
    #[error("adversary node {0} does not exist")]
    UnknownNode(u32),
    #[error("sink cap {cap} is below 3f + 1 = {min}")]
    SinkCap { cap: usize, min: usize },
    #[error("explicit layout lists {got} positions for {n} nodes")]
    Positions { got: usize, n: usize },
    #[error("radio range must be positive")]
    Range,
    #[error("rrb_forwards must be at least 1")]
    Forwards,
}

impl ScenarioConfig {
    pub fn new(n: usize) -> Self {
        ScenarioConfig {
            n,
            f: None,
            protocol: default_protocol(),
            proposals: default_proposals(),
            sink_mode: default_sink_mode(),
            sink_cap: None,
            rrb_forwards: None,
            trials: default_trials(),
            seed: 0,
            time_budget: default_budget(),
            trace: default_trace(),
            topology: TopologyConfig::default(),
            link: LinkModel::default(),
            adversary: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: ScenarioConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// The fault budget: explicit, or the largest the size allows.
    pub fn f(&self) -> usize {
        self.f.unwrap_or(self.n.saturating_sub(1) / 3)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::Empty);
        }
        let f = self.f();
        if self.n < 3 * f + 1 {
            return Err(ConfigError::Budget { n: self.n, f });
        }
        if self.trials == 0 {
            return Err(ConfigError::NoTrials);
        }
        self.link.validate().map_err(ConfigError::Link)?;
        if self.topology.range <= 0.0 || self.topology.range.is_nan() {
            return Err(ConfigError::Range);
        }
        if let Layout::Explicit { positions } = &self.topology.layout {
            if positions.len() != self.n {
                return Err(ConfigError::Positions {
                    got: positions.len(),
                    n: self.n,
                });
            }
        }
        if let Some(cap) = self.sink_cap {
            if cap < 3 * f + 1 {
                return Err(ConfigError::SinkCap { cap, min: 3 * f + 1 });
            }
        }
        if self.rrb_forwards == Some(0) {
            return Err(ConfigError::Forwards);
        }
        if let Some(a) = &self.adversary {
            if let Some(ids) = &a.nodes {
                if ids.len() > f {
                    return Err(ConfigError::TooManyByzantine { got: ids.len(), f });
                }
                if let Some(bad) = ids.iter().find(|i| **i as usize >= self.n) {
                    return Err(ConfigError::UnknownNode(*bad));
                }
            }
            for o in &a.network {
                o.model.validate().map_err(ConfigError::Link)?;
                for end in [o.from, o.to].into_iter().flatten() {
                    if end as usize >= self.n {
                        return Err(ConfigError::UnknownNode(end));
                    }
                }
            }
            if !(0.0..=1.0).contains(&a.forge_rate) {
                return Err(ConfigError::Link(format!("forge_rate {}", a.forge_rate)));
            }
        }
        Ok(())
    }
}
