//! Run traces: one record per observable event, with a stable text form.
//!
//! Text format, one record per line after a `#` header:
//!
//! ```text
//! <time_ms> <node> <KIND> <digest> [key=value ...]
//! ```
//!
//! `node` is the numeric id, `digest` is 16 hex digits (the short SHA-256 of
//! the transmitted bytes for SEND/RECV, of the detail text otherwise). Byte
//! strings are hex, node lists are comma separated, instances are written
//! as `label:TAG[:sub_round]`. Kinds:
//!
//! | kind | fields |
//! |---|---|
//! | SEND | `via` `msg` `len` |
//! | RECV | `from` `len` |
//! | NBR_ADD / NBR_DEL | `peer` |
//! | DISCOVERED | `known` `partial` |
//! | SINK | `epoch` `members` |
//! | SINK_NONE | `epoch` |
//! | PROPOSE | `instance` `value` |
//! | DECIDE | `instance` `value` `round` `nested` |
//! | ACCEPT | `instance` `value` |
//! | MV_OK | `from` `payload` |
//! | REJECT | `instance` `from` `reason` |
//! | INJECT | `payload` `justified` |
//! | CRASH | |

use std::fmt::Write as _;

use sitan_core::auth::short_digest;
use sitan_core::{InstanceId, NodeEvent, NodeId, ProtocolTag, SimTime};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    Send { via: String, msg: String, len: usize },
    Recv { from: NodeId, len: usize },
    NeighborAdded(NodeId),
    NeighborRemoved(NodeId),
    Discovered { known: Vec<NodeId>, partial: bool },
    Sink { epoch: u32, members: Vec<NodeId> },
    SinkNone { epoch: u32 },
    Propose { instance: InstanceId, value: Vec<u8> },
    Decide { instance: InstanceId, value: Vec<u8>, round: u32, nested: bool },
    Accept { instance: InstanceId, value: Vec<u8> },
    MvOk { from: NodeId, payload: Vec<u8> },
    Reject { instance: InstanceId, from: NodeId, reason: String },
    Inject { payload: Vec<u8>, justified: bool },
    Crash,
}

impl Entry {
    pub fn kind(&self) -> &'static str {
        match self {
            Entry::Send { .. } => "SEND",
            Entry::Recv { .. } => "RECV",
            Entry::NeighborAdded(_) => "NBR_ADD",
            Entry::NeighborRemoved(_) => "NBR_DEL",
            Entry::Discovered { .. } => "DISCOVERED",
            Entry::Sink { .. } => "SINK",
            Entry::SinkNone { .. } => "SINK_NONE",
            Entry::Propose { .. } => "PROPOSE",
            Entry::Decide { .. } => "DECIDE",
            Entry::Accept { .. } => "ACCEPT",
            Entry::MvOk { .. } => "MV_OK",
            Entry::Reject { .. } => "REJECT",
            Entry::Inject { .. } => "INJECT",
            Entry::Crash => "CRASH",
        }
    }

    pub fn from_event(e: &NodeEvent) -> Self {
        match e {
            NodeEvent::NeighborAdded(n) => Entry::NeighborAdded(*n),
            NodeEvent::NeighborRemoved(n) => Entry::NeighborRemoved(*n),
            NodeEvent::DiscoveryComplete { known, partial } => Entry::Discovered {
                known: known.clone(),
                partial: *partial,
            },
            NodeEvent::SinkFormed(v) => Entry::Sink {
                epoch: v.epoch,
                members: v.members.clone(),
            },
            NodeEvent::SinkUnavailable { epoch } => Entry::SinkNone { epoch: *epoch },
            NodeEvent::Proposed { instance, value } => Entry::Propose {
                instance: instance.clone(),
                value: value.clone(),
            },
            NodeEvent::Decided {
                instance,
                value,
                round,
                nested,
            } => Entry::Decide {
                instance: instance.clone(),
                value: value.clone(),
                round: *round,
                nested: *nested,
            },
            NodeEvent::ResultAccepted { instance, value } => Entry::Accept {
                instance: instance.clone(),
                value: value.clone(),
            },
            NodeEvent::MvAccepted { from, payload } => Entry::MvOk {
                from: *from,
                payload: payload.clone(),
            },
            NodeEvent::Rejected {
                instance,
                from,
                reason,
            } => Entry::Reject {
                instance: instance.clone(),
                from: *from,
                reason: reason.replace(' ', "_"),
            },
        }
    }

    fn detail(&self) -> String {
        let mut s = String::new();
        match self {
            Entry::Send { via, msg, len } => write!(s, "via={via} msg={msg} len={len}"),
            Entry::Recv { from, len } => write!(s, "from={} len={len}", from.0),
            Entry::NeighborAdded(p) | Entry::NeighborRemoved(p) => write!(s, "peer={}", p.0),
            Entry::Discovered { known, partial } => {
                write!(s, "known={} partial={}", nodes(known), *partial as u8)
            }
            Entry::Sink { epoch, members } => {
                write!(s, "epoch={epoch} members={}", nodes(members))
            }
            Entry::SinkNone { epoch } => write!(s, "epoch={epoch}"),
            Entry::Propose { instance, value } => {
                write!(s, "instance={instance} value={}", hex::encode(value))
            }
            Entry::Decide {
                instance,
                value,
                round,
                nested,
            } => write!(
                s,
                "instance={instance} value={} round={round} nested={}",
                hex::encode(value),
                *nested as u8
            ),
            Entry::Accept { instance, value } => {
                write!(s, "instance={instance} value={}", hex::encode(value))
            }
            Entry::MvOk { from, payload } => {
                write!(s, "from={} payload={}", from.0, hex::encode(payload))
            }
            Entry::Reject {
                instance,
                from,
                reason,
            } => write!(s, "instance={instance} from={} reason={reason}", from.0),
            Entry::Inject { payload, justified } => write!(
                s,
                "payload={} justified={}",
                hex::encode(payload),
                *justified as u8
            ),
            Entry::Crash => Ok(()),
        }
        .expect("write to string");
        s
    }
}

fn nodes(v: &[NodeId]) -> String {
    v.iter()
        .map(|n| n.0.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub time: SimTime,
    pub node: NodeId,
    /// Digest of the transmitted bytes for SEND and RECV; computed from the
    /// detail text for other kinds when rendered.
    pub digest: Option<u64>,
    pub entry: Entry,
}

impl Record {
    pub fn render(&self, out: &mut String) {
        let detail = self.entry.detail();
        let digest = self
            .digest
            .unwrap_or_else(|| short_digest(detail.as_bytes()));
        write!(
            out,
            "{} {} {} {:016x}",
            self.time,
            self.node.0,
            self.entry.kind(),
            digest
        )
        .expect("write to string");
        if !detail.is_empty() {
            out.push(' ');
            out.push_str(&detail);
        }
        out.push('\n');
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
}

pub fn format_instance(id: &InstanceId) -> String {
    id.to_string()
}

pub fn parse_instance(s: &str) -> Option<InstanceId> {
    let mut parts = s.split(':');
    let label = parts.next()?;
    let tag = match parts.next()? {
        "BEB" => ProtocolTag::Beb,
        "RRB" => ProtocolTag::Rrb,
        "BIN" => ProtocolTag::Binary,
        "MV" => ProtocolTag::Multivalued,
        "VEC" => ProtocolTag::Vector,
        _ => return None,
    };
    let sub_round = match parts.next() {
        Some(r) => Some(r.parse().ok()?),
        None => None,
    };
    if parts.next().is_some() {
        return None;
    }
    Some(InstanceId {
        label: label.to_string(),
        tag,
        sub_round,
    })
}

/// Renders a trace with its header line.
pub fn render(header: &str, records: &[Record]) -> String {
    let mut out = String::with_capacity(64 * records.len() + header.len() + 4);
    out.push_str("# ");
    out.push_str(header);
    out.push('\n');
    for r in records {
        r.render(&mut out);
    }
    out
}

/// Parses a rendered trace, returning the header and the records.
pub fn parse(text: &str) -> Result<(String, Vec<Record>), ParseError> {
    let mut header = String::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(h) = line.strip_prefix("# ") {
            if i == 0 {
                header = h.to_string();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| ParseError::Line {
            line: line_no,
            msg: msg.to_string(),
        };
        let mut it = line.split(' ');
        let time = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("bad time"))?;
        let node = NodeId(
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err("bad node"))?,
        );
        let kind = it.next().ok_or_else(|| err("missing kind"))?;
        let digest = it
            .next()
            .and_then(|d| u64::from_str_radix(d, 16).ok())
            .ok_or_else(|| err("bad digest"))?;
        let fields: std::collections::BTreeMap<&str, &str> =
            it.filter_map(|kv| kv.split_once('=')).collect();
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(&format!("missing {k}")));
        let num = |k: &str| -> Result<u64, ParseError> {
            get(k)?.parse().map_err(|_| err(&format!("bad {k}")))
        };
        let bytes = |k: &str| -> Result<Vec<u8>, ParseError> {
            hex::decode(get(k)?).map_err(|_| err(&format!("bad hex in {k}")))
        };
        let node_list = |k: &str| -> Result<Vec<NodeId>, ParseError> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| x.parse().map(NodeId).map_err(|_| err("bad node list")))
                .collect()
        };
        let inst = |k: &str| -> Result<InstanceId, ParseError> {
            parse_instance(get(k)?).ok_or_else(|| err("bad instance"))
        };
        let flag = |k: &str| -> Result<bool, ParseError> { Ok(num(k)? != 0) };
        let entry = match kind {
            "SEND" => Entry::Send {
                via: get("via")?.to_string(),
                msg: get("msg")?.to_string(),
                len: num("len")? as usize,
            },
            "RECV" => Entry::Recv {
                from: NodeId(num("from")? as u32),
                len: num("len")? as usize,
            },
            "NBR_ADD" => Entry::NeighborAdded(NodeId(num("peer")? as u32)),
            "NBR_DEL" => Entry::NeighborRemoved(NodeId(num("peer")? as u32)),
            "DISCOVERED" => Entry::Discovered {
                known: node_list("known")?,
                partial: flag("partial")?,
            },
            "SINK" => Entry::Sink {
                epoch: num("epoch")? as u32,
                members: node_list("members")?,
            },
            "SINK_NONE" => Entry::SinkNone {
                epoch: num("epoch")? as u32,
            },
            "PROPOSE" => Entry::Propose {
                instance: inst("instance")?,
                value: bytes("value")?,
            },
            "DECIDE" => Entry::Decide {
                instance: inst("instance")?,
                value: bytes("value")?,
                round: num("round")? as u32,
                nested: flag("nested")?,
            },
            "ACCEPT" => Entry::Accept {
                instance: inst("instance")?,
                value: bytes("value")?,
            },
            "MV_OK" => Entry::MvOk {
                from: NodeId(num("from")? as u32),
                payload: bytes("payload")?,
            },
            "REJECT" => Entry::Reject {
                instance: inst("instance")?,
                from: NodeId(num("from")? as u32),
                reason: get("reason")?.to_string(),
            },
            "INJECT" => Entry::Inject {
                payload: bytes("payload")?,
                justified: flag("justified")?,
            },
            "CRASH" => Entry::Crash,
            other => return Err(err(&format!("unknown kind {other}"))),
        };
        let digest = match entry {
            Entry::Send { .. } | Entry::Recv { .. } => Some(digest),
            _ => None,
        };
        records.push(Record {
            time,
            node,
            digest,
            entry,
        });
    }
    Ok((header, records))
}
