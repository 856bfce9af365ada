//! Wire format and bootstrap machinery shared by both transports.
//!
//! Every message travels as an [`Envelope`]: a canonical-JSON body (sorted
//! field names) framed by a 4-byte big-endian length prefix on stream
//! transports. The deterministic in-memory transport used by the simulator
//! passes envelopes directly and draws per-message delays from a seeded
//! [`DelayModel`]; the socket transport serializes them. Either way a frame
//! never exceeds 1 MiB and per-(sender, receiver) FIFO order is preserved.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dht::{FileLocator, Key, KeyRecord};
use crate::forum::ForumRecord;
use crate::idspace::{Label, Zone};

/// Virtual or wall-clock time in milliseconds.
pub type Millis = u64;

pub const DEFAULT_RENDEZVOUS_PORT: u16 = 7000;
pub const DEFAULT_NODE_PORT: u16 = 7100;
/// Maximum serialized frame, length prefix included.
pub const MAX_FRAME: usize = 1 << 20;
/// Rendezvous entries not re-registered within this window are pruned.
pub const RENDEZVOUS_PRUNE_AFTER: Millis = 600_000;
/// Size of the random peer sample returned to joiners.
pub const RENDEZVOUS_SAMPLE: usize = 16;

/// A network address ("host:port") as used on the wire and as the primary
/// identity of a physical node. Ordered so that notification fan-out can be
/// deterministic.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerAddr(pub String);

impl PeerAddr {
    pub fn new(s: impl Into<String>) -> PeerAddr {
        PeerAddr(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PeerAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for PeerAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeerAddr({})", self.0)
    }
}

/// A node's identity triple as carried in protocol messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerInfo {
    pub node_id: Label,
    pub zone: Zone,
    pub address: PeerAddr,
}

/// Routing state attached to messages that travel by label rather than by
/// address. `path` is the remaining de Bruijn walk; each holder advances
/// past the labels inside its own zone and hands the rest to the outgoing
/// neighbor owning the first label beyond.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteHeader {
    pub target: Label,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<Label>,
    #[serde(default)]
    pub stalls: u8,
}

impl RouteHeader {
    pub fn new(target: Label) -> RouteHeader {
        RouteHeader {
            target,
            path: Vec::new(),
            stalls: 0,
        }
    }
}

/// Why a join or leave request was turned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefuseReason {
    Busy,
    ZoneTooSmall,
    Leaving,
    ProtocolError,
}

/// Join request payload: who is joining and which random label they aimed at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinTicket {
    pub requester: PeerAddr,
    pub target: Label,
    pub attempt: u32,
}

/// The zone owner's reply: its full structure, from which the joiner derives
/// its own zone and edge lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReply {
    pub node_id: Label,
    pub address: PeerAddr,
    pub zone: Zone,
    pub outgoing: Vec<PeerInfo>,
    pub incoming: Vec<PeerInfo>,
}

/// Leave request payload: the leaver's whole responsibility, shipped up
/// front so acceptance completes the handover in one round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaveRequest {
    pub node_id: Label,
    pub zone: Zone,
    pub outgoing: Vec<PeerInfo>,
    pub incoming: Vec<PeerInfo>,
    pub keys: Vec<KeyRecord>,
    pub forum_high_water: Millis,
}

/// One MultiKeyPut entry. `last_refresh` is set only on zone transfers,
/// where timestamps move verbatim; ordinary publishes are stamped by the
/// owner on arrival.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MputEntry {
    pub key: Key,
    pub value: FileLocator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_refresh: Option<Millis>,
}

/// Per-key result set inside a GET_REPLY.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyResult {
    pub key: Key,
    pub records: Vec<FileLocator>,
}

/// A row of ranked search output as returned over the control socket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRow {
    pub file_hash: Key,
    pub file_name: String,
    pub file_size: u64,
    pub matched_keywords: u32,
    pub holders: Vec<PeerAddr>,
}

/// Annotation geometry passed over the control socket when creating
/// annotations and posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnnotationSpec {
    PdfTextSel {
        page_number: u32,
        first_word: u32,
        last_word: u32,
    },
    PdfRectSel {
        page_number: u32,
        top_left: (f64, f64),
        bottom_right: (f64, f64),
    },
    AvRange {
        start_time: f64,
        end_time: f64,
    },
}

mod base64_opt {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|b| STANDARD.encode(b)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Every message body, tagged on the wire by `msgType`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "msgType")]
pub enum Payload {
    // overlay maintenance
    #[serde(rename = "JOIN_REQ")]
    JoinReq(JoinTicket),
    #[serde(rename = "JOIN_REPLY")]
    JoinReply(JoinReply),
    #[serde(rename = "JOIN_REFUSE")]
    JoinRefuse { reason: RefuseReason, attempt: u32 },
    #[serde(rename = "SPLIT_CONFIRM")]
    SplitConfirm { node_id: Label, zone: Zone },
    #[serde(rename = "LEAVE_REQ")]
    LeaveReq(LeaveRequest),
    #[serde(rename = "LEAVE_ACCEPT")]
    LeaveAccept { merged_zone: Zone },
    #[serde(rename = "LEAVE_REFUSE")]
    LeaveRefuse { reason: RefuseReason },
    #[serde(rename = "ZONE_UPDATE")]
    ZoneUpdate { node: PeerInfo },
    #[serde(rename = "KEEP_ALIVE")]
    KeepAlive { node: PeerInfo },
    #[serde(rename = "TAKEOVER")]
    Takeover { dead: PeerInfo },

    // key-value operations
    #[serde(rename = "PUT")]
    Put { entry: MputEntry },
    #[serde(rename = "GET")]
    Get { key: Key },
    #[serde(rename = "GET_REPLY")]
    GetReply {
        items: Vec<KeyResult>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    #[serde(rename = "MPUT")]
    Mput { entries: Vec<MputEntry> },
    #[serde(rename = "MGET")]
    Mget { keys: Vec<Key> },

    // forum synchronization
    #[serde(rename = "GOSSIP")]
    Gossip { records: Vec<ForumRecord> },
    #[serde(rename = "RECON_START")]
    ReconStart { dialogue: u64, since: Millis },
    #[serde(rename = "RECON_HASHES")]
    ReconHashes {
        dialogue: u64,
        since: Millis,
        chunk_hashes: Vec<Key>,
    },
    #[serde(rename = "RECON_IDS")]
    ReconIds {
        dialogue: u64,
        /// true when asking the peer to send its ids for these chunks
        request: bool,
        chunks: Vec<u32>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ids: Vec<Key>,
    },
    #[serde(rename = "RECON_FETCH")]
    ReconFetch { dialogue: u64, ids: Vec<Key> },
    #[serde(rename = "RECON_RECORDS")]
    ReconRecords {
        dialogue: u64,
        records: Vec<ForumRecord>,
    },

    // file transfer
    #[serde(rename = "CHUNK_REQ")]
    ChunkReq {
        file_hash: Key,
        index: u32,
        chunk_size: u32,
    },
    #[serde(rename = "CHUNK_DATA")]
    ChunkData {
        file_hash: Key,
        index: u32,
        #[serde(with = "base64_opt")]
        bytes: Option<Vec<u8>>,
    },

    // rendezvous
    #[serde(rename = "REND_REGISTER")]
    RendRegister { listen: PeerAddr },
    #[serde(rename = "REND_ACK")]
    RendAck,
    #[serde(rename = "REND_LIST")]
    RendList { listen: PeerAddr },
    #[serde(rename = "REND_PEERS")]
    RendPeers {
        external: PeerAddr,
        peers: Vec<PeerAddr>,
    },

    // local control socket
    #[serde(rename = "CTL_SEARCH")]
    CtlSearch { query: String },
    #[serde(rename = "CTL_SEARCH_RESULTS")]
    CtlSearchResults {
        rows: Vec<SearchRow>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    #[serde(rename = "CTL_GET")]
    CtlGet { file_hash: Key },
    #[serde(rename = "CTL_GET_RESULT")]
    CtlGetResult {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    #[serde(rename = "CTL_POST")]
    CtlPost {
        title: String,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file_id: Option<Key>,
        #[serde(default)]
        announcement: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        annotation_ids: Vec<Key>,
    },
    #[serde(rename = "CTL_ANNOTATE")]
    CtlAnnotate {
        file_id: Key,
        text: String,
        spec: AnnotationSpec,
    },
    #[serde(rename = "CTL_ACK")]
    CtlAck {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<Key>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

impl Payload {
    /// The wire tag, for logs and metrics.
    pub fn msg_type(&self) -> &'static str {
        match self {
            Payload::JoinReq(_) => "JOIN_REQ",
            Payload::JoinReply(_) => "JOIN_REPLY",
            Payload::JoinRefuse { .. } => "JOIN_REFUSE",
            Payload::SplitConfirm { .. } => "SPLIT_CONFIRM",
            Payload::LeaveReq(_) => "LEAVE_REQ",
            Payload::LeaveAccept { .. } => "LEAVE_ACCEPT",
            Payload::LeaveRefuse { .. } => "LEAVE_REFUSE",
            Payload::ZoneUpdate { .. } => "ZONE_UPDATE",
            Payload::KeepAlive { .. } => "KEEP_ALIVE",
            Payload::Takeover { .. } => "TAKEOVER",
            Payload::Put { .. } => "PUT",
            Payload::Get { .. } => "GET",
            Payload::GetReply { .. } => "GET_REPLY",
            Payload::Mput { .. } => "MPUT",
            Payload::Mget { .. } => "MGET",
            Payload::Gossip { .. } => "GOSSIP",
            Payload::ReconStart { .. } => "RECON_START",
            Payload::ReconHashes { .. } => "RECON_HASHES",
            Payload::ReconIds { .. } => "RECON_IDS",
            Payload::ReconFetch { .. } => "RECON_FETCH",
            Payload::ReconRecords { .. } => "RECON_RECORDS",
            Payload::ChunkReq { .. } => "CHUNK_REQ",
            Payload::ChunkData { .. } => "CHUNK_DATA",
            Payload::RendRegister { .. } => "REND_REGISTER",
            Payload::RendAck => "REND_ACK",
            Payload::RendList { .. } => "REND_LIST",
            Payload::RendPeers { .. } => "REND_PEERS",
            Payload::CtlSearch { .. } => "CTL_SEARCH",
            Payload::CtlSearchResults { .. } => "CTL_SEARCH_RESULTS",
            Payload::CtlGet { .. } => "CTL_GET",
            Payload::CtlGetResult { .. } => "CTL_GET_RESULT",
            Payload::CtlPost { .. } => "CTL_POST",
            Payload::CtlAnnotate { .. } => "CTL_ANNOTATE",
            Payload::CtlAck { .. } => "CTL_ACK",
        }
    }
}

/// The unit of communication between nodes. Sender fields identify the
/// message originator (not the last forwarder); `hop_count` increments
/// exactly once per physical forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender_id: Option<Label>,
    pub sender_address: PeerAddr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_id: Option<u64>,
    #[serde(default)]
    pub hop_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteHeader>,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Envelope {
    pub fn new(sender_address: PeerAddr, payload: Payload) -> Envelope {
        Envelope {
            sender_id: None,
            sender_address,
            search_id: None,
            hop_count: 0,
            route: None,
            payload,
        }
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frame of {0} bytes exceeds the 1 MiB cap")]
    Oversize(usize),
    #[error("frame truncated: declared {declared} bytes, got {got}")]
    Truncated { declared: usize, got: usize },
    #[error("malformed message body: {0}")]
    Malformed(String),
}

/// Serializes an envelope to its canonical JSON body: UTF-8, object keys
/// sorted. Canonicalization makes encode deterministic so identical messages
/// are byte-identical on every platform.
pub fn encode_body(env: &Envelope) -> Result<Vec<u8>, CodecError> {
    // Round-trip through Value: serde_json's map is ordered by key.
    let value = serde_json::to_value(env).map_err(|e| CodecError::Malformed(e.to_string()))?;
    let body = serde_json::to_vec(&value).map_err(|e| CodecError::Malformed(e.to_string()))?;
    if body.len() + 4 > MAX_FRAME {
        return Err(CodecError::Oversize(body.len() + 4));
    }
    Ok(body)
}

pub fn decode_body(body: &[u8]) -> Result<Envelope, CodecError> {
    if body.len() + 4 > MAX_FRAME {
        return Err(CodecError::Oversize(body.len() + 4));
    }
    serde_json::from_slice(body).map_err(|e| CodecError::Malformed(e.to_string()))
}

/// Full stream frame: 4-byte big-endian body length, then the body.
pub fn encode_frame(env: &Envelope) -> Result<Vec<u8>, CodecError> {
    let body = encode_body(env)?;
    let mut frame = Vec::with_capacity(body.len() + 4);
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Decodes one complete frame. Any malformed input yields an error, never a
/// panic: oversize declarations, truncation, bad UTF-8/JSON and unknown
/// `msgType` values are all decode errors.
pub fn decode_frame(bytes: &[u8]) -> Result<Envelope, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated {
            declared: 4,
            got: bytes.len(),
        });
    }
    let declared = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if declared + 4 > MAX_FRAME {
        return Err(CodecError::Oversize(declared + 4));
    }
    let body = &bytes[4..];
    if body.len() != declared {
        return Err(CodecError::Truncated {
            declared,
            got: body.len(),
        });
    }
    decode_body(body)
}

/// Bootstrap registry: the rendezvous server's only state.
#[derive(Debug, Default)]
pub struct RendezvousState {
    peers: BTreeMap<PeerAddr, Millis>,
}

impl RendezvousState {
    pub fn new() -> RendezvousState {
        RendezvousState::default()
    }

    pub fn register(&mut self, addr: PeerAddr, now: Millis) {
        self.peers.insert(addr, now);
    }

    pub fn prune(&mut self, now: Millis) {
        self.peers
            .retain(|_, last| now.saturating_sub(*last) <= RENDEZVOUS_PRUNE_AFTER);
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    /// Up to 16 uniformly random known peers, never including the requester.
    pub fn sample(&self, requester: &PeerAddr, rng: &mut impl rand::Rng) -> Vec<PeerAddr> {
        let mut pool: Vec<&PeerAddr> = self.peers.keys().filter(|p| *p != requester).collect();
        let take = pool.len().min(RENDEZVOUS_SAMPLE);
        // partial Fisher-Yates: deterministic under a seeded rng
        for i in 0..take {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.into_iter().take(take).cloned().collect()
    }
}

/// Message delay distribution for the simulation transport: uniform in
/// `[min_ms, max_ms]`, with optional loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub min_ms: Millis,
    pub max_ms: Millis,
    pub loss: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        // the reference environment is a LAN
        DelayModel {
            min_ms: 1,
            max_ms: 5,
            loss: 0.0,
        }
    }
}

impl DelayModel {
    pub fn zero() -> DelayModel {
        DelayModel {
            min_ms: 0,
            max_ms: 0,
            loss: 0.0,
        }
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> Option<Millis> {
        if self.loss > 0.0 && rng.random::<f64>() < self.loss {
            return None;
        }
        Some(if self.max_ms <= self.min_ms {
            self.min_ms
        } else {
            rng.random_range(self.min_ms..=self.max_ms)
        })
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// Fuzzing the decoder with arbitrary bytes must never panic.
        #[test]
        fn decode_total_on_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = decode_frame(&bytes);
        }

        #[test]
        fn decode_total_on_framed_garbage(body in proptest::collection::vec(any::<u8>(), 0..256)) {
            let mut frame = Vec::new();
            frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
            frame.extend_from_slice(&body);
            let _ = decode_frame(&frame);
        }
    }
}
