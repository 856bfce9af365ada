//! Annotations, posts and comments, and how they spread.
//!
//! Records are append-only and immutable once created; their IDs are SHA-1
//! over author, timestamp and content, so identical records converge to the
//! same ID everywhere. Two mechanisms synchronize stores across the overlay:
//!
//! - epidemic dissemination: once a minute each node forwards records
//!   received since the last tick to all linked neighbors except the ones
//!   they arrived from (announcements skip the tick and forward at once);
//! - anti-entropy reconciliation: every thirty minutes a node picks a random
//!   neighbor and compares SHA-1 hashes over 256-entry chunks of the sorted
//!   (timestamp, id) list of records from the last seven days, exchanging
//!   ids and record bodies only for mismatched chunks, rounds repeating
//!   until the hash lists agree (bounded at ten rounds per dialogue).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::dht::Key;
use crate::transport::{Millis, PeerAddr};

pub const GOSSIP_INTERVAL: Millis = 60_000; // 1 min
pub const RECON_INTERVAL: Millis = 1_800_000; // 30 min
pub const RECON_WINDOW: Millis = 7 * 24 * 3_600_000; // 7 days
pub const RECON_CHUNK: usize = 256;
pub const RECON_MAX_ROUNDS: u32 = 10;
/// Minimum selected A/V annotation span after rounding, in seconds.
pub const MIN_AV_SPAN: u64 = 5;
pub const POST_TEXT_MIN: usize = 100;
pub const POST_TEXT_MAX: usize = 1600;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForumError {
    #[error("invalid annotation geometry: {0}")]
    InvalidGeometry(String),
    #[error("post text must be {POST_TEXT_MIN}..={POST_TEXT_MAX} characters, got {0}")]
    BadTextLength(usize),
    #[error("reply target {0} is unknown on this node")]
    UnknownReplyTarget(Key),
    #[error("a post needs at least one annotation or a file id")]
    NothingToPost,
}

/// Position information for the three annotation kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnnotationProps {
    /// One continuous run of selected words on a PDF page.
    PdfTextSel {
        page_number: u32,
        first_word: u32,
        last_word: u32,
    },
    /// A highlighted rectangle, coordinates relative to the page's top-left.
    PdfRectSel {
        page_number: u32,
        top_left: (f64, f64),
        bottom_right: (f64, f64),
    },
    /// A tagged stretch of audio or video, whole seconds.
    AvRange { start_time: u64, end_time: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: Key,
    pub file_id: Key,
    pub timestamp: Millis,
    pub author: String,
    pub text: String,
    pub props: AnnotationProps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: Key,
    /// Zero when the post carries multiple annotations.
    pub file_id: Key,
    pub timestamp: Millis,
    pub author: String,
    pub title: String,
    pub text: String,
    pub properties: Vec<AnnotationProps>,
    #[serde(default)]
    pub is_announcement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: Key,
    pub file_id: Key,
    pub timestamp: Millis,
    pub author: String,
    pub text: String,
    /// ID of the post or comment this replies to.
    pub reply_to: Key,
    pub properties: Vec<AnnotationProps>,
}

/// A record as it travels in GOSSIP and RECON_RECORDS messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record")]
pub enum ForumRecord {
    Post(Post),
    Comment(Comment),
}

impl ForumRecord {
    pub fn id(&self) -> Key {
        match self {
            ForumRecord::Post(p) => p.post_id,
            ForumRecord::Comment(c) => c.comment_id,
        }
    }

    pub fn timestamp(&self) -> Millis {
        match self {
            ForumRecord::Post(p) => p.timestamp,
            ForumRecord::Comment(c) => c.timestamp,
        }
    }

    pub fn is_announcement(&self) -> bool {
        matches!(self, ForumRecord::Post(p) if p.is_announcement)
    }
}

fn record_id(author: &str, timestamp: Millis, serialized_fields: &[u8]) -> Key {
    let mut h = Sha1::new();
    h.update(author.as_bytes());
    h.update(timestamp.to_be_bytes());
    h.update(serialized_fields);
    Key(h.finalize().into())
}

/// Validates and normalizes annotation inputs and assigns the content ID.
/// A/V endpoints arrive as fractional seconds, are rounded to the nearest
/// integer, and the selection is stretched to at least five seconds.
pub fn create_annotation(
    file_id: Key,
    author: &str,
    text: &str,
    spec: crate::transport::AnnotationSpec,
    timestamp: Millis,
) -> Result<Annotation, ForumError> {
    use crate::transport::AnnotationSpec as Spec;
    let props = match spec {
        Spec::PdfTextSel {
            page_number,
            first_word,
            last_word,
        } => {
            if page_number < 1 {
                return Err(ForumError::InvalidGeometry("page numbers start at 1".into()));
            }
            if first_word > last_word {
                return Err(ForumError::InvalidGeometry(format!(
                    "first word {first_word} after last word {last_word}"
                )));
            }
            AnnotationProps::PdfTextSel {
                page_number,
                first_word,
                last_word,
            }
        }
        Spec::PdfRectSel {
            page_number,
            top_left,
            bottom_right,
        } => {
            if page_number < 1 {
                return Err(ForumError::InvalidGeometry("page numbers start at 1".into()));
            }
            if !(top_left.0 < bottom_right.0 && top_left.1 < bottom_right.1) {
                return Err(ForumError::InvalidGeometry(
                    "top-left corner must be above and left of bottom-right".into(),
                ));
            }
            AnnotationProps::PdfRectSel {
                page_number,
                top_left,
                bottom_right,
            }
        }
        Spec::AvRange {
            start_time,
            end_time,
        } => {
            if !start_time.is_finite() || !end_time.is_finite() || start_time < 0.0 {
                return Err(ForumError::InvalidGeometry("non-finite time".into()));
            }
            let start = start_time.round() as u64;
            let end = end_time.round() as u64;
            if end < start {
                return Err(ForumError::InvalidGeometry("selection ends before it starts".into()));
            }
            let end = end.max(start + MIN_AV_SPAN);
            AnnotationProps::AvRange {
                start_time: start,
                end_time: end,
            }
        }
    };
    let serialized = serde_json::to_vec(&(&file_id, text, &props)).expect("serializable");
    Ok(Annotation {
        annotation_id: record_id(author, timestamp, &serialized),
        file_id,
        timestamp,
        author: author.to_string(),
        text: text.to_string(),
        props,
    })
}

fn check_text_len(text: &str) -> Result<(), ForumError> {
    let len = text.chars().count();
    if !(POST_TEXT_MIN..=POST_TEXT_MAX).contains(&len) {
        return Err(ForumError::BadTextLength(len));
    }
    Ok(())
}

/// Builds a post directly (no annotations attached).
pub fn create_post(
    file_id: Key,
    author: &str,
    title: &str,
    text: &str,
    is_announcement: bool,
    timestamp: Millis,
) -> Result<Post, ForumError> {
    check_text_len(text)?;
    let serialized =
        serde_json::to_vec(&(&file_id, title, text, is_announcement)).expect("serializable");
    Ok(Post {
        post_id: record_id(author, timestamp, &serialized),
        file_id,
        timestamp,
        author: author.to_string(),
        title: title.to_string(),
        text: text.to_string(),
        properties: Vec::new(),
        is_announcement,
    })
}

/// Converts one or more annotations into a post. The annotation text is
/// copied into the post text (with `extra_text` appended); a single
/// annotation keeps its file ID, several set it to zero and serialize all
/// their properties into the post.
pub fn annotation_to_post(
    annotations: &[Annotation],
    author: &str,
    title: &str,
    extra_text: &str,
    is_announcement: bool,
    timestamp: Millis,
) -> Result<Post, ForumError> {
    if annotations.is_empty() {
        return Err(ForumError::NothingToPost);
    }
    let mut parts: Vec<&str> = annotations
        .iter()
        .map(|a| a.text.as_str())
        .filter(|t| !t.is_empty())
        .collect();
    if !extra_text.is_empty() {
        parts.push(extra_text);
    }
    let text = parts.join("\n");
    check_text_len(&text)?;
    let file_id = if annotations.len() == 1 {
        annotations[0].file_id
    } else {
        Key::ZERO
    };
    let properties: Vec<AnnotationProps> = annotations.iter().map(|a| a.props.clone()).collect();
    let serialized =
        serde_json::to_vec(&(&file_id, title, &text, &properties)).expect("serializable");
    Ok(Post {
        post_id: record_id(author, timestamp, &serialized),
        file_id,
        timestamp,
        author: author.to_string(),
        title: title.to_string(),
        text,
        properties,
        is_announcement,
    })
}

pub fn create_comment(
    store: &ForumStore,
    file_id: Key,
    author: &str,
    text: &str,
    reply_to: Key,
    timestamp: Millis,
) -> Result<Comment, ForumError> {
    if !store.contains(&reply_to) {
        return Err(ForumError::UnknownReplyTarget(reply_to));
    }
    let serialized = serde_json::to_vec(&(&file_id, text, &reply_to)).expect("serializable");
    Ok(Comment {
        comment_id: record_id(author, timestamp, &serialized),
        file_id,
        timestamp,
        author: author.to_string(),
        text: text.to_string(),
        reply_to,
        properties: Vec::new(),
    })
}

/// The node-local forum database: append-only posts and comments, locally
/// created annotations, and the bookkeeping gossip needs.
#[derive(Debug, Default, Clone)]
pub struct ForumStore {
    posts: BTreeMap<Key, Post>,
    comments: BTreeMap<Key, Comment>,
    annotations: BTreeMap<Key, Annotation>,
    /// Comments whose reply target has not arrived yet, keyed by target.
    pending_comments: BTreeMap<Key, Vec<Comment>>,
    /// Records awaiting the next gossip tick, with the peers they came from.
    gossip_pending: BTreeMap<Key, BTreeSet<PeerAddr>>,
}

impl ForumStore {
    pub fn new() -> ForumStore {
        ForumStore::default()
    }

    pub fn contains(&self, id: &Key) -> bool {
        self.posts.contains_key(id) || self.comments.contains_key(id)
    }

    pub fn post_count(&self) -> usize {
        self.posts.len()
    }

    pub fn comment_count(&self) -> usize {
        // attached comments only; pending ones are not displayed
        self.comments.len()
    }

    pub fn get_record(&self, id: &Key) -> Option<ForumRecord> {
        if let Some(p) = self.posts.get(id) {
            return Some(ForumRecord::Post(p.clone()));
        }
        self.comments.get(id).map(|c| ForumRecord::Comment(c.clone()))
    }

    pub fn add_annotation(&mut self, a: Annotation) {
        self.annotations.insert(a.annotation_id, a);
    }

    pub fn annotation(&self, id: &Key) -> Option<&Annotation> {
        self.annotations.get(id)
    }

    /// Inserts a record received from `source` (None for locally created
    /// ones), queuing it for the next gossip tick. Returns false for
    /// duplicates — but still notes the extra source so we never echo a
    /// record back to a peer that already has it.
    pub fn insert(&mut self, record: ForumRecord, source: Option<&PeerAddr>) -> bool {
        let id = record.id();
        let known = self.contains(&id) || self.is_pending_comment(&id);
        if known {
            if let (Some(sources), Some(src)) = (self.gossip_pending.get_mut(&id), source) {
                sources.insert(src.clone());
            }
            return false;
        }
        let mut sources = BTreeSet::new();
        if let Some(src) = source {
            sources.insert(src.clone());
        }
        self.gossip_pending.insert(id, sources);
        self.store_record(record);
        true
    }

    /// Inserts a record learned through reconciliation. Repaired history is
    /// not re-gossiped; each peer repairs its own gaps.
    pub fn insert_reconciled(&mut self, record: ForumRecord) -> bool {
        let id = record.id();
        if self.contains(&id) || self.is_pending_comment(&id) {
            return false;
        }
        self.store_record(record);
        true
    }

    fn is_pending_comment(&self, id: &Key) -> bool {
        self.pending_comments
            .values()
            .flatten()
            .any(|c| c.comment_id == *id)
    }

    fn store_record(&mut self, record: ForumRecord) {
        match record {
            ForumRecord::Post(p) => {
                let id = p.post_id;
                self.posts.insert(id, p);
                self.attach_pending(id);
            }
            ForumRecord::Comment(c) => {
                if self.contains(&c.reply_to) {
                    let id = c.comment_id;
                    self.comments.insert(id, c);
                    self.attach_pending(id);
                } else {
                    self.pending_comments.entry(c.reply_to).or_default().push(c);
                }
            }
        }
    }

    /// Attaches any comments that were waiting for `target` to arrive,
    /// cascading to replies-to-replies.
    fn attach_pending(&mut self, target: Key) {
        let mut stack = vec![target];
        while let Some(id) = stack.pop() {
            if let Some(waiting) = self.pending_comments.remove(&id) {
                for c in waiting {
                    let cid = c.comment_id;
                    self.comments.insert(cid, c);
                    stack.push(cid);
                }
            }
        }
    }

    /// Drains the per-neighbor gossip batches for this tick: each pending
    /// record goes to every neighbor except the ones it was received from.
    pub fn gossip_batches(&mut self, neighbors: &[PeerAddr]) -> Vec<(PeerAddr, Vec<ForumRecord>)> {
        if self.gossip_pending.is_empty() {
            return Vec::new();
        }
        let pending = std::mem::take(&mut self.gossip_pending);
        let mut batches: Vec<(PeerAddr, Vec<ForumRecord>)> = Vec::new();
        for neighbor in neighbors {
            let records: Vec<ForumRecord> = pending
                .iter()
                .filter(|(_, sources)| !sources.contains(neighbor))
                .filter_map(|(id, _)| self.get_record(id).or_else(|| self.pending_record(id)))
                .collect();
            if !records.is_empty() {
                batches.push((neighbor.clone(), records));
            }
        }
        batches
    }

    /// Takes a single record out of the gossip queue for immediate
    /// forwarding (announcements do not wait for the tick).
    pub fn take_immediate(&mut self, id: &Key) -> Option<BTreeSet<PeerAddr>> {
        self.gossip_pending.remove(id)
    }

    fn pending_record(&self, id: &Key) -> Option<ForumRecord> {
        self.pending_comments
            .values()
            .flatten()
            .find(|c| c.comment_id == *id)
            .map(|c| ForumRecord::Comment(c.clone()))
    }

    /// Record ids (posts, comments, and held comments) with timestamp >=
    /// `since`, sorted by (timestamp, id) — the reconciliation order.
    pub fn window_ids(&self, since: Millis) -> Vec<Key> {
        let mut entries: Vec<(Millis, Key)> = self
            .posts
            .values()
            .map(|p| (p.timestamp, p.post_id))
            .chain(self.comments.values().map(|c| (c.timestamp, c.comment_id)))
            .chain(
                self.pending_comments
                    .values()
                    .flatten()
                    .map(|c| (c.timestamp, c.comment_id)),
            )
            .filter(|(ts, _)| *ts >= since)
            .collect();
        entries.sort();
        entries.into_iter().map(|(_, id)| id).collect()
    }

    /// The timestamp anchoring a reconciliation dialogue started now: the
    /// oldest record within the seven-day window, or the window edge itself
    /// when the store has nothing that recent. Posts and comments both
    /// anchor the window.
    pub fn window_anchor(&self, now: Millis) -> Millis {
        let edge = now.saturating_sub(RECON_WINDOW);
        self.posts
            .values()
            .map(|p| p.timestamp)
            .chain(self.comments.values().map(|c| c.timestamp))
            .chain(self.pending_comments.values().flatten().map(|c| c.timestamp))
            .filter(|ts| *ts >= edge)
            .min()
            .unwrap_or(edge)
    }

    /// Latest record timestamp seen, shipped in leave requests.
    pub fn high_water(&self) -> Millis {
        self.posts
            .values()
            .map(|p| p.timestamp)
            .chain(self.comments.values().map(|c| c.timestamp))
            .max()
            .unwrap_or(0)
    }

    /// Lookup across attached and pending records, for RECON_FETCH.
    pub fn fetch_record(&self, id: &Key) -> Option<ForumRecord> {
        self.get_record(id).or_else(|| self.pending_record(id))
    }
}

/// SHA-1 over the concatenated ids of each 256-entry chunk.
pub fn chunk_hashes(ids: &[Key]) -> Vec<Key> {
    ids.chunks(RECON_CHUNK)
        .map(|chunk| {
            let mut h = Sha1::new();
            for id in chunk {
                h.update(id.0);
            }
            Key(h.finalize().into())
        })
        .collect()
}

/// One side's message in a reconciliation dialogue. The node layer wraps
/// these into wire payloads; tests drive them directly.
#[derive(Debug, Clone, PartialEq)]
pub enum ReconMsg {
    Start { since: Millis },
    Hashes { since: Millis, chunk_hashes: Vec<Key> },
    Ids { request: bool, chunks: Vec<u32>, ids: Vec<Key> },
    Fetch { ids: Vec<Key> },
    Records { records: Vec<ForumRecord> },
}

/// Dialogue progress for either role. The initiator drives rounds; the
/// responder only needs to remember the anchor timestamp.
#[derive(Debug, Clone)]
pub struct ReconDialogue {
    pub initiator: bool,
    pub since: Millis,
    pub round: u32,
    pub converged: bool,
    pub aborted: bool,
    /// initiator only: replies still expected before the next round
    awaiting_ids: bool,
    awaiting_records: bool,
    /// ids transferred in either direction, for diagnostics and tests
    pub ids_exchanged: usize,
}

impl ReconDialogue {
    /// Starts a dialogue as initiator; returns the first message to send.
    pub fn initiate(store: &ForumStore, now: Millis) -> (ReconDialogue, ReconMsg) {
        let since = store.window_anchor(now);
        (
            ReconDialogue {
                initiator: true,
                since,
                round: 1,
                converged: false,
                aborted: false,
                awaiting_ids: false,
                awaiting_records: false,
                ids_exchanged: 0,
            },
            ReconMsg::Start { since },
        )
    }

    /// Accepts a Start on the responder side. The responder lowers the
    /// anchor to its own oldest in-window record when that is older than
    /// the initiator's: otherwise records predating the initiator's oldest
    /// post could never cross over in either direction of this dialogue.
    pub fn respond(store: &ForumStore, since: Millis, now: Millis) -> (ReconDialogue, ReconMsg) {
        let since = since.min(store.window_anchor(now));
        let dialogue = ReconDialogue {
            initiator: false,
            since,
            round: 1,
            converged: false,
            aborted: false,
            awaiting_ids: false,
            awaiting_records: false,
            ids_exchanged: 0,
        };
        let hashes = chunk_hashes(&store.window_ids(since));
        (
            dialogue,
            ReconMsg::Hashes {
                since,
                chunk_hashes: hashes,
            },
        )
    }

    pub fn finished(&self) -> bool {
        self.converged || self.aborted
    }

    /// Feeds one incoming message; returns the messages to send back, in
    /// order. Works for both roles.
    pub fn handle(&mut self, store: &mut ForumStore, msg: ReconMsg, now: Millis) -> Vec<ReconMsg> {
        match msg {
            ReconMsg::Start { since } => {
                // responder: a Start opens the next round with fresh hashes
                let since = since.min(store.window_anchor(now));
                self.since = since;
                self.round += 1;
                let hashes = chunk_hashes(&store.window_ids(since));
                vec![ReconMsg::Hashes {
                    since,
                    chunk_hashes: hashes,
                }]
            }
            ReconMsg::Hashes {
                since,
                chunk_hashes: theirs,
            } => {
                debug_assert!(self.initiator);
                self.since = since;
                let my_ids = store.window_ids(since);
                let mine = chunk_hashes(&my_ids);
                if mine == theirs {
                    self.converged = true;
                    return Vec::new();
                }
                let chunk_count = mine.len().max(theirs.len());
                let mismatched: Vec<u32> = (0..chunk_count)
                    .filter(|&i| mine.get(i) != theirs.get(i))
                    .map(|i| i as u32)
                    .collect();
                let ids: Vec<Key> = mismatched
                    .iter()
                    .flat_map(|&i| {
                        my_ids
                            .iter()
                            .skip(i as usize * RECON_CHUNK)
                            .take(RECON_CHUNK)
                            .copied()
                            .collect::<Vec<_>>()
                    })
                    .collect();
                self.awaiting_ids = true;
                vec![ReconMsg::Ids {
                    request: true,
                    chunks: mismatched,
                    ids,
                }]
            }
            ReconMsg::Ids {
                request,
                chunks,
                ids,
            } => {
                self.ids_exchanged += ids.len();
                let missing: Vec<Key> = ids
                    .iter()
                    .filter(|id| store.fetch_record(id).is_none())
                    .copied()
                    .collect();
                let mut out = Vec::new();
                if !missing.is_empty() {
                    out.push(ReconMsg::Fetch { ids: missing });
                }
                if request {
                    // responder: also return our ids for those chunk slots
                    let my_ids = store.window_ids(self.since);
                    let reply_ids: Vec<Key> = chunks
                        .iter()
                        .flat_map(|&i| {
                            my_ids
                                .iter()
                                .skip(i as usize * RECON_CHUNK)
                                .take(RECON_CHUNK)
                                .copied()
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    out.push(ReconMsg::Ids {
                        request: false,
                        chunks,
                        ids: reply_ids,
                    });
                } else {
                    // initiator got the reply; if nothing to fetch, next round
                    self.awaiting_ids = false;
                    self.awaiting_records = !out.is_empty();
                    if !self.awaiting_records {
                        if let Some(start) = self.next_round() {
                            out.push(start);
                        }
                    }
                }
                out
            }
            ReconMsg::Fetch { ids } => {
                let records: Vec<ForumRecord> =
                    ids.iter().filter_map(|id| store.fetch_record(id)).collect();
                vec![ReconMsg::Records { records }]
            }
            ReconMsg::Records { records } => {
                for r in records {
                    store.insert_reconciled(r);
                }
                if self.initiator && self.awaiting_records {
                    self.awaiting_records = false;
                    if !self.awaiting_ids {
                        if let Some(start) = self.next_round() {
                            return vec![start];
                        }
                    }
                }
                Vec::new()
            }
        }
    }

    fn next_round(&mut self) -> Option<ReconMsg> {
        if self.round >= RECON_MAX_ROUNDS {
            self.aborted = true;
            return None;
        }
        self.round += 1;
        Some(ReconMsg::Start { since: self.since })
    }
}
