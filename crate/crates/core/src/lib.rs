//! A P2P overlay on a de Bruijn graph ID space, with keyword search and a
//! synchronized discussion forum on top, plus a deterministic discrete-event
//! simulation harness for measuring the overlay at scale.
//!
//! The virtual ID space is the de Bruijn graph B(K, D) (default B(8, 8):
//! 16,777,216 octal labels). Each physical node owns a contiguous arc of the
//! label ring and keeps links to every node its arc has a graph edge to or
//! from, so substring routing over zones resolves any key in at most D
//! physical hops. On top of the overlay sit:
//!
//! - a key-value store keyed by SHA-1 digests (file content and keywords),
//!   with periodic refresh and expiry;
//! - local share-directory indexing with TF-IDF keyword extraction;
//! - keyword search with deterministic ranking and multi-source chunked
//!   downloads;
//! - annotations, posts and comments spread by gossip and repaired by
//!   anti-entropy reconciliation.
//!
//! The same node state machine runs over two transports: an in-memory
//! deterministic simulation (see [`sim`]) and framed TCP (see `net`).

pub mod dht;
pub mod forum;
pub mod idspace;
pub mod transport;

pub use idspace::{Label, RingParams, Zone};
pub use transport::{Millis, PeerAddr};
