//! Key-value records stored at zone owners.
//!
//! A key is a 160-bit SHA-1 digest; its first 24 bits pick the owning label
//! on the default ring. Values locate a file: content hash, size, name and
//! the address of the holder. The same key may be stored by many holders —
//! one record per (key, holder) pair — and a re-put from the same holder
//! refreshes the timestamp in place. Records expire when their holder has
//! not refreshed them for an hour; publishers re-put every 30 minutes, so
//! only dead publishers' records age out.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::idspace::{label_from_key, Label, RingParams, Zone};
use crate::transport::{Millis, PeerAddr};

/// Publishers re-issue MultiKeyPut for all shared files at this interval.
pub const REFRESH_INTERVAL: Millis = 1_800_000; // 30 min
/// Stores scan for stale records at this interval.
pub const EXPIRE_SWEEP_INTERVAL: Millis = 600_000; // 10 min
/// A record not refreshed for this long is dropped.
pub const RECORD_TTL: Millis = 3_600_000; // 60 min

/// A 160-bit digest used both as DHT key and file/record identifier.
/// Serialized everywhere as 40 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(pub [u8; 20]);

impl Key {
    pub const ZERO: Key = Key([0; 20]);

    /// SHA-1 of arbitrary bytes.
    pub fn sha1(data: impl AsRef<[u8]>) -> Key {
        Key(Sha1::digest(data.as_ref()).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Key, DhtError> {
        if s.len() != 40 {
            return Err(DhtError::BadKey(s.to_string()));
        }
        let bytes = hex::decode(s).map_err(|_| DhtError::BadKey(s.to_string()))?;
        let mut arr = [0u8; 20];
        arr.copy_from_slice(&bytes);
        Ok(Key(arr))
    }

    /// The routing label owning this key.
    pub fn label(&self, ring: &RingParams) -> Label {
        // 20 bytes always cover D*log2(K) bits for any supported ring
        label_from_key(&self.0, ring).expect("ring validated at construction")
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", self.to_hex())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Key {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Key {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Key, D::Error> {
        let s = String::deserialize(deserializer)?;
        Key::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DhtError {
    #[error("malformed key {0:?}: expected 40 hex characters")]
    BadKey(String),
    #[error("empty query")]
    EmptyQuery,
    #[error("delivery failure: {0}")]
    DeliveryFailure(String),
}

/// Where to fetch a file: the value side of a key record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLocator {
    pub file_hash: Key,
    pub file_size: u64,
    pub file_name: String,
    pub holder_address: PeerAddr,
}

/// One stored record: a locator plus the holder's last refresh time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub key: Key,
    pub value: FileLocator,
    pub last_refresh: Millis,
}

/// Records owned by one node, indexed by key then holder address.
#[derive(Debug, Default, Clone)]
pub struct KeyStore {
    records: BTreeMap<Key, BTreeMap<PeerAddr, (FileLocator, Millis)>>,
}

impl KeyStore {
    pub fn new() -> KeyStore {
        KeyStore::default()
    }

    /// Inserts or refreshes the record for (key, value.holder_address).
    pub fn put(&mut self, key: Key, value: FileLocator, last_refresh: Millis) {
        self.records
            .entry(key)
            .or_default()
            .insert(value.holder_address.clone(), (value, last_refresh));
    }

    /// All values stored under a key, one per holder.
    pub fn get(&self, key: &Key) -> Vec<FileLocator> {
        self.records
            .get(key)
            .map(|holders| holders.values().map(|(v, _)| v.clone()).collect())
            .unwrap_or_default()
    }

    /// Drops records whose holder has not refreshed them within `ttl`.
    /// Returns the number dropped.
    pub fn expire_sweep(&mut self, now: Millis, ttl: Millis) -> usize {
        let mut dropped = 0;
        self.records.retain(|_, holders| {
            holders.retain(|_, (_, last)| {
                let stale = now.saturating_sub(*last) > ttl;
                if stale {
                    dropped += 1;
                }
                !stale
            });
            !holders.is_empty()
        });
        dropped
    }

    /// Removes and returns every record whose routing label falls outside
    /// `zone`. Used when a zone shrinks or is handed over; timestamps move
    /// verbatim so expiry semantics survive the transfer.
    pub fn drain_outside_zone(&mut self, zone: &Zone, ring: &RingParams) -> Vec<KeyRecord> {
        let mut moved = Vec::new();
        self.records.retain(|key, holders| {
            if zone.contains(key.label(ring)) {
                true
            } else {
                for (_, (value, last_refresh)) in std::mem::take(holders) {
                    moved.push(KeyRecord {
                        key: *key,
                        value,
                        last_refresh,
                    });
                }
                false
            }
        });
        moved
    }

    /// Removes and returns every stored record.
    pub fn drain_all(&mut self) -> Vec<KeyRecord> {
        let records = std::mem::take(&mut self.records);
        records
            .into_iter()
            .flat_map(|(key, holders)| {
                holders.into_iter().map(move |(_, (value, last_refresh))| KeyRecord {
                    key,
                    value,
                    last_refresh,
                })
            })
            .collect()
    }

    pub fn absorb(&mut self, records: Vec<KeyRecord>) {
        for r in records {
            self.put(r.key, r.value, r.last_refresh);
        }
    }

    pub fn len(&self) -> usize {
        self.records.values().map(|h| h.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Iterates all records, for audits.
    pub fn iter(&self) -> impl Iterator<Item = KeyRecord> + '_ {
        self.records.iter().flat_map(|(key, holders)| {
            holders.iter().map(move |(_, (value, last_refresh))| KeyRecord {
                key: *key,
                value: value.clone(),
                last_refresh: *last_refresh,
            })
        })
    }
}
