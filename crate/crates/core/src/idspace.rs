//! Arithmetic over the de Bruijn virtual ID ring.
//!
//! The overlay is built on the graph B(K, D): K^D virtual labels, with a
//! directed edge from `x` to every `(x*K + j) mod N` for `j` in `0..K`
//! (left-shift the base-K label and append a digit). Physical nodes own
//! contiguous circular arcs of the label ring ("zones"); two physical nodes
//! share an edge iff some virtual node in one zone has an edge into the
//! other zone. Everything in this module is a pure function on immutable
//! values; node state lives elsewhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdSpaceError {
    #[error("invalid ring parameters: K={k}, D={d}")]
    BadRing { k: u32, d: u32 },
    #[error("label {value} out of range for ring of size {n}")]
    LabelOutOfRange { value: u64, n: u64 },
    #[error("cannot parse label {0:?}: expected exactly {1} base-{2} digits")]
    BadLabelString(String, u32, u32),
    #[error("zone of size 1 cannot be split")]
    ZoneTooSmall,
    #[error("owner label does not lie in the zone being split")]
    OwnerOutsideZone,
    #[error("zones are not adjacent and disjoint")]
    MergeError,
    #[error("key-to-label mapping requires K to be a power of two")]
    UnsupportedRing,
    #[error("digest too short: need at least {0} bits")]
    DigestTooShort(u32),
}

/// Ring parameters: radix `K` and label length `D` digits, so the ring has
/// `N = K^D` virtual labels. All other modules read K, D and N through this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingParams {
    k: u32,
    d: u32,
    n: u64,
}

impl Default for RingParams {
    fn default() -> Self {
        // K=8, D=8: the 24-bit octal ring "00000000".."77777777".
        RingParams::new(8, 8).unwrap()
    }
}

impl RingParams {
    pub fn new(k: u32, d: u32) -> Result<Self, IdSpaceError> {
        if k < 2 || d < 1 || k > 36 {
            return Err(IdSpaceError::BadRing { k, d });
        }
        let n = (k as u64)
            .checked_pow(d)
            .ok_or(IdSpaceError::BadRing { k, d })?;
        Ok(RingParams { k, d, n })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Ring size N = K^D.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Modulus of the length-(D-1) suffix/prefix space, K^(D-1) = N/K.
    pub fn suffix_modulus(&self) -> u64 {
        self.n / self.k as u64
    }

    pub fn label(&self, value: u64) -> Result<Label, IdSpaceError> {
        if value < self.n {
            Ok(Label(value))
        } else {
            Err(IdSpaceError::LabelOutOfRange { value, n: self.n })
        }
    }

    /// Renders a label as exactly D base-K digits.
    pub fn render(&self, label: Label) -> String {
        let mut digits = vec!['0'; self.d as usize];
        let mut v = label.0;
        for slot in digits.iter_mut().rev() {
            *slot = char::from_digit((v % self.k as u64) as u32, self.k).unwrap();
            v /= self.k as u64;
        }
        digits.into_iter().collect()
    }

    /// Parses a D-character base-K string; rejects wrong lengths.
    pub fn parse(&self, s: &str) -> Result<Label, IdSpaceError> {
        let bad = || IdSpaceError::BadLabelString(s.to_string(), self.d, self.k);
        if s.chars().count() != self.d as usize {
            return Err(bad());
        }
        let mut v: u64 = 0;
        for c in s.chars() {
            let digit = c.to_digit(self.k).ok_or_else(bad)?;
            v = v * self.k as u64 + digit as u64;
        }
        Ok(Label(v))
    }

    /// Digit `i` of the label, counting from the most significant.
    fn digit_at(&self, label: Label, i: u32) -> u64 {
        (label.0 / (self.k as u64).pow(self.d - 1 - i)) % self.k as u64
    }
}

/// A virtual node ID: an integer in `[0, N)` rendered as D base-K digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u64);

impl Label {
    pub fn value(&self) -> u64 {
        self.0
    }
}

/// The `K` out-neighbors of `x`: every `(x*K + j) mod N`. The result always
/// has cardinality K; when `x` is of the form αα…α it includes `x` itself
/// (the graph's self-loops).
pub fn out_neighbors(x: Label, ring: &RingParams) -> Vec<Label> {
    let k = ring.k as u64;
    (0..k)
        .map(|j| Label((x.0 * k + j) % ring.n))
        .collect()
}

/// Length of the longest suffix of `src` equal to a prefix of `dst`,
/// in `[0, D]`.
pub fn suffix_overlap(src: Label, dst: Label, ring: &RingParams) -> u32 {
    let k = ring.k as u64;
    for o in (1..=ring.d).rev() {
        let suffix = src.0 % k.pow(o);
        let prefix = dst.0 / k.pow(ring.d - o);
        if suffix == prefix {
            return o;
        }
    }
    0
}

/// Substring-routing hop sequence from `src` to `dst`: slide a D-digit
/// window along `src` followed by the non-overlapped digits of `dst`.
/// The result has `D - overlap + 1` elements, starts at `src`, ends at
/// `dst`, and every consecutive pair is a de Bruijn edge.
pub fn routing_path(src: Label, dst: Label, ring: &RingParams) -> Vec<Label> {
    let o = suffix_overlap(src, dst, ring);
    let mut path = Vec::with_capacity((ring.d - o + 1) as usize);
    path.push(src);
    let mut cur = src;
    for i in o..ring.d {
        let digit = ring.digit_at(dst, i);
        cur = Label((cur.0 * ring.k as u64 + digit) % ring.n);
        path.push(cur);
    }
    path
}

/// Maps a hash digest to a label by taking its first `D*log2(K)` bits,
/// big-endian. Defined only for power-of-two K (3 bits per digit on the
/// default octal ring: the first 24 bits of a 160-bit key route it).
pub fn label_from_key(digest: &[u8], ring: &RingParams) -> Result<Label, IdSpaceError> {
    if !ring.k.is_power_of_two() {
        return Err(IdSpaceError::UnsupportedRing);
    }
    let bits_per_digit = ring.k.trailing_zeros();
    let total_bits = ring.d * bits_per_digit;
    if (digest.len() as u32) * 8 < total_bits {
        return Err(IdSpaceError::DigestTooShort(total_bits));
    }
    debug_assert!(total_bits <= 64);
    let mut acc: u128 = 0;
    let need_bytes = total_bits.div_ceil(8) as usize;
    for &b in &digest[..need_bytes] {
        acc = (acc << 8) | b as u128;
    }
    let excess = need_bytes as u32 * 8 - total_bits;
    Ok(Label((acc >> excess) as u64))
}

/// A contiguous circular arc `[start, end]` of the label ring (inclusive;
/// `end` may be numerically smaller than `start` when the arc wraps past
/// the highest label). A full-ring zone is canonicalized to `[0, N-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub start: Label,
    pub end: Label,
    pub full_ring: bool,
}

impl Zone {
    pub fn new(start: Label, end: Label, ring: &RingParams) -> Zone {
        let size = ((end.0 + ring.n - start.0) % ring.n) + 1;
        if size == ring.n {
            Zone::full(ring)
        } else {
            Zone {
                start,
                end,
                full_ring: false,
            }
        }
    }

    pub fn full(ring: &RingParams) -> Zone {
        Zone {
            start: Label(0),
            end: Label(ring.n - 1),
            full_ring: true,
        }
    }

    pub fn size(&self, ring: &RingParams) -> u64 {
        if self.full_ring {
            ring.n
        } else {
            ((self.end.0 + ring.n - self.start.0) % ring.n) + 1
        }
    }

    pub fn contains(&self, x: Label) -> bool {
        if self.full_ring {
            return true;
        }
        if self.start.0 <= self.end.0 {
            self.start.0 <= x.0 && x.0 <= self.end.0
        } else {
            x.0 >= self.start.0 || x.0 <= self.end.0
        }
    }

    /// True when the two arcs share at least one label.
    pub fn overlaps(&self, other: &Zone) -> bool {
        self.full_ring
            || other.full_ring
            || self.contains(other.start)
            || other.contains(self.start)
    }

    /// Wire and display form: "start-end" as digit strings.
    pub fn render(&self, ring: &RingParams) -> String {
        format!("{}-{}", ring.render(self.start), ring.render(self.end))
    }
}

pub fn zone_contains(zone: &Zone, x: Label) -> bool {
    zone.contains(x)
}

/// Halves a zone: `m = start + floor((size-1)/2)`, first half `[start, m]`,
/// second half `[m+1, end]`. Returns `(kept, given)` where `kept` is the
/// half containing `owner_id`. Odd sizes put the extra label in the first
/// half.
pub fn split_zone(
    zone: &Zone,
    owner_id: Label,
    ring: &RingParams,
) -> Result<(Zone, Zone), IdSpaceError> {
    let size = zone.size(ring);
    if size < 2 {
        return Err(IdSpaceError::ZoneTooSmall);
    }
    if !zone.contains(owner_id) {
        return Err(IdSpaceError::OwnerOutsideZone);
    }
    let m = Label((zone.start.0 + (size - 1) / 2) % ring.n);
    let first = Zone::new(zone.start, m, ring);
    let second = Zone::new(Label((m.0 + 1) % ring.n), zone.end, ring);
    if first.contains(owner_id) {
        Ok((first, second))
    } else {
        Ok((second, first))
    }
}

/// Joins two circularly adjacent, disjoint zones into one arc. Produces the
/// full ring when their sizes sum to N.
pub fn merge_zones(a: &Zone, b: &Zone, ring: &RingParams) -> Result<Zone, IdSpaceError> {
    if a.full_ring || b.full_ring {
        return Err(IdSpaceError::MergeError);
    }
    let sa = a.size(ring);
    let sb = b.size(ring);
    let n = ring.n;
    // a directly precedes b on the ring, or the reverse
    let merge_ab = (a.end.0 + 1) % n == b.start.0;
    let merge_ba = (b.end.0 + 1) % n == a.start.0;
    if sa + sb == n {
        // The two arcs close the circle; adjacency must hold on both sides.
        if merge_ab && merge_ba {
            return Ok(Zone::full(ring));
        }
        return Err(IdSpaceError::MergeError);
    }
    let merged = if merge_ab {
        Zone::new(a.start, b.end, ring)
    } else if merge_ba {
        Zone::new(b.start, a.end, ring)
    } else {
        return Err(IdSpaceError::MergeError);
    };
    // Adjacent but overlapping arcs would produce a short merged zone.
    if merged.size(ring) != sa + sb {
        return Err(IdSpaceError::MergeError);
    }
    Ok(merged)
}

/// An inclusive circular range `[lo, hi]` modulo `modulus`, used for the
/// length-(D-1) suffix and prefix ranges of zones. A zone smaller than N/K
/// can still straddle a multiple of K^(D-1), so the range may wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircularRange {
    pub lo: u64,
    pub hi: u64,
    pub modulus: u64,
    pub full: bool,
}

impl CircularRange {
    pub fn new(lo: u64, hi: u64, modulus: u64) -> CircularRange {
        CircularRange {
            lo,
            hi,
            modulus,
            full: false,
        }
    }

    pub fn full(modulus: u64) -> CircularRange {
        CircularRange {
            lo: 0,
            hi: modulus - 1,
            modulus,
            full: true,
        }
    }

    pub fn contains(&self, x: u64) -> bool {
        if self.full {
            return true;
        }
        if self.lo <= self.hi {
            self.lo <= x && x <= self.hi
        } else {
            x >= self.lo || x <= self.hi
        }
    }

    /// Two circular arcs intersect iff either contains the other's start.
    pub fn intersects(&self, other: &CircularRange) -> bool {
        debug_assert_eq!(self.modulus, other.modulus);
        self.full || other.full || self.contains(other.lo) || other.contains(self.lo)
    }
}

/// The set `{x mod K^(D-1) : x in zone}` as a circular range: the suffixes
/// of length D-1 present in the zone.
pub fn suffix_range(zone: &Zone, ring: &RingParams) -> CircularRange {
    let m = ring.suffix_modulus();
    if zone.full_ring || zone.size(ring) >= m {
        return CircularRange::full(m);
    }
    CircularRange::new(zone.start.0 % m, zone.end.0 % m, m)
}

/// The set `{floor(y / K) : y in zone}` as a circular range: the prefixes
/// of length D-1 present in the zone.
pub fn prefix_range(zone: &Zone, ring: &RingParams) -> CircularRange {
    let m = ring.suffix_modulus();
    let k = ring.k as u64;
    if zone.full_ring {
        return CircularRange::full(m);
    }
    // Count distinct prefixes along the arc without reducing mod N: the
    // prefix increments each time the label crosses a multiple of K.
    let s = zone.size(ring);
    let distinct = (zone.start.0 + s - 1) / k - zone.start.0 / k + 1;
    if distinct >= m {
        return CircularRange::full(m);
    }
    CircularRange::new(zone.start.0 / k, zone.end.0 / k, m)
}

/// True iff some virtual node in `zone_a` has an out-edge into `zone_b`.
/// A zone of size >= N/K holds every possible length-(D-1) suffix and so
/// reaches everywhere; otherwise the suffix range of `zone_a` must meet
/// the prefix range of `zone_b`.
pub fn has_edge(zone_a: &Zone, zone_b: &Zone, ring: &RingParams) -> bool {
    if zone_a.size(ring) >= ring.n / ring.k as u64 {
        return true;
    }
    suffix_range(zone_a, ring).intersects(&prefix_range(zone_b, ring))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ring(k: u32, d: u32) -> RingParams {
        RingParams::new(k, d).unwrap()
    }

    fn lab(ring: &RingParams, s: &str) -> Label {
        ring.parse(s).unwrap()
    }

    fn zone(ring: &RingParams, start: &str, end: &str) -> Zone {
        Zone::new(lab(ring, start), lab(ring, end), ring)
    }

    #[test]
    fn default_ring_is_octal_24_bit() {
        let r = RingParams::default();
        assert_eq!(r.k(), 8);
        assert_eq!(r.d(), 8);
        assert_eq!(r.n(), 16_777_216);
    }

    #[test]
    fn render_parse_roundtrip() {
        let r = ring(8, 8);
        let x = r.label(0o13752341).unwrap();
        assert_eq!(r.render(x), "13752341");
        assert_eq!(r.parse("13752341").unwrap(), x);
        assert!(r.parse("1375234").is_err());
        assert!(r.parse("137523411").is_err());
        assert!(r.parse("1375234 ").is_err());
        assert!(r.parse("13752348").is_err()); // digit 8 invalid base 8
    }

    #[test]
    fn out_neighbors_b23() {
        let r = ring(2, 3);
        let got = out_neighbors(lab(&r, "011"), &r);
        assert_eq!(got, vec![lab(&r, "110"), lab(&r, "111")]);
        // self-loop on the all-zero label
        let got = out_neighbors(lab(&r, "000"), &r);
        assert_eq!(got, vec![lab(&r, "000"), lab(&r, "001")]);
    }

    #[test]
    fn out_neighbors_b88_zero() {
        let r = ring(8, 8);
        let got = out_neighbors(lab(&r, "00000000"), &r);
        let want: Vec<Label> = (0..8).map(Label).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn suffix_overlap_cases() {
        let r = ring(2, 4);
        assert_eq!(suffix_overlap(lab(&r, "1110"), lab(&r, "1011"), &r), 2);
        assert_eq!(suffix_overlap(lab(&r, "1011"), lab(&r, "1011"), &r), 4);
        assert_eq!(suffix_overlap(lab(&r, "0000"), lab(&r, "1111"), &r), 0);
    }

    #[test]
    fn routing_path_overlap_example() {
        // route string 111011: 1110 -> 1101 -> 1011
        let r = ring(2, 4);
        let path = routing_path(lab(&r, "1110"), lab(&r, "1011"), &r);
        let want: Vec<Label> = ["1110", "1101", "1011"]
            .iter()
            .map(|s| lab(&r, s))
            .collect();
        assert_eq!(path, want);
    }

    #[test]
    fn routing_path_identity_and_zero_overlap() {
        let r = ring(2, 4);
        assert_eq!(
            routing_path(lab(&r, "0110"), lab(&r, "0110"), &r),
            vec![lab(&r, "0110")]
        );
        let path = routing_path(lab(&r, "0000"), lab(&r, "1111"), &r);
        let want: Vec<Label> = ["0000", "0001", "0011", "0111", "1111"]
            .iter()
            .map(|s| lab(&r, s))
            .collect();
        assert_eq!(path, want);
    }

    #[test]
    fn label_from_key_golden() {
        let r = ring(8, 8);
        let digest = hex::decode("2fd4e1c67a2d28fced849ee1bb76e7391b93eb12").unwrap();
        let label = label_from_key(&digest, &r).unwrap();
        assert_eq!(r.render(label), "13752341");
    }

    #[test]
    fn label_from_key_edges() {
        let r = ring(8, 8);
        assert_eq!(label_from_key(&[0u8; 20], &r).unwrap(), Label(0));
        let mut ff = [0u8; 20];
        ff[0] = 0xff;
        ff[1] = 0xff;
        ff[2] = 0xff;
        let label = label_from_key(&ff, &r).unwrap();
        assert_eq!(r.render(label), "77777777");
        // non-power-of-two radix has no bit-aligned key mapping
        let r3 = ring(3, 4);
        assert_eq!(
            label_from_key(&[0u8; 20], &r3),
            Err(IdSpaceError::UnsupportedRing)
        );
    }

    #[test]
    fn zone_contains_cases() {
        let r = ring(8, 8);
        let z = zone(&r, "00000000", "37777777");
        assert!(z.contains(lab(&r, "25252525")));
        assert!(!z.contains(lab(&r, "40000000")));
        let wrap = zone(&r, "77000000", "00777777");
        assert!(wrap.contains(lab(&r, "00000000")));
        assert!(wrap.contains(lab(&r, "77400000")));
        assert!(!wrap.contains(lab(&r, "40000000")));
        assert!(Zone::full(&r).contains(lab(&r, "52525252")));
    }

    #[test]
    fn zone_size_wraps() {
        let r = ring(2, 3);
        assert_eq!(zone(&r, "110", "001").size(&r), 4);
        assert_eq!(zone(&r, "010", "010").size(&r), 1);
        assert_eq!(Zone::full(&r).size(&r), 8);
        // start = end+1 canonicalizes to the full ring
        let z = Zone::new(Label(3), Label(2), &r);
        assert!(z.full_ring);
        assert_eq!(z.size(&r), 8);
    }

    #[test]
    fn split_full_ring() {
        let r = ring(8, 8);
        let (kept, given) = split_zone(&Zone::full(&r), lab(&r, "25252525"), &r).unwrap();
        assert_eq!(kept, zone(&r, "00000000", "37777777"));
        assert_eq!(given, zone(&r, "40000000", "77777777"));
    }

    #[test]
    fn split_small_zone_odd() {
        let r = ring(8, 8);
        let z = zone(&r, "00000000", "00000002");
        let (kept, given) = split_zone(&z, lab(&r, "00000000"), &r).unwrap();
        assert_eq!(kept, zone(&r, "00000000", "00000001"));
        assert_eq!(given, zone(&r, "00000002", "00000002"));
    }

    #[test]
    fn split_size_one_fails() {
        let r = ring(8, 8);
        let z = zone(&r, "00000003", "00000003");
        assert_eq!(
            split_zone(&z, lab(&r, "00000003"), &r),
            Err(IdSpaceError::ZoneTooSmall)
        );
    }

    #[test]
    fn merge_adjacent_and_wrap() {
        let r = ring(8, 8);
        let m = merge_zones(
            &zone(&r, "00000000", "07777777"),
            &zone(&r, "10000000", "17777777"),
            &r,
        )
        .unwrap();
        assert_eq!(m, zone(&r, "00000000", "17777777"));
        let m = merge_zones(
            &zone(&r, "70000000", "77777777"),
            &zone(&r, "00000000", "07777777"),
            &r,
        )
        .unwrap();
        assert_eq!(m, zone(&r, "70000000", "07777777"));
        assert!(merge_zones(
            &zone(&r, "00000000", "07777777"),
            &zone(&r, "20000000", "27777777"),
            &r,
        )
        .is_err());
    }

    #[test]
    fn merge_closes_ring() {
        let r = ring(2, 3);
        assert!(merge_zones(&zone(&r, "100", "011"), &zone(&r, "100", "011"), &r).is_err());
        assert!(merge_zones(&zone(&r, "100", "011"), &zone(&r, "100", "100"), &r).is_err());
        assert!(merge_zones(&zone(&r, "100", "011"), &Zone::full(&r), &r).is_err());
        let m = merge_zones(&zone(&r, "000", "011"), &zone(&r, "100", "111"), &r).unwrap();
        assert!(m.full_ring);
    }

    #[test]
    fn has_edge_worked_examples() {
        let r = ring(8, 8);
        // Both zones at least N/K: edges both ways.
        let a = zone(&r, "00000000", "17777777");
        let b = zone(&r, "40000000", "77777777");
        assert!(has_edge(&a, &b, &r));
        assert!(has_edge(&b, &a, &r));
        // Suffix range of A meets prefix range of B...
        let a = zone(&r, "00000000", "00777777");
        let b = zone(&r, "01000000", "01777777");
        assert!(has_edge(&a, &b, &r));
        // ...but B's suffixes miss A's prefixes entirely.
        assert!(!has_edge(&b, &a, &r));
    }

    /// Brute-force ground truth: enumerate every virtual edge.
    fn has_edge_brute(a: &Zone, b: &Zone, ring: &RingParams) -> bool {
        (0..ring.n()).filter(|&x| a.contains(Label(x))).any(|x| {
            out_neighbors(Label(x), ring)
                .into_iter()
                .any(|y| b.contains(y))
        })
    }

    /// Cuts the ring into `parts` contiguous zones at distinct positions.
    fn random_partition(ring: &RingParams, parts: usize, rng: &mut impl rand::Rng) -> Vec<Zone> {
        use std::collections::BTreeSet;
        let mut cuts = BTreeSet::new();
        while cuts.len() < parts {
            cuts.insert(rng.random_range(0..ring.n()));
        }
        let cuts: Vec<u64> = cuts.into_iter().collect();
        (0..cuts.len())
            .map(|i| {
                let start = cuts[i];
                let end = (cuts[(i + 1) % cuts.len()] + ring.n() - 1) % ring.n();
                Zone::new(Label(start), Label(end), ring)
            })
            .collect()
    }

    #[test]
    fn has_edge_matches_brute_force_on_partitions() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for &(k, d) in &[(2u32, 4u32), (2, 5)] {
            let r = ring(k, d);
            for _ in 0..250 {
                let parts = rng.random_range(2..=12usize.min(r.n() as usize));
                let zones = random_partition(&r, parts, &mut rng);
                for a in &zones {
                    for b in &zones {
                        assert_eq!(
                            has_edge(a, b, &r),
                            has_edge_brute(a, b, &r),
                            "k={k} d={d} a={a:?} b={b:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn split_then_merge_roundtrip_randomized() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let r = ring(8, 8);
        for _ in 0..1000 {
            let start = Label(rng.random_range(0..r.n()));
            let size = rng.random_range(2..=r.n());
            let z = if size == r.n() {
                Zone::full(&r)
            } else {
                Zone::new(start, Label((start.0 + size - 1) % r.n()), &r)
            };
            let owner = Label((z.start.0 + rng.random_range(0..size)) % r.n());
            assert!(z.contains(owner));
            let (kept, given) = split_zone(&z, owner, &r).unwrap();
            assert!(kept.contains(owner));
            assert_eq!(kept.size(&r) + given.size(&r), z.size(&r));
            let merged = merge_zones(&kept, &given, &r).unwrap();
            assert_eq!(merged, z);
        }
    }

    #[test]
    fn routing_path_is_valid_walk() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let r = ring(8, 8);
        for _ in 0..10_000 {
            let src = Label(rng.random_range(0..r.n()));
            let dst = Label(rng.random_range(0..r.n()));
            let path = routing_path(src, dst, &r);
            let o = suffix_overlap(src, dst, &r);
            assert_eq!(path.len() as u32, r.d() - o + 1);
            assert!(path.len() as u32 <= r.d() + 1);
            assert_eq!(path[0], src);
            assert_eq!(*path.last().unwrap(), dst);
            for w in path.windows(2) {
                assert!(out_neighbors(w[0], &r).contains(&w[1]));
                // maximal overlap never produces a self-loop hop
                assert_ne!(w[0], w[1]);
            }
        }
    }

    /// BFS distance over the virtual graph, for the shortest-path bound.
    fn bfs_dist(src: Label, dst: Label, ring: &RingParams) -> u32 {
        use std::collections::VecDeque;
        let mut dist = vec![u32::MAX; ring.n() as usize];
        let mut q = VecDeque::new();
        dist[src.0 as usize] = 0;
        q.push_back(src);
        while let Some(x) = q.pop_front() {
            if x == dst {
                return dist[x.0 as usize];
            }
            for y in out_neighbors(x, ring) {
                if dist[y.0 as usize] == u32::MAX {
                    dist[y.0 as usize] = dist[x.0 as usize] + 1;
                    q.push_back(y);
                }
            }
        }
        unreachable!("de Bruijn graph is connected");
    }

    #[test]
    fn substring_routing_never_beats_bfs() {
        for &(k, d) in &[(2u32, 3u32), (2, 4)] {
            let r = ring(k, d);
            for s in 0..r.n() {
                for t in 0..r.n() {
                    let hops = routing_path(Label(s), Label(t), &r).len() as u32 - 1;
                    assert!(hops >= bfs_dist(Label(s), Label(t), &r));
                }
            }
        }
    }

    #[test]
    fn label_from_key_uniformity_smoke() {
        use sha1::{Digest, Sha1};
        let r = ring(8, 8);
        let mut bins = [0u64; 8];
        let samples = 100_000u64;
        for i in 0..samples {
            let digest = Sha1::digest(i.to_be_bytes());
            let label = label_from_key(&digest, &r).unwrap();
            bins[(label.0 >> 21) as usize] += 1;
        }
        // chi-square sanity only: guard against gross bias, not a sharp test
        let expected = samples as f64 / 8.0;
        let chi2: f64 = bins
            .iter()
            .map(|&c| {
                let diff = c as f64 - expected;
                diff * diff / expected
            })
            .sum();
        assert!(chi2 < 60.0, "chi2 = {chi2}, bins = {bins:?}");
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn neighbors_have_shift_relation(x in 0u64..16_777_216) {
            let r = RingParams::default();
            let neighbors = out_neighbors(Label(x), &r);
            prop_assert_eq!(neighbors.len(), 8);
            let m = r.suffix_modulus();
            for y in neighbors {
                prop_assert_eq!(y.0 / 8, x % m);
            }
        }

        #[test]
        fn parse_render_roundtrip(x in 0u64..16_777_216) {
            let r = RingParams::default();
            let s = r.render(Label(x));
            prop_assert_eq!(s.len(), 8);
            prop_assert_eq!(r.parse(&s).unwrap(), Label(x));
        }

        #[test]
        fn circular_range_intersects_matches_enumeration(
            lo_a in 0u64..16, hi_a in 0u64..16,
            lo_b in 0u64..16, hi_b in 0u64..16,
        ) {
            let a = CircularRange::new(lo_a, hi_a, 16);
            let b = CircularRange::new(lo_b, hi_b, 16);
            let brute = (0..16u64).any(|x| a.contains(x) && b.contains(x));
            prop_assert_eq!(a.intersects(&b), brute);
        }
    }
}
