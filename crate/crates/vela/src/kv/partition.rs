//! Per-partition ordered store: memtable + WAL + snapshots, with an
//! optional key/value tiering toggle.
//!
//! With `kv_separation` on, values of graph-data records (kind 0x01)
//! move to a secondary value tier; the primary map keeps only the key.
//! Scans that never materialize values stay out of the value tier, which
//! is what makes structure-only traversals cheap. Read results are
//! identical either way; only the tier-read counter differs.

use super::wal::{FileWal, Wal, WalBackend};
use super::{KvError, WriteOp};
use crate::codec::{self, PartId};
use std::collections::BTreeMap;
use std::ops::Bound;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, PartialEq, Eq)]
enum ValueSlot {
    Inline(Vec<u8>),
    /// Value lives in the value tier under the same key.
    Tiered,
}

/// Read-side counters; `value_tier_reads` is the observable difference
/// between separation on and off.
#[derive(Debug, Default)]
pub struct StoreCounters {
    pub value_tier_reads: AtomicU64,
    pub key_reads: AtomicU64,
}

/// Serialized snapshot of one partition: magic, part id, last applied
/// seq, sorted pairs, trailing CRC. See `docs/files.md`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub part_id: PartId,
    pub last_seq: u64,
    pub bytes: Vec<u8>,
}

const SNAP_MAGIC: &[u8; 4] = b"VSNP";

pub struct PartitionStore {
    pub part_id: PartId,
    map: BTreeMap<Vec<u8>, ValueSlot>,
    value_tier: BTreeMap<Vec<u8>, Vec<u8>>,
    kv_separation: bool,
    wal: Wal,
    seq: u64,
    pub counters: StoreCounters,
}

impl PartitionStore {
    pub fn new_in_memory(part_id: PartId, kv_separation: bool) -> PartitionStore {
        PartitionStore {
            part_id,
            map: BTreeMap::new(),
            value_tier: BTreeMap::new(),
            kv_separation,
            wal: Wal::in_memory(),
            seq: 0,
            counters: StoreCounters::default(),
        }
    }

    /// Opens (or creates) a file-backed partition under `dir`, loading
    /// the `snap` file if present and replaying the WAL suffix.
    pub fn open(dir: &Path, part_id: PartId, kv_separation: bool) -> Result<PartitionStore, KvError> {
        let wal = Wal::new(Box::new(FileWal::open(dir.join("wal"))?));
        let mut store = PartitionStore {
            part_id,
            map: BTreeMap::new(),
            value_tier: BTreeMap::new(),
            kv_separation,
            wal,
            seq: 0,
            counters: StoreCounters::default(),
        };
        let snap_path = dir.join("snap");
        if snap_path.exists() {
            let bytes = std::fs::read(&snap_path)?;
            store.load_snapshot_bytes(&bytes)?;
        }
        store.replay_wal_suffix()?;
        Ok(store)
    }

    pub fn last_seq(&self) -> u64 {
        self.seq
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn replay_wal_suffix(&mut self) -> Result<(), KvError> {
        for record in self.wal.replay()? {
            if record.seq > self.seq {
                self.apply_ops(&record.ops);
                self.seq = record.seq;
            }
        }
        Ok(())
    }

    fn apply_ops(&mut self, ops: &[WriteOp]) {
        for op in ops {
            match op {
                WriteOp::Put { key, value } => {
                    if self.kv_separation && key.first() == Some(&codec::KIND_DATA) {
                        self.map.insert(key.clone(), ValueSlot::Tiered);
                        self.value_tier.insert(key.clone(), value.clone());
                    } else {
                        self.map.insert(key.clone(), ValueSlot::Inline(value.clone()));
                    }
                }
                WriteOp::Delete { key } => {
                    self.map.remove(key);
                    self.value_tier.remove(key);
                }
            }
        }
    }

    /// Applies a batch atomically: one WAL record, durable before the
    /// memtable changes are visible. Returns the batch's sequence number.
    pub fn apply_batch(&mut self, ops: &[WriteOp]) -> Result<u64, KvError> {
        let seq = self.seq + 1;
        self.wal.append_batch(seq, ops)?;
        self.apply_ops(ops);
        self.seq = seq;
        Ok(seq)
    }

    pub fn put(&mut self, key: Vec<u8>, value: Vec<u8>) -> Result<u64, KvError> {
        self.apply_batch(&[WriteOp::Put { key, value }])
    }

    pub fn delete(&mut self, key: Vec<u8>) -> Result<u64, KvError> {
        self.apply_batch(&[WriteOp::Delete { key }])
    }

    fn fetch_value(&self, key: &[u8], slot: &ValueSlot) -> Vec<u8> {
        match slot {
            ValueSlot::Inline(v) => v.clone(),
            ValueSlot::Tiered => {
                self.counters.value_tier_reads.fetch_add(1, Ordering::Relaxed);
                self.value_tier.get(key).cloned().unwrap_or_default()
            }
        }
    }

    pub fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.counters.key_reads.fetch_add(1, Ordering::Relaxed);
        self.map.get(key).map(|slot| self.fetch_value(key, slot))
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.counters.key_reads.fetch_add(1, Ordering::Relaxed);
        self.map.contains_key(key)
    }

    fn prefix_range(prefix: &[u8]) -> (Bound<Vec<u8>>, Bound<Vec<u8>>) {
        let low = Bound::Included(prefix.to_vec());
        let high = match codec::prefix_upper_bound(prefix) {
            Some(end) => Bound::Excluded(end),
            None => Bound::Unbounded,
        };
        (low, high)
    }

    /// Keys and values with the given byte prefix, in byte order.
    pub fn scan_prefix(&self, prefix: &[u8], limit: Option<usize>) -> Vec<(Vec<u8>, Vec<u8>)> {
        let mut out = Vec::new();
        for (k, slot) in self.map.range(Self::prefix_range(prefix)) {
            if let Some(l) = limit {
                if out.len() >= l {
                    break;
                }
            }
            out.push((k.clone(), self.fetch_value(k, slot)));
        }
        out
    }

    /// Structure-only variant: never touches the value tier.
    pub fn scan_prefix_keys(&self, prefix: &[u8], limit: Option<usize>) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for (k, _) in self.map.range(Self::prefix_range(prefix)) {
            if let Some(l) = limit {
                if out.len() >= l {
                    break;
                }
            }
            out.push(k.clone());
        }
        out
    }

    /// Half-open byte range scan `[start, end)`; `end = None` runs to the
    /// end of the partition.
    pub fn scan_range(&self, start: &[u8], end: Option<&[u8]>) -> Vec<(Vec<u8>, Vec<u8>)> {
        let high = match end {
            Some(e) => Bound::Excluded(e.to_vec()),
            None => Bound::Unbounded,
        };
        self.map
            .range((Bound::Included(start.to_vec()), high))
            .map(|(k, slot)| (k.clone(), self.fetch_value(k, slot)))
            .collect()
    }

    pub fn scan_range_keys(&self, start: &[u8], end: Option<&[u8]>) -> Vec<Vec<u8>> {
        let high = match end {
            Some(e) => Bound::Excluded(e.to_vec()),
            None => Bound::Unbounded,
        };
        self.map
            .range((Bound::Included(start.to_vec()), high))
            .map(|(k, _)| k.clone())
            .collect()
    }

    // -- snapshots ----------------------------------------------------------

    /// Serializes the full partition state and truncates the WAL; the
    /// snapshot plus later WAL records reproduce any future state.
    pub fn checkpoint(&mut self) -> Result<Snapshot, KvError> {
        let mut body = Vec::new();
        body.extend_from_slice(SNAP_MAGIC);
        body.extend_from_slice(&self.part_id.to_be_bytes());
        body.extend_from_slice(&self.seq.to_be_bytes());
        body.extend_from_slice(&(self.map.len() as u64).to_be_bytes());
        for (k, slot) in &self.map {
            let v = self.fetch_value(k, slot);
            body.extend_from_slice(&(k.len() as u32).to_be_bytes());
            body.extend_from_slice(k);
            body.extend_from_slice(&(v.len() as u32).to_be_bytes());
            body.extend_from_slice(&v);
        }
        body.extend_from_slice(&crc32fast::hash(&body[..]).to_be_bytes());
        self.wal.truncate()?;
        Ok(Snapshot { part_id: self.part_id, last_seq: self.seq, bytes: body })
    }

    /// Replaces the partition state with the snapshot's contents.
    pub fn restore(&mut self, snapshot: &Snapshot) -> Result<(), KvError> {
        self.load_snapshot_bytes(&snapshot.bytes)?;
        self.wal.truncate()?;
        Ok(())
    }

    fn load_snapshot_bytes(&mut self, bytes: &[u8]) -> Result<(), KvError> {
        if bytes.len() < 24 + 4 || &bytes[..4] != SNAP_MAGIC {
            return Err(KvError::Checksum);
        }
        let body = &bytes[..bytes.len() - 4];
        let crc = u32::from_be_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32fast::hash(body) != crc {
            return Err(KvError::Checksum);
        }
        let part_id = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
        let last_seq = u64::from_be_bytes(bytes[8..16].try_into().unwrap());
        let count = u64::from_be_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let mut map = BTreeMap::new();
        let mut tier = BTreeMap::new();
        let mut pos = 24usize;
        for _ in 0..count {
            if pos + 4 > body.len() {
                return Err(KvError::Checksum);
            }
            let klen = u32::from_be_bytes(body[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            let key = body[pos..pos + klen].to_vec();
            pos += klen;
            let vlen = u32::from_be_bytes(body[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            let value = body[pos..pos + vlen].to_vec();
            pos += vlen;
            if self.kv_separation && key.first() == Some(&codec::KIND_DATA) {
                tier.insert(key.clone(), value);
                map.insert(key, ValueSlot::Tiered);
            } else {
                map.insert(key, ValueSlot::Inline(value));
            }
        }
        self.part_id = part_id;
        self.seq = last_seq;
        self.map = map;
        self.value_tier = tier;
        Ok(())
    }

    /// Test hook: drop unflushed WAL bytes and rebuild from durable
    /// state, as if the process died and restarted.
    pub fn simulate_crash_and_reopen(&mut self) -> Result<(), KvError> {
        self.wal.drop_unflushed();
        let snapshot_state: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
        let _ = snapshot_state;
        self.map.clear();
        self.value_tier.clear();
        self.seq = 0;
        self.replay_wal_suffix()
    }

    /// Stable content hash over all (key, value) pairs, for convergence
    /// and balance audits.
    pub fn state_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (k, slot) in &self.map {
            k.hash(&mut h);
            self.fetch_value(k, slot).hash(&mut h);
        }
        h.finish()
    }

    pub fn swap_wal(&mut self, backend: Box<dyn WalBackend>) {
        self.wal = Wal::new(backend);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_key(suffix: &[u8]) -> Vec<u8> {
        let mut k = vec![codec::KIND_DATA, 0, 0, 0, 1];
        k.extend_from_slice(suffix);
        k
    }

    #[test]
    fn put_get_delete() {
        let mut p = PartitionStore::new_in_memory(1, false);
        p.put(b"k".to_vec(), b"v".to_vec()).unwrap();
        assert_eq!(p.get(b"k"), Some(b"v".to_vec()));
        p.delete(b"k".to_vec()).unwrap();
        assert_eq!(p.get(b"k"), None);
    }

    #[test]
    fn acknowledged_writes_survive_crash() {
        let mut p = PartitionStore::new_in_memory(1, false);
        p.put(b"a".to_vec(), b"1".to_vec()).unwrap();
        p.put(b"b".to_vec(), b"2".to_vec()).unwrap();
        p.simulate_crash_and_reopen().unwrap();
        assert_eq!(p.get(b"a"), Some(b"1".to_vec()));
        assert_eq!(p.get(b"b"), Some(b"2".to_vec()));
        assert_eq!(p.last_seq(), 2);
    }

    #[test]
    fn empty_store_scans_empty() {
        let p = PartitionStore::new_in_memory(1, false);
        assert!(p.scan_prefix(b"", None).is_empty());
    }

    #[test]
    fn scan_matches_sorted_array_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut p = PartitionStore::new_in_memory(1, false);
        let mut oracle: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
        for _ in 0..500 {
            let klen = rng.gen_range(1..6);
            let key: Vec<u8> = (0..klen).map(|_| rng.gen_range(0..4u8)).collect();
            let val = vec![rng.gen::<u8>()];
            oracle.retain(|(k, _)| k != &key);
            oracle.push((key.clone(), val.clone()));
            p.put(key, val).unwrap();
        }
        oracle.sort();
        for prefix in [vec![], vec![1], vec![2, 3]] {
            let expect: Vec<_> =
                oracle.iter().filter(|(k, _)| k.starts_with(&prefix)).cloned().collect();
            assert_eq!(p.scan_prefix(&prefix, None), expect);
        }
    }

    #[test]
    fn checkpoint_plus_wal_suffix_reproduces_state() {
        let mut p = PartitionStore::new_in_memory(9, false);
        for i in 0..1000u32 {
            p.put(i.to_be_bytes().to_vec(), b"x".to_vec()).unwrap();
        }
        let snap = p.checkpoint().unwrap();
        for i in 1000..2000u32 {
            p.put(i.to_be_bytes().to_vec(), b"y".to_vec()).unwrap();
        }
        let expect_hash = p.state_hash();

        // crash, restore snapshot, replay suffix
        p.wal.drop_unflushed();
        let mut fresh = PartitionStore::new_in_memory(9, false);
        std::mem::swap(&mut fresh.wal, &mut p.wal);
        fresh.load_snapshot_bytes(&snap.bytes).unwrap();
        fresh.replay_wal_suffix().unwrap();
        assert_eq!(fresh.len(), 2000);
        assert_eq!(fresh.state_hash(), expect_hash);
    }

    #[test]
    fn restore_replaces_nonempty_state() {
        let mut src = PartitionStore::new_in_memory(2, false);
        src.put(b"only".to_vec(), b"snap".to_vec()).unwrap();
        let snap = src.checkpoint().unwrap();

        let mut dst = PartitionStore::new_in_memory(2, false);
        dst.put(b"junk".to_vec(), b"x".to_vec()).unwrap();
        dst.restore(&snap).unwrap();
        assert_eq!(dst.get(b"junk"), None);
        assert_eq!(dst.get(b"only"), Some(b"snap".to_vec()));
        assert_eq!(dst.state_hash(), src.state_hash());
    }

    #[test]
    fn corrupt_snapshot_is_rejected() {
        let mut p = PartitionStore::new_in_memory(3, false);
        p.put(b"k".to_vec(), b"v".to_vec()).unwrap();
        let mut snap = p.checkpoint().unwrap();
        let last = snap.bytes.len() - 5;
        snap.bytes[last] ^= 0xff;
        let mut q = PartitionStore::new_in_memory(3, false);
        assert!(matches!(q.restore(&snap), Err(KvError::Checksum)));
    }

    #[test]
    fn checkpoint_of_empty_partition() {
        let mut p = PartitionStore::new_in_memory(4, false);
        let snap = p.checkpoint().unwrap();
        assert_eq!(snap.last_seq, 0);
        let mut q = PartitionStore::new_in_memory(4, false);
        q.restore(&snap).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn separation_keeps_results_identical_but_counts_tier_reads() {
        let mut plain = PartitionStore::new_in_memory(1, false);
        let mut tiered = PartitionStore::new_in_memory(1, true);
        for i in 0..20u8 {
            let key = data_key(&[i]);
            plain.put(key.clone(), vec![i]).unwrap();
            tiered.put(key, vec![i]).unwrap();
        }
        assert_eq!(
            plain.scan_prefix(b"", None),
            tiered.scan_prefix(b"", None),
        );
        assert_eq!(tiered.counters.value_tier_reads.load(Ordering::Relaxed), 20);

        // structure-only scan stays out of the tier
        let before = tiered.counters.value_tier_reads.load(Ordering::Relaxed);
        let keys = tiered.scan_prefix_keys(b"", None);
        assert_eq!(keys.len(), 20);
        assert_eq!(tiered.counters.value_tier_reads.load(Ordering::Relaxed), before);
    }
}
