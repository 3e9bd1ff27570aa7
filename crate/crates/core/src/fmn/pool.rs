//! The model pool: at most `k` snapshots of the base model available to
//! every new segment. The initial base model is pinned and never evicted.

use alloc::vec::Vec;

/// One stored snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolMember<M> {
    pub id: u64,
    pub model: M,
    pub admitted_at: u64,
    /// Last time this member (through one of its segment copies) was the
    /// best model of a closing segment.
    pub last_selected: u64,
}

/// Outcome of a successful admission.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Admission {
    pub id: u64,
    pub evicted: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPool<M> {
    capacity: usize,
    members: Vec<PoolMember<M>>,
    next_id: u64,
}

impl<M: Clone> ModelPool<M> {
    /// A pool holding only `base` (member id 0).
    pub fn new(base: M, capacity: usize) -> Self {
        assert!(capacity >= 1, "pool capacity must be at least 1");
        Self {
            capacity,
            members: alloc::vec![PoolMember {
                id: 0,
                model: base,
                admitted_at: 0,
                last_selected: 0,
            }],
            next_id: 1,
        }
    }

    pub(crate) fn from_parts(capacity: usize, members: Vec<PoolMember<M>>, next_id: u64) -> Self {
        Self {
            capacity,
            members,
            next_id,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in admission order.
    pub fn members(&self) -> &[PoolMember<M>] {
        &self.members
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn base(&self) -> &M {
        &self.members[0].model
    }

    pub fn get(&self, id: u64) -> Option<&PoolMember<M>> {
        self.members
            .binary_search_by_key(&id, |m| m.id)
            .ok()
            .map(|i| &self.members[i])
    }

    pub fn contains(&self, id: u64) -> bool {
        self.get(id).is_some()
    }

    pub fn mark_selected(&mut self, id: u64, t: u64) {
        if let Ok(i) = self.members.binary_search_by_key(&id, |m| m.id) {
            self.members[i].last_selected = t;
        }
    }

    /// The member that would be evicted next: least recently selected,
    /// oldest first on ties, never the pinned base model.
    pub fn eviction_candidate(&self) -> Option<u64> {
        self.members
            .iter()
            .skip(1)
            .min_by_key(|m| (m.last_selected, m.id))
            .map(|m| m.id)
    }

    /// Admit `model` unconditionally, evicting if the pool is full.
    /// Returns `None` when the pool has room for nothing but the base model.
    pub fn admit(&mut self, model: M, t: u64) -> Option<Admission> {
        let mut evicted = None;
        if self.members.len() >= self.capacity {
            let victim = self.eviction_candidate()?;
            self.members.retain(|m| m.id != victim);
            evicted = Some(victim);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.members.push(PoolMember {
            id,
            model,
            admitted_at: t,
            last_selected: t,
        });
        Some(Admission { id, evicted })
    }

    /// Admission test for a closing segment: admit `candidate` iff its
    /// adaptive log-probability on the segment beats the best frozen
    /// incumbent by more than `threshold` nats.
    pub fn consider(
        &mut self,
        candidate: impl FnOnce() -> M,
        candidate_log_prob: f64,
        best_incumbent_log_prob: f64,
        threshold: f64,
        t: u64,
    ) -> Option<Admission> {
        if candidate_log_prob - best_incumbent_log_prob > threshold {
            self.admit(candidate(), t)
        } else {
            None
        }
    }
}

/// Index of the best entry among `(member id, segment log-probability)`
/// pairs listed in admission order; ties go to the oldest member.
pub fn best_member(scores: &[(u64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(_, lp)) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b].1 >= lp => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_member_examples() {
        assert_eq!(best_member(&[(0, -3.0)]), Some(0));
        assert_eq!(best_member(&[(0, -2.0), (4, -1.0)]), Some(1));
        assert_eq!(best_member(&[(1, -1.0), (2, -1.0)]), Some(0));
        assert_eq!(best_member(&[]), None);
    }

    #[test]
    fn capacity_and_least_recently_best_eviction() {
        let mut pool = ModelPool::new(0u32, 3);
        assert_eq!(
            pool.admit(1, 5),
            Some(Admission {
                id: 1,
                evicted: None
            })
        );
        assert_eq!(
            pool.admit(2, 6),
            Some(Admission {
                id: 2,
                evicted: None
            })
        );
        pool.mark_selected(1, 9);
        let a = pool.admit(3, 10).unwrap();
        assert_eq!(a.evicted, Some(2));
        assert_eq!(pool.len(), 3);
        assert!(pool.contains(0));
        let ids: Vec<u64> = pool.members().iter().map(|m| m.id).collect();
        assert_eq!(ids, [0, 1, 3]);
    }

    #[test]
    fn base_only_pool_never_admits() {
        let mut pool = ModelPool::new('a', 1);
        assert_eq!(pool.admit('b', 1), None);
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn consider_threshold() {
        let mut pool = ModelPool::new(0u8, 4);
        assert!(pool.consider(|| 1, -1.0, -5.0, f64::INFINITY, 1).is_none());
        assert!(pool
            .consider(|| 1, -1.0, -1.5, core::f64::consts::LN_2, 1)
            .is_none());
        assert!(pool
            .consider(|| 1, -1.0, -2.0, core::f64::consts::LN_2, 1)
            .is_some());
        assert!(pool
            .consider(|| 2, -9.0, -1.0, f64::NEG_INFINITY, 2)
            .is_some());
        assert_eq!(pool.len(), 3);
    }
}
