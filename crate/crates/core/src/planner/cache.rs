use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use super::{reverse_sssp, TargetSet, ValueTable};
use crate::skill_graph::SkillGraph;

/// Value tables for one graph, keyed by target-set digest.
///
/// Lookups take a shared lock; a miss computes outside the lock and the
/// first writer wins, so concurrent misses never install two tables.
#[derive(Debug, Default)]
pub struct ValueCache {
    tables: RwLock<HashMap<u64, Arc<ValueTable>>>,
    recomputes: AtomicU64,
    hits: AtomicU64,
}

impl ValueCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(&self, graph: &SkillGraph, targets: &TargetSet) -> Arc<ValueTable> {
        let key = targets.digest();
        if let Some(vt) = self.lookup(key, targets) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return vt;
        }
        let fresh = Arc::new(reverse_sssp(graph, targets));
        let mut tables = self.tables.write().expect("value cache lock");
        match tables.get(&key) {
            Some(existing) if existing.targets() == targets => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                existing.clone()
            }
            _ => {
                self.recomputes.fetch_add(1, Ordering::Relaxed);
                tables.insert(key, fresh.clone());
                fresh
            }
        }
    }

    fn lookup(&self, key: u64, targets: &TargetSet) -> Option<Arc<ValueTable>> {
        let tables = self.tables.read().expect("value cache lock");
        tables.get(&key).filter(|vt| vt.targets() == targets).cloned()
    }

    /// Number of shortest-path computations performed so far.
    pub fn recomputes(&self) -> u64 {
        self.recomputes.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.tables.read().expect("value cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
