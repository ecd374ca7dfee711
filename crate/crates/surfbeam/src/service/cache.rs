//! Byte-budgeted response cache with single-flight computation.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use super::error::ApiError;

type Slot = Arc<OnceLock<Result<Arc<Vec<u8>>, ApiError>>>;

struct Entry {
    slot: Slot,
    last_used: u64,
    /// Zero while the value is still being computed.
    size: usize,
}

#[derive(Default)]
struct Inner {
    map: HashMap<String, Entry>,
    clock: u64,
    bytes: usize,
}

/// Keys are the quantized effective parameters of a request; values are the
/// serialized payloads. Concurrent misses on one key run the computation
/// once and share its result. Errors are returned but not retained.
/// Least-recently-used entries are dropped once the total exceeds the budget.
pub struct PayloadCache {
    budget: usize,
    inner: Mutex<Inner>,
    computed: AtomicUsize,
}

impl PayloadCache {
    pub fn new(budget_bytes: usize) -> Self {
        PayloadCache {
            budget: budget_bytes,
            inner: Mutex::new(Inner::default()),
            computed: AtomicUsize::new(0),
        }
    }

    /// Number of computations run so far (misses).
    pub fn computations(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    pub fn resident_bytes(&self) -> usize {
        self.inner.lock().expect("cache lock").bytes
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute<F>(&self, key: &str, f: F) -> Result<Arc<Vec<u8>>, ApiError>
    where
        F: FnOnce() -> Result<Vec<u8>, ApiError>,
    {
        let slot = {
            let mut g = self.inner.lock().expect("cache lock");
            g.clock += 1;
            let now = g.clock;
            let e = g.map.entry(key.to_string()).or_insert_with(|| Entry {
                slot: Arc::new(OnceLock::new()),
                last_used: now,
                size: 0,
            });
            e.last_used = now;
            e.slot.clone()
        };
        let mut ran = false;
        let result = slot
            .get_or_init(|| {
                ran = true;
                self.computed.fetch_add(1, Ordering::Relaxed);
                f().map(Arc::new)
            })
            .clone();
        if ran {
            let mut g = self.inner.lock().expect("cache lock");
            let ours = g.map.get(key).is_some_and(|e| Arc::ptr_eq(&e.slot, &slot));
            if ours {
                match &result {
                    Ok(bytes) => {
                        let n = bytes.len();
                        if let Some(e) = g.map.get_mut(key) {
                            e.size = n;
                        }
                        g.bytes += n;
                    }
                    Err(_) => {
                        g.map.remove(key);
                    }
                }
            }
            Self::evict(&mut g, self.budget);
        }
        result
    }

    fn evict(g: &mut Inner, budget: usize) {
        while g.bytes > budget {
            let victim = g
                .map
                .iter()
                .filter(|(_, e)| e.size > 0)
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone());
            match victim {
                Some(k) => {
                    let e = g.map.remove(&k).expect("victim present");
                    g.bytes -= e.size;
                }
                None => break,
            }
        }
    }
}
