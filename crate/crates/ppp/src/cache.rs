//! Bounded, thread-safe cache of correlation factors.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use ppp_core::simulate::{CorrelationFactor, FactorSource};
use ppp_core::Window;

type Key = (usize, u64, u64, u64);

/// Keeps the most recently inserted factors keyed by window shape, resolution
/// and correlation scale. Factorization happens outside the lock, so two
/// threads asking for the same new key may both compute it.
pub struct FactorCache {
    capacity: usize,
    inner: Mutex<(HashMap<Key, Arc<CorrelationFactor>>, VecDeque<Key>)>,
}

impl FactorCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            inner: Mutex::new((HashMap::new(), VecDeque::new())),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("factor cache poisoned").0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for FactorCache {
    fn default() -> Self {
        Self::new(16)
    }
}

impl FactorSource for FactorCache {
    fn factor(
        &self,
        window: &Window,
        resolution: usize,
        scale: f64,
    ) -> ppp_core::Result<Arc<CorrelationFactor>> {
        let key = (
            resolution,
            scale.to_bits(),
            window.width().to_bits(),
            window.height().to_bits(),
        );
        if let Some(f) = self.inner.lock().expect("factor cache poisoned").0.get(&key) {
            return Ok(f.clone());
        }
        let f = Arc::new(CorrelationFactor::new(window, resolution, scale)?);
        if self.capacity > 0 {
            let mut guard = self.inner.lock().expect("factor cache poisoned");
            let (map, order) = &mut *guard;
            if map.insert(key, f.clone()).is_none() {
                order.push_back(key);
            }
            while map.len() > self.capacity {
                if let Some(old) = order.pop_front() {
                    map.remove(&old);
                }
            }
        }
        Ok(f)
    }
}
