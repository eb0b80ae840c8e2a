//! Process-wide set of open session ids with a capacity limit.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use crate::protocol::ErrorCode;
use crate::session::SessionError;

pub const DEFAULT_MAX_SESSIONS: usize = 32;
/// Suggested wait before retrying after a capacity rejection.
pub const RETRY_AFTER_MS: u64 = 1000;

#[derive(Debug, Clone)]
pub struct Registry {
    inner: Arc<Mutex<HashSet<String>>>,
    max: usize,
}

/// Holds a registered id; releases it on drop.
#[derive(Debug)]
pub struct Registration {
    inner: Arc<Mutex<HashSet<String>>>,
    id: String,
}

impl Drop for Registration {
    fn drop(&mut self) {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.id);
    }
}

impl Registry {
    pub fn new(max: usize) -> Self {
        Registry {
            inner: Arc::default(),
            max,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn register(&self, id: &str) -> Result<Registration, SessionError> {
        let mut ids = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if ids.contains(id) {
            return Err(SessionError {
                code: ErrorCode::DuplicateId,
                detail: format!("session {id:?} is already open"),
            });
        }
        if ids.len() >= self.max {
            return Err(SessionError {
                code: ErrorCode::Capacity,
                detail: format!("all {} session slots are in use", self.max),
            });
        }
        ids.insert(id.to_string());
        Ok(Registration {
            inner: self.inner.clone(),
            id: id.to_string(),
        })
    }
}
