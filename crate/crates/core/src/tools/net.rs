//! Process-wide network gate.
//!
//! Every network client in this crate checks the gate before constructing
//! a connection and registers each outgoing request. With the gate set
//! offline, construction fails before any socket work, and the attempt
//! counter lets tests assert that a whole pipeline run performed zero
//! network operations.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use super::ToolError;

static OFFLINE: AtomicBool = AtomicBool::new(false);
static ATTEMPTS: AtomicU64 = AtomicU64::new(0);

/// Handle for the process-wide gate.
#[derive(Debug, Clone, Copy)]
pub struct NetworkGate;

impl NetworkGate {
    /// Called before constructing any network client.
    pub fn check_construction() -> Result<(), ToolError> {
        if OFFLINE.load(Ordering::SeqCst) {
            Err(ToolError::Offline)
        } else {
            Ok(())
        }
    }

    /// Called immediately before each outgoing request.
    pub fn register_attempt() -> Result<(), ToolError> {
        if OFFLINE.load(Ordering::SeqCst) {
            return Err(ToolError::Offline);
        }
        ATTEMPTS.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

/// Flip the process into (or out of) offline mode.
pub fn set_offline(offline: bool) {
    OFFLINE.store(offline, Ordering::SeqCst);
}

/// Total outgoing requests registered so far in this process.
pub fn network_attempts() -> u64 {
    ATTEMPTS.load(Ordering::SeqCst)
}

/// Reset the attempt counter (test support).
pub fn reset_network_attempts() {
    ATTEMPTS.store(0, Ordering::SeqCst);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offline_blocks_construction_and_attempts() {
        // Serialized through the global flag; keep the offline window
        // minimal so other tests in this binary are unaffected.
        set_offline(true);
        assert!(matches!(
            NetworkGate::check_construction(),
            Err(ToolError::Offline)
        ));
        let before = network_attempts();
        assert!(NetworkGate::register_attempt().is_err());
        assert_eq!(network_attempts(), before);
        set_offline(false);
        assert!(NetworkGate::check_construction().is_ok());
    }
}
