//! Goal-access instrumentation for the planning/execution split.
//!
//! The harness marks grounding and control work with [`in_execution_layer`];
//! any [`Goal`](super::Goal) accessor called while that mark is active bumps a
//! process-wide counter. A correct factorized pipeline leaves it at zero.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

static EXECUTION_GOAL_ACCESSES: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static IN_EXECUTION: Cell<u32> = const { Cell::new(0) };
}

/// Runs `f` with the current thread marked as inside the execution layer.
pub fn in_execution_layer<R>(f: impl FnOnce() -> R) -> R {
    IN_EXECUTION.with(|c| c.set(c.get() + 1));
    struct Reset;
    impl Drop for Reset {
        fn drop(&mut self) {
            IN_EXECUTION.with(|c| c.set(c.get() - 1));
        }
    }
    let _reset = Reset;
    f()
}

pub(crate) fn note_goal_access() {
    if IN_EXECUTION.with(|c| c.get()) > 0 {
        EXECUTION_GOAL_ACCESSES.fetch_add(1, Ordering::Relaxed);
    }
}

/// Total goal reads observed inside execution layers since process start.
pub fn goal_accesses() -> u64 {
    EXECUTION_GOAL_ACCESSES.load(Ordering::Relaxed)
}
