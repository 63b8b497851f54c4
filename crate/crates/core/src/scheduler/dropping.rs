//! UE-side discard of blocks that missed their activation slot plus guard.

use std::collections::VecDeque;

/// Removes, from the front of each generation-ordered queue, every block
/// whose slot deadline (slot end + GI) is at or before `now_su`.
pub fn apply_dropping<D>(queues: &mut [VecDeque<u32>], deadline_su: D, now_su: u64, enabled: bool) -> Vec<u32>
where
    D: Fn(u32) -> u64,
{
    let mut dropped = Vec::new();
    if !enabled {
        return dropped;
    }
    for q in queues.iter_mut() {
        while let Some(&b) = q.front() {
            if deadline_su(b) > now_su {
                break;
            }
            dropped.push(b);
            q.pop_front();
        }
    }
    dropped
}
