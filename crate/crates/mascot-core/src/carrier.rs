//! Carrier identity and CPU-bound spinning.
//!
//! A carrier is the unit of execution flow an agent stage runs on. Each OS
//! thread gets an opaque id, assigned lazily and stable for the thread's
//! lifetime. Ids are only meaningful within one process; trace analysis keys
//! carriers by (process, carrier) and renames them before comparing runs.

use std::hint::black_box;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

static NEXT_CARRIER: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static CARRIER_ID: u64 = NEXT_CARRIER.fetch_add(1, Ordering::Relaxed);
}

/// Opaque id of the calling thread, stable for the thread's lifetime.
pub fn current_carrier() -> u64 {
    CARRIER_ID.with(|id| *id)
}

/// OS process id.
pub fn current_process() -> u32 {
    std::process::id()
}

/// One dependent integer chain of roughly a microsecond; the unit the spin
/// calibration counts.
#[inline]
fn work_chunk(mut x: u64) -> u64 {
    for _ in 0..1024 {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    }
    x
}

/// Chunks one uncontended carrier works through per millisecond, measured
/// once per process. The maximum over several short windows keeps a
/// descheduled window from inflating the work sized off it.
fn chunks_per_ms() -> u64 {
    static RATE: OnceLock<u64> = OnceLock::new();
    *RATE.get_or_init(|| {
        let mut best = 1u64;
        for _ in 0..3 {
            let start = Instant::now();
            let mut chunks = 0u64;
            let mut x = 1u64;
            while start.elapsed() < Duration::from_millis(4) {
                for _ in 0..16 {
                    x = black_box(work_chunk(x));
                }
                chunks += 16;
            }
            let elapsed_us = start.elapsed().as_micros().max(1) as u64;
            best = best.max(chunks * 1000 / elapsed_us);
        }
        best
    })
}

/// Burns at least `duration` worth of one carrier's CPU through pure compute.
/// Unlike sleeping, this occupies the carrier; unlike a wall-clock spin, the
/// work is constant, so oversubscribed carriers take proportionally longer
/// and spin workloads expose the actual parallelism of a strategy.
pub fn busy_spin(duration: Duration) {
    if duration.is_zero() {
        return;
    }
    let chunks = (chunks_per_ms() as u128 * duration.as_micros()).div_ceil(1000).max(1);
    let mut x = 1u64;
    for _ in 0..chunks {
        x = black_box(work_chunk(x));
    }
}
