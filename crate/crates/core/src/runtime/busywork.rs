//! Edge-computing stand-in: a floating-point multiply-add loop that keeps
//! the CPU busy for a requested wall duration. Calibrated once per process
//! against the host, then run by loop count so each activation costs CPU
//! time rather than sleeping.

use std::hint::black_box;
use std::sync::OnceLock;

static ITERS_PER_MS: OnceLock<u64> = OnceLock::new();

#[inline(never)]
fn kernel(iters: u64) -> f64 {
    let mut acc = 1.000_000_1_f64;
    for _ in 0..iters {
        acc = black_box(acc).mul_add(1.000_000_01, 1e-12);
    }
    acc
}

fn calibrate() -> u64 {
    // warm up, then time a fixed batch
    black_box(kernel(100_000));
    let batch = 2_000_000u64;
    let start = crate::clock::monotonic_ns();
    black_box(kernel(batch));
    let elapsed_ns = (crate::clock::monotonic_ns() - start).max(1);
    (batch * 1_000_000 / elapsed_ns).max(1)
}

/// Perform roughly `ms` milliseconds of floating-point busy work.
pub fn busy_work_ms(ms: u64) {
    let iters_per_ms = *ITERS_PER_MS.get_or_init(calibrate);
    black_box(kernel(iters_per_ms * ms));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::thread_cpu_ns;

    #[test]
    fn busy_work_burns_cpu_within_tolerance() {
        busy_work_ms(1); // force calibration outside the measurement
        for w_ms in [10u64, 20, 50] {
            let before = thread_cpu_ns();
            busy_work_ms(w_ms);
            let cpu_ms = (thread_cpu_ns() - before) as f64 / 1e6;
            let w = w_ms as f64;
            assert!(
                cpu_ms >= 0.8 * w && cpu_ms <= 1.5 * w,
                "workload {w_ms}ms burned {cpu_ms:.2}ms of CPU"
            );
        }
    }
}
