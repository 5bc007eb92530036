//! Monotonic time shared across processes on one host.
//!
//! `std::time::Instant` is opaque and not comparable across processes, but
//! CLOCK_MONOTONIC on Linux counts from a per-host epoch, so timestamps taken
//! by the node runner and the bundled test cloud on the same machine live in
//! one clock domain. All packet timestamps in this crate use this clock.

/// Nanoseconds from CLOCK_MONOTONIC.
pub fn monotonic_ns() -> u64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // Cannot fail with a valid clock id and pointer.
    unsafe {
        libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts);
    }
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}

/// CPU time consumed by the calling thread, in nanoseconds.
pub fn thread_cpu_ns() -> u64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    unsafe {
        libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts);
    }
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}

/// Sleep until the given monotonic deadline. The OS timer covers all but the
/// last stretch; the final 100 µs are spun so pacing targets are hit tightly.
/// Spinning any longer would burn a core per edge device and starve siblings
/// on small hosts.
pub fn sleep_until_ns(deadline_ns: u64) {
    const SPIN_NS: u64 = 100_000;
    loop {
        let now = monotonic_ns();
        if now >= deadline_ns {
            return;
        }
        let remaining = deadline_ns - now;
        if remaining > SPIN_NS {
            std::thread::sleep(std::time::Duration::from_nanos(remaining - SPIN_NS));
        } else {
            std::hint::spin_loop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonic_never_decreases() {
        let a = monotonic_ns();
        let b = monotonic_ns();
        assert!(b >= a);
    }

    #[test]
    fn sleep_until_hits_deadline() {
        let start = monotonic_ns();
        let deadline = start + 5_000_000;
        sleep_until_ns(deadline);
        let now = monotonic_ns();
        assert!(now >= deadline);
        // generous upper bound for a loaded host
        assert!(now < deadline + 50_000_000);
    }
}
