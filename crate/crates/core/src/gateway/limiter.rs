use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::clock::Clock;

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding-window limiter: within any 60 s window at most `per_minute`
/// requests are admitted. Zero disables limiting.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    admitted: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        Self { per_minute, admitted: Mutex::new(VecDeque::new()) }
    }

    /// Blocks (via `clock`) until a request may be sent, then records it.
    pub fn acquire(&self, clock: &dyn Clock) {
        if self.per_minute == 0 {
            return;
        }
        loop {
            let wait = {
                let mut q = self.admitted.lock().unwrap();
                let now = clock.now();
                while q.front().is_some_and(|&t| t + WINDOW <= now) {
                    q.pop_front();
                }
                if (q.len() as u32) < self.per_minute {
                    q.push_back(now);
                    return;
                }
                *q.front().expect("nonempty") + WINDOW - now
            };
            clock.sleep(wait);
        }
    }
}

/// Counting semaphore capping in-flight requests per provider.
#[derive(Debug)]
pub struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self { free: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::super::clock::VirtualClock;
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    proptest! {
        #[test]
        fn never_exceeds_rate_in_any_window(
            rate in 1u32..8,
            gaps in prop::collection::vec(0u64..30_000, 1..60),
        ) {
            let clock = VirtualClock::new();
            let limiter = RateLimiter::new(rate);
            let mut stamps = Vec::new();
            for g in gaps {
                clock.advance(Duration::from_millis(g));
                limiter.acquire(&clock);
                stamps.push(clock.now());
            }
            for (i, &start) in stamps.iter().enumerate() {
                let n = stamps[i..].iter().take_while(|&&t| t < start + WINDOW).count();
                prop_assert!(n as u32 <= rate, "{n} requests within 60s at limit {rate}");
            }
        }
    }

    #[test]
    fn burst_waits_for_window() {
        let clock = VirtualClock::new();
        let limiter = RateLimiter::new(2);
        for _ in 0..3 {
            limiter.acquire(&clock);
        }
        assert_eq!(clock.now(), WINDOW);
    }

    #[test]
    fn semaphore_caps_concurrency() {
        let sem = Arc::new(Semaphore::new(2));
        let active = Arc::new(Mutex::new((0usize, 0usize)));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let sem = sem.clone();
                let active = active.clone();
                s.spawn(move || {
                    let _p = sem.acquire();
                    {
                        let mut a = active.lock().unwrap();
                        a.0 += 1;
                        a.1 = a.1.max(a.0);
                    }
                    std::thread::sleep(Duration::from_millis(5));
                    active.lock().unwrap().0 -= 1;
                });
            }
        });
        assert!(active.lock().unwrap().1 <= 2);
    }
}
