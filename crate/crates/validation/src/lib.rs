//! Runner for the acceptance suite in `tests/acceptance.rs`.
//!
//! Each criterion prints one `PASS` or `FAIL` line with its measurements and
//! runtime. A criterion with a runtime limit fails when it overruns.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Measurements of one criterion: `Ok(detail)` passes, `Err(detail)` fails.
pub type Verdict = Result<String, String>;

#[derive(Default)]
pub struct Suite {
    results: Vec<(String, bool)>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    /// Run one criterion. A panic counts as a failure.
    pub fn check(&mut self, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) {
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = started.elapsed();
        let (mut ok, mut detail) = match verdict {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if let Some(limit) = limit {
            if elapsed > limit {
                ok = false;
                detail = format!("{detail}; over the {:.0} s limit", limit.as_secs_f64());
            }
        }
        println!("{} {name} [{:.1} s] {detail}", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
        self.results.push((name.to_string(), ok));
    }

    pub fn failures(&self) -> Vec<&str> {
        self.results.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect()
    }

    /// Print the summary and return the process exit code.
    pub fn finish(self) -> i32 {
        let failed = self.failures();
        println!("acceptance: {} passed, {} failed", self.results.len() - failed.len(), failed.len());
        i32::from(!failed.is_empty())
    }
}

/// `Ok` when `cond` holds, else `Err`, with the same detail text.
pub fn verdict(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}
