//! Process CPU usage from OS accounting, where 100 means one core fully busy.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpuSample {
    /// Seconds since monitoring started, at the end of the interval.
    pub t_s: f64,
    pub percent_one_core: f64,
}

#[derive(Debug, Error)]
pub enum CpuError {
    #[error("process {0} is gone")]
    ProcessGone(u32),
    #[error("unparseable stat line for process {0}")]
    Parse(u32),
    #[error("interval and duration must be positive")]
    BadInterval,
}

pub fn clock_ticks_per_second() -> u64 {
    // SAFETY: sysconf has no preconditions.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as u64
    } else {
        100
    }
}

/// utime + stime of `pid` in clock ticks.
pub fn process_cpu_ticks(pid: u32) -> Result<u64, CpuError> {
    let text = std::fs::read_to_string(format!("/proc/{pid}/stat")).map_err(|_| CpuError::ProcessGone(pid))?;
    // the command name may contain spaces; fields resume after the last ')'
    let rest = text.rfind(')').map(|i| &text[i + 1..]).ok_or(CpuError::Parse(pid))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // rest starts at field 3 (state); utime and stime are fields 14 and 15
    let get = |i: usize| fields.get(i - 3).and_then(|f| f.parse::<u64>().ok()).ok_or(CpuError::Parse(pid));
    let state = fields.first().copied().unwrap_or("");
    if state == "Z" || state == "X" {
        return Err(CpuError::ProcessGone(pid));
    }
    Ok(get(14)? + get(15)?)
}

/// Samples CPU-time delta over wall-time delta every `interval_s` for `duration_s`.
pub fn cpu_monitor(pid: u32, interval_s: f64, duration_s: f64) -> Result<Vec<CpuSample>, CpuError> {
    if interval_s <= 0.0 || duration_s <= 0.0 {
        return Err(CpuError::BadInterval);
    }
    let n = (duration_s / interval_s).round().max(1.0) as usize;
    sample_while(pid, interval_s, |i| i < n)
}

/// Like [`cpu_monitor`] but runs until `stop` is set, finishing the current interval.
pub fn cpu_monitor_until(pid: u32, interval_s: f64, stop: &AtomicBool) -> Result<Vec<CpuSample>, CpuError> {
    if interval_s <= 0.0 {
        return Err(CpuError::BadInterval);
    }
    sample_while(pid, interval_s, |_| !stop.load(Ordering::SeqCst))
}

fn sample_while(pid: u32, interval_s: f64, mut more: impl FnMut(usize) -> bool) -> Result<Vec<CpuSample>, CpuError> {
    let hz = clock_ticks_per_second() as f64;
    let start = Instant::now();
    let mut prev_ticks = process_cpu_ticks(pid)?;
    let mut prev_t = start;
    let mut out = Vec::new();
    while more(out.len()) {
        let due = start + Duration::from_secs_f64(interval_s * (out.len() + 1) as f64);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        let ticks = process_cpu_ticks(pid)?;
        let t = Instant::now();
        let wall = (t - prev_t).as_secs_f64();
        let cpu = (ticks - prev_ticks) as f64 / hz;
        out.push(CpuSample {
            t_s: (t - start).as_secs_f64(),
            percent_one_core: 100.0 * cpu / wall,
        });
        prev_ticks = ticks;
        prev_t = t;
    }
    Ok(out)
}
