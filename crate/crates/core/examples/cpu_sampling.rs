//! CPU use of this process while one thread sleeps, then spins.
//!
//! `cargo run --release --example cpu_sampling`

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use credchain::bench::{cpu_monitor, mean};

fn main() {
    let pid = std::process::id();
    let idle = cpu_monitor(pid, 0.5, 2.0).expect("sample");
    println!("sleeping: {:.1}% of one core", mean(&idle.iter().map(|s| s.percent_one_core).collect::<Vec<_>>()));

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let spinner = std::thread::spawn(move || {
        let mut x = 0u64;
        while !flag.load(Ordering::Relaxed) {
            x = std::hint::black_box(x.wrapping_mul(31).wrapping_add(1));
        }
    });
    std::thread::sleep(Duration::from_millis(200));
    let busy = cpu_monitor(pid, 0.5, 2.0).expect("sample");
    stop.store(true, Ordering::Relaxed);
    spinner.join().unwrap();
    println!("spinning: {:.1}% of one core", mean(&busy.iter().map(|s| s.percent_one_core).collect::<Vec<_>>()));
}
