//! POSIX job-control handling for the task process.
//!
//! SIGTSTP is caught (rather than left at its default or replaced by the
//! uncatchable SIGSTOP) so the task gets a chance to manage external state
//! before stopping: the handler flushes the progress channel — emitting the
//! freshest progress record — and then re-raises the stop with the default
//! action. SIGCONT emits a `RESUMED` marker record.
//!
//! Handlers are restricted to async-signal-safe operations: atomic loads,
//! integer formatting into a stack buffer, `write(2)`, `sigaction(2)` and
//! `raise(3)`.

#![cfg(unix)]

use std::sync::atomic::{AtomicU64, Ordering};

static TUPLES_DONE: AtomicU64 = AtomicU64::new(0);
static TUPLES_TOTAL: AtomicU64 = AtomicU64::new(0);

/// Publishes progress for the signal handlers to read.
pub fn publish_progress(done: u64, total: u64) {
    TUPLES_TOTAL.store(total, Ordering::Relaxed);
    TUPLES_DONE.store(done, Ordering::Relaxed);
}

/// `write(2)` the whole buffer to stdout, retrying on EINTR. Async-signal-safe.
pub fn write_raw(buf: &[u8]) {
    let mut off = 0;
    while off < buf.len() {
        let n = unsafe {
            libc::write(
                libc::STDOUT_FILENO,
                buf[off..].as_ptr() as *const libc::c_void,
                buf.len() - off,
            )
        };
        if n < 0 {
            let err = std::io::Error::last_os_error();
            if err.kind() == std::io::ErrorKind::Interrupted {
                continue;
            }
            return; // stdout gone; nothing useful left to do
        }
        off += n as usize;
    }
}

/// Formats `PROGRESS 0.dddddd\n` for `done/total` without allocating.
fn format_progress(done: u64, total: u64, buf: &mut [u8; 32]) -> usize {
    // micro = round(done / total * 1e6), capped at 1.0
    let micro = if done >= total {
        1_000_000
    } else {
        (done.saturating_mul(1_000_000)) / total
    };
    let text = b"PROGRESS ";
    buf[..text.len()].copy_from_slice(text);
    let mut i = text.len();
    buf[i] = if micro >= 1_000_000 { b'1' } else { b'0' };
    i += 1;
    buf[i] = b'.';
    i += 1;
    let frac = micro % 1_000_000;
    let mut div = 100_000;
    for _ in 0..6 {
        buf[i] = b'0' + ((frac / div) % 10) as u8;
        i += 1;
        div /= 10;
    }
    buf[i] = b'\n';
    i + 1
}

/// Emits the current progress record. Called from the TSTP handler and
/// usable from normal code.
pub fn flush_progress_channel() {
    let total = TUPLES_TOTAL.load(Ordering::Relaxed);
    if total == 0 {
        return;
    }
    let done = TUPLES_DONE.load(Ordering::Relaxed);
    let mut buf = [0u8; 32];
    let n = format_progress(done, total, &mut buf);
    write_raw(&buf[..n]);
}

unsafe fn set_handler(sig: libc::c_int, action: usize) {
    let mut sa: libc::sigaction = std::mem::zeroed();
    sa.sa_sigaction = action;
    // SA_NODEFER: the re-raised SIGTSTP must not be blocked while the
    // handler is still on the stack, otherwise the stop never happens.
    sa.sa_flags = libc::SA_RESTART | libc::SA_NODEFER;
    libc::sigemptyset(&mut sa.sa_mask);
    libc::sigaction(sig, &sa, std::ptr::null_mut());
}

extern "C" fn on_tstp(_sig: libc::c_int) {
    flush_progress_channel();
    unsafe {
        set_handler(libc::SIGTSTP, libc::SIG_DFL);
        libc::raise(libc::SIGTSTP);
        // Stopped above; execution continues here after SIGCONT.
        set_handler(libc::SIGTSTP, on_tstp as extern "C" fn(libc::c_int) as usize);
    }
}

extern "C" fn on_cont(_sig: libc::c_int) {
    write_raw(b"RESUMED\n");
}

/// Installs the SIGTSTP and SIGCONT handlers.
pub fn install_job_control_handlers() {
    unsafe {
        set_handler(libc::SIGTSTP, on_tstp as extern "C" fn(libc::c_int) as usize);
        set_handler(libc::SIGCONT, on_cont as extern "C" fn(libc::c_int) as usize);
    }
}
