//! Per-process OS accounting read from `/proc`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcMem {
    pub resident_bytes: u64,
    pub swapped_bytes: u64,
    /// False when the kernel exposes no per-process swap counter; callers
    /// must treat `swapped_bytes` as absent rather than zero.
    pub swap_supported: bool,
}

/// Process state character from `/proc/<pid>/stat` ('R', 'S', 'T', 'Z', ...).
/// `None` once the process is gone.
#[cfg(target_os = "linux")]
pub fn process_state(pid: u32) -> Option<char> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // The comm field is parenthesized and may contain spaces; the state
    // char follows the closing paren.
    let after = stat.rfind(')')? + 2;
    stat[after..].chars().next()
}

#[cfg(not(target_os = "linux"))]
pub fn process_state(_pid: u32) -> Option<char> {
    None
}

/// Samples resident set size and per-process swap from `/proc/<pid>/status`.
/// `None` once the process is gone.
#[cfg(target_os = "linux")]
pub fn sample_memory(pid: u32) -> Option<ProcMem> {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let mut resident = None;
    let mut swapped = None;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            resident = parse_kb(rest);
        } else if let Some(rest) = line.strip_prefix("VmSwap:") {
            swapped = parse_kb(rest);
        }
    }
    Some(ProcMem {
        resident_bytes: resident.unwrap_or(0),
        swapped_bytes: swapped.unwrap_or(0),
        swap_supported: swapped.is_some(),
    })
}

#[cfg(not(target_os = "linux"))]
pub fn sample_memory(_pid: u32) -> Option<ProcMem> {
    None
}

/// Whether this platform exposes per-process swap accounting at all.
pub fn swap_accounting_supported() -> bool {
    sample_memory(std::process::id()).map_or(false, |m| m.swap_supported)
}

#[cfg(target_os = "linux")]
fn parse_kb(rest: &str) -> Option<u64> {
    rest.trim()
        .trim_end_matches("kB")
        .trim()
        .parse::<u64>()
        .ok()
        .map(|kb| kb * 1024)
}

#[cfg(all(test, target_os = "linux"))]
mod tests {
    use super::*;

    #[test]
    fn self_is_running_and_resident() {
        let pid = std::process::id();
        let state = process_state(pid).unwrap();
        assert!(state == 'R' || state == 'S', "state {state}");
        let mem = sample_memory(pid).unwrap();
        assert!(mem.resident_bytes > 0);
    }

    #[test]
    fn gone_process_yields_none() {
        // PID 0 never has a /proc entry visible to us.
        assert!(sample_memory(0).is_none());
    }
}
