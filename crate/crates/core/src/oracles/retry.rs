use std::time::Duration;

use crate::error::TransportError;

/// Runs `call` up to `attempts` times (at least once), doubling the delay
/// between attempts.
pub fn with_retries<T>(
    attempts: u32,
    backoff: Duration,
    mut call: impl FnMut() -> Result<T, TransportError>,
) -> Result<T, TransportError> {
    let attempts = attempts.max(1);
    let mut delay = backoff;
    let mut last = None;
    for attempt in 0..attempts {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) => {
                log::debug!("attempt {}/{attempts} failed: {e}", attempt + 1);
                last = Some(e);
                if attempt + 1 < attempts && !delay.is_zero() {
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
    Err(last.expect("at least one attempt"))
}
