//! stderr logging as JSON lines. Verbosity comes from `RAWSAT_LOG`
//! (env_logger filter syntax, default `warn`).

use std::io::Write;

pub const ENV: &str = "RAWSAT_LOG";
pub const TIMING_TARGET: &str = "rawsat::timing";

pub fn init() {
    let env = env_logger::Env::new().filter_or(ENV, "warn");
    let _ = env_logger::Builder::from_env(env)
        .format(|buf, rec| {
            if rec.target() == TIMING_TARGET {
                // already a JSON object
                writeln!(buf, "{}", rec.args())
            } else {
                let line = serde_json::json!({
                    "level": rec.level().as_str(),
                    "target": rec.target(),
                    "msg": rec.args().to_string(),
                });
                writeln!(buf, "{line}")
            }
        })
        .try_init();
}

/// Runs `f` and logs its wall time for `stage`.
pub fn timed<T>(stage: &str, f: impl FnOnce() -> T) -> T {
    let t0 = std::time::Instant::now();
    let out = f();
    log::info!(
        target: TIMING_TARGET,
        "{}",
        serde_json::json!({ "stage": stage, "ms": t0.elapsed().as_secs_f64() * 1e3 })
    );
    out
}
