//! Pinned golden run shared by the golden and acceptance targets.

use std::path::{Path, PathBuf};
use std::process::Command;

/// Files compared byte for byte.
pub const GOLDEN_FILES: [&str; 5] = [
    "grid.csv",
    "profitability.svg",
    "return.svg",
    "volatility.svg",
    "sharpe.svg",
];

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn momlab(args: &[&str], threads: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_momlab"));
    if let Some(t) = threads {
        cmd.env("MOMLAB_THREADS", t);
    }
    let out = cmd.args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("momlab {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

/// Generates the pinned market in `work/data` and runs a 4x4 grid into `work/<name>`.
pub fn pinned_grid(work: &Path, name: &str) -> Result<PathBuf, String> {
    let data = work.join("data");
    if !data.join("prices.csv").exists() {
        let d = data.to_str().unwrap();
        momlab(
            &[
                "synth",
                "--seed",
                "2011",
                "--instruments",
                "60",
                "--years",
                "3",
                "--out",
                d,
            ],
            None,
        )?;
    }
    let out = work.join(name);
    let p = |f: &str| data.join(f).display().to_string();
    let (prices, flows, membership) = (p("prices.csv"), p("flows.csv"), p("membership.csv"));
    momlab(
        &[
            "grid",
            "--prices",
            &prices,
            "--flows",
            &flows,
            "--membership",
            &membership,
            "--universe",
            "200-50",
            "--groups",
            "5",
            "--lookback",
            "1..4",
            "--holding",
            "1..4",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    )?;
    Ok(out)
}

/// First golden file that differs from `out`, if any.
pub fn golden_mismatch(out: &Path) -> Option<String> {
    GOLDEN_FILES.iter().find_map(|f| {
        let want = std::fs::read(golden_dir().join(f)).ok();
        let got = std::fs::read(out.join(f)).ok();
        (want.is_none() || want != got).then(|| f.to_string())
    })
}

/// Runs `momlab` with a thread setting; used for the serial versus parallel comparison.
#[allow(dead_code)]
pub fn momlab_threads(args: &[&str], threads: &str) -> Result<(), String> {
    momlab(args, Some(threads))
}
