use std::io;
use std::path::{Path, PathBuf};

use chrono::Utc;

const MAX_ATTEMPTS: usize = 8;

/// Creates a fresh directory `{UTC timestamp}_{128-bit random hex}` under
/// `base`. Creation is exclusive, so concurrent callers never share a
/// directory.
pub fn make_run_dir(base: &Path) -> io::Result<PathBuf> {
    make_labeled_run_dir(base, None)
}

/// Like [`make_run_dir`], with an extra `_{label}` suffix.
pub fn make_labeled_run_dir(base: &Path, label: Option<&str>) -> io::Result<PathBuf> {
    for _ in 0..MAX_ATTEMPTS {
        let stamp = Utc::now().format("%Y%m%dT%H%M%SZ");
        let token: u128 = rand::random();
        let name = match label {
            Some(l) => format!("{stamp}_{token:032x}_{l}"),
            None => format!("{stamp}_{token:032x}"),
        };
        let path = base.join(name);
        match std::fs::create_dir(&path) {
            Ok(()) => return Ok(path),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => {
                return Err(io::Error::new(
                    e.kind(),
                    format!("cannot create run directory under {}: {e}", base.display()),
                ))
            }
        }
    }
    Err(io::Error::new(
        io::ErrorKind::AlreadyExists,
        "exhausted attempts to create a unique run directory",
    ))
}
