use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureInfo {
    pub atom_count: u64,
    pub source_path: PathBuf,
    pub id_hint: Option<String>,
}

fn is_atom_record(line: &str) -> bool {
    let tag = line.get(..6).unwrap_or(line).trim_end();
    if tag != "ATOM" && tag != "HETATM" {
        return false;
    }
    // x, y, z occupy columns 31-54
    (0..3).all(|i| {
        line.get(30 + 8 * i..38 + 8 * i)
            .is_some_and(|c| c.trim().parse::<f64>().is_ok())
    })
}

fn header_id(line: &str) -> Option<String> {
    if !line.starts_with("HEADER") {
        return None;
    }
    let id = line.get(62..66)?.trim();
    (!id.is_empty()).then(|| id.to_string())
}

/// Counts ATOM/HETATM records with parseable coordinates; other lines are
/// skipped.
pub fn parse_structure(path: &Path) -> Result<StructureInfo, SimError> {
    let text = std::fs::read_to_string(path).map_err(|source| SimError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let mut atom_count = 0u64;
    let mut id_hint = None;
    for line in text.lines() {
        if is_atom_record(line) {
            atom_count += 1;
        } else if id_hint.is_none() {
            id_hint = header_id(line);
        }
    }
    if atom_count == 0 {
        return Err(SimError::EmptyStructure(path.to_path_buf()));
    }
    let id_hint = id_hint.or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().to_ascii_uppercase())
    });
    Ok(StructureInfo {
        atom_count,
        source_path: path.to_path_buf(),
        id_hint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".pdb").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    const HEADER: &str =
        "HEADER    TRANSCRIPTION                           19-MAR-09   2KKJ              ";

    #[test]
    fn three_atoms() {
        let body = format!(
            "{HEADER}\n\
             ATOM      1  N   ALA A   1      11.104   6.134  -6.504  1.00  0.00           N\n\
             ATOM      2  CA  ALA A   1      11.639   6.071  -5.147  1.00  0.00           C\n\
             HETATM    3  O   HOH A 101       1.000   2.000   3.000  1.00  0.00           O\n\
             TER\nEND\n"
        );
        let f = file(&body);
        let info = parse_structure(f.path()).unwrap();
        assert_eq!(info.atom_count, 3);
        assert_eq!(info.id_hint.as_deref(), Some("2KKJ"));
    }

    #[test]
    fn malformed_atom_lines_are_skipped() {
        let body =
            "ATOM      1  N   ALA A   1      11.104   6.134  -6.504  1.00  0.00           N\n\
                    ATOM  garbage\n\
                    ATOMIC nonsense\n";
        let f = file(body);
        assert_eq!(parse_structure(f.path()).unwrap().atom_count, 1);
    }

    #[test]
    fn header_only_is_empty() {
        let f = file(&format!("{HEADER}\nREMARK   1 nothing here\nEND\n"));
        assert!(matches!(
            parse_structure(f.path()),
            Err(SimError::EmptyStructure(_))
        ));
    }

    #[test]
    fn missing_file_is_unreadable() {
        assert!(matches!(
            parse_structure(Path::new("/no/such/file.pdb")),
            Err(SimError::FileUnreadable { .. })
        ));
    }
}
