use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Scenario files in a workspace directory.
///
/// Each scenario is `<id>.json` in the same document format the CLI reads,
/// with its revision counter in `<id>.rev` next to it.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

#[derive(Debug)]
pub enum StoreError {
    NotFound,
    Stale { current: u64 },
    Io(io::Error),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e)
    }
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.json"))
    }

    fn rev_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.rev"))
    }

    /// Ids are restricted so they can never escape the workspace.
    pub fn valid_id(id: &str) -> bool {
        !id.is_empty()
            && id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
    }

    pub fn get(&self, id: &str) -> Result<(String, u64), StoreError> {
        if !Self::valid_id(id) {
            return Err(StoreError::NotFound);
        }
        let text = match fs::read_to_string(self.doc_path(id)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound),
            Err(e) => return Err(e.into()),
        };
        let rev = fs::read_to_string(self.rev_path(id))?
            .trim()
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok((text, rev))
    }

    /// Stores a new scenario under an id derived from `name`; returns the id.
    pub fn create(&self, name: &str, text: &str) -> Result<String, StoreError> {
        fs::create_dir_all(&self.root)?;
        let base = slug(name);
        let mut id = base.clone();
        let mut n = 2;
        while self.doc_path(&id).exists() {
            id = format!("{base}-{n}");
            n += 1;
        }
        self.write(&id, text, 1)?;
        Ok(id)
    }

    /// Replaces a scenario if `expected` is its current revision; returns
    /// the new revision.
    pub fn update(&self, id: &str, text: &str, expected: u64) -> Result<u64, StoreError> {
        let (_, current) = self.get(id)?;
        if current != expected {
            return Err(StoreError::Stale { current });
        }
        self.write(id, text, current + 1)?;
        Ok(current + 1)
    }

    fn write(&self, id: &str, text: &str, rev: u64) -> Result<(), StoreError> {
        write_atomic(&self.doc_path(id), text)?;
        write_atomic(&self.rev_path(id), &format!("{rev}\n"))?;
        Ok(())
    }
}

fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    let s = s.trim_matches('_');
    if s.is_empty() {
        "scenario".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("UIS1"), "uis1");
        assert_eq!(slug("Urban crossing #2"), "urban_crossing__2");
        assert_eq!(slug("  "), "scenario");
    }

    #[test]
    fn ids_are_confined() {
        assert!(Store::valid_id("uis1-2"));
        assert!(!Store::valid_id("../etc"));
        assert!(!Store::valid_id(""));
    }
}
