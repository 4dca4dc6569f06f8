//! On-disk module library.
//!
//! ```text
//! <catalog>/index                         JSON index: name -> head, roles, revisions
//! <catalog>/modules/<name>/<revision>     one definition per file
//! ```
//!
//! Revisions are content hashes, so saving unchanged content is idempotent
//! and older revisions stay on disk.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ModuleDef;
use crate::model::document::{def_from_record, def_to_record, from_json, to_pretty_json};
use crate::model::ModelError;
use crate::registry::Registry;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("revision conflict for '{name}': expected head {expected:?}, found {found:?}")]
    Conflict {
        name: String,
        expected: Option<String>,
        found: Option<String>,
    },
    #[error("invalid module file {path}: {source}")]
    Invalid { path: String, source: ModelError },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub head: String,
    pub roles: Vec<String>,
    pub revisions: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogIndex {
    pub modules: BTreeMap<String, IndexEntry>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    root: PathBuf,
}

impl Catalog {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Catalog { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index")
    }

    fn module_path(&self, name: &str, revision: &str) -> PathBuf {
        self.root.join("modules").join(name).join(revision)
    }

    pub fn index(&self) -> Result<CatalogIndex, CatalogError> {
        let path = self.index_path();
        match fs::read_to_string(&path) {
            Ok(text) => from_json(&text).map_err(|source| CatalogError::Invalid {
                path: path.display().to_string(),
                source,
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(CatalogIndex::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn write_index(&self, index: &CatalogIndex) -> Result<(), CatalogError> {
        let path = self.index_path();
        let tmp = self.root.join("index.tmp");
        fs::write(&tmp, to_pretty_json(index)).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Saves `def` as the new head of its name; last writer wins.
    pub fn save(&self, def: &ModuleDef) -> Result<String, CatalogError> {
        self.store(def, None)
    }

    /// Saves only if the current head equals `expected` (`None`: the name
    /// must not exist yet).
    pub fn save_if_head(
        &self,
        def: &ModuleDef,
        expected: Option<&str>,
    ) -> Result<String, CatalogError> {
        self.store(def, Some(expected))
    }

    fn store(&self, def: &ModuleDef, expected: Option<Option<&str>>) -> Result<String, CatalogError> {
        if def.name.contains(['/', '\\']) || def.name.starts_with('.') {
            return Err(CatalogError::Invalid {
                path: def.name.clone(),
                source: ModelError::InvalidArgument("module name is not a valid file name".into()),
            });
        }
        let mut index = self.index()?;
        let head = index.modules.get(&def.name).map(|e| e.head.clone());
        if let Some(expected) = expected {
            if head.as_deref() != expected {
                return Err(CatalogError::Conflict {
                    name: def.name.clone(),
                    expected: expected.map(str::to_string),
                    found: head,
                });
            }
        }

        let path = self.module_path(&def.name, &def.revision);
        let text = to_pretty_json(&def_to_record(def, true));
        match fs::read_to_string(&path) {
            Ok(existing) if existing != text => {
                return Err(CatalogError::Conflict {
                    name: def.name.clone(),
                    expected: Some(def.revision.clone()),
                    found: Some(format!("different content stored under {}", def.revision)),
                })
            }
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let dir = path.parent().expect("module path has a parent");
                fs::create_dir_all(dir).map_err(io_err(dir))?;
                fs::write(&path, &text).map_err(io_err(&path))?;
            }
            Err(e) => return Err(io_err(&path)(e)),
        }

        let entry = index
            .modules
            .entry(def.name.clone())
            .or_insert_with(|| IndexEntry {
                head: def.revision.clone(),
                roles: def.roles.clone(),
                revisions: Vec::new(),
            });
        entry.head = def.revision.clone();
        entry.roles = def.roles.clone();
        if !entry.revisions.contains(&def.revision) {
            entry.revisions.push(def.revision.clone());
        }
        self.write_index(&index)?;
        Ok(def.revision.clone())
    }

    /// Loads `name` at `revision`, or at its head revision.
    pub fn load(
        &self,
        name: &str,
        revision: Option<&str>,
        registry: &Registry,
    ) -> Result<ModuleDef, CatalogError> {
        let index = self.index()?;
        let entry = index
            .modules
            .get(name)
            .ok_or_else(|| CatalogError::NotFound(name.to_string()))?;
        let rev = revision.unwrap_or(&entry.head);
        if !entry.revisions.iter().any(|r| r == rev) {
            return Err(CatalogError::NotFound(format!("{name}@{rev}")));
        }
        library_load(&self.module_path(name, rev), registry)
    }

    pub fn list(&self) -> Result<Vec<(String, IndexEntry)>, CatalogError> {
        Ok(self.index()?.modules.into_iter().collect())
    }
}

/// Saves into the catalog rooted at `dir`, returning the revision id.
pub fn library_save(def: &ModuleDef, dir: &Path) -> Result<String, CatalogError> {
    Catalog::new(dir).save(def)
}

/// Loads one definition file.
pub fn library_load(path: &Path, registry: &Registry) -> Result<ModuleDef, CatalogError> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CatalogError::NotFound(path.display().to_string())
        } else {
            io_err(path)(e)
        }
    })?;
    let invalid = |source| CatalogError::Invalid {
        path: path.display().to_string(),
        source,
    };
    let record = from_json(&text).map_err(invalid)?;
    def_from_record(record, registry, "module").map_err(invalid)
}

/// Renders one definition in the module file format.
pub fn module_document(def: &ModuleDef) -> String {
    to_pretty_json(&def_to_record(def, true))
}

/// Parses a definition from the module file format.
pub fn parse_module(text: &str, registry: &Registry) -> Result<ModuleDef, ModelError> {
    def_from_record(from_json(text)?, registry, "module")
}
