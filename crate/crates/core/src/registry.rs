use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dense index of an avatar within an [`AvatarRegistry`].
pub type AvatarId = usize;

/// Ordered set of avatar names with a bidirectional name/index map.
///
/// Indices are dense `0..len()` and follow insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AvatarRegistry {
    names: Vec<String>,
    index: HashMap<String, AvatarId>,
}

impl AvatarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut registry = Self::new();
        for name in names {
            let name = name.into();
            if registry.index.contains_key(&name) {
                return Err(Error::InvalidInput(format!("duplicate avatar name {name:?}")));
            }
            registry.intern(&name)?;
        }
        Ok(registry)
    }

    /// Returns the index of `name`, registering it on first sight.
    pub fn intern(&mut self, name: &str) -> Result<AvatarId> {
        if let Some(&id) = self.index.get(name) {
            return Ok(id);
        }
        validate_name(name)?;
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn get(&self, name: &str) -> Option<AvatarId> {
        self.index.get(name).copied()
    }

    /// Resolves every name, reporting all unknown ones at once.
    pub fn resolve<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<AvatarId>> {
        let mut ids = Vec::with_capacity(names.len());
        let mut unknown = Vec::new();
        for name in names {
            match self.get(name.as_ref()) {
                Some(id) => ids.push(id),
                None => unknown.push(name.as_ref().to_owned()),
            }
        }
        if unknown.is_empty() {
            Ok(ids)
        } else {
            Err(Error::UnknownAvatar(unknown))
        }
    }

    pub fn name(&self, id: AvatarId) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::InvalidInput("avatar name is empty".into()));
    }
    if name.trim() != name {
        return Err(Error::InvalidInput(format!(
            "avatar name {name:?} has surrounding whitespace"
        )));
    }
    if name.chars().any(char::is_control) {
        return Err(Error::InvalidInput(format!(
            "avatar name {name:?} contains control characters"
        )));
    }
    Ok(())
}
