use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::autodiff::{Matrix, NodeId, Tape};
use crate::error::{Error, Result};

/// Gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, Matrix>;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Matrix,
    pub trainable: bool,
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix, trainable: bool) {
        self.entries
            .insert(name.into(), ParamEntry { value, trainable });
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(e) => {
                e.trainable = trainable;
                Ok(())
            }
            None => Err(Error::Contract(format!("no parameter named `{name}`"))),
        }
    }

    /// Moves every entry of `other` into this store.
    pub fn extend(&mut self, other: ParamStore) {
        self.entries.extend(other.entries);
    }

    /// Entries whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// Checks that `shapes` and this store agree exactly, naming the first
    /// offending entry otherwise.
    pub fn check_shapes(&self, shapes: &[(String, usize, usize)]) -> Result<()> {
        for (name, rows, cols) in shapes {
            match self.entries.get(name) {
                None => {
                    return Err(Error::Contract(format!("missing parameter `{name}`")));
                }
                Some(e) if e.value.dim() != (*rows, *cols) => {
                    return Err(Error::Contract(format!(
                        "parameter `{name}` has shape {:?}, architecture expects {:?}",
                        e.value.dim(),
                        (rows, cols)
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Places every entry on the tape. With `track` set, trainable entries
    /// become gradient-tracked leaves; everything else enters as a constant.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> BoundParams {
        let ids = self
            .entries
            .iter()
            .map(|(name, e)| {
                let id = if track && e.trainable {
                    tape.variable(e.value.clone())
                } else {
                    tape.constant(e.value.clone())
                };
                (name.clone(), id)
            })
            .collect();
        BoundParams { ids }
    }
}

/// Tape node ids for the entries of a [`ParamStore`].
#[derive(Debug, Clone, Default)]
pub struct BoundParams {
    ids: IndexMap<String, NodeId>,
}

impl FromIterator<(String, NodeId)> for BoundParams {
    fn from_iter<I: IntoIterator<Item = (String, NodeId)>>(iter: I) -> Self {
        BoundParams {
            ids: iter.into_iter().collect(),
        }
    }
}

impl BoundParams {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter `{name}` is not bound")))
    }

    pub fn merge(&mut self, other: BoundParams) {
        self.ids.extend(other.ids);
    }

    /// Gradients of the tracked entries after a backward sweep.
    pub fn gradients(&self, tape: &Tape) -> GradMap {
        self.ids
            .iter()
            .filter(|(_, id)| tape.requires_grad(**id))
            .map(|(name, id)| (name.clone(), tape.grad(*id).clone()))
            .collect()
    }
}
