use std::collections::{BTreeMap, HashMap};

use super::{Result, Tensor, TensorError};

/// Stable handle of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which parameter set a variable tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Features of learnable individuals.
    Individual,
    /// Weights of learnable functions.
    Function,
    /// Weights of learnable predicates.
    Predicate,
    /// Anything else, e.g. the truth-value logits of collective inference.
    Free,
}

impl ParamKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            ParamKind::Individual => 0,
            ParamKind::Function => 1,
            ParamKind::Predicate => 2,
            ParamKind::Free => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ParamKind::Individual,
            1 => ParamKind::Function,
            2 => ParamKind::Predicate,
            3 => ParamKind::Free,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Owned, named variable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, kind, value });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn set_kind(&mut self, id: ParamId, kind: ParamKind) {
        self.entries[id.0].kind = kind;
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn ids_of_kind(&self, kind: ParamKind) -> Vec<ParamId> {
        self.iter().filter(|(_, e)| e.kind == kind).map(|(id, _)| id).collect()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Overwrites values by name from checkpoint entries. Every stored
    /// parameter must be present with an identical shape.
    pub fn load_entries(&mut self, entries: &[super::CheckpointEntry]) -> Result<()> {
        for e in entries {
            let Some(id) = self.find(&e.name) else {
                continue;
            };
            let slot = &mut self.entries[id.0].value;
            if slot.shape() != e.value.shape() {
                return Err(TensorError::Checkpoint(format!(
                    "parameter `{}` has shape {:?} in the checkpoint, {:?} in the model",
                    e.name,
                    e.value.shape(),
                    slot.shape()
                )));
            }
            *slot = e.value.clone();
        }
        for entry in &self.entries {
            if !entries.iter().any(|e| e.name == entry.name) {
                return Err(TensorError::Checkpoint(format!(
                    "parameter `{}` missing from checkpoint",
                    entry.name
                )));
            }
        }
        Ok(())
    }

    pub fn to_entries(&self) -> Vec<super::CheckpointEntry> {
        self.entries
            .iter()
            .map(|e| super::CheckpointEntry {
                name: e.name.clone(),
                kind: e.kind,
                value: e.value.clone(),
            })
            .collect()
    }
}

/// Gradients of a scalar with respect to parameters, keyed by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientTape {
    grads: BTreeMap<ParamId, Tensor>,
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.grads.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: Tensor) {
        match self.grads.get_mut(&id) {
            Some(acc) => {
                for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                    *a += g;
                }
            }
            None => {
                self.grads.insert(id, grad);
            }
        }
    }

    pub(crate) fn ensure(&mut self, id: ParamId, shape: &[usize]) {
        self.grads.entry(id).or_insert_with(|| Tensor::zeros(shape));
    }

    /// `self += scale * other`, entry by entry.
    pub fn add_scaled(&mut self, other: &GradientTape, scale: f64) {
        for (id, g) in other.iter() {
            let scaled = if scale == 1.0 { g.clone() } else { g.map(|x| x * scale) };
            self.accumulate(id, scaled);
        }
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.grads.values().all(|g| g.data().iter().all(|x| x.is_finite()))
    }
}
