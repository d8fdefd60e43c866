use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::FeatureVector;

/// Feature vectors with interned class labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    vectors: Vec<FeatureVector>,
    labels: Vec<usize>,
    names: Vec<String>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: FeatureVector, label: &str) -> Result<()> {
        if let Some(first) = self.vectors.first() {
            v.ensure_dim(first.dim())?;
        }
        let id = match self.names.iter().position(|n| n == label) {
            Some(id) => id,
            None => {
                self.names.push(label.to_string());
                self.names.len() - 1
            }
        };
        self.vectors.push(v);
        self.labels.push(id);
        Ok(())
    }

    pub fn from_pairs<S: AsRef<str>>(
        items: impl IntoIterator<Item = (FeatureVector, S)>,
    ) -> Result<Self> {
        let mut set = Self::new();
        for (v, l) in items {
            set.push(v, l.as_ref())?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(FeatureVector::dim)
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    /// Interned label id of every datum.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.names
    }

    pub fn label_name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn class_count(&self) -> usize {
        let mut seen = vec![false; self.names.len()];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().filter(|&s| s).count()
    }

    pub fn get(&self, i: usize) -> (&FeatureVector, &str) {
        (&self.vectors[i], &self.names[self.labels[i]])
    }

    /// The listed rows, keeping label names and ids of `self`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        LabeledSet {
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            names: self.names.clone(),
        }
    }

    /// Re-expresses this set's labels in the id space of `reference`,
    /// appending names `reference` has not seen.
    pub fn aligned_to(&self, reference: &LabeledSet) -> Self {
        let mut names = reference.names.clone();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, n) in reference.names.iter().enumerate() {
            index.insert(n.as_str(), i);
        }
        let mut map = Vec::with_capacity(self.names.len());
        for n in &self.names {
            let id = match index.get(n.as_str()) {
                Some(&id) => id,
                None => {
                    names.push(n.clone());
                    names.len() - 1
                }
            };
            map.push(id);
        }
        LabeledSet {
            vectors: self.vectors.clone(),
            labels: self.labels.iter().map(|&l| map[l]).collect(),
            names,
        }
    }

    /// Replaces the vectors, keeping labels.
    pub fn map_vectors(
        &self,
        f: impl FnMut(&FeatureVector) -> Result<FeatureVector>,
    ) -> Result<Self> {
        let vectors = self.vectors.iter().map(f).collect::<Result<Vec<_>>>()?;
        if let Some(d) = vectors.first().map(FeatureVector::dim) {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: bad.dim(),
                });
            }
        }
        Ok(LabeledSet {
            vectors,
            labels: self.labels.clone(),
            names: self.names.clone(),
        })
    }

    /// Same vectors with the given label ids.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() || labels.iter().any(|&l| l >= self.names.len()) {
            return Err(Error::InvalidInput(
                "label vector does not fit the set".into(),
            ));
        }
        Ok(LabeledSet {
            vectors: self.vectors.clone(),
            labels,
            names: self.names.clone(),
        })
    }
}
