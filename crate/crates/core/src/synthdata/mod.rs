//! Multi-modality datasets: types, a seeded synthetic benchmark generator,
//! and the text file format.

mod format;
mod generate;

pub use format::{load, parse, render, save};
pub use generate::{generate_benchmark, BenchmarkSpec, Coupling, ModalitySpec, ShiftSpec};

use serde::{Deserialize, Serialize};

use crate::error::{PmcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Domain label used by the domain classifiers: 0 = source, 1 = target.
    pub fn label(self) -> u8 {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySchema {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub classes: usize,
    pub modalities: Vec<ModalitySchema>,
    /// Modalities removed from every target sample.
    pub dropped: Vec<String>,
}

impl Schema {
    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m.name == name)
    }

    pub fn modality_names(&self) -> Vec<String> {
        self.modalities.iter().map(|m| m.name.clone()).collect()
    }

    pub fn is_dropped(&self, idx: usize) -> bool {
        self.dropped.iter().any(|d| *d == self.modalities[idx].name)
    }

    fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(PmcError::Schema("category count must be positive".into()));
        }
        if self.modalities.is_empty() {
            return Err(PmcError::Schema("schema needs at least one modality".into()));
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.dim == 0 {
                return Err(PmcError::Schema(format!("modality `{}` has zero dimension", m.name)));
            }
            if !valid_name(&m.name) {
                return Err(PmcError::Schema(format!("invalid modality name `{}`", m.name)));
            }
            if self.modalities[..i].iter().any(|o| o.name == m.name) {
                return Err(PmcError::Schema(format!("duplicate modality `{}`", m.name)));
            }
        }
        for d in &self.dropped {
            if self.modality_index(d).is_none() {
                return Err(PmcError::Schema(format!("dropped modality `{d}` not in schema")));
            }
        }
        Ok(())
    }
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Ground-truth category of a target sample. Readable only through the
/// evaluation path (see [`crate::trainers::evaluate`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HiddenLabel(Option<usize>);

impl HiddenLabel {
    pub(crate) fn reveal(&self, _access: &crate::trainers::EvalAccess) -> Option<usize> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub domain: Domain,
    /// Present iff the sample is from the source domain.
    pub label: Option<usize>,
    hidden: HiddenLabel,
    /// Indexed like `Schema::modalities`; `None` when the payload is absent.
    pub payloads: Vec<Option<Vec<f64>>>,
}

impl Sample {
    pub fn source(id: u64, label: usize, payloads: Vec<Option<Vec<f64>>>) -> Self {
        Sample {
            id,
            domain: Domain::Source,
            label: Some(label),
            hidden: HiddenLabel(None),
            payloads,
        }
    }

    pub fn target(id: u64, truth: Option<usize>, payloads: Vec<Option<Vec<f64>>>) -> Self {
        Sample {
            id,
            domain: Domain::Target,
            label: None,
            hidden: HiddenLabel(truth),
            payloads,
        }
    }

    pub fn hidden(&self) -> &HiddenLabel {
        &self.hidden
    }

    pub fn payload(&self, modality: usize) -> Option<&[f64]> {
        self.payloads.get(modality).and_then(|p| p.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalDataset {
    schema: Schema,
    samples: Vec<Sample>,
}

impl MultiModalDataset {
    pub fn new(schema: Schema, samples: Vec<Sample>) -> Result<Self> {
        let ds = MultiModalDataset { schema, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn source(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.domain == Domain::Source)
    }

    pub fn target(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.domain == Domain::Target)
    }

    pub fn n_source(&self) -> usize {
        self.source().count()
    }

    pub fn n_target(&self) -> usize {
        self.target().count()
    }

    /// Schema conformance: dims, labels, unique ids and the modality
    /// presence rules for both domains.
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let mut ids = std::collections::HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if !ids.insert(s.id) {
                return Err(PmcError::Schema(format!("duplicate sample id {}", s.id)));
            }
            if s.payloads.len() != self.schema.modalities.len() {
                return Err(PmcError::Schema(format!(
                    "sample {} has {} payload slots, schema has {}",
                    s.id,
                    s.payloads.len(),
                    self.schema.modalities.len()
                )));
            }
            match s.domain {
                Domain::Source => match s.label {
                    Some(y) if y < self.schema.classes => {}
                    _ => return Err(PmcError::Schema(format!("source sample {} lacks a valid label", s.id))),
                },
                Domain::Target => {
                    if s.label.is_some() {
                        return Err(PmcError::Schema(format!("target sample {} exposes a label", s.id)));
                    }
                    if matches!(s.hidden.0, Some(y) if y >= self.schema.classes) {
                        return Err(PmcError::Schema(format!(
                            "target sample {} has out-of-range truth",
                            s.id
                        )));
                    }
                }
            }
            for (m, (p, ms)) in s.payloads.iter().zip(&self.schema.modalities).enumerate() {
                let must_exist = s.domain == Domain::Source || !self.schema.is_dropped(m);
                match p {
                    Some(v) => {
                        if !must_exist {
                            return Err(PmcError::Schema(format!(
                                "target sample {} carries dropped modality `{}`",
                                s.id, ms.name
                            )));
                        }
                        if v.len() != ms.dim {
                            return Err(PmcError::Schema(format!(
                                "sample {} modality `{}` has dim {}, expected {}",
                                s.id,
                                ms.name,
                                v.len(),
                                ms.dim
                            )));
                        }
                    }
                    None if must_exist => {
                        return Err(PmcError::Schema(format!(
                            "sample {} is missing modality `{}`",
                            s.id, ms.name
                        )))
                    }
                    None => {}
                }
            }
        }
        Ok(())
    }

    /// Removes `modality` from every target sample; source samples keep it.
    pub fn drop_modality(&self, modality: &str) -> Result<Self> {
        let idx = self
            .schema
            .modality_index(modality)
            .ok_or_else(|| PmcError::Schema(format!("unknown modality `{modality}`")))?;
        if self.schema.is_dropped(idx) {
            return Err(PmcError::Schema(format!("modality `{modality}` already dropped")));
        }
        let mut out = self.clone();
        out.schema.dropped.push(modality.to_string());
        for s in out.samples.iter_mut().filter(|s| s.domain == Domain::Target) {
            s.payloads[idx] = None;
        }
        out.validate()?;
        Ok(out)
    }

    /// Fills a dropped modality on the target samples with supplied payloads,
    /// e.g. generated ones. Every target id must be covered.
    pub fn impute(&self, modality: &str, payloads: &std::collections::HashMap<u64, Vec<f64>>) -> Result<Self> {
        let idx = self
            .schema
            .modality_index(modality)
            .ok_or_else(|| PmcError::Schema(format!("unknown modality `{modality}`")))?;
        if !self.schema.is_dropped(idx) {
            return Err(PmcError::Schema(format!("modality `{modality}` is not missing")));
        }
        let mut out = self.clone();
        out.schema.dropped.retain(|d| d != modality);
        for s in out.samples.iter_mut().filter(|s| s.domain == Domain::Target) {
            let p = payloads
                .get(&s.id)
                .ok_or_else(|| PmcError::Modality(format!("no imputed payload for target {}", s.id)))?;
            s.payloads[idx] = Some(p.clone());
        }
        out.validate()?;
        Ok(out)
    }
}
