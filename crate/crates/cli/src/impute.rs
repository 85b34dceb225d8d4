//! `pmc impute`: batch generation of the missing target modality.

use std::collections::HashMap;
use std::path::Path;

use anyhow::Context;
use pmc_core::branches::BranchEnsemble;
use pmc_core::mmg::{concat_available, MmgModel};
use pmc_core::synthdata::{self, MultiModalDataset, Sample, Schema};
use pmc_core::PmcError;

use crate::config::config_error;

fn read(path: &Path, what: &str) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {what} {}: {e}", path.display())))
}

/// Category vectors: mean probabilities of the branches whose modality is
/// present on the targets, or uniform without an ensemble.
fn category_vector(schema: &Schema, ens: Option<&BranchEnsemble>, s: &Sample) -> anyhow::Result<Vec<f64>> {
    let classes = schema.classes;
    let Some(ens) = ens else {
        return Ok(vec![1.0 / classes as f64; classes]);
    };
    let mut sum = vec![0.0; classes];
    let mut n = 0usize;
    for b in &ens.branches {
        let Some(m) = schema.modality_index(&b.modality) else {
            continue;
        };
        if let Some(x) = s.payload(m) {
            for (acc, p) in sum.iter_mut().zip(b.predict(x)?) {
                *acc += p;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(config_error(
            "the ensemble has no branch for any available target modality",
        ));
    }
    Ok(sum.into_iter().map(|v| v / n as f64).collect())
}

pub fn impute_dataset(
    ds: &MultiModalDataset,
    model: &MmgModel,
    ens: Option<&BranchEnsemble>,
) -> anyhow::Result<MultiModalDataset> {
    let schema = ds.schema();
    let [missing] = schema.dropped.as_slice() else {
        return Err(config_error(format!(
            "impute needs exactly one modality missing on the targets, found {}",
            schema.dropped.len()
        )));
    };
    let mb = schema
        .modality_index(missing)
        .expect("dropped modality is in the schema");
    if let Some(e) = ens {
        if e.classes != schema.classes {
            return Err(config_error(format!(
                "ensemble has {} classes, dataset has {}",
                e.classes, schema.classes
            )));
        }
    }
    if model.classes != schema.classes {
        return Err(config_error(format!(
            "generator has {} classes, dataset has {}",
            model.classes, schema.classes
        )));
    }
    let mut generated = HashMap::new();
    for s in ds.target() {
        let x = concat_available(&s.payloads, mb).ok_or(PmcError::Pairing(s.id))?;
        let v = category_vector(schema, ens, s)?;
        generated.insert(s.id, model.generate(&x, &v)?);
    }
    Ok(ds.impute(missing, &generated)?)
}

pub fn run(dataset: &Path, generator: &Path, ensemble: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let ds = synthdata::load(dataset).map_err(|e| config_error(format!("{}: {e}", dataset.display())))?;
    let model = MmgModel::from_checkpoint(&read(generator, "generator")?)?;
    let ens = match ensemble {
        Some(p) => Some(BranchEnsemble::from_checkpoint(&read(p, "ensemble")?)?),
        None => None,
    };
    let imputed = impute_dataset(&ds, &model, ens.as_ref())?;
    synthdata::save(&imputed, out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "imputed `{}` for {} target samples -> {}",
        ds.schema().dropped[0],
        ds.n_target(),
        out.display()
    );
    Ok(())
}
