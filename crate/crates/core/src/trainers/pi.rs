use std::collections::HashMap;

use super::eval::{evaluate, Split};
use super::metrics::{Phase, RunMetrics};
use super::pmc::{branch_names, epoch_row, select_epoch, selection_terms, Observer, SelectionInfo};
use super::TrainConfig;
use crate::branches::{BranchEnsemble, EpochClock, EpochKind, ModalityBranch, TrainData};
use crate::error::{PmcError, Result};
use crate::mmg::{concat_available, mmg_inputs, train_mmg, MmgModel, ModalityGenerator};
use crate::selection::{make_pseudo_records, CurriculumState, PseudoRecord};
use crate::synthdata::MultiModalDataset;

/// Result of a privileged-information run.
#[derive(Debug, Clone)]
pub struct PiOutcome {
    pub ensemble: BranchEnsemble,
    /// The trained generator; `None` when an external one was supplied.
    pub generator: Option<MmgModel>,
    pub metrics: RunMetrics,
    /// The dataset with the final generated payloads filled in.
    pub imputed: MultiModalDataset,
}

fn missing_modality(ds: &MultiModalDataset) -> Result<usize> {
    let schema = ds.schema();
    match schema.dropped.as_slice() {
        [one] => schema
            .modality_index(one)
            .ok_or_else(|| PmcError::Schema(format!("dropped modality `{one}` not in schema"))),
        [] => Err(PmcError::Unsupported("no modality is missing on the targets".into())),
        many => Err(PmcError::Unsupported(format!(
            "exactly one missing modality is supported, found {}",
            many.len()
        ))),
    }
}

/// Trains the generator on source pairs, freezes it, and runs the
/// cooperation loop with generated target payloads.
pub fn train_pmc_pi(ds: &MultiModalDataset, cfg: &TrainConfig) -> Result<PiOutcome> {
    cfg.validate()?;
    let mb = missing_modality(ds)?;
    let name = ds.schema().modalities[mb].name.clone();
    let (pairs, targets) = mmg_inputs(ds, &name)?;
    let model = train_mmg(&pairs, &targets, ds.schema().classes, &cfg.mmg_config(), cfg.seed)?;
    let mut out = train_pmc_pi_with(ds, cfg, &model, &mut ())?;
    out.generator = Some(model);
    Ok(out)
}

/// The cooperation loop with a given (frozen) generator.
pub fn train_pmc_pi_with(
    ds: &MultiModalDataset,
    cfg: &TrainConfig,
    generator: &dyn ModalityGenerator,
    obs: &mut dyn Observer,
) -> Result<PiOutcome> {
    cfg.validate()?;
    let mb = missing_modality(ds)?;
    let schema = ds.schema();
    let names = schema.modality_names();
    let mut data = TrainData::from_dataset(ds)?;
    let avail: Vec<usize> = (0..names.len()).filter(|&m| m != mb).collect();
    let bcfg = cfg.branch_config();
    let mut ens = BranchEnsemble::for_data(&data, &avail, bcfg.clone(), cfg.seed)?;
    let mut metrics = RunMetrics::new("pmc-pi", cfg.seed, names.clone());
    let clock = |epoch| EpochClock {
        epoch,
        total_epochs: cfg.total_epochs(),
    };

    // available-modality adversarial warmup
    let mut src = evaluate(&ens, ds, Split::Source)?;
    for e in 0..cfg.warmup_epochs {
        ens.train_dann_epoch(&data, clock(e))?;
        let (row, s) = epoch_row(&ens, ds, e + 1, Phase::Warmup, SelectionInfo::none(names.len()))?;
        metrics.rows.push(row);
        src = s;
        obs.epoch_end(e + 1, &ens);
    }

    // initial selection: modality-specific only
    let mut cur = CurriculumState::new(names.len(), cfg.epochs, cfg.alpha)?;
    let mut records: Vec<PseudoRecord> = make_pseudo_records(&ens, schema, ds.target(), cfg.fused_weight)?;
    let mut record_names = branch_names(&ens);
    let (mut set, mut info) = select_epoch(cfg, &names, &record_names, &records, &src, &mut cur, false)?;

    ens.branches.insert(
        mb,
        ModalityBranch::new(&names[mb], data.dim(mb), data.classes, &bcfg, cfg.seed)?,
    );
    let ens_names = branch_names(&ens);

    let mut imputed = ds.clone();
    for k in 0..cfg.epochs {
        let epoch = cfg.warmup_epochs + k;
        let mut generated = HashMap::with_capacity(records.len());
        let mut rows = Vec::with_capacity(records.len());
        for (s, rec) in ds.target().zip(&records) {
            debug_assert_eq!(s.id, rec.id);
            let x = concat_available(&s.payloads, mb)
                .ok_or_else(|| PmcError::Modality(format!("target {} lacks an available modality", s.id)))?;
            let g = generator.generate_for(s.id, &x, &rec.fused)?;
            rows.push(g.clone());
            generated.insert(s.id, g);
        }
        imputed = ds.impute(&names[mb], &generated)?;
        data.target_x[mb] = Some(rows);

        obs.selection(epoch + 1, &set, &record_names);
        let terms = selection_terms(&set, &record_names, &ens_names, &data.target_ids)?;
        ens.train_epoch(&data, EpochKind::Adversarial, clock(epoch), Some(&terms))?;
        let (row, s) = epoch_row(&ens, &imputed, epoch + 1, Phase::Cooperation, info.clone())?;
        metrics.rows.push(row);
        src = s;
        obs.epoch_end(epoch + 1, &ens);

        if k + 1 < cfg.epochs {
            records = make_pseudo_records(&ens, imputed.schema(), imputed.target(), cfg.fused_weight)?;
            record_names = ens_names.clone();
            (set, info) = select_epoch(cfg, &names, &record_names, &records, &src, &mut cur, true)?;
        }
    }

    Ok(PiOutcome {
        ensemble: ens,
        generator: None,
        metrics,
        imputed,
    })
}
