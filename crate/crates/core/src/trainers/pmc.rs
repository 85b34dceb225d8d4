use std::collections::HashMap;

use super::eval::{evaluate, Accuracies, Split};
use super::metrics::{EpochRow, Phase, RunMetrics};
use super::TrainConfig;
use crate::branches::{BranchEnsemble, BranchGrads, EpochClock, EpochKind, ModalityBranch, TargetTerm, TrainData};
use crate::error::{PmcError, Result};
use crate::selection::{
    make_pseudo_records, mis_select, mss_select, CurriculumState, Origin, PseudoRecord, SelectionSet, Stream,
};
use crate::synthdata::MultiModalDataset;

/// Callbacks fired during training. Both default to no-ops.
pub trait Observer {
    /// After training epoch `epoch` (1-based, warmup included).
    fn epoch_end(&mut self, _epoch: usize, _ensemble: &BranchEnsemble) {}
    /// The selection used by cooperation epoch `epoch`, with the names of the
    /// branches whose predictions produced it.
    fn selection(&mut self, _epoch: usize, _set: &SelectionSet, _selected_by: &[String]) {}
}

impl Observer for () {}

/// Pseudo-label loss of one branch:
/// `(1/N_t) * sum over selected entries of weight * CE(label)`, taking the
/// entries selected for this branch (`Mss(branch_index)`) and all integrated
/// entries. Unselected targets contribute nothing.
pub fn tar_loss(
    branch: &ModalityBranch,
    branch_index: usize,
    selection: &SelectionSet,
    targets: &[(u64, &[f64])],
) -> Result<(f64, BranchGrads)> {
    let index: HashMap<u64, &[f64]> = targets.iter().copied().collect();
    let mut items = Vec::new();
    for e in selection.entries() {
        let x = *index.get(&e.id).ok_or(PmcError::DanglingSelection(e.id))?;
        match e.origin {
            Origin::Mss(m) if m == branch_index => items.push((x, e.label, e.weight)),
            Origin::Mis => items.push((x, e.label, e.weight)),
            Origin::Mss(_) => {}
        }
    }
    if targets.is_empty() {
        return Ok((0.0, BranchGrads::zeros(branch)));
    }
    branch.weighted_class_loss(&items, 1.0 / targets.len() as f64)
}

/// Per-branch, per-target pseudo-label terms of a selection. `selected_by`
/// names the branches the selection's modality indices refer to; integrated
/// entries go to every branch.
pub fn selection_terms(
    selection: &SelectionSet,
    selected_by: &[String],
    branches: &[String],
    target_ids: &[u64],
) -> Result<Vec<Vec<Vec<TargetTerm>>>> {
    let pos: HashMap<u64, usize> = target_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut terms = vec![vec![Vec::new(); target_ids.len()]; branches.len()];
    for e in selection.entries() {
        let t = *pos.get(&e.id).ok_or(PmcError::DanglingSelection(e.id))?;
        let term = TargetTerm {
            label: e.label,
            weight: e.weight,
        };
        match e.origin {
            Origin::Mss(m) => {
                let name = selected_by
                    .get(m)
                    .ok_or_else(|| PmcError::Modality(format!("selection refers to modality {m}")))?;
                if let Some(b) = branches.iter().position(|n| n == name) {
                    terms[b][t].push(term);
                }
            }
            Origin::Mis => terms.iter_mut().for_each(|tb| tb[t].push(term)),
        }
    }
    Ok(terms)
}

/// Ratios and counts of one epoch's selection, indexed by schema modality.
#[derive(Debug, Clone)]
pub(super) struct SelectionInfo {
    pub ratio: Vec<Option<f64>>,
    pub ratio_fused: Option<f64>,
    pub mss: Vec<usize>,
    pub mis: usize,
}

impl SelectionInfo {
    pub fn none(n: usize) -> Self {
        SelectionInfo {
            ratio: vec![None; n],
            ratio_fused: None,
            mss: vec![0; n],
            mis: 0,
        }
    }
}

pub(super) fn branch_names(ens: &BranchEnsemble) -> Vec<String> {
    ens.branches.iter().map(|b| b.modality.clone()).collect()
}

/// Evaluates the ensemble on both splits and lays the result out by schema
/// column. Also returns the source accuracies that drive the schedule.
pub(super) fn epoch_row(
    ens: &BranchEnsemble,
    eval_ds: &MultiModalDataset,
    epoch: usize,
    phase: Phase,
    info: SelectionInfo,
) -> Result<(EpochRow, Accuracies)> {
    let names = eval_ds.schema().modality_names();
    let src = evaluate(ens, eval_ds, Split::Source)?;
    let tgt = evaluate(ens, eval_ds, Split::Target)?;
    let col = |acc: &Accuracies| -> Vec<Option<f64>> {
        names
            .iter()
            .map(|n| acc.modalities.iter().position(|m| m == n).map(|i| acc.per_modality[i]))
            .collect()
    };
    let row = EpochRow {
        epoch,
        phase,
        source_acc: col(&src),
        source_fused: Some(src.fused),
        ratio: info.ratio,
        ratio_fused: info.ratio_fused,
        selected_mss: info.mss,
        selected_mis: info.mis,
        target_acc: col(&tgt),
        target_fused: tgt.fused,
    };
    Ok((row, src))
}

/// Source accuracy of the branch called `name`.
pub(super) fn branch_acc(src: &Accuracies, name: &str) -> Result<f64> {
    src.modalities
        .iter()
        .position(|m| m == name)
        .map(|i| src.per_modality[i])
        .ok_or_else(|| PmcError::Modality(format!("no accuracy for `{name}`")))
}

/// Updates the schedules of the branches present in `records` (and the fused
/// stream when `fused` is set) and selects. Modality indices of the result
/// refer to `record_names`.
#[allow(clippy::too_many_arguments)]
pub(super) fn select_epoch(
    cfg: &TrainConfig,
    schema_names: &[String],
    record_names: &[String],
    records: &[PseudoRecord],
    src: &Accuracies,
    cur: &mut CurriculumState,
    fused: bool,
) -> Result<(SelectionSet, SelectionInfo)> {
    let mut info = SelectionInfo::none(schema_names.len());
    let mut set = SelectionSet::new();
    for (j, name) in record_names.iter().enumerate() {
        let m = schema_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PmcError::Modality(format!("`{name}` not in schema")))?;
        let r = cur.update_proportion(Stream::Modality(m), branch_acc(src, name)?)?;
        info.ratio[m] = Some(r);
        if !cfg.disable_mss {
            let s = mss_select(records, j, r)?;
            info.mss[m] = s.len();
            set = set.merge(s)?;
        }
    }
    if fused {
        let r0 = cur.update_proportion(Stream::Fused, src.fused)?;
        info.ratio_fused = Some(r0);
        if !cfg.disable_mis {
            let s = mis_select(records, r0, cfg.alpha)?;
            info.mis = s.len();
            set = set.merge(s)?;
        }
    }
    Ok((set, info))
}

fn available(data: &TrainData) -> Vec<usize> {
    (0..data.modalities.len())
        .filter(|&m| data.target_x[m].is_some())
        .collect()
}

fn clock(epoch: usize, cfg: &TrainConfig) -> EpochClock {
    EpochClock {
        epoch,
        total_epochs: cfg.total_epochs(),
    }
}

/// Trains branches for every modality present on the targets, `warmup +
/// epochs` epochs of the given kind, recording metrics after each.
fn train_baseline(
    ds: &MultiModalDataset,
    cfg: &TrainConfig,
    kind: EpochKind,
    method: &str,
    obs: &mut dyn Observer,
) -> Result<(BranchEnsemble, RunMetrics)> {
    cfg.validate()?;
    let data = TrainData::from_dataset(ds)?;
    let mut ens = BranchEnsemble::for_data(&data, &available(&data), cfg.branch_config(), cfg.seed)?;
    let names = ds.schema().modality_names();
    let mut metrics = RunMetrics::new(method, cfg.seed, names.clone());
    for e in 0..cfg.total_epochs() {
        ens.train_epoch(&data, kind, clock(e, cfg), None)?;
        let phase = if e < cfg.warmup_epochs {
            Phase::Warmup
        } else {
            Phase::Cooperation
        };
        let (row, _) = epoch_row(&ens, ds, e + 1, phase, SelectionInfo::none(names.len()))?;
        metrics.rows.push(row);
        obs.epoch_end(e + 1, &ens);
    }
    Ok((ens, metrics))
}

/// Source-only baseline: classification loss on labeled source data only.
pub fn train_source_only(ds: &MultiModalDataset, cfg: &TrainConfig) -> Result<(BranchEnsemble, RunMetrics)> {
    train_baseline(ds, cfg, EpochKind::SupervisedOnly, "source-only", &mut ())
}

/// Adversarial baseline with late fusion; modalities missing on the targets
/// are left out.
pub fn train_dann(ds: &MultiModalDataset, cfg: &TrainConfig) -> Result<(BranchEnsemble, RunMetrics)> {
    train_dann_with(ds, cfg, &mut ())
}

pub fn train_dann_with(
    ds: &MultiModalDataset,
    cfg: &TrainConfig,
    obs: &mut dyn Observer,
) -> Result<(BranchEnsemble, RunMetrics)> {
    train_baseline(ds, cfg, EpochKind::Adversarial, "dann", obs)
}

/// Progressive modality cooperation: adversarial warmup, then per epoch
/// pseudo records, schedule update, selection and one retraining pass with
/// source, pseudo-label and adversarial losses.
pub fn train_pmc(ds: &MultiModalDataset, cfg: &TrainConfig) -> Result<(BranchEnsemble, RunMetrics)> {
    train_pmc_with(ds, cfg, &mut ())
}

pub fn train_pmc_with(
    ds: &MultiModalDataset,
    cfg: &TrainConfig,
    obs: &mut dyn Observer,
) -> Result<(BranchEnsemble, RunMetrics)> {
    cfg.validate()?;
    if !ds.schema().dropped.is_empty() {
        return Err(PmcError::Unsupported(
            "a modality is missing on the targets; use the privileged-information trainer".into(),
        ));
    }
    let data = TrainData::from_dataset(ds)?;
    let all: Vec<usize> = (0..data.modalities.len()).collect();
    let mut ens = BranchEnsemble::for_data(&data, &all, cfg.branch_config(), cfg.seed)?;
    let names = ds.schema().modality_names();
    let mut metrics = RunMetrics::new("pmc", cfg.seed, names.clone());

    let mut src = evaluate(&ens, ds, Split::Source)?;
    for e in 0..cfg.warmup_epochs {
        ens.train_dann_epoch(&data, clock(e, cfg))?;
        let (row, s) = epoch_row(&ens, ds, e + 1, Phase::Warmup, SelectionInfo::none(names.len()))?;
        metrics.rows.push(row);
        src = s;
        obs.epoch_end(e + 1, &ens);
    }

    let mut cur = CurriculumState::new(names.len(), cfg.epochs, cfg.alpha)?;
    for k in 0..cfg.epochs {
        let epoch = cfg.warmup_epochs + k;
        let records = make_pseudo_records(&ens, ds.schema(), ds.target(), cfg.fused_weight)?;
        let (set, info) = select_epoch(cfg, &names, &names, &records, &src, &mut cur, true)?;
        obs.selection(epoch + 1, &set, &names);
        let terms = selection_terms(&set, &names, &names, &data.target_ids)?;
        ens.train_epoch(&data, EpochKind::Adversarial, clock(epoch, cfg), Some(&terms))?;
        let (row, s) = epoch_row(&ens, ds, epoch + 1, Phase::Cooperation, info)?;
        metrics.rows.push(row);
        src = s;
        obs.epoch_end(epoch + 1, &ens);
    }
    Ok((ens, metrics))
}
