use std::path::Path;

use anyhow::Context;
use pmc_core::synthdata::{self, BenchmarkSpec};

use crate::config::config_error;

pub fn load_spec(path: &Path) -> anyhow::Result<BenchmarkSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read spec {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_error(format!("invalid benchmark spec {}: {e}", path.display())))
}

pub fn run(spec: Option<&Path>, seed: Option<u64>, drop: Option<&str>, out: &Path) -> anyhow::Result<()> {
    let mut spec = match spec {
        Some(p) => load_spec(p)?,
        None => BenchmarkSpec::blobs_mm2(1),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let ds = synthdata::generate_benchmark(&spec)?;
    let ds = match drop {
        Some(name) => ds.drop_modality(name)?,
        None => ds,
    };
    synthdata::save(&ds, out).with_context(|| format!("writing {}", out.display()))?;

    println!("wrote {}", out.display());
    println!(
        "seed {}  classes {}  source {}  target {}",
        spec.seed,
        spec.classes,
        ds.n_source(),
        ds.n_target()
    );
    for m in &spec.modalities {
        let t = &m.shift.translation;
        let translation = if t.is_empty() {
            "none".to_string()
        } else if t.iter().all(|v| *v == t[0]) {
            format!("{} per coordinate", t[0])
        } else {
            format!("{t:?}")
        };
        let dropped = if ds.schema().dropped.contains(&m.name) {
            "  (dropped on target)"
        } else {
            ""
        };
        println!(
            "  {}: dim {}  separation {}  noise {}  shift rotation {} deg, scale {}, translation {}{}",
            m.name, m.dim, m.separation, m.noise, m.shift.rotation_deg, m.shift.scale, translation, dropped
        );
    }
    Ok(())
}
