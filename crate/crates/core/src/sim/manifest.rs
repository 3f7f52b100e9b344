//! Line-delimited JSON scene manifests.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{EchoPathChange, RirKind, SceneConfig, ScenePlan, Subset};
use crate::error::{AecError, Result};

/// One manifest line: how a clip was generated and where its WAVs live
/// (paths relative to the manifest's directory).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneRecord {
    pub clip_id: String,
    pub subset: Subset,
    pub ser_db: f64,
    pub far_len: f64,
    pub near_len: f64,
    pub near_offset: f64,
    pub switch_time: Option<f64>,
    pub rir_seed: u64,
    pub mix_seed: u64,
    pub far_source: u64,
    pub near_source: u64,
    pub rir_kind: RirKind,
    pub rir_len: usize,
    pub far: String,
    pub near: String,
    pub echo: String,
    pub mic: String,
}

impl SceneRecord {
    pub fn new(clip_id: &str, plan: &ScenePlan) -> Self {
        let c = &plan.config;
        SceneRecord {
            clip_id: clip_id.to_owned(),
            subset: plan.subset,
            ser_db: c.ser_db,
            far_len: c.far_len,
            near_len: c.near_len,
            near_offset: c.near_offset,
            switch_time: c.epc.map(|e| e.switch_time),
            rir_seed: c.rir_seed,
            mix_seed: c.mix_seed,
            far_source: plan.far_source,
            near_source: plan.near_source,
            rir_kind: c.rir_kind,
            rir_len: c.rir_len,
            far: format!("{clip_id}_far.wav"),
            near: format!("{clip_id}_near.wav"),
            echo: format!("{clip_id}_echo.wav"),
            mic: format!("{clip_id}_mic.wav"),
        }
    }

    pub fn plan(&self) -> ScenePlan {
        ScenePlan {
            subset: self.subset,
            far_source: self.far_source,
            near_source: self.near_source,
            config: SceneConfig {
                ser_db: self.ser_db,
                far_len: self.far_len,
                near_len: self.near_len,
                near_offset: self.near_offset,
                epc: self.switch_time.map(|t| EchoPathChange { switch_time: t }),
                rir_seed: self.rir_seed,
                mix_seed: self.mix_seed,
                rir_kind: self.rir_kind,
                rir_len: self.rir_len,
            },
        }
    }
}

pub fn write_manifest(path: &Path, records: &[SceneRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| AecError::io(path, e))?;
    f.write_all(&out).map_err(|e| AecError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<SceneRecord>> {
    let f = std::fs::File::open(path).map_err(|e| AecError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| AecError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| AecError::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::dataset::EvalSetConfig;

    #[test]
    fn records_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let records: Vec<_> = Subset::ALL
            .iter()
            .map(|&s| {
                let plan = ScenePlan::evaluation(s, 0, 3, &EvalSetConfig::default());
                SceneRecord::new(&format!("{}_0", s.name()), &plan)
            })
            .collect();
        write_manifest(&path, &records).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, records);
        assert_eq!(back[3].plan(), ScenePlan::evaluation(Subset::DtEpc, 0, 3, &EvalSetConfig::default()));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(3).unwrap().contains("\"subset\":\"DT-EPC\""));
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"clip_id\": 3}\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(AecError::Format { .. })));
    }
}
