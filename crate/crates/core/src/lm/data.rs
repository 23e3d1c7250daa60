//! JSONL training records and the synthetic demo set.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::PreparedSample;
use crate::config::{Modality, PipelineConfig};
use crate::error::{Error, Result};
use crate::init::stream;
use crate::omct;
use crate::pipeline::{FrontEnd, OrganRequest};
use crate::prng::Prng;
use crate::tensor::Tensor;
use crate::volume::OrganMask;

/// One line of a training file. Paths are relative to the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub volume_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organ: Option<u8>,
    pub modality: Modality,
    pub prompt: String,
    pub answer: String,
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_records(records: &[Record], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load inputs and masks and precompute the frozen visual path for every record.
pub fn prepare_records(front: &FrontEnd, records: &[Record], base: &Path) -> Result<Vec<PreparedSample>> {
    records
        .iter()
        .map(|r| {
            let input = omct::read(base.join(&r.volume_path))?;
            let mask = match (&r.mask_path, r.organ) {
                (Some(p), Some(_)) => Some(OrganMask::from_tensor(&omct::read(base.join(p))?)?),
                (None, None) => None,
                _ => {
                    return Err(Error::Validation(format!(
                        "record for {} needs both mask_path and organ, or neither",
                        r.volume_path
                    )))
                }
            };
            let req = mask.as_ref().map(|m| OrganRequest {
                mask: m,
                organ: r.organ.unwrap_or(0),
            });
            PreparedSample::prepare(front, &input, r.modality, req, r.prompt.as_bytes(), r.answer.as_bytes())
        })
        .collect()
}

/// Small pipeline used by the demo set: `8` visual tokens per volume, `16` per slice.
pub fn demo_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        patch: 8,
        d_v: 32,
        d_z: 8,
        d_y: 8,
        d_x: 8,
        d_f: 256,
        m_volume: 2,
        seed,
        l_c_slice: 4,
        l_c_volume: 4,
        max_seq_len: 256,
    }
}

/// In-memory demo pair.
#[derive(Clone, Debug)]
pub struct DemoPair {
    pub input: Tensor,
    pub modality: Modality,
    pub mask: OrganMask,
    pub organ: u8,
    pub prompt: &'static str,
    pub answer: &'static str,
}

const DEMO_QA: [(Modality, u8, &str, &str); 8] = [
    (Modality::Volume, 1, "organ?", "liver"),
    (Modality::Volume, 2, "lesion?", "yes"),
    (Modality::Slice, 3, "structure?", "spine"),
    (Modality::Volume, 4, "kidneys?", "two"),
    (Modality::Slice, 5, "modality?", "ct"),
    (Modality::Volume, 6, "mass side?", "left"),
    (Modality::Slice, 7, "contrast?", "no"),
    (Modality::Volume, 8, "below diaphragm?", "stomach"),
];

/// Eight question/answer pairs over synthetic scans: smooth noise plus one bright
/// rectangular organ per scan, labelled in the mask.
pub fn demo_pairs(seed: u64) -> Result<Vec<DemoPair>> {
    let mut rng = Prng::derive(seed, stream::SYNTHETIC);
    DEMO_QA
        .iter()
        .map(|&(modality, organ, prompt, answer)| {
            let dims = match modality {
                Modality::Volume => [6, 32, 32],
                Modality::Slice => [1, 32, 32],
            };
            let n = dims.iter().product();
            let mut data = rng.uniform(n, 0.0, 0.3)?;
            let mut labels = vec![0u8; n];
            let (y0, x0) = (rng.next_below(20) as usize, rng.next_below(20) as usize);
            let (h, w) = (4 + rng.next_below(9) as usize, 4 + rng.next_below(9) as usize);
            let level = rng.uniform_one(0.5, 1.0);
            for z in 0..dims[0] {
                for y in y0..y0 + h {
                    for x in x0..x0 + w {
                        let i = (z * 32 + y) * 32 + x;
                        data[i] = level;
                        labels[i] = organ;
                    }
                }
            }
            Ok(DemoPair {
                input: Tensor::from_vec(&dims, data)?,
                modality,
                mask: OrganMask::new(dims, labels)?,
                organ,
                prompt,
                answer,
            })
        })
        .collect()
}

pub fn prepare_demo(front: &FrontEnd, pairs: &[DemoPair]) -> Result<Vec<PreparedSample>> {
    pairs
        .iter()
        .map(|p| {
            PreparedSample::prepare(
                front,
                &p.input,
                p.modality,
                Some(OrganRequest {
                    mask: &p.mask,
                    organ: p.organ,
                }),
                p.prompt.as_bytes(),
                p.answer.as_bytes(),
            )
        })
        .collect()
}

/// Write the demo set as OMCT inputs and masks plus `data.jsonl`; returns the JSONL path.
pub fn write_demo(dir: &Path, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for (i, p) in demo_pairs(seed)?.iter().enumerate() {
        let vol = format!("scan_{i}.omct");
        let mask = format!("mask_{i}.omct");
        omct::write(&p.input, dir.join(&vol))?;
        omct::write(&p.mask.to_tensor(), dir.join(&mask))?;
        records.push(Record {
            volume_path: vol,
            mask_path: Some(mask),
            organ: Some(p.organ),
            modality: p.modality,
            prompt: p.prompt.into(),
            answer: p.answer.into(),
        });
    }
    let path = dir.join("data.jsonl");
    write_records(&records, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_pairs_are_deterministic() {
        let a = demo_pairs(3).unwrap();
        let b = demo_pairs(3).unwrap();
        assert_eq!(a.len(), 8);
        for (x, y) in a.iter().zip(&b) {
            assert!(x.input.bit_eq(&y.input));
            assert_eq!(x.mask, y.mask);
        }
    }

    #[test]
    fn demo_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_demo(dir.path(), 5).unwrap();
        let records = read_records(&path).unwrap();
        assert_eq!(records.len(), 8);
        let front = FrontEnd::new(demo_config(5)).unwrap();
        let from_files = prepare_records(&front, &records, dir.path()).unwrap();
        let in_memory = prepare_demo(&front, &demo_pairs(5).unwrap()).unwrap();
        assert_eq!(from_files, in_memory);
        assert_eq!(from_files[0].tokens.rows, 8);
        assert_eq!(from_files[2].tokens.rows, 16);
    }

    #[test]
    fn bad_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(&path, "{\"volume_path\":\"a\",\"modality\":\"slice\",\"prompt\":\"p\",\"answer\":\"a\"}\n{oops}\n").unwrap();
        let err = read_records(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn mask_without_organ_rejected() {
        let front = FrontEnd::new(demo_config(0)).unwrap();
        let r = Record {
            volume_path: "x.omct".into(),
            mask_path: Some("m.omct".into()),
            organ: None,
            modality: Modality::Slice,
            prompt: "p".into(),
            answer: "a".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        omct::write(&Tensor::new(&[1, 32, 32], 0.0).unwrap(), dir.path().join("x.omct")).unwrap();
        omct::write(&Tensor::new(&[1, 32, 32], 0.0).unwrap(), dir.path().join("m.omct")).unwrap();
        assert!(matches!(prepare_records(&front, &[r], dir.path()), Err(Error::Validation(_))));
    }
}
