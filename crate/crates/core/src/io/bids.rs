//! Discovery of `sub-*/[ses-*/]anat/*_T2w.nii[.gz]` stacks and their masks.
//!
//! Masks live in a tree mirroring the raw dataset. The mask file name is
//! obtained from a pattern where `{stem}` is the stack file name without the
//! `_T2w.nii[.gz]` suffix, e.g. `{stem}_mask.nii.gz`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::nifti;
use crate::volume::{BrainMask, Stack};

pub const DEFAULT_MASK_PATTERN: &str = "{stem}_mask.nii.gz";

/// Value of a BIDS entity such as `sub` or `run` in a file name, returned
/// with its key (`"sub-01"`).
pub fn entity(file_name: &str, key: &str) -> Option<String> {
    let prefix = format!("{key}-");
    file_name
        .split(['_', '.'])
        .find(|tok| tok.starts_with(&prefix) && tok.len() > prefix.len())
        .map(str::to_owned)
}

fn t2w_stem(file_name: &str) -> Option<&str> {
    file_name
        .strip_suffix("_T2w.nii.gz")
        .or_else(|| file_name.strip_suffix("_T2w.nii"))
}

/// Run identity of a stack: every entity except the subject, joined by `_`.
fn run_identity(stem: &str) -> String {
    let parts: Vec<&str> = stem
        .split('_')
        .filter(|t| t.contains('-') && !t.starts_with("sub-"))
        .collect();
    if parts.is_empty() {
        "run-1".to_owned()
    } else {
        parts.join("_")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub subject_id: String,
    pub run_id: String,
    pub stack_path: PathBuf,
    pub mask_path: PathBuf,
}

impl DatasetEntry {
    /// Loads the pair, taking identity from the index and checking shapes.
    pub fn load(&self) -> Result<(Stack, BrainMask)> {
        let mut stack = nifti::load_nifti(&self.stack_path)?;
        stack.subject_id = self.subject_id.clone();
        stack.run_id = self.run_id.clone();
        let mask = nifti::load_mask(&self.mask_path)?;
        mask.check_pair(&stack)?;
        Ok((stack, mask))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub entries: Vec<DatasetEntry>,
    /// Stacks for which no mask was found.
    pub unmatched: Vec<PathBuf>,
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn name_of(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn anat_dirs(subject_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for child in sorted_dir(subject_dir)? {
        if !child.is_dir() {
            continue;
        }
        let n = name_of(&child);
        if n == "anat" {
            dirs.push(child);
        } else if n.starts_with("ses-") {
            let anat = child.join("anat");
            if anat.is_dir() {
                dirs.push(anat);
            }
        }
    }
    Ok(dirs)
}

pub fn index_bids(root: &Path, mask_root: &Path, mask_pattern: &str) -> Result<DatasetIndex> {
    let mut index = DatasetIndex::default();
    for sub_dir in sorted_dir(root)? {
        let sub_name = name_of(&sub_dir);
        if !sub_dir.is_dir() || !sub_name.starts_with("sub-") {
            continue;
        }
        for anat in anat_dirs(&sub_dir)? {
            for file in sorted_dir(&anat)? {
                let fname = name_of(&file);
                let Some(stem) = t2w_stem(&fname) else {
                    continue;
                };
                let rel_dir = anat.strip_prefix(root).unwrap_or(&anat);
                let mask_name = mask_pattern.replace("{stem}", stem);
                let mask_path = mask_root.join(rel_dir).join(mask_name);
                if !mask_path.is_file() {
                    index.unmatched.push(file);
                    continue;
                }
                let subject_id = entity(stem, "sub").unwrap_or_else(|| sub_name.clone());
                index.entries.push(DatasetEntry {
                    subject_id,
                    run_id: run_identity(stem),
                    stack_path: file,
                    mask_path,
                });
            }
        }
    }
    index.entries.sort_by(|a, b| {
        (a.subject_id.as_str(), a.run_id.as_str()).cmp(&(b.subject_id.as_str(), b.run_id.as_str()))
    });
    for w in index.entries.windows(2) {
        if w[0].subject_id == w[1].subject_id && w[0].run_id == w[1].run_id {
            return Err(Error::DuplicateRun {
                subject_id: w[0].subject_id.clone(),
                run_id: w[0].run_id.clone(),
            });
        }
    }
    if index.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(index)
}
