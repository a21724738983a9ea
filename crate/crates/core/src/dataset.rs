//! Dataset container: a manifest plus one JSON case file per instance,
//! optionally paired with a solution file.
//!
//! Layout:
//!   <dir>/manifest.json
//!   <dir>/cases/NNNNNN.json
//!   <dir>/solutions/NNNNNN.json   (when solutions are included)

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::casefile::{parse_case, serialize_case, CaseDocument};
use crate::error::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.test + self.validation
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetManifest {
    pub name: String,
    pub case_count: usize,
    pub split: SplitCounts,
    pub seed: u64,
    pub generator_params: serde_json::Value,
    /// Whether solutions/NNNNNN.json files accompany the cases. Unsolved
    /// case files store flat-start voltages.
    pub solutions_included: bool,
}

/// Which split a case index belongs to: `train` first, then `validation`,
/// then `test`, in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl DatasetManifest {
    pub fn split_of(&self, index: usize) -> Split {
        if index < self.split.train {
            Split::Train
        } else if index < self.split.train + self.split.validation {
            Split::Validation
        } else {
            Split::Test
        }
    }

    pub fn indices_of(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.split.train,
            Split::Validation => self.split.train..self.split.train + self.split.validation,
            Split::Test => self.split.train + self.split.validation..self.case_count,
        }
    }
}

pub fn case_file_name(index: usize) -> String {
    format!("{index:06}.json")
}

/// Open a dataset directory: validates the manifest against the case files
/// and returns a lazy, name-ordered case stream.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, CaseStream), DatasetError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(DatasetError::ManifestMissing { dir: dir.display().to_string() });
    }
    let mut text = String::new();
    fs::File::open(&manifest_path)?.read_to_string(&mut text)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::BadManifest(e.to_string()))?;
    if manifest.split.total() != manifest.case_count {
        return Err(DatasetError::BadManifest(format!(
            "split counts sum to {} but caseCount is {}",
            manifest.split.total(),
            manifest.case_count
        )));
    }

    let cases_dir = dir.join("cases");
    let mut files: Vec<PathBuf> = if cases_dir.is_dir() {
        fs::read_dir(&cases_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect()
    } else {
        Vec::new()
    };
    files.sort();
    if files.len() != manifest.case_count {
        return Err(DatasetError::CountMismatch {
            expected: manifest.case_count,
            found: files.len(),
        });
    }

    let solutions_dir = dir.join("solutions");
    Ok((manifest, CaseStream { files, solutions_dir, next: 0 }))
}

/// Lazy iterator over the case files of a dataset, in file-name order.
#[derive(Debug)]
pub struct CaseStream {
    files: Vec<PathBuf>,
    solutions_dir: PathBuf,
    next: usize,
}

impl CaseStream {
    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// The matching solution document, if the dataset carries one.
    pub fn solution(&self, index: usize) -> Result<Option<CaseDocument>, DatasetError> {
        let name = self.files[index].file_name().expect("case path");
        let path = self.solutions_dir.join(name);
        if !path.is_file() {
            return Ok(None);
        }
        let mut text = String::new();
        fs::File::open(&path)?.read_to_string(&mut text)?;
        Ok(Some(parse_case(&text)?))
    }
}

impl Iterator for CaseStream {
    type Item = Result<CaseDocument, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.files.get(self.next)?;
        self.next += 1;
        let mut text = String::new();
        let result = fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text).map(|_| ()))
            .map_err(DatasetError::from)
            .and_then(|_| parse_case(&text).map_err(DatasetError::from));
        Some(result)
    }
}

/// Writes a dataset directory. The iterator yields (case, optional solution)
/// pairs; the count must match the manifest.
pub fn write_dataset(
    dir: &Path,
    manifest: &DatasetManifest,
    cases: impl Iterator<Item = (CaseDocument, Option<CaseDocument>)>,
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir.join("cases"))?;
    if manifest.solutions_included {
        fs::create_dir_all(dir.join("solutions"))?;
    }
    let mut written = 0usize;
    for (index, (case, solution)) in cases.enumerate() {
        let name = case_file_name(index);
        write_text(&dir.join("cases").join(&name), &serialize_case(&case)?)?;
        if let Some(sol) = solution {
            write_text(&dir.join("solutions").join(&name), &serialize_case(&sol)?)?;
        }
        written += 1;
    }
    if written != manifest.case_count {
        return Err(DatasetError::CountMismatch { expected: manifest.case_count, found: written });
    }
    let manifest_json =
        serde_json::to_string_pretty(manifest).map_err(|e| DatasetError::BadManifest(e.to_string()))?;
    write_text(&dir.join("manifest.json"), &format!("{manifest_json}\n"))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), std::io::Error> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())
}
