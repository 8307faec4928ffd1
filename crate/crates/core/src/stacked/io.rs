use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelId;
use crate::error::{Error, Result};
use crate::label_model::LabelModelParams;

use super::{GroupModel, Partition, StackedModel, SubModel};

pub const MODEL_MANIFEST_FILE: &str = "manifest.json";
pub const PARTITION_FILE: &str = "partition.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupEntry {
    labels: Vec<LabelId>,
    lf_columns: Vec<usize>,
    lf_ids: Vec<String>,
    state: String,
    footprint: usize,
    params_file: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    lf_ids: Vec<String>,
    partition: Partition,
    groups: Vec<GroupEntry>,
}

fn params_file(g: usize) -> String {
    format!("group_{g}.params.json")
}

impl Partition {
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Partition = serde_json::from_str(&text).map_err(|e| Error::json("partition", e))?;
        p.validated()
    }
}

impl StackedModel {
    /// Writes the manifest and one params file per fitted group into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut groups = Vec::with_capacity(self.groups.len());
        for (g, sub) in self.groups.iter().enumerate() {
            let file = match &sub.model {
                GroupModel::Fitted(params) => {
                    let name = params_file(g);
                    params.write(&dir.join(&name))?;
                    Some(name)
                }
                _ => None,
            };
            groups.push(GroupEntry {
                labels: sub.labels.clone(),
                lf_columns: sub.lf_columns.clone(),
                lf_ids: sub.lf_ids.clone(),
                state: sub.model.state().to_string(),
                footprint: sub.footprint,
                params_file: file,
            });
        }
        let manifest = Manifest {
            lf_ids: self.lf_ids.clone(),
            partition: self.partition.clone(),
            groups,
        };
        let path = dir.join(MODEL_MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::json("stacked model manifest", e))?;
        let partition = manifest.partition.validated()?;
        let mut groups = Vec::with_capacity(manifest.groups.len());
        for entry in manifest.groups {
            let model = match (entry.state.as_str(), &entry.params_file) {
                ("fitted", Some(file)) => {
                    let params = LabelModelParams::read(&dir.join(file))?;
                    if params.num_labels() != entry.labels.len() || params.lfs.len() != entry.lf_ids.len() {
                        return Err(Error::schema(file, "params do not match the group shape"));
                    }
                    GroupModel::Fitted(params)
                }
                ("singleton", None) => GroupModel::Singleton,
                ("unsignaled", None) => GroupModel::Unsignaled,
                (state, _) => {
                    return Err(Error::schema("state", format!("unexpected group state `{state}`")))
                }
            };
            if entry.lf_columns.len() != entry.lf_ids.len() {
                return Err(Error::schema("lf_columns", "length differs from lf_ids"));
            }
            groups.push(SubModel {
                labels: entry.labels,
                lf_columns: entry.lf_columns,
                lf_ids: entry.lf_ids,
                model,
                footprint: entry.footprint,
            });
        }
        if groups.len() != partition.k() {
            return Err(Error::schema("groups", "count differs from the partition"));
        }
        StackedModel::assemble(partition, manifest.lf_ids, groups)
    }
}
