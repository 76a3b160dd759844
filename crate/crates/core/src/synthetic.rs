//! Synthetic labelled data: one random prototype direction per label,
//! samples scattered around it. Payloads are short text stubs, so nothing
//! here touches image files.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{
    write_embeddings, write_manifest, DatasetError, EmbeddingMatrix, Instance, LabelSet, Manifest, Payload,
    QuerySet, RetrievalDatabase,
};
use crate::seed::SeedKey;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub labels: usize,
    pub per_label: usize,
    pub test_per_label: usize,
    pub dim: usize,
    /// Noise norm relative to the (unit) prototype.
    pub noise: f64,
    /// Also emit an auxiliary embedding channel (a second noisy view).
    pub aux: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            labels: 10,
            per_label: 20,
            test_per_label: 5,
            dim: 16,
            noise: 0.3,
            aux: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub manifest: Manifest,
    pub embeddings: EmbeddingMatrix,
    pub aux: Option<EmbeddingMatrix>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub database: Split,
    pub test: Split,
}

/// Paths written by [`SyntheticData::write`].
#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub db_manifest: PathBuf,
    pub db_embeddings: PathBuf,
    pub db_aux: Option<PathBuf>,
    pub test_manifest: PathBuf,
    pub test_embeddings: PathBuf,
    pub test_aux: Option<PathBuf>,
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

impl SyntheticSpec {
    pub fn label_names(&self) -> Vec<String> {
        (0..self.labels).map(|i| format!("class_{i:02}")).collect()
    }

    pub fn generate(&self) -> SyntheticData {
        assert!(self.labels >= 2 && self.per_label >= 1 && self.dim >= 2);
        let labelset = LabelSet::new(self.label_names()).expect("generated labels are valid");
        let mut rng = SeedKey::new("synthetic").with_u64(self.seed).rng();
        let prototypes: Vec<Vec<f64>> = (0..self.labels).map(|_| unit(&gaussian(&mut rng, self.dim))).collect();
        let scale = self.noise / (self.dim as f64).sqrt();

        let mut split = |prefix: &str, per_label: usize| -> Split {
            let mut instances = Vec::new();
            let mut rows = Vec::new();
            let mut aux_rows = Vec::new();
            // Round-robin over labels so manifest order mixes classes.
            for _ in 0..per_label {
                for (l, proto) in prototypes.iter().enumerate() {
                    let row = instances.len();
                    let id = format!("{prefix}-{row:05}");
                    let sample = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
                        proto
                            .iter()
                            .zip(gaussian(rng, self.dim))
                            .map(|(p, n)| (p + scale * n) as f32)
                            .collect()
                    };
                    rows.push(sample(&mut rng));
                    if self.aux {
                        aux_rows.push(sample(&mut rng));
                    }
                    instances.push(Instance {
                        payload: Payload::Text(format!("{prefix} sample {row}")),
                        id,
                        label: labelset.labels()[l].clone(),
                        embedding_row: row,
                    });
                }
            }
            let matrix = |rows: &[Vec<f32>]| EmbeddingMatrix::from_rows(rows).expect("finite non-zero rows").0;
            Split {
                manifest: Manifest {
                    labelset: labelset.clone(),
                    instances,
                },
                embeddings: matrix(&rows),
                aux: self.aux.then(|| matrix(&aux_rows)),
            }
        };
        let database = split("db", self.per_label);
        let test = split("test", self.test_per_label);
        SyntheticData { database, test }
    }
}

impl SyntheticData {
    pub fn into_parts(self) -> (RetrievalDatabase, QuerySet) {
        let test = QuerySet::from_parts(self.test.manifest, &self.test.embeddings, self.test.aux.as_ref());
        let db = RetrievalDatabase::new(self.database.manifest, self.database.embeddings, self.database.aux)
            .expect("every synthetic label has instances");
        (db, test)
    }

    /// Writes `db.jsonl`, `db.ijeb`, `test.jsonl`, `test.ijeb` (and
    /// `*.aux.ijeb` when present) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<WrittenFiles, DatasetError> {
        std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let put = |split: &Split, name: &str| -> Result<(PathBuf, PathBuf, Option<PathBuf>), DatasetError> {
            let manifest = dir.join(format!("{name}.jsonl"));
            let emb = dir.join(format!("{name}.ijeb"));
            write_manifest(&split.manifest, &manifest)?;
            write_embeddings(&split.embeddings, &emb)?;
            let aux = match &split.aux {
                Some(m) => {
                    let p = dir.join(format!("{name}.aux.ijeb"));
                    write_embeddings(m, &p)?;
                    Some(p)
                }
                None => None,
            };
            Ok((manifest, emb, aux))
        };
        let (db_manifest, db_embeddings, db_aux) = put(&self.database, "db")?;
        let (test_manifest, test_embeddings, test_aux) = put(&self.test, "test")?;
        Ok(WrittenFiles {
            db_manifest,
            db_embeddings,
            db_aux,
            test_manifest,
            test_embeddings,
            test_aux,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::IncompleteView;
    use crate::retrieval::retrieve_topk;

    #[test]
    fn shapes_and_determinism() {
        let spec = SyntheticSpec {
            labels: 4,
            per_label: 5,
            test_per_label: 2,
            dim: 8,
            aux: true,
            ..SyntheticSpec::default()
        };
        let a = spec.generate();
        let b = spec.generate();
        assert_eq!(a.database.manifest, b.database.manifest);
        assert_eq!(a.database.embeddings.to_bytes(), b.database.embeddings.to_bytes());
        assert_eq!(a.database.manifest.instances.len(), 20);
        assert_eq!(a.test.manifest.instances.len(), 8);
        assert_eq!(a.test.aux.as_ref().unwrap().count(), 8);
    }

    #[test]
    fn low_noise_neighbours_share_labels() {
        let data = SyntheticSpec {
            noise: 0.1,
            ..SyntheticSpec::default()
        }
        .generate();
        let (db, queries) = data.into_parts();
        let view = IncompleteView::complete(&db);
        for (q, gold) in queries.queries.iter().zip(&queries.gold) {
            let top = retrieve_topk(&view, &q.embedding, 3, None).unwrap();
            assert!(top.items.iter().all(|d| &d.label == gold));
        }
    }

    #[test]
    fn written_files_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let data = SyntheticSpec {
            aux: true,
            ..SyntheticSpec::default()
        }
        .generate();
        let files = data.write(dir.path()).unwrap();
        let db = RetrievalDatabase::open(&files.db_manifest, &files.db_embeddings, files.db_aux.as_deref()).unwrap();
        assert_eq!(db.instances().len(), 200);
        assert!(db.aux_embeddings().is_some());
        let qs = QuerySet::open(&files.test_manifest, &files.test_embeddings, None).unwrap();
        assert_eq!(qs.len(), 50);
    }
}
