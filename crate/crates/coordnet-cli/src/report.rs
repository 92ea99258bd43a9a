//! Versioned JSON reports emitted by every experiment.
//!
//! Everything in a report is deterministic for a fixed config and seed list
//! except `wall_clock_seconds`; consumers comparing runs must ignore that
//! one field. Artifact paths are relative to the report file's directory.

use std::path::Path;

use coordnet::train::Metrics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Semantic experiment configuration, echoed verbatim into the report.
/// Filesystem locations are environment, not configuration, and stay out so
/// reports from different machines/output dirs stay comparable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: String,
    pub precision: String,
    /// Training-set truncation; None means the full split.
    pub subset: Option<usize>,
    /// Test-set truncation; None means the full split.
    pub test_subset: Option<usize>,
    /// VAE-only knobs, absent for classifier experiments.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latent_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
}

impl ConfigEcho {
    /// Hex digest of the canonical JSON encoding, logged so two runs (or two
    /// variants inside one run) can prove they shared a configuration.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Externally reported full-scale results carried as context. These are
/// metadata only — measured values live elsewhere and are never replaced by
/// them, and no gate compares against them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValues {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coord_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_accuracy: Option<f64>,
    pub note: String,
}

/// One trained variant (baseline or coordinate) within one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantResult {
    pub test: Metrics,
    pub train_loss_per_epoch: Vec<f64>,
    pub val_accuracy_per_epoch: Vec<f64>,
    /// Per-epoch digest of the scheduled batch-index stream; equal across
    /// variants sharing a seed by construction, logged as evidence.
    pub batch_order_digest: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub checkpoint: Option<String>,
    /// Present in the resolution experiment: accuracy on the degraded
    /// (training-matched) test set, alongside the headline original-
    /// resolution number in `test`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matched_resolution_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRun {
    pub seed: u64,
    pub baseline: VariantResult,
    pub coord: VariantResult,
    /// coord.test.accuracy − baseline.test.accuracy, exactly.
    pub delta_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub median_baseline_accuracy: f64,
    pub median_coord_accuracy: f64,
    pub median_delta_accuracy: f64,
}

/// Accuracy of both variants on the test set shifted by (dx, dy).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftEntry {
    pub dx: i64,
    pub dy: i64,
    pub baseline_accuracy: f64,
    pub coord_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationSection {
    pub seed: u64,
    /// Untranslated test metrics, the (0,0) anchor.
    pub base_baseline: Metrics,
    pub base_coord: Metrics,
    pub matrix: Vec<ShiftEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeSeedRun {
    pub seed: u64,
    pub total_loss_per_epoch: Vec<f64>,
    pub reconstruction_per_epoch: Vec<f64>,
    pub kl_per_epoch: Vec<f64>,
    /// Strict decrease from the first to the last epoch.
    pub loss_decreased: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeSample {
    /// Index into the test set.
    pub index: usize,
    pub label: u8,
    pub input_image: String,
    pub reconstruction_image: String,
    pub joint_position_image: String,
    /// Pearson correlation between the mean-removed joint position matrix
    /// and the binarized digit mask.
    pub mask_correlation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeSection {
    pub runs: Vec<VaeSeedRun>,
    /// Samples come from the first seed's trained model.
    pub samples: Vec<VaeSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub schema_version: u32,
    /// "mnist" | "resolution" | "translation" | "vae".
    pub experiment: String,
    pub library_version: String,
    pub config: ConfigEcho,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub reference: ReferenceValues,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runs: Option<Vec<SeedRun>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub translation: Option<TranslationSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vae: Option<VaeSection>,
    /// Relative to the report file's directory.
    pub artifacts: Vec<String>,
    /// The single nondeterministic field.
    pub wall_clock_seconds: f64,
}

/// Median of a non-empty slice: middle element, or the mean of the two
/// middles for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ExperimentReport {
    /// Internal consistency: version, hash, exact delta/median recomputation,
    /// artifact relativity. Run before writing and by consumers after
    /// parsing.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema version {} (supported: {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.config_hash != self.config.hash() {
            return Err("config hash does not match the echoed config".into());
        }
        if self.seeds.is_empty() {
            return Err("empty seed list".into());
        }
        for a in &self.artifacts {
            if Path::new(a).is_absolute() {
                return Err(format!("artifact path {a} is not relative"));
            }
        }
        if let Some(runs) = &self.runs {
            if runs.len() != self.seeds.len() {
                return Err(format!("{} runs for {} seeds", runs.len(), self.seeds.len()));
            }
            for r in runs {
                let expect = r.coord.test.accuracy - r.baseline.test.accuracy;
                if r.delta_accuracy != expect {
                    return Err(format!(
                        "seed {}: stored delta {} != recomputed {expect}",
                        r.seed, r.delta_accuracy
                    ));
                }
                if r.baseline.batch_order_digest != r.coord.batch_order_digest {
                    return Err(format!("seed {}: variants saw different batch orders", r.seed));
                }
            }
            let summary = self.summary.as_ref().ok_or("runs without summary")?;
            let acc = |f: &dyn Fn(&SeedRun) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
            let checks = [
                (summary.median_baseline_accuracy, median(&acc(&|r| r.baseline.test.accuracy))),
                (summary.median_coord_accuracy, median(&acc(&|r| r.coord.test.accuracy))),
                (summary.median_delta_accuracy, median(&acc(&|r| r.delta_accuracy))),
            ];
            for (stored, computed) in checks {
                if stored != computed {
                    return Err(format!("summary median {stored} != recomputed {computed}"));
                }
            }
        }
        if let Some(t) = &self.translation {
            let anchor = t
                .matrix
                .iter()
                .find(|e| e.dx == 0 && e.dy == 0)
                .ok_or("translation matrix lacks the (0,0) entry")?;
            if anchor.baseline_accuracy != t.base_baseline.accuracy
                || anchor.coord_accuracy != t.base_coord.accuracy
            {
                return Err("(0,0) translation entry differs from the base evaluation".into());
            }
        }
        if let Some(v) = &self.vae {
            for r in &v.runs {
                let n = r.total_loss_per_epoch.len();
                if r.reconstruction_per_epoch.len() != n || r.kl_per_epoch.len() != n {
                    return Err(format!("seed {}: ragged VAE loss history", r.seed));
                }
                let decreased = n >= 2 && r.total_loss_per_epoch[n - 1] < r.total_loss_per_epoch[0];
                if r.loss_decreased != decreased {
                    return Err(format!("seed {}: loss_decreased flag inconsistent", r.seed));
                }
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> coordnet::Result<()> {
        self.validate().map_err(coordnet::Error::InvalidArgument)?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| coordnet::Error::io(dir, e))?;
            }
        }
        std::fs::write(path, json.as_bytes()).map_err(|e| coordnet::Error::io(path, e))
    }

    pub fn read(path: &Path) -> coordnet::Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| coordnet::Error::io(path, e))?;
        let report: ExperimentReport = serde_json::from_slice(&bytes)
            .map_err(|e| coordnet::Error::Data(format!("report {}: {e}", path.display())))?;
        report
            .validate()
            .map_err(|e| coordnet::Error::Data(format!("report {}: {e}", path.display())))?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_odd_even_and_unsorted() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ConfigEcho {
            epochs: 3,
            batch_size: 64,
            lr: 1e-3,
            optimizer: "adam".into(),
            precision: "f32".into(),
            subset: None,
            test_subset: None,
            latent_dim: None,
            beta: None,
        };
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.epochs = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ConfigEcho>(
            r#"{"epochs":1,"batch_size":2,"lr":0.1,"optimizer":"adam","precision":"f32","subset":null,"test_subset":null,"surprise":true}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    /// The exact (==) revalidation on read only works if every f64 reparses
    /// to its original bits; serde_json guarantees that solely under the
    /// float_roundtrip feature, and 0.0010999999999999899 is a value the
    /// default parser gets wrong by one ulp.
    #[test]
    fn floats_survive_the_json_round_trip_bit_for_bit() {
        let mut values = vec![0.0010999999999999899_f64, 1.0 / 3.0, 0.1 + 0.2, 0.97145];
        let mut state = 0x9e37_79b9_7f4a_7c15_u64;
        for _ in 0..4096 {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            values.push((state >> 11) as f64 / (1u64 << 53) as f64);
        }
        for v in values {
            let text = serde_json::to_string(&v).unwrap();
            let back: f64 = serde_json::from_str(&text).unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v:?} reparsed as {back:?} via {text}");
        }
    }

    #[test]
    fn write_then_read_preserves_exact_deltas() {
        let metrics = |accuracy: f64| Metrics {
            accuracy,
            error_rate: 1.0 - accuracy,
            loss: 0.05,
            per_class_accuracy: vec![],
            per_class_correct: vec![],
            per_class_total: vec![],
        };
        let variant = |accuracy: f64| VariantResult {
            test: metrics(accuracy),
            train_loss_per_epoch: vec![0.3],
            val_accuracy_per_epoch: vec![accuracy],
            batch_order_digest: vec!["d".into()],
            checkpoint: None,
            matched_resolution_accuracy: None,
        };
        let (base, coord) = (0.9677, 0.9688);
        let config = ConfigEcho {
            epochs: 3,
            batch_size: 64,
            lr: 1e-3,
            optimizer: "adam".into(),
            precision: "f32".into(),
            subset: Some(10_000),
            test_subset: None,
            latent_dim: None,
            beta: None,
        };
        let report = ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: "resolution".into(),
            library_version: "test".into(),
            config_hash: config.hash(),
            config,
            seeds: vec![1],
            reference: ReferenceValues {
                coord_accuracy: None,
                baseline_accuracy: None,
                note: "none".into(),
            },
            runs: Some(vec![SeedRun {
                seed: 1,
                baseline: variant(base),
                coord: variant(coord),
                delta_accuracy: coord - base,
            }]),
            summary: Some(Summary {
                median_baseline_accuracy: base,
                median_coord_accuracy: coord,
                median_delta_accuracy: coord - base,
            }),
            translation: None,
            vae: None,
            artifacts: vec![],
            wall_clock_seconds: 0.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.write(&path).unwrap();
        let back = ExperimentReport::read(&path).unwrap();
        let run = &back.runs.as_ref().unwrap()[0];
        assert_eq!(run.delta_accuracy.to_bits(), (coord - base).to_bits());
        assert_eq!(run.coord.test.accuracy.to_bits(), coord.to_bits());
    }
}
