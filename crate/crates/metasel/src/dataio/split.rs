//! Stratified nested cross-validation split plans.
//!
//! Each fold partitions the dataset into a test slice (~1/fold_count) and a
//! training remainder split 50/50 into a development-training half (fits the
//! base classifiers) and a meta-training half (supplies selector labels).
//! Every (source, label) stratum is spread across folds and roles so each
//! cell matches the global stratum proportions to within one sample.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::Label;
use crate::error::{Error, Result};

/// Role of a sample within one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "DEV_TRAIN")]
    DevTrain,
    #[serde(rename = "META_TRAIN")]
    MetaTrain,
    #[serde(rename = "TEST")]
    Test,
}

/// Identity of a sample for splitting purposes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitItem {
    pub id: String,
    pub label: Label,
    pub source: String,
}

/// Per-fold role assignment for every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    fold_count: usize,
    ids: Vec<String>,
    /// roles[fold][sample_index]
    roles: Vec<Vec<Role>>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentJson {
    id: String,
    fold: usize,
    role: Role,
}

#[derive(Serialize, Deserialize)]
struct SplitPlanJson {
    fold_count: usize,
    assignments: Vec<AssignmentJson>,
}

impl SplitPlan {
    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn role(&self, fold: usize, sample: usize) -> Role {
        self.roles[fold][sample]
    }

    /// Sample indices holding `role` in `fold`, in dataset order.
    pub fn indices(&self, fold: usize, role: Role) -> Vec<usize> {
        self.roles[fold]
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    /// Serialize to the audit JSON schema
    /// `{"fold_count":F,"assignments":[{"id":..,"fold":..,"role":..}]}`,
    /// ordered by fold then dataset order.
    pub fn to_json(&self) -> serde_json::Value {
        let mut assignments = Vec::with_capacity(self.fold_count * self.ids.len());
        for fold in 0..self.fold_count {
            for (i, id) in self.ids.iter().enumerate() {
                assignments.push(AssignmentJson {
                    id: id.clone(),
                    fold,
                    role: self.roles[fold][i],
                });
            }
        }
        serde_json::to_value(SplitPlanJson {
            fold_count: self.fold_count,
            assignments,
        })
        .expect("split plan serializes")
    }
}

/// Deterministic, stratified split plan.
///
/// Within each (source, label) stratum the samples are shuffled by a
/// counter-based RNG keyed on `(seed, stratum)` and dealt round-robin to
/// test folds, with the dealing origin advanced from stratum to stratum so
/// oversized folds rotate. The non-test remainder of every fold alternates
/// DEV_TRAIN / META_TRAIN with the alternation parity carried across strata,
/// which keeps the two halves within one sample of each other.
pub fn make_split_plan(items: &[SplitItem], fold_count: usize, seed: u64) -> Result<SplitPlan> {
    if fold_count < 2 {
        return Err(Error::Split(format!("fold_count must be >= 2, got {fold_count}")));
    }
    if items.is_empty() {
        return Err(Error::Split("no samples to split".into()));
    }

    // group indices by stratum, deterministically ordered by (source, label)
    let mut strata: Vec<((String, u8), Vec<usize>)> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let key = (item.source.clone(), item.label.as_u8());
        match strata.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => strata.push((key, vec![i])),
        }
    }
    strata.sort_by(|(a, _), (b, _)| a.cmp(b));

    for ((source, label), members) in &strata {
        if members.len() < fold_count {
            return Err(Error::Split(format!(
                "stratum ({source:?}, label {label}) has {} samples, fewer than fold_count {fold_count}: cannot stratify",
                members.len()
            )));
        }
    }

    // shuffle each stratum with its own keyed stream
    let mut shuffled: Vec<Vec<usize>> = Vec::with_capacity(strata.len());
    for ((source, label), members) in &strata {
        let mut rng = stratum_rng(seed, source, *label);
        let mut order = members.clone();
        order.shuffle(&mut rng);
        shuffled.push(order);
    }

    // deal to test folds with a rotating origin
    let mut test_fold = vec![0usize; items.len()];
    let mut origin = 0usize;
    for order in &shuffled {
        for (j, &sample) in order.iter().enumerate() {
            test_fold[sample] = (origin + j) % fold_count;
        }
        origin = (origin + order.len()) % fold_count;
    }

    // assign roles per fold, alternation parity carried across strata
    let mut roles = vec![vec![Role::Test; items.len()]; fold_count];
    for (fold, fold_roles) in roles.iter_mut().enumerate() {
        let mut parity = 0usize;
        for order in &shuffled {
            for &sample in order {
                if test_fold[sample] == fold {
                    fold_roles[sample] = Role::Test;
                } else {
                    fold_roles[sample] = if parity % 2 == 0 {
                        Role::DevTrain
                    } else {
                        Role::MetaTrain
                    };
                    parity += 1;
                }
            }
        }
    }

    Ok(SplitPlan {
        fold_count,
        ids: items.iter().map(|s| s.id.clone()).collect(),
        roles,
    })
}

fn stratum_rng(seed: u64, source: &str, label: u8) -> ChaCha8Rng {
    // FNV-1a over the stratum key, mixed with the run seed via splitmix64
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in source.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= label as u64;
    h = h.wrapping_mul(0x100000001b3);

    let mut state = seed ^ h;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(&mut state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
