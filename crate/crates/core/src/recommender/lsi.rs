use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::svd::{svd_truncate, Decomposition, Matrix, SvdError};
use crate::config::{InterestConfig, RecommendParams};
use crate::interest::{Tier, UserInterests};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecommendError {
    #[error("no user has any interest keyword")]
    EmptyMatrix,
    #[error(transparent)]
    Svd(#[from] SvdError),
    #[error("user {0:?} is not part of the current model")]
    UnknownUser(String),
    #[error("latent index versions differ ({0} vs {1})")]
    VersionMismatch(u64, u64),
    #[error("similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("stored decomposition is inconsistent: {0}")]
    BadBlob(String),
}

/// User × keyword weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InterestMatrix {
    /// Row labels, ascending.
    pub users: Vec<String>,
    /// Column labels, ascending.
    pub keywords: Vec<String>,
    pub values: Matrix,
}

/// Rows are users in id order, columns the union of their keywords in
/// lexicographic order; absent keywords are 0.
pub fn build_matrix(profiles: &BTreeMap<String, UserInterests>) -> Result<InterestMatrix, RecommendError> {
    let keywords: Vec<String> = profiles
        .values()
        .flat_map(|i| i.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if keywords.is_empty() {
        return Err(RecommendError::EmptyMatrix);
    }
    let users: Vec<String> = profiles.keys().cloned().collect();
    let column: BTreeMap<&str, usize> = keywords.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let mut values = Matrix::zeros(users.len(), keywords.len());
    for (r, interests) in profiles.values().enumerate() {
        for (k, e) in interests {
            values[(r, column[k.as_str()])] = e.weight;
        }
    }
    Ok(InterestMatrix { users, keywords, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentIndex {
    pub user_id: String,
    pub vector: Vec<f64>,
    pub decomposition_version: u64,
}

/// Row `row` of `U_k`, scaled elementwise by `S_k`.
pub fn latent_vector(d: &Decomposition, row: usize) -> Option<Vec<f64>> {
    (row < d.u.rows()).then(|| d.u.row(row).iter().zip(&d.s).map(|(u, s)| u * s).collect())
}

/// Cosine of two latent vectors from the same decomposition.
pub fn similarity(a: &LatentIndex, b: &LatentIndex) -> Result<f64, RecommendError> {
    if a.decomposition_version != b.decomposition_version {
        return Err(RecommendError::VersionMismatch(a.decomposition_version, b.decomposition_version));
    }
    cosine(&a.vector, &b.vector)
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64, RecommendError> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(RecommendError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Persisted form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionBlob {
    pub version: u64,
    pub users: Vec<String>,
    pub keywords: Vec<String>,
    pub u_k: Matrix,
    pub s_k: Vec<f64>,
    pub v_k: Matrix,
}

/// A published decomposition plus every user's latent index.
#[derive(Debug, Clone, PartialEq)]
pub struct LsiModel {
    pub version: u64,
    pub users: Vec<String>,
    pub keywords: Vec<String>,
    pub decomposition: Decomposition,
    indices: BTreeMap<String, LatentIndex>,
}

impl LsiModel {
    fn assemble(version: u64, users: Vec<String>, keywords: Vec<String>, decomposition: Decomposition) -> Self {
        let indices = users
            .iter()
            .enumerate()
            .map(|(row, user)| {
                let vector = latent_vector(&decomposition, row).expect("row within decomposition");
                let index = LatentIndex {
                    user_id: user.clone(),
                    vector,
                    decomposition_version: version,
                };
                (user.clone(), index)
            })
            .collect();
        Self {
            version,
            users,
            keywords,
            decomposition,
            indices,
        }
    }

    pub fn rank(&self) -> usize {
        self.decomposition.rank()
    }

    pub fn user_index(&self, user: &str) -> Result<&LatentIndex, RecommendError> {
        self.indices
            .get(user)
            .ok_or_else(|| RecommendError::UnknownUser(user.to_string()))
    }

    pub fn indices(&self) -> impl Iterator<Item = &LatentIndex> {
        self.indices.values()
    }

    pub fn to_blob(&self) -> DecompositionBlob {
        DecompositionBlob {
            version: self.version,
            users: self.users.clone(),
            keywords: self.keywords.clone(),
            u_k: self.decomposition.u.clone(),
            s_k: self.decomposition.s.clone(),
            v_k: self.decomposition.v.clone(),
        }
    }

    pub fn from_blob(blob: DecompositionBlob) -> Result<Self, RecommendError> {
        let k = blob.s_k.len();
        let shapes_ok = blob.u_k.rows() == blob.users.len()
            && blob.v_k.rows() == blob.keywords.len()
            && (blob.users.is_empty() || blob.u_k.cols() == k)
            && (blob.keywords.is_empty() || blob.v_k.cols() == k);
        if !shapes_ok {
            return Err(RecommendError::BadBlob("factor shapes do not match labels".into()));
        }
        let decomposition = Decomposition {
            u: blob.u_k,
            s: blob.s_k,
            v: blob.v_k,
        };
        Ok(Self::assemble(blob.version, blob.users, blob.keywords, decomposition))
    }
}

/// Recomputes the whole model; the result carries `previous_version + 1`.
///
/// The rank is `min(m, n, params.k)`, where an unset `params.k` means 8.
pub fn rebuild(
    profiles: &BTreeMap<String, UserInterests>,
    params: &RecommendParams,
    previous_version: u64,
) -> Result<LsiModel, RecommendError> {
    let matrix = build_matrix(profiles)?;
    let (m, n) = (matrix.values.rows(), matrix.values.cols());
    let k = m.min(n).min(params.k.unwrap_or(8)).max(1);
    let decomposition = svd_truncate(&matrix.values, k)?;
    Ok(LsiModel::assemble(previous_version + 1, matrix.users, matrix.keywords, decomposition))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    OwnMidTier,
    SimilarUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub keyword: String,
    pub score: f64,
    pub reason: Reason,
    pub contributing_user: Option<String>,
}

/// Keywords to suggest to `user`.
///
/// The user's own Mid-tier keywords come back with their weight as score.
/// Every other user whose latent index has cosine similarity of at least
/// `sim_threshold` with the target contributes the Mid and High keywords
/// the target does not hold at all, scored `similarity × weight`.
/// Duplicates keep their best score; output is sorted by score, then
/// keyword.
pub fn recommend_keywords(
    user: &str,
    profiles: &BTreeMap<String, UserInterests>,
    model: &LsiModel,
    params: &RecommendParams,
    tiers: &InterestConfig,
) -> Result<Vec<Recommendation>, RecommendError> {
    let empty = UserInterests::new();
    let own = profiles.get(user).unwrap_or(&empty);
    let mut best: BTreeMap<String, Recommendation> = BTreeMap::new();

    for e in own.values().filter(|e| e.tier(tiers) == Tier::Mid) {
        best.insert(
            e.keyword.clone(),
            Recommendation {
                keyword: e.keyword.clone(),
                score: e.weight,
                reason: Reason::OwnMidTier,
                contributing_user: None,
            },
        );
    }

    let target = model.user_index(user)?;
    for other in model.indices() {
        if other.user_id == user {
            continue;
        }
        let sim = match similarity(target, other) {
            Ok(s) => s,
            Err(RecommendError::ZeroVector) => continue,
            Err(e) => return Err(e),
        };
        if sim < params.sim_threshold {
            continue;
        }
        let Some(theirs) = profiles.get(&other.user_id) else { continue };
        for e in theirs.values() {
            if own.contains_key(&e.keyword) || e.tier(tiers) < Tier::Mid {
                continue;
            }
            let score = sim * e.weight;
            let better = best.get(&e.keyword).is_none_or(|r| score > r.score);
            if better {
                best.insert(
                    e.keyword.clone(),
                    Recommendation {
                        keyword: e.keyword.clone(),
                        score,
                        reason: Reason::SimilarUser,
                        contributing_user: Some(other.user_id.clone()),
                    },
                );
            }
        }
    }

    let mut out: Vec<Recommendation> = best.into_values().collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.keyword.cmp(&b.keyword)));
    out.truncate(params.max_results);
    Ok(out)
}
