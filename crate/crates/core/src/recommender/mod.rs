//! Latent-semantic user similarity and keyword recommendations.

mod lsi;
pub mod svd;

pub use lsi::{
    build_matrix, latent_vector, rebuild, recommend_keywords, similarity, DecompositionBlob, InterestMatrix,
    LatentIndex, LsiModel, Reason, RecommendError, Recommendation,
};
pub use svd::{svd_truncate, Decomposition, Matrix, SvdError};
