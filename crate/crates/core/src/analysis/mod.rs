//! Confusion matrices, leave-one-feature-out importance and t-SNE views of
//! the penultimate embedding.

mod ablation;
mod confusion;
mod embed;
mod svg;
mod tsne;

pub use ablation::{ablate, ablation_sweep, baseline, AblationReport, AblationRow, AblationSetup};
pub use confusion::{confusion, ConfusionMatrix};
pub use embed::{
    embed, embeddings, spread_stats, ClassSpread, EmbeddedPoint, EmbeddingPlot, SpreadStats,
};
pub use tsne::{conditional_affinities, kl_divergence, tsne, TsneConfig, TsneInit, TsneOutput};
