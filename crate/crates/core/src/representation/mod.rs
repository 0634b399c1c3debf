//! Fixed-length texture embeddings, their similarity, and the identity,
//! adversarial and alignment training losses with analytic gradients.

mod embedding;
mod losses;
mod texture;

pub use embedding::{import_embedding, texture_similarity, Embedding, EMBEDDING_DIM, IMPORT_DIMS};
pub use losses::{
    loss_adversarial, loss_adversarial_grad, loss_adversary_head, loss_adversary_head_grad, loss_identity,
    loss_identity_grad, loss_stn, loss_stn_grad, loss_total_deepprint, loss_total_deepprint_grad, IdentityLoss,
    LossGradients, LossInputs, LossWeights, PROB_FLOOR,
};
pub(crate) use losses::{adversarial_raw, adversary_head_raw, identity_raw};
pub use texture::{extract_texture_embedding, texture_from_analysis, TextureParams};
