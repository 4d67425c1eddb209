//! Lightweight adapter training over frozen query–document embeddings, with a
//! cross-gender logit-difference regularizer, zero-shot category evaluation
//! and gender-bias reporting.
//!
//! The pipeline:
//!
//! 1. [`corpus`] loads or synthesizes datasets of queries paired with a
//!    relevant and a non-relevant document, each in M/F/N pronoun variants.
//! 2. [`embeddings`] provides one fixed vector per example, either read from
//!    the binary interchange format or computed by the hashing encoder.
//! 3. [`adapter`] trains the single-vector linear adapter with AdamW;
//!    [`debias`] adds the sampled-pair regularizer to each batch loss.
//! 4. [`eval`] builds train x test accuracy matrices and bias tables;
//!    [`tuning`] grid-searches the regularizer weights; [`tfidf`] lists the
//!    most characteristic words per category.

pub mod adapter;
pub mod corpus;
pub mod debias;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod rng;
pub mod tfidf;
pub mod tuning;

pub use adapter::{
    adamw_step, bce_grad, bce_loss, score, train_adapter, train_adapter_with_history,
    AdapterWeights, OptimizerState, TrainConfig, TrainReport,
};
pub use corpus::{
    generate_synthetic, load_dataset, split_by_category, Category, Dataset, Example, Gender,
    SynthSpec,
};
pub use debias::{
    batch_loss, regularizer, regularizer_grad, sample_pairs, DebiasConfig, GenderPair,
};
pub use embeddings::{
    encode_dataset, hash_encode, read_embeddings, write_embeddings, EmbeddingStore,
    HashEncoderConfig,
};
pub use error::{Error, Result};
pub use eval::{
    accuracy, average_star, bias_fractions, compare_bias, run_zero_shot, zero_shot_matrix,
    BiasCell, BiasComparison, BiasCorrectness, BiasReport, EvalMatrix, ZeroShot,
};
pub use tfidf::{top_words, TfidfTable};
pub use tuning::{grid_search, TuneResult, TuneSpec};
