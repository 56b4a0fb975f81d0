//! Annotations, vocabularies, feature containers, normalization, blocking and
//! dataset generation.

pub mod annotation;
pub mod blocks;
pub mod container;
pub mod corpus;
pub mod dataset;
pub mod matrix;
pub mod norm;
pub mod synthetic;
pub mod vocab;

pub use annotation::{parse_phone_annotations, serialize_phone_annotations, PhoneSegment};
pub use blocks::{make_blocks, overlap_add, BlockSequence};
pub use container::{read_container, write_container};
pub use corpus::prepare_corpus;
pub use dataset::{Dataset, Song, Split};
pub use matrix::{default_dim_labels, FeatureMatrix, FrameArray, D_OUT, N_BAP, N_MCEP, VUV_DIM};
pub use norm::{compute_norm_stats, denormalize, normalize, NormStats};
pub use synthetic::{generate_synthetic_dataset, SyntheticDataset, SyntheticSpec};
pub use vocab::{build_phoneme_vocab, frame_align, Gender, PhonemeVocab, Singer, SingerTable};
