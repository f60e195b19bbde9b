//! Dataset records, feature files, vocabulary and the synthetic corpus.

pub mod features;
pub mod record;
pub mod synthetic;
pub mod vocab;

pub use features::{
    feature_path, load_features, store_features, time_to_row, FeatureSequence, DEFAULT_DELTA_FRAMES, DEFAULT_FPS,
};
pub use record::{dataset_to_json, load_dataset, parse_dataset, store_dataset, tokenize, Event, VideoRecord};
pub use synthetic::{generate_synthetic, overlap_fraction, SyntheticCorpus, SyntheticSpec};
pub use vocab::{build_vocab, decode, encode_sentence, Vocabulary, EOS, MAX_SENTENCE_LEN, PAD, SOS, UNK};
