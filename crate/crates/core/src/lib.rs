// Negated comparisons such as `!(x > 0.0)` deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Talking-condition identification with first-order HMMs, second-order
//! circular HMMs and suprasegmental HMMs.

pub mod audio;
pub mod chmm2;
pub mod classify;
pub mod corpus;
mod em;
pub mod error;
pub mod features;
pub mod gmm;
pub mod hmm;
pub mod logmath;
pub mod model_io;
pub mod sphmm;

pub use chmm2::{init_chmm2, train_chmm2, Chmm2Lattice, Chmm2Model, DiscreteChmm2Model, SecondOrderChain};
pub use corpus::{
    generate_synthetic, load_manifest, paper_split, save_manifest, ConditionSet, CorpusManifest, Gender, SplitSpec,
    SyntheticSpec, Utterance,
};
pub use em::{TrainOpts, TrainOutcome};
pub use error::{Error, Result};
pub use features::{extract_mfcc, extract_prosody, FeatureKind, FeatureSequence, MfccConfig, ProsodyConfig};
pub use gmm::GmmEmission;
pub use hmm::{init_hmm, train_baum_welch, DiscreteHmm1Model, Hmm1Model, MarkovChain, Topology};
pub use sphmm::{fuse, train_sphmm, ProsodicSetup, SphmmModel};
