//! Terminology-aware medical dialogue toolkit.
//!
//! Turns raw doctor-patient dialogue dumps into terminology-annotated training
//! corpora, trains a small terminology-aware encoder-decoder with a joint
//! generation + terminology-classification loss, and scores generated
//! responses with the usual dialogue metrics (PPL, BLEU, ROUGE, Distinct-n).
//!
//! The pieces compose as a pipeline:
//!
//! ```text
//! raw dialogues --corpus--> pairs --annotate--> records --model--> checkpoint
//!                                                          |
//!                                              generate ---+--> metrics
//! ```
//!
//! Each stage is also usable on its own; see the `termdialog` binary for the
//! batch command-line surface.

pub mod annotate;
pub mod cli;
pub mod corpus;
pub mod lexicon;
pub mod metrics;
pub mod model;

pub use annotate::{AnnotatedRecord, AnnotatedSequence, TermSpan, Token, TERM_MARKER};
pub use lexicon::Lexicon;
