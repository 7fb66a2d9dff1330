//! Lexicon-based medical concept extraction and TF-IDF feature vectors.

mod extract;
mod lexicon;
mod tfidf;

pub use extract::{ConceptCounts, ConceptMatcher, ConceptMention, MentionStore, MENTION_FORMAT_VERSION};
pub use lexicon::{default_exclusions, read_lexicon, write_lexicon, LexiconEntry};
pub use tfidf::{idf, ngram_counts, tfidf_features, tfidf_from_counts, FeatureKind, FeatureSet, FeatureVector};
