//! Dense numeric core: embedding tables, document encoders with analytic
//! gradients, and a finite-difference checker.

pub mod encoder;
pub mod gradcheck;
pub mod gru;
pub mod table;

pub use encoder::{dropout_mask, encode_meanpool, mean_of_rows, EncodedDoc, Encoder, EncoderGrads, EncoderKind, Provenance};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use gru::{BiGru, BiGruTape, CellTape, GruCell, GruOutput, Linear};
pub use table::{load_word2vec_text, read_word2vec_rows, write_word2vec_text, EmbeddingTable, RowGrads};
