//! The toy generative joint source-channel codec: patch embedding and mask
//! layer, encoder attention, per-level channel embedding, latent set expansion
//! and decoder attention.

mod attention;
mod codec;
mod patches;

pub use attention::{attention_backward, attention_block, AttentionCache, AttentionParams};
pub use codec::{
    channel_decode, channel_decode_backward, channel_encode, channel_encode_backward,
    codec_backward, codec_forward, noiseless, semantic_decode, semantic_decode_backward,
    semantic_encode, semantic_encode_backward, ChannelEncodeCache, CodecForward, CodecParams,
    DecodeCache, EncodeCache, EncodedChannelFrame, SemanticSequence,
};
pub use patches::{patchify, unpatchify, CodecDims, PatchGrid};

use thiserror::Error;

use crate::channel::ChannelError;

#[derive(Debug, Error, PartialEq)]
pub enum GjsccError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("rate level {delta} is not one of {levels:?}")]
    IllegalLevel { delta: usize, levels: [usize; 3] },
    #[error("retained position set is empty")]
    EmptyRetained,
    #[error("retained positions must be strictly increasing and in range: {0:?}")]
    InvalidPositions(Vec<usize>),
    #[error("frame layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}
