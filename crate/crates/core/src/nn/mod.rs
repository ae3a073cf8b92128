//! Learnable layers and the composite blocks of the network.
//!
//! Blocks hold [`ParamId`]s only; their weights live in a [`ParamStore`]
//! and are recorded on a tape for each forward pass with
//! [`ParamStore::bind`]. Forward functions are generic over the scalar type
//! so the same block can be checked in `f64`.

mod blocks;
mod layers;
mod param;

pub use blocks::{
    window_for_frame, FeatureExtractor, GfmDirection, GfmSynth, MambaVr, Msmm, Reconstruct, Tfe, TokenCoord,
};
pub use layers::{from_tokens, to_tokens, Conv2d, Conv3d, Linear, Mixer, MixerDims, ResBlock, Ssm};
pub use param::{Builder, Init, ParamId, ParamStore, Params};

use crate::sequencing::FrequencyRule;

/// Widths and switches shared by the blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Feature channels `C`; a multiple of 4 when rotary codes are on.
    pub channels: usize,
    /// Mixer expansion factor.
    pub expand: usize,
    /// State width `S` of every selective scan.
    pub state: usize,
    /// Pyramid levels `N` of the fusion module.
    pub pyramid_levels: usize,
    /// Residual blocks in the extractor and the reconstruction head.
    pub res_blocks: usize,
    /// Register tokens per frame in each MambaVR block.
    pub registers_per_frame: usize,
    pub use_registers: bool,
    pub use_spe: bool,
    pub spe_rule: FrequencyRule,
    /// Share weights between the two directional fusion branches.
    pub tie_gfm_branches: bool,
    /// Start residual branches and fusion projections at zero.
    pub zero_init: bool,
    /// Hidden width of the channel-attention bottleneck.
    pub attn_hidden: usize,
    /// Rows of each temporal position table.
    pub max_frames: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            expand: 2,
            state: 16,
            pyramid_levels: 3,
            res_blocks: 5,
            registers_per_frame: 4,
            use_registers: true,
            use_spe: true,
            spe_rule: FrequencyRule::Scaled,
            tie_gfm_branches: false,
            zero_init: true,
            attn_hidden: 16,
            max_frames: 8,
        }
    }
}

impl NetConfig {
    pub fn mixer(&self) -> MixerDims {
        MixerDims {
            channels: self.channels,
            expand: self.expand,
            state: self.state,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: String| Err(crate::Error::Config(m));
        if self.channels == 0 || self.expand == 0 || self.state == 0 || self.attn_hidden == 0 {
            return bad("widths must be positive".into());
        }
        if self.use_spe && !self.channels.is_multiple_of(4) {
            return bad(format!("channels {} must be divisible by 4 with rotary codes", self.channels));
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid needs at least one level".into());
        }
        if self.max_frames < 3 {
            return bad("max_frames must be at least 3".into());
        }
        Ok(())
    }
}
