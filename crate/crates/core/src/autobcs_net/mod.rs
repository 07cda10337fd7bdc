//! The AutoBCS reconstruction network.

mod io;
mod model;
mod octave;
mod train;
mod unet;

pub use io::{load_model, read_model, save_model, write_model};
pub use model::{half_mse, loss_init, loss_total, AutoBcsModel, ForwardOutput, NetworkConfig};
pub use octave::{
    octave_split, Activated, EncodeBlock, ModOctConv, OctBias, OctFeature, OctPool, OctRelu, OctTransConv, UpBlock,
};
pub use train::{train, EpochLog, LrPhase, TrainConfig, TrainReport, DEFAULT_RATES};
pub use unet::OctUnet;
