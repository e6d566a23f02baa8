//! Directional predictive coding of block compressive-sensing measurements.
//!
//! Pipeline: an 8-bit grayscale [`Image`] is split into `B x B` blocks,
//! each block is measured by a shared orthonormal random matrix, the
//! measurement vectors are predictively coded in the measurement domain
//! (four directional modes picked by ℓ1 residual, or the DPCM / plain-SQ
//! baselines), and the quantizer indices are written to a `.sdpc`
//! bitstream. Decoding replays the prediction loop and recovers the image
//! with a smoothed projected Landweber iteration.
//!
//! ```
//! use sdpc::{codec, reconstruction, CodecConfig, Image};
//!
//! let img = Image::new(32, 32, (0..1024).map(|i| (i % 251) as u8).collect()).unwrap();
//! let cfg = CodecConfig { block_size: 8, subrate: 1.0, step: 0.25, ..CodecConfig::default() };
//! let (stream, _) = codec::encode(&img, &cfg).unwrap();
//! let bytes = stream.to_bytes().unwrap();
//! let (decoded, _) = reconstruction::decode_image(&bytes, &Default::default()).unwrap();
//! assert!(reconstruction::psnr(&img, &decoded).unwrap() > 40.0);
//! ```

pub mod analysis;
pub mod bitstream;
pub mod codec;
pub mod error;
pub mod image_io;
pub mod reconstruction;
pub mod sensing;

pub use bitstream::{EncodedStream, RateEstimate, StreamHeader};
pub use codec::{CodecConfig, ModePolicy, ModeSet, PredictionMode, Quantizer};
pub use error::{AnalysisError, CodecError, ImageError, PgmError, RecoveryError, StreamError};
pub use image_io::{BlockLattice, Image, ScanOrder};
pub use reconstruction::{RecoveryConfig, RecoveryOverrides};
pub use sensing::{MeasurementGrid, SensingMatrix};
