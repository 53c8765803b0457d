//! Image representation, codecs, transforms and augmentation.

mod augment;
mod codec;
mod tensor;
mod transform;

pub use augment::{apply_augmentation, sample_augmentation, AugmentConfig, AugmentParams};
pub use codec::{decode_image, encode_image, read_image, write_image, ImageFormat};
pub use tensor::{quantize, ImageTensor};
pub use transform::{adjust_lighting, affine_transform, resize_bilinear};
