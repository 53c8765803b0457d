//! The eight synthetic occlusion families, mid-grey mask application and
//! batch generation of occluded datasets.
//!
//! | id | region |
//! |----|--------|
//! | 1 | one eye, side drawn per image |
//! | 2 | nose |
//! | 3 | lower face (surgical mask) |
//! | 4 | both eyes and hair |
//! | 5 | one half of the image, side drawn per image |
//! | 6 | diagonal stripes over the whole image |
//! | 7 | everything outside the face ellipse |
//! | 8 | the face ellipse |

mod batch;
mod mask;

pub use batch::{
    load_mask, occlude_dataset, occlusion_rng, read_mask_index, write_mask_index, MaskRecord,
    OcclusionReport, MANIFEST_FILE, MASK_INDEX_FILE,
};
pub use mask::{
    apply_mask, generate_mask, mask_area_fraction, rasterize, Ellipse, MaskBitmap, MaskGeometry, MaskKind,
    Rect, Side,
};
