"""camoflow: find camouflaged objects by the one thing they cannot hide — motion.

The pipeline registers consecutive frames of a video under a robust
background homography estimated from optical flow, then segments whatever
refuses to follow it.  No training, no appearance model, no weights.
"""

__version__ = "0.1.0"

from .errors import (
    CamoflowError,
    ConfigError,
    DegenerateConfigurationError,
    FlowFormatError,
    InsufficientSupportError,
    NoModelFoundError,
    NonInvertibleHomographyError,
    PipelineError,
    PointAtInfinityError,
)
from .geometry import (
    Correspondences,
    apply_homography,
    build_dlt_matrix,
    canonicalize_homography,
    corner_transfer_error,
    estimate_homography,
    homography_residuals,
    invert_homography,
    normalized_grid,
    normalized_to_pixels,
    pixels_to_normalized,
    solve_weighted_dlt,
    warp_image,
)
from .flow import (
    flow_to_color,
    flow_to_correspondences,
    read_flo,
    warp_by_flow,
    write_flo,
)
from .registration import (
    RansacHomography,
    RegistrationConfig,
    RegistrationResult,
    SoftInlierHomography,
    align_and_diff,
    estimate_irls,
    estimate_ransac,
    registration_loss,
    soft_inlier_labels,
)
from .segmentation import (
    MotionSegmenter,
    SegmentationConfig,
    otsu_threshold,
    residual_motion_map,
    segment_pair,
    segment_sequence,
    temporal_smooth,
    threshold_and_clean,
)
from .synthgen import (
    SpriteConfig,
    SynthConfig,
    SyntheticSequence,
    generate_sequence,
    load_sequence,
    quad_to_homography,
    save_sequence,
    viewport_pair_homography,
)
from .evaluation import (
    BoundingBox,
    EvalReport,
    box_iou,
    contour_accuracy,
    evaluate_masks,
    interpolate_boxes,
    mask_box_iou,
    min_enclosing_box,
    region_similarity,
)
from .config import PipelineConfig, load_config

__all__ = [name for name in dir() if not name.startswith("_")]
