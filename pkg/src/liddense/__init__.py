"""Sparse-to-dense depth completion toolkit.

Scan-line dataset generation, KITTI-style metrics, a verified reverse-mode
tensor core, content-adaptive upsampling, a virtual-normal loss, and a
desk-scale trainable two-branch completion network.
"""

from .depth_io import (
    CameraIntrinsics,
    DepthMap,
    RgbImage,
    decode_depth_png,
    encode_depth_png,
    load_calibration,
    overlay,
    sparsity,
    valid_mask,
)
from .metrics import EvalReport, evaluate, evaluate_oracle
from .scanline import (
    PointCloud,
    ScanLineAssignment,
    assign_lines,
    backproject,
    convert_dataset,
    convert_frame,
    extract_depthmap,
    select_lines,
    vertical_angle,
)
from .vnl import VnlConfig, sample_groups, virtual_normal, vnl_loss
from .guided_upsample import GuidedUpsampler, UpsampleConfig
from .network import TwoBranchNet, fuse, mse_loss, total_loss
from .optim import AdamW
from .scenes import make_synthetic_scene
from .training import TrainConfig, train_toy

__version__ = "0.1.0"
