"""Attention concatenation cost volumes for stereo matching."""

from ._core import (
    bad_x,
    build_concat_volume,
    census_features,
    d1,
    epe,
    f2i_topk,
    generate_stereogram,
    group_correlation,
    mapm_level,
    match,
    read_kitti_disp_png,
    read_pfm,
    selftest,
    smooth_l1,
    soft_argmin,
    softmax_over_disparity,
    write_kitti_disp_png,
    write_pfm,
)

__all__ = [
    "bad_x",
    "build_concat_volume",
    "census_features",
    "d1",
    "epe",
    "f2i_topk",
    "generate_stereogram",
    "group_correlation",
    "mapm_level",
    "match",
    "read_kitti_disp_png",
    "read_pfm",
    "selftest",
    "smooth_l1",
    "soft_argmin",
    "softmax_over_disparity",
    "write_kitti_disp_png",
    "write_pfm",
]
