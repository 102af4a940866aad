"""Spherical-Gaussian material estimation and interactive texture editing."""

from .errors import (
    BackFaceError,
    ContractViolation,
    DegenerateLobeError,
    DivergenceError,
    EmptyCloudError,
    EmptyInputError,
    EmptyRegionError,
    EmptySceneError,
    ResolutionMismatchError,
    SegmenterUnavailableError,
    SgtexError,
    UnknownLabelError,
    ZeroCoverageError,
)
from .material import MaterialModel, SemanticMaterialTable, SurfaceSample, cosine_sg
from .mesh import Camera, Scene, load_obj, save_obj
from .render import RENDER_MODES, RenderPass, render
from .semantics import SegmentSet, SemanticLabelMap, UNLABELED, assign_pseudo_labels, cluster_segments
from .sg import SGMixture, SphericalGaussian, sg_inner_product, sg_integral, sg_product

__version__ = "0.1.0"

__all__ = [
    "BackFaceError",
    "Camera",
    "ContractViolation",
    "DegenerateLobeError",
    "DivergenceError",
    "EmptyCloudError",
    "EmptyInputError",
    "EmptyRegionError",
    "EmptySceneError",
    "MaterialModel",
    "RENDER_MODES",
    "RenderPass",
    "ResolutionMismatchError",
    "Scene",
    "SegmentSet",
    "SegmenterUnavailableError",
    "SemanticLabelMap",
    "SemanticMaterialTable",
    "SGMixture",
    "SgtexError",
    "SphericalGaussian",
    "SurfaceSample",
    "UNLABELED",
    "UnknownLabelError",
    "ZeroCoverageError",
    "assign_pseudo_labels",
    "cluster_segments",
    "cosine_sg",
    "load_obj",
    "render",
    "save_obj",
    "sg_inner_product",
    "sg_integral",
    "sg_product",
    "__version__",
]
