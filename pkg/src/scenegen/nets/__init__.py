from .common import EMBED_DIM, LOCATION_DIM, NOISE_DIM, APPEARANCE_DIM, MASK_SIZE, scaled
from .generators import LayoutGraphNet, MaskGenerator, BoxPredictor, AppearanceEncoder
from .renderer import ImageRenderer
from .discriminators import (
    MaskDiscriminator,
    LayoutImageDiscriminator,
    MultiScaleLayoutImageDiscriminator,
    ObjectPatchDiscriminator,
    crop_objects,
    halve_resolution,
)

__all__ = [
    "EMBED_DIM",
    "LOCATION_DIM",
    "NOISE_DIM",
    "APPEARANCE_DIM",
    "MASK_SIZE",
    "scaled",
    "LayoutGraphNet",
    "MaskGenerator",
    "BoxPredictor",
    "AppearanceEncoder",
    "ImageRenderer",
    "MaskDiscriminator",
    "LayoutImageDiscriminator",
    "MultiScaleLayoutImageDiscriminator",
    "ObjectPatchDiscriminator",
    "crop_objects",
    "halve_resolution",
]
