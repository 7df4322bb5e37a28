import numpy as np
import pytest

from shelfsearch.models.geometry import Pose2
from shelfsearch.models.scene import ObjectKind, ObjectSpec, Scene, ShelfSpec
from shelfsearch.models.sim import RolloutConfig
from shelfsearch.services.geometry import rectangle
from shelfsearch.services.render import DepthImage, PixelMask


def make_box(object_id, x_min, x_max, z_min, z_max, height=0.10, is_target=False):
    kind = ObjectKind.TARGET if is_target else ObjectKind.CUBOID
    return ObjectSpec(
        id=object_id,
        kind=kind,
        footprint=rectangle(x_max - x_min, z_max - z_min),
        height=height,
        pose=Pose2(x=(x_min + x_max) / 2, z=(z_min + z_max) / 2),
        is_target=is_target,
    )


@pytest.fixture
def shelf():
    return ShelfSpec()


@pytest.fixture
def box():
    return make_box


@pytest.fixture
def scene_of(shelf):
    def build(*objects, target_id="target"):
        return Scene(shelf=shelf, objects=tuple(objects), target_id=target_id)
    return build


@pytest.fixture
def single_occluder_scene(scene_of):
    """One wide cuboid directly in front of a fully hidden target, free space on both sides"""
    return scene_of(
        make_box("occluder", 0.25, 0.35, 0.05, 0.10),
        make_box("target", 0.265, 0.335, 0.20, 0.27, height=0.07, is_target=True),
    )


@pytest.fixture
def small_rollout_cfg():
    return RolloutConfig(width_px=128, height_px=128)


@pytest.fixture
def strip_image():
    """
    Synthetic 40-column observation, 1 cm per column, back wall at 1.0: segments made of
    (first column, last column, depth) triples span every row.
    """
    def build(*segments, height_px=4):
        data = np.full((height_px, 40), 1.0)
        for first, last, depth in segments:
            data[:, first:last + 1] = depth
        return DepthImage(data=data, pitch_x=0.01, pitch_y=0.01, back_depth=1.0)
    return build


@pytest.fixture
def no_target():
    return PixelMask.empty(40, 4)
