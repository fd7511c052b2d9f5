import numpy as np
import pytest

from vfcbf.geometry import CameraIntrinsics, RgbdImage
from vfcbf.scene_grid import DensityGrid, RenderParams
from vfcbf.world import RoomShell, SdfScene


@pytest.fixture
def room_scene() -> SdfScene:
    return SdfScene(primitives=(
        RoomShell(center=(0.0, 0.0, 0.5), size=(6.0, 6.0, 3.0)),))


@pytest.fixture
def small_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(width=33, height=33, hfov=np.pi / 2, max_range=10.0)


@pytest.fixture
def empty_grid() -> DensityGrid:
    return DensityGrid.empty((-3.5, -3.5, -1.5), (3.5, 3.5, 2.5),
                             (32, 32, 24), sigma_max=50.0)


def make_depth_image(depth: np.ndarray) -> RgbdImage:
    h, w = depth.shape
    return RgbdImage(width=w, height=h, rgb=np.zeros((h, w, 3)), depth=depth)


@pytest.fixture
def fast_render() -> RenderParams:
    return RenderParams(samples_per_ray=96, t_near=0.02, t_far=10.0)
