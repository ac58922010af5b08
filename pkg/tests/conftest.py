import numpy as np
import pytest

from teleop.arm import default_chain
from teleop.fileformats import save_point_cloud

FIXTURES = "fixtures"


@pytest.fixture(scope="session")
def chain():
    return default_chain()


def make_tabletop_cloud(rng, n_plane=20000, n_outliers=None, z=0.75, sigma=0.002,
                        x_range=(0.1, 0.9), y_range=(-0.4, 0.4)):
    """Synthetic tabletop: noisy plane points plus uniform outliers.

    Returns (cloud, generator_area). Outlier fraction defaults to 20%
    of the total cloud.
    """
    if n_outliers is None:
        n_outliers = n_plane // 4  # 20% of the total
    plane = np.column_stack([
        rng.uniform(*x_range, n_plane),
        rng.uniform(*y_range, n_plane),
        z + rng.normal(0.0, sigma, n_plane),
    ])
    outliers = np.column_stack([
        rng.uniform(x_range[0] - 0.2, x_range[1] + 0.2, n_outliers),
        rng.uniform(y_range[0] - 0.2, y_range[1] + 0.2, n_outliers),
        rng.uniform(0.0, 1.5, n_outliers),
    ])
    cloud = np.vstack([plane, outliers])
    area = (x_range[1] - x_range[0]) * (y_range[1] - y_range[0])
    return cloud, area


@pytest.fixture(scope="session")
def tabletop_cloud():
    return make_tabletop_cloud(np.random.default_rng(42))


@pytest.fixture(scope="session")
def tabletop_cloud_file(tmp_path_factory, tabletop_cloud):
    path = tmp_path_factory.mktemp("cloud") / "tabletop.cloud"
    save_point_cloud(path, tabletop_cloud[0], binary=True)
    return path


SCENE_ONE_BOX = """\
[catalog]
box_s 0.03 0.03 0.05 0.2 0.05

[desktop]
plane 0 0 1 0
boundary 0.15 -0.45  0.85 -0.45  0.85 0.45  0.15 0.45

[instances]
box1 box_s 0.45 -0.15 0.05  1 0 0 0

[arm_start]
0 0.6 0 1.6 0 0.9 1.57
"""


@pytest.fixture()
def one_box_scene_file(tmp_path):
    path = tmp_path / "one_box.scene"
    path.write_text(SCENE_ONE_BOX, encoding="utf-8")
    return path
