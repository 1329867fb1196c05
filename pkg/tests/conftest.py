import numpy as np
import pytest

from boxcalib.affinity import Scene
from boxcalib.geometry import Box3D, OrientedBox, RigidTransform

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_rotation(rng) -> np.ndarray:
    """Uniform random rotation via a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_transform(rng, scale=20.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, size=3))


def random_oriented_box(rng, spread=1.0) -> OrientedBox:
    return OrientedBox(random_rotation(rng), rng.uniform(-spread, spread, size=3),
                       rng.uniform(0.5, 3.0, size=3))


def grid_scene(categories=("car", "truck", "car", "pedestrian", "cyclist", "car"), spacing=15.0,
               frame_id="grid") -> Scene:
    """Pairwise disjoint, non-square boxes on a line with distinct yaws."""
    sizes = {"car": (4.5, 1.9, 1.6), "truck": (8.0, 2.5, 3.2),
             "pedestrian": (0.6, 0.5, 1.75), "cyclist": (1.8, 0.6, 1.7)}
    boxes = []
    for k, cat in enumerate(categories):
        size = np.array(sizes[cat]) * (1.0 + 0.03 * k)
        boxes.append(Box3D(cat, [spacing * k, 3.0 * (k % 3), size[2] / 2], size, 0.4 + 0.7 * k))
    return Scene(boxes, frame_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
