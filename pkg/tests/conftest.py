import os

import pytest

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures", "kitti")


@pytest.fixture
def fixture_root():
    return FIXTURE_DIR


def kitti_root():
    """Real KITTI train root for gated tests, or None."""
    root = os.environ.get("KITTI_ROOT")
    if root and os.path.isdir(os.path.join(root, "label_2")):
        return root
    return None


needs_kitti = pytest.mark.skipif(
    kitti_root() is None, reason="real KITTI dataset not available (set KITTI_ROOT)"
)
