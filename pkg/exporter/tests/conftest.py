import numpy as np
import pytest
from PIL import Image


def write_dataset(root, classes, per_class, size=32, seed=0):
    """Seeded random-noise PNGs, one folder per class."""
    rng = np.random.default_rng(seed)
    for name in classes:
        cdir = root / name
        cdir.mkdir(parents=True)
        for i in range(per_class):
            arr = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
            Image.fromarray(arr).save(cdir / f"img_{i:03d}.png")
    return root


@pytest.fixture(scope="session")
def two_class_dataset(tmp_path_factory):
    return write_dataset(tmp_path_factory.mktemp("two"), ["dog", "fish"], 3)
