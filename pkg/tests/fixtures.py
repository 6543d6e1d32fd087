"""
Small on-disk datasets shaped like the Herlev distribution.
"""

from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image

from django_papsmear.conf import HERLEV_FEATURE_COLUMNS
from django_papsmear.data import CellClass, FeatureTable, synth_blobs


def herlev_table(
    n_per_class: int = 40, separation: float = 4.0, seed: int = 0
) -> FeatureTable:
    """Two separated clusters under the 20 Herlev column names."""
    blobs = synth_blobs(n_per_class, dims=20, separation=separation, seed=seed)
    return FeatureTable(
        column_names=tuple(HERLEV_FEATURE_COLUMNS),
        features=blobs.features,
        cell_classes=blobs.cell_classes,
    )


def write_feature_csv(path, table: FeatureTable, class_column: str = 'class') -> Path:
    frame = pd.DataFrame(table.features, columns=list(table.column_names))
    frame[class_column] = [c.value for c in table.cell_classes]
    path = Path(path)
    frame.to_csv(path, index=False)
    return path


def write_image_tree(root, n_per_class: int = 12, size: int = 8, seed: int = 0) -> Path:
    """
    ``<root>/normal_intermediate`` holds dark noisy squares, ``<root>/severe_dysplastic``
    bright ones, so a small CNN separates them within a few epochs.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    for folder, level in (('normal_intermediate', 0.2), ('severe_dysplastic', 0.8)):
        directory = root / folder
        directory.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            pixels = np.clip(level + rng.normal(0.0, 0.05, size=(size, size, 3)), 0, 1)
            Image.fromarray((pixels * 255).astype(np.uint8), 'RGB').save(
                directory / f'cell{i:03d}.png'
            )
        # Segmentation masks ship next to the cells and are skipped
        Image.new('RGB', (size, size)).save(directory / 'cell000-d.png')
    return root


ABNORMAL = CellClass.SEVERE_DYSPLASIA
NORMAL = CellClass.INTERMEDIATE_SQUAMOUS
