import os
from typing import Any

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

HERLEV_FEATURE_COLUMNS = [
    'nucleus_area',
    'cytoplasm_area',
    'nc_ratio',
    'nucleus_brightness',
    'cytoplasm_brightness',
    'nucleus_shortest_diameter',
    'nucleus_longest_diameter',
    'nucleus_elongation',
    'nucleus_roundness',
    'cytoplasm_shortest_diameter',
    'cytoplasm_longest_diameter',
    'cytoplasm_elongation',
    'cytoplasm_roundness',
    'nucleus_perimeter',
    'cytoplasm_perimeter',
    'nucleus_position',
    'nucleus_maxima',
    'nucleus_minima',
    'cytoplasm_maxima',
    'cytoplasm_minima',
]

DEFAULTS: dict[str, Any] = {
    'N_JOBS': None,
    'OUTPUT_DIR': 'papsmear-output',
    'REPRODUCIBLE': False,
    'FEATURE_COLUMNS': HERLEV_FEATURE_COLUMNS,
    'CLASS_COLUMN': 'class',
    'IMAGE_SIZE': 64,
}


def get_setting(name: str) -> Any:
    """
    Read one key of the ``PAPSMEAR`` settings dict, falling back to DEFAULTS.

    ``N_JOBS`` resolves to the CPU count when unset.
    """
    try:
        user_settings = getattr(settings, 'PAPSMEAR', {})
    except ImproperlyConfigured:
        # Library used outside a configured Django project
        user_settings = {}

    unknown = set(user_settings) - set(DEFAULTS)
    if unknown:
        raise ImproperlyConfigured(
            f'Unknown PAPSMEAR setting(s): {", ".join(sorted(unknown))}'
        )
    if name not in DEFAULTS:
        raise KeyError(name)

    value = user_settings.get(name, DEFAULTS[name])
    if name == 'N_JOBS' and value is None:
        value = os.cpu_count() or 1
    return value
