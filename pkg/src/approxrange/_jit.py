"""Compilation settings for the numba kernels.

Kernels never allocate, so reference counting is switched off: with it on,
every call that passes a tuple of arrays pays atomic incref/decref pairs per
array, which dominates the cost of a rank or select.
"""

import numba as nb

kernel = nb.njit(cache=True, _nrt=False)
