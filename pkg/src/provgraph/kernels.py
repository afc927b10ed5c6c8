"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise (or when
``PROVGRAPH_PURE=1`` is set) the numpy implementations take over. Both
backends produce identical results.
"""

from __future__ import annotations

import logging
import os

from provgraph import _fallback

logger = logging.getLogger(__name__)

BACKEND = "python"
if os.environ.get("PROVGRAPH_PURE") != "1":
    try:
        from provgraph import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback
        logger.debug("compiled kernels unavailable, using numpy fallback")
    else:
        BACKEND = "compiled"
else:
    _impl = _fallback

fast_score_map = _impl.fast_score_map
hamming_matrix = _impl.hamming_matrix
adc_scores = _impl.adc_scores

__all__ = ["BACKEND", "fast_score_map", "hamming_matrix", "adc_scores"]
