from typing import Optional

import numpy as np
from scipy import stats


def _degenerate(x: np.ndarray, y: np.ndarray) -> bool:
    return x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0


def pearson(x, y) -> Optional[float]:
    """Pearson correlation, or None when either side has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if _degenerate(x, y):
        return None
    return float(stats.pearsonr(x, y).statistic)


def spearman(x, y) -> Optional[float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if _degenerate(x, y):
        return None
    return float(stats.spearmanr(x, y).statistic)
