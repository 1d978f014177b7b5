from typing import Any, List, Sequence
import math

import numpy as np


__all__ = ['largest_remainder', 'sig_round', 'jsonable', 'TINY']


# Probabilities at or below this are treated as exact zeros in p·log p terms.
TINY = 1e-12


def largest_remainder(weights: Sequence[float], total: int) -> List[int]:
    """
    Splits `total` integer units proportionally to `weights` (Hamilton's method). Ties on the remainder go to the
    lower index, so the result is deterministic.
    """
    weights = np.asarray(weights, dtype=float)

    if total < 0:
        raise ValueError(f'Cannot split a negative total {total}')

    if weights.sum() <= 0:
        raise ValueError('Weights must have a positive sum')

    quotas = weights / weights.sum() * total
    floors = np.floor(quotas + 1e-9).astype(int)
    floors = np.minimum(floors, np.ceil(quotas).astype(int))
    shortfall = total - int(floors.sum())
    remainders = quotas - floors
    order = sorted(range(len(weights)), key=lambda i: (-round(remainders[i], 12), i))

    for idx in order[:shortfall]:
        floors[idx] += 1

    return [int(x) for x in floors]


def sig_round(x: float, digits: int = 9) -> float:
    if x == 0 or not math.isfinite(x):
        return float(x)

    return float(f'{x:.{digits}g}')


def jsonable(obj: Any, digits: int = 9) -> Any:
    """Converts numpy scalars/arrays, tuples and sets into JSON-friendly values with floats at `digits` sig. digits."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v, digits) for k, v in obj.items()}

    if isinstance(obj, (set, frozenset)):
        return [jsonable(x, digits) for x in sorted(obj)]

    if isinstance(obj, (list, tuple)):
        return [jsonable(x, digits) for x in obj]

    if isinstance(obj, np.ndarray):
        return [jsonable(x, digits) for x in obj.tolist()]

    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)

    if isinstance(obj, (int, np.integer)):
        return int(obj)

    if isinstance(obj, (float, np.floating)):
        return sig_round(float(obj), digits)

    return obj
