"""Range syntax for sweep arguments: `a..b` integer ranges, `a:b:n` linear grids, comma lists."""
from typing import List

import numpy as np

from ubmot.utils.errors import DomainError


def parse_int_range(text: str) -> List[int]:
    """'1..30' -> [1, ..., 30]; '1,4,9' -> [1, 4, 9]; '5' -> [5]."""
    out: List[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if ".." in part:
                lo, hi = (int(x) for x in part.split(".."))
                if hi < lo:
                    raise DomainError(f"empty range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError as e:
            raise DomainError(f"cannot parse integer range {text!r}") from e
    return out


def parse_real_grid(text: str) -> List[float]:
    """'0:1:11' -> 11 points from 0 to 1 inclusive; '0.5,2' -> [0.5, 2.0]; '1..3' -> [1.0, 2.0, 3.0]."""
    out: List[float] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if ":" in part:
                lo, hi, n = part.split(":")
                n = int(n)
                if n < 1:
                    raise DomainError(f"grid {part!r} needs at least one point")
                out.extend(float(x) for x in np.linspace(float(lo), float(hi), n))
            elif ".." in part:
                out.extend(float(x) for x in parse_int_range(part))
            else:
                out.append(float(part))
        except ValueError as e:
            raise DomainError(f"cannot parse real grid {text!r}") from e
    return out
