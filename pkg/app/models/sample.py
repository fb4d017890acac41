from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from app.core.exceptions import BlockLayoutMismatch, InvalidState


@dataclass(frozen=True)
class BlockLayout:
    """Ordered named blocks of the random vector, e.g. (rho, T, b)"""

    names: Tuple[str, ...]
    sizes: Tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.sizes):
            raise BlockLayoutMismatch("layout needs one size per block name")
        if any(size < 1 for size in self.sizes):
            raise BlockLayoutMismatch(f"block sizes must be positive, got {self.sizes}")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def dimension(self) -> int:
        return sum(self.sizes)

    @property
    def slices(self) -> Dict[str, slice]:
        offsets = np.cumsum((0,) + self.sizes)
        return {name: slice(int(offsets[i]), int(offsets[i + 1])) for i, name in enumerate(self.names)}

    def describe(self) -> Dict[str, int]:
        return dict(zip(self.names, self.sizes))


@dataclass(frozen=True)
class ParameterSample:
    sample_id: int
    z: np.ndarray
    layout: BlockLayout
    stream: str = field(default="train")

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(-1)
        if z.size != self.layout.dimension:
            raise BlockLayoutMismatch(
                f"sample {self.sample_id} has {z.size} components, layout expects {self.layout.dimension}"
            )
        if not np.all(np.abs(z) <= 1.0):
            raise InvalidState(f"sample {self.sample_id} has components outside [-1, 1]")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    def block(self, name: str) -> np.ndarray:
        try:
            return self.z[self.layout.slices[name]]
        except KeyError:
            raise BlockLayoutMismatch(f"layout has no block named {name!r}") from None
