from dataclasses import dataclass

import numpy as np


@dataclass
class ClipCounter:
    """Counts values that fell outside [-1, 1] before saturation or reporting"""
    count: int = 0
    total: int = 0

    def observe(self, values: np.ndarray, limit: float = 1.0) -> int:
        outside = int(np.count_nonzero(np.abs(values) > limit))
        self.count += outside
        self.total += int(np.size(values))
        return outside

    @property
    def fraction(self) -> float:
        return self.count / self.total if self.total else 0.0
