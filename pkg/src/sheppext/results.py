"""Small result records shared by the simulation and experiment layers."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass


def config_digest(config: dict) -> str:
    """SHA-256 of the canonical JSON encoding of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class McEstimate:
    """Exceedance fraction ``p_hat`` of ``n`` replications at threshold ``u``."""

    p_hat: float
    stderr: float
    n: int
    u: float
    config_digest: str
    seed: int

    @classmethod
    def from_count(cls, count, n, u, digest, seed):
        p = count / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n, float(u), digest, int(seed))

    def agrees_with(self, other, k=3.0):
        """``|p1 - p2| <= k sqrt(se1^2 + se2^2)``."""
        se = math.hypot(self.stderr, other.stderr)
        return abs(self.p_hat - other.p_hat) <= k * se
