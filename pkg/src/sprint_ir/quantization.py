"""Float term weight -> integer impact conversion.

Two schemes are supported:

``range-nbits``
    Linear map of ``(0, R]`` onto ``[1, 2**b - 1]``.  Used by the scalar-weight
    models (uniCOIL, DeepImpact, TILDEv2) and SPARTA.
``scale-100``
    ``round(100 * w)``, floored at 1.  Used by the SPLADE family.

Rounding is half-away-from-zero in both cases.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

from .errors import InvalidInputError
from .representation import TermWeightVector

log = logging.getLogger(__name__)

METHODS = ("range-nbits", "scale-100")


@dataclass(frozen=True)
class QuantizationConfig:
    method: str = "range-nbits"
    original_score_range: float = 5.0
    nbits: int = 8

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown quantization method {self.method!r}; expected one of {METHODS}")
        if self.method == "range-nbits":
            if not (math.isfinite(self.original_score_range) and self.original_score_range > 0):
                raise InvalidInputError(f"original_score_range must be > 0, got {self.original_score_range!r}")
            if isinstance(self.nbits, bool) or not isinstance(self.nbits, int) or not 2 <= self.nbits <= 16:
                raise InvalidInputError(f"quantization_nbits must be an integer in [2, 16], got {self.nbits!r}")

    @property
    def max_impact(self) -> int | None:
        return (1 << self.nbits) - 1 if self.method == "range-nbits" else None

    def to_dict(self) -> dict:
        return {
            "quantization_method": self.method,
            "original_score_range": self.original_score_range,
            "quantization_nbits": self.nbits,
        }


def round_half_away(x: float) -> int:
    # floor(x + 0.5) misrounds values just below .5 due to the addition
    f = math.floor(abs(x))
    r = f + 1 if abs(x) - f >= 0.5 else f
    return int(math.copysign(r, x)) if x else 0


def _check_positive(w):
    if not (isinstance(w, (int, float)) and math.isfinite(w) and w > 0):
        raise InvalidInputError(f"cannot quantize non-positive or non-finite weight {w!r}")


def quantize_range_nbits(w: float, cfg: QuantizationConfig, counter: Counter | None = None) -> int:
    if cfg.method != "range-nbits":
        raise InvalidInputError(f"config method is {cfg.method!r}, not 'range-nbits'")
    w = float(w)
    _check_positive(w)
    top = cfg.max_impact
    q = round_half_away(w * top / cfg.original_score_range)
    if q > top:
        if counter is not None:
            counter["clamped_high"] += 1
        return top
    return max(q, 1)


def quantize_scale100(w: float) -> int:
    w = float(w)
    _check_positive(w)
    return max(round_half_away(w * 100), 1)


def quantize_weight(w: float, cfg: QuantizationConfig, counter: Counter | None = None) -> int:
    if cfg.method == "range-nbits":
        return quantize_range_nbits(w, cfg, counter)
    return quantize_scale100(w)


def quantize_vector(
    rep: TermWeightVector, cfg: QuantizationConfig, counter: Counter | None = None
) -> TermWeightVector:
    """Entry-wise quantization; keys and source id are preserved."""
    local = Counter() if counter is None else counter
    before = local["clamped_high"]
    out = TermWeightVector(
        {t: quantize_weight(w, cfg, local) for t, w in rep.items()}, rep.source_id
    )
    clamped = local["clamped_high"] - before
    if clamped:
        log.debug("%s: %d weights above range %.3g clamped", rep.source_id, clamped, cfg.original_score_range)
    return out
