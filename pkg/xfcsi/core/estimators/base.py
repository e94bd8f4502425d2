from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence

from ..channel import ChannelMatrix
from ..model import SensingSample
from ..pilots import PilotObservation


@dataclass(frozen=True)
class EstimateContext:
    """
    What one estimation call may look at. Pilot-based methods read `obs`,
    sensing methods read `sample` (and never its ground-truth channel).
    """
    sample: SensingSample
    obs: Optional[PilotObservation] = None


@dataclass
class EstimateResult:
    h: ChannelMatrix
    flags: List[str] = field(default_factory=list)
    encoder_calls: int = 0
    velocity_calls: int = 0


class ChannelEstimator(Protocol):
    """
    Estimator plugin interface.
    """
    method_id: str
    display_name: str
    needs_pilots: bool

    def estimate(self, ctx: EstimateContext) -> EstimateResult:
        ...

    def estimate_many(self, contexts: Sequence[EstimateContext]) -> List[EstimateResult]:
        ...
