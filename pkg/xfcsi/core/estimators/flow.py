from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..bundle import ModelBundle
from ..errors import ContractError
from ..infer import infer_batch
from ..normalize import encoder_inputs
from .base import ChannelEstimator, EstimateContext, EstimateResult


@dataclass
class FlowEstimator:
    """Sensing-only inference: MAP latent integrated over `k` velocity calls."""
    bundle: ModelBundle
    k: int = 7
    integrator: str = "ab2"
    extent: float = 50.0
    batch_size: int = 64
    method_id: str = "flow"
    display_name: str = "Cross-modal flow"
    needs_pilots: bool = False

    def estimate(self, ctx: EstimateContext) -> EstimateResult:
        return self.estimate_many([ctx])[0]

    def estimate_many(self, contexts: Sequence[EstimateContext]) -> List[EstimateResult]:
        out: List[EstimateResult] = []
        for start in range(0, len(contexts), self.batch_size):
            chunk = contexts[start:start + self.batch_size]
            images, clouds, coords = encoder_inputs(
                np.stack([c.sample.image for c in chunk]),
                np.stack([c.sample.cloud for c in chunk]),
                np.stack([c.sample.coord for c in chunk]),
                self.extent,
            )
            for h in infer_batch(self.bundle, images, clouds, coords, self.k, self.integrator):
                out.append(EstimateResult(h=h, encoder_calls=1, velocity_calls=self.k))
        return out


def make_estimator(
    bundle: ModelBundle | None = None,
    flow_k: int = 7,
    integrator: str = "ab2",
    extent: float = 50.0,
    **_: object,
) -> ChannelEstimator:
    if bundle is None:
        raise ContractError("the flow estimator needs trained checkpoints")
    return FlowEstimator(bundle=bundle, k=flow_k, integrator=integrator, extent=extent)
