"""Search U-Net layouts for the one whose parameter count best matches a target.

The published network reports 628,710 trainable parameters with 32/64 filter
levels, K=7 and 1024 input features, but not its exact depth or the widths
of the up-sampling and gating convolutions. The search enumerates a small,
fixed grid over those unknowns and ranks by distance to the target count.
"""

import itertools
from dataclasses import dataclass

from .unet import ModelConfig, param_count

REFERENCE_PARAM_COUNT = 628_710

LEVELS = (3, 4, 5, 6)
UP_KERNELS = (1, 2, 3, 7)
GATE_REDUCTIONS = (1, 2)
BOTTLENECK_WIDTHS = (None, 128)


@dataclass(frozen=True)
class Candidate:
    config: ModelConfig
    count: int
    target: int

    @property
    def error(self):
        return abs(self.count - self.target)

    def describe(self):
        c = self.config
        return (
            f"filters={list(c.filters_per_level)} up_kernel={c.up_kernel} "
            f"gate_reduction={c.gate_reduction} params={self.count} diff={self.count - self.target:+d}"
        )


def filter_schemes(levels, narrow=32, wide=64):
    """Every ``narrow..narrow, wide..wide`` split with at least one narrow level,
    optionally ending in a wider bottleneck level."""
    for n_narrow in range(1, levels + 1):
        base = [narrow] * n_narrow + [wide] * (levels - n_narrow)
        for bottleneck in BOTTLENECK_WIDTHS:
            if bottleneck is None:
                yield tuple(base)
            elif levels > 1:
                yield tuple(base[:-1] + [bottleneck])


def search(target=REFERENCE_PARAM_COUNT, input_dim=1024, kernel_len=7, top=10):
    """Return the ``top`` candidates sorted by (|diff|, count, description).

    The order is total, so the result is reproducible.
    """
    seen = set()
    found = []
    for levels, up_k, red in itertools.product(LEVELS, UP_KERNELS, GATE_REDUCTIONS):
        for filters in filter_schemes(levels):
            key = (filters, up_k, red)
            if key in seen:
                continue
            seen.add(key)
            cfg = ModelConfig(
                input_dim=input_dim,
                filters_per_level=filters,
                kernel_len=kernel_len,
                up_kernel=up_k,
                gate_reduction=red,
            )
            found.append(Candidate(cfg, param_count(cfg), target))
    found.sort(key=lambda c: (c.error, c.count, c.describe()))
    return found[:top]


def best_config(target=REFERENCE_PARAM_COUNT):
    return search(target, top=1)[0]
