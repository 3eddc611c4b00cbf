"""Save/load network parameters in the named-section store format.

Each layer matrix or bias is one named section; 1-D vectors are stored
as single-row matrices.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .descriptors import AggregationParams, SoftPParams, TwoLayerMLP
from .storeio import read_named_stores, write_named_stores


def _mlp_sections(prefix: str, mlp: TwoLayerMLP) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.w1": mlp.w1,
        f"{prefix}.b1": mlp.b1[None, :],
        f"{prefix}.w2": mlp.w2,
        f"{prefix}.b2": mlp.b2[None, :],
    }


def _mlp_from_sections(prefix: str, sections: dict[str, np.ndarray], activation: str) -> TwoLayerMLP:
    try:
        return TwoLayerMLP(
            w1=np.asarray(sections[f"{prefix}.w1"], dtype=np.float64),
            b1=np.asarray(sections[f"{prefix}.b1"], dtype=np.float64)[0],
            w2=np.asarray(sections[f"{prefix}.w2"], dtype=np.float64),
            b2=np.asarray(sections[f"{prefix}.b2"], dtype=np.float64)[0],
            activation=activation,
        )
    except KeyError as exc:
        raise ValueError(f"parameter file is missing section {exc.args[0]!r}") from exc


def save_descriptor_params(
    softp: SoftPParams, aggregation: AggregationParams, path: str | Path
) -> None:
    sections = {
        "softp.alpha_epsilon": np.array([[softp.alpha, softp.epsilon]]),
        **_mlp_sections("softp.phi", softp.phi),
        **_mlp_sections("agg.compress", aggregation.compress),
        **_mlp_sections("agg.probe", aggregation.probe),
    }
    if aggregation.token_proj is not None:
        sections.update(_mlp_sections("agg.token", aggregation.token_proj))
    write_named_stores(sections, path)


def load_descriptor_params(path: str | Path) -> tuple[SoftPParams, AggregationParams]:
    sections = read_named_stores(path)
    alpha, epsilon = (float(x) for x in sections["softp.alpha_epsilon"][0])
    softp = SoftPParams(
        alpha=alpha, epsilon=epsilon, phi=_mlp_from_sections("softp.phi", sections, "relu")
    )
    token_proj: Optional[TwoLayerMLP] = None
    if "agg.token.w1" in sections:
        token_proj = _mlp_from_sections("agg.token", sections, "relu")
    aggregation = AggregationParams(
        compress=_mlp_from_sections("agg.compress", sections, "relu"),
        probe=_mlp_from_sections("agg.probe", sections, "relu"),
        token_proj=token_proj,
    )
    return softp, aggregation
