"""Parameter and FLOP accounting from layer arithmetic (2 FLOPs per multiply-accumulate)."""

from dataclasses import asdict, dataclass
from typing import Iterable, List, Sequence, Tuple

import pandas as pd

from autodiff.layers import BatchNorm, Layer
from feedback.codec import COMPRESSION_RATIOS, CodecConfig, CodecModel, build


@dataclass
class CostReport:
    label: str
    compression_ratio: float
    latent_head: str
    parameter_count: int
    encoder_params: int
    decoder_params: int
    head_params: int
    trunk_params: int  # trunk convolutions only
    norm_params: int  # batch-norm gamma and beta
    flops_per_forward: int
    encoder_flops: int
    decoder_flops: int
    head_flops: int
    trunk_flops: int

    @property
    def layer_params(self) -> int:
        """Head plus trunk convolutions, without the batch-norm affine terms"""
        return self.head_params + self.trunk_params

    def to_dict(self) -> dict:
        return asdict(self)


def _walk(layers: Sequence[Layer], in_shape: Tuple[int, ...]):
    """Yield (layer, params, flops) while propagating per-sample shapes"""
    shape = in_shape
    for layer in layers:
        yield layer, layer.parameter_count(), 2 * layer.macs(shape)
        shape = layer.output_shape(shape)


def count_cost(model: CodecModel) -> CostReport:
    config = model.config
    totals = {"encoder": [0, 0], "decoder": [0, 0], "head": [0, 0], "trunk": [0, 0], "norm": [0, 0]}
    stages = (("encoder", model.encoder, (2, config.rd, config.nb)),
              ("decoder", model.decoder, (model.latent_dim,)))
    for side, layers, shape in stages:
        for layer, params, flops in _walk(layers, shape):
            totals[side][0] += params
            totals[side][1] += flops
            bucket = "norm" if isinstance(layer, BatchNorm) else layer.role
            totals[bucket][0] += params
            totals[bucket][1] += flops

    return CostReport(
        label=config.label(),
        compression_ratio=config.compression_ratio,
        latent_head=config.latent_head,
        parameter_count=totals["encoder"][0] + totals["decoder"][0],
        encoder_params=totals["encoder"][0],
        decoder_params=totals["decoder"][0],
        head_params=totals["head"][0],
        trunk_params=totals["trunk"][0],
        norm_params=totals["norm"][0],
        flops_per_forward=totals["encoder"][1] + totals["decoder"][1],
        encoder_flops=totals["encoder"][1],
        decoder_flops=totals["decoder"][1],
        head_flops=totals["head"][1],
        trunk_flops=totals["trunk"][1] + totals["norm"][1],
    )


def cost_for(compression_ratio: float, latent_head: str = "fc", **overrides) -> CostReport:
    config = CodecConfig(compression_ratio=compression_ratio, latent_head=latent_head, **overrides)
    return count_cost(build(config, seed=0))


def table_rows(ratios: Iterable[float] = COMPRESSION_RATIOS,
               heads: Iterable[str] = ("fc", "cnn"), **overrides) -> pd.DataFrame:
    """Per-slot costs of each (head, CR) pair; head_* columns give the compression-head-only budget"""
    rows: List[dict] = []
    for head in heads:
        for ratio in ratios:
            report = cost_for(ratio, head, **overrides)
            rows.append({
                "config": "MarkovNet" if head == "fc" else "MarkovNet-CNN",
                "head": head,
                "cr": f"1/{int(round(1 / ratio))}",
                "params": report.parameter_count,
                "layer_params": report.layer_params,
                "flops": report.flops_per_forward,
                "head_params": report.head_params,
                "head_flops": report.head_flops,
                "trunk_params": report.trunk_params,
                "norm_params": report.norm_params,
                "trunk_flops": report.trunk_flops,
            })
    return pd.DataFrame(rows)
