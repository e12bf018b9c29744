"""
CsiNet Pro encoder/decoder pairs.

Encoder: four same-padded 7x7 convs (2 -> 16 -> 8 -> 4 -> 2), each followed by
batch norm and leaky ReLU, then a latent head. Decoder: the mirrored head,
four convs (2 -> 16 -> 8 -> 4 -> 2) and tanh.

Latent heads:
  fc  - flatten 2*Rd*Nb and one affine layer to CR * 2*Rd*Nb values
  cnn - slice the 2 x Rd x Nb activation into 2*Rd maps of length Nb (channel
        then delay row) and compress with M = 2*Rd*CR kernels of length 7
"""

import copy
import json
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from autodiff.checkpoint import load_layers, save_layers
from autodiff.functional import mse_loss
from autodiff.layers import Activation, Affine, BatchNorm, Conv2d, Layer, Reshape, run_layers
from autodiff.optim import AdamState, adam_step
from autodiff.tensor import Tensor
from utils.errors import ConfigurationError, ContractViolation, DatasetIOError, DivergenceError, NumericalError
from utils.logger import setup_logger
from utils.settings import SHOW_PROGRESS

logger = setup_logger(__name__)

COMPRESSION_RATIOS = (1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64)
INFERENCE_CHUNK = 500


class CodecConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    rd: int = Field(32, ge=1)
    nb: int = Field(32, ge=1)
    encoder_widths: Tuple[int, ...] = (16, 8, 4, 2)
    decoder_widths: Tuple[int, ...] = (16, 8, 4, 2)
    kernel_size: int = 7
    head_kernel: int = 7
    latent_head: Literal["fc", "cnn"] = "fc"
    compression_ratio: float = 1 / 4
    batch_norm: bool = True
    leaky_slope: float = 0.3
    # Head-only, bias-free, activation-free autoencoder used as the PCA oracle
    linear: bool = False

    @field_validator("compression_ratio")
    @classmethod
    def check_ratio(cls, value):
        for allowed in COMPRESSION_RATIOS:
            if abs(value - allowed) < 1e-12:
                return allowed
        raise ValueError(f"compression ratio {value} not in {{1/4, 1/8, 1/16, 1/32, 1/64}}")

    @field_validator("kernel_size", "head_kernel")
    @classmethod
    def check_odd(cls, value):
        if value < 1 or value % 2 == 0:
            raise ValueError(f"kernel extents must be odd and positive, got {value}")
        return value

    @model_validator(mode="after")
    def check_widths(self):
        if not self.encoder_widths or self.encoder_widths[-1] != 2:
            raise ValueError("encoder must end with 2 feature maps")
        if not self.decoder_widths or self.decoder_widths[-1] != 2:
            raise ValueError("decoder must end with 2 feature maps (real, imaginary)")
        return self

    @property
    def input_dim(self) -> int:
        return 2 * self.rd * self.nb

    @property
    def slices(self) -> int:
        return 2 * self.rd

    @property
    def cnn_maps(self) -> float:
        """M, the number of compression kernels of the CNN head"""
        return self.slices * self.compression_ratio

    @property
    def latent_dim(self) -> int:
        if self.latent_head == "cnn" and not self.linear:
            return int(round(self.cnn_maps)) * self.nb
        return int(round(self.compression_ratio * self.input_dim))

    def check_latent(self):
        if self.latent_head == "cnn" and not self.linear:
            if abs(self.cnn_maps - round(self.cnn_maps)) > 1e-9 or round(self.cnn_maps) < 1:
                raise ConfigurationError(f"CNN head needs an integer M = {self.slices} * CR, got {self.cnn_maps}")
        else:
            latent = self.compression_ratio * self.input_dim
            if abs(latent - round(latent)) > 1e-9 or round(latent) < 1:
                raise ConfigurationError(f"latent size {latent} is not a positive integer")

    def label(self) -> str:
        ratio = int(round(1 / self.compression_ratio))
        return f"{'linear' if self.linear else self.latent_head}-cr1/{ratio}"


class CodecModel:
    """One encoder-decoder pair plus the constants the decoder side needs"""

    def __init__(self, config: CodecConfig, encoder: List[Layer], decoder: List[Layer],
                 scale: Optional[float] = None, codeword_scale: Optional[float] = None):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder
        # Training-set range normalization scale of the inputs
        self.scale = scale
        # max |codeword| over the training set, used by the feedback quantizer
        self.codeword_scale = codeword_scale

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def layers(self) -> List[Layer]:
        return self.encoder + self.decoder

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        return run_layers(self.decoder, run_layers(self.encoder, x, training), training)

    def _check_input(self, x: np.ndarray):
        expected = (2, self.config.rd, self.config.nb)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ContractViolation(f"codec input must be [N, {expected[0]}, {expected[1]}, {expected[2]}], got {x.shape}")

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        chunks = [run_layers(self.encoder, Tensor(x[i:i + INFERENCE_CHUNK]), training=False).data
                  for i in range(0, x.shape[0], INFERENCE_CHUNK)]
        return np.concatenate(chunks, axis=0)

    def decode(self, codeword: np.ndarray) -> np.ndarray:
        codeword = np.asarray(codeword, dtype=np.float64)
        if codeword.ndim != 2 or codeword.shape[1] != self.latent_dim:
            raise ContractViolation(f"codeword must be [N, {self.latent_dim}], got {codeword.shape}")
        chunks = [run_layers(self.decoder, Tensor(codeword[i:i + INFERENCE_CHUNK]), training=False).data
                  for i in range(0, codeword.shape[0], INFERENCE_CHUNK)]
        return np.concatenate(chunks, axis=0)

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(x))

    def fit_codeword_scale(self, x: np.ndarray) -> float:
        self.codeword_scale = float(np.max(np.abs(self.encode(x))))
        return self.codeword_scale

    def clone(self) -> "CodecModel":
        return copy.deepcopy(self)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        save_layers(path, self.layers)
        sidecar = {
            "config": self.config.model_dump(),
            "scale": self.scale,
            "codeword_scale": self.codeword_scale,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))
        return path


def load_codec(path: Union[str, Path]) -> CodecModel:
    path = Path(path)
    if not path.with_suffix(".json").exists():
        raise DatasetIOError(f"codec config sidecar missing for {path}")
    sidecar = json.loads(path.with_suffix(".json").read_text())
    model = build(CodecConfig(**sidecar["config"]), seed=0)
    load_layers(path, model.layers)
    model.scale = sidecar.get("scale")
    model.codeword_scale = sidecar.get("codeword_scale")
    return model


def _conv_stack(widths: Sequence[int], in_channels: int, config: CodecConfig,
                rng: np.random.Generator, final_tanh: bool) -> List[Layer]:
    layers: List[Layer] = []
    k = config.kernel_size
    for i, width in enumerate(widths):
        layers.append(Conv2d(in_channels, width, (k, k), rng))
        last = i == len(widths) - 1
        if final_tanh and last:
            layers.append(Activation("tanh"))
        else:
            if config.batch_norm:
                layers.append(BatchNorm(width))
            layers.append(Activation("leaky_relu", config.leaky_slope))
        in_channels = width
    return layers


def build(config: CodecConfig, seed: int = 0) -> CodecModel:
    config.check_latent()
    rng = np.random.default_rng(seed)
    d, latent = config.input_dim, config.latent_dim
    image = (2, config.rd, config.nb)

    if config.linear:
        encoder = [Reshape((d,), role="head"), Affine(d, latent, rng, bias=False)]
        decoder = [Affine(latent, d, rng, bias=False), Reshape(image, role="head")]
        return CodecModel(config, encoder, decoder)

    encoder = _conv_stack(config.encoder_widths, 2, config, rng, final_tanh=False)
    if config.latent_head == "fc":
        encoder += [Reshape((d,), role="head"), Affine(d, latent, rng)]
        decoder: List[Layer] = [Affine(latent, d, rng), Reshape(image, role="head")]
    else:
        maps = int(round(config.cnn_maps))
        kernel = (1, config.head_kernel)
        encoder += [
            Reshape((config.slices, 1, config.nb), role="head"),
            Conv2d(config.slices, maps, kernel, rng, role="head"),
            Reshape((latent,), role="head"),
        ]
        decoder = [
            Reshape((maps, 1, config.nb), role="head"),
            Conv2d(maps, config.slices, kernel, rng, role="head"),
            Reshape(image, role="head"),
        ]
    decoder += _conv_stack(config.decoder_widths, 2, config, rng, final_tanh=True)
    return CodecModel(config, encoder, decoder)


def _needs_batch_pairs(model: CodecModel) -> bool:
    return any(isinstance(layer, BatchNorm) for layer in model.layers)


def train(model: CodecModel, inputs: np.ndarray, targets: Optional[np.ndarray] = None,
          epochs: int = 1000, batch_size: int = 200, learning_rate: float = 1e-3,
          seed: int = 0, checkpoint_path: Optional[Union[str, Path]] = None,
          progress: Optional[bool] = None, label: str = "codec",
          smoothing_window: int = 50) -> List[float]:
    """
    Minimize the per-sample squared Frobenius error with Adam.

    Returns the loss history, one sample-weighted mean per epoch. A non-finite
    loss raises DivergenceError carrying the epoch index.

    The smoothed loss (moving average over smoothing_window epochs) is monitored,
    not enforced: a rise is logged as a warning and training carries on.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = inputs if targets is None else np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] != targets.shape[0]:
        raise ContractViolation("inputs and targets hold different sample counts")
    show = SHOW_PROGRESS if progress is None else progress
    rng = np.random.default_rng(seed)
    state = AdamState(learning_rate=learning_rate)
    params = model.parameters()
    min_batch = 2 if _needs_batch_pairs(model) else 1
    history: List[float] = []

    for epoch in tqdm(range(epochs), desc=label, disable=not show):
        order = rng.permutation(inputs.shape[0])
        total, seen = 0.0, 0
        for start in range(0, len(order), batch_size):
            index = order[start:start + batch_size]
            if len(index) < min_batch:
                continue
            for p in params:
                p.zero_grad()
            try:
                loss = mse_loss(model.forward(Tensor(inputs[index]), training=True), targets[index])
                loss.backward()
            except NumericalError as e:
                raise DivergenceError(epoch, f"{label}: {e} at epoch {epoch}") from e
            adam_step(params, state)
            total += loss.item() * len(index)
            seen += len(index)
        epoch_loss = total / max(seen, 1)
        if not np.isfinite(epoch_loss):
            raise DivergenceError(epoch)
        history.append(epoch_loss)
        logger.debug(f"{label} epoch {epoch}: loss {epoch_loss:.6g}")

    if len(history) >= 2 * smoothing_window:
        smoothed = np.convolve(history, np.ones(smoothing_window) / smoothing_window, mode="valid")
        if np.any(np.diff(smoothed) > 0):
            logger.warning(f"{label}: smoothed training loss rose during training")
    if history:
        logger.info(f"{label}: {epochs} epochs, loss {history[0]:.4g} -> {history[-1]:.4g}")
    if checkpoint_path is not None:
        model.save(checkpoint_path)
    return history
