"""
MarkovNet: differential multi-slot CSI feedback.

Slot 1 feeds back the CSI itself through a codec at CR1. Every later slot t
feeds back the residual R_t = H_t - gamma * H_hat_{t-1}, where H_hat_{t-1} is
the gNB reconstruction of the previous slot. The UE keeps a replica of the
decoders so both ends hold the same H_hat_{t-1}.

With the spherical policy on, each phase sends the unit-norm direction of its
input through the codec and the Frobenius magnitude separately.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from analysis.metrics import NmseResult, nmse
from data_acquisition.channel_model import CsiSequence
from data_acquisition.transform import RangeNormalizer, to_complex, to_real
from feedback.codec import CodecConfig, CodecModel, build, load_codec, train
from feedback.quantizer import PASSTHROUGH_BITS, QuantizerSpec, quantize_codeword
from feedback.sphere import MagnitudeQuantizer, merge_batch, split_batch
from utils.errors import ContractViolation, DatasetIOError
from utils.logger import setup_logger

logger = setup_logger(__name__)

MANIFEST_NAME = "pipeline.json"
MANIFEST_FORMAT = "markovnet-pipeline/1"
SLOT1_MIN_BITS = 8


class TrainingSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs_slot1: int = Field(1000, ge=0)
    epochs_scratch: int = Field(1000, ge=0)
    epochs_warm: int = Field(150, ge=0)
    batch_size: int = Field(200, ge=1)
    learning_rate: float = Field(1e-3, gt=0.0)


@dataclass
class GammaEstimate:
    gamma_hat: float
    sample_count: int  # adjacent slot pairs pooled


@dataclass
class TrainingRun:
    slot: int
    epochs: int
    warm_start: bool
    history: List[float]


@dataclass
class FeedbackPayload:
    """What one slot sends from the UE to the gNB for a batch of samples"""
    slot: int
    codeword: np.ndarray  # [N, L] as the gNB receives it
    magnitude_codes: Optional[np.ndarray] = None  # [N] when magnitudes are quantized
    magnitudes: Optional[np.ndarray] = None  # [N] when magnitudes are sent raw
    codeword_bits: int = 0
    magnitude_bits: int = 0
    clipped: int = 0

    @property
    def bits(self) -> int:
        """Feedback bits per sample"""
        return self.codeword_bits + self.magnitude_bits


@dataclass
class SlotEvaluation:
    slot: int
    nmse: NmseResult
    bits: int
    clipped: int


def estimate_gamma(dataset: CsiSequence) -> GammaEstimate:
    """gamma_hat = Re tr(sum H_t H_{t-1}^H) / sum ||H_{t-1}||^2 over all samples and adjacent slots"""
    if dataset.num_slots < 2:
        raise ContractViolation(f"gamma estimation needs T >= 2, got T={dataset.num_slots}")
    current = dataset.samples[:, 1:]
    previous = dataset.samples[:, :-1]
    cross = float(np.sum(np.real(current * previous.conj())))
    energy = float(np.sum(np.abs(previous) ** 2))
    if energy == 0.0:
        raise ContractViolation("all previous-slot matrices are zero; gamma undefined")
    pairs = dataset.num_samples * (dataset.num_slots - 1)
    return GammaEstimate(cross / energy, pairs)


def _scale(codec) -> float:
    return 1.0 if codec.scale is None else codec.scale


def _check_batch(csi: np.ndarray, name: str) -> np.ndarray:
    csi = np.asarray(csi)
    if csi.ndim != 3:
        raise ContractViolation(f"{name} must be a [N, Rd, Nb] batch, got {csi.shape}")
    return csi


@dataclass
class MarkovNetPipeline:
    slot1_codec: Any
    residual_codecs: List[Any] = field(default_factory=list)
    gamma: float = 0.0
    spherical_slot1: bool = True
    spherical_residual: bool = True
    magnitude_quantizer: Optional[MagnitudeQuantizer] = field(default_factory=MagnitudeQuantizer)
    # Codeword quantizer applied at inference; None sends float32 codewords
    quantizer: Optional[QuantizerSpec] = None
    metadata: Dict = field(default_factory=dict)
    training_runs: List[TrainingRun] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation(f"gamma must lie in [0, 1], got {self.gamma}")
        latents = {codec.latent_dim for codec in self.residual_codecs}
        if len(latents) > 1:
            raise ContractViolation(f"residual codecs must share one compression ratio, got latents {sorted(latents)}")

    @property
    def slots(self) -> int:
        return 1 + len(self.residual_codecs)

    @property
    def slot1_quantizer(self) -> Optional[QuantizerSpec]:
        spec = self.quantizer
        if spec is None or spec.passthrough or spec.bits >= SLOT1_MIN_BITS:
            return spec
        return QuantizerSpec(bits=SLOT1_MIN_BITS, mu=spec.mu, mode=spec.mode)

    def with_quantizer(self, spec: Optional[QuantizerSpec]) -> "MarkovNetPipeline":
        return dataclasses.replace(self, quantizer=spec)

    def _encode_phase(self, slot: int, codec, real: np.ndarray, spherical: bool,
                      spec: Optional[QuantizerSpec]) -> FeedbackPayload:
        payload = FeedbackPayload(slot=slot, codeword=np.empty((0, 0)))
        if spherical:
            directions, magnitudes = split_batch(real)
            if self.magnitude_quantizer is None:
                payload.magnitudes = magnitudes
                payload.magnitude_bits = PASSTHROUGH_BITS
            else:
                payload.magnitude_codes, _ = self.magnitude_quantizer.encode(magnitudes)
                payload.magnitude_bits = self.magnitude_quantizer.bits
        else:
            directions = real

        codeword = codec.encode(RangeNormalizer(_scale(codec)).normalize(directions))
        payload.codeword_bits = codeword.shape[1] * PASSTHROUGH_BITS
        if spec is not None:
            quantized = quantize_codeword(codeword, spec, codec.codeword_scale)
            codeword, payload.codeword_bits, payload.clipped = quantized.values, quantized.bits, quantized.clipped
        payload.codeword = codeword
        return payload

    def _decode_phase(self, codec, payload: FeedbackPayload, spherical: bool) -> np.ndarray:
        estimate = codec.decode(payload.codeword) * _scale(codec)
        if not spherical:
            return estimate
        if payload.magnitude_codes is not None:
            if self.magnitude_quantizer is None:
                raise ContractViolation("payload carries magnitude codes but the pipeline has no magnitude quantizer")
            magnitudes = self.magnitude_quantizer.decode(payload.magnitude_codes)
        elif payload.magnitudes is not None:
            magnitudes = payload.magnitudes
        else:
            raise ContractViolation(f"slot {payload.slot} payload carries no magnitudes")
        return merge_batch(estimate, magnitudes)

    def _residual_codec(self, t: int):
        if not 2 <= t <= self.slots:
            raise ContractViolation(f"slot {t} outside 2..{self.slots}")
        return self.residual_codecs[t - 2]

    def encode_slot1(self, h1: np.ndarray) -> FeedbackPayload:
        real = to_real(_check_batch(h1, "H_1"))
        return self._encode_phase(1, self.slot1_codec, real, self.spherical_slot1, self.slot1_quantizer)

    def decode_slot1(self, payload: FeedbackPayload) -> np.ndarray:
        return to_complex(self._decode_phase(self.slot1_codec, payload, self.spherical_slot1))

    def encode_slot(self, t: int, h_t: np.ndarray, previous: np.ndarray) -> FeedbackPayload:
        """previous is the decoder-side reconstruction H_hat_{t-1}, never the true H_{t-1}"""
        codec = self._residual_codec(t)
        residual = _check_batch(h_t, "H_t") - self.gamma * _check_batch(previous, "H_hat_{t-1}")
        return self._encode_phase(t, codec, to_real(residual), self.spherical_residual, self.quantizer)

    def decode_slot(self, t: int, payload: FeedbackPayload, previous: np.ndarray) -> np.ndarray:
        codec = self._residual_codec(t)
        residual = to_complex(self._decode_phase(codec, payload, self.spherical_residual))
        return residual + self.gamma * np.asarray(previous)

    def encode_sequence(self, samples: np.ndarray) -> Tuple[List[FeedbackPayload], np.ndarray]:
        """UE side over [N, T, Rd, Nb]; returns the payloads and the decoder-replica reconstructions"""
        samples = np.asarray(samples)
        if samples.ndim != 4:
            raise ContractViolation(f"sequence batch must be [N, T, Rd, Nb], got {samples.shape}")
        slots = samples.shape[1]
        if slots > self.slots:
            raise ContractViolation(f"pipeline covers {self.slots} slots, sequence has {slots}")
        recon = np.empty(samples.shape, dtype=np.complex128)
        payloads = [self.encode_slot1(samples[:, 0])]
        recon[:, 0] = self.decode_slot1(payloads[0])
        for t in range(2, slots + 1):
            payload = self.encode_slot(t, samples[:, t - 1], recon[:, t - 2])
            recon[:, t - 1] = self.decode_slot(t, payload, recon[:, t - 2])
            payloads.append(payload)
        return payloads, recon

    def decode_sequence(self, payloads: List[FeedbackPayload]) -> np.ndarray:
        """gNB side: rebuild [N, T, Rd, Nb] from the payload history alone"""
        if not payloads:
            raise ContractViolation("no payloads to decode")
        first = self.decode_slot1(payloads[0])
        recon = np.empty((first.shape[0], len(payloads)) + first.shape[1:], dtype=np.complex128)
        recon[:, 0] = first
        for t, payload in enumerate(payloads[1:], start=2):
            recon[:, t - 1] = self.decode_slot(t, payload, recon[:, t - 2])
        return recon

    def reconstruct(self, samples: np.ndarray) -> np.ndarray:
        return self.encode_sequence(samples)[1]


def residual_energy_ratio(samples: np.ndarray, recon: np.ndarray, gamma: float) -> np.ndarray:
    """E||H_t - gamma H_hat_{t-1}||^2 / E||H_t||^2 for t = 2..T"""
    residual = samples[:, 1:] - gamma * recon[:, :-1]
    return np.sum(np.abs(residual) ** 2, axis=(0, 2, 3)) / np.sum(np.abs(samples[:, 1:]) ** 2, axis=(0, 2, 3))


def _codec_config(template: Optional[CodecConfig], dataset: CsiSequence,
                  compression_ratio: float, latent_head: str) -> CodecConfig:
    base = template.model_dump() if template is not None else {}
    rd, nb = dataset.samples.shape[2:]
    # Rebuilt through the constructor so the ratio validators run
    return CodecConfig(**{**base, "rd": rd, "nb": nb,
                          "compression_ratio": compression_ratio, "latent_head": latent_head})


def _phase_inputs(real: np.ndarray, spherical: bool) -> np.ndarray:
    return split_batch(real)[0] if spherical else real


def _checkpoint(directory: Optional[Path], t: int) -> Optional[Path]:
    if directory is None:
        return None
    directory.mkdir(parents=True, exist_ok=True)
    return directory / f"slot{t}.ckpt"


def train_pipeline(dataset: CsiSequence, cr1: float = 1 / 4, cr2: float = 1 / 16,
                   schedule: Optional[TrainingSchedule] = None, latent_head: str = "fc",
                   spherical: bool = True,
                   magnitude_quantizer: Optional[MagnitudeQuantizer] = None,
                   seed: int = 0, codec_template: Optional[CodecConfig] = None,
                   gamma_override: Optional[float] = None,
                   checkpoint_dir: Optional[Union[str, Path]] = None,
                   progress: Optional[bool] = None) -> MarkovNetPipeline:
    """
    Train slot 1, then slot 2 from scratch, then each later slot warm-started
    from the previous slot's codec. Residuals are always taken against the
    reconstructions of the already-trained prefix.
    """
    schedule = schedule or TrainingSchedule()
    magnitude_quantizer = magnitude_quantizer or MagnitudeQuantizer()
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    if gamma_override is not None:
        gamma = float(gamma_override)
    elif dataset.num_slots >= 2:
        gamma = estimate_gamma(dataset).gamma_hat
    else:
        gamma = 0.0
    if not 0.0 <= gamma <= 1.0:
        logger.warning(f"gamma estimate {gamma:.4f} outside [0, 1]; clipped")
        gamma = float(np.clip(gamma, 0.0, 1.0))
    logger.info(f"Training MarkovNet ({latent_head}, CR1={cr1:g}, CR2={cr2:g}, "
                f"spherical={spherical}) over {dataset.num_slots} slots with gamma={gamma:.4f}")

    train_kwargs = dict(batch_size=schedule.batch_size, learning_rate=schedule.learning_rate, progress=progress)

    h1 = dataset.slot(1)
    inputs = _phase_inputs(to_real(h1), spherical)
    codec = build(_codec_config(codec_template, dataset, cr1, latent_head), seed)
    codec.scale = RangeNormalizer().fit(inputs).scale
    inputs = inputs / codec.scale
    history = train(codec, inputs, epochs=schedule.epochs_slot1, seed=seed, label="slot 1",
                    checkpoint_path=_checkpoint(checkpoint_dir, 1), **train_kwargs)
    codec.fit_codeword_scale(inputs)

    pipeline = MarkovNetPipeline(
        slot1_codec=codec, gamma=gamma, spherical_slot1=spherical, spherical_residual=spherical,
        magnitude_quantizer=magnitude_quantizer,
        metadata={"cr1": cr1, "cr2": cr2, "latent_head": latent_head, "seed": seed,
                  "spherical": spherical, "gamma_estimated": gamma_override is None},
    )
    pipeline.training_runs.append(TrainingRun(1, schedule.epochs_slot1, False, history))
    previous = pipeline.decode_slot1(pipeline.encode_slot1(h1))

    residual_config = _codec_config(codec_template, dataset, cr2, latent_head)
    for t in range(2, dataset.num_slots + 1):
        h_t = dataset.slot(t)
        inputs = _phase_inputs(to_real(h_t - gamma * previous), spherical)
        if t == 2:
            codec = build(residual_config, seed + 1)
            # Shared by every residual codec so warm starts see the same input range
            codec.scale = RangeNormalizer().fit(inputs).scale
            epochs, warm = schedule.epochs_scratch, False
        else:
            codec = pipeline.residual_codecs[-1].clone()
            epochs, warm = schedule.epochs_warm, True
        inputs = inputs / codec.scale
        history = train(codec, inputs, epochs=epochs, seed=seed + t, label=f"slot {t}",
                        checkpoint_path=_checkpoint(checkpoint_dir, t), **train_kwargs)
        codec.fit_codeword_scale(inputs)
        pipeline.residual_codecs.append(codec)
        pipeline.training_runs.append(TrainingRun(t, epochs, warm, history))
        previous = pipeline.decode_slot(t, pipeline.encode_slot(t, h_t, previous), previous)

    return pipeline


def train_independent(dataset: CsiSequence, compression_ratio: float = 1 / 16,
                      schedule: Optional[TrainingSchedule] = None, **kwargs) -> MarkovNetPipeline:
    """Per-slot SphNet baseline: every slot compressed on its own at one CR (gamma forced to 0)"""
    return train_pipeline(dataset, compression_ratio, compression_ratio, schedule,
                          gamma_override=0.0, **kwargs)


def evaluate(pipeline: MarkovNetPipeline, dataset: CsiSequence,
             quantizer: Optional[QuantizerSpec] = None) -> List[SlotEvaluation]:
    runner = pipeline.with_quantizer(quantizer) if quantizer is not None else pipeline
    payloads, recon = runner.encode_sequence(dataset.samples)
    results = [SlotEvaluation(t, nmse(dataset.slot(t), recon[:, t - 1]), payload.bits, payload.clipped)
               for t, payload in enumerate(payloads, start=1)]
    for row in results:
        logger.debug(f"slot {row.slot}: NMSE {row.nmse.db:.2f} dB, {row.bits} bits")
    return results


def save_pipeline(pipeline: MarkovNetPipeline, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for t, codec in enumerate([pipeline.slot1_codec] + pipeline.residual_codecs, start=1):
        if not isinstance(codec, CodecModel):
            raise ContractViolation(f"slot {t} codec is not a trained CodecModel and cannot be checkpointed")
        name = f"slot{t}.ckpt"
        codec.save(directory / name)
        entries.append({"slot": t, "checkpoint": name, "config": codec.config.model_dump(),
                        "scale": codec.scale, "codeword_scale": codec.codeword_scale})

    manifest = {
        "format": MANIFEST_FORMAT,
        "gamma": pipeline.gamma,
        "spherical_slot1": pipeline.spherical_slot1,
        "spherical_residual": pipeline.spherical_residual,
        "magnitude_quantizer": pipeline.magnitude_quantizer.to_dict() if pipeline.magnitude_quantizer else None,
        "quantizer": pipeline.quantizer.model_dump() if pipeline.quantizer else None,
        "slots": entries,
        "metadata": pipeline.metadata,
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1))
    logger.info(f"Saved {pipeline.slots}-slot pipeline to {directory}")
    return path


def load_pipeline(directory: Union[str, Path]) -> MarkovNetPipeline:
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.exists():
        raise DatasetIOError(f"no pipeline manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DatasetIOError(f"{path} has unknown format {manifest.get('format')!r}")

    codecs = []
    for entry in sorted(manifest["slots"], key=lambda e: e["slot"]):
        codec = load_codec(directory / entry["checkpoint"])
        codec.scale, codec.codeword_scale = entry["scale"], entry["codeword_scale"]
        codecs.append(codec)

    magnitude = manifest.get("magnitude_quantizer")
    quantizer = manifest.get("quantizer")
    return MarkovNetPipeline(
        slot1_codec=codecs[0],
        residual_codecs=codecs[1:],
        gamma=manifest["gamma"],
        spherical_slot1=manifest["spherical_slot1"],
        spherical_residual=manifest["spherical_residual"],
        magnitude_quantizer=MagnitudeQuantizer(**magnitude) if magnitude else None,
        quantizer=QuantizerSpec(**quantizer) if quantizer else None,
        metadata=manifest.get("metadata", {}),
    )
