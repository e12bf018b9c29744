"""
CSIDSET1 dataset files plus a JSON sidecar manifest.

Binary layout: magic b"CSIDSET1", K, T, Rd, Nb (u32 each), gamma_true (f64),
preset name (u32 byte length + UTF-8), then little-endian float32 values with
real and imaginary parts interleaved, sample-major then slot-major.
"""

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from data_acquisition.channel_model import ChannelConfig, CsiSequence
from utils.errors import DatasetIOError
from utils.logger import setup_logger

logger = setup_logger(__name__)

MAGIC = b"CSIDSET1"


def manifest_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def save_dataset(dataset: CsiSequence, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    k, t, rd, nb = dataset.samples.shape
    gamma = dataset.config.gamma_true if dataset.config is not None else float("nan")
    preset = dataset.metadata.get("preset", "custom").encode("utf-8")

    interleaved = np.empty((k, t, rd, nb, 2), dtype="<f4")
    interleaved[..., 0] = dataset.samples.real
    interleaved[..., 1] = dataset.samples.imag

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<4I", k, t, rd, nb))
        f.write(struct.pack("<d", gamma))
        f.write(struct.pack("<I", len(preset)))
        f.write(preset)
        f.write(interleaved.tobytes())

    manifest = {
        "file": path.name,
        "shape": [k, t, rd, nb],
        "config": dataset.config.model_dump() if dataset.config is not None else None,
        "metadata": dataset.metadata,
        "power_scales": dataset.power_scales.tolist(),
        "sample_seeds": dataset.sample_seeds.tolist(),
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=1))
    logger.info(f"Wrote dataset {path} ({k} samples x {t} slots)")
    return path


def load_dataset(path: Union[str, Path]) -> CsiSequence:
    path = Path(path)
    if not path.exists():
        raise DatasetIOError(f"dataset not found: {path}")
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise DatasetIOError(f"{path} is not a CSIDSET1 file")
    try:
        k, t, rd, nb = struct.unpack_from("<4I", blob, 8)
        (gamma,) = struct.unpack_from("<d", blob, 24)
        (name_len,) = struct.unpack_from("<I", blob, 32)
        preset = blob[36:36 + name_len].decode("utf-8")
        offset = 36 + name_len
        values = np.frombuffer(blob, dtype="<f4", count=k * t * rd * nb * 2, offset=offset)
    except (struct.error, ValueError) as e:
        raise DatasetIOError(f"{path} is truncated or corrupt: {e}") from e
    values = values.reshape(k, t, rd, nb, 2).astype(np.float64)
    samples = values[..., 0] + 1j * values[..., 1]

    sidecar = manifest_path(path)
    config, metadata = None, {"preset": preset, "gamma_true": gamma}
    power_scales = np.ones(k)
    sample_seeds = np.zeros(k, dtype=np.uint32)
    if sidecar.exists():
        manifest = json.loads(sidecar.read_text())
        if manifest.get("config"):
            config = ChannelConfig(**manifest["config"])
        metadata.update(manifest.get("metadata") or {})
        power_scales = np.asarray(manifest.get("power_scales", power_scales), dtype=np.float64)
        sample_seeds = np.asarray(manifest.get("sample_seeds", sample_seeds), dtype=np.uint32)
    else:
        logger.warning(f"No sidecar manifest for {path}; config unknown")

    return CsiSequence(samples, power_scales, sample_seeds, config, metadata)
