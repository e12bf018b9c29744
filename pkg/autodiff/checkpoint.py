"""
MNETCKPT binary checkpoints.

Layout: magic b"MNETCKPT", format version (u32), layer count (u32), then per
layer: kind tag (u32), array count (u32) and per array its rank (u32), its
extents (u32 each) and the payload as little-endian float64.
"""

import struct
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from autodiff.layers import Layer
from utils.errors import ContractViolation, DatasetIOError
from utils.logger import setup_logger

logger = setup_logger(__name__)

MAGIC = b"MNETCKPT"
FORMAT_VERSION = 1

LayerRecord = Tuple[int, List[np.ndarray]]


def write_records(path: Union[str, Path], records: Sequence[LayerRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(records)))
        for tag, arrays in records:
            f.write(struct.pack("<II", tag, len(arrays)))
            for array in arrays:
                f.write(struct.pack("<I", array.ndim))
                f.write(struct.pack(f"<{array.ndim}I", *array.shape))
                f.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def read_records(path: Union[str, Path]) -> List[LayerRecord]:
    path = Path(path)
    if not path.exists():
        raise DatasetIOError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise DatasetIOError(f"{path} is not an MNETCKPT file")
    offset = len(MAGIC)

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise DatasetIOError(f"{path} is truncated")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    version, count = take("<II")
    if version != FORMAT_VERSION:
        raise DatasetIOError(f"unsupported checkpoint version {version}")
    records = []
    for _ in range(count):
        tag, n_arrays = take("<II")
        arrays = []
        for _ in range(n_arrays):
            (ndim,) = take("<I")
            shape = take(f"<{ndim}I") if ndim else ()
            n_values = int(np.prod(shape)) if ndim else 1
            payload_bytes = n_values * 8
            if offset + payload_bytes > len(blob):
                raise DatasetIOError(f"{path} is truncated")
            array = np.frombuffer(blob, dtype="<f8", count=n_values, offset=offset).reshape(shape)
            offset += payload_bytes
            arrays.append(array.astype(np.float64))
        records.append((tag, arrays))
    return records


def save_layers(path: Union[str, Path], layers: Sequence[Layer]):
    write_records(path, [(layer.tag, layer.arrays()) for layer in layers])
    logger.info(f"Saved checkpoint with {len(layers)} layers to {path}")


def load_layers(path: Union[str, Path], layers: Sequence[Layer]):
    """Fill already-built layers from a checkpoint with the same structure"""
    records = read_records(path)
    if len(records) != len(layers):
        raise ContractViolation(f"checkpoint has {len(records)} layers, model has {len(layers)}")
    for layer, (tag, arrays) in zip(layers, records):
        if tag != layer.tag:
            raise ContractViolation(f"checkpoint layer tag {tag} does not match {layer.kind}")
        layer.load_arrays(arrays)
