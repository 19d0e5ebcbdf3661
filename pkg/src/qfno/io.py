"""Binary file formats for datasets and model checkpoints, plus CSV logs.

Both formats share a header: a 4-byte magic tag, a little-endian u32 format
version, a little-endian u64 JSON length, then that many bytes of canonical
JSON (sorted keys, no whitespace). Canonical JSON plus fixed-order payload
blocks make save -> load -> save reproduce the file byte for byte.

Dataset payload: the input array then the target array, raw '<c16' in C
order. Their common shape lives in the JSON header.

Checkpoint payload: one block per parameter in declaration order, each
[u32 name length, name utf-8, u32 ndim, u64 * ndim dims, '<c16' data].
"""

import json
import struct
from pathlib import Path

import numpy as np

from .evolve import Dataset, TimeGrid
from .fno import Checkpoint, FnoConfig
from .numerics import ValidationError
from .spin import SpinChainSpec
from .train import EpochMetrics

DATASET_MAGIC = b"QFNO"
CHECKPOINT_MAGIC = b"QFNC"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class FileFormatError(RuntimeError):
    """Base class for malformed dataset or checkpoint files."""


class BadMagicError(FileFormatError):
    pass


class VersionMismatchError(FileFormatError):
    pass


class TruncatedPayloadError(FileFormatError):
    pass


class ShapeMismatchError(FileFormatError):
    pass


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _plain(value):
    """Coerce numpy scalars so identical metadata always yields identical bytes."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, (str, bool, int, float)) or value is None:
        return value
    raise ValidationError(f"metadata value {value!r} is not JSON-serializable")


def _read_exact(fh, size: int, what: str) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise TruncatedPayloadError(f"{what}: wanted {size} bytes, file had {len(data)}")
    return data


def _write_header(fh, magic: bytes, meta: dict) -> None:
    blob = _canonical_json(_plain(meta))
    fh.write(magic)
    fh.write(_U32.pack(FORMAT_VERSION))
    fh.write(_U64.pack(len(blob)))
    fh.write(blob)


def _read_header(fh, magic: bytes) -> dict:
    tag = _read_exact(fh, 4, "magic")
    if tag != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {tag!r}")
    (version,) = _U32.unpack(_read_exact(fh, 4, "version"))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, reader supports {FORMAT_VERSION}")
    (length,) = _U64.unpack(_read_exact(fh, 8, "metadata length"))
    try:
        return json.loads(_read_exact(fh, length, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"metadata is not valid JSON: {exc}") from exc


def _expect_eof(fh) -> None:
    if fh.read(1):
        raise ShapeMismatchError("file holds more bytes than its header declares")


def _read_array(fh, shape: tuple[int, ...], what: str) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = _read_exact(fh, count * 16, what)
    arr = np.frombuffer(raw, dtype="<c16").reshape(shape)
    arr = np.ascontiguousarray(arr).astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr.view(np.float64))):
        raise FileFormatError(f"{what}: payload holds non-finite values")
    return arr


def _grid_meta(grid: TimeGrid | None):
    if grid is None:
        return None
    return {"t0": grid.t0, "dt": grid.dt, "m": grid.m}


def _grid_from_meta(meta) -> TimeGrid | None:
    if meta is None:
        return None
    return TimeGrid(float(meta["t0"]), float(meta["dt"]), int(meta["m"]))


def save_dataset(path, dataset: Dataset) -> None:
    meta = {
        "arch": dataset.arch,
        "spec": {
            "n": dataset.spec.n,
            "model": dataset.spec.model,
            "jx": dataset.spec.jx,
            "jy": dataset.spec.jy,
            "jz": dataset.spec.jz,
            "h": dataset.spec.h,
            "seed": dataset.spec.seed,
        },
        "input_type": dataset.input_type,
        "period": dataset.period,
        "states_seed": dataset.states_seed,
        "basis_order": dataset.basis_order,
        "intervals": list(dataset.intervals),
        "samples_per_interval": dataset.samples_per_interval,
        "fraction": dataset.fraction,
        "input_grid": _grid_meta(dataset.input_grid),
        "target_grid": _grid_meta(dataset.target_grid),
        "channel_labels": list(dataset.channel_labels),
        "shape": list(dataset.inputs.shape),
    }
    with open(path, "wb") as fh:
        _write_header(fh, DATASET_MAGIC, meta)
        fh.write(np.ascontiguousarray(dataset.inputs, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(dataset.targets, dtype="<c16").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        meta = _read_header(fh, DATASET_MAGIC)
        try:
            spec = SpinChainSpec(
                n=int(meta["spec"]["n"]),
                model=str(meta["spec"]["model"]),
                jx=float(meta["spec"]["jx"]),
                jy=float(meta["spec"]["jy"]),
                jz=float(meta["spec"]["jz"]),
                h=float(meta["spec"]["h"]),
                seed=int(meta["spec"]["seed"]),
            )
            shape = tuple(int(s) for s in meta["shape"])
        except (KeyError, TypeError) as exc:
            raise FileFormatError(f"dataset metadata is incomplete: {exc}") from exc
        inputs = _read_array(fh, shape, "input array")
        targets = _read_array(fh, shape, "target array")
        _expect_eof(fh)
    try:
        return Dataset(
            arch=str(meta["arch"]),
            spec=spec,
            input_type=str(meta["input_type"]),
            inputs=inputs,
            targets=targets,
            period=float(meta["period"]),
            states_seed=int(meta["states_seed"]),
            basis_order=str(meta["basis_order"]),
            intervals=tuple(int(k) for k in meta["intervals"]),
            samples_per_interval=int(meta["samples_per_interval"]),
            fraction=None if meta["fraction"] is None else float(meta["fraction"]),
            input_grid=_grid_from_meta(meta["input_grid"]),
            target_grid=_grid_from_meta(meta["target_grid"]),
            channel_labels=tuple(meta["channel_labels"]),
        )
    except KeyError as exc:
        raise FileFormatError(f"dataset metadata is incomplete: {exc}") from exc


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    config = checkpoint.config
    meta = {
        "config": {
            "arch": config.arch,
            "n_qubits": config.n_qubits,
            "in_channels": config.in_channels,
            "out_channels": config.out_channels,
            "width": config.width,
            "blocks": config.blocks,
            "modes": config.modes,
        },
        "meta": checkpoint.meta,
    }
    with open(path, "wb") as fh:
        _write_header(fh, CHECKPOINT_MAGIC, meta)
        for name in config.param_shapes():
            value = checkpoint.params[name]
            encoded = name.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_U32.pack(value.ndim))
            for dim in value.shape:
                fh.write(_U64.pack(dim))
            fh.write(np.ascontiguousarray(value, dtype="<c16").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        meta = _read_header(fh, CHECKPOINT_MAGIC)
        try:
            raw = meta["config"]
            config = FnoConfig(
                arch=str(raw["arch"]),
                n_qubits=int(raw["n_qubits"]),
                in_channels=int(raw["in_channels"]),
                out_channels=int(raw["out_channels"]),
                width=int(raw["width"]),
                blocks=int(raw["blocks"]),
                modes=int(raw["modes"]),
            )
        except (KeyError, TypeError) as exc:
            raise FileFormatError(f"checkpoint metadata is incomplete: {exc}") from exc
        params = {}
        for name, shape in config.param_shapes().items():
            (name_len,) = _U32.unpack(_read_exact(fh, 4, "parameter name length"))
            stored = _read_exact(fh, name_len, "parameter name").decode("utf-8")
            if stored != name:
                raise ShapeMismatchError(f"expected parameter {name!r}, file holds {stored!r}")
            (ndim,) = _U32.unpack(_read_exact(fh, 4, f"{name}: rank"))
            dims = tuple(
                _U64.unpack(_read_exact(fh, 8, f"{name}: dimension"))[0] for _ in range(ndim)
            )
            if dims != shape:
                raise ShapeMismatchError(f"{name}: file shape {dims}, config wants {shape}")
            params[name] = _read_array(fh, dims, name)
        _expect_eof(fh)
    return Checkpoint(config=config, params=params, meta=meta.get("meta", {}))


def write_metrics_csv(path, metrics: list[EpochMetrics]) -> None:
    lines = ["epoch,train_loss,val_loss,val_fidelity"]
    for row in metrics:
        lines.append(
            f"{int(row.epoch)},{float(row.train_loss)!r},"
            f"{float(row.val_loss)!r},{float(row.val_fidelity)!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
