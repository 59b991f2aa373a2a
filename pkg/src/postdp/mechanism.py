"""Weight checkpoint I/O and the Gaussian noising mechanism.

The container format is the safetensors layout: an 8-byte little-endian
header length, a JSON header mapping tensor names to dtype/shape/offsets
(offsets relative to the end of the header), then the raw little-endian
tensor bytes.  Load/save round-trips are bit-exact, including non-finite
payload values, so real checkpoints can be processed in place.
"""

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .calibration import (
    BudgetError,
    PrivacyBudget,
    TrainingConfig,
    Variant,
    check_budget,
    noise_scale,
    sensitivity,
)

_DTYPES = {"F32": np.dtype("<f4"), "F64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype("<f4"): "F32", np.dtype("<f8"): "F64"}

# Moment deviations beyond this many standard errors get flagged in receipts.
_MOMENT_FLAG_SIGMAS = 4.0


class ContainerFormatError(ValueError):
    """Checkpoint container is malformed; offset locates the problem byte."""

    def __init__(self, message: str, offset: int = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class WeightSet:
    """Named float tensors in a fixed order.  Arrays are read-only."""

    tensors: dict[str, np.ndarray]
    metadata: dict[str, str] = None

    def __post_init__(self):
        for name, arr in self.tensors.items():
            if arr.dtype not in _DTYPE_NAMES:
                raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
            arr.flags.writeable = False

    @property
    def names(self) -> list[str]:
        return list(self.tensors.keys())

    def total_elements(self) -> int:
        return sum(arr.size for arr in self.tensors.values())


@dataclass(frozen=True)
class TensorNoiseSummary:
    count: int
    mean: float
    std: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class NoiseReceipt:
    """Audit record of one noising pass."""

    seed: int
    sigma: float
    tensors: dict[str, TensorNoiseSummary]
    excluded: tuple[str, ...] = ()
    epsilon: float = None
    delta: float = None
    sigma1: float = None
    sigma2: float = None
    variant: str = None
    config: dict = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "sigma": self.sigma,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "variant": self.variant,
            "config": self.config,
            "excluded": list(self.excluded),
            "tensors": {
                name: {
                    "count": s.count,
                    "noise_mean": s.mean,
                    "noise_std": s.std,
                    "flags": list(s.flags),
                }
                for name, s in self.tensors.items()
            },
        }


def load_weights(path) -> WeightSet:
    """Parse a checkpoint container; bytes are reinterpreted exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ContainerFormatError("file too short for 8-byte header length", offset=0)
    (header_len,) = struct.unpack("<Q", blob[:8])
    if 8 + header_len > len(blob):
        raise ContainerFormatError(
            f"declared header length {header_len} exceeds file size {len(blob)}", offset=8
        )
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", getattr(exc, "start", 0))
        raise ContainerFormatError(f"header is not valid JSON: {exc}", offset=8 + pos) from None
    if not isinstance(header, dict):
        raise ContainerFormatError("header must be a JSON object", offset=8)

    data = blob[8 + header_len :]
    metadata = None
    tensors: dict[str, np.ndarray] = {}
    for name, entry in header.items():
        if name == "__metadata__":
            if not (
                isinstance(entry, dict)
                and all(isinstance(k, str) and isinstance(v, str) for k, v in entry.items())
            ):
                raise ContainerFormatError("__metadata__ must map strings to strings", offset=8)
            metadata = dict(entry)
            continue
        if not isinstance(entry, dict):
            raise ContainerFormatError(f"tensor {name!r} entry must be an object", offset=8)
        try:
            dtype_name = entry["dtype"]
            shape = entry["shape"]
            begin, end = entry["data_offsets"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerFormatError(f"tensor {name!r} entry is malformed: {exc}", offset=8) from None
        if dtype_name not in _DTYPES:
            raise ContainerFormatError(f"tensor {name!r} has unknown dtype {dtype_name!r}", offset=8)
        if not all(isinstance(d, int) and d >= 0 for d in shape):
            raise ContainerFormatError(f"tensor {name!r} shape must be nonnegative ints", offset=8)
        dtype = _DTYPES[dtype_name]
        nbytes = dtype.itemsize * math.prod(shape)
        if not (isinstance(begin, int) and isinstance(end, int) and 0 <= begin <= end):
            raise ContainerFormatError(f"tensor {name!r} has invalid data_offsets", offset=8)
        if end > len(data):
            raise ContainerFormatError(
                f"tensor {name!r} data_offsets [{begin}, {end}] extend past "
                f"data section of {len(data)} bytes",
                offset=8 + header_len + begin,
            )
        if end - begin != nbytes:
            raise ContainerFormatError(
                f"tensor {name!r} occupies {end - begin} bytes but shape {shape} "
                f"with dtype {dtype_name} requires {nbytes}",
                offset=8 + header_len + begin,
            )
        arr = np.frombuffer(data[begin:end], dtype=dtype).reshape(shape).copy()
        tensors[name] = arr
    return WeightSet(tensors=tensors, metadata=metadata)


def save_weights(ws: WeightSet, path) -> None:
    """Write a container; loading it back reproduces the WeightSet bit-exactly."""
    header: dict = {}
    if ws.metadata is not None:
        header["__metadata__"] = dict(ws.metadata)
    chunks = []
    offset = 0
    for name, arr in ws.tensors.items():
        raw = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        header[name] = {
            "dtype": _DTYPE_NAMES[arr.dtype],
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        chunks.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in chunks:
            fh.write(raw)


def _tensor_rng(seed: int, name: str) -> np.random.Generator:
    # Substreams are keyed by (seed, name digest): schedule- and order-independent.
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = struct.unpack("<8L", digest)
    return np.random.default_rng(np.random.SeedSequence([seed, *words]))


def _summarize(noise: np.ndarray, sigma: float) -> TensorNoiseSummary:
    n = noise.size
    mean = float(noise.mean())
    std = float(noise.std(ddof=1)) if n > 1 else 0.0
    flags = []
    if n > 1:
        if abs(mean) > _MOMENT_FLAG_SIGMAS * sigma / math.sqrt(n):
            flags.append("mean beyond 4 standard errors")
        if abs(std / sigma - 1.0) > _MOMENT_FLAG_SIGMAS / math.sqrt(2.0 * n):
            flags.append("std beyond 4 standard errors")
    return TensorNoiseSummary(count=n, mean=mean, std=std, flags=tuple(flags))


def apply_noise(
    ws: WeightSet,
    sigma: float,
    seed: int,
    exclude_prefixes: tuple[str, ...] = (),
) -> tuple[WeightSet, NoiseReceipt]:
    """Add independent zero-mean Gaussian noise of scale sigma to every tensor.

    Deterministic in (seed, tensor name, element index); tensor order in the
    container does not affect the stream any tensor receives.  Noise is drawn
    in float64 and rounded once for float32 tensors.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed}")
    noised: dict[str, np.ndarray] = {}
    summaries: dict[str, TensorNoiseSummary] = {}
    excluded = []
    for name, arr in ws.tensors.items():
        if any(name.startswith(p) for p in exclude_prefixes):
            noised[name] = arr.copy()
            excluded.append(name)
            continue
        rng = _tensor_rng(seed, name)
        noise = rng.standard_normal(arr.size) * sigma
        out = arr.astype(np.float64).reshape(-1) + noise
        noised[name] = out.astype(arr.dtype).reshape(arr.shape)
        summaries[name] = _summarize(noise, sigma)
    receipt = NoiseReceipt(
        seed=seed, sigma=sigma, tensors=summaries, excluded=tuple(excluded)
    )
    return WeightSet(tensors=noised, metadata=ws.metadata), receipt


def noise_then_account(
    ws: WeightSet,
    cfg: TrainingConfig,
    budget: PrivacyBudget,
    variant: Variant = Variant.SPLIT,
    seed: int = 0,
    exclude_prefixes: tuple[str, ...] = (),
) -> tuple[WeightSet, NoiseReceipt]:
    """Calibrate the noise scale for (cfg, budget) and apply it.

    Refuses when epsilon is beyond the supported range for the config's
    sensitivity.
    """
    dw = sensitivity(cfg).delta_w
    ok, diag = check_budget(budget, dw)
    if not ok:
        raise BudgetError(diag)
    scale = noise_scale(cfg, budget, variant)
    noisy, receipt = apply_noise(ws, scale.sigma, seed, exclude_prefixes)
    receipt = NoiseReceipt(
        seed=receipt.seed,
        sigma=scale.sigma,
        tensors=receipt.tensors,
        excluded=receipt.excluded,
        epsilon=budget.epsilon,
        delta=budget.delta,
        sigma1=scale.sigma1,
        sigma2=scale.sigma2,
        variant=scale.variant.value,
        config={
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "clipping_norm": cfg.clipping_norm,
            "dataset_size": cfg.dataset_size,
            "batch_size": cfg.batch_size,
        },
    )
    return noisy, receipt
