"""
Binary checkpoint format.

Layout (little-endian):
    magic "VARAckpt" | u16 version | 64-byte hex config digest | u32 blob count
    then per blob:
    u16 name length | UTF-8 name | u8 dtype code | u8 ndim | u32[ndim] dims | payload

Blob names:
    param/<dotted parameter name>        model parameters
    optim/<index>/<key>                  Adam moment buffers and step counters
    rng/state                            generator state bytes
    meta.json                            config, step, vocab, speed stats, rng counter,
                                         optimizer param groups (UTF-8 JSON as u8)
"""
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from ..data.schemas import SpeedStats, Vocab
from ..errors import ConfigIncompatibleError, FormatError, VersionError
from ..numerics import Rng
from ..utils.config import TrainConfig, build_config, config_digest
from ..utils.logging import log_trace_event, setup_logger

logger = setup_logger(__name__)

MAGIC = b"VARAckpt"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sH64sI")

_DTYPE_CODES = {
    torch.float32: 0,
    torch.float64: 1,
    torch.uint8: 2,
    torch.int64: 3,
}
_CODE_NUMPY = {0: "<f4", 1: "<f8", 2: "u1", 3: "<i8"}
_CODE_TORCH = {code: dtype for dtype, code in _DTYPE_CODES.items()}

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    """Decoded checkpoint contents."""
    digest: str
    params: Dict[str, torch.Tensor]
    optimizer_state: Dict[int, Dict[str, torch.Tensor]]
    rng_state: Optional[torch.Tensor]
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.meta.get("step", 0))

    @property
    def config(self) -> TrainConfig:
        return build_config(self.meta["config"])

    @property
    def vocab(self) -> Optional[Vocab]:
        symbols = self.meta.get("vocab")
        return Vocab(symbols=symbols) if symbols else None

    @property
    def speed_stats(self) -> Optional[SpeedStats]:
        stats = self.meta.get("speed_stats")
        return SpeedStats.model_validate(stats) if stats else None

    @property
    def n_mels(self) -> int:
        return int(self.meta["n_mels"])


def _encode_blob(name: str, tensor: torch.Tensor) -> bytes:
    tensor = tensor.detach().cpu()
    if tensor.dtype not in _DTYPE_CODES:
        raise FormatError(f"cannot serialize {name} with dtype {tensor.dtype}")
    code = _DTYPE_CODES[tensor.dtype]
    name_bytes = name.encode("utf-8")
    dims = list(tensor.shape)
    out = struct.pack("<H", len(name_bytes)) + name_bytes + struct.pack("<BB", code, len(dims))
    out += struct.pack(f"<{len(dims)}I", *dims)
    return out + np.ascontiguousarray(tensor.numpy(), dtype=_CODE_NUMPY[code]).tobytes()


def _json_blob(name: str, doc: Dict[str, Any]) -> bytes:
    raw = json.dumps(doc, sort_keys=True).encode("utf-8")
    return _encode_blob(name, torch.frombuffer(bytearray(raw), dtype=torch.uint8))


def encode_checkpoint(
    digest: str,
    params: Dict[str, torch.Tensor],
    optimizer_state: Dict[int, Dict[str, torch.Tensor]],
    rng_state: Optional[torch.Tensor],
    meta: Dict[str, Any],
) -> bytes:
    """Serialize checkpoint pieces into the binary layout."""
    digest_bytes = digest.encode("ascii")
    if len(digest_bytes) != 64:
        raise FormatError(f"config digest must be 64 hex chars, got {len(digest_bytes)}")

    blobs: List[bytes] = [_encode_blob(f"param/{name}", t) for name, t in params.items()]
    for index in sorted(optimizer_state):
        for key in sorted(optimizer_state[index]):
            blobs.append(_encode_blob(f"optim/{index}/{key}", optimizer_state[index][key]))
    if rng_state is not None:
        blobs.append(_encode_blob("rng/state", rng_state))
    blobs.append(_json_blob("meta.json", meta))

    header = _HEADER.pack(MAGIC, CHECKPOINT_VERSION, digest_bytes, len(blobs))
    return header + b"".join(blobs)


def _read(data: bytes, offset: int, size: int, path: Optional[PathLike]) -> Tuple[bytes, int]:
    end = offset + size
    if end > len(data):
        raise FormatError(f"truncated at byte {offset} (need {size} more)", path)
    return data[offset:end], end


def decode_checkpoint(data: bytes, path: Optional[PathLike] = None) -> Checkpoint:
    """
    Parse a checkpoint file.

    Raises:
        FormatError: bad magic, truncation, unknown dtype, trailing bytes, a
            malformed blob name or incomplete metadata
        VersionError: unsupported version
    """
    head, offset = _read(data, 0, _HEADER.size, path)
    magic, version, digest_bytes, n_blobs = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})", path)

    params: Dict[str, torch.Tensor] = {}
    optimizer_state: Dict[int, Dict[str, torch.Tensor]] = {}
    rng_state = None
    meta: Dict[str, Any] = {}

    for _ in range(n_blobs):
        raw, offset = _read(data, offset, 2, path)
        (name_len,) = struct.unpack("<H", raw)
        raw, offset = _read(data, offset, name_len, path)
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("blob name is not UTF-8", path)
        raw, offset = _read(data, offset, 2, path)
        code, ndim = struct.unpack("<BB", raw)
        if code not in _CODE_NUMPY:
            raise FormatError(f"blob {name}: unknown dtype code {code}", path)
        raw, offset = _read(data, offset, 4 * ndim, path)
        dims = struct.unpack(f"<{ndim}I", raw)
        count = int(np.prod(dims)) if ndim else 1
        itemsize = np.dtype(_CODE_NUMPY[code]).itemsize
        raw, offset = _read(data, offset, count * itemsize, path)
        array = np.frombuffer(raw, dtype=_CODE_NUMPY[code]).reshape(dims).copy()
        tensor = torch.from_numpy(array).to(_CODE_TORCH[code])

        if name.startswith("param/"):
            params[name[len("param/"):]] = tensor
        elif name.startswith("optim/"):
            parts = name.split("/", 2)
            if len(parts) != 3 or not parts[1].isdigit() or not parts[2]:
                raise FormatError(f"malformed optimizer blob name {name!r}", path)
            optimizer_state.setdefault(int(parts[1]), {})[parts[2]] = tensor
        elif name == "rng/state":
            rng_state = tensor
        elif name == "meta.json":
            try:
                meta = json.loads(array.tobytes().decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise FormatError(f"meta.json is not valid JSON: {e}", path)
        else:
            raise FormatError(f"unknown blob {name!r}", path)

    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", path)
    if not isinstance(meta, dict) or "config" not in meta:
        raise FormatError("meta.json missing or incomplete", path)
    if not isinstance(meta.get("n_mels"), int) or meta["n_mels"] < 1:
        raise FormatError(f"meta.json has no valid n_mels (got {meta.get('n_mels')!r})", path)
    try:
        digest = digest_bytes.decode("ascii")
    except UnicodeDecodeError:
        raise FormatError("config digest is not ASCII", path)

    return Checkpoint(
        digest=digest,
        params=params,
        optimizer_state=optimizer_state,
        rng_state=rng_state,
        meta=meta,
    )


def save_checkpoint(
    path: PathLike,
    model: torch.nn.Module,
    cfg: TrainConfig,
    step: int,
    n_mels: int,
    optimizer: Optional[torch.optim.Optimizer] = None,
    rng: Optional[Rng] = None,
    vocab: Optional[Vocab] = None,
    speed_stats: Optional[SpeedStats] = None,
) -> Path:
    """
    Write model, optimizer and rng state atomically (temp file + rename).

    Returns:
        The checkpoint path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    params = {name: p.detach() for name, p in model.state_dict().items()}
    optimizer_state: Dict[int, Dict[str, torch.Tensor]] = {}
    param_groups: List[Dict[str, Any]] = []
    if optimizer is not None:
        state_dict = optimizer.state_dict()
        for index, slots in state_dict["state"].items():
            optimizer_state[int(index)] = {k: torch.as_tensor(v) for k, v in slots.items()}
        param_groups = state_dict["param_groups"]

    meta: Dict[str, Any] = {
        "config": cfg.model_dump(mode="json"),
        "step": int(step),
        "n_mels": int(n_mels),
        "vocab": vocab.symbols if vocab else None,
        "speed_stats": speed_stats.model_dump() if speed_stats else None,
        "rng": {"seed": rng.seed, "counter": rng.counter} if rng else None,
        "optimizer_param_groups": param_groups,
    }
    rng_state = rng.get_state()["state"] if rng else None

    data = encode_checkpoint(config_digest(cfg), params, optimizer_state, rng_state, meta)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)

    log_trace_event(
        logger, "checkpoint", "saved", f"step {step} -> {path}",
        {"path": str(path), "step": step, "bytes": len(data)},
    )
    return path


def read_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FormatError("checkpoint not found", path)
    return decode_checkpoint(path.read_bytes(), path)


def load_checkpoint(
    path: PathLike,
    model: torch.nn.Module,
    cfg: Optional[TrainConfig] = None,
    optimizer: Optional[torch.optim.Optimizer] = None,
    rng: Optional[Rng] = None,
) -> Checkpoint:
    """
    Restore a checkpoint into existing objects.

    Args:
        path: Checkpoint file
        model: Model built for the same architecture
        cfg: Expected configuration; its digest must match the file's
        optimizer: Optional optimizer to restore
        rng: Optional generator to restore

    Returns:
        The decoded checkpoint

    Raises:
        ConfigIncompatibleError: digest or parameter set mismatch
    """
    ckpt = read_checkpoint(path)
    if cfg is not None and config_digest(cfg) != ckpt.digest:
        raise ConfigIncompatibleError(
            f"{path}: checkpoint digest {ckpt.digest[:12]} does not match config digest {config_digest(cfg)[:12]}"
        )

    try:
        model.load_state_dict(ckpt.params, strict=True)
    except RuntimeError as e:
        raise ConfigIncompatibleError(f"{path}: parameters do not fit the model: {e}")

    if optimizer is not None:
        optimizer.load_state_dict({
            "state": {index: dict(slots) for index, slots in ckpt.optimizer_state.items()},
            "param_groups": ckpt.meta.get("optimizer_param_groups") or optimizer.state_dict()["param_groups"],
        })

    if rng is not None and ckpt.rng_state is not None:
        rng_meta = ckpt.meta.get("rng") or {}
        rng.set_state({
            "seed": rng_meta.get("seed", rng.seed),
            "counter": rng_meta.get("counter", 0),
            "state": ckpt.rng_state,
        })

    log_trace_event(logger, "checkpoint", "loaded", f"{path} at step {ckpt.step}", {"path": str(path), "step": ckpt.step})
    return ckpt
