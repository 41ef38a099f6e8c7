"""
Alignment heatmaps as 8-bit PGM images plus plain CSV matrices.
"""
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from .logging import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]


def to_pgm(matrix: np.ndarray) -> bytes:
    """
    Encode a 2-D matrix as a binary PGM (P5), one row per time step.

    Values are mapped linearly from [min, max] to [0, 255]; the original range is
    kept in a comment line. A constant matrix encodes as all zeros.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D matrix, got shape {m.shape}")
    lo, hi = float(m.min()), float(m.max())
    span = hi - lo
    pixels = np.zeros(m.shape, dtype=np.uint8) if span <= 0 else np.rint((m - lo) / span * 255.0).astype(np.uint8)
    rows, cols = m.shape
    header = f"P5\n# min={lo:.6g} max={hi:.6g}\n{cols} {rows}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def read_pgm(path: PathLike) -> np.ndarray:
    """Decode a P5 PGM written by to_pgm back to its uint8 pixels."""
    data = Path(path).read_bytes()
    fields: List[bytes] = []
    pos = 0
    while len(fields) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end]
        pos = end + 1
        if line.startswith(b"#"):
            continue
        fields.extend(line.split())
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a P5 PGM")
    cols, rows = int(fields[1]), int(fields[2])
    return np.frombuffer(data[pos:pos + rows * cols], dtype=np.uint8).reshape(rows, cols)


def write_alignment(directory: PathLike, layer: int, weights: np.ndarray, temporal_scale: int) -> None:
    """Write alignments/layer_<k>.csv and .pgm for one hierarchy layer."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    w = np.asarray(weights, dtype=np.float64)
    header = f"T,L,layer\n{w.shape[0]},{w.shape[1]},{layer}\ntemporal_scale={temporal_scale}"
    np.savetxt(directory / f"layer_{layer}.csv", w, delimiter=",", fmt="%.9g", header=header, comments="# ")
    (directory / f"layer_{layer}.pgm").write_bytes(to_pgm(w))


def write_alignments(directory: PathLike, alignments: Sequence) -> int:
    """
    Write every AlignmentMatrix of a forward pass.

    Returns:
        Number of layers written
    """
    for a in alignments:
        write_alignment(directory, a.layer_index, a.weights.detach().cpu().numpy(), a.temporal_scale)
    logger.debug(f"Wrote {len(alignments)} alignment heatmaps to {directory}")
    return len(alignments)


def read_alignment_csv(path: PathLike) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#"))
