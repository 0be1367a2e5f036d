"""Minimal NIfTI-1 reader/writer.

Supports single-file .nii / .nii.gz volumes with the fields this project
needs: dimensions, datatype, voxel spacing and intensity scaling. No
dependency on external neuroimaging packages.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import MalformedHeaderError

HEADER_SIZE = 348
MAGIC_OFFSET = 344

# NIfTI-1 datatype code -> numpy dtype
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def _open(path: Path, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def read(path) -> tuple[np.ndarray, tuple[float, ...]]:
    """Read a NIfTI-1 volume.

    Returns (data, spacing) where data has the on-disk axis order
    (x, y, z[, t]) and spacing is pixdim[1:1+ndim] in mm.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    with _open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_SIZE:
        raise MalformedHeaderError(f"{path}: file shorter than NIfTI header")

    sizeof_hdr = struct.unpack_from("<i", raw, 0)[0]
    if sizeof_hdr == HEADER_SIZE:
        bo = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
        bo = ">"
    else:
        raise MalformedHeaderError(f"{path}: bad sizeof_hdr")
    magic = raw[MAGIC_OFFSET : MAGIC_OFFSET + 4]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise MalformedHeaderError(f"{path}: bad ndim {ndim}")
    shape = dim[1 : 1 + ndim]
    datatype = struct.unpack_from(bo + "h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise MalformedHeaderError(f"{path}: unsupported datatype {datatype}")
    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    vox_offset = int(struct.unpack_from(bo + "f", raw, 108)[0])
    scl_slope, scl_inter = struct.unpack_from(bo + "2f", raw, 112)

    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(bo)
    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    data = data.reshape(shape, order="F")
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data * slope + scl_inter
    spacing = tuple(float(p) for p in pixdim[1 : 1 + ndim])
    return np.asarray(data), spacing


def write(path, data: np.ndarray, spacing) -> None:
    """Write `data` (axis order x, y, z[, t]) as a single-file NIfTI-1 volume."""
    path = Path(path)
    data = np.asarray(data)
    if data.dtype not in _DTYPE_CODES:
        data = data.astype(np.float32)
    ndim = data.ndim
    dim = [ndim] + list(data.shape) + [1] * (7 - ndim)
    pixdim = [1.0] + [float(s) for s in spacing] + [1.0] * (7 - len(spacing))

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<h", hdr, 70, _DTYPE_CODES[data.dtype])
    struct.pack_into("<h", hdr, 72, data.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    hdr[MAGIC_OFFSET : MAGIC_OFFSET + 4] = b"n+1\x00"

    path.parent.mkdir(parents=True, exist_ok=True)
    with _open(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(b"\x00" * 4)  # pad to vox_offset 352
        f.write(np.asfortranarray(data).tobytes(order="F"))
