"""JEQF binary dumps and CSV tables for grid fields."""
import numpy as np
from loguru import logger

from jeq.geom.core import Grid, HermitianField, PotentialField

MAGIC = b"JEQF"
VERSION = 1
KIND_POTENTIAL = 1
KIND_HERMITIAN = 2

# 32 bytes: magic, version, n, N, kind, 3 reserved words
HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u4"),
                         ("N", "<u4"), ("kind", "<u4"), ("reserved", "<u4", (3,))])


def write_field(path, field) -> None:
    """Dump a PotentialField or HermitianField in the JEQF format.

    Layout: 32-byte header, the 2n periods as f64, then the values in C order as
    little-endian f64 (Hermitian entries as (re, im) pairs).
    """
    grid = field.grid
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["n"] = grid.n
    header["N"] = grid.N
    if isinstance(field, PotentialField):
        header["kind"] = KIND_POTENTIAL
        data = np.asarray(field.values, dtype="<f8")
    elif isinstance(field, HermitianField):
        header["kind"] = KIND_HERMITIAN
        data = np.stack([field.values.real, field.values.imag], axis=-1).astype("<f8")
    else:
        raise TypeError(f"cannot serialize {type(field).__name__}")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.asarray(grid.periods, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(data).tobytes())
    logger.debug(f"wrote {type(field).__name__} ({grid.n}, {grid.N}) to {path}")


def read_field(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_DTYPE.itemsize:
        raise ValueError(f"{path}: truncated JEQF header")
    header = np.frombuffer(raw[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if header["magic"] != MAGIC:
        raise ValueError(f"{path}: not a JEQF file")
    if int(header["version"]) != VERSION:
        raise ValueError(f"{path}: unsupported JEQF version {int(header['version'])}")
    n, N, kind = int(header["n"]), int(header["N"]), int(header["kind"])
    body = np.frombuffer(raw[HEADER_DTYPE.itemsize:], dtype="<f8")
    grid = Grid(n, N, tuple(body[:2 * n]))
    data = body[2 * n:]
    if kind == KIND_POTENTIAL:
        return PotentialField(grid, data.reshape(grid.shape))
    if kind == KIND_HERMITIAN:
        pairs = data.reshape(grid.shape + (n, n, 2))
        return HermitianField(grid, pairs[..., 0] + 1j * pairs[..., 1])
    raise ValueError(f"{path}: unknown field kind {kind}")


def write_table(path, header: list, rows, fmt="%.17g") -> None:
    """RFC 4180 style numeric CSV with a header row and LF line endings."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        rows = np.empty((0, len(header)))
    np.savetxt(path, rows, fmt=fmt, delimiter=",", header=",".join(header),
               comments="", newline="\n")


def export_csv(path, field) -> None:
    """Field as CSV: index columns i1..i{2n}, then the value columns."""
    grid = field.grid
    index = np.indices(grid.shape).reshape(2 * grid.n, -1).T
    header = [f"i{a + 1}" for a in range(2 * grid.n)]
    if isinstance(field, PotentialField):
        header.append("value")
        values = field.values.reshape(-1, 1)
    else:
        n = grid.n
        flat = field.values.reshape(-1, n, n)
        columns = []
        for a in range(n):
            for b in range(n):
                header += [f"re_{a + 1}{b + 1}", f"im_{a + 1}{b + 1}"]
                columns += [flat[:, a, b].real, flat[:, a, b].imag]
        values = np.stack(columns, axis=-1)
    fmt = ["%d"] * index.shape[1] + ["%.17g"] * values.shape[1]
    write_table(path, header, np.hstack([index, values]), fmt=fmt)
