"""Sample files, unmixing documents and result tables.

TBSS1 binary layout (all integers little-endian)::

    offset  size     content
    0       5        magic b"TBSS1"
    5       1        byte order tag b"L" (little-endian payload)
    6       3        element type tag b"f64"
    9       4        uint32 tensor order r
    13      8 r      uint64 dims p_1 .. p_r
    13+8r   8        uint64 sample size n
    21+8r   8 n rho  float64 payload, observations contiguous, each row-major

Every writer goes through a temporary file in the target directory that is
renamed into place only once it is complete.
"""

import contextlib
import json
import os
import struct
import tempfile

import numpy as np


__all__ = [
    "SampleFormatError",
    "MalformedHeaderError",
    "TruncatedPayloadError",
    "DimensionMismatchError",
    "MAGIC",
    "write_sample",
    "read_sample",
    "read_csv_sample",
    "load_sample",
    "atomic_writer",
    "result_to_dict",
    "write_result",
    "read_unmixing",
    "format_table",
    "write_table",
]

MAGIC = b"TBSS1"
_BYTE_ORDER = b"L"
_DTYPE = b"f64"
_FIXED = len(MAGIC) + len(_BYTE_ORDER) + len(_DTYPE)


class SampleFormatError(ValueError):
    pass


class MalformedHeaderError(SampleFormatError):
    pass


class TruncatedPayloadError(SampleFormatError):
    pass


class DimensionMismatchError(SampleFormatError):
    pass


@contextlib.contextmanager
def atomic_writer(path, mode="w"):
    """Open a temporary sibling of ``path``; rename it over ``path`` on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _header(dims, n):
    return (
        MAGIC
        + _BYTE_ORDER
        + _DTYPE
        + struct.pack("<I", len(dims))
        + struct.pack(f"<{len(dims)}Q", *dims)
        + struct.pack("<Q", n)
    )


def write_sample(path, x):
    """Write a sample of shape ``(n, p_1, ..., p_r)`` in TBSS1 format."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError(f"a sample needs shape (n, p_1, ..., p_r), got {x.shape}")
    with atomic_writer(path, "wb") as fh:
        fh.write(_header(x.shape[1:], x.shape[0]))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def read_sample(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _FIXED + 4:
        raise MalformedHeaderError(f"{path}: file too short for a TBSS1 header")
    if blob[: len(MAGIC)] != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {blob[:5]!r}, expected {MAGIC!r}")
    if blob[5:6] != _BYTE_ORDER:
        raise MalformedHeaderError(f"{path}: unsupported byte order tag {blob[5:6]!r}")
    if blob[6:9] != _DTYPE:
        raise MalformedHeaderError(f"{path}: unsupported element type {blob[6:9]!r}")
    (order,) = struct.unpack_from("<I", blob, _FIXED)
    if order < 1:
        raise MalformedHeaderError(f"{path}: tensor order must be >= 1, got {order}")
    header_len = _FIXED + 4 + 8 * order + 8
    if len(blob) < header_len:
        raise MalformedHeaderError(
            f"{path}: header declares order {order} but the file ends after {len(blob)} bytes"
        )
    dims = struct.unpack_from(f"<{order}Q", blob, _FIXED + 4)
    (n,) = struct.unpack_from("<Q", blob, _FIXED + 4 + 8 * order)
    if any(d < 1 for d in dims):
        raise MalformedHeaderError(f"{path}: every dimension must be >= 1, got {dims}")
    expected = 8 * n * int(np.prod(dims))
    actual = len(blob) - header_len
    if actual != expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {actual} bytes, expected {expected} "
            f"(n = {n}, dims = {list(dims)})"
        )
    data = np.frombuffer(blob, dtype="<f8", offset=header_len)
    return data.astype(np.float64).reshape((n,) + tuple(dims))


def read_csv_sample(path, dims):
    """One observation per row, flattened row-major; ``dims`` gives the shape."""
    dims = tuple(int(d) for d in dims)
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    rho = int(np.prod(dims))
    if data.shape[1] != rho:
        raise DimensionMismatchError(
            f"{path}: rows have {data.shape[1]} values but dims {list(dims)} need {rho}"
        )
    return data.reshape((data.shape[0],) + dims)


def load_sample(path, dims=None):
    """Read a TBSS1 file, or a CSV file when ``dims`` is given."""
    if dims is not None:
        return read_csv_sample(path, dims)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head != MAGIC:
        raise MalformedHeaderError(
            f"{path}: not a TBSS1 file (CSV input needs the dims option)"
        )
    return read_sample(path)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def result_to_dict(result, latent_file=None):
    plan = result.plan
    modes = []
    for m, gamma in enumerate(result.unmixing):
        modes.append(
            {
                "mode": m,
                "method": plan.methods[m] if plan else None,
                "k": plan.ks[m] if plan else None,
                "unmixing": gamma.tolist(),
                "kurtosis": None if result.kurtosis[m] is None else result.kurtosis[m].tolist(),
                "diagnostics": _jsonable(result.diagnostics[m]),
            }
        )
    return {
        "format": "ktjade-unmixing/1",
        "dims": list(result.dims),
        "n": int(result.n),
        "plan": {"methods": list(plan.methods), "ks": list(plan.ks)} if plan else None,
        "modes": modes,
        "latent_file": latent_file,
    }


def write_result(path, result, latent_file=None):
    doc = result_to_dict(result, latent_file)
    with atomic_writer(path) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_unmixing(path):
    """Per-mode unmixing matrices from a document written by :func:`write_result`."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "ktjade-unmixing/1":
        raise SampleFormatError(f"{path}: not an unmixing document")
    return [np.array(m["unmixing"], dtype=np.float64) for m in doc["modes"]]


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_table(rows, columns=None):
    """Tab-separated text with a header line."""
    if not rows:
        return ""
    columns = columns or list(rows[0])
    lines = ["\t".join(columns)]
    lines += ["\t".join(_cell(row[c]) for c in columns) for row in rows]
    return "\n".join(lines) + "\n"


def write_table(path, rows, columns=None):
    with atomic_writer(path) as fh:
        fh.write(format_table(rows, columns))
