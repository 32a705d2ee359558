"""On-disk encodings for logit matrices and second-moment matrices.

Both binary formats are little-endian with fixed headers:

Logit file (magic ``NDLM``)::

    bytes 0..3   magic "NDLM"
    bytes 4..7   format version, u32 (currently 1)
    bytes 8..15  sample count N, u64
    bytes 16..23 category count n, u64
    bytes 24..27 flags, u32: bit 0 = labels present, bit 1 = names present
    then         N * n float64 logits, row-major
    then         N u32 labels                      (iff bit 0)
    then         n strings, each a u32 byte length
                 followed by that many UTF-8 bytes (iff bit 1)

Second-moment file (magic ``NDCV``)::

    bytes 0..3   magic "NDCV"
    bytes 4..7   format version, u32 (currently 1)
    bytes 8..15  matrix order n, u64
    bytes 16..23 sample count, u64
    then         n*(n+1)/2 float64 values: the upper triangle including
                 the diagonal, row-major

Parsers are strict: wrong magic, bad version, non-finite values,
out-of-range labels and trailing bytes are all rejected, and every
diagnostic names the byte offset (binary) or line number (CSV) of the
problem.  Writers and parsers round-trip bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .covariance import CovMatrix, LogitMatrix
from .errors import FormatError
from .linalg import NEG_EIG_BAND, SymmetricMatrix

LOGIT_MAGIC = b"NDLM"
COV_MAGIC = b"NDCV"
FORMAT_VERSION = 1
FLAG_LABELS = 1
FLAG_NAMES = 2


class _Reader:
    """Cursor over a byte buffer with offset-carrying errors."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, count: int, what: str) -> bytes:
        if self.off + count > len(self.buf):
            raise FormatError(
                f"unexpected end of file while reading {what}: need {count} "
                f"bytes at offset {self.off}, file has {len(self.buf)}",
                position=f"byte {self.off}",
            )
        chunk = self.buf[self.off : self.off + count]
        self.off += count
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def finish(self) -> None:
        extra = len(self.buf) - self.off
        if extra:
            raise FormatError(
                f"{extra} trailing bytes after the end of the payload",
                position=f"byte {self.off}",
            )


def _check_magic(r: _Reader, magic: bytes, kind: str) -> None:
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(
            f"bad magic for a {kind} file: expected {magic!r}, got {got!r}",
            position="byte 0",
        )
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unsupported {kind} format version {version}", position="byte 4"
        )


def write_logits(matrix: LogitMatrix) -> bytes:
    flags = 0
    if matrix.labels is not None:
        flags |= FLAG_LABELS
    if matrix.names is not None:
        flags |= FLAG_NAMES
    parts = [
        LOGIT_MAGIC,
        struct.pack("<IQQI", FORMAT_VERSION, matrix.samples, matrix.n, flags),
        np.ascontiguousarray(matrix.data, dtype="<f8").tobytes(),
    ]
    if matrix.labels is not None:
        parts.append(matrix.labels.astype("<u4").tobytes())
    if matrix.names is not None:
        for name in matrix.names:
            raw = name.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)) + raw)
    return b"".join(parts)


def read_logits(buf: bytes) -> LogitMatrix:
    r = _Reader(buf)
    _check_magic(r, LOGIT_MAGIC, "logit")
    samples = r.u64("sample count")
    n = r.u64("category count")
    flags = r.u32("flags")
    if samples == 0 or n == 0:
        raise FormatError(
            f"sample and category counts must be positive, got {samples} x {n}",
            position="byte 8",
        )
    if flags & ~(FLAG_LABELS | FLAG_NAMES):
        raise FormatError(f"unknown flag bits 0x{flags:x}", position="byte 24")

    data_off = r.off
    raw = r.take(samples * n * 8, "logit data")
    data = np.frombuffer(raw, dtype="<f8").reshape(samples, n).copy()
    bad = np.flatnonzero(~np.isfinite(data.ravel()))
    if bad.size:
        raise FormatError(
            "non-finite logit value",
            position=f"byte {data_off + int(bad[0]) * 8}",
        )

    labels = None
    if flags & FLAG_LABELS:
        lab_off = r.off
        labels = np.frombuffer(r.take(samples * 4, "labels"), dtype="<u4").astype(
            np.int64
        )
        bad = np.flatnonzero(labels >= n)
        if bad.size:
            raise FormatError(
                f"label {labels[bad[0]]} out of range [0, {n})",
                position=f"byte {lab_off + int(bad[0]) * 4}",
            )

    names = None
    if flags & FLAG_NAMES:
        names = []
        for k in range(n):
            length_off = r.off
            length = r.u32(f"name {k} length")
            raw_name = r.take(length, f"name {k}")
            try:
                names.append(raw_name.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise FormatError(
                    f"name {k} is not valid UTF-8: {exc}",
                    position=f"byte {length_off + 4}",
                ) from exc
        names = tuple(names)

    r.finish()
    return LogitMatrix(data, labels, names)


def write_cov(cov: CovMatrix) -> bytes:
    n = cov.n
    iu = np.triu_indices(n)
    tri = np.ascontiguousarray(cov.mat.data[iu], dtype="<f8")
    return b"".join(
        [
            COV_MAGIC,
            struct.pack("<IQQ", FORMAT_VERSION, n, cov.sample_count),
            tri.tobytes(),
        ]
    )


def read_cov(buf: bytes, check_psd: bool = True) -> CovMatrix:
    r = _Reader(buf)
    _check_magic(r, COV_MAGIC, "second-moment")
    n = r.u64("matrix order")
    count = r.u64("sample count")
    if n == 0:
        raise FormatError("matrix order must be positive", position="byte 8")
    if count == 0:
        raise FormatError("sample count must be positive", position="byte 16")
    tri_off = r.off
    entries = n * (n + 1) // 2
    tri = np.frombuffer(r.take(entries * 8, "triangle data"), dtype="<f8")
    bad = np.flatnonzero(~np.isfinite(tri))
    if bad.size:
        raise FormatError(
            "non-finite matrix value",
            position=f"byte {tri_off + int(bad[0]) * 8}",
        )
    r.finish()

    mat = np.zeros((n, n))
    iu = np.triu_indices(n)
    mat[iu] = tri
    mat = mat + np.triu(mat, 1).T
    if check_psd:
        vals = np.linalg.eigvalsh(mat)
        if vals[0] < -NEG_EIG_BAND * max(1e-300, float(np.abs(mat).max())):
            raise FormatError(
                f"matrix is not positive semidefinite: smallest eigenvalue "
                f"{vals[0]:.6e}",
                position=f"byte {tri_off}",
            )
    return CovMatrix(SymmetricMatrix(mat), count)


def read_logits_csv(text: str, labels_col: int | None = None) -> LogitMatrix:
    """Parse comma-separated logit rows, one sample per line.

    An optional header row names the categories (detected when any
    field of the first line fails to parse as a float).  When
    ``labels_col`` is given, that column (negative values count from the
    end) holds integer labels and the remaining columns are logits.
    Diagnostics cite 1-based line and column numbers.
    """
    rows: list[list[str]] = []
    first_data_line = 1
    header: list[str] | None = None
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty input", position="line 1")
    for lineno, line in enumerate(lines, start=1):
        if line.strip() == "":
            raise FormatError("blank line", position=f"line {lineno}")
        rows.append([cell.strip() for cell in line.split(",")])

    def parses_as_float(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    if not all(parses_as_float(c) for c in rows[0]):
        header = rows[0]
        rows = rows[1:]
        first_data_line = 2
        if not rows:
            raise FormatError("no data rows after the header", position="line 2")

    width = len(rows[0])
    col_index: int | None = None
    if labels_col is not None:
        col_index = labels_col if labels_col >= 0 else width + labels_col
        if not 0 <= col_index < width:
            raise FormatError(
                f"labels column {labels_col} out of range for {width} columns",
                position=f"line {first_data_line}",
            )
        if width < 2:
            raise FormatError(
                "need at least one logit column besides the labels",
                position=f"line {first_data_line}",
            )

    data = np.empty((len(rows), width - (0 if col_index is None else 1)))
    labels = np.empty(len(rows), dtype=np.int64) if col_index is not None else None
    for k, cells in enumerate(rows):
        lineno = first_data_line + k
        if len(cells) != width:
            raise FormatError(
                f"expected {width} columns, got {len(cells)}",
                position=f"line {lineno}",
            )
        dest = 0
        for c, cell in enumerate(cells):
            if c == col_index:
                try:
                    labels[k] = int(cell)
                except ValueError:
                    raise FormatError(
                        f"label {cell!r} is not an integer",
                        position=f"line {lineno}, column {c + 1}",
                    ) from None
                continue
            try:
                value = float(cell)
            except ValueError:
                raise FormatError(
                    f"value {cell!r} is not a number",
                    position=f"line {lineno}, column {c + 1}",
                ) from None
            if not np.isfinite(value):
                raise FormatError(
                    f"non-finite value {cell!r}",
                    position=f"line {lineno}, column {c + 1}",
                )
            data[k, dest] = value
            dest += 1

    n = data.shape[1]
    if labels is not None:
        bad = np.flatnonzero((labels < 0) | (labels >= n))
        if bad.size:
            raise FormatError(
                f"label {labels[bad[0]]} out of range [0, {n})",
                position=f"line {first_data_line + int(bad[0])}",
            )

    names = None
    if header is not None:
        names = [h for c, h in enumerate(header) if c != col_index]
        if len(names) != n:
            names = None
        else:
            names = tuple(names)
    return LogitMatrix(data, labels, names)
