"""Flat-file stream formats.

Text: a header line ``n=<int> m=<int> mode=<ins|turn> order=<rand|arb>``
followed by one update per line, ``item`` or ``item delta`` (a missing delta
means +1).

Binary: magic ``FPS1``, little-endian u64 universe size, u64 stream length,
then one (u64 item, i64 delta) record per update.  ``read_stream`` sniffs
the magic, so both formats read through the same entry point; binary files
carry no mode/order fields and default to turnstile/arbitrary unless the
caller overrides.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import (
    ARBITRARY_ORDER,
    INSERTION_ONLY,
    RANDOM_ORDER,
    TURNSTILE,
    StreamMeta,
)

MAGIC = b"FPS1"

_MODE_TO_TOKEN = {INSERTION_ONLY: "ins", TURNSTILE: "turn"}
_TOKEN_TO_MODE = {v: k for k, v in _MODE_TO_TOKEN.items()}
_ORDER_TO_TOKEN = {RANDOM_ORDER: "rand", ARBITRARY_ORDER: "arb"}
_TOKEN_TO_ORDER = {v: k for k, v in _ORDER_TO_TOKEN.items()}


def write_text_stream(path, items: np.ndarray, deltas: np.ndarray | None,
                      meta: StreamMeta) -> None:
    items = np.asarray(items, dtype=np.int64)
    lines = [
        f"n={meta.n} m={len(items)} mode={_MODE_TO_TOKEN[meta.mode]} "
        f"order={_ORDER_TO_TOKEN[meta.order]}"
    ]
    if deltas is None:
        lines.extend(str(i) for i in items.tolist())
    else:
        deltas = np.asarray(deltas, dtype=np.int64)
        lines.extend(
            str(i) if d == 1 else f"{i} {d}"
            for i, d in zip(items.tolist(), deltas.tolist())
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_binary_stream(path, items: np.ndarray, deltas: np.ndarray | None,
                        meta: StreamMeta) -> None:
    items = np.asarray(items, dtype=np.int64)
    if deltas is None:
        deltas = np.ones(len(items), dtype=np.int64)
    record = np.empty((len(items), 2), dtype="<i8")
    record[:, 0] = items
    record[:, 1] = deltas
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", meta.n, len(items)))
        fh.write(record.tobytes())


def read_stream(path, mode: str | None = None, order: str | None = None,
                poly_exponent: int = 3):
    """Read a stream file (either format).

    Returns ``(items, deltas, meta)``.  ``mode``/``order`` override the
    file's declaration (binary files have none: they default to
    turnstile/arbitrary).
    """
    raw = Path(path).read_bytes()
    if raw[:4] == MAGIC:
        n, m = struct.unpack_from("<QQ", raw, 4)
        record = np.frombuffer(raw, dtype="<i8", offset=20).reshape(-1, 2)
        if record.shape[0] != m:
            raise ValueError(f"binary stream declares {m} updates, found {record.shape[0]}")
        items = record[:, 0].astype(np.int64)
        deltas = record[:, 1].astype(np.int64)
        file_mode = TURNSTILE
        file_order = ARBITRARY_ORDER
    else:
        text = raw.decode()
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty stream file")
        header = dict(part.split("=", 1) for part in lines[0].split())
        n = int(header["n"])
        m = int(header["m"])
        file_mode = _TOKEN_TO_MODE[header.get("mode", "ins")]
        file_order = _TOKEN_TO_ORDER[header.get("order", "arb")]
        items = np.empty(m, dtype=np.int64)
        deltas = np.ones(m, dtype=np.int64)
        seen = 0
        for idx, line in enumerate(lines[1:m + 1]):
            parts = line.split()
            items[idx] = int(parts[0])
            if len(parts) > 1:
                deltas[idx] = int(parts[1])
            seen += 1
        if seen != m:
            raise ValueError(f"stream declares {m} updates, found {seen}")
    meta = StreamMeta(
        n=int(n), m=int(m),
        mode=mode if mode is not None else file_mode,
        order=order if order is not None else file_order,
        poly_exponent=poly_exponent,
    )
    return items, deltas, meta
