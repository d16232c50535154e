"""Impedance CSV files.

Layout::

    # domain: dq
    # frame: local:N1
    # kind: impedance
    freq_hz,re11,im11,re12,im12,re21,im21,re22,im22
    1,...

Numbers are written with ``repr`` so a read/write round trip is lossless.
"""
from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np

from .errors import InputError
from .freqresp import Domain, Frame, FrequencyGrid, FrequencyResponse2x2, Kind

HEADER = "freq_hz,re11,im11,re12,im12,re21,im21,re22,im22"
_ENTRY_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps_response(resp: FrequencyResponse2x2, extra_meta: dict | None = None) -> str:
    out = io.StringIO()
    out.write(f"# domain: {resp.domain.value}\n")
    out.write(f"# frame: {resp.frame}\n")
    out.write(f"# kind: {resp.kind.value}\n")
    for key, val in (extra_meta or {}).items():
        out.write(f"# {key}: {val}\n")
    out.write(HEADER + "\n")
    for k, f in enumerate(resp.grid.points):
        row = [_fmt(f)]
        for i, j in _ENTRY_ORDER:
            z = resp.values[k, i, j]
            row += [_fmt(z.real), _fmt(z.imag)]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def write_response(path: str | os.PathLike, resp: FrequencyResponse2x2,
                   extra_meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(dumps_response(resp, extra_meta), encoding="utf-8")
    return path


def loads_response(text: str, source: str = "<string>") -> tuple[FrequencyResponse2x2, dict]:
    """Parse an impedance CSV. Returns the response and every metadata pair."""
    meta: dict[str, str] = {}
    rows = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, val = body.split(":", 1)
                meta[key.strip()] = val.strip()
            continue
        if not header_seen:
            if line.replace(" ", "") != HEADER:
                raise InputError(f"{source}:{lineno}: expected header {HEADER!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise InputError(f"{source}:{lineno}: expected 9 columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise InputError(f"{source}:{lineno}: {exc}") from None
    if not header_seen or not rows:
        raise InputError(f"{source}: no data rows")
    for key in ("domain", "frame", "kind"):
        if key not in meta:
            raise InputError(f"{source}: missing '# {key}:' metadata line")
    try:
        domain = Domain(meta["domain"])
        kind = Kind(meta["kind"])
    except ValueError as exc:
        raise InputError(f"{source}: bad metadata: {exc}") from None
    frame = Frame.parse(meta["frame"])
    data = np.array(rows)
    vals = np.empty((len(rows), 2, 2), dtype=complex)
    for n, (i, j) in enumerate(_ENTRY_ORDER):
        vals[:, i, j] = data[:, 1 + 2 * n] + 1j * data[:, 2 + 2 * n]
    resp = FrequencyResponse2x2(FrequencyGrid(data[:, 0]), vals, domain, frame, kind)
    return resp, meta


def read_response(path: str | os.PathLike) -> tuple[FrequencyResponse2x2, dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return loads_response(text, str(path))
