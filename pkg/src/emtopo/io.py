"""Text formats for far-field data, indicator maps, PGM images and stats reports."""

from __future__ import annotations

import json

import numpy as np

from .forward import FarFieldData
from .geometry import build_product_quadrature
from .imaging import IndicatorMap, PeakSummary
from .kernels import WaveParameters

FARFIELD_MAGIC = "# emtopo-farfield 1"
MAP_MAGIC = "# emtopo-map 1"


class FormatError(ValueError):
    pass


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _vec(v) -> str:
    return ",".join(_g(x) for x in v)


def write_far_field(path, data: FarFieldData, fingerprint: str) -> None:
    """Header, then one ``re0,im0,re1,im1,re2,im2`` row per node and block."""
    q, wp = data.quad, data.wp
    lines = [
        FARFIELD_MAGIC,
        f"# fingerprint={fingerprint}",
        f"# epsilon0={_g(wp.epsilon0)} mu0={_g(wp.mu0)} omega={_g(wp.omega)} kappa={_g(wp.kappa)}",
        f"# quadrature polar_order={q.polar_order} azimuthal_count={q.azimuthal_count} nodes={len(q)}",
        f"# blocks={len(data)}",
    ]
    for b in range(len(data)):
        j, ell = data.index[b]
        lines.append(
            f"# block {b} j={j} ell={ell} theta={_vec(data.tags[b, 0])} theta_perp={_vec(data.tags[b, 1])}"
        )
        for e in data.blocks[b]:
            lines.append(",".join(_g(c) for z in e for c in (z.real, z.imag)))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _fields(line: str) -> dict:
    out = {}
    for tok in line[1:].split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            out[k] = v
    return out


def read_far_field(path):
    """Returns (FarFieldData, fingerprint)."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FARFIELD_MAGIC:
        raise FormatError("not a far-field data file")
    try:
        fingerprint = _fields(lines[1])["fingerprint"]
        med = {k: float(v) for k, v in _fields(lines[2]).items()}
        qd = {k: int(v) for k, v in _fields(lines[3]).items()}
        nblocks = int(_fields(lines[4])["blocks"])
        wp = WaveParameters(med["epsilon0"], med["mu0"], med["omega"], med["kappa"])
        quad = build_product_quadrature(qd["polar_order"], qd["azimuthal_count"])
        K = qd["nodes"]
        if K != len(quad):
            raise FormatError("node count does not match the quadrature")
        blocks = np.empty((nblocks, K, 3), dtype=complex)
        tags = np.empty((nblocks, 2, 3))
        index = np.empty((nblocks, 2), dtype=int)
        pos = 5
        for b in range(nblocks):
            head = _fields(lines[pos])
            index[b] = int(head["j"]), int(head["ell"])
            tags[b, 0] = [float(x) for x in head["theta"].split(",")]
            tags[b, 1] = [float(x) for x in head["theta_perp"].split(",")]
            rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[pos + 1 : pos + 1 + K]])
            if rows.shape != (K, 6):
                raise FormatError(f"block {b} is truncated")
            blocks[b] = rows[:, 0::2] + 1j * rows[:, 1::2]
            pos += 1 + K
    except (KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed far-field file: {exc}") from None
    return FarFieldData(quad, wp, blocks, tags, index), fingerprint


def write_map_csv(path, imap: IndicatorMap, peak: PeakSummary | None = None) -> None:
    """``# key=value`` header lines, then ``x,y,z,value`` rows in grid order."""
    lines = [MAP_MAGIC]
    for k in sorted(imap.meta):
        lines.append(f"# {k}={imap.meta[k]}")
    g = imap.grid
    lines.append(f"# grid_counts={','.join(str(c) for c in g.counts)} spacing={_g(g.spacing)}")
    if peak is not None:
        lines.append(f"# peak_point={_vec(peak.argmax)}")
        lines.append(f"# peak_value={_g(peak.peak)}")
        fwhm = "undefined" if peak.fwhm is None else _vec(peak.fwhm)
        lines.append(f"# fwhm={fwhm}")
    for p, v in zip(imap.points(), imap.values):
        lines.append(f"{_g(p[0])},{_g(p[1])},{_g(p[2])},{_g(v)}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_map_csv(path):
    """Returns (meta dict, points (P, 3), values (P,))."""
    meta, rows = {}, []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body and " " not in body.split("=", 1)[0]:
                    k, v = body.split("=", 1)
                    meta[k] = v
                continue
            rows.append([float(x) for x in line.split(",")])
    arr = np.array(rows).reshape(-1, 4)
    return meta, arr[:, :3], arr[:, 3]


def write_pgm(path, imap: IndicatorMap) -> None:
    """8-bit binary PGM, min-max normalized; first grid axis runs down the rows."""
    arr = imap.as_array()
    if arr.ndim != 2:
        raise ValueError("PGM export needs a planar grid")
    lo, hi = float(arr.min()), float(arr.max())
    scaled = np.zeros(arr.shape) if hi == lo else (arr - lo) / (hi - lo)
    pix = np.round(scaled * 255.0).astype(np.uint8)
    rows, cols = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n# fingerprint={imap.meta.get('fingerprint', '')}\n{cols} {rows}\n255\n".encode())
        fh.write(pix.tobytes())


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
