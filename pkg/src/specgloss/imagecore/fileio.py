"""Radiance RGBE (.hdr), PFM and 8-bit PNG readers/writers.

All readers return float64 arrays shaped (H, W, C), first row at the top.
"""
import re
from pathlib import Path

import numpy as np
from PIL import Image

_HDR_RES = re.compile(rb"^-Y\s+(\d+)\s+\+X\s+(\d+)\s*$")


class ImageFormatError(ValueError):
    pass


# --- RGBE -----------------------------------------------------------------


def float_to_rgbe(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError("RGBE needs 3 channels")
    if not np.all(np.isfinite(rgb)) or np.any(rgb < 0):
        raise ValueError("RGBE can only store finite non-negative radiance")
    v = rgb.max(axis=-1)
    mant, expo = np.frexp(v)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    nz = v >= 1e-32
    scale = np.zeros_like(v)
    scale[nz] = mant[nz] * 256.0 / v[nz]
    out[..., :3] = np.where(nz[..., None], np.floor(rgb * scale[..., None]), 0).astype(np.uint8)
    out[..., 3] = np.where(nz, expo + 128, 0).astype(np.uint8)
    return out


def rgbe_to_float(rgbe):
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    e = rgbe[..., 3].astype(np.int32)
    f = np.ldexp(1.0, e - (128 + 8))
    out = (rgbe[..., :3].astype(np.float64) + 0.5) * f[..., None]
    return np.where((e == 0)[..., None], 0.0, out)


def _rle_channel(vals):
    """Encode one channel of a scanline with Radiance's run/dump scheme."""
    out = bytearray()
    n = len(vals)
    i = 0
    while i < n:
        # find next run of >= 4 equal bytes
        j = i
        run_start, run_len = n, 0
        while j < n:
            k = j + 1
            while k < n and k - j < 127 and vals[k] == vals[j]:
                k += 1
            if k - j >= 4:
                run_start, run_len = j, k - j
                break
            j = k
        # dump literals up to the run
        while i < run_start:
            cnt = min(128, run_start - i)
            out.append(cnt)
            out.extend(vals[i : i + cnt])
            i += cnt
        if run_len:
            out.append(128 + run_len)
            out.append(vals[run_start])
            i = run_start + run_len
    return out


def write_hdr(path, img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    if img.shape[-1] == 1:
        img = np.repeat(img, 3, axis=-1)
    h, w = img.shape[:2]
    rgbe = float_to_rgbe(img)
    buf = bytearray(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
    buf += f"-Y {h} +X {w}\n".encode()
    use_rle = 8 <= w < 32768
    for y in range(h):
        row = rgbe[y]
        if not use_rle:
            buf += row.tobytes()
            continue
        buf += bytes((2, 2, w >> 8, w & 0xFF))
        for c in range(4):
            buf += _rle_channel(row[:, c].tobytes())
    Path(path).write_bytes(bytes(buf))


def _read_rle_scanline(data, pos, w):
    row = np.empty((w, 4), dtype=np.uint8)
    for c in range(4):
        i = 0
        while i < w:
            if pos >= len(data):
                raise ImageFormatError("truncated RLE scanline")
            cnt = data[pos]
            pos += 1
            if cnt > 128:
                cnt -= 128
                if i + cnt > w:
                    raise ImageFormatError("RLE run overflows scanline")
                row[i : i + cnt, c] = data[pos]
                pos += 1
            else:
                if cnt == 0 or i + cnt > w:
                    raise ImageFormatError("bad RLE dump count")
                row[i : i + cnt, c] = np.frombuffer(data, np.uint8, cnt, pos)
                pos += cnt
            i += cnt
    return row, pos


def read_hdr(path):
    data = Path(path).read_bytes()
    if not (data.startswith(b"#?RADIANCE") or data.startswith(b"#?RGBE")):
        raise ImageFormatError(f"{path}: not a Radiance HDR file")
    pos = 0
    fmt_ok = False
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise ImageFormatError(f"{path}: truncated header")
        line = data[pos:end].strip()
        pos = end + 1
        if line.startswith(b"FORMAT="):
            if line != b"FORMAT=32-bit_rle_rgbe":
                raise ImageFormatError(f"{path}: unsupported {line.decode(errors='replace')}")
            fmt_ok = True
        if line == b"":
            break
    end = data.find(b"\n", pos)
    m = _HDR_RES.match(data[pos:end] if end >= 0 else b"")
    if not fmt_ok or m is None:
        raise ImageFormatError(f"{path}: only '-Y H +X W' RGBE images are supported")
    h, w = int(m.group(1)), int(m.group(2))
    pos = end + 1
    rgbe = np.empty((h, w, 4), dtype=np.uint8)
    for y in range(h):
        head = data[pos : pos + 4]
        if 8 <= w < 32768 and len(head) == 4 and head[0] == 2 and head[1] == 2 and head[2] < 128:
            if (head[2] << 8 | head[3]) != w:
                raise ImageFormatError(f"{path}: scanline width mismatch")
            rgbe[y], pos = _read_rle_scanline(data, pos + 4, w)
        else:
            n = 4 * w
            if pos + n > len(data):
                raise ImageFormatError(f"{path}: truncated pixel data")
            rgbe[y] = np.frombuffer(data, np.uint8, n, pos).reshape(w, 4)
            pos += n
    return rgbe_to_float(rgbe)


# --- PFM ------------------------------------------------------------------


def write_pfm(path, img):
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = img[..., None]
    c = img.shape[-1]
    if c not in (1, 3):
        raise ValueError("PFM stores 1 or 3 channels")
    h, w = img.shape[:2]
    header = f"{'PF' if c == 3 else 'Pf'}\n{w} {h}\n-1.0\n".encode()
    body = np.ascontiguousarray(img[::-1]).astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def read_pfm(path):
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PFM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before raster
    kind, w, h, scale = tokens[0], int(tokens[1]), int(tokens[2]), float(tokens[3])
    if kind == b"PF":
        c = 3
    elif kind == b"Pf":
        c = 1
    else:
        raise ImageFormatError(f"{path}: not a PFM file")
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h * c
    if pos + 4 * n > len(data):
        raise ImageFormatError(f"{path}: truncated PFM data")
    arr = np.frombuffer(data, dtype, n, pos).reshape(h, w, c)[::-1]
    return arr.astype(np.float64)


# --- PNG ------------------------------------------------------------------


def write_png(path, img):
    """Write values in [0, 1] (already display-encoded) as 8-bit PNG."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 1:
        img = img[..., 0]
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q).save(path, format="PNG")


def read_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    arr = arr.astype(np.float64) / 255.0
    return arr[..., None] if arr.ndim == 2 else arr


def read_image(path):
    """Dispatch on extension: .hdr, .pfm, .png."""
    suffix = Path(path).suffix.lower()
    if suffix == ".hdr":
        return read_hdr(path)
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix == ".png":
        return read_png(path)
    raise ImageFormatError(f"unsupported image extension {suffix!r}")
