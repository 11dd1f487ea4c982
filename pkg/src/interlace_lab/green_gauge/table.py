"""Memoized Green function lookup with an optional on-disk cache.

Values are stored on the canonical offset domain (|x_j| sorted descending),
which is where the quadrature evaluates them, so a cached value is bit-for-bit
the value a fresh evaluation would produce.

Cache layout, one pair of files per (d, tol):

    green_d{d}_tol{tol}.bin   flat float64 records [x_1, ..., x_d, g(0, x)]
    green_d{d}_tol{tol}.json  metadata sidecar (d, tol, record count, layout)
"""
from __future__ import annotations

import json
import os
import tempfile
import threading
from functools import lru_cache
from pathlib import Path

import numpy as np

from .quadrature import canonical_offsets, green_values

CACHE_ENV = "INTERLACE_LAB_CACHE"
CACHE_FORMAT = 1


def _cache_stem(d: int, tol: float) -> str:
    return f"green_d{d}_tol{tol:.3e}"


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class GreenFunction:
    """g(0, x) for integer offsets, evaluated lazily and memoized."""

    def __init__(self, d: int = 3, tol: float = 1e-10, cache_dir: str | os.PathLike | None = None):
        self.d = d
        self.tol = tol
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self._table = np.full((1,) * d, np.nan)
        self._dirty = False
        self._lock = threading.Lock()
        if self.cache_dir is not None:
            self._load()

    def _grow(self, extent: int) -> None:
        old = self._table.shape[0]
        if extent < old:
            return
        size = max(extent + 1, 2 * old)
        new = np.full((size,) * self.d, np.nan)
        new[(slice(0, old),) * self.d] = self._table
        self._table = new

    def _fill(self, canon: np.ndarray) -> None:
        if len(canon) == 0:
            return
        self._grow(int(canon.max()))
        idx = tuple(canon.T)
        missing = np.isnan(self._table[idx])
        if not missing.any():
            return
        need = np.unique(canon[missing], axis=0)
        vals, _ = green_values(need, d=self.d, tol=self.tol)
        self._table[tuple(need.T)] = vals
        self._dirty = True
        if self.cache_dir is not None:
            self.save()

    def __call__(self, offsets: np.ndarray) -> np.ndarray:
        off = np.asarray(offsets, dtype=np.int64)
        shape = off.shape[:-1]
        flat = off.reshape(-1, self.d)
        canon = canonical_offsets(flat)
        with self._lock:
            self._fill(canon)
            table = self._table
        return table[tuple(canon.T)].reshape(shape)

    def value(self, x) -> float:
        return float(self(np.asarray(x, dtype=np.int64).reshape(1, self.d))[0])

    def kernel_block(self, radius: int) -> np.ndarray:
        """Dense array k[x + radius] = g(0, x) for x in [-radius, radius]^d."""
        ax = np.arange(-radius, radius + 1)
        grid = np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), axis=-1)
        return self(grid)

    # -- disk cache -----------------------------------------------------------------

    def _paths(self) -> tuple[Path, Path]:
        stem = _cache_stem(self.d, self.tol)
        return self.cache_dir / f"{stem}.bin", self.cache_dir / f"{stem}.json"

    def _load(self) -> None:
        bin_path, meta_path = self._paths()
        if not (bin_path.exists() and meta_path.exists()):
            return
        meta = json.loads(meta_path.read_text())
        if meta.get("d") != self.d or meta.get("format") != CACHE_FORMAT:
            raise ValueError(f"incompatible Green cache at {meta_path}")
        if float(meta.get("tol")) != float(self.tol):
            raise ValueError(f"Green cache tolerance mismatch at {meta_path}")
        rec = np.fromfile(bin_path, dtype="<f8").reshape(-1, self.d + 1)
        if len(rec) != meta.get("count"):
            raise ValueError(f"Green cache record count mismatch at {bin_path}")
        if len(rec) == 0:
            return
        coords = rec[:, : self.d].astype(np.int64)
        self._grow(int(coords.max()))
        self._table[tuple(coords.T)] = rec[:, self.d]

    def save(self) -> None:
        if self.cache_dir is None or not self._dirty:
            return
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        known = np.argwhere(~np.isnan(self._table))
        rec = np.concatenate([known.astype("<f8"), self._table[tuple(known.T)][:, None]], axis=1)
        bin_path, meta_path = self._paths()
        _atomic_write(bin_path, rec.astype("<f8").tobytes())
        meta = {
            "format": CACHE_FORMAT,
            "d": self.d,
            "tol": self.tol,
            "count": int(len(rec)),
            "layout": "float64 little-endian rows [x_1..x_d, value], x canonical (|x| sorted descending)",
        }
        _atomic_write(meta_path, json.dumps(meta, indent=2, sort_keys=True).encode())
        self._dirty = False


@lru_cache(maxsize=None)
def _shared(d: int, tol: float, cache_dir: str | None) -> GreenFunction:
    return GreenFunction(d=d, tol=tol, cache_dir=cache_dir)


def get_green(d: int = 3, tol: float = 1e-10) -> GreenFunction:
    """Process-wide memoized Green function; honours the cache directory env var."""
    return _shared(d, float(tol), os.environ.get(CACHE_ENV) or None)
