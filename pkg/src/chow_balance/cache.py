"""Content-addressed store for quadrature grids and Gram forms.

Entries live under ``<out>/cache`` as ``<key>.npz`` next to a ``<key>.sha256``
holding the digest of the archive bytes. A hit is re-hashed before use; an
entry whose digest or contents do not check out is recomputed and replaced.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import warnings
from pathlib import Path

import numpy as np

from .embedded_variety import QuadratureGrid, build_grid

logger = logging.getLogger(__name__)


def content_key(kind: str, section) -> str:
    blob = json.dumps({"kind": kind, "section": section}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class ArrayCache:
    def __init__(self, root):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            probe = self.root / ".write-test"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise OSError(f"cache directory {self.root} is not writable: {exc}") from exc
        self.hits = 0
        self.misses = 0

    def _paths(self, key):
        return self.root / f"{key}.npz", self.root / f"{key}.sha256"

    def load(self, key) -> dict | None:
        data_path, sum_path = self._paths(key)
        if not data_path.exists():
            return None
        try:
            raw = data_path.read_bytes()
            if hashlib.sha256(raw).hexdigest() != sum_path.read_text().strip():
                raise ValueError("digest mismatch")
            with np.load(io.BytesIO(raw), allow_pickle=False) as npz:
                return {k: npz[k] for k in npz.files}
        except (OSError, ValueError, EOFError) as exc:
            warnings.warn(f"cache entry {key[:12]} is corrupted ({exc}); recomputing", stacklevel=2)
            return None

    def store(self, key, arrays: dict):
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        raw = buf.getvalue()
        data_path, sum_path = self._paths(key)
        data_path.write_bytes(raw)
        sum_path.write_text(hashlib.sha256(raw).hexdigest() + "\n")

    def get_or_compute(self, kind, section, compute):
        key = content_key(kind, section)
        hit = self.load(key)
        if hit is not None:
            self.hits += 1
            return hit, True
        self.misses += 1
        arrays = compute()
        self.store(key, arrays)
        return arrays, False


def cached_grid(cache: ArrayCache, n, radial, angular, remap) -> QuadratureGrid:
    section = {"n": int(n), "radial": int(radial), "angular": int(angular), "remap": float(remap)}

    def compute():
        gr = build_grid(n, radial, angular, remap)
        return {"nodes": gr.nodes, "weights": gr.weights, "reference_weights": gr.reference_weights}

    arrays, hit = cache.get_or_compute("grid", section, compute)
    if hit:
        logger.info("grid %dx%d (n=%d, remap=%g) loaded from cache: grid construction skipped",
                    radial, angular, n, remap)
    for arr in arrays.values():
        arr.flags.writeable = False
    return QuadratureGrid(int(n), int(radial), int(angular), float(remap),
                          arrays["nodes"], arrays["weights"], arrays["reference_weights"])


def cached_gram(cache: ArrayCache, variety_section, grid_section, g, deterministic, compute):
    """Gram form at ``g``; ``compute`` is called on a miss and returns ``(M, mass)``."""
    g = np.ascontiguousarray(g, dtype=complex)
    section = {"variety": variety_section, "grid": grid_section, "deterministic": bool(deterministic),
               "g": hashlib.sha256(g.tobytes()).hexdigest(), "shape": list(g.shape)}

    def wrapped():
        M, mass = compute()
        return {"M": M, "mass": np.array(mass)}

    arrays, hit = cache.get_or_compute("gram", section, wrapped)
    if hit:
        logger.info("Gram form loaded from cache")
    return arrays["M"], float(arrays["mass"])
