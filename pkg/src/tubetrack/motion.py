"""Quadratic motion model over encoded tubes and its least-squares fitter.

Motion parameters are a ``(4, 3)`` matrix. Rows are (w, h, cx, cy) and
columns hold the (quadratic, linear, constant) coefficients, so the encoded
width at time ``tau`` is ``P[0] @ (tau**2, tau, 1)``. Encoded boxes and
arrays of them are in (cx, cy, w, h) order everywhere else; ``ENCODED_ROWS``
maps between the two layouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .anchors import AnchorTube, EncodedBox, decode, decode_array
from .errors import ConfigError, UnderdeterminedError
from .geometry import BBox, BoxSeq

# params row feeding each encoded coordinate (cx, cy, w, h)
ENCODED_ROWS = (2, 3, 0, 1)
# encoded coordinate feeding each params row (w, h, cx, cy)
PARAM_COLUMNS = (2, 3, 0, 1)

CONDITION_LIMIT = 1e12


def as_motion_params(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape == (12,):
        p = p.reshape(4, 3)
    if p.shape[-2:] != (4, 3):
        raise ValueError(f"motion parameters must be 4x3, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("motion parameters must be finite")
    return p


@dataclass(frozen=True)
class TimeBasis:
    """Maps frame offset ``k`` within a window to model time ``origin + scale * k``.

    The default maps the window onto [0, 1].
    """

    n_frames: int = 16
    origin: float = 0.0
    scale: float | None = None

    def __post_init__(self):
        if self.n_frames < 2:
            raise ConfigError(f"n_frames must be >= 2, got {self.n_frames}")
        if self.scale is None:
            object.__setattr__(self, "scale", 1.0 / (self.n_frames - 1))
        if not (math.isfinite(self.scale) and self.scale > 0 and math.isfinite(self.origin)):
            raise ConfigError(f"time basis needs a finite origin and a positive scale, got origin={self.origin}, scale={self.scale}")

    @classmethod
    def frames(cls, n_frames: int = 16) -> TimeBasis:
        """Raw frame offsets as time."""
        return cls(n_frames, 0.0, 1.0)

    def tau(self, k) -> np.ndarray | float:
        return self.origin + self.scale * np.asarray(k, dtype=float)

    @property
    def taus(self) -> np.ndarray:
        return self.tau(np.arange(self.n_frames))


def _design(taus: np.ndarray, n_coeffs: int = 3) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    full = np.stack([taus * taus, taus, np.ones_like(taus)], axis=-1)
    return full[..., 3 - n_coeffs:]


def eval_encoded(p, tau: float) -> EncodedBox:
    p = as_motion_params(p)
    if not math.isfinite(tau):
        raise ValueError("tau must be finite")
    v = p @ np.array([tau * tau, tau, 1.0])
    return EncodedBox(float(v[2]), float(v[3]), float(v[0]), float(v[1]))


def eval_encoded_array(p: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """Encoded boxes for params ``(..., 4, 3)`` at times ``(N,)``: ``(..., N, 4)``."""
    basis = _design(taus)
    rows = np.einsum("...rc,nc->...nr", np.asarray(p, dtype=float), basis)
    return rows[..., list(ENCODED_ROWS)]


def eval_absolute(p, anchor: BBox, tau: float) -> BBox:
    return decode(anchor, eval_encoded(p, tau))


def decode_tube(p, anchor: AnchorTube | BBox, basis: TimeBasis | None = None) -> BoxSeq:
    """Boxes of one tube over a window; visibility is left at 1."""
    basis = basis or TimeBasis()
    box = anchor.box if isinstance(anchor, AnchorTube) else anchor
    enc = eval_encoded_array(as_motion_params(p), basis.taus)
    boxes = decode_array(np.asarray(box, dtype=float), enc)
    return BoxSeq(boxes, np.ones(basis.n_frames))


def decode_tubes(p: np.ndarray, anchor_boxes: np.ndarray, basis: TimeBasis) -> np.ndarray:
    """Batched decode: params ``(k, 4, 3)`` and anchors ``(k, 4)`` give ``(k, N_F, 4)``."""
    enc = eval_encoded_array(p, basis.taus)
    return decode_array(np.asarray(anchor_boxes, dtype=float)[:, None, :], enc)


@dataclass(frozen=True)
class FitResult:
    params: np.ndarray
    residual: float
    n_used: int


@dataclass(frozen=True)
class BatchFit:
    params: np.ndarray  # (B, 4, 3)
    residual: np.ndarray  # (B,)
    n_used: np.ndarray  # (B,)
    ok: np.ndarray  # (B,) False where the fit was underdetermined


def _to_param_rows(coef: np.ndarray, n_coeffs: int) -> np.ndarray:
    """``(..., n_coeffs, 4)`` coefficients in encoded order -> ``(..., 4, 3)`` params."""
    out = np.zeros(coef.shape[:-2] + (4, 3))
    out[..., :, 3 - n_coeffs:] = np.swapaxes(coef[..., list(PARAM_COLUMNS)], -1, -2)
    return out


def fit_batch(
    taus: np.ndarray,
    values: np.ndarray,
    mask: np.ndarray,
    n_coeffs: int = 3,
) -> BatchFit:
    """Least-squares motion fit for many tubes sharing one time grid.

    ``values`` is ``(B, N, 4)`` encoded samples in (cx, cy, w, h) order and
    ``mask`` ``(B, N)`` marks the usable ones. Rows with fewer than
    ``n_coeffs`` distinct usable times come back with ``ok`` False and zero
    params.
    """
    if n_coeffs not in (1, 2, 3):
        raise ValueError(f"n_coeffs must be 1, 2 or 3, got {n_coeffs}")
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool) & np.all(np.isfinite(values), axis=-1)
    b = len(values)
    a = _design(taus, n_coeffs)  # (N, c)
    y = np.where(mask[..., None], values, 0.0)
    w = mask.astype(float)
    normal = np.einsum("bn,ni,nj->bij", w, a, a)
    rhs = np.einsum("bn,ni,bnk->bik", w, a, y)
    n_used = mask.sum(axis=1)

    distinct = np.array([len(np.unique(taus[m])) for m in mask]) if b else np.zeros(0, int)
    ok = distinct >= n_coeffs
    coef = np.zeros((b, n_coeffs, 4))
    if ok.any():
        cond = np.full(b, np.inf)
        cond[ok] = np.linalg.cond(normal[ok])
        well = ok & (cond <= CONDITION_LIMIT)
        if well.any():
            coef[well] = np.linalg.solve(normal[well], rhs[well])
        for i in np.flatnonzero(ok & ~well):
            m = mask[i]
            coef[i] = np.linalg.lstsq(a[m], values[i, m], rcond=None)[0]

    pred = np.einsum("ni,bik->bnk", a, coef)
    err = np.where(mask[..., None], np.abs(pred - y), 0.0)
    residual = err.max(axis=(1, 2)) if values.shape[1] else np.zeros(b)
    residual = np.where(ok, residual, np.inf)
    return BatchFit(_to_param_rows(coef, n_coeffs), residual, n_used, ok)


def fit(
    taus: Sequence[float],
    encoded: Sequence[EncodedBox | None] | np.ndarray,
    mask: Sequence[bool] | None = None,
    n_coeffs: int = 3,
) -> FitResult:
    """Fit motion parameters to encoded samples.

    ``encoded`` entries that are ``None`` (or rows with ``mask`` False) are
    skipped. Raises :class:`UnderdeterminedError` when fewer than
    ``n_coeffs`` distinct times remain.
    """
    taus = np.asarray(taus, dtype=float)
    if isinstance(encoded, np.ndarray):
        values = encoded.astype(float).reshape(-1, 4)
        present = np.ones(len(values), dtype=bool)
    else:
        present = np.array([e is not None for e in encoded], dtype=bool)
        values = np.array(
            [tuple(e) if e is not None else (np.nan,) * 4 for e in encoded], dtype=float
        ).reshape(-1, 4)
    if len(values) != len(taus):
        raise ValueError("need one time value per encoded sample")
    if mask is not None:
        present &= np.asarray(mask, dtype=bool)
    if not np.all(np.isfinite(taus)):
        raise ValueError("times must be finite")
    used = present & np.all(np.isfinite(values), axis=1)
    if used.sum() < n_coeffs:
        raise UnderdeterminedError(
            f"need at least {n_coeffs} unmasked samples, got {int(used.sum())}"
        )
    res = fit_batch(taus, values[None], used[None], n_coeffs)
    if not res.ok[0]:
        raise UnderdeterminedError(f"fewer than {n_coeffs} distinct sample times")
    return FitResult(res.params[0], float(res.residual[0]), int(res.n_used[0]))
