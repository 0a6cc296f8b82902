"""Core domain types and elementary panel transformations."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


class RankDeficientError(ValueError):
    """Raised when an operation needs D^2_{NT,r} inverted but the fit is rank deficient."""


class SingularRotationError(np.linalg.LinAlgError):
    """Raised when a rotation matrix (or one of its intermediates) is singular."""

    def __init__(self, kind, detail: str = ""):
        self.kind = kind
        msg = f"rotation {getattr(kind, 'value', kind)}: singular matrix"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Panel:
    """A T x N data matrix, rows are periods and columns are series."""

    data: np.ndarray
    standardized: bool = False
    series_means: Optional[np.ndarray] = None
    series_sds: Optional[np.ndarray] = None

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise ValueError(f"panel data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 2 or data.shape[1] < 2:
            raise ValueError(f"panel needs T >= 2 and N >= 2, got {data.shape}")
        object.__setattr__(self, "data", data)
        for name in ("series_means", "series_sds"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(v))

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FactorFit:
    """Principal-component fit: factors (T x r), loadings (N x r), eig = diag(D^2_{NT,r}).

    ``data`` is the panel matrix the fit came from; residuals are computed on demand.
    """

    factors: np.ndarray
    loadings: np.ndarray
    eig: np.ndarray
    data: np.ndarray
    rank_deficient: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("factors", "loadings", "eig", "data"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def r(self) -> int:
        return self.factors.shape[1]

    @property
    def T(self) -> int:
        return self.factors.shape[0]

    @property
    def N(self) -> int:
        return self.loadings.shape[0]

    @property
    def common(self) -> np.ndarray:
        if "common" not in self._cache:
            self._cache["common"] = _frozen(self.factors @ self.loadings.T)
        return self._cache["common"]

    @property
    def residuals(self) -> np.ndarray:
        if "residuals" not in self._cache:
            self._cache["residuals"] = _frozen(self.data - self.common)
        return self._cache["residuals"]


@dataclass(frozen=True)
class PopulationLimits:
    sigma_F: np.ndarray
    sigma_L: np.ndarray
    D_r2: np.ndarray
    Q: np.ndarray
    upsilon: np.ndarray


@dataclass(frozen=True)
class GroundTruth:
    factors0: np.ndarray
    loadings0: np.ndarray
    common0: np.ndarray
    errors: np.ndarray
    alphas: np.ndarray
    limits: Optional[PopulationLimits] = None

    def __post_init__(self):
        for name in ("factors0", "loadings0", "common0", "errors", "alphas"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        a = self.alphas
        if a.shape != (self.factors0.shape[1],):
            raise ValueError("alphas must have one entry per factor")
        if np.any(a <= 0) or np.any(a > 1):
            raise ValueError(f"alphas must lie in (0, 1], got {a.tolist()}")
        if np.any(np.diff(a) > 0):
            raise ValueError(f"alphas must be descending, got {a.tolist()}")

    @property
    def r(self) -> int:
        return self.factors0.shape[1]

    @property
    def homogeneous(self) -> bool:
        return bool(np.all(self.alphas == self.alphas[0]))

    def b_n(self, N: Optional[int] = None) -> np.ndarray:
        """Diagonal of B_N = diag(N^{alpha_j / 2})."""
        N = self.loadings0.shape[0] if N is None else N
        return float(N) ** (self.alphas / 2.0)


class RotationKind(str, Enum):
    H0 = "H0"
    H1 = "H1"
    H2 = "H2"
    H3 = "H3"
    H4 = "H4"
    HBAR = "Hbar"


@dataclass(frozen=True)
class RotationMatrix:
    kind: RotationKind
    value: np.ndarray
    b_n: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "value", _frozen(self.value))
        if self.b_n is not None:
            object.__setattr__(self, "b_n", _frozen(self.b_n))

    @property
    def composite(self) -> np.ndarray:
        """The rotation acting on F0: B_N Hbar B_N^{-1} for Hbar, else the matrix itself."""
        if self.kind is RotationKind.HBAR:
            return (self.b_n[:, None] * self.value) / self.b_n[None, :]
        return self.value


def standardize_panel(p: Panel) -> Panel:
    """Demean each series and scale to unit sample sd (ddof=1)."""
    X = p.data
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    scale = np.maximum(np.abs(means), 1.0)
    bad = np.flatnonzero(sds <= 1e-14 * scale)
    if bad.size:
        raise ValueError(f"column {int(bad[0])} is constant; cannot standardize")
    return Panel((X - means) / sds, standardized=True, series_means=means, series_sds=sds)


def common_component(F: np.ndarray, L: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    L = np.asarray(L, dtype=float)
    if F.ndim != 2 or L.ndim != 2 or F.shape[1] != L.shape[1]:
        raise ValueError(f"dimension mismatch: F {F.shape}, L {L.shape}")
    return F @ L.T
