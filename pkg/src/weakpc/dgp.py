"""Simulation designs: DGP1, DGP2 and the non-orthogonal DGP1 variant."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Tuple, Union

import numpy as np

from .model import GroundTruth, Panel, PopulationLimits

# independent RNG streams per (seed, replication)
_STREAM_F, _STREAM_L, _STREAM_E, _STREAM_MIX = range(4)


class DgpKind(str, Enum):
    DGP1 = "dgp1"
    DGP2 = "dgp2"
    DGP1_NONORTH = "dgp1_nonorth"


@dataclass(frozen=True)
class SigmaRule:
    """Idiosyncratic scale sigma_i: match the sd of the common component, or a constant."""

    kind: str = "match_common_sd"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("match_common_sd", "constant"):
            raise ValueError(f"unknown sigma rule {self.kind!r}")
        if self.kind == "constant" and not (np.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"constant sigma must be finite and >= 0, got {self.value}")

    @classmethod
    def constant(cls, s: float) -> "SigmaRule":
        return cls("constant", float(s))

    @classmethod
    def parse(cls, obj) -> "SigmaRule":
        if isinstance(obj, SigmaRule):
            return obj
        if obj is None or obj == "match_common_sd":
            return cls()
        if isinstance(obj, (int, float)):
            return cls.constant(obj)
        if isinstance(obj, dict) and set(obj) == {"constant"}:
            return cls.constant(obj["constant"])
        raise ValueError(f"cannot parse sigma rule {obj!r}")

    def to_json(self):
        return "match_common_sd" if self.kind == "match_common_sd" else {"constant": self.value}


@dataclass(frozen=True)
class DgpSpec:
    kind: DgpKind = DgpKind.DGP1
    r: int = 3
    alphas: Tuple[float, ...] = (1.0, 1.0, 1.0)
    d2: Tuple[float, ...] = (6.0, 5.0, 4.0)
    n: int = 100
    t: int = 500
    sigma_rule: SigmaRule = field(default_factory=SigmaRule)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DgpKind(self.kind))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "d2", tuple(float(d) for d in self.d2))
        object.__setattr__(self, "sigma_rule", SigmaRule.parse(self.sigma_rule))
        a, d = np.array(self.alphas), np.array(self.d2)
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if a.shape != (self.r,) or d.shape != (self.r,):
            raise ValueError(f"alphas and d2 need length r={self.r}")
        if np.any(a <= 0) or np.any(a > 1) or np.any(np.diff(a) > 0):
            raise ValueError(f"alphas must be descending in (0, 1], got {self.alphas}")
        if np.any(d <= 0) or np.any(np.diff(d) >= 0):
            raise ValueError(f"d2 must be strictly positive and strictly descending, got {self.d2}")
        if self.n < 2 or self.t < 2:
            raise ValueError(f"need n, t >= 2, got n={self.n}, t={self.t}")

    def with_dims(self, n: int, t: int) -> "DgpSpec":
        return DgpSpec(self.kind, self.r, self.alphas, self.d2, n, t, self.sigma_rule, self.seed)

    def to_json(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        out["alphas"] = list(self.alphas)
        out["d2"] = list(self.d2)
        out["sigma_rule"] = self.sigma_rule.to_json()
        return out


@dataclass(frozen=True)
class SimulatedPanel:
    panel: Panel
    truth: GroundTruth
    rbar2: float


Key = Union[int, Tuple[int, ...]]


def _rng(seed: int, replication: Key, stream: int) -> np.random.Generator:
    key = (replication,) if isinstance(replication, (int, np.integer)) else tuple(replication)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key) + (stream,))
    return np.random.Generator(np.random.PCG64(ss))


def orthonormal_basis(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Orthonormal rows x cols matrix from the QR of Gaussian draws, R with positive diagonal."""
    Qm, R = np.linalg.qr(rng.standard_normal((rows, cols)))
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Qm * s


def _mixing(spec: DgpSpec, replication: Key) -> Tuple[np.ndarray, np.ndarray]:
    rng = _rng(spec.seed, replication, _STREAM_MIX)
    mats = []
    for _ in range(2):
        M = np.eye(spec.r)
        idx = np.tril_indices(spec.r, -1)
        M[idx] = rng.standard_normal(len(idx[0]))
        mats.append(M)
    return mats[0], mats[1]


def population_limits(spec: DgpSpec, replication: Key = 0) -> PopulationLimits:
    """Sigma_F, Sigma_L, D_r^2, Upsilon and Q = D_r Upsilon' Sigma_L^-1/2 for the design.

    Upsilon holds eigenvectors of Sigma_L^1/2 Sigma_F Sigma_L^1/2, which makes
    Q'Q = Sigma_F and Q Sigma_L Q' = D_r^2. Column signs make diag(Q) >= 0.
    For the non-orthogonal variant the limits depend on the drawn mixing
    matrices, hence on (seed, replication).
    """
    D2 = np.diag(spec.d2)
    I = np.eye(spec.r)
    if spec.kind is DgpKind.DGP1:
        sigma_F, sigma_L = D2, I
    elif spec.kind is DgpKind.DGP2:
        sigma_F, sigma_L = I, D2
    else:
        M1, M2 = _mixing(spec, replication)
        D = np.sqrt(D2)
        sigma_F, sigma_L = D @ M1.T @ M1 @ D, M2.T @ M2
    return limits_from_moments(sigma_F, sigma_L)


def _sym_sqrt(S: np.ndarray, inverse: bool = False) -> np.ndarray:
    w, v = np.linalg.eigh(S)
    p = -0.5 if inverse else 0.5
    return (v * w**p) @ v.T


def limits_from_moments(sigma_F: np.ndarray, sigma_L: np.ndarray) -> PopulationLimits:
    sigma_F = 0.5 * (sigma_F + sigma_F.T)
    sigma_L = 0.5 * (sigma_L + sigma_L.T)
    L_half = _sym_sqrt(sigma_L)
    w, ups = np.linalg.eigh(L_half @ sigma_F @ L_half)
    order = np.argsort(w)[::-1]
    w, ups = w[order], ups[:, order]
    Q = np.sqrt(w)[:, None] * ups.T @ _sym_sqrt(sigma_L, inverse=True)
    s = np.where(np.diag(Q) < 0, -1.0, 1.0)
    ups = ups * s
    Q = Q * s[:, None]
    return PopulationLimits(sigma_F=sigma_F, sigma_L=sigma_L, D_r2=w, Q=Q, upsilon=ups)


def generate(spec: DgpSpec, replication: Key = 0) -> SimulatedPanel:
    """Draw one panel X = F0 L0' + diag(sigma_i) e0 for the given design.

    Deterministic in (spec, replication).
    """
    n, t, r = spec.n, spec.t, spec.r
    if r > min(n, t):
        raise ValueError(f"r={r} exceeds min(n, t)={min(n, t)}")
    D = np.sqrt(np.array(spec.d2))
    B = float(n) ** (np.array(spec.alphas) / 2.0)
    rng_f = _rng(spec.seed, replication, _STREAM_F)
    rng_l = _rng(spec.seed, replication, _STREAM_L)

    if spec.kind is DgpKind.DGP2:
        F0 = rng_f.standard_normal((t, r))
        L0 = rng_l.standard_normal((n, r)) * (D * B / np.sqrt(n))[None, :]
    else:
        U = orthonormal_basis(rng_f, t, r)
        V = orthonormal_basis(rng_l, n, r)
        if spec.kind is DgpKind.DGP1_NONORTH:
            M1, M2 = _mixing(spec, replication)
            U, V = U @ M1, V @ M2
        F0 = np.sqrt(t) * U * D[None, :]
        L0 = V * B[None, :]

    C0 = F0 @ L0.T
    e0 = _rng(spec.seed, replication, _STREAM_E).standard_normal((t, n))
    rule = spec.sigma_rule
    if rule.kind == "match_common_sd":
        sigma = C0.std(axis=0, ddof=1)
    else:
        sigma = np.full(n, rule.value)
    errors = e0 * sigma[None, :]
    X = C0 + errors

    truth = GroundTruth(
        factors0=F0,
        loadings0=L0,
        common0=C0,
        errors=errors,
        alphas=np.array(spec.alphas),
        limits=population_limits(spec, replication),
    )
    panel = Panel(X)
    return SimulatedPanel(panel=panel, truth=truth, rbar2=rbar2(truth, panel))


def rbar2(truth: GroundTruth, panel: Panel) -> float:
    """Mean time-series variance of C0 columns over mean variance of X columns."""
    C0, X = truth.common0, panel.data
    if C0.shape != X.shape:
        raise ValueError(f"common {C0.shape} and panel {X.shape} differ")
    vx = X.var(axis=0, ddof=1)
    if np.any(vx <= 0):
        raise ValueError(f"series {int(np.flatnonzero(vx <= 0)[0])} has zero variance")
    return float(C0.var(axis=0, ddof=1).mean() / vx.mean())
