"""Principal-component estimator, scaled eigenvalues, rotation matrices, sign alignment."""
from __future__ import annotations

import numpy as np

from .model import (
    FactorFit,
    GroundTruth,
    Panel,
    RankDeficientError,
    RotationKind,
    RotationMatrix,
    SingularRotationError,
)

RANK_TOL = 1e-12
# below this eigenvalue ratio the Gram route loses accuracy in the partner matrix
SVD_FALLBACK_TOL = 1e-8


def _column_signs(v: np.ndarray) -> np.ndarray:
    # deterministic column sign: largest-magnitude entry positive
    pivot = np.argmax(np.abs(v), axis=0)
    sgn = np.sign(v[pivot, np.arange(v.shape[1])])
    sgn[sgn == 0] = 1.0
    return sgn


def _top_eigh(G: np.ndarray, r: int):
    w, v = np.linalg.eigh(G)
    idx = np.argsort(w)[::-1][:r]
    w = np.clip(w[idx], 0.0, None)
    v = v[:, idx]
    return w, v * _column_signs(v)


def pc_estimate(p: Panel | np.ndarray, r: int) -> FactorFit:
    """PC estimator (F, L) = (sqrt(T) U_r, sqrt(N) V_r D_r) of X / sqrt(NT).

    The eigenproblem is solved on the smaller Gram matrix (XX' when T <= N,
    X'X otherwise); the partner matrix follows from L' = F'X/T or F = XL D^-2/N.
    """
    X = p.data if isinstance(p, Panel) else np.asarray(p, dtype=float)
    T, N = X.shape
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise ValueError(f"rank must be a positive integer, got {r!r}")
    if r > min(N, T):
        raise ValueError(f"rank {r} exceeds min(N, T) = {min(N, T)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("panel contains non-finite entries")

    NT = float(N) * float(T)
    if T <= N:
        eig, U = _top_eigh(X @ X.T / NT, r)
        F = np.sqrt(T) * U
        L = X.T @ F / T
    else:
        eig, V = _top_eigh(X.T @ X / NT, r)
        L = np.sqrt(N) * V * np.sqrt(eig)
        with np.errstate(divide="ignore", invalid="ignore"):
            F = X @ L / (N * eig)
    ratio = eig[-1] / eig[0] if eig[0] > 0 else 0.0
    if ratio < SVD_FALLBACK_TOL:
        U, s, Vt = np.linalg.svd(X / np.sqrt(NT), full_matrices=False)
        eig = s[:r] ** 2
        sgn = _column_signs(U[:, :r] if T <= N else Vt[:r].T)
        F = np.sqrt(T) * U[:, :r] * sgn
        L = np.sqrt(N) * Vt[:r].T * s[:r] * sgn
    deficient = bool(eig[0] <= 0 or eig[-1] / eig[0] < RANK_TOL)
    return FactorFit(factors=F, loadings=L, eig=eig, data=X, rank_deficient=deficient)


def scaled_eigenvalues(fit: FactorFit, alphas) -> np.ndarray:
    """N B_N^{-2} D^2_{NT,r}, i.e. eig_j * N^(1 - alpha_j)."""
    a = np.asarray(alphas, dtype=float)
    if a.shape != fit.eig.shape:
        raise ValueError(f"need {fit.r} alphas, got {a.shape}")
    if np.any(a <= 0) or np.any(a > 1):
        raise ValueError(f"alphas must lie in (0, 1], got {a.tolist()}")
    return fit.eig * float(fit.N) ** (1.0 - a)


def _inv(M: np.ndarray, kind: RotationKind, what: str) -> np.ndarray:
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e14:
        raise SingularRotationError(kind, what)
    return np.linalg.inv(M)


def _check_dims(fit: FactorFit, truth: GroundTruth):
    if truth.factors0.shape[0] != fit.T or truth.loadings0.shape[0] != fit.N:
        raise ValueError(
            f"fit is {fit.T}x{fit.N} but truth is "
            f"{truth.factors0.shape[0]}x{truth.loadings0.shape[0]}"
        )


def rotation(fit: FactorFit, truth: GroundTruth, kind: RotationKind | str) -> RotationMatrix:
    """Rotation matrix of the requested kind, from its defining formula.

    H0 = (L0'L0/N)(F0'F/T) D^-2          H1 = (L0'L0)(L'L0)^-1
    H2 = (F0'F0)^-1 (F0'F)               H3 = (F'F0/T)^-1
    H4 = (L0'L/N) D^-2
    Hbar = (B^-1 L0'L0 F0'F B^-1/T + B^-1 L0'e'F B^-1/T)(N B^-2 D^2)^-1,
    which acts on F0 through the composite B Hbar B^-1.
    """
    kind = RotationKind(kind)
    _check_dims(fit, truth)
    F, L = fit.factors, fit.loadings
    F0, L0 = truth.factors0, truth.loadings0
    T, N = fit.T, fit.N
    needs_d = kind in (RotationKind.H0, RotationKind.H4, RotationKind.HBAR)
    if needs_d and (fit.rank_deficient or np.any(fit.eig <= 0)):
        raise SingularRotationError(kind, "D^2_{NT,r} is rank deficient")
    d_inv = 1.0 / fit.eig if needs_d else None

    if kind is RotationKind.H0:
        H = (L0.T @ L0 / N) @ (F0.T @ F / T) * d_inv[None, :]
    elif kind is RotationKind.H1:
        H = (L0.T @ L0) @ _inv(L.T @ L0, kind, "L'L0")
    elif kind is RotationKind.H2:
        H = _inv(F0.T @ F0, kind, "F0'F0") @ (F0.T @ F)
    elif kind is RotationKind.H3:
        H = _inv(F.T @ F0 / T, kind, "F'F0/T")
    elif kind is RotationKind.H4:
        H = (L0.T @ L / N) * d_inv[None, :]
    else:
        b = truth.b_n(N)
        lead = (L0.T @ L0) @ (F0.T @ F) / T
        cross = (L0.T @ truth.errors.T) @ F / T
        inner = (lead + cross) / b[:, None] / b[None, :]
        scaled = N * fit.eig / b**2
        Hbar = inner / scaled[None, :]
        rot = RotationMatrix(kind, Hbar, b_n=b)
        if not np.all(np.isfinite(Hbar)) or np.linalg.cond(rot.composite) > 1e14:
            raise SingularRotationError(kind, "composite B Hbar B^-1")
        return rot
    if not np.all(np.isfinite(H)) or np.linalg.cond(H) > 1e14:
        raise SingularRotationError(kind)
    return RotationMatrix(kind, H)


def sign_align(fit: FactorFit, truth: GroundTruth) -> FactorFit:
    """Flip column j of (F, L) jointly when diag_j(F'F0/T) < 0."""
    _check_dims(fit, truth)
    d = np.einsum("tj,tj->j", fit.factors, truth.factors0) / fit.T
    s = np.where(d < 0, -1.0, 1.0)
    if np.all(s > 0):
        return fit
    return FactorFit(
        factors=fit.factors * s,
        loadings=fit.loadings * s,
        eig=fit.eig,
        data=fit.data,
        rank_deficient=fit.rank_deficient,
    )


def require_full_rank(fit: FactorFit):
    if fit.rank_deficient or np.any(fit.eig <= 0):
        raise RankDeficientError(
            f"fit is rank deficient (eig_r/eig_1 = {fit.eig[-1] / max(fit.eig[0], 1e-300):.3g})"
        )
