"""Residual-based plug-in variances and standardized estimation errors.

Scale conventions (no alpha or N^alpha appears anywhere; rates are absorbed
by D^2_{NT,r} and the sample sums):

    factor_t   D^-2 (N^-2 sum_i L_i L_i' e_it^2) D^-2 = (L'L)^-1 (sum_i L_i L_i' e_it^2) (L'L)^-1
    loading_i  T^-2 sum_s F_s F_s' e_is^2
    common_it  L_i' V_factor(t) L_i + F_t' V_loading(i) F_t

so that square roots of diagonals are standard errors of the estimates
themselves. Errors are assumed uncorrelated across series and over time.
Indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .model import FactorFit, GroundTruth, Panel, RotationKind, RotationMatrix
from .pce import require_full_rank, rotation as make_rotation


class Target(str, Enum):
    FACTOR = "factor_t"
    LOADING = "loading_i"
    COMMON = "common_it"


@dataclass(frozen=True)
class VarianceEstimate:
    target: Target
    index: Union[int, Tuple[int, int]]
    value: Union[np.ndarray, float]
    rate_label: str
    parts: Optional[Tuple[float, float]] = None

    @property
    def se(self):
        if self.target is Target.COMMON:
            return float(np.sqrt(self.value))
        return np.sqrt(np.diag(self.value))


FACTOR_LABEL = "D^-2 (N^-2 sum_i L_i L_i' e_it^2) D^-2  [absorbs 1/N^alpha]"
LOADING_LABEL = "T^-2 sum_s F_s F_s' e_is^2  [1/T]"
COMMON_LABEL = "L_i' V_F(t) L_i + F_t' V_L(i) F_t  [1/N^alpha + 1/T]"


def residuals(p: Union[Panel, np.ndarray], fit: FactorFit) -> np.ndarray:
    X = p.data if isinstance(p, Panel) else np.asarray(p, dtype=float)
    if X.shape != (fit.T, fit.N):
        raise ValueError(f"panel {X.shape} does not match fit {(fit.T, fit.N)}")
    return X - fit.factors @ fit.loadings.T


def _check_index(idx: int, size: int, name: str) -> int:
    idx = int(idx)
    if not 0 <= idx < size:
        raise IndexError(f"{name} index {idx} out of range [0, {size})")
    return idx


def _factor_var(fit: FactorFit, e2_t: np.ndarray) -> np.ndarray:
    L = fit.loadings
    mid = (L * e2_t[:, None]).T @ L / fit.N**2
    d_inv = 1.0 / fit.eig
    return d_inv[:, None] * mid * d_inv[None, :]


def _loading_var(fit: FactorFit, e2_i: np.ndarray) -> np.ndarray:
    F = fit.factors
    return (F * e2_i[:, None]).T @ F / fit.T**2


def var_factor(fit: FactorFit, t: int) -> VarianceEstimate:
    require_full_rank(fit)
    t = _check_index(t, fit.T, "time")
    V = _factor_var(fit, fit.residuals[t] ** 2)
    return VarianceEstimate(Target.FACTOR, t, V, FACTOR_LABEL)


def var_loading(fit: FactorFit, i: int) -> VarianceEstimate:
    i = _check_index(i, fit.N, "series")
    V = _loading_var(fit, fit.residuals[:, i] ** 2)
    return VarianceEstimate(Target.LOADING, i, V, LOADING_LABEL)


def var_common(fit: FactorFit, i: int, t: int) -> VarianceEstimate:
    require_full_rank(fit)
    i = _check_index(i, fit.N, "series")
    t = _check_index(t, fit.T, "time")
    Li, Ft = fit.loadings[i], fit.factors[t]
    a = float(Li @ _factor_var(fit, fit.residuals[t] ** 2) @ Li)
    b = float(Ft @ _loading_var(fit, fit.residuals[:, i] ** 2) @ Ft)
    a, b = max(a, 0.0), max(b, 0.0)
    return VarianceEstimate(Target.COMMON, (i, t), a + b, COMMON_LABEL, parts=(a, b))


def factor_variances(fit: FactorFit) -> np.ndarray:
    """All T factor covariance plug-ins, shape (T, r, r)."""
    require_full_rank(fit)
    L = fit.loadings
    E2 = fit.residuals**2
    mid = np.einsum("ti,ij,ik->tjk", E2, L, L) / fit.N**2
    d_inv = 1.0 / fit.eig
    return mid * d_inv[None, :, None] * d_inv[None, None, :]


def loading_variances(fit: FactorFit) -> np.ndarray:
    """All N loading covariance plug-ins, shape (N, r, r)."""
    F = fit.factors
    E2 = fit.residuals**2
    return np.einsum("ti,tj,tk->ijk", E2, F, F) / fit.T**2


def common_variances(fit: FactorFit) -> np.ndarray:
    """Plug-in variance of every common-component entry, shape (T, N)."""
    require_full_rank(fit)
    F, L = fit.factors, fit.loadings
    E2 = fit.residuals**2
    A = L / fit.eig[None, :] / fit.N
    G = (A @ L.T) ** 2  # G[i, j] = (L_i' D^-2 L_j / N)^2
    K = (F @ F.T) ** 2
    return E2 @ G.T + K @ E2 / fit.T**2


def standard_errors(fit: FactorFit):
    """(factor se T x r, loading se N x r, common se T x N)."""
    fv = factor_variances(fit)
    lv = loading_variances(fit)
    f_se = np.sqrt(np.clip(np.einsum("tkk->tk", fv), 0, None))
    l_se = np.sqrt(np.clip(np.einsum("ikk->ik", lv), 0, None))
    c_se = np.sqrt(np.clip(common_variances(fit), 0, None))
    return f_se, l_se, c_se


@dataclass(frozen=True)
class ZScores:
    factor: np.ndarray
    loading: np.ndarray
    common: Union[np.ndarray, float]


# standard errors below this fraction of the estimate's RMS count as zero
SE_FLOOR = 1e-10


def _safe_ratio(num, den, scale: float = 0.0):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > SE_FLOOR * scale)
    return out


def _rms(a) -> float:
    return float(np.sqrt(np.mean(np.square(a))))


def default_factor_rotation(truth: GroundTruth) -> RotationKind:
    return RotationKind.H4 if truth.homogeneous else RotationKind.HBAR


def standardized_errors(
    fit: FactorFit,
    truth: GroundTruth,
    rotation: Optional[Union[RotationMatrix, RotationKind, str]] = None,
    loading_rotation: Optional[Union[RotationMatrix, RotationKind, str]] = None,
    at: Optional[Tuple[int, int]] = None,
) -> ZScores:
    """z-scores of F_t - H'F0_t, L_i - H3^-1 L0_i and C_it - C0_it.

    The factor rotation defaults to H4 (homogeneous) or the composite
    B_N Hbar B_N^-1 (heterogeneous strengths); the loading target always uses
    H3. With heterogeneous strengths the loading error is premultiplied by
    H'^-1 and its covariance transformed accordingly. ``at=(t, i)`` restricts
    the output to one period and one series. Standard errors that are zero up
to roundoff (below SE_FLOOR times the RMS of the estimate) give z = 0.
    """
    require_full_rank(fit)
    if rotation is None:
        rotation = default_factor_rotation(truth)
    if not isinstance(rotation, RotationMatrix):
        rotation = make_rotation(fit, truth, rotation)
    if loading_rotation is None:
        loading_rotation = RotationKind.H3
    if not isinstance(loading_rotation, RotationMatrix):
        loading_rotation = make_rotation(fit, truth, loading_rotation)
    H = rotation.composite
    H3_inv = np.linalg.inv(loading_rotation.composite)

    F, L = fit.factors, fit.loadings
    F0, L0 = truth.factors0, truth.loadings0
    sf, sl, sc = _rms(F), _rms(L), _rms(fit.common)
    premultiply = not truth.homogeneous
    Ht_inv = np.linalg.inv(H.T) if premultiply else None

    if at is not None:
        t = _check_index(at[0], fit.T, "time")
        i = _check_index(at[1], fit.N, "series")
        f_err = F[t] - H.T @ F0[t]
        f_var = var_factor(fit, t).value
        z_f = _safe_ratio(f_err, np.sqrt(np.clip(np.diag(f_var), 0, None)), sf)
        l_err = L[i] - H3_inv @ L0[i]
        l_var = var_loading(fit, i).value
        if premultiply:
            l_err = Ht_inv @ l_err
            l_var = Ht_inv @ l_var @ Ht_inv.T
        z_l = _safe_ratio(l_err, np.sqrt(np.clip(np.diag(l_var), 0, None)), sl)
        c_err = F[t] @ L[i] - truth.common0[t, i]
        z_c = float(_safe_ratio(c_err, np.sqrt(var_common(fit, i, t).value), sc))
        return ZScores(z_f, z_l, z_c)

    f_err = F - F0 @ H
    f_se = np.sqrt(np.clip(np.einsum("tkk->tk", factor_variances(fit)), 0, None))
    l_err = L - L0 @ H3_inv.T
    l_var = loading_variances(fit)
    if premultiply:
        l_err = l_err @ Ht_inv.T
        l_var = np.einsum("ab,ibc,dc->iad", Ht_inv, l_var, Ht_inv)
    l_se = np.sqrt(np.clip(np.einsum("ikk->ik", l_var), 0, None))
    c_err = fit.common - truth.common0
    c_se = np.sqrt(np.clip(common_variances(fit), 0, None))
    return ZScores(_safe_ratio(f_err, f_se, sf), _safe_ratio(l_err, l_se, sl), _safe_ratio(c_err, c_se, sc))
