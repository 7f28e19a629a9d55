"""Squared-exponential, Matérn and additive (group-sum) covariance kernels.

Base kernels act on row-stacked inputs: ``k.matrix(A, B)`` returns the
``len(A) x len(B)`` cross-covariance. An :class:`AdditiveKernel` is a list of
:class:`GroupKernel` objects over disjoint coordinate sets of a
``D``-dimensional ambient space and evaluates as the sum of its groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import special

# Matérn distances below this fraction of the bandwidth are treated as zero.
_MATERN_ZERO_FRAC = 1e-12


def _as_rows(X, dim: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a vector or matrix, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim} columns, got {X.shape[1]}")
    return X


def sq_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of A and B."""
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass(frozen=True)
class SeKernel:
    """``scale * exp(-r^2 / (2 bandwidth^2))``."""

    scale: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def matrix(self, A, B) -> np.ndarray:
        A, B = _as_rows(A), _as_rows(B)
        return self.scale * np.exp(-0.5 * sq_dist(A, B) / self.bandwidth**2)

    def diag(self, A) -> np.ndarray:
        return np.full(_as_rows(A).shape[0], float(self.scale))

    def with_params(self, scale: float | None = None, bandwidth: float | None = None) -> "SeKernel":
        return SeKernel(
            scale=self.scale if scale is None else scale,
            bandwidth=self.bandwidth if bandwidth is None else bandwidth,
        )


def _matern_half_integer(nu: float, u: np.ndarray) -> np.ndarray | None:
    # u = sqrt(2 nu) r / h
    if nu == 0.5:
        return np.exp(-u)
    if nu == 1.5:
        return (1.0 + u) * np.exp(-u)
    if nu == 2.5:
        return (1.0 + u + u**2 / 3.0) * np.exp(-u)
    return None


def matern_correlation(nu: float, r: np.ndarray, bandwidth: float) -> np.ndarray:
    """Unit-scale Matérn correlation at distances ``r``.

    Half-integer orders 1/2, 3/2, 5/2 use their closed forms; any other
    order goes through the modified Bessel function of the second kind.
    """
    r = np.asarray(r, dtype=float)
    u = math.sqrt(2.0 * nu) * r / bandwidth
    closed = _matern_half_integer(nu, u)
    if closed is not None:
        return closed
    return matern_correlation_bessel(nu, r, bandwidth)


def matern_correlation_bessel(nu: float, r: np.ndarray, bandwidth: float) -> np.ndarray:
    """General-order Matérn correlation through ``scipy.special.kv``."""
    r = np.asarray(r, dtype=float)
    u = math.sqrt(2.0 * nu) * r / bandwidth
    out = np.ones_like(u)
    nz = r >= _MATERN_ZERO_FRAC * bandwidth
    if np.any(nz):
        un = u[nz]
        with np.errstate(over="ignore", invalid="ignore"):
            val = np.exp((1.0 - nu) * math.log(2.0) - special.gammaln(nu) + nu * np.log(un)) * special.kv(nu, un)
        # kv underflows to 0 for large arguments; the product is 0 there too
        out[nz] = np.where(np.isfinite(val), val, 0.0)
    return out


@dataclass(frozen=True)
class MaternKernel:
    smoothness: float = 2.5
    bandwidth: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.smoothness > 0:
            raise ValueError(f"smoothness must be positive, got {self.smoothness}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def matrix(self, A, B) -> np.ndarray:
        A, B = _as_rows(A), _as_rows(B)
        r = np.sqrt(np.maximum(sq_dist(A, B), 0.0))
        r = np.where(r < _MATERN_ZERO_FRAC * self.bandwidth, 0.0, r)
        return self.scale * matern_correlation(self.smoothness, r, self.bandwidth)

    def diag(self, A) -> np.ndarray:
        return np.full(_as_rows(A).shape[0], float(self.scale))

    def with_params(self, scale: float | None = None, bandwidth: float | None = None) -> "MaternKernel":
        return MaternKernel(
            smoothness=self.smoothness,
            bandwidth=self.bandwidth if bandwidth is None else bandwidth,
            scale=self.scale if scale is None else scale,
        )


BaseKernel = Union[SeKernel, MaternKernel]


@dataclass(frozen=True)
class GroupKernel:
    """A base kernel restricted to the coordinates ``indices``."""

    base: BaseKernel
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("group indices must be nonempty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"group indices must be strictly increasing, got {idx}")
        if idx[0] < 0:
            raise ValueError(f"negative coordinate index in {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def dim(self) -> int:
        return len(self.indices)

    def project(self, X) -> np.ndarray:
        return _as_rows(X)[:, list(self.indices)]


@dataclass(frozen=True)
class AdditiveKernel:
    groups: tuple[GroupKernel, ...]
    ambient_dim: int

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups:
            raise ValueError("additive kernel needs at least one group")
        if self.ambient_dim < 1:
            raise ValueError(f"ambient_dim must be positive, got {self.ambient_dim}")
        seen: set[int] = set()
        for g in groups:
            if seen.intersection(g.indices):
                raise ValueError("group index sets must be pairwise disjoint")
            seen.update(g.indices)
        if max(seen) >= self.ambient_dim:
            raise ValueError(f"group index {max(seen)} outside ambient dimension {self.ambient_dim}")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_groups(cls, base: BaseKernel, groups: Sequence[Sequence[int]], ambient_dim: int) -> "AdditiveKernel":
        """Same base kernel (shared scale and bandwidth) on every group."""
        return cls(tuple(GroupKernel(base, tuple(g)) for g in groups), ambient_dim)

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def matrix(self, A, B) -> np.ndarray:
        A = _as_rows(A, self.ambient_dim)
        B = _as_rows(B, self.ambient_dim)
        out = np.zeros((A.shape[0], B.shape[0]))
        for g in self.groups:
            out += g.base.matrix(g.project(A), g.project(B))
        return out

    def diag(self, A) -> np.ndarray:
        A = _as_rows(A, self.ambient_dim)
        return sum(g.base.diag(g.project(A)) for g in self.groups)

    def group_matrix(self, j: int, Z, X) -> np.ndarray:
        """Covariance of group ``j`` between group-space points Z and ambient points X."""
        g = self._group(j)
        Z = _as_rows(Z, g.dim)
        X = _as_rows(X, self.ambient_dim)
        return g.base.matrix(Z, g.project(X))

    def group_diag(self, j: int, Z) -> np.ndarray:
        g = self._group(j)
        return g.base.diag(_as_rows(Z, g.dim))

    def _group(self, j: int) -> GroupKernel:
        if not 0 <= j < len(self.groups):
            raise IndexError(f"group index {j} out of range for {len(self.groups)} groups")
        return self.groups[j]


Kernel = Union[SeKernel, MaternKernel, AdditiveKernel]


def _pair(x, xp) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(xp, dtype=float).ravel()
    if x.shape != xp.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {xp.shape[0]}")
    return x[None, :], xp[None, :]


def eval_se(k: SeKernel, x, xp) -> float:
    a, b = _pair(x, xp)
    return float(k.matrix(a, b)[0, 0])


def eval_matern(k: MaternKernel, x, xp) -> float:
    a, b = _pair(x, xp)
    return float(k.matrix(a, b)[0, 0])


def eval_additive(k: AdditiveKernel, x, xp) -> float:
    a, b = _pair(x, xp)
    return float(k.matrix(a, b)[0, 0])


def gram(k: Kernel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros((0, 0))
    K = k.matrix(X, X)
    return 0.5 * (K + K.T)


def cross_cov_group(k: AdditiveKernel, j: int, z, X) -> np.ndarray:
    """Entry ``p`` is the group-``j`` covariance between ``z`` and row ``p`` of X."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        k._group(j)
        return np.zeros(0)
    return k.group_matrix(j, np.asarray(z, dtype=float).ravel(), X)[0]


def kernel_from_dict(spec: dict) -> BaseKernel:
    """Build a base kernel from ``{"kind": "se"|"matern", "scale", "bandwidth", "smoothness"}``."""
    kind = spec.get("kind", "se")
    scale = float(spec.get("scale", 1.0))
    bandwidth = float(spec.get("bandwidth", 1.0))
    if kind == "se":
        return SeKernel(scale=scale, bandwidth=bandwidth)
    if kind == "matern":
        return MaternKernel(smoothness=float(spec.get("smoothness", 2.5)), bandwidth=bandwidth, scale=scale)
    raise ValueError(f"unknown kernel kind {kind!r}")


def kernel_to_dict(k: BaseKernel) -> dict:
    if isinstance(k, SeKernel):
        return {"kind": "se", "scale": k.scale, "bandwidth": k.bandwidth}
    return {"kind": "matern", "scale": k.scale, "bandwidth": k.bandwidth, "smoothness": k.smoothness}
