"""Contour-integral solver for holomorphic eigenvalue problems ``L(lam) x = 0``.

Probed resolvent values ``E(lam) = W^* L(lam)^{-1} V`` are integrated
around a circle with the trapezoid rule. A rank-revealing SVD of the zeroth
moment gives the number of enclosed eigenvalues, which are then the
eigenvalues of a small matrix built from the first moment. A block-Hankel
variant with higher moments handles too few probes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .discretize import SingularMatrixError


@dataclass(frozen=True)
class ContourSpec:
    center: complex = 0.0
    radius: float = 1.0
    n_nodes: int = 32

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.n_nodes < 8:
            raise ValueError("use at least 8 contour nodes")

    def nodes(self) -> np.ndarray:
        theta = 2.0 * np.pi * np.arange(self.n_nodes) / self.n_nodes
        return self.center + self.radius * np.exp(1j * theta)

    def weights(self) -> np.ndarray:
        """Trapezoid weights of ``(1 / 2 pi i) int g(lam) dlam``."""
        return (self.nodes() - self.center) / self.n_nodes

    def inside(self, lam, margin: float = 0.0) -> np.ndarray:
        return np.abs(np.asarray(lam) - self.center) <= self.radius + margin


@dataclass
class ProbeSet:
    """Seeded right probes ``V`` (``size x ell``) and left probes ``W`` (``size x p``).

    Both sets are orthonormalized; ``weights`` turn ``W`` into quadrature
    functionals ``<w, u> = sum(w * weights * u)``.
    """

    size: int
    ell: int
    p: int
    seed: int = 0
    weights: Optional[np.ndarray] = None
    V: np.ndarray = field(init=False)
    W: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.ell < 1 or self.p < 1 or max(self.ell, self.p) > self.size:
            raise ValueError("probe counts must lie in [1, size]")
        rng = np.random.default_rng(self.seed)
        self.V = np.linalg.qr(rng.uniform(-1.0, 1.0, (self.size, self.ell)))[0]
        self.W = np.linalg.qr(rng.uniform(-1.0, 1.0, (self.size, self.p)))[0]
        for M in (self.V, self.W):
            if np.linalg.matrix_rank(M.T @ M) < M.shape[1]:
                raise ValueError("probes are linearly dependent")

    @classmethod
    def default(cls, size: int, kappa_guess: int = 1, seed: int = 0, weights=None) -> "ProbeSet":
        ell = kappa_guess + 4
        return cls(size, ell, 2 * ell, seed, weights)

    def functionals(self) -> np.ndarray:
        w = np.ones(self.size) if self.weights is None else np.asarray(self.weights)
        return (self.W * w[:, None]).conj().T


@dataclass
class ContourResult:
    eigenvalues: np.ndarray
    singular_values: np.ndarray
    rank: int
    moments: List[np.ndarray]
    eigenvectors: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    rank_trace: dict = field(default_factory=dict)
    node_diagnostics: List[dict] = field(default_factory=list)
    method: str = "moments"

    @property
    def E0(self) -> np.ndarray:
        return self.moments[0]

    @property
    def E1(self) -> np.ndarray:
        return self.moments[1]

    def to_json(self) -> dict:
        def c(z):
            return [[float(np.real(x)), float(np.imag(x))] for x in np.ravel(z)]

        return {"eigenvalues": c(self.eigenvalues),
                "singular_values": [float(s) for s in self.singular_values],
                "rank": int(self.rank), "method": self.method,
                "dropped": c(self.dropped),
                "residuals": None if self.residuals is None else [float(r) for r in self.residuals],
                "rank_trace": _jsonable(self.rank_trace),
                "nodes": [_jsonable(d) for d in self.node_diagnostics]}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


class NodeFailure(RuntimeError):
    def __init__(self, index: int, lam: complex, cause: Exception):
        super().__init__(f"contour node {index} (lam={lam:.6g}) failed: {cause}")
        self.index, self.lam, self.cause = index, lam, cause


def contour_moments(E_eval: Callable[[complex], np.ndarray], spec: ContourSpec,
                    nu_max: int = 1) -> List[np.ndarray]:
    """Trapezoid approximations of ``(1/2 pi i) int lam^nu E(lam) dlam``, ``nu = 0..nu_max``."""
    lams, wts = spec.nodes(), spec.weights()
    moments = None
    for j, (lam, w) in enumerate(zip(lams, wts)):
        try:
            E = np.asarray(E_eval(lam), dtype=complex)
        except Exception as exc:
            raise NodeFailure(j, lam, exc) from exc
        if moments is None:
            moments = [np.zeros_like(E) for _ in range(nu_max + 1)]
        for nu in range(nu_max + 1):
            moments[nu] += w * lam**nu * E
    return moments


def _rank(sv: np.ndarray, rank_tol: float, scale: float):
    ref = max(float(sv[0]) if sv.size else 0.0, scale)
    if ref == 0.0:
        return 0, {"threshold": 0.0, "ambiguous": False}
    thr = rank_tol * ref
    kappa = int(np.sum(sv > thr))
    trace = {"threshold": thr, "reference": ref, "count_above": kappa, "ambiguous": False}
    # within two decades of the threshold the count is unreliable: use the largest gap there
    band = np.flatnonzero((sv > thr / 100.0) & (sv < thr * 100.0))
    if band.size:
        ratios = sv[:-1] / np.maximum(sv[1:], np.finfo(float).tiny)
        cand = [k for k in range(max(band[0] - 1, 0), min(band[-1] + 1, len(ratios)))]
        if cand:
            k = max(cand, key=lambda i: ratios[i])
            trace.update(ambiguous=True, gap_index=int(k), gap_ratio=float(ratios[k]))
            kappa = k + 1
    return kappa, trace


def extract_eigs(E0: np.ndarray, E1: np.ndarray, rank_tol: float = 1e-8,
                 spec: Optional[ContourSpec] = None, scale: float = 0.0) -> ContourResult:
    """Eigenvalues from the first two moments via a truncated SVD.

    ``scale`` is an absolute reference for the rank decision (for example
    the size of ``E`` on the contour); it keeps roundoff-level moments from
    being mistaken for eigenvalues.
    """
    V, sv, Wh = np.linalg.svd(E0)
    kappa, trace = _rank(sv, rank_tol, scale)
    if kappa == 0:
        return ContourResult(np.zeros(0, dtype=complex), sv, 0, [E0, E1], rank_trace=trace)
    V0, W0 = V[:, :kappa], Wh[:kappa].conj().T
    EL = V0.conj().T @ E1 @ W0 / sv[:kappa]
    lam, S = np.linalg.eig(EL)
    res = ContourResult(lam, sv, kappa, [E0, E1], rank_trace=trace)
    res._basis = (W0, sv[:kappa], S)
    if spec is not None:
        _drop_outside(res, spec, rank_tol)
    return res


def _drop_outside(res: ContourResult, spec: ContourSpec, rank_tol: float):
    keep = spec.inside(res.eigenvalues, 10.0 * rank_tol * spec.radius)
    if not np.all(keep):
        warnings.warn(f"dropping {np.sum(~keep)} spurious eigenvalue(s) outside the contour")
        res.dropped = res.eigenvalues[~keep]
        res.eigenvalues = res.eigenvalues[keep]
        if hasattr(res, "_basis"):
            W0, s0, S = res._basis
            res._basis = (W0, s0, S[:, keep])


def extract_eigs_hankel(moments: Sequence[np.ndarray], K: int, rank_tol: float = 1e-8,
                        spec: Optional[ContourSpec] = None, scale: float = 0.0) -> ContourResult:
    """Block-Hankel extraction from ``2K`` moments (``K = 1`` is :func:`extract_eigs`)."""
    if len(moments) < 2 * K:
        raise ValueError(f"need {2 * K} moments for K={K}")
    H0 = np.block([[moments[i + j] for j in range(K)] for i in range(K)])
    H1 = np.block([[moments[i + j + 1] for j in range(K)] for i in range(K)])
    V, sv, Wh = np.linalg.svd(H0)
    kappa, trace = _rank(sv, rank_tol, scale)
    if kappa == 0:
        return ContourResult(np.zeros(0, dtype=complex), sv, 0, list(moments), rank_trace=trace,
                             method=f"hankel{K}")
    V0, W0 = V[:, :kappa], Wh[:kappa].conj().T
    lam, S = np.linalg.eig(V0.conj().T @ H1 @ W0 / sv[:kappa])
    res = ContourResult(lam, sv, kappa, list(moments), rank_trace=trace, method=f"hankel{K}")
    if spec is not None:
        _drop_outside(res, spec, rank_tol)
    return res


class MatrixPencil:
    """Dense polynomial pencil ``L(lam) = sum_k lam^k C_k``."""

    def __init__(self, coeffs: Sequence[np.ndarray]):
        self.coeffs = [np.atleast_2d(np.asarray(c, dtype=complex)) for c in coeffs]
        self.size = self.coeffs[0].shape[0]
        self.weights = None

    def matrix(self, lam: complex) -> np.ndarray:
        return sum(lam**k * C for k, C in enumerate(self.coeffs))

    def solve(self, lam: complex, rhs: np.ndarray) -> np.ndarray:
        M = self.matrix(lam)
        if np.linalg.cond(M) > 1e14:
            raise SingularMatrixError(f"pencil singular at lam={lam}")
        return np.linalg.solve(M, rhs)

    def apply(self, lam: complex, x: np.ndarray) -> np.ndarray:
        return self.matrix(lam) @ x


def solve_nlevp(pencil, spec: ContourSpec, probes: Optional[ProbeSet] = None,
                rank_tol: float = 1e-8, eigenvectors: bool = False, nu_max: int = 1,
                hankel_K: int = 2) -> ContourResult:
    """Eigenvalues of ``pencil`` inside ``spec``.

    ``pencil`` provides ``size``, ``solve(lam, rhs)``, optionally
    ``apply(lam, x)`` (for residuals) and ``weights`` (quadrature weights for
    the functionals). A singular node is moved radially by ``1e-6 * radius``
    and retried once. If the rank fills all probes, higher moments are used
    in a block-Hankel extraction.
    """
    if probes is None:
        probes = ProbeSet.default(pencil.size, seed=0, weights=getattr(pencil, "weights", None))
    Wf = probes.functionals()
    V = probes.V.astype(complex)
    nu_need = max(nu_max, 2 * hankel_K - 1)
    lams, wts = spec.nodes(), spec.weights()
    moments = [np.zeros((probes.p, probes.ell), dtype=complex) for _ in range(nu_need + 1)]
    X0 = np.zeros((pencil.size, probes.ell), dtype=complex) if eigenvectors else None
    diags, scale = [], 0.0
    for j, (lam, w) in enumerate(zip(lams, wts)):
        node = {"index": j, "lam": complex(lam), "perturbed": False}
        try:
            U = pencil.solve(lam, V)
        except SingularMatrixError:
            lam = spec.center + (lam - spec.center) * (1.0 + 1e-6)
            w = w * (1.0 + 1e-6)
            node.update(perturbed=True, lam=complex(lam))
            try:
                U = pencil.solve(lam, V)
            except Exception as exc:
                raise NodeFailure(j, lam, exc) from exc
        except Exception as exc:
            raise NodeFailure(j, lam, exc) from exc
        E = Wf @ U
        scale = max(scale, float(np.linalg.norm(E, 2)) * spec.radius)
        for nu in range(nu_need + 1):
            moments[nu] += w * lam**nu * E
        if eigenvectors:
            X0 += w * U
        diags.append(node)
    res = extract_eigs(moments[0], moments[1], rank_tol, spec, scale)
    if res.rank >= min(probes.p, probes.ell):
        warnings.warn("rank equals the probe count; switching to block-Hankel moments")
        res = extract_eigs_hankel(moments, hankel_K, rank_tol, spec, scale)
    elif hankel_K > 1:
        # eigenvalues sharing an eigenvector cancel in E0 but not in the Hankel matrix
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            hk = extract_eigs_hankel(moments, hankel_K, rank_tol, spec, scale)
        if hk.rank > res.rank:
            warnings.warn(f"E0 has rank {res.rank} but the Hankel matrix has rank {hk.rank}; "
                          "using block-Hankel moments")
            res = hk
    res.moments = moments
    res.node_diagnostics = diags
    if eigenvectors and res.rank and res.method == "moments":
        W0, s0, S = res._basis
        X = X0 @ W0 @ (S / s0[:, None])
        X = X / np.linalg.norm(X, axis=0)
        res.eigenvectors = X
        if hasattr(pencil, "apply"):
            res.residuals = np.array([np.linalg.norm(pencil.apply(lam, X[:, k]))
                                      for k, lam in enumerate(res.eigenvalues)])
    return res
