"""Joint ICA of the concatenated GM||WM matrix.

Spatial ICA: voxels are samples, subjects are mixtures. The data are
reduced to ``C`` components with a subjects-space PCA, then unmixed with
natural-gradient infomax under a logistic source prior. The result is a
subjects x C loading matrix and a C x voxels joint source matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .ingest import VoxelFeatureMatrix

__all__ = [
    "WhiteningTransform",
    "InfomaxResult",
    "JicaDecomposition",
    "SpatialZMap",
    "pca_whiten",
    "infomax_objective",
    "infomax_unmix",
    "decompose_joint",
    "split_sources",
    "zmap_threshold",
]


@dataclass
class WhiteningTransform:
    projection: np.ndarray  # C x subjects
    dewhitening: np.ndarray  # subjects x C
    eigenvalues: np.ndarray  # C, descending
    total_variance: float
    column_means: np.ndarray

    @property
    def explained_variance_ratio(self) -> float:
        return float(self.eigenvalues.sum() / self.total_variance)

    def dewhiten(self, whitened: np.ndarray) -> np.ndarray:
        return self.dewhitening @ whitened


@dataclass
class InfomaxResult:
    unmixing: np.ndarray
    iterations: int
    converged: bool
    learning_rate: float  # final step size; the damping factor for the Newton method
    objective_trace: list[float] = field(default_factory=list)


@dataclass
class JicaDecomposition:
    loadings: np.ndarray  # subjects x C
    sources: np.ndarray  # C x voxels
    gm_width: int
    wm_width: int
    seed: int
    iterations: int
    converged: bool
    subject_order: list[str] = field(default_factory=list)
    explained_variance_ratio: float = float("nan")

    @property
    def n_components(self) -> int:
        return self.sources.shape[0]


@dataclass
class SpatialZMap:
    component: int
    z: np.ndarray
    threshold: float

    @property
    def mask(self) -> np.ndarray:
        return np.abs(self.z) > self.threshold

    @property
    def positive(self) -> np.ndarray:
        return self.z > self.threshold

    @property
    def negative(self) -> np.ndarray:
        return self.z < -self.threshold


def _double_center(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    col_means = values.mean(axis=0)
    centered = values - col_means
    centered -= centered.mean(axis=1, keepdims=True)
    return centered, col_means


def pca_whiten(matrix: VoxelFeatureMatrix | np.ndarray, n_components: int) -> tuple[np.ndarray, WhiteningTransform]:
    """Reduce subjects to ``n_components`` whitened rows over voxels.

    Voxel columns are centered across subjects and each subject row is
    centered across voxels, so every whitened row has zero mean. The
    eigendecomposition is of the subjects x subjects Gram matrix.
    Returns ``(whitened, transform)`` with ``whitened`` of shape
    ``(n_components, n_voxels)`` and identity sample covariance.
    """
    values = matrix.values if isinstance(matrix, VoxelFeatureMatrix) else np.asarray(matrix, dtype=float)
    n, v = values.shape
    if not 1 <= n_components <= min(n, v):
        raise ValidationError(
            f"n_components={n_components} outside [1, min(subjects, voxels)={min(n, v)}]",
            code="bad_components",
        )
    centered, col_means = _double_center(values)
    gram = centered @ centered.T / (v - 1)
    evals, evecs = np.linalg.eigh(gram)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    tol = max(evals[0], 0.0) * max(n, v) * np.finfo(float).eps * 10
    rank = int(np.count_nonzero(evals > tol))
    if n_components > rank:
        raise ValidationError(
            f"n_components={n_components} exceeds numerical rank {rank} of the centered data",
            code="rank",
        )
    lam = evals[:n_components]
    U = evecs[:, :n_components]
    projection = U.T / np.sqrt(lam)[:, None]
    whitened = projection @ centered
    # voxel-space sign convention, independent of subject order
    peak = np.abs(whitened).argmax(axis=1)
    flip = np.sign(whitened[np.arange(n_components), peak])
    flip[flip == 0] = 1.0
    whitened *= flip[:, None]
    projection *= flip[:, None]
    dewhitening = (U * np.sqrt(lam)) * flip
    transform = WhiteningTransform(
        projection=projection,
        dewhitening=dewhitening,
        eigenvalues=lam.copy(),
        total_variance=float(np.clip(evals, 0, None).sum()),
        column_means=col_means,
    )
    return whitened, transform


def _log_logistic_density(u: np.ndarray) -> np.ndarray:
    # log(sigma(u) * (1 - sigma(u))) without overflow
    a = np.abs(u)
    return -a - 2.0 * np.log1p(np.exp(-a))


def infomax_objective(W: np.ndarray, whitened: np.ndarray) -> float:
    """Average log-likelihood per voxel under a logistic source prior."""
    sign, logdet = np.linalg.slogdet(W)
    if sign == 0:
        return -np.inf
    u = W @ whitened
    return float(logdet + _log_logistic_density(u).sum(axis=0).mean())


def _random_rotation(rng: np.random.Generator, c: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((c, c)))
    return q * np.sign(np.diag(r))


def _relative_gradient(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    psi = 1.0 - 2.0 / (1.0 + np.exp(-u))  # score of the logistic density
    grad = np.eye(u.shape[0]) + psi @ u.T / u.shape[1]
    return grad, psi


def _negative_relative_hessian(u: np.ndarray) -> np.ndarray:
    """Negated Hessian of the objective in ``E`` for ``W' = (I + E) W`` at E = 0.

    Indexed by the row-major flattening of ``E``. The data term gives one
    ``C x C`` block per output row; ``log|det|`` couples ``E_ij`` with ``E_ji``.
    """
    c, v = u.shape
    s = 1.0 / (1.0 + np.exp(-u))
    curv = 2.0 * s * (1.0 - s)
    blocks = np.stack([(u * w) @ u.T for w in curv]) / v
    h = np.zeros((c, c, c, c))
    rows = np.arange(c)
    h[rows, :, rows, :] = blocks
    h = h.reshape(c * c, c * c)
    flat = np.arange(c * c).reshape(c, c)
    h[flat.ravel(), flat.T.ravel()] += 1.0
    return h


def infomax_unmix(
    whitened: np.ndarray,
    seed: int = 0,
    learning_rate: float = 1e-2,
    tol: float = 1e-6,
    max_iter: int = 512,
    anneal: float = 0.9,
    method: str = "newton",
    anneal_angle: float = 60.0,
    max_retries: int = 200,
) -> InfomaxResult:
    """Maximize the logistic-prior infomax objective over the unmixing matrix.

    Both methods take relative steps ``W <- W + D W`` built from the natural
    gradient ``G = I + (1 - 2 sigmoid(u)) u^T / V``:

    ``"gradient"``
        ``D = lr * G``. ``lr`` starts at ``learning_rate`` and is multiplied
        by ``anneal`` whenever consecutive steps turn by more than
        ``anneal_angle`` degrees.
    ``"newton"``
        ``D`` solves ``(H + mu I) D = G`` with ``H`` the exact negated
        Hessian in the relative coordinates (Levenberg-Marquardt damping).
        ``mu`` shrinks after each accepted step and grows on rejection.
        Much faster when many components are close to Gaussian, where the
        objective is nearly flat and plain gradient steps crawl.

    A step that would lower the objective is rejected and retried with a
    smaller step, so the accepted objective sequence never decreases. Stops
    when the largest weight change drops below ``tol`` or after ``max_iter``
    iterations.
    """
    Z = np.asarray(whitened, dtype=float)
    if Z.ndim != 2:
        raise ValidationError("whitened data must be 2-D")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if method not in ("newton", "gradient"):
        raise ValidationError(f"unknown infomax method {method!r}")
    c = Z.shape[0]
    W = _random_rotation(np.random.default_rng(seed), c)
    obj = infomax_objective(W, Z)
    trace = [obj]
    lr = float(learning_rate)
    damping = 1.0
    cos_limit = np.cos(np.deg2rad(anneal_angle))
    prev_step = None
    converged = False
    it = 0
    while it < max_iter and not converged:
        it += 1
        u = W @ Z
        grad, _ = _relative_gradient(u)
        if method == "newton":
            neg_hess = _negative_relative_hessian(u)
            eye = np.eye(c * c)
        retries = 0
        while True:
            if method == "newton":
                try:
                    factor = scipy.linalg.cho_factor(neg_hess + damping * eye)
                except np.linalg.LinAlgError:
                    damping *= 10.0
                    retries += 1
                    if retries > max_retries:
                        raise NumericalError("infomax Hessian could not be regularized", code="diverged")
                    continue
                step = scipy.linalg.cho_solve(factor, grad.ravel()).reshape(c, c) @ W
            else:
                step = lr * grad @ W
            if float(np.abs(step).max()) < tol:
                converged = True
                break
            cand = W + step
            cand_obj = infomax_objective(cand, Z) if np.all(np.isfinite(cand)) else -np.inf
            if np.isfinite(cand_obj) and cand_obj >= obj:
                break
            retries += 1
            if retries > max_retries:
                raise NumericalError(
                    f"infomax diverged: no ascent step after {retries} retries", code="diverged"
                )
            if method == "newton":
                damping *= 10.0
            else:
                lr *= anneal
        if converged:
            break
        W, obj = cand, cand_obj
        trace.append(obj)
        if method == "newton":
            damping = max(damping * 0.3, 1e-12)
        elif prev_step is not None:
            cos = float((step * prev_step).sum() / (np.linalg.norm(step) * np.linalg.norm(prev_step)))
            if cos < cos_limit:
                lr *= anneal
        prev_step = step
        converged = float(np.abs(step).max()) < tol
    return InfomaxResult(W, it, converged, lr if method == "gradient" else damping, trace)


def decompose_joint(
    matrix: VoxelFeatureMatrix,
    n_components: int = 30,
    seed: int = 0,
    **infomax_kwargs,
) -> JicaDecomposition:
    """PCA whitening followed by infomax; returns loadings and joint sources.

    Each source row is z-scored (the scale moves into the loading column)
    and flipped so that its largest-magnitude voxel is positive. Components
    are ordered by descending loading-column variance.
    """
    whitened, transform = pca_whiten(matrix, n_components)
    fit = infomax_unmix(whitened, seed=seed, **infomax_kwargs)
    W = fit.unmixing
    sources = W @ whitened
    loadings = transform.dewhitening @ np.linalg.inv(W)

    mean = sources.mean(axis=1, keepdims=True)
    sources = sources - mean
    sd = sources.std(axis=1, ddof=1)
    if np.any(sd <= 0):
        raise NumericalError("a recovered source has zero variance", code="degenerate_source")
    sources /= sd[:, None]
    loadings = loadings * sd

    peak = np.abs(sources).argmax(axis=1)
    sign = np.sign(sources[np.arange(sources.shape[0]), peak])
    sign[sign == 0] = 1.0
    sources *= sign[:, None]
    loadings *= sign

    order = np.argsort(-loadings.var(axis=0, ddof=1), kind="stable")
    return JicaDecomposition(
        loadings=loadings[:, order],
        sources=sources[order],
        gm_width=matrix.gm_width,
        wm_width=matrix.wm_width,
        seed=seed,
        iterations=fit.iterations,
        converged=fit.converged,
        subject_order=list(matrix.subject_order),
        explained_variance_ratio=transform.explained_variance_ratio,
    )


def split_sources(decomp: JicaDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """Column-range split of the joint sources into GM and WM parts."""
    if decomp.gm_width < 1 or decomp.wm_width < 1:
        raise ValidationError("both tissues required", code="missing_tissue")
    if decomp.sources.shape[1] != decomp.gm_width + decomp.wm_width:
        raise ValidationError("source width does not match gm_width + wm_width")
    return decomp.sources[:, : decomp.gm_width], decomp.sources[:, decomp.gm_width :]


def zmap_threshold(source_row, z_threshold: float = 3.5, component: int = 0) -> SpatialZMap:
    row = np.asarray(source_row, dtype=float).ravel()
    sd = row.std(ddof=1) if row.size > 1 else 0.0
    if not sd > 0:
        raise ValidationError("source row has zero variance", code="zero_variance")
    return SpatialZMap(component, (row - row.mean()) / sd, float(z_threshold))
