"""Diffusion maps with Nystrom out-of-sample extension and geometric
harmonics lifting.

Kernel construction, for points x_i with pairwise squared distances
D2_ij and scale parameter eps:

    W_ij  = exp(-D2_ij / eps^2)
    W~    = P^-1 W P^-1   with P_ii = sum_j W_ij     (density normalization)
    K     = D^-1 W~       with D_ii = sum_j W~_ij    (Markov normalization)

K is row-stochastic, so its leading eigenvalue is 1 with a constant
eigenvector; the following eigenvectors phi_1, phi_2, ... are the
embedding coordinates.  Instead of solving the nonsymmetric K directly,
the eigenproblem is conjugated to the symmetric

    S = D^-1/2 W~ D^-1/2

which shares eigenvalues with K; its orthonormal eigenvectors v map to
K's right eigenvectors via phi = D^-1/2 v.  Each phi column is then
rescaled to unit 2-norm and sign-fixed so that its largest-magnitude
entry is positive.

New points are embedded without refitting through the Nystrom formula

    phi_k(x) = 1/lambda_k * sum_j K(x, x_j) phi_k(x_j)

where the kernel row of x is normalized with the training conventions
(training P entries on the right, the new point's own row sums on the
left).  Eigenpairs with lambda below NYSTROM_EIG_FLOOR are not
extendable and are refused.

Geometric harmonics reuse the same machinery to lift a function given
on training points to new points: fit a kernel over the input
coordinates, keep eigenpairs with lambda >= delta * lambda_max, project
the target onto them (D-weighted projection, under which the phi are
orthogonal), and evaluate the retained eigenfunctions at new points via
Nystrom.  Since phi_0 of a Markov kernel is constant, constant targets
extend exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import NumericError

NYSTROM_EIG_FLOOR = 1e-6


@dataclass(frozen=True)
class KernelParams:
    """Gaussian kernel scale and normalization switches.

    epsilon None means "use the median heuristic at fit time".
    """

    epsilon: Optional[float] = None
    density_normalize: bool = True

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class DmapModel:
    """Fitted diffusion map: reference points, kernel settings and the
    eigen-decomposition (column 0 is the trivial constant eigenvector)."""

    points: np.ndarray
    epsilon: float
    density_normalize: bool
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    p_row_sums: Optional[np.ndarray]
    d_row_sums: np.ndarray

    @property
    def n_eig(self) -> int:
        return self.eigenvalues.size

    def non_extendable(self) -> Tuple[int, ...]:
        """Indices whose eigenvalue is too small for Nystrom extension."""
        return tuple(int(i) for i in np.nonzero(self.eigenvalues < NYSTROM_EIG_FLOOR)[0])

    def truncate(self, m: int) -> "DmapModel":
        return DmapModel(self.points, self.epsilon, self.density_normalize,
                         self.eigenvalues[:m], self.eigenvectors[:, :m],
                         self.p_row_sums, self.d_row_sums)


@dataclass(frozen=True)
class EigenSelection:
    """Selected eigenvector indices plus the residuals that justified them."""

    indices: Tuple[int, ...]
    residuals: np.ndarray


def pairwise_sq_distances(X: np.ndarray) -> np.ndarray:
    """Symmetric matrix of squared Euclidean distances with a zero diagonal."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D (n_samples, n_features)")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    D2 = cdist(X, X, "sqeuclidean")
    D2 = 0.5 * (D2 + D2.T)
    np.fill_diagonal(D2, 0.0)
    return D2


def gaussian_kernel(D2: np.ndarray, epsilon: float) -> np.ndarray:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return np.exp(-np.asarray(D2, dtype=float) / (epsilon * epsilon))


def epsilon_median_heuristic(D2: np.ndarray) -> float:
    """Kernel scale from data: sqrt of the median nonzero squared distance."""
    vals = np.asarray(D2)[np.asarray(D2) > 0]
    if vals.size == 0:
        raise ValueError("all pairwise distances are zero; cannot pick epsilon")
    return float(np.sqrt(np.median(vals)))


def density_normalize(W: np.ndarray) -> np.ndarray:
    """W~ = P^-1 W P^-1 with P the diagonal of row sums."""
    p = W.sum(axis=1)
    if np.any(p <= 0):
        raise NumericError("kernel row sum underflowed to zero")
    return W / np.outer(p, p)


def markov_normalize(Wt: np.ndarray) -> np.ndarray:
    """K = D^-1 W~; rows sum to one."""
    d = Wt.sum(axis=1)
    if np.any(d <= 0):
        raise NumericError("kernel row sum underflowed to zero")
    return Wt / d[:, None]


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    V = V.copy()
    idx = np.argmax(np.abs(V), axis=0)
    flip = V[idx, np.arange(V.shape[1])] < 0
    V[:, flip] *= -1.0
    return V


def fit_dmaps(X: np.ndarray, params: Optional[KernelParams] = None,
              n_eig: int = 10) -> DmapModel:
    """Fit a diffusion map on the rows of X keeping n_eig eigenpairs
    (the trivial pair included as column 0)."""
    X = np.asarray(X, dtype=float)
    if params is None:
        params = KernelParams()
    if n_eig < 2:
        raise ValueError("n_eig must be at least 2")
    if X.ndim != 2 or X.shape[0] <= n_eig:
        raise ValueError("need more samples than requested eigenpairs")
    D2 = pairwise_sq_distances(X)
    eps = params.epsilon if params.epsilon is not None else epsilon_median_heuristic(D2)
    W = gaussian_kernel(D2, eps)
    Wt = density_normalize(W) if params.density_normalize else W
    p = W.sum(axis=1) if params.density_normalize else None
    d = Wt.sum(axis=1)
    if np.any(d <= 0):
        raise NumericError("kernel row sum underflowed to zero")
    inv_sqrt_d = 1.0 / np.sqrt(d)
    S = Wt * np.outer(inv_sqrt_d, inv_sqrt_d)
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(vals)[::-1][:n_eig]
    lam = vals[order]
    phi = vecs[:, order] * inv_sqrt_d[:, None]
    phi = phi / np.linalg.norm(phi, axis=0)
    phi = _fix_signs(phi)
    if abs(lam[0] - 1.0) > 1e-8:
        raise NumericError(f"leading eigenvalue {lam[0]!r} is not 1; kernel is broken")
    return DmapModel(points=X.copy(), epsilon=float(eps),
                     density_normalize=params.density_normalize,
                     eigenvalues=lam, eigenvectors=phi,
                     p_row_sums=p, d_row_sums=d)


def _kernel_rows(model: DmapModel, X_new: np.ndarray) -> np.ndarray:
    """Markov kernel rows K(x_new, x_train) under training conventions."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != model.points.shape[1]:
        raise ValueError("new points must match the training dimension")
    if not np.all(np.isfinite(X_new)):
        raise ValueError("new points contain non-finite values")
    D2 = cdist(X_new, model.points, "sqeuclidean")
    W = np.exp(-D2 / (model.epsilon * model.epsilon))
    if model.density_normalize:
        p_new = W.sum(axis=1)
        if np.any(p_new <= 0):
            raise NumericError("kernel row sum underflowed to zero")
        W = W / np.outer(p_new, model.p_row_sums)
    d_new = W.sum(axis=1)
    if np.any(d_new <= 0):
        raise NumericError("kernel row sum underflowed to zero")
    return W / d_new[:, None]


def nystrom_extend(model: DmapModel, X_new: np.ndarray,
                   indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Embed new points with the Nystrom formula, one column per
    requested eigenvector index (default: all of them).

    Raises ValueError if a requested eigenvalue is below
    NYSTROM_EIG_FLOOR; those indices are listed by model.non_extendable().
    """
    if indices is None:
        idx = np.arange(model.n_eig)
    else:
        idx = np.asarray(list(indices), dtype=int)
        if idx.size == 0:
            raise ValueError("no eigenvector indices requested")
        if np.any(idx < 0) or np.any(idx >= model.n_eig):
            raise ValueError("eigenvector index out of range")
    lam = model.eigenvalues[idx]
    bad = idx[lam < NYSTROM_EIG_FLOOR]
    if bad.size:
        raise ValueError(f"eigenvalues of indices {bad.tolist()} are below "
                         f"{NYSTROM_EIG_FLOOR}; not extendable")
    K_new = _kernel_rows(model, X_new)
    return (K_new @ model.eigenvectors[:, idx]) / lam


def local_linear_residual(Phi: np.ndarray, threshold: float = 0.5,
                          bandwidth_scale: float = 1.0 / 3.0,
                          ridge: float = 1e-8) -> EigenSelection:
    """Rank eigenvector columns by how novel they are.

    Column k is predicted from columns 0..k-1 by leave-one-out locally
    weighted linear regression (Gaussian weights over distances in the
    predictor subspace, bandwidth = bandwidth_scale * the largest
    pairwise distance, ridge-stabilized normal equations).  The residual

        r_k = sqrt( sum_i (phi_k_i - phihat_k_i)^2 / sum_i phi_k_i^2 )

    is near zero when phi_k is a function (harmonic) of earlier columns
    and near one when it carries a new direction.  Column 0 has no
    predecessors and gets r_0 = 1 by convention.  Indices with
    r_k > threshold form the selection.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[1] < 2:
        raise ValueError("need at least two eigenvector columns")
    n, m = Phi.shape
    if n < 4:
        raise ValueError("too few samples for leave-one-out local fits")
    res = np.empty(m)
    res[0] = 1.0
    for k in range(1, m):
        P = Phi[:, :k]
        t = Phi[:, k]
        dist = cdist(P, P)
        h = bandwidth_scale * dist.max()
        if h <= 0:
            raise ValueError("degenerate predictor coordinates")
        Wgt = np.exp(-((dist / h) ** 2))
        A = np.column_stack([np.ones(n), P])
        pred = np.empty(n)
        eye = np.eye(k + 1) * ridge
        for i in range(n):
            w = np.delete(Wgt[i], i)
            Ai = np.delete(A, i, axis=0)
            ti = np.delete(t, i)
            Aw = Ai * w[:, None]
            theta = np.linalg.solve(Ai.T @ Aw + eye, Aw.T @ ti)
            pred[i] = A[i] @ theta
        denom = float(np.sum(t * t))
        res[k] = float(np.sqrt(np.sum((t - pred) ** 2) / denom)) if denom > 0 else 0.0
    keep = tuple(int(i) for i in np.nonzero(res > threshold)[0])
    return EigenSelection(indices=keep, residuals=res)


@dataclass(frozen=True)
class GhModel:
    """Geometric-harmonics lift of a target defined on training inputs."""

    dmap: DmapModel
    coefficients: np.ndarray
    delta: float
    train_residual: float
    target_is_1d: bool


def gh_fit(inputs: np.ndarray, targets: np.ndarray,
           params: Optional[KernelParams] = None, delta: float = 1e-3) -> GhModel:
    """Project targets onto the kernel eigenfunctions over the inputs.

    Eigenpairs with lambda >= delta * lambda_max survive the cutoff
    (floored at the Nystrom limit so every retained harmonic stays
    extendable).  Coefficients come from the D-weighted projection,
    under which distinct eigenvectors are exactly orthogonal.
    """
    inputs = np.asarray(inputs, dtype=float)
    F = np.asarray(targets, dtype=float)
    target_is_1d = F.ndim == 1
    F2 = F[:, None] if target_is_1d else F
    if inputs.shape[0] != F2.shape[0]:
        raise ValueError("inputs and targets disagree on sample count")
    if inputs.shape[0] < 3:
        raise ValueError("need at least three points")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if params is None:
        params = KernelParams()
    full = fit_dmaps(inputs, params, n_eig=inputs.shape[0] - 1)
    cutoff = max(delta * full.eigenvalues[0], NYSTROM_EIG_FLOOR)
    m = int(np.sum(full.eigenvalues >= cutoff))
    if m == 0:
        raise NumericError("no harmonic survives the eigenvalue cutoff")
    dm = full.truncate(m)
    Phi = dm.eigenvectors
    d = dm.d_row_sums
    num = Phi.T @ (d[:, None] * F2)
    den = np.sum(Phi * (d[:, None] * Phi), axis=0)
    gamma = num / den[:, None]
    fitted = Phi @ gamma
    norm_f = np.linalg.norm(F2)
    resid = float(np.linalg.norm(fitted - F2) / norm_f) if norm_f > 0 \
        else float(np.linalg.norm(fitted - F2))
    return GhModel(dmap=dm, coefficients=gamma, delta=float(delta),
                   train_residual=resid, target_is_1d=target_is_1d)


def gh_predict(gh: GhModel, X_new: np.ndarray) -> np.ndarray:
    """Evaluate the lifted target at new input coordinates."""
    phi_new = nystrom_extend(gh.dmap, X_new)
    out = phi_new @ gh.coefficients
    return out[:, 0] if gh.target_is_1d else out


def select_coordinates(model: DmapModel, X: np.ndarray, n_coords: int,
                       n_candidates: Optional[int] = None,
                       gh_params: Optional[KernelParams] = None,
                       delta: float = 1e-3):
    """Pick embedding coordinates by reconstruction accuracy.

    Greedy forward selection over the nontrivial eigenvectors: at each
    step add the index whose inclusion minimizes the geometric-harmonics
    round-trip error ||X - lift(phi_selected)||_F / ||X||_F on the
    training data.  Returns (EigenSelection, final reconstruction error);
    the selection indices are in greedy order and its residuals are the
    local-linear-regression novelty scores of the candidate columns
    (residuals[j] belongs to eigenvector j+1).
    """
    if n_candidates is None:
        n_candidates = model.n_eig - 1
    n_candidates = min(n_candidates, model.n_eig - 1)
    if not 1 <= n_coords <= n_candidates:
        raise ValueError("n_coords must lie in [1, n_candidates]")
    X = np.asarray(X, dtype=float)
    candidates = list(range(1, n_candidates + 1))
    norm_x = np.linalg.norm(X)

    def recon_error(idx_list):
        gh = gh_fit(model.eigenvectors[:, idx_list], X, params=gh_params, delta=delta)
        fitted = gh_predict(gh, model.eigenvectors[:, idx_list])
        return float(np.linalg.norm(fitted - X) / norm_x)

    selected: list = []
    err = np.inf
    for _ in range(n_coords):
        best, best_err = None, np.inf
        for c in candidates:
            if c in selected:
                continue
            e = recon_error(selected + [c])
            if e < best_err:
                best, best_err = c, e
        selected.append(best)
        err = best_err
    llr = local_linear_residual(model.eigenvectors[:, 1:n_candidates + 1])
    return EigenSelection(indices=tuple(selected), residuals=llr.residuals), err
