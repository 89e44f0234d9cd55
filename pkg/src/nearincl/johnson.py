"""
Correction of approximately multiplicative unital maps to homomorphisms.

The default step is the diagonal average
``H(a) = sum_k L(a a_k) L(b_k)`` normalised to keep the unit,
``L'(a) = G^{-1/2} H(a) G^{-1/2}`` with ``G = H(1) = Psi_{L,L}(u)``.
A homomorphism is a fixed point, and the defect decays quadratically
near one.  When the average stalls the Gauss-Newton method on the
homomorphism equations takes over.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.linalg import sqrtm

from .diagonal import verify_diagonal
from .errors import ConvergenceError, InvalidInputError, PremiseNotCertifiedError
from .maps import AlgebraMap, Bracket, defect_upper, norm_upper

__all__ = ["JohnsonBudget", "delta_threshold", "CorrectionTrace", "correct_to_homomorphism"]

log = logging.getLogger(__name__)

# Relative slack for comparing a computed upper bound with an analytic
# threshold derived from the same rounded inputs.
PREMISE_RTOL = 1e-12

NEWTON_MAX_ENTRIES = 4e6


@dataclass(frozen=True)
class JohnsonBudget:
    """``delta = epsilon / (4 u + 8 mu^2 u^2)`` with ``||L|| <= mu``, ``||u|| <= u_norm``."""

    mu: float
    u_norm: float
    epsilon: float
    delta: float

    def to_json(self):
        return {k: float(getattr(self, k)) for k in ("mu", "u_norm", "epsilon", "delta")}


def delta_threshold(epsilon, mu, u_norm):
    """
    Defect budget of the stability theorem.

    Arithmetic is done in the type of the inputs, so ``fractions.Fraction``
    arguments give an exact rational ``delta``.

    Examples
    --------
    >>> from fractions import Fraction
    >>> delta_threshold(Fraction(3, 25), 2, 1).delta
    Fraction(1, 300)
    """
    if not 0 < epsilon < 1:
        raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    if not u_norm >= 1:
        raise InvalidInputError(f"u_norm must be at least 1, got {u_norm}")
    delta = epsilon / (4 * u_norm + 8 * mu * mu * u_norm * u_norm)
    return JohnsonBudget(mu, u_norm, epsilon, delta)


@dataclass
class CorrectionTrace:
    """Per-iteration record: ``(index, defect upper bound, distance to start, scheme)``."""

    rows: list = field(default_factory=list)

    def add(self, index, defect, distance, scheme):
        self.rows.append((int(index), float(defect), float(distance), scheme))

    @property
    def defects(self):
        return [r[1] for r in self.rows]

    def to_json(self):
        return [{"iteration": i, "defect_upper": d, "distance_upper": s, "scheme": m} for i, d, s, m in self.rows]


def _products(images):
    return np.einsum("pab,rbc->prac", images, images)


def _defect_from(g, images, prods, weights):
    d = np.einsum("ijr,rab->ijab", g, images) - prods
    return float(np.einsum("i,j,ij->", weights, weights, np.linalg.norm(d, ord=2, axis=(2, 3))))


def _cheap_distance(domain, images, start):
    diff = images - start
    return float(np.sum(domain.trace_norms * np.linalg.norm(diff, ord=2, axis=(1, 2))))


def _average_step(domain, images, coeff, prods, target):
    """One normalised diagonal-average step; returns new images."""
    g = domain.structure_constants
    w = np.einsum("pq,qir->pir", coeff, g)
    h = np.einsum("pir,prab->iab", w, prods)
    gram = np.einsum("pq,pqab->ab", coeff, prods)
    root = sqrtm(gram)
    inv_root = np.linalg.inv(root)
    new = inv_root @ h @ inv_root
    if target is not None:
        new = target.project(new)
    return new


def _newton(domain, images, target, tol, max_steps=30):
    """Gauss-Newton on ``X_i X_j = sum_r G_ijr X_r``, ``sum_i 1_i X_i = I``."""
    d, n = domain.dim, images.shape[1]
    g = domain.structure_constants
    one = domain.unit_coefficients
    if target is None:
        frame = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
    else:
        frame = target.basis
    m = len(frame)
    if (d * d + 1) * n * n * d * m > NEWTON_MAX_ENTRIES:
        return None
    coords = np.einsum("mab,iab->im", frame.conj(), images)
    eye = np.eye(n)
    for _ in range(max_steps):
        x = np.einsum("im,mab->iab", coords, frame)
        prods = _products(x)
        resid = np.concatenate([
            (prods - np.einsum("ijr,rab->ijab", g, x)).reshape(-1),
            (np.einsum("i,iab->ab", one, x) - eye).reshape(-1),
        ])
        if np.max(np.abs(resid)) <= tol * 1e-2:
            break
        # dF_ij = dX_i X_j + X_i dX_j - sum_r G_ijr dX_r, with dX_k = sum_m c_km F_m
        fx = np.einsum("mab,jbc->mjac", frame, x)  # F_m X_j
        xf = np.einsum("iab,mbc->imac", x, frame)  # X_i F_m
        jac = np.zeros((d, d, n, n, d, m), dtype=complex)
        for k in range(d):
            jac[k, :, :, :, k, :] += np.moveaxis(fx, 0, -1)
            jac[:, k, :, :, k, :] += np.moveaxis(xf, 1, -1)
        jac -= np.einsum("ijk,mab->ijabkm", g, frame)
        unit_rows = np.einsum("k,mab->abkm", one, frame)
        full = np.concatenate([jac.reshape(d * d * n * n, d * m), unit_rows.reshape(n * n, d * m)])
        step = np.linalg.lstsq(full, -resid, rcond=None)[0]
        coords = coords + step.reshape(d, m)
        if not np.all(np.isfinite(coords)):
            return None
    return np.einsum("im,mab->iab", coords, frame)


def correct_to_homomorphism(t, u, budget, tol=1e-10, max_iter=200, target=None, check_premise=True):
    """
    Exact unital homomorphism near the unital map ``t``.

    Parameters
    ----------
    t : AlgebraMap
        Unital map with ``||t^v|| <= budget.delta`` and ``||t|| <= budget.mu``.
    u : TensorElement
        Virtual diagonal of ``t.domain``.
    budget : JohnsonBudget
    tol : float
        Target for the certified defect upper bound of the result.
    target : FdAlgebra, optional
        Algebra containing the images of ``t``; iterates are projected onto
        it to remove rounding drift.
    check_premise : bool
        Verify the defect and norm premises before iterating.

    Returns
    -------
    pi : AlgebraMap
        Carries ``defect_bracket = (0, defect upper)`` and, as attribute
        ``trace``, the :class:`CorrectionTrace`.

    Raises
    ------
    PremiseNotCertifiedError
        Defect or norm premise not certified by the upper brackets.
    ConvergenceError
        Iteration cap reached, numerical breakdown, or the result left the
        ``epsilon`` budget.
    """
    a = t.domain
    if u.algebra is not a and (u.algebra.dim != a.dim or np.max(np.abs(u.algebra.basis - a.basis)) > 1e-14):
        raise InvalidInputError("diagonal and map live on different algebras")
    if not t.unital:
        raise InvalidInputError("map must be unital")
    check = verify_diagonal(u)
    if not check.passed:
        raise InvalidInputError(f"tensor is not a virtual diagonal: {check}")
    weights = a.trace_norms
    start = np.array(t.images)
    prods = _products(start)
    d0 = min(_defect_from(a.structure_constants, start, prods, weights), t.defect_bracket[1])
    if check_premise:
        if d0 > budget.delta * (1 + PREMISE_RTOL):
            raise PremiseNotCertifiedError(
                f"defect upper bound {d0:.3e} exceeds delta {budget.delta:.3e}",
                bracket=(0.0, d0),
            )
        nu = norm_upper(t)
        if nu > budget.mu * (1 + PREMISE_RTOL):
            raise PremiseNotCertifiedError(
                f"norm upper bound {nu:.3e} exceeds mu {budget.mu:.3e}", bracket=(0.0, nu)
            )
    trace = CorrectionTrace()
    trace.add(0, d0, 0.0, "start")
    images = start
    defect = d0
    coeff = u.coefficient_matrix()
    it = 0
    while defect > tol:
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"no convergence in {max_iter} iterations", trace.defects)
        recent = trace.defects[-6:]
        stalled = len(recent) == 6 and recent[-1] > 0.9 * recent[0]
        scheme = "average"
        new = None
        if stalled:
            new = _newton(a, images, target, tol)
            scheme = "newton"
            if new is None:
                raise ConvergenceError("averaging stalled and Newton fallback is unavailable", trace.defects)
        if new is None:
            new = _average_step(a, images, coeff, prods, target)
        if not np.all(np.isfinite(new)):
            raise ConvergenceError("non-finite iterate", trace.defects)
        images = new
        prods = _products(images)
        defect = _defect_from(a.structure_constants, images, prods, weights)
        trace.add(it, defect, _cheap_distance(a, images, start), scheme)
        log.debug("johnson iteration %d: defect %.3e (%s)", it, defect, scheme)
    if it == 0:
        pi = AlgebraMap(a, start, unital=True, defect_bracket=(0.0, defect))
    else:
        pi = AlgebraMap(a, images, defect_bracket=(0.0, defect))
    if not pi.unital:
        raise ConvergenceError("result lost unitality", trace.defects)
    dist = norm_upper(t - pi) if it else 0.0
    if dist > budget.epsilon * (1 + PREMISE_RTOL):
        raise ConvergenceError(
            f"||t - pi|| upper bound {dist:.3e} exceeds epsilon {budget.epsilon:.3e}", trace.defects
        )
    pi.trace = trace
    pi.distance_bracket = Bracket(0.0, dist)
    return pi
