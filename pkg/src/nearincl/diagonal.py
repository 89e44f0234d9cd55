"""
Virtual diagonals of finite-dimensional amenable algebras.

In finite dimension the bidual of the projective tensor product is the
algebraic tensor product, so a virtual diagonal is an honest finite sum
``u = sum_k a_k (x) b_k`` with ``a u = u a`` for every ``a`` and
``sum_k a_k b_k = 1``.  Tensor identities are checked on the coefficient
matrix of ``u`` in the Frobenius-orthonormal basis of the algebra.
"""

from dataclasses import dataclass
from math import lcm

import numpy as np

from .algebra import FdAlgebra, block_algebra
from .errors import InvalidInputError
from .linalg import as_matrix, inverse, matrix_from_json, matrix_to_json

__all__ = [
    "TensorElement",
    "DiagonalCheck",
    "weyl_matrices",
    "weyl_diagonal",
    "multiply",
    "module_act",
    "transport",
    "verify_diagonal",
    "regroup",
    "projective_norm_upper_bound",
]


def _pair_norm_sum(left, right):
    ln = np.linalg.svd(left, compute_uv=False)[:, 0] if len(left) else np.zeros(0)
    rn = np.linalg.svd(right, compute_uv=False)[:, 0] if len(right) else np.zeros(0)
    return float(np.sum(ln * rn))


@dataclass(frozen=True, eq=False)
class TensorElement:
    """
    ``sum_k left[k] (x) right[k]`` in ``A (x) A``.

    ``norm_bound`` is a certified upper bound on the projective tensor
    norm.  ``witness`` optionally holds another representation
    ``(left, right)`` of the same tensor whose ``sum ||a|| ||b||`` is what
    certifies a bound below the stored pairs' own sum.
    """

    algebra: FdAlgebra
    left: np.ndarray
    right: np.ndarray
    norm_bound: float
    witness: tuple = None

    def __post_init__(self):
        left = np.asarray(self.left, dtype=complex)
        right = np.asarray(self.right, dtype=complex)
        n = self.algebra.ambient_dim
        if left.shape != right.shape or left.ndim != 3 or left.shape[1:] != (n, n):
            raise InvalidInputError(f"pair stacks must both have shape (K, {n}, {n})")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "norm_bound", float(self.norm_bound))

    @classmethod
    def from_pairs(cls, algebra, pairs, norm_bound=None, check=True):
        n = algebra.ambient_dim
        left = np.array([as_matrix(a, square=True) for a, _ in pairs]).reshape(-1, n, n)
        right = np.array([as_matrix(b, square=True) for _, b in pairs]).reshape(-1, n, n)
        if check:
            for stack in (left, right):
                if len(stack) and np.max(algebra.span_residual(stack)) > 1e-10:
                    raise InvalidInputError("tensor factor outside the algebra")
        bound = _pair_norm_sum(left, right) if norm_bound is None else norm_bound
        return cls(algebra, left, right, bound)

    @property
    def pairs(self):
        return list(zip(self.left, self.right))

    def __len__(self):
        return len(self.left)

    def coefficient_matrix(self):
        """``C[p, q]`` with ``t = sum_{p,q} C[p, q] e_p (x) e_q``."""
        a = self.algebra
        return np.einsum("kp,kq->pq", a.coefficients(self.left), a.coefficients(self.right))

    def to_json(self):
        return {
            "pairs": [{"left": matrix_to_json(a), "right": matrix_to_json(b)} for a, b in self.pairs],
            "norm_bound": self.norm_bound,
        }

    @classmethod
    def from_json(cls, obj, algebra):
        pairs = [(matrix_from_json(p["left"]), matrix_from_json(p["right"])) for p in obj["pairs"]]
        return cls.from_pairs(algebra, pairs, norm_bound=float(obj["norm_bound"]))


@dataclass(frozen=True)
class DiagonalCheck:
    commutation_residual: float
    multiplication_residual: float
    membership_residual: float
    passed: bool


def weyl_matrices(n):
    """The ``n**2`` clock-and-shift unitaries ``X^a Z^b`` (shift ``X``, clock ``Z``)."""
    shift = np.roll(np.eye(n, dtype=complex), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(n) / n))
    out = []
    xa = np.eye(n, dtype=complex)
    for _ in range(n):
        zb = np.eye(n, dtype=complex)
        for _ in range(n):
            out.append(xa @ zb)
            zb = zb @ clock
        xa = xa @ shift
    return out


def _weyl_pairs(model):
    """Pairs ``(U / count, U*)`` over the mixed unitary family of a block model."""
    nblocks = len(model.sizes)
    omega = np.exp(2j * np.pi / nblocks)
    weyl = [weyl_matrices(n) for n in model.sizes]
    period = lcm(*[n * n for n in model.sizes])
    count = nblocks * period
    left, right = [], []
    for j in range(nblocks):
        for m in range(period):
            ws = [weyl[k][m % len(weyl[k])] for k in range(nblocks)]
            u = sum(omega ** (j * k) * model.embed(k, w) for k, w in enumerate(ws))
            u_inv = sum(omega ** (-j * k) * model.embed(k, w.conj().T) for k, w in enumerate(ws))
            left.append(u / count)
            right.append(u_inv)
    return np.array(left), np.array(right)


def weyl_diagonal(block_sizes, multiplicities=None, ambient_dim=None):
    """
    Norm-one virtual diagonal of ``M_{n_1} + ... + M_{n_K}``.

    ``u`` is the average of ``U (x) U*`` over the unitaries
    ``U = sum_k omega^{jk} W_k`` with ``omega = exp(2 pi i / K)``,
    ``j = 0..K-1`` and ``W_k`` running through the clock-shift group of
    ``M_{n_k}``.  The characters kill every cross-block term and each block
    average is the matrix-unit diagonal ``(1/n) sum e_ij (x) e_ji``.  The
    blocks share one index ``m`` cycling with period ``lcm(n_k**2)``, which
    reproduces every per-block average with far fewer terms than the full
    product group.

    Parameters
    ----------
    block_sizes : list of int
        ``n_k >= 1``.
    multiplicities, ambient_dim : optional
        Passed to :func:`nearincl.algebra.block_algebra`.

    Returns
    -------
    TensorElement
        With ``norm_bound == 1``.
    """
    if not len(block_sizes):
        raise InvalidInputError("block_sizes must be non-empty")
    algebra = block_algebra(block_sizes, multiplicities, ambient_dim=ambient_dim)
    left, right = _weyl_pairs(algebra.block_model)
    return TensorElement(algebra, left, right, 1.0)


def multiply(t):
    """``sum_k a_k b_k``."""
    return np.einsum("kab,kbc->ac", t.left, t.right)


def module_act(side, a, t):
    """``a . t`` (``side='left'``) or ``t . a`` (``side='right'``)."""
    a = t.algebra.check_member(a, name="module element")
    scale = float(np.linalg.norm(a, 2))
    if side == "left":
        return TensorElement(t.algebra, a @ t.left, t.right, scale * t.norm_bound)
    if side == "right":
        return TensorElement(t.algebra, t.left, t.right @ a, scale * t.norm_bound)
    raise InvalidInputError(f"side must be 'left' or 'right', got {side!r}")


def transport(t, similarity, target):
    """
    Conjugate every tensor factor by ``similarity``.

    The bound grows by ``(||S|| ||S^-1||)**2``; a witness, if present, is
    transported alongside.
    """
    s = as_matrix(similarity, square=True, name="similarity")
    if s.shape[0] != t.algebra.ambient_dim or target.ambient_dim != s.shape[0]:
        raise InvalidInputError("similarity, tensor and target dimensions disagree")
    s_inv = inverse(s)
    sv = np.linalg.svd(s, compute_uv=False)
    kappa2 = float(sv[0] / sv[-1]) ** 2
    left = s @ t.left @ s_inv
    right = s @ t.right @ s_inv
    for stack in (left, right):
        scale = np.maximum(np.sqrt(np.sum(np.abs(stack) ** 2, axis=(1, 2))), 1.0)
        worst = float(np.max(target.span_residual(stack) / scale))
        if worst > 1e-8:
            raise InvalidInputError(f"conjugated factor lies outside the target algebra (residual {worst:.3e})")
    witness = None
    if t.witness is not None:
        witness = (s @ t.witness[0] @ s_inv, s @ t.witness[1] @ s_inv)
    return TensorElement(target, left, right, kappa2 * t.norm_bound, witness)


def verify_diagonal(t, tol=1e-9):
    """
    Check the two virtual-diagonal axioms at coefficient level.

    ``commutation_residual`` is the largest Frobenius norm, over basis
    elements ``a``, of the coefficient matrix of ``a.u - u.a``;
    ``multiplication_residual`` is ``||m(u) - 1||``.
    """
    a = t.algebra
    c = t.coefficient_matrix()
    g = a.structure_constants
    left_act = np.einsum("apr,pq->arq", g, c)
    right_act = np.einsum("pq,qas->aps", c, g)
    comm = float(np.max(np.sqrt(np.sum(np.abs(left_act - right_act) ** 2, axis=(1, 2)))))
    mult = float(np.linalg.norm(multiply(t) - a.unit, 2))
    memb = 0.0
    if len(t):
        memb = float(max(np.max(a.span_residual(t.left)), np.max(a.span_residual(t.right))))
    return DiagonalCheck(comm, mult, memb, comm <= tol and mult <= tol and memb <= tol)


def _block_weyl(model, k):
    n = model.sizes[k]
    ws = weyl_matrices(n)
    left = np.array([model.embed(k, w) / (n * n) for w in ws])
    right = np.array([model.embed(k, w.conj().T) for w in ws])
    return left, right


def regroup(t, tol=1e-10):
    """
    Look for a cheaper representation of ``t`` by mixing across blocks.

    Requires a block model.  The tensor is split into its diagonal block
    components ``z_k t z_k`` (central projections ``z_k``); cross-block
    components must vanish.  A block component proportional to the block's
    clock-shift diagonal is replaced by that diagonal.  The per-block lists
    are then zipped and recombined with characters ``omega^{jk}``, which
    reproduces ``t`` exactly while each mixed factor only costs the largest
    of its block pieces (exactly so when the blocks are orthogonal).

    Returns
    -------
    (bound, (left, right)) or None
        ``bound`` is the directly evaluated ``sum ||a|| ||b||`` of the
        witness, or ``None`` when no regrouping applies.
    """
    a = t.algebra
    model = a.block_model
    if model is None or len(t) == 0:
        return None
    z = model.central_projections()
    nb = len(z)
    zl = np.array([zk @ t.left for zk in z])
    zr = np.array([zk @ t.right for zk in z])
    cl = a.coefficients(zl)
    cr = a.coefficients(zr)
    for k in range(nb):
        for m in range(nb):
            if k != m and np.linalg.norm(np.einsum("ip,iq->pq", cl[k], cr[m])) > tol:
                return None
    lists = []
    for k in range(nb):
        ck = np.einsum("ip,iq->pq", cl[k], cr[k])
        wl, wr = _block_weyl(model, k)
        cw = np.einsum("ip,iq->pq", a.coefficients(wl), a.coefficients(wr))
        scale = np.vdot(cw, ck) / np.vdot(cw, cw)
        if np.linalg.norm(ck - scale * cw) <= tol * max(1.0, np.linalg.norm(ck)):
            pl, pr = scale * wl, wr
        else:
            keep = (np.linalg.norm(zl[k], axis=(1, 2)) > 0) & (np.linalg.norm(zr[k], axis=(1, 2)) > 0)
            pl, pr = zl[k][keep], zr[k][keep]
        if len(pl):
            cost = np.linalg.svd(pl, compute_uv=False)[:, 0] * np.linalg.svd(pr, compute_uv=False)[:, 0]
            order = np.argsort(-cost, kind="stable")
            pl, pr = pl[order], pr[order]
        lists.append((pl, pr))
    depth = max(len(pl) for pl, _ in lists)
    n = a.ambient_dim
    omega = np.exp(2j * np.pi / nb)
    left, right = [], []
    for j in range(nb):
        for m in range(depth):
            lm = np.zeros((n, n), dtype=complex)
            rm = np.zeros((n, n), dtype=complex)
            for k, (pl, pr) in enumerate(lists):
                if m < len(pl):
                    lm = lm + omega ** (j * k) * pl[m] / nb
                    rm = rm + omega ** (-j * k) * pr[m]
            left.append(lm)
            right.append(rm)
    left, right = np.array(left), np.array(right)
    cw = np.einsum("kp,kq->pq", a.coefficients(left), a.coefficients(right))
    if np.linalg.norm(cw - t.coefficient_matrix()) > 1e-9:
        return None
    return _pair_norm_sum(left, right), (left, right)


def projective_norm_upper_bound(t):
    """
    Certified upper bound on the projective tensor norm of ``t``.

    Minimum of the stored bound, ``sum ||a_k|| ||b_k||`` of the stored pairs,
    the stored witness, and one :func:`regroup` pass.
    """
    candidates = [t.norm_bound, _pair_norm_sum(t.left, t.right)]
    if t.witness is not None:
        candidates.append(_pair_norm_sum(*t.witness))
    found = regroup(t)
    if found is not None:
        candidates.append(found[0])
    return float(min(candidates))
