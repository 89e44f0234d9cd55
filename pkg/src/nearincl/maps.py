"""
Linear maps on finite-dimensional algebras and certified norm brackets.

A map ``L : A -> M_N`` is stored by the images of the orthonormal basis of
``A``.  Norms are suprema over the operator-norm unit ball of ``A``; they
are reported as brackets whose lower end comes from an explicit witness
and whose upper end is a proven inequality.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .algebra import FdAlgebra, full_matrix_algebra, sample_unit_ball
from .errors import InvalidInputError
from .linalg import as_matrix, inverse, matrix_from_json, matrix_to_json

__all__ = [
    "Bracket",
    "AlgebraMap",
    "ProjectionOnto",
    "identity_map",
    "conjugation_map",
    "map_from_function",
    "frobenius_projection",
    "identity_projection",
    "compress",
    "defect",
    "defect_tensor",
    "defect_upper",
    "defect_norm",
    "map_norm",
    "norm_upper",
    "psi_apply",
]

INF = float("inf")


@dataclass(frozen=True)
class Bracket:
    """``lower <= value <= upper``; iterates as ``(lower, upper)``."""

    lower: float
    upper: float
    witness: object = None

    def __iter__(self):
        yield self.lower
        yield self.upper

    def intersect(self, other):
        other_lo, other_hi = tuple(other)[:2]
        lo, hi = max(self.lower, other_lo), min(self.upper, other_hi)
        return Bracket(lo, hi, self.witness)


class AlgebraMap:
    """
    Linear map from ``domain`` into ``M_N``.

    Parameters
    ----------
    domain : FdAlgebra
    images : (d, N, N) array_like
        Image of each basis element of ``domain``.
    unital : bool, optional
        Computed from the images when omitted.
    norm_bracket, defect_bracket : (float, float)
        Brackets already known from structure (e.g. ``||P|_A|| <= ||P||``).
        Computed brackets are intersected with these.
    """

    def __init__(self, domain, images, unital=None, norm_bracket=(0.0, INF), defect_bracket=(0.0, INF)):
        imgs = np.array(images, dtype=complex)
        if imgs.ndim != 3 or imgs.shape[0] != domain.dim or imgs.shape[1] != imgs.shape[2]:
            raise InvalidInputError(f"need {domain.dim} square images, got shape {imgs.shape}")
        if not np.all(np.isfinite(imgs)):
            raise InvalidInputError("map images must be finite")
        imgs.setflags(write=False)
        self.domain = domain
        self.images = imgs
        if unital is None:
            unital = bool(np.linalg.norm(self.unit_image - np.eye(self.target_dim), 2) <= 1e-10)
        self.unital = bool(unital)
        if norm_bracket[0] > norm_bracket[1] or defect_bracket[0] > defect_bracket[1]:
            raise InvalidInputError("bracket lower end exceeds upper end")
        self.norm_bracket = (float(norm_bracket[0]), float(norm_bracket[1]))
        self.defect_bracket = (float(defect_bracket[0]), float(defect_bracket[1]))

    @property
    def target_dim(self):
        return self.images.shape[1]

    @property
    def unit_image(self):
        return np.einsum("d,dij->ij", self.domain.unit_coefficients, self.images)

    def apply(self, x):
        """Evaluate on ``x`` (or a stack) through its coordinates, without a membership check."""
        return np.einsum("...d,dij->...ij", self.domain.coefficients(x), self.images)

    def __call__(self, x):
        return self.apply(self.domain.check_member(x))

    def adjoint_coefficients(self, w):
        """``<L(e_i), w>`` for each basis index; the Frobenius adjoint in coordinates."""
        return np.einsum("dij,...ij->...d", self.images.conj(), w)

    def with_brackets(self, norm=None, defect=None):
        nb, db = self.norm_bracket, self.defect_bracket
        if norm is not None:
            nb = (max(nb[0], norm[0]), min(nb[1], norm[1]))
        if defect is not None:
            db = (max(db[0], defect[0]), min(db[1], defect[1]))
        return AlgebraMap(self.domain, self.images, self.unital, nb, db)

    def _compatible(self, other):
        if other.domain is not self.domain and (
            other.domain.dim != self.domain.dim
            or np.max(np.abs(other.domain.basis - self.domain.basis)) > 1e-14
        ):
            raise InvalidInputError("maps are defined on different algebras")

    def __add__(self, other):
        self._compatible(other)
        return AlgebraMap(self.domain, self.images + other.images)

    def __sub__(self, other):
        self._compatible(other)
        return AlgebraMap(self.domain, self.images - other.images)

    def __mul__(self, c):
        return AlgebraMap(self.domain, complex(c) * self.images)

    __rmul__ = __mul__

    def __neg__(self):
        return AlgebraMap(self.domain, -self.images)

    def __repr__(self):
        return f"AlgebraMap(dim={self.domain.dim} -> M_{self.target_dim}, unital={self.unital})"

    def to_json(self):
        return {"domain": "ref", "images": [matrix_to_json(m) for m in self.images], "unital": self.unital}

    @classmethod
    def from_json(cls, obj, domain):
        return cls(domain, [matrix_from_json(m) for m in obj["images"]], unital=obj.get("unital"))


def identity_map(a):
    """The inclusion ``id_A : A -> M_N``; isometric and multiplicative."""
    return AlgebraMap(a, a.basis, unital=True, norm_bracket=(1.0, 1.0), defect_bracket=(0.0, 0.0))


def conjugation_map(base, v):
    """``ad_v o base : x -> v base(x) v^-1``."""
    v = as_matrix(v, square=True, name="v")
    v_inv = inverse(v)
    sv = np.linalg.svd(v, compute_uv=False)
    kappa = float(sv[0] / sv[-1])
    return AlgebraMap(
        base.domain,
        v @ base.images @ v_inv,
        norm_bracket=(0.0, kappa * base.norm_bracket[1]),
        defect_bracket=(0.0, kappa * base.defect_bracket[1]),
    )


def map_from_function(a, func):
    """Linear map defined by its action ``func`` on the basis of ``a``."""
    return AlgebraMap(a, [func(e) for e in a.basis])


@dataclass(frozen=True, eq=False)
class ProjectionOnto:
    """
    Bounded idempotent ``P : M_N -> M_N`` with range ``range``.

    ``matrix_rep`` acts on row-major vectorised matrices; ``norm_upper`` is
    a certified bound on ``||P||`` as a map on ``(M_N, operator norm)``.
    """

    range: FdAlgebra
    matrix_rep: np.ndarray
    norm_upper: float
    kind: str = "frobenius"

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        n = self.range.ambient_dim
        flat = x.reshape(x.shape[:-2] + (n * n,))
        return (flat @ self.matrix_rep.T).reshape(x.shape)

    def idempotency_residual(self):
        return float(np.max(np.abs(self.matrix_rep @ self.matrix_rep - self.matrix_rep)))

    def range_residual(self):
        n = self.range.ambient_dim
        cols = self.matrix_rep.T.reshape(n * n, n, n)
        return float(np.max(self.range.span_residual(cols)))

    def to_json(self):
        return {"kind": self.kind, "norm_upper": self.norm_upper}


def _mask_norm_bound(mask):
    """
    Norm bound for the Schur multiplier by a 0/1 block pattern.

    Indices with identical row and column patterns are grouped into blocks;
    each cyclic block diagonal ``{(k, k+d mod K)}`` met by the pattern is a
    block partial permutation, a contraction.  The count of such diagonals
    bounds the norm; a full pattern is the identity map (norm one).
    """
    n = mask.shape[0]
    keys = {}
    owner = np.empty(n, dtype=int)
    for i in range(n):
        owner[i] = keys.setdefault((mask[i].tobytes(), mask[:, i].tobytes()), len(keys))
    nb = len(keys)
    rep = [int(np.flatnonzero(owner == k)[0]) for k in range(nb)]
    blocks = mask[np.ix_(rep, rep)].astype(bool)
    if blocks.all():
        return 1.0
    used = {(l - k) % nb for k in range(nb) for l in range(nb) if blocks[k, l]}
    return float(len(used))


def frobenius_projection(n_alg):
    """
    Frobenius-orthogonal projection onto ``n_alg``.

    The certified norm bound is ``sum_i ||e_i||_1 ||e_i||``, improved to the
    block-diagonal count of :func:`_mask_norm_bound` when the projection is
    an entry mask (block-diagonal, block-triangular and similar patterns).
    """
    n = n_alg.ambient_dim
    vecs = n_alg.basis.reshape(n_alg.dim, n * n)
    rep = vecs.T @ vecs.conj()
    bound = float(np.sum(n_alg.trace_norms * n_alg.operator_norms))
    diag = np.real(np.diag(rep))
    off = rep - np.diag(np.diag(rep))
    kind = "frobenius"
    if np.max(np.abs(off)) < 1e-13 and np.all(np.minimum(np.abs(diag), np.abs(diag - 1)) < 1e-13):
        mask = (diag > 0.5).reshape(n, n).astype(np.uint8)
        bound = min(bound, _mask_norm_bound(mask))
        kind = "pattern"
        rep = np.diag((diag > 0.5).astype(complex))
    return ProjectionOnto(n_alg, rep, max(bound, 1.0), kind)


def identity_projection(n):
    return ProjectionOnto(full_matrix_algebra(n), np.eye(n * n, dtype=complex), 1.0, "identity")


def compress(p, a):
    """``T = P|_A``; its norm is at most ``||P||`` by construction."""
    if p.range.ambient_dim != a.ambient_dim:
        raise InvalidInputError("projection and algebra live in different matrix sizes")
    t = AlgebraMap(a, p(a.basis))
    lower = 1.0 if t.unital else 0.0
    return t.with_brackets(norm=(lower, p.norm_upper))


def defect(l, x, y):
    """``L(xy) - L(x) L(y)``."""
    x = l.domain.check_member(x, "x")
    y = l.domain.check_member(y, "y")
    return l.apply(x @ y) - l.apply(x) @ l.apply(y)


def defect_tensor(l):
    """``D[i, j] = L^v(e_i, e_j)`` for all pairs of basis elements."""
    g = l.domain.structure_constants
    prod_images = np.einsum("ijr,rab->ijab", g, l.images)
    return prod_images - np.einsum("iab,jbc->ijac", l.images, l.images)


def defect_upper(l):
    """``sum_{i,j} ||e_i||_1 ||e_j||_1 ||L^v(e_i, e_j)||``, a certified bound on ``||L^v||``."""
    w = l.domain.trace_norms
    d = defect_tensor(l)
    dn = np.linalg.norm(d, ord=2, axis=(2, 3))
    return float(np.einsum("i,j,ij->", w, w, dn))


def _kappa_upper(l, images=None):
    imgs = l.images if images is None else images
    return float(np.sum(l.domain.trace_norms * np.linalg.norm(imgs, ord=2, axis=(1, 2))))


def _shift_upper(l):
    """``|c| + kappa(L - c id_A)`` with ``c`` the average diagonal coordinate."""
    a = l.domain
    if l.target_dim != a.ambient_dim:
        return INF
    c = np.mean(np.einsum("dij,dij->d", a.basis.conj(), l.images))
    return abs(c) + _kappa_upper(l, l.images - c * a.basis)


def _factorization_parts(l):
    """Choi-matrix factorisation of ``L o phi`` on the abstract block model."""
    a = l.domain
    model = a.block_model
    n = l.target_dim
    sizes = model.sizes
    starts = np.cumsum([0] + list(sizes))
    m = int(starts[-1])
    units = model.matrix_units()
    mats = np.array([e for *_, e in units])
    imgs = l.apply(mats)
    choi = np.zeros((m, n, m, n), dtype=complex)
    for (k, i, j, _), img in zip(units, imgs):
        choi[starts[k] + i, :, starts[k] + j, :] = img
    u, s, vh = np.linalg.svd(choi.reshape(m * n, m * n))
    if s[0] == 0.0:
        return None
    r = int(np.sum(s > s[0] * 1e-14))
    tail = float(m * m * s[r]) if r < len(s) else 0.0
    root = np.sqrt(s[:r])
    rows = (u[:, :r] * root).reshape(m, n, r)
    cols = (root[:, None] * vh[:r]).reshape(r, m, n)
    return rows, cols, tail


def _haagerup_value(rows, cols, x, x_inv):
    left = np.einsum("iar,rs,ibs->ab", rows, x, rows.conj())
    right = np.einsum("ria,rs,sib->ab", cols.conj(), x_inv, cols)
    return np.sqrt(np.linalg.eigvalsh(0.5 * (left + left.conj().T))[-1]
                   * np.linalg.eigvalsh(0.5 * (right + right.conj().T))[-1])


def _factorization_upper(l, max_opt_rank=6):
    """
    Bound ``||L||`` through a factorisation ``L(phi(y)) = R (y (x) I) C``.

    ``phi`` maps the abstract block-diagonal model onto ``A``; then
    ``||L|| <= kappa(S0) ||R|| ||C||`` with ``||R||^2 = ||sum R_i X R_i*||``
    and ``||C||^2 = ||sum C_j* X^-1 C_j||`` for any positive ``X``.  ``X``
    is optimised numerically for small Choi rank; any ``X`` is valid, so
    the optimiser only affects tightness.
    """
    model = l.domain.block_model
    if model is None:
        return INF
    parts = _factorization_parts(l)
    if parts is None:
        return 0.0
    rows, cols, tail = parts
    r = rows.shape[2]
    eye = np.eye(r)
    best = _haagerup_value(rows, cols, eye, eye)
    if 1 < r <= max_opt_rank:
        iu = np.triu_indices(r, 1)

        def herm(theta):
            h = np.diag(theta[:r]).astype(complex)
            k = len(iu[0])
            h[iu] = theta[r:r + k] + 1j * theta[r + k:]
            h[(iu[1], iu[0])] = np.conj(h[iu])
            return h

        def objective(theta):
            h = herm(theta)
            return float(np.log(_haagerup_value(rows, cols, expm(h), expm(-h))))

        res = minimize(objective, np.zeros(r * r), method="BFGS", options={"maxiter": 200})
        h = herm(res.x)
        best = min(best, _haagerup_value(rows, cols, expm(h), expm(-h)))
    return float(model.kappa * (best + tail))


def norm_upper(l):
    """Best certified upper bound on ``||L||`` available without sampling."""
    return float(min(l.norm_bracket[1], _kappa_upper(l), _shift_upper(l), _factorization_upper(l)))


def _unit_stack(a, seed, samples):
    return np.array(sample_unit_ball(a, seed, samples))


def _normalise(x):
    return x / np.linalg.norm(x, ord=2, axis=(1, 2))[:, None, None]


def _ascent_map(l, seed, samples, steps):
    a = l.domain
    x = _unit_stack(a, seed, samples)
    best_val = np.full(len(x), -1.0)
    best_x = x.copy()
    for step in range(steps + 1):
        y = l.apply(x)
        u, s, vh = np.linalg.svd(y)
        vals = s[:, 0]
        better = vals > best_val
        best_val[better] = vals[better]
        best_x[better] = x[better]
        if step == steps:
            break
        g = np.einsum("si,sj->sij", u[:, :, 0], vh[:, 0, :])
        direction = a.combine(l.adjoint_coefficients(g))
        dn = np.linalg.norm(direction, ord=2, axis=(1, 2))
        dn[dn == 0] = 1.0
        eta = 0.5 * 0.95 ** step
        x = _normalise(a.project(x + eta * direction / dn[:, None, None]))
    k = int(np.argmax(best_val))
    w = best_x[k] / np.linalg.norm(best_x[k], 2)
    return float(np.linalg.norm(l.apply(w), 2)), w


def _ascent_defect(l, seed, samples, steps):
    a = l.domain
    x = _unit_stack(a, seed, samples)
    y = x[np.random.default_rng(seed + 1).permutation(len(x))]

    def value(x, y):
        d = l.apply(x @ y) - l.apply(x) @ l.apply(y)
        u, s, vh = np.linalg.svd(d)
        return s[:, 0], np.einsum("si,sj->sij", u[:, :, 0], vh[:, 0, :])

    best_val = np.full(len(x), -1.0)
    best = (x.copy(), y.copy())
    for step in range(steps + 1):
        vals, g = value(x, y)
        better = vals > best_val
        best_val[better] = vals[better]
        best[0][better], best[1][better] = x[better], y[better]
        if step == steps:
            break
        eta = 0.5 * 0.95 ** step
        z = a.combine(l.adjoint_coefficients(g))
        ly = l.apply(y)
        if step % 2 == 0:
            direction = a.project(z @ np.conj(np.swapaxes(y, 1, 2))) - a.combine(
                l.adjoint_coefficients(g @ np.conj(np.swapaxes(ly, 1, 2))))
            dn = np.linalg.norm(direction, ord=2, axis=(1, 2))
            dn[dn == 0] = 1.0
            x = _normalise(a.project(x + eta * direction / dn[:, None, None]))
        else:
            lx = l.apply(x)
            direction = a.project(np.conj(np.swapaxes(x, 1, 2)) @ z) - a.combine(
                l.adjoint_coefficients(np.conj(np.swapaxes(lx, 1, 2)) @ g))
            dn = np.linalg.norm(direction, ord=2, axis=(1, 2))
            dn[dn == 0] = 1.0
            y = _normalise(a.project(y + eta * direction / dn[:, None, None]))
    k = int(np.argmax(best_val))
    wx = best[0][k] / np.linalg.norm(best[0][k], 2)
    wy = best[1][k] / np.linalg.norm(best[1][k], 2)
    val = float(np.linalg.norm(l.apply(wx @ wy) - l.apply(wx) @ l.apply(wy), 2))
    return val, (wx, wy)


def map_norm(l, seed=0, samples=512, steps=50):
    """
    Bracket ``||L|| = sup_{||x|| <= 1, x in A} ||L(x)||``.

    Lower end: best value of a projected ascent started from
    :func:`nearincl.algebra.sample_unit_ball`; the maximiser is returned as
    ``witness``.  Upper end: :func:`norm_upper`.
    """
    lower, witness = _ascent_map(l, seed, samples, steps)
    upper = norm_upper(l)
    lower = max(lower, l.norm_bracket[0])
    return Bracket(min(lower, upper), upper, witness)


def defect_norm(l, seed=0, samples=128, steps=25):
    """
    Bracket ``||L^v|| = sup ||L(xy) - L(x)L(y)||`` over pairs in the unit ball.

    The upper end is the least of :func:`defect_upper`, any structural
    bound stored on the map and ``||L|| + ||L||^2``; the lower end is an alternating ascent over pairs,
    with the maximising pair as ``witness``.
    """
    lower, witness = _ascent_defect(l, seed, samples, steps)
    nu = norm_upper(l)
    upper = min(defect_upper(l), l.defect_bracket[1], nu + nu * nu)
    lower = max(lower, l.defect_bracket[0])
    return Bracket(min(lower, upper), upper, witness)


def psi_apply(f, g, t):
    """
    ``sum_k f(a_k) g(b_k)`` for ``t = sum_k a_k (x) b_k``.

    The finite sum is the whole story in finite dimension; the norm obeys
    ``||psi|| <= ||f|| ||g|| ||t||``.
    """
    for m in (f, g):
        if m.domain is not t.algebra and (
            m.domain.dim != t.algebra.dim or np.max(np.abs(m.domain.basis - t.algebra.basis)) > 1e-14
        ):
            raise InvalidInputError("maps and tensor live on different algebras")
    if f.target_dim != g.target_dim:
        raise InvalidInputError("maps have different target sizes")
    return np.einsum("kab,kbc->ac", f.apply(t.left), g.apply(t.right))
