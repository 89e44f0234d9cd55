"""
Finite-dimensional unital subalgebras of the N x N complex matrices.

An :class:`FdAlgebra` stores a Frobenius-orthonormal basis.  Every
subalgebra of ``M_N`` is automatically norm and weak-* closed, so no
closedness flag is carried.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidInputError
from .linalg import as_matrix, inverse, matrix_from_json, matrix_to_json

__all__ = [
    "BlockModel",
    "FdAlgebra",
    "DistanceResult",
    "block_algebra",
    "pattern_algebra",
    "full_matrix_algebra",
    "generate_closure",
    "distance_to",
    "distance_bracket",
    "sample_unit_ball",
    "MEMBERSHIP_TOL",
]

#: Frobenius distance below which a matrix counts as a member of the span.
MEMBERSHIP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BlockModel:
    """
    Semisimple model ``S0 (M_{n_1} (x) I_{m_1} + ... + M_{n_K} (x) I_{m_K}) S0^-1``.

    Blocks sit consecutively along the diagonal; block ``k`` occupies
    ``n_k * m_k`` rows.  ``similarity`` is ``S0`` (``None`` means identity).
    """

    sizes: tuple
    multiplicities: tuple
    similarity: object = None

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        mults = tuple(int(m) for m in self.multiplicities)
        if not sizes:
            raise InvalidInputError("block model needs at least one block")
        if len(mults) != len(sizes):
            raise InvalidInputError("one multiplicity per block is required")
        if min(sizes) < 1 or min(mults) < 1:
            raise InvalidInputError("block sizes and multiplicities must be positive")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "multiplicities", mults)
        if self.similarity is not None:
            s = as_matrix(self.similarity, square=True, name="similarity")
            if s.shape[0] != self.ambient_dim:
                raise InvalidInputError("similarity does not match the block model dimension")
            object.__setattr__(self, "similarity", s)

    @property
    def ambient_dim(self):
        return sum(n * m for n, m in zip(self.sizes, self.multiplicities))

    @property
    def model_dim(self):
        """Dimension of the abstract block-diagonal C*-algebra (sum of n_k)."""
        return sum(self.sizes)

    @property
    def offsets(self):
        out, pos = [], 0
        for n, m in zip(self.sizes, self.multiplicities):
            out.append(pos)
            pos += n * m
        return out

    @cached_property
    def similarity_inverse(self):
        return None if self.similarity is None else inverse(self.similarity)

    @cached_property
    def kappa(self):
        """Condition number of ``S0`` (1 when no similarity is recorded)."""
        if self.similarity is None:
            return 1.0
        s = np.linalg.svd(self.similarity, compute_uv=False)
        return float(s[0] / s[-1])

    def conjugate(self, x):
        if self.similarity is None:
            return x
        return self.similarity @ x @ self.similarity_inverse

    def embed(self, k, y):
        """Image of ``y`` in ``M_{n_k}`` placed in block ``k`` (zero elsewhere)."""
        n, m = self.sizes[k], self.multiplicities[k]
        out = np.zeros((self.ambient_dim,) * 2, dtype=complex)
        o = self.offsets[k]
        out[o:o + n * m, o:o + n * m] = np.kron(np.asarray(y, dtype=complex), np.eye(m))
        return self.conjugate(out)

    def embed_model(self, y):
        """Image of a block-diagonal ``y`` in ``M_{sum n_k}`` (off-block entries ignored)."""
        out = np.zeros((self.ambient_dim,) * 2, dtype=complex)
        pos = 0
        for k, n in enumerate(self.sizes):
            out += self.embed(k, y[pos:pos + n, pos:pos + n])
            pos += n
        return out

    def matrix_units(self):
        """List of ``(k, i, j, E)`` with ``E`` the embedded matrix unit ``e_ij`` of block ``k``."""
        units = []
        for k, n in enumerate(self.sizes):
            for i in range(n):
                for j in range(n):
                    e = np.zeros((n, n))
                    e[i, j] = 1.0
                    units.append((k, i, j, self.embed(k, e)))
        return units

    def central_projections(self):
        return [self.embed(k, np.eye(n)) for k, n in enumerate(self.sizes)]

    def to_json(self):
        return {
            "block_model": list(self.sizes),
            "block_multiplicities": list(self.multiplicities),
            "block_similarity": None if self.similarity is None else matrix_to_json(self.similarity),
        }


class FdAlgebra:
    """
    Unital subalgebra of ``M_N`` given by a Frobenius-orthonormal basis.

    Parameters
    ----------
    basis : (d, N, N) array_like
        Frobenius-orthonormal matrices spanning the algebra.
    block_model : BlockModel, optional
        Semisimple model of the algebra, when known.
    check : bool
        Validate orthonormality, unit membership and multiplicative closure.
    """

    def __init__(self, basis, block_model=None, check=True):
        b = np.array(basis, dtype=complex)
        if b.ndim != 3 or b.shape[1] != b.shape[2] or b.shape[0] == 0:
            raise InvalidInputError(f"basis must have shape (d, N, N), got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise InvalidInputError("basis has non-finite entries")
        b.setflags(write=False)
        self.basis = b
        self.block_model = block_model
        if block_model is not None and block_model.ambient_dim != self.ambient_dim:
            raise InvalidInputError("block model dimension differs from the basis dimension")
        if check:
            self.validate()

    @classmethod
    def from_spanning(cls, mats, block_model=None, check=True, tol=1e-12):
        """Orthonormalise an arbitrary spanning family (rank-revealing SVD)."""
        m = np.array(mats, dtype=complex)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise InvalidInputError(f"spanning family must have shape (k, N, N), got {m.shape}")
        n = m.shape[1]
        _, s, vh = np.linalg.svd(m.reshape(m.shape[0], -1), full_matrices=False)
        keep = s > tol * max(s[0], 1.0)
        return cls(vh[keep].reshape(-1, n, n), block_model=block_model, check=check)

    # -- basic shape ------------------------------------------------------
    @property
    def ambient_dim(self):
        return self.basis.shape[1]

    @property
    def dim(self):
        return self.basis.shape[0]

    def __len__(self):
        return self.dim

    def __repr__(self):
        bm = "" if self.block_model is None else f", blocks={list(self.block_model.sizes)}"
        return f"FdAlgebra(ambient_dim={self.ambient_dim}, dim={self.dim}{bm})"

    @property
    def unit(self):
        return np.eye(self.ambient_dim, dtype=complex)

    # -- coordinates ------------------------------------------------------
    def coefficients(self, x):
        """Frobenius coordinates ``<e_i, x>`` of ``x`` (broadcasts over leading axes)."""
        return np.einsum("dij,...ij->...d", self.basis.conj(), np.asarray(x, dtype=complex))

    def combine(self, c):
        return np.einsum("...d,dij->...ij", np.asarray(c, dtype=complex), self.basis)

    def project(self, x):
        """Frobenius-orthogonal projection onto the span."""
        return self.combine(self.coefficients(x))

    def span_residual(self, x):
        """Frobenius distance from ``x`` to the span (broadcasts)."""
        x = np.asarray(x, dtype=complex)
        r = x - self.project(x)
        return np.sqrt(np.sum(np.abs(r) ** 2, axis=(-2, -1)))

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return bool(np.all(self.span_residual(x) <= tol))

    def check_member(self, x, name="element", tol=MEMBERSHIP_TOL):
        x = as_matrix(x, square=True, name=name)
        if x.shape[0] != self.ambient_dim:
            raise InvalidInputError(f"{name} has dimension {x.shape[0]}, algebra lives in M_{self.ambient_dim}")
        r = float(self.span_residual(x))
        if r > tol * max(1.0, np.linalg.norm(x)):
            raise InvalidInputError(f"{name} is not in the algebra (Frobenius residual {r:.3e})")
        return x

    # -- cached structure -------------------------------------------------
    @cached_property
    def trace_norms(self):
        """``||e_i||_1``; these bound the coordinate functionals on the operator-norm ball."""
        return np.linalg.svd(self.basis, compute_uv=False).sum(axis=1)

    @cached_property
    def operator_norms(self):
        return np.linalg.svd(self.basis, compute_uv=False)[:, 0]

    @cached_property
    def kappa1(self):
        """Certified bound on the l1 norm of coordinates of unit-ball elements."""
        return float(self.trace_norms.sum())

    @cached_property
    def structure_constants(self):
        """``G[i, j, r] = <e_r, e_i e_j>``."""
        prod = np.einsum("iab,jbc->ijac", self.basis, self.basis)
        return self.coefficients(prod)

    @cached_property
    def unit_coefficients(self):
        return self.coefficients(self.unit)

    @cached_property
    def is_self_adjoint(self):
        adj = np.conj(np.swapaxes(self.basis, 1, 2))
        return bool(np.all(self.span_residual(adj) <= 1e-9))

    # -- validation -------------------------------------------------------
    def validate(self, tol=MEMBERSHIP_TOL):
        d = self.dim
        gram = np.einsum("iab,jab->ij", self.basis.conj(), self.basis)
        if np.max(np.abs(gram - np.eye(d))) > 1e-9:
            raise InvalidInputError("basis is not Frobenius-orthonormal")
        if not self.contains(self.unit, tol):
            raise InvalidInputError("identity matrix is not in the span (algebra must be unital)")
        prods = np.einsum("iab,jbc->ijac", self.basis, self.basis)
        worst = float(np.max(self.span_residual(prods)))
        if worst > tol:
            raise InvalidInputError(f"span is not closed under multiplication (residual {worst:.3e})")

    # -- serialisation ----------------------------------------------------
    def to_json(self):
        out = {
            "ambient_dim": self.ambient_dim,
            "basis": [matrix_to_json(e) for e in self.basis],
            "block_model": None,
        }
        if self.block_model is not None:
            out.update(self.block_model.to_json())
        return out

    @classmethod
    def from_json(cls, obj):
        basis = np.array([matrix_from_json(m) for m in obj["basis"]])
        if basis.shape[1] != int(obj["ambient_dim"]):
            raise InvalidInputError("basis matrices do not match ambient_dim")
        model = None
        if obj.get("block_model"):
            sim = obj.get("block_similarity")
            model = BlockModel(
                tuple(obj["block_model"]),
                tuple(obj.get("block_multiplicities") or [1] * len(obj["block_model"])),
                None if sim is None else matrix_from_json(sim),
            )
        return cls(basis, block_model=model, check=True)


def block_algebra(sizes, multiplicities=None, similarity=None, ambient_dim=None):
    """
    The algebra ``S0 (M_{n_1} (x) I_{m_1} + ...) S0^-1``.

    When ``ambient_dim`` exceeds ``sum n_k m_k`` a scalar block of the
    missing size is appended, so the result is always unital in ``M_N``.
    """
    sizes = [int(n) for n in sizes]
    mults = [1] * len(sizes) if multiplicities is None else [int(m) for m in multiplicities]
    used = sum(n * m for n, m in zip(sizes, mults))
    if ambient_dim is not None:
        if ambient_dim < used:
            raise InvalidInputError(f"blocks need dimension {used} > ambient_dim {ambient_dim}")
        if ambient_dim > used:
            sizes.append(1)
            mults.append(ambient_dim - used)
    model = BlockModel(tuple(sizes), tuple(mults), similarity)
    units = np.array([e for *_, e in model.matrix_units()])
    if similarity is None:
        norms = np.sqrt(np.sum(np.abs(units) ** 2, axis=(1, 2)))
        return FdAlgebra(units / norms[:, None, None], block_model=model, check=False)
    return FdAlgebra.from_spanning(units, block_model=model, check=model.ambient_dim <= 8)


def pattern_algebra(partition, pattern, with_model=False):
    """
    Matrices supported on the blocks ``(k, l)`` listed in ``pattern``.

    ``partition`` gives the block sizes along the diagonal.  The pattern must
    contain every diagonal block and be transitive, otherwise the span is not
    a unital algebra.
    """
    partition = [int(p) for p in partition]
    pattern = {(int(k), int(l)) for k, l in pattern}
    nb = len(partition)
    if any(not (0 <= k < nb and 0 <= l < nb) for k, l in pattern):
        raise InvalidInputError("pattern refers to a block outside the partition")
    if any((k, k) not in pattern for k in range(nb)):
        raise InvalidInputError("pattern must contain every diagonal block")
    for k, l in pattern:
        for l2, m in pattern:
            if l == l2 and (k, m) not in pattern:
                raise InvalidInputError("pattern is not transitive, span is not an algebra")
    n = sum(partition)
    owner = np.repeat(np.arange(nb), partition)
    basis = []
    for a in range(n):
        for b in range(n):
            if (owner[a], owner[b]) in pattern:
                e = np.zeros((n, n), dtype=complex)
                e[a, b] = 1.0
                basis.append(e)
    model = None
    if with_model and all(k == l for k, l in pattern):
        model = BlockModel(tuple(partition), (1,) * nb)
    return FdAlgebra(np.array(basis), block_model=model, check=False)


def full_matrix_algebra(n):
    return block_algebra([n])


def _orthonormal_rows(vecs, tol):
    if vecs.shape[0] == 0:
        return vecs
    _, s, vh = np.linalg.svd(vecs, full_matrices=False)
    return vh[s > tol]


def generate_closure(ambient_dim, generators, tol=MEMBERSHIP_TOL):
    """
    Smallest unital subalgebra of ``M_{ambient_dim}`` containing ``generators``.

    The span of all words in the generators equals the smallest subspace
    that contains the identity and is invariant under left multiplication by
    each generator; it is grown Krylov-style until it stops changing.
    """
    n = int(ambient_dim)
    gens = []
    for g in generators:
        g = as_matrix(g, square=True, name="generator")
        if g.shape[0] != n:
            raise InvalidInputError(f"generator of size {g.shape[0]} in M_{n}")
        gens.append(g)
    q = (np.eye(n, dtype=complex) / np.sqrt(n)).reshape(1, -1)
    if gens:
        g_on = _orthonormal_rows(np.array(gens).reshape(len(gens), -1), tol).reshape(-1, n, n)
    else:
        g_on = np.zeros((0, n, n), dtype=complex)
    frontier = q.reshape(-1, n, n)
    while frontier.shape[0] and q.shape[0] < n * n and g_on.shape[0]:
        cand = np.einsum("gab,fbc->gfac", g_on, frontier).reshape(-1, n * n)
        for _ in range(2):
            cand = cand - (cand @ q.conj().T) @ q
        new = _orthonormal_rows(cand, tol)
        if new.shape[0]:
            new = new - (new @ q.conj().T) @ q
            new = _orthonormal_rows(new, tol)
        q = np.vstack([q, new])
        frontier = new.reshape(-1, n, n)
    return FdAlgebra(q.reshape(-1, n, n), check=False)


@dataclass(frozen=True)
class DistanceResult:
    """Certified bracket ``lower <= inf_y ||x - y|| <= upper`` with the best ``y`` found."""

    lower: float
    upper: float
    nearest: np.ndarray


def _descent(xn, target, c0, max_stages):
    """Smoothed spectral-norm minimisation over the coordinates of ``target``."""
    d = target.dim

    def unpack(theta):
        return theta[:d] + 1j * theta[d:]

    best_c = c0
    best = float(np.linalg.norm(xn - target.combine(c0), 2))
    grad_mat = None
    for mu in (1e-2, 1e-3, 1e-4, 1e-5, 1e-7)[:max_stages]:
        scale = mu * max(best, 1e-300)

        def fun(theta):
            c = unpack(theta)
            r = xn - target.combine(c)
            u, s, vh = np.linalg.svd(r)
            w = np.exp((s - s[0]) / scale)
            z = w.sum()
            p = w / z
            g = target.coefficients((u * p) @ vh)
            return s[0] + scale * np.log(z), -np.concatenate([g.real, g.imag])

        theta0 = np.concatenate([best_c.real, best_c.imag])
        res = minimize(fun, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 300, "gtol": 1e-13, "ftol": 1e-15})
        c = unpack(res.x)
        r = xn - target.combine(c)
        u, s, vh = np.linalg.svd(r)
        val = float(s[0])
        if val < best:
            best, best_c = val, c
            w = np.exp((s - s[0]) / scale)
            grad_mat = (u * (w / w.sum())) @ vh
    return best_c, best, grad_mat


def _dual_lower(x, r, target, extra):
    """Lower bound from trace-class functionals that annihilate ``target``."""
    u, s, vh = np.linalg.svd(r)
    cands = [np.outer(u[:, 0], vh[0])]
    cluster = s >= s[0] * (1 - 1e-6)
    if cluster.sum() > 1:
        cands.append((u[:, cluster]) @ vh[cluster])
    if extra is not None:
        cands.append(extra)
    best = 0.0
    for w in cands:
        w = w - target.project(w)
        tn = np.linalg.svd(w, compute_uv=False).sum()
        if tn > 0:
            best = max(best, float(np.real(np.vdot(w, x))) / tn)
    return best


def distance_bracket(x, target, refine=True, max_stages=5):
    """
    Bracket the operator-norm distance from ``x`` to the algebra ``target``.

    The upper endpoint is ``||x - y||`` for an explicit ``y`` in ``target``:
    first the Frobenius-orthogonal projection, then a smoothed first-order
    descent started from it.  The lower endpoint is ``Re <W, x> / ||W||_1``
    for trace-class ``W`` orthogonal to ``target`` (Hoelder duality).

    Returns
    -------
    DistanceResult
    """
    x = as_matrix(x, square=True, name="x")
    if x.shape[0] != target.ambient_dim:
        raise InvalidInputError(f"x is {x.shape[0]}x{x.shape[0]}, target lives in M_{target.ambient_dim}")
    scale = float(np.linalg.norm(x))
    if scale == 0.0:
        return DistanceResult(0.0, 0.0, np.zeros_like(x))
    xn = x / scale
    c0 = target.coefficients(xn)
    r0 = xn - target.combine(c0)
    up0 = float(np.linalg.norm(r0, 2))
    if up0 <= 1e-13:
        return DistanceResult(0.0, up0 * scale, target.combine(c0) * scale)
    best_c, best, grad_mat = c0, up0, None
    if refine and target.dim > 0:
        best_c, best, grad_mat = _descent(xn, target, c0, max_stages)
    r = xn - target.combine(best_c)
    lower = min(_dual_lower(xn, r, target, grad_mat), best)
    return DistanceResult(max(lower, 0.0) * scale, best * scale, target.combine(best_c) * scale)


def distance_to(x, target, refine=True):
    """Certified upper bound on ``inf_{y in target} ||x - y||`` (operator norm)."""
    return distance_bracket(x, target, refine=refine).upper


def _random_model_unitary(model, rng):
    blocks = []
    for n in model.sizes:
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        h = 0.5 * (g + g.conj().T)
        lam, v = np.linalg.eigh(h)
        blocks.append((v * np.exp(1j * lam)) @ v.conj().T)
    return sum(model.embed(k, b) for k, b in enumerate(blocks))


def sample_unit_ball(a, seed, count):
    """
    Deterministic sample of the operator-norm unit ball of ``a``.

    The sample holds the rescaled basis, unitaries ``exp(iH)`` for Hermitian
    members ``H`` when ``a`` is closed under adjoints (conjugated model
    unitaries otherwise, rescaled), and normalised Gaussian combinations.
    Every element has operator norm one up to rounding.
    """
    count = int(count)
    if count < 1:
        raise InvalidInputError("count must be positive")
    rng = np.random.default_rng(seed)
    d, n = a.dim, a.ambient_dim
    out = []
    k_basis = min(d, max(1, count // 4))
    for e in a.basis[:k_basis]:
        out.append(e / np.linalg.norm(e, 2))
    rest = count - len(out)
    if a.is_self_adjoint:
        k_unit = (rest + 1) // 2
        for _ in range(k_unit):
            z = a.combine(rng.standard_normal(d) + 1j * rng.standard_normal(d))
            h = 0.5 * (z + z.conj().T)
            lam, v = np.linalg.eigh(h)
            t = np.pi / max(np.max(np.abs(lam)), 1e-12) * rng.uniform(0.1, 1.0)
            out.append((v * np.exp(1j * t * lam)) @ v.conj().T)
    elif a.block_model is not None:
        for _ in range(rest // 2):
            y = _random_model_unitary(a.block_model, rng)
            y = a.project(y)
            out.append(y / np.linalg.norm(y, 2))
    while len(out) < count:
        x = a.combine(rng.standard_normal(d) + 1j * rng.standard_normal(d))
        out.append(x / np.linalg.norm(x, 2))
    return [np.array(x) for x in out[:count]]
