"""
Intertwiners from virtual diagonals and the near-inclusion pipeline.

``intertwiner`` builds ``S = sum_k pi1(a_k) pi2(b_k)`` for two nearby
homomorphisms.  ``near_inclusion_pipeline`` runs the full chain for an
algebra ``A`` nearly inside ``N``: compress by ``P``, correct to a
homomorphism into ``N``, build ``S`` against ``id_A`` and record every
inequality in a :class:`Certificate`.  ``unitarize`` takes the unitary
part of ``S`` in the self-adjoint case.
"""

from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np

from .algebra import distance_to, generate_closure
from .diagonal import projective_norm_upper_bound
from .errors import (
    InvalidInputError,
    NearInclusionError,
    PremiseNotCertifiedError,
    StageError,
    ThresholdError,
)
from .johnson import PREMISE_RTOL, JohnsonBudget, correct_to_homomorphism, delta_threshold
from .linalg import inverse, matrix_from_json, matrix_to_json, operator_norm, polar_decompose
from .maps import compress, defect_upper, identity_map, norm_upper, psi_apply

__all__ = [
    "digamma",
    "corollary_bound",
    "IntertwinerDiagnostics",
    "intertwiner",
    "Certificate",
    "EXIT_CODES",
    "near_inclusion_pipeline",
    "unitarize",
    "conjugation_residual",
]

HOM_TOL = 1e-9
RESIDUAL_TOL = 1e-8
BOUND_SLACK = 1e-9

EXIT_CODES = {"pass": 0, "threshold": 2, "premise-not-certified": 3, "numerical-failure": 4}


def digamma(x, y):
    """
    ``(1 + x)(y + 4(x+2) y^2 + 8(x+2) x^2 y^3)`` for ``x, y >= 1``.

    Examples
    --------
    >>> digamma(1, 1)
    74
    >>> digamma(2, 1)
    435
    """
    if not (x >= 1 and y >= 1):
        raise InvalidInputError(f"digamma needs x, y >= 1, got ({x}, {y})")
    return (1 + x) * (y + 4 * (x + 2) * y * y + 8 * (x + 2) * x * x * y ** 3)


def corollary_bound(p_norm, gamma):
    """``sqrt(2) F gamma / sqrt(1 + sqrt(1 - F^2 gamma^2))`` with ``F = digamma(p_norm, 1)``."""
    f = digamma(p_norm, 1)
    q = f * gamma
    if q >= 1:
        raise InvalidInputError(f"corollary bound needs digamma * gamma < 1, got {q}")
    return math.sqrt(2) * q / math.sqrt(1 + math.sqrt(1 - q * q))


def conjugation_residual(s, a, n, s_inv=None):
    """``max_i dist(S e_i S^-1, N) / ||e_i||`` over the basis of ``a``."""
    s_inv = inverse(s) if s_inv is None else s_inv
    conj = s @ a.basis @ s_inv
    return float(max(distance_to(c, n, refine=False) / on for c, on in zip(conj, a.operator_norms)))


@dataclass
class IntertwinerDiagnostics:
    intertwining_residual: float
    sigma_min: float
    s_minus_identity: float
    difference_upper: float
    norm_uppers: tuple
    u_norm_upper: float
    similarity_bound: float
    invertibility_margin: float
    membership_residual: float
    premise_certified: bool

    def to_json(self):
        out = dict(self.__dict__)
        out["norm_uppers"] = list(self.norm_uppers)
        return out


def _same_algebra(a, b):
    return a is b or (a.dim == b.dim and np.max(np.abs(a.basis - b.basis)) <= 1e-14)


def intertwiner(pi1, pi2, u, strict=False, difference_upper=None, membership=True):
    """
    ``S = Psi_{pi1, pi2}(u)`` with ``pi1(a) S = S pi2(a)``.

    Parameters
    ----------
    pi1, pi2 : AlgebraMap
        Unital homomorphisms on the domain of ``u``.
    u : TensorElement
        Virtual diagonal.
    strict : bool
        Raise :class:`PremiseNotCertifiedError` when the premise
        ``||u|| ||pi1 - pi2|| min(||pi1||, ||pi2||) < 1`` is not certified.
        Otherwise a warning is issued and the construction is returned.
    difference_upper : float, optional
        Independently known upper bound on ``||pi1 - pi2||``; intersected
        with the computed one.
    membership : bool
        Compute the distance of ``S`` to the algebra generated by both images.

    Returns
    -------
    s : ndarray
    diagnostics : IntertwinerDiagnostics
    """
    if not (_same_algebra(pi1.domain, u.algebra) and _same_algebra(pi2.domain, u.algebra)):
        raise InvalidInputError("maps and diagonal live on different algebras")
    for name, m in (("pi1", pi1), ("pi2", pi2)):
        if not m.unital:
            raise InvalidInputError(f"{name} is not unital")
        dv = min(m.defect_bracket[1], defect_upper(m))
        if dv > HOM_TOL:
            raise InvalidInputError(f"{name} is not a homomorphism (defect up to {dv:.2e})")
    n1, n2 = norm_upper(pi1), norm_upper(pi2)
    diff = norm_upper(pi1 - pi2)
    if difference_upper is not None:
        diff = min(diff, float(difference_upper))
    un = max(1.0, projective_norm_upper_bound(u))
    bound = un * diff * min(n1, n2)
    s = psi_apply(pi1, pi2, u)
    a = pi1.domain
    lhs = np.einsum("iab,bc->iac", pi1.images, s) - np.einsum("ab,ibc->iac", s, pi2.images)
    resid = float(np.max(np.linalg.norm(lhs, ord=2, axis=(1, 2)) / a.operator_norms))
    sv = np.linalg.svd(s, compute_uv=False)
    member = 0.0
    if membership:
        closure = generate_closure(s.shape[0], list(pi1.images) + list(pi2.images))
        member = distance_to(s, closure, refine=False)
    certified = bound < 1
    diag = IntertwinerDiagnostics(
        intertwining_residual=resid,
        sigma_min=float(sv[-1]),
        s_minus_identity=operator_norm(s - np.eye(s.shape[0])),
        difference_upper=float(diff),
        norm_uppers=(float(n1), float(n2)),
        u_norm_upper=float(un),
        similarity_bound=float(bound),
        invertibility_margin=float(1 - bound),
        membership_residual=float(member),
        premise_certified=bool(certified),
    )
    if not certified:
        msg = f"premise not certified: ||u|| ||pi1 - pi2|| min ||pi_i|| <= {bound:.3e} is not below 1"
        if strict:
            raise PremiseNotCertifiedError(msg, bracket=(0.0, diff), payload=(s, diag))
        warnings.warn(msg, stacklevel=2)
    return s, diag


@dataclass
class Certificate:
    """
    Record of one pipeline run.  The decision fields ``threshold_ok``,
    ``bound_satisfied`` and ``outcome`` are pure functions of the stored
    numbers (see :meth:`decisions`).
    """

    scenario_id: str
    gamma_upper: float
    p_norm_upper: float
    u_norm_upper: float
    digamma_value: float
    threshold_ok: bool
    epsilon: float = None
    delta: float = None
    similarity: np.ndarray = None
    s_minus_identity: float = None
    conjugation_residual: float = None
    membership_residual: float = None
    bound_satisfied: bool = False
    premise_certified: bool = True
    outcome: str = "numerical-failure"
    unitary: dict = None
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @staticmethod
    def threshold_decision(gamma_upper, digamma_value):
        return bool(gamma_upper < 1.0 / digamma_value)

    @staticmethod
    def bound_decision(s_minus_identity, digamma_value, gamma_upper):
        if s_minus_identity is None:
            return False
        return bool(s_minus_identity <= digamma_value * gamma_upper + BOUND_SLACK)

    @staticmethod
    def unitary_decision(unitary):
        if unitary is None:
            return True
        return bool(
            unitary["unitarity_residual"] <= 1e-10
            and unitary["conjugation_residual"] <= RESIDUAL_TOL
            and unitary["u_minus_identity"] <= unitary["corollary_bound"] + BOUND_SLACK
        )

    def decisions(self):
        """Recompute the decision fields from the stored numbers alone."""
        threshold_ok = self.threshold_decision(self.gamma_upper, self.digamma_value)
        bound_ok = self.bound_decision(self.s_minus_identity, self.digamma_value, self.gamma_upper)
        unitary_ok = self.unitary_decision(self.unitary)
        if not threshold_ok:
            outcome = "threshold"
        elif not self.premise_certified:
            outcome = "premise-not-certified"
        elif (
            self.similarity is not None
            and bound_ok
            and unitary_ok
            and self.conjugation_residual <= RESIDUAL_TOL
            and self.membership_residual <= RESIDUAL_TOL
        ):
            outcome = "pass"
        else:
            outcome = "numerical-failure"
        out = {"threshold_ok": threshold_ok, "bound_satisfied": bound_ok, "outcome": outcome}
        if self.unitary is not None:
            out["unitary_bound_satisfied"] = unitary_ok
        return out

    def finalize(self):
        dec = self.decisions()
        self.threshold_ok = dec["threshold_ok"]
        self.bound_satisfied = dec["bound_satisfied"]
        self.outcome = dec["outcome"]
        if self.unitary is not None:
            self.unitary["bound_satisfied"] = dec["unitary_bound_satisfied"]
        return self

    @property
    def exit_code(self):
        return EXIT_CODES[self.outcome]

    @property
    def passed(self):
        return self.outcome == "pass"

    def to_json(self):
        out = {}
        for k, v in self.__dict__.items():
            if k == "similarity":
                v = None if v is None else matrix_to_json(v)
            elif k == "unitary" and v is not None:
                v = dict(v)
                v["matrix"] = matrix_to_json(v["matrix"])
            out[k] = v
        return out

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        if obj.get("similarity") is not None:
            obj["similarity"] = matrix_from_json(obj["similarity"])
        if obj.get("unitary") is not None:
            obj["unitary"] = dict(obj["unitary"])
            obj["unitary"]["matrix"] = matrix_from_json(obj["unitary"]["matrix"])
        return cls(**obj)


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except NearInclusionError as exc:
        if isinstance(exc, (StageError, ThresholdError)):
            raise
        raise StageError(name, exc) from exc
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise StageError(name, exc) from exc


def near_inclusion_pipeline(a, n, p, u, gamma_upper, seed=0, tol=1e-10, scenario_id="", strict=False):
    """
    Conjugate ``A`` into ``N`` by an invertible ``S`` near the identity.

    Follows the proof step by step: ``T = P|_A``; the analytic bounds
    ``||T - id_A|| <= (1+||P||) gamma`` and
    ``||T^v|| <= (2+||P||)(1+||P||) gamma`` are attached to ``T``;
    ``delta = (2+||P||)(1+||P||) gamma`` and
    ``epsilon = delta (4||u|| + 8 ||P||^2 ||u||^2)`` set the budget;
    ``pi`` is the corrected homomorphism into ``N`` and
    ``S = Psi_{pi, id_A}(u)``, so ``S a S^-1 = pi(a)``.

    Parameters
    ----------
    a, n : FdAlgebra
    p : ProjectionOnto
        Bounded projection onto ``n``.
    u : TensorElement
        Virtual diagonal of ``a``.
    gamma_upper : float
        Certified upper bound on the near-inclusion constant of ``a`` in ``n``.
    seed : int
        Kept for interface stability; the pipeline itself is deterministic.
    strict : bool
        Raise on an uncertified intertwiner premise instead of recording it.

    Returns
    -------
    Certificate

    Raises
    ------
    ThresholdError
        ``gamma_upper >= 1 / digamma(||P||, ||u||)``; ``payload`` holds the
        certificate with ``outcome = "threshold"``.
    StageError
        Any failure inside a stage, tagged with the stage name.
    """
    if a.ambient_dim != n.ambient_dim or p.range.ambient_dim != n.ambient_dim:
        raise InvalidInputError("algebras and projection must share the ambient dimension")
    gamma = float(gamma_upper)
    if not gamma >= 0:
        raise InvalidInputError("gamma_upper must be nonnegative")
    pn = max(1.0, float(p.norm_upper))
    un = max(1.0, projective_norm_upper_bound(u))
    f = digamma(pn, un)
    cert = Certificate(
        scenario_id=str(scenario_id),
        gamma_upper=gamma,
        p_norm_upper=pn,
        u_norm_upper=un,
        digamma_value=float(f),
        threshold_ok=Certificate.threshold_decision(gamma, f),
    )
    if not cert.threshold_ok:
        cert.finalize()
        margin = gamma * f - 1.0
        raise ThresholdError(f"gamma {gamma:.3e} >= 1/digamma = {1 / f:.3e}", margin, payload=cert)

    t = _stage("compress", compress, p, a)
    t = t.with_brackets(norm=(0.0, pn), defect=(0.0, (2 + pn) * (1 + pn) * gamma))
    ident = identity_map(a)
    t_id_upper = norm_upper(t - ident)
    cert.diagnostics["t_minus_id_upper"] = t_id_upper
    cert.diagnostics["t_minus_id_bound"] = (1 + pn) * gamma
    cert.diagnostics["t_defect_upper"] = defect_upper(t)
    cert.diagnostics["t_defect_bound"] = (2 + pn) * (1 + pn) * gamma

    delta = (2 + pn) * (1 + pn) * gamma
    epsilon = delta * (4 * un + 8 * pn * pn * un * un)
    dist_budget = epsilon + (1 + pn) * gamma
    cert.delta, cert.epsilon = delta, epsilon
    cert.diagnostics["distance_budget"] = dist_budget
    if not (epsilon < 1 and dist_budget < 1 / un):
        msg = f"epsilon {epsilon:.3e} or epsilon + (1+||P||) gamma = {dist_budget:.3e} too large"
        raise StageError("budget", InvalidInputError(msg))
    if epsilon > 0:
        budget = _stage("budget", delta_threshold, epsilon, pn, un)
    else:
        budget = JohnsonBudget(pn, un, 0.0, 0.0)
    pi = _stage("johnson", correct_to_homomorphism, t, u, budget, tol=tol, target=n)
    cert.trace = pi.trace.to_json()
    cert.diagnostics["pi_minus_t_upper"] = pi.distance_bracket.upper

    # ||pi - id_A|| <= ||pi - T|| + ||T - id_A|| <= epsilon + (1+||P||) gamma
    diff_bound = min(epsilon, pi.distance_bracket.upper) + min((1 + pn) * gamma, t_id_upper)
    try:
        s, diag = _stage("intertwiner", intertwiner, pi, ident, u, strict=True, difference_upper=diff_bound,
                         membership=False)
    except StageError as exc:
        if not isinstance(exc.cause, PremiseNotCertifiedError) or strict:
            raise
        s, diag = exc.cause.payload
        cert.premise_certified = False
    cert.diagnostics["intertwiner"] = diag.to_json()
    cert.similarity = s
    cert.s_minus_identity = diag.s_minus_identity
    s_inv = _stage("residuals", inverse, s)
    cert.conjugation_residual = conjugation_residual(s, a, n, s_inv)
    closure = generate_closure(a.ambient_dim, list(a.basis) + list(n.basis))
    cert.membership_residual = float(distance_to(s, closure, refine=False))
    return cert.finalize()


def unitarize(cert, a, n):
    """
    Replace ``S`` by the unitary factor ``U`` of its polar decomposition.

    Requires a self-adjoint ``a`` and a norm-one diagonal.  The returned
    certificate carries ``unitary`` with the residuals of ``U`` and the
    corollary bound; ``S`` is kept as is.
    """
    if not a.is_self_adjoint:
        raise InvalidInputError("unitarize needs an algebra closed under adjoints")
    if cert.similarity is None:
        raise InvalidInputError("certificate holds no similarity")
    if cert.u_norm_upper > 1 + PREMISE_RTOL:
        raise InvalidInputError("unitarize needs a diagonal of norm one")
    w, _ = polar_decompose(cert.similarity)
    eye = np.eye(w.shape[0])
    unitary = {
        "matrix": w,
        "unitarity_residual": float(np.max(np.abs(w.conj().T @ w - eye))),
        "conjugation_residual": conjugation_residual(w, a, n, w.conj().T),
        "u_minus_identity": operator_norm(w - eye),
        "corollary_bound": corollary_bound(cert.p_norm_upper, cert.gamma_upper),
        "bound_satisfied": False,
    }
    return replace(cert, unitary=unitary, diagnostics=dict(cert.diagnostics)).finalize()
