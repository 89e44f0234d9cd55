"""
Planted near-inclusion scenarios, constant estimation, reports and batch runs.

A scenario conjugates a block-diagonal model ``B`` by a planted ``S0`` with
``||S0 - I|| = strength`` and asks whether ``A = S0 B S0^-1`` can be moved
back into a container ``N`` that contains ``B``.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import json
import logging
import os
from pathlib import Path
import re

import numpy as np
from scipy.linalg import expm

from .algebra import (
    FdAlgebra,
    block_algebra,
    distance_bracket,
    distance_to,
    full_matrix_algebra,
    generate_closure,
    pattern_algebra,
    sample_unit_ball,
)
from .diagonal import TensorElement, projective_norm_upper_bound, transport, verify_diagonal, weyl_diagonal
from .errors import (
    InvalidInputError,
    NearInclusionError,
    PremiseNotCertifiedError,
    StageError,
    ThresholdError,
)
from .johnson import PREMISE_RTOL
from .linalg import inverse, matrix_from_json, matrix_to_json, operator_norm
from .maps import AlgebraMap, Bracket, frobenius_projection, norm_upper
from .similarity import (
    Certificate,
    conjugation_residual,
    corollary_bound,
    digamma,
    near_inclusion_pipeline,
    unitarize,
)

__all__ = [
    "CONTAINERS",
    "ScenarioParams",
    "PerturbationScenario",
    "generate_scenario",
    "estimate_gamma",
    "KKDistanceReport",
    "kk_distance",
    "run_scenario",
    "run_report",
    "verify_certificate",
    "parse_seeds",
    "parse_sweep",
    "bench",
    "BENCH_COLUMNS",
    "default_out_dir",
]

log = logging.getLogger(__name__)

CONTAINERS = ("full-matrix-algebra", "block-diagonal", "upper-block-triangular")
BENCH_COLUMNS = ["seed", "gamma_upper", "digamma", "epsilon", "s_minus_identity", "bound_slack", "outcome", "strength"]
OUT_ENV = "NEARINCL_OUT"


def default_out_dir():
    """Output directory from ``$NEARINCL_OUT``, else ``./nearincl-out``."""
    return Path(os.environ.get(OUT_ENV, "nearincl-out"))


@dataclass(frozen=True)
class ScenarioParams:
    """
    Parameters of a planted scenario.

    ``container_blocks`` is the diagonal partition of the container; by
    default each model block ``n_k m_k`` gets its own container block and
    the scalar fill one more.
    """

    block_sizes: tuple = (2,)
    ambient_dim: int = None
    multiplicities: tuple = None
    container: str = "block-diagonal"
    container_blocks: tuple = None
    strength: float = 0.0
    unitary: bool = False

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("block_sizes", "multiplicities", "container_blocks"):
            if d.get(k) is not None:
                d[k] = tuple(int(v) for v in d[k])
        return cls(**d)

    def to_json(self):
        return {
            "block_sizes": list(self.block_sizes),
            "ambient_dim": self.ambient_dim,
            "multiplicities": None if self.multiplicities is None else list(self.multiplicities),
            "container": self.container,
            "container_blocks": None if self.container_blocks is None else list(self.container_blocks),
            "strength": self.strength,
            "unitary": self.unitary,
        }


@dataclass
class PerturbationScenario:
    scenario_id: str
    seed: int
    params: ScenarioParams
    similarity: np.ndarray
    a: FdAlgebra
    n: FdAlgebra
    p: object
    u: TensorElement
    gamma_bracket: Bracket

    @property
    def ambient_dim(self):
        return self.a.ambient_dim

    @property
    def block_sizes(self):
        return list(self.params.block_sizes)

    @property
    def similarity_strength(self):
        return self.params.strength

    def to_json(self):
        return {
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "ambient_dim": self.ambient_dim,
            "block_sizes": self.block_sizes,
            "container": {"kind": self.params.container, "blocks": _container_partition(self.params)},
            "similarity_strength": self.similarity_strength,
            "params": self.params.to_json(),
            "similarity": matrix_to_json(self.similarity),
            "a": self.a.to_json(),
            "n": self.n.to_json(),
            "p": self.p.to_json(),
            "u": self.u.to_json(),
            "gamma_bracket": [self.gamma_bracket.lower, self.gamma_bracket.upper],
        }

    @classmethod
    def from_json(cls, obj):
        a = FdAlgebra.from_json(obj["a"])
        n = FdAlgebra.from_json(obj["n"])
        p = frobenius_projection(n)
        if abs(p.norm_upper - float(obj["p"]["norm_upper"])) > 0:
            raise InvalidInputError("stored projection norm does not match the container")
        u = TensorElement.from_json(obj["u"], a)
        lo, hi = obj["gamma_bracket"]
        return cls(
            scenario_id=obj["scenario_id"],
            seed=int(obj["seed"]),
            params=ScenarioParams.from_dict(obj["params"]),
            similarity=matrix_from_json(obj["similarity"]),
            a=a,
            n=n,
            p=p,
            u=u,
            gamma_bracket=Bracket(float(lo), float(hi)),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def _model_dims(params):
    mults = params.multiplicities or (1,) * len(params.block_sizes)
    if len(mults) != len(params.block_sizes):
        raise InvalidInputError("multiplicities and block_sizes differ in length")
    if any(n < 1 for n in params.block_sizes) or any(m < 1 for m in mults):
        raise InvalidInputError("block sizes and multiplicities must be positive")
    used = sum(n * m for n, m in zip(params.block_sizes, mults))
    total = used if params.ambient_dim is None else int(params.ambient_dim)
    if total < used:
        raise InvalidInputError(f"blocks need dimension {used} > ambient_dim {total}")
    return mults, used, total


def _container_partition(params):
    mults, used, total = _model_dims(params)
    if params.container_blocks is not None:
        return [int(b) for b in params.container_blocks]
    part = [n * m for n, m in zip(params.block_sizes, mults)]
    if total > used:
        part.append(total - used)
    return part


def _container(params):
    _, _, total = _model_dims(params)
    kind = params.container
    if kind not in CONTAINERS:
        raise InvalidInputError(f"container must be one of {CONTAINERS}, got {kind!r}")
    if kind == "full-matrix-algebra":
        return full_matrix_algebra(total)
    part = _container_partition(params)
    if sum(part) != total or any(b < 1 for b in part):
        raise InvalidInputError(f"container blocks {part} do not partition dimension {total}")
    nb = len(part)
    if kind == "block-diagonal":
        return pattern_algebra(part, [(k, k) for k in range(nb)], with_model=True)
    return pattern_algebra(part, [(k, l) for k in range(nb) for l in range(nb) if k <= l])


def _planted_similarity(n, strength, unitary, rng):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    if strength == 0:
        return np.eye(n, dtype=complex)
    if unitary:
        if strength >= 2:
            raise InvalidInputError("a unitary similarity has ||S0 - I|| < 2")
        h = 0.5 * (g + g.conj().T)
        top = float(np.max(np.abs(np.linalg.eigvalsh(h))))
        theta = 2 * np.arcsin(strength / 2) / top
        return expm(1j * theta * h)
    return np.eye(n) + strength * g / operator_norm(g)


def _scenario_id(seed, params):
    blocks = "x".join(str(b) for b in params.block_sizes)
    tag = "u" if params.unitary else "s"
    return f"seed{seed}-{params.container}-{blocks}-{tag}{params.strength:.3e}"


def generate_scenario(params, seed, gamma_samples=32):
    """
    Deterministic planted scenario.

    Parameters
    ----------
    params : ScenarioParams or dict
    seed : int

    Returns
    -------
    PerturbationScenario
    """
    if isinstance(params, dict):
        params = ScenarioParams.from_dict(params)
    if not params.strength >= 0:
        raise InvalidInputError("strength must be nonnegative")
    mults, _, total = _model_dims(params)
    n_alg = _container(params)
    model_u = weyl_diagonal(list(params.block_sizes), list(mults), ambient_dim=total)
    model = model_u.algebra
    if float(np.max(n_alg.span_residual(model.basis))) > 1e-12:
        raise InvalidInputError("container does not contain the block model; adjust container_blocks")
    rng = np.random.default_rng(seed)
    s0 = _planted_similarity(total, float(params.strength), params.unitary, rng)
    a = block_algebra(list(params.block_sizes), list(mults), similarity=s0, ambient_dim=total)
    u = transport(model_u, s0, a)
    check = verify_diagonal(u)
    if not check.passed:
        raise InvalidInputError(f"transported diagonal fails verification: {check}")
    p = frobenius_projection(n_alg)
    gamma = estimate_gamma(a, n_alg, seed, samples=gamma_samples, projection=p)
    return PerturbationScenario(_scenario_id(seed, params), int(seed), params, s0, a, n_alg, p, u, gamma)


def estimate_gamma(a, n, seed=0, samples=32, refine_top=3, projection=None):
    """
    Bracket the near-inclusion constant ``sup_{||x|| <= 1, x in a} dist(x, n)``.

    Upper end (certified): the smaller of ``sum_i ||e_i||_1 dist(e_i, n)``
    and a norm bound for ``(id - P)|_a`` with ``P`` the Frobenius
    projection onto ``n``.  Lower end: dual certificates at sampled unit-ball
    points, the ``refine_top`` most distant ones refined by descent.  The
    maximising sample is the ``witness``.
    """
    if a.ambient_dim != n.ambient_dim:
        raise InvalidInputError("algebras live in different matrix sizes")
    p = frobenius_projection(n) if projection is None else projection
    dists = [distance_bracket(e, n, refine=False).upper for e in a.basis]
    upper_basis = float(np.sum(a.trace_norms * np.array(dists)))
    comp = AlgebraMap(a, a.basis - p(a.basis))
    upper = min(upper_basis, norm_upper(comp))
    xs = sample_unit_ball(a, seed, samples)
    coarse = [distance_bracket(x, n, refine=False) for x in xs]
    order = np.argsort([-c.upper for c in coarse])
    best, witness = 0.0, None
    for rank, k in enumerate(order):
        r = distance_bracket(xs[k], n, refine=rank < refine_top)
        if r.lower > best:
            best, witness = r.lower, xs[k]
    return Bracket(float(min(best, upper)), float(upper), witness)


@dataclass(frozen=True)
class KKDistanceReport:
    one_sided_a_in_b: tuple
    one_sided_b_in_a: tuple
    symmetric: tuple

    def to_json(self):
        return {k: list(getattr(self, k)) for k in ("one_sided_a_in_b", "one_sided_b_in_a", "symmetric")}


def kk_distance(a, b, seed=0, samples=32):
    """Near-inclusion constants both ways and their maximum."""
    ab = tuple(estimate_gamma(a, b, seed, samples))
    ba = tuple(estimate_gamma(b, a, seed, samples))
    return KKDistanceReport(ab, ba, (max(ab[0], ba[0]), max(ab[1], ba[1])))


def _wants_unitary(scenario):
    return scenario.a.is_self_adjoint and scenario.n.is_self_adjoint


def run_scenario(scenario, tol=1e-10, unitary=None):
    """
    Run the pipeline on ``scenario`` and return a finalised certificate.

    Errors become certificate outcomes: threshold (2), premise not
    certified (3) and numerical failure (4).
    """
    try:
        cert = near_inclusion_pipeline(
            scenario.a, scenario.n, scenario.p, scenario.u, scenario.gamma_bracket.upper,
            seed=scenario.seed, tol=tol, scenario_id=scenario.scenario_id,
        )
    except ThresholdError as exc:
        cert = exc.payload
        cert.diagnostics["margin"] = exc.margin
        return cert
    except StageError as exc:
        pn = max(1.0, scenario.p.norm_upper)
        un = max(1.0, projective_norm_upper_bound(scenario.u))
        cert = Certificate(
            scenario_id=scenario.scenario_id,
            gamma_upper=float(scenario.gamma_bracket.upper),
            p_norm_upper=pn,
            u_norm_upper=un,
            digamma_value=float(digamma(pn, un)),
            threshold_ok=True,
            premise_certified=not isinstance(exc.cause, PremiseNotCertifiedError),
            diagnostics={"error": str(exc), "stage": exc.stage},
        )
        return cert.finalize()
    if unitary is None:
        unitary = _wants_unitary(scenario) and cert.u_norm_upper <= 1 + PREMISE_RTOL
    if unitary and cert.similarity is not None:
        cert = unitarize(cert, scenario.a, scenario.n)
    return cert


def run_report(scenario, out_dir=None, tol=1e-10, unitary=None):
    """
    Run ``scenario`` and write ``scenario.json``, ``certificate.json`` and
    ``trace.json`` under ``out_dir/<scenario_id>/``.

    Returns
    -------
    cert : Certificate
    exit_code : int
    paths : dict
    """
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    target = out / scenario.scenario_id
    cert = run_scenario(scenario, tol=tol, unitary=unitary)
    try:
        target.mkdir(parents=True, exist_ok=True)
        paths = {
            "scenario": target / "scenario.json",
            "certificate": target / "certificate.json",
            "trace": target / "trace.json",
        }
        scenario.save(paths["scenario"])
        paths["certificate"].write_text(json.dumps(cert.to_json(), indent=1))
        paths["trace"].write_text(json.dumps(cert.trace, indent=1))
    except OSError as exc:
        raise OSError(f"could not write report under {target}: {exc}") from exc
    return cert, cert.exit_code, paths


DECISION_FIELDS = ("threshold_ok", "bound_satisfied", "outcome")


@dataclass
class VerifyReport:
    matches: bool
    original: dict
    recomputed: dict
    details: dict = field(default_factory=dict)


def verify_certificate(cert_path, scenario_path=None):
    """
    Recompute a certificate's decisions from its scenario and stored matrices.

    ``p_norm_upper``, ``u_norm_upper`` and ``digamma`` come from the
    scenario; ``||S - I||`` and the residuals from the stored ``S`` (and
    ``U``).  The intertwiner premise flag is taken from the record since it
    depends on the corrected homomorphism, which is not stored.
    """
    cert_path = Path(cert_path)
    scenario_path = Path(scenario_path) if scenario_path else cert_path.parent / "scenario.json"
    stored = Certificate.from_json(json.loads(cert_path.read_text()))
    sc = PerturbationScenario.load(scenario_path)
    pn = max(1.0, sc.p.norm_upper)
    un = max(1.0, projective_norm_upper_bound(sc.u))
    re_cert = Certificate(
        scenario_id=sc.scenario_id,
        gamma_upper=float(sc.gamma_bracket.upper),
        p_norm_upper=pn,
        u_norm_upper=un,
        digamma_value=float(digamma(pn, un)),
        threshold_ok=False,
        epsilon=stored.epsilon,
        delta=stored.delta,
        premise_certified=stored.premise_certified,
    )
    if stored.similarity is not None:
        s = stored.similarity
        eye = np.eye(s.shape[0])
        re_cert.similarity = s
        re_cert.s_minus_identity = operator_norm(s - eye)
        re_cert.conjugation_residual = conjugation_residual(s, sc.a, sc.n, inverse(s))
        closure = generate_closure(sc.ambient_dim, list(sc.a.basis) + list(sc.n.basis))
        re_cert.membership_residual = float(distance_to(s, closure, refine=False))
        if stored.unitary is not None:
            w = stored.unitary["matrix"]
            re_cert.unitary = {
                "matrix": w,
                "unitarity_residual": float(np.max(np.abs(w.conj().T @ w - eye))),
                "conjugation_residual": conjugation_residual(w, sc.a, sc.n, w.conj().T),
                "u_minus_identity": operator_norm(w - eye),
                "corollary_bound": corollary_bound(pn, re_cert.gamma_upper),
                "bound_satisfied": False,
            }
    re_cert.finalize()
    orig = {k: getattr(stored, k) for k in DECISION_FIELDS}
    new = {k: getattr(re_cert, k) for k in DECISION_FIELDS}
    if stored.unitary is not None:
        orig["unitary_bound_satisfied"] = stored.unitary.get("bound_satisfied")
        new["unitary_bound_satisfied"] = None if re_cert.unitary is None else re_cert.unitary["bound_satisfied"]
    details = {
        "s_minus_identity": (stored.s_minus_identity, re_cert.s_minus_identity),
        "conjugation_residual": (stored.conjugation_residual, re_cert.conjugation_residual),
        "membership_residual": (stored.membership_residual, re_cert.membership_residual),
        "digamma_value": (stored.digamma_value, re_cert.digamma_value),
    }
    return VerifyReport(json.dumps(orig) == json.dumps(new), orig, new, details)


def parse_seeds(text):
    """``"A..B"`` (inclusive), ``"A,B,C"`` or a single integer."""
    text = str(text).strip()
    m = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)", text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise InvalidInputError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise InvalidInputError(f"cannot parse seeds {text!r}") from None


def parse_sweep(text):
    """
    ``"strength=logspace(a,b,n)"``, ``linspace(a,b,n)`` or a comma list.

    ``logspace`` endpoints are the values themselves (geometric spacing).
    """
    name, _, rhs = str(text).partition("=")
    name, rhs = name.strip(), rhs.strip()
    if not rhs:
        raise InvalidInputError(f"sweep must look like name=values, got {text!r}")
    m = re.fullmatch(r"(logspace|linspace)\(([^,]+),([^,]+),([^,]+)\)", rhs.replace(" ", ""))
    if m:
        a, b, k = float(m.group(2)), float(m.group(3)), int(float(m.group(4)))
        if m.group(1) == "logspace":
            if a <= 0 or b <= 0:
                raise InvalidInputError("logspace endpoints must be positive")
            return name, [float(v) for v in np.geomspace(a, b, k)]
        return name, [float(v) for v in np.linspace(a, b, k)]
    try:
        return name, [float(v) for v in rhs.split(",")]
    except ValueError:
        raise InvalidInputError(f"cannot parse sweep values {rhs!r}") from None


def _bench_one(job):
    seed, params, tol = job
    try:
        sc = generate_scenario(params, seed)
        cert = run_scenario(sc, tol=tol)
    except NearInclusionError as exc:
        return {"seed": seed, "gamma_upper": "", "digamma": "", "epsilon": "", "s_minus_identity": "",
                "bound_slack": "", "outcome": f"error: {exc}", "strength": params.strength}
    slack = ""
    if cert.s_minus_identity is not None:
        slack = cert.digamma_value * cert.gamma_upper - cert.s_minus_identity
    return {
        "seed": seed,
        "gamma_upper": cert.gamma_upper,
        "digamma": cert.digamma_value,
        "epsilon": "" if cert.epsilon is None else cert.epsilon,
        "s_minus_identity": "" if cert.s_minus_identity is None else cert.s_minus_identity,
        "bound_slack": slack,
        "outcome": cert.outcome,
        "strength": params.strength,
    }


def bench(seeds, base_params, sweep=None, csv_path=None, tol=1e-10, jobs=1):
    """
    Run every ``seed`` for every value of the ``sweep`` parameter.

    Returns the rows (dicts keyed by :data:`BENCH_COLUMNS`) and writes them
    to ``csv_path`` when given.
    """
    if isinstance(base_params, dict):
        base_params = ScenarioParams.from_dict(base_params)
    values = [None]
    name = None
    if sweep is not None:
        name, values = sweep
        if name not in ScenarioParams.__dataclass_fields__:
            raise InvalidInputError(f"unknown sweep parameter {name!r}")
    jobs_list = []
    for v in values:
        params = base_params if name is None else ScenarioParams.from_dict({**base_params.__dict__, name: v})
        for s in seeds:
            jobs_list.append((int(s), params, tol))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_bench_one, jobs_list))
    else:
        rows = [_bench_one(j) for j in jobs_list]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    return rows
