"""MAP specifications: jump laws, per-state Levy parts, validation and built-ins.

A Markov additive process here is a finite-state chain ``J`` with generator
``Q`` together with an additive component that, while ``J`` sits in state ``i``,
moves as a Levy process with drift ``a_i``, Brownian variance ``sigma2_i`` and
finitely many compound-Poisson jump terms.  Each chain transition out of ``i``
(or into ``i``, see ``trans_jump_on_entry``) adds an independent jump drawn from
``trans_jump[i]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import DomainViolation, ModelValidationError, SchemaError, Violation

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class JumpLaw:
    """Law of a single jump size.

    ``family`` is one of ``"degenerate"`` (point mass at ``value``),
    ``"exponential"`` (``sign * Exp(rate)``) or ``"mixture"`` (finite mixture of
    exponentials sharing one sign).
    """

    family: str
    value: float = 0.0
    rates: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    sign: int = -1

    @classmethod
    def zero(cls) -> "JumpLaw":
        return cls("degenerate", value=0.0)

    @classmethod
    def degenerate(cls, c: float) -> "JumpLaw":
        return cls("degenerate", value=float(c))

    @classmethod
    def exponential(cls, rate: float, sign: int = -1) -> "JumpLaw":
        return cls("exponential", rates=(float(rate),), weights=(1.0,), sign=int(sign))

    @classmethod
    def mixture(cls, weights: Sequence[float], rates: Sequence[float], sign: int = -1) -> "JumpLaw":
        return cls("mixture", rates=tuple(float(r) for r in rates),
                   weights=tuple(float(w) for w in weights), sign=int(sign))

    @property
    def is_zero(self) -> bool:
        return self.family == "degenerate" and self.value == 0.0

    @property
    def is_negative(self) -> bool:
        """True when the law is supported on (-inf, 0) or is the zero jump."""
        if self.family == "degenerate":
            return self.value <= 0.0
        return self.sign < 0

    @property
    def has_positive_mass(self) -> bool:
        if self.family == "degenerate":
            return self.value > 0.0
        return self.sign > 0

    def domain(self) -> tuple[float, float]:
        """Open interval of Re(alpha) on which E exp(alpha U) is finite."""
        if self.family == "degenerate":
            return (-math.inf, math.inf)
        b = min(self.rates)
        return (-b, math.inf) if self.sign < 0 else (-math.inf, b)

    def in_domain(self, alpha: complex) -> bool:
        lo, hi = self.domain()
        return lo < complex(alpha).real < hi

    def transform(self, alpha):
        """E exp(alpha U); accepts real or complex scalars and arrays."""
        if self.family == "degenerate":
            return np.exp(alpha * self.value)
        s = self.sign
        out = 0.0
        for w, b in zip(self.weights, self.rates):
            out = out + w * b / (b - s * alpha)
        return out

    def transform_derivative(self, alpha):
        if self.family == "degenerate":
            return self.value * np.exp(alpha * self.value)
        s = self.sign
        out = 0.0
        for w, b in zip(self.weights, self.rates):
            out = out + w * s * b / (b - s * alpha) ** 2
        return out

    def mean(self) -> float:
        if self.family == "degenerate":
            return self.value
        return self.sign * sum(w / b for w, b in zip(self.weights, self.rates))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "degenerate":
            return np.full(size, self.value)
        if len(self.rates) == 1:
            return self.sign * rng.exponential(1.0 / self.rates[0], size)
        comp = rng.choice(len(self.rates), size=size, p=np.asarray(self.weights))
        scales = 1.0 / np.asarray(self.rates)
        return self.sign * rng.exponential(1.0, size) * scales[comp]

    def to_json(self) -> dict:
        if self.family == "degenerate":
            return {"family": "degenerate", "params": {"value": self.value}}
        sign = "-" if self.sign < 0 else "+"
        if self.family == "exponential":
            return {"family": "exponential", "params": {"rate": self.rates[0]}, "sign": sign}
        return {"family": "mixture",
                "params": {"weights": list(self.weights), "rates": list(self.rates)},
                "sign": sign}


@dataclass(frozen=True)
class LevyComponent:
    """Drift, Brownian variance and finite-activity jump terms ``(rate, law)``."""

    a: float = 0.0
    sigma2: float = 0.0
    jumps: tuple[tuple[float, JumpLaw], ...] = ()

    @property
    def total_jump_rate(self) -> float:
        return float(sum(r for r, _ in self.jumps))

    def psi(self, alpha):
        """Laplace exponent a*alpha + sigma2*alpha^2/2 + sum rate*(E e^{alpha U} - 1).

        For purely imaginary ``alpha = i*theta`` this is the log characteristic
        function, so E exp(i theta X(1)) = exp(psi(i theta)).
        """
        out = self.a * alpha + 0.5 * self.sigma2 * alpha * alpha
        for rate, law in self.jumps:
            out = out + rate * (law.transform(alpha) - 1.0)
        return out

    def psi_derivative(self, alpha):
        out = self.a + self.sigma2 * alpha
        for rate, law in self.jumps:
            out = out + rate * law.transform_derivative(alpha)
        return out

    def mean_rate(self) -> float:
        """E X(1) for this component."""
        return self.a + sum(r * law.mean() for r, law in self.jumps)


@dataclass(frozen=True)
class MapSpec:
    """Raw model primitives as read from a file or a built-in constructor."""

    Q: tuple[tuple[float, ...], ...]
    levy: tuple[LevyComponent, ...]
    trans_jump: tuple[JumpLaw, ...] = ()
    spectrally_negative: bool = True
    trans_jump_on_entry: bool = False
    name: str = ""

    @property
    def n_states(self) -> int:
        return len(self.Q)


def make_spec(Q, levy, trans_jump=None, spectrally_negative=True, *,
              trans_jump_on_entry=False, name="") -> MapSpec:
    """Convenience constructor accepting arrays/lists."""
    Qt = tuple(tuple(float(x) for x in row) for row in np.asarray(Q, dtype=float))
    n = len(Qt)
    if trans_jump is None:
        trans_jump = [JumpLaw.zero()] * n
    return MapSpec(Qt, tuple(levy), tuple(trans_jump), bool(spectrally_negative),
                   bool(trans_jump_on_entry), name)


@dataclass(frozen=True, eq=False)
class ValidatedModel:
    """Read-only handle on a model that passed every invariant.

    Instances compare by identity so they can key per-model caches.
    """

    spec: MapSpec
    Q: np.ndarray = field(repr=False)
    pi: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.spec.n_states

    @property
    def levy(self) -> tuple[LevyComponent, ...]:
        return self.spec.levy

    @property
    def trans_jump(self) -> tuple[JumpLaw, ...]:
        return self.spec.trans_jump

    @property
    def spectrally_negative(self) -> bool:
        return self.spec.spectrally_negative

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def drifts(self) -> np.ndarray:
        return np.array([c.a for c in self.levy])

    @property
    def sigma2(self) -> np.ndarray:
        return np.array([c.sigma2 for c in self.levy])

    def all_laws(self):
        """Yield (path, law) for every jump law in the model."""
        for i, comp in enumerate(self.levy):
            for k, (_, law) in enumerate(comp.jumps):
                yield f"levy[{i}].jumps[{k}]", law
        for i, law in enumerate(self.trans_jump):
            yield f"trans_jump[{i}]", law

    def transition_law(self, i: int, j: int) -> JumpLaw:
        """Law of the jump added when the chain moves i -> j."""
        return self.trans_jump[j] if self.spec.trans_jump_on_entry else self.trans_jump[i]

    def domain(self) -> tuple[float, float]:
        """Open interval of Re(alpha) where every transform is finite."""
        lo, hi = -math.inf, math.inf
        for _, law in self.all_laws():
            a, b = law.domain()
            lo, hi = max(lo, a), min(hi, b)
        return lo, hi

    def check_domain(self, alpha: complex) -> None:
        re = complex(alpha).real
        for path, law in self.all_laws():
            lo, hi = law.domain()
            if not (lo < re < hi):
                state = int(path.split("[")[1].split("]")[0])
                raise DomainViolation(
                    f"Re(alpha)={re:g} outside ({lo:g}, {hi:g}) for {path} (state {state})",
                    state=state)


def _irreducible(Q: np.ndarray) -> bool:
    n = Q.shape[0]
    adj = (Q > 0) & ~np.eye(n, dtype=bool)
    reach = adj | np.eye(n, dtype=bool)
    # boolean transitive closure by repeated squaring
    for _ in range(max(1, int(math.ceil(math.log2(max(n, 2)))) + 1)):
        reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
    return bool(reach.all())


def _law_violations(law: JumpLaw, path: str) -> list[Violation]:
    out = []
    if law.family not in ("degenerate", "exponential", "mixture"):
        out.append(Violation("InvalidJumpLaw", path, f"unknown family {law.family!r}"))
        return out
    if law.family != "degenerate":
        if law.sign not in (-1, 1):
            out.append(Violation("InvalidJumpLaw", path, "sign must be + or -"))
        if not law.rates or any(not (b > 0) for b in law.rates):
            out.append(Violation("InvalidJumpLaw", path, "rates must be > 0"))
        if len(law.weights) != len(law.rates) or any(w < 0 for w in law.weights) \
                or abs(sum(law.weights) - 1.0) > 1e-12:
            out.append(Violation("InvalidJumpLaw", path, "weights must be >= 0 and sum to 1"))
    elif not math.isfinite(law.value):
        out.append(Violation("InvalidJumpLaw", path, "value must be finite"))
    return out


def validate(spec: MapSpec) -> ValidatedModel:
    """Check every model invariant; raise ``ModelValidationError`` listing all failures."""
    v: list[Violation] = []
    n = spec.n_states
    Q = np.asarray(spec.Q, dtype=float)
    if n < 1 or Q.shape != (n, n):
        raise ModelValidationError([Violation("Shape", "Q", f"Q must be square, got {Q.shape}")])
    if len(spec.levy) != n:
        v.append(Violation("Shape", "levy", f"expected {n} Levy components, got {len(spec.levy)}"))
    if len(spec.trans_jump) != n:
        v.append(Violation("Shape", "trans_jump", f"expected {n} transition laws, got {len(spec.trans_jump)}"))
    if v:
        raise ModelValidationError(v)

    off = ~np.eye(n, dtype=bool)
    for i, j in zip(*np.nonzero(off & (Q < 0))):
        v.append(Violation("NegativeOffDiagonal", f"Q[{i}][{j}]", f"q_ij = {Q[i, j]:g} < 0"))
    rows = Q.sum(axis=1)
    for i in np.nonzero(np.abs(rows) > ROW_SUM_TOL)[0]:
        v.append(Violation("RowSumViolation", f"Q[{i}]", f"row sums to {rows[i]:.3e}"))
    if not _irreducible(Q):
        v.append(Violation("Reducible", "Q", "chain has more than one communicating class"))

    for i, comp in enumerate(spec.levy):
        if not (comp.sigma2 >= 0):
            v.append(Violation("NegativeVariance", f"levy[{i}].sigma2", "sigma2 must be >= 0"))
        for k, (rate, law) in enumerate(comp.jumps):
            p = f"levy[{i}].jumps[{k}]"
            if not (rate > 0):
                v.append(Violation("InvalidJumpRate", p, "jump rate must be > 0"))
            v.extend(_law_violations(law, p + ".law"))
            if spec.spectrally_negative and law.has_positive_mass:
                v.append(Violation("PositiveJumpInSpectrallyNegative", p + ".law",
                                   "positive jump in a spectrally negative model"))
        up = any(law.has_positive_mass for _, law in comp.jumps)
        if comp.sigma2 == 0 and comp.a == 0:
            v.append(Violation("DegenerateComponent", f"levy[{i}]",
                               "compound Poisson component (no drift, no diffusion)"))
        elif comp.sigma2 == 0 and comp.a < 0 and not up:
            v.append(Violation("DegenerateComponent", f"levy[{i}]",
                               "downward subordinator component"))
    for i, law in enumerate(spec.trans_jump):
        p = f"trans_jump[{i}]"
        v.extend(_law_violations(law, p))
        if spec.spectrally_negative and law.has_positive_mass:
            v.append(Violation("PositiveJumpInSpectrallyNegative", p,
                               "positive transition jump in a spectrally negative model"))
    if v:
        raise ModelValidationError(v)

    Qr = Q.copy()
    Qr.setflags(write=False)
    pi = _stationary_vector(Qr)
    pi.setflags(write=False)
    return ValidatedModel(spec, Qr, pi)


def _stationary_vector(Q: np.ndarray) -> np.ndarray:
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    # null space of Q^T via SVD; one-dimensional for an irreducible generator
    _, s, vh = np.linalg.svd(Q.T)
    if s[-2] < 1e-12 * max(1.0, s[0]):
        raise ArithmeticError("null space of Q^T is not one-dimensional")
    pi = np.abs(vh[-1])
    pi = pi / pi.sum()
    # one step of refinement against the bordered system
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    return pi


@dataclass(frozen=True)
class StationaryDist:
    pi: np.ndarray

    def residual(self, Q: np.ndarray) -> float:
        return float(np.max(np.abs(self.pi @ Q)))


def stationary(model: ValidatedModel | np.ndarray) -> StationaryDist:
    """Stationary law of the modulating chain."""
    if isinstance(model, ValidatedModel):
        return StationaryDist(np.array(model.pi))
    return StationaryDist(_stationary_vector(np.asarray(model, dtype=float)))


# ---------------------------------------------------------------------------
# built-in models

_Q2 = [[-1.0, 1.0], [2.0, -2.0]]


def builtin(name: str) -> MapSpec:
    """Return one of MODEL-A, MODEL-B, MODEL-C, MODEL-D."""
    key = name.upper().replace("_", "-")
    if key == "MODEL-A":
        levy = [LevyComponent(1.0, 2.0), LevyComponent(-1.0, 2.0)]
        return make_spec(_Q2, levy, name="MODEL-A")
    if key == "MODEL-B":
        levy = [LevyComponent(0.0, 1.0), LevyComponent(0.0, 4.0)]
        return make_spec(_Q2, levy, name="MODEL-B")
    if key == "MODEL-C":
        c = 2.0
        levy = [LevyComponent(c, 0.0, ((1.0, JumpLaw.exponential(1.0, -1)),)),
                LevyComponent(c, 0.0, ((3.0, JumpLaw.exponential(1.0, -1)),))]
        return make_spec(_Q2, levy, name="MODEL-C")
    if key == "MODEL-D":
        up = JumpLaw.exponential(2.0, +1)
        levy = [LevyComponent(1.0, 2.0, ((1.0, up),)), LevyComponent(-1.0, 2.0, ((1.0, up),))]
        return make_spec(_Q2, levy, spectrally_negative=False, name="MODEL-D")
    raise KeyError(f"unknown built-in model {name!r}; choose MODEL-A, MODEL-B, MODEL-C or MODEL-D")


BUILTIN_NAMES = ("MODEL-A", "MODEL-B", "MODEL-C", "MODEL-D")


def load_builtin(name: str) -> ValidatedModel:
    return validate(builtin(name))


# ---------------------------------------------------------------------------
# JSON model files

def _expect(obj: Any, kind, path: str):
    if not isinstance(obj, kind) or isinstance(obj, bool) and kind is not bool:
        raise SchemaError(path, f"expected {getattr(kind, '__name__', kind)}, got {type(obj).__name__}")
    return obj


def _check_keys(obj: dict, allowed: set[str], required: set[str], path: str) -> None:
    for k in obj:
        if k not in allowed:
            raise SchemaError(f"{path}.{k}" if path else k, "unknown field")
    for k in required:
        if k not in obj:
            raise SchemaError(f"{path}.{k}" if path else k, "missing required field")


def _num(x, path) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SchemaError(path, f"expected number, got {type(x).__name__}")
    return float(x)


def _parse_sign(obj: dict, path: str) -> int:
    s = obj.get("sign", "-")
    if s in ("-", -1, "minus", "negative"):
        return -1
    if s in ("+", 1, "plus", "positive"):
        return 1
    raise SchemaError(f"{path}.sign", f"sign must be '+' or '-', got {s!r}")


def law_from_json(obj: Any, path: str) -> JumpLaw:
    _expect(obj, dict, path)
    _check_keys(obj, {"family", "params", "sign"}, {"family"}, path)
    fam = obj["family"]
    params = _expect(obj.get("params", {}), dict, f"{path}.params")
    pp = f"{path}.params"
    if fam == "degenerate":
        _check_keys(params, {"value"}, set(), pp)
        return JumpLaw.degenerate(_num(params.get("value", 0.0), f"{pp}.value"))
    if fam == "exponential":
        _check_keys(params, {"rate"}, {"rate"}, pp)
        return JumpLaw.exponential(_num(params["rate"], f"{pp}.rate"), _parse_sign(obj, path))
    if fam == "mixture":
        _check_keys(params, {"weights", "rates"}, {"weights", "rates"}, pp)
        w = [_num(x, f"{pp}.weights[{k}]") for k, x in enumerate(_expect(params["weights"], list, f"{pp}.weights"))]
        r = [_num(x, f"{pp}.rates[{k}]") for k, x in enumerate(_expect(params["rates"], list, f"{pp}.rates"))]
        return JumpLaw.mixture(w, r, _parse_sign(obj, path))
    raise SchemaError(f"{path}.family", f"unknown family {fam!r}")


def spec_from_json(obj: Any) -> MapSpec:
    """Parse the model-file schema; unknown fields are rejected with their path."""
    _expect(obj, dict, "<root>")
    _check_keys(obj, {"n_states", "Q", "states", "trans_jumps", "spectrally_negative",
                      "trans_jump_on_entry", "name"}, {"n_states", "Q", "states"}, "")
    n = obj["n_states"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise SchemaError("n_states", "must be a positive integer")
    Q = _expect(obj["Q"], list, "Q")
    if len(Q) != n:
        raise SchemaError("Q", f"expected {n} rows")
    rows = []
    for i, row in enumerate(Q):
        _expect(row, list, f"Q[{i}]")
        if len(row) != n:
            raise SchemaError(f"Q[{i}]", f"expected {n} entries")
        rows.append([_num(x, f"Q[{i}][{j}]") for j, x in enumerate(row)])
    states = _expect(obj["states"], list, "states")
    if len(states) != n:
        raise SchemaError("states", f"expected {n} entries")
    levy = []
    for i, st in enumerate(states):
        p = f"states[{i}]"
        _expect(st, dict, p)
        _check_keys(st, {"drift", "sigma2", "jumps"}, set(), p)
        jumps = []
        for k, jm in enumerate(_expect(st.get("jumps", []), list, f"{p}.jumps")):
            jp = f"{p}.jumps[{k}]"
            _expect(jm, dict, jp)
            _check_keys(jm, {"rate", "law"}, {"rate", "law"}, jp)
            jumps.append((_num(jm["rate"], f"{jp}.rate"), law_from_json(jm["law"], f"{jp}.law")))
        levy.append(LevyComponent(_num(st.get("drift", 0.0), f"{p}.drift"),
                                  _num(st.get("sigma2", 0.0), f"{p}.sigma2"), tuple(jumps)))
    tj = obj.get("trans_jumps")
    if tj is None:
        trans = [JumpLaw.zero()] * n
    else:
        _expect(tj, list, "trans_jumps")
        if len(tj) != n:
            raise SchemaError("trans_jumps", f"expected {n} entries")
        trans = [JumpLaw.zero() if t is None else law_from_json(t, f"trans_jumps[{i}]")
                 for i, t in enumerate(tj)]
    sn = obj.get("spectrally_negative", True)
    if not isinstance(sn, bool):
        raise SchemaError("spectrally_negative", "expected boolean")
    on_entry = obj.get("trans_jump_on_entry", False)
    if not isinstance(on_entry, bool):
        raise SchemaError("trans_jump_on_entry", "expected boolean")
    name = obj.get("name", "")
    return make_spec(rows, levy, trans, sn, trans_jump_on_entry=on_entry, name=str(name))


def spec_to_json(spec: MapSpec) -> dict:
    out = {
        "n_states": spec.n_states,
        "Q": [list(r) for r in spec.Q],
        "states": [{"drift": c.a, "sigma2": c.sigma2,
                    "jumps": [{"rate": r, "law": law.to_json()} for r, law in c.jumps]}
                   for c in spec.levy],
        "trans_jumps": [law.to_json() for law in spec.trans_jump],
        "spectrally_negative": spec.spectrally_negative,
    }
    if spec.trans_jump_on_entry:
        out["trans_jump_on_entry"] = True
    if spec.name:
        out["name"] = spec.name
    return out


def load_model_file(path: str | Path) -> ValidatedModel:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return validate(spec_from_json(obj))


def dump_model_file(spec: MapSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_json(spec), fh, indent=2)
        fh.write("\n")


def reversed_spec(model: ValidatedModel) -> MapSpec:
    """Primitives of the time-reversed MAP under the stationary law.

    The reversed chain has generator diag(pi)^-1 Q^T diag(pi); the per-state
    Levy parts are unchanged and the transition jump attached to the leaving
    state becomes attached to the entered state (and vice versa).
    """
    pi = model.pi
    Qh = (model.Q.T * pi[None, :]) / pi[:, None]
    np.fill_diagonal(Qh, 0.0)
    np.fill_diagonal(Qh, -Qh.sum(axis=1))
    name = model.name + "^" if model.name else ""
    return make_spec(Qh, model.levy, model.trans_jump, model.spectrally_negative,
                     trans_jump_on_entry=not model.spec.trans_jump_on_entry, name=name)
