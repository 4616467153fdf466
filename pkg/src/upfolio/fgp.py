"""Functionally generated portfolios.

A positive concave function on the open simplex, normalized to 1 at the
barycenter, generates a portfolio map through a supergradient of its log:

    w_i(p) = p_i * (v_i(p) + 1 - sum_j p_j v_j(p)),   v(p) in the
    superdifferential of log Phi at p, tangent to the simplex.

The defining property of the generated map is the pathwise inequality
w(p) . (q/p) >= Phi(q) / Phi(p), which this module can also verify by
sampling. Three closed families of generators are supported, enough to
express every generator the experiments need and closed under the two
standard constructions (geometric blending, minima of affine functions):

* geometric means  Phi(p) = c * prod p_i^{w_i}   -> constant-weighted maps
* minima of affine functions                      -> threshold / tent maps
* log blends       Phi = prod Phi_k^{lambda_k}    -> convex combinations

At points where a min-affine generator is not differentiable the selection
rule averages all active pieces (ties within ACTIVE_TOL); the average stays
inside the superdifferential and is deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exceptions import GeneratorError
from .market import SimplexPoint, barycenter
from .portfolios import PortfolioMap, project_weights
from .quasirandom import shrunk_simplex_points

ACTIVE_TOL = 1e-9          # piece counts as active if within this of the min
METRIC_MAX_LEVEL = 16      # truncation level of the generator metric
METRIC_GRID_SIZE = 512     # evaluation points per compact level

_metric_grid_cache: dict[tuple[int, int], np.ndarray] = {}


def _check_open_points(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise GeneratorError(f"expected (m, n) points, got shape {points.shape}")
    if points.min() <= 0:
        raise GeneratorError("generator evaluated off the open simplex")
    return points


class GeneratingFunction:
    """Positive concave function on the open simplex with Phi(barycenter) = 1."""

    kind: str = ""
    label: str = ""

    def __init__(self, n: int):
        self.n = int(n)
        if self.n < 2:
            raise GeneratorError(f"dimension must be >= 2, got {n}")
        self.c = 1.0
        raw = self._raw_many(barycenter(self.n)[None, :])[0]
        if not (raw > 0) or not math.isfinite(raw):
            raise GeneratorError(f"{self.label or self.kind}: nonpositive at the barycenter")
        self.c = 1.0 / float(raw)

    # subclasses: unnormalized values / tangent supergradients of log
    def _raw_many(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _log_supergradient_many(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_many(self, points) -> np.ndarray:
        vals = self.c * self._raw_many(_check_open_points(points))
        if vals.min() <= 0 or not np.all(np.isfinite(vals)):
            raise GeneratorError(f"{self.label or self.kind}: nonpositive value")
        return vals

    def value(self, point) -> float:
        p = point.coords if isinstance(point, SimplexPoint) else np.asarray(point, dtype=float)
        return float(self.value_many(p[None, :])[0])

    def log_supergradient_many(self, points) -> np.ndarray:
        return self._log_supergradient_many(_check_open_points(points))

    def log_supergradient(self, point) -> np.ndarray:
        p = point.coords if isinstance(point, SimplexPoint) else np.asarray(point, dtype=float)
        return self.log_supergradient_many(p[None, :])[0]

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.label!r}>"


def _tangent(g: np.ndarray) -> np.ndarray:
    """Project gradient rows onto the simplex tangent space (zero-sum)."""
    return g - g.mean(axis=1, keepdims=True)


class GeometricMean(GeneratingFunction):
    """Phi(p) = c * prod p_i^{w_i} for a closed-simplex exponent vector."""

    kind = "geometric_mean"

    def __init__(self, weights):
        w = project_weights(np.asarray(weights, dtype=float), "geometric mean exponents")
        self.weights = w
        self.weights.flags.writeable = False
        self.label = "gm(" + ",".join(format(x, ".6g") for x in w) + ")"
        super().__init__(w.size)

    def _raw_many(self, points):
        return np.exp(np.log(points) @ self.weights)

    def _log_supergradient_many(self, points):
        return _tangent(self.weights / points)

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist(), "c": self.c}


class MinAffine(GeneratingFunction):
    """Phi(p) = c * min_j (a_j . p + b_j), positive on the open simplex.

    Positivity is checked exactly: the minimum of a concave piecewise-affine
    function over the closed simplex is attained at a vertex, so it suffices
    that min_j min_i (a_ji + b_j) >= 0 with a strictly positive barycenter
    value (zeros on the boundary, as in tent functions, are fine).
    """

    kind = "min_affine"

    def __init__(self, coeffs, offsets=None, label: str = ""):
        a = np.atleast_2d(np.asarray(coeffs, dtype=float))
        b = np.zeros(a.shape[0]) if offsets is None else np.asarray(offsets, dtype=float)
        if a.ndim != 2 or b.shape != (a.shape[0],):
            raise GeneratorError(f"bad affine pieces: coeffs {a.shape}, offsets {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise GeneratorError("non-finite affine pieces")
        vertex_min = float((a.min(axis=1) + b).min())
        if vertex_min < 0:
            raise GeneratorError(f"min-affine generator negative at a vertex ({vertex_min})")
        self.coeffs = a
        self.offsets = b
        self.coeffs.flags.writeable = False
        self.offsets.flags.writeable = False
        self.label = label or f"min_affine[{a.shape[0]} pieces]"
        super().__init__(a.shape[1])

    def _piece_values(self, points):
        return points @ self.coeffs.T + self.offsets

    def _raw_many(self, points):
        return self._piece_values(points).min(axis=1)

    def _log_supergradient_many(self, points):
        vals = self._piece_values(points)
        low = vals.min(axis=1, keepdims=True)
        active = vals <= low + ACTIVE_TOL
        avg = (active @ self.coeffs) / active.sum(axis=1, keepdims=True)
        return _tangent(avg / low)

    def to_dict(self):
        return {"kind": self.kind, "coeffs": self.coeffs.tolist(),
                "offsets": self.offsets.tolist(), "c": self.c, "label": self.label}


class LogBlend(GeneratingFunction):
    """Geometric blend Phi = c * prod Phi_k^{lambda_k} of other generators."""

    kind = "log_blend"

    def __init__(self, parts):
        parts = [(gen, float(lam)) for gen, lam in parts]
        if not parts:
            raise GeneratorError("log blend needs at least one part")
        lams = np.array([lam for _, lam in parts])
        if lams.min() < 0 or abs(lams.sum() - 1.0) > 1e-12:
            raise GeneratorError(f"blend exponents must be >= 0 and sum to 1, got {lams}")
        dims = {gen.n for gen, _ in parts}
        if len(dims) != 1:
            raise GeneratorError("blend parts have mixed dimensions")
        self.parts = parts
        self.label = "blend(" + "+".join(f"{lam:.6g}*{gen.label}" for gen, lam in parts) + ")"
        super().__init__(dims.pop())

    def _raw_many(self, points):
        acc = np.zeros(points.shape[0])
        for gen, lam in self.parts:
            acc += lam * np.log(gen.value_many(points))
        return np.exp(acc)

    def _log_supergradient_many(self, points):
        acc = np.zeros_like(points)
        for gen, lam in self.parts:
            acc += lam * gen.log_supergradient_many(points)
        return acc

    def to_dict(self):
        return {"kind": self.kind, "c": self.c,
                "parts": [{"weight": lam, "generator": gen.to_dict()} for gen, lam in self.parts]}


def eval_generator(gen: GeneratingFunction, point) -> float:
    """Normalized generator value; errors if the value is not positive."""
    return gen.value(point)


def supergradient_log(gen: GeneratingFunction, point) -> np.ndarray:
    """Tangent supergradient of log Phi at an open-simplex point."""
    return gen.log_supergradient(point)


class FgPortfolio(PortfolioMap):
    """Portfolio map generated by a concave function via its log supergradient."""

    supergradient_rule = "active_average"

    def __init__(self, generator: GeneratingFunction, label: str = ""):
        self.generator = generator
        self.label = label or f"fgp:{generator.label}"

    def weights_many(self, points):
        points = np.asarray(points, dtype=float)
        v = self.generator.log_supergradient_many(points)
        scale = 1.0 - np.einsum("mi,mi->m", points, v)
        return points * (v + scale[:, None])


def portfolio_from_generator(gen: GeneratingFunction, label: str = "") -> FgPortfolio:
    return FgPortfolio(gen, label)


def tent_generator(theta: float) -> MinAffine:
    """Two-stock tent generator min(p1/theta, p2/(1-theta)).

    Generates the threshold map that holds stock 1 when p1 < theta and stock
    2 when p1 > theta; distinct thresholds give maps at uniform distance
    sqrt(2), the standard uncountable discrete family.
    """
    if not (0 < theta < 1):
        raise GeneratorError(f"theta must be in (0, 1), got {theta}")
    return MinAffine([[1.0 / theta, 0.0], [0.0, 1.0 / (1.0 - theta)]],
                     label=f"tent({theta:.6g})")


@dataclass(frozen=True)
class FgInequalityReport:
    """Sampled check of the generated-portfolio inequality on a ratio-bounded region."""

    samples: int
    min_slack: float
    worst_p: np.ndarray
    worst_q: np.ndarray
    passed: bool
    ratio_bound: float
    floor: float
    seed: int
    tolerance: float


def verify_fg_inequality(pi: PortfolioMap, gen: GeneratingFunction, samples: int,
                         seed: int, *, ratio_bound: float = 1.5, floor: float = 1e-3,
                         tolerance: float = 1e-10) -> FgInequalityReport:
    """Sample pairs (p, q) and report the minimum slack of w(p).(q/p) - Phi(q)/Phi(p).

    p is uniform on the shrunk simplex {p_i >= floor}; q multiplies p by
    i.i.d. factors in [1/sqrt(M), sqrt(M)] and renormalizes, which keeps every
    componentwise ratio inside [1/M, M]. A failing report is data, not an
    exception.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = gen.n
    rng = np.random.Generator(np.random.PCG64(seed))
    p = floor + (1.0 - n * floor) * rng.dirichlet(np.ones(n), size=samples)
    s = math.sqrt(ratio_bound)
    f = rng.uniform(1.0 / s, s, size=(samples, n))
    q_raw = p * f
    q = q_raw / q_raw.sum(axis=1, keepdims=True)
    w = project_weights(pi.weights_many(p), pi.label)
    lhs = np.einsum("mi,mi->m", w, q / p)
    rhs = gen.value_many(q) / gen.value_many(p)
    slack = lhs - rhs
    worst = int(np.argmin(slack))
    min_slack = float(slack[worst])
    return FgInequalityReport(samples=samples, min_slack=min_slack,
                              worst_p=p[worst], worst_q=q[worst],
                              passed=min_slack >= -tolerance,
                              ratio_bound=ratio_bound, floor=floor,
                              seed=seed, tolerance=tolerance)


def _metric_grid(n: int, level: int) -> np.ndarray:
    key = (n, level)
    if key not in _metric_grid_cache:
        _metric_grid_cache[key] = shrunk_simplex_points(METRIC_GRID_SIZE, n, 1.0 / level)
    return _metric_grid_cache[key]


def generator_distance(f: GeneratingFunction, g: GeneratingFunction) -> float:
    """Computable surrogate for the local-uniform metric on normalized generators.

    sum_{m<=16} 2^-m * x_m / (1 + x_m) with x_m the max of |Phi - Psi| over a
    fixed 512-point low-discrepancy grid on {p_i >= 1/m}. Levels with an empty
    compact (m < n) contribute 0. The same grids are used on both sides of
    every assertion made against this surrogate.
    """
    if f.n != g.n:
        raise GeneratorError(f"dimension mismatch {f.n} vs {g.n}")
    total = 0.0
    for m in range(1, METRIC_MAX_LEVEL + 1):
        if m < f.n:
            continue
        grid = _metric_grid(f.n, m)
        x = float(np.abs(f.value_many(grid) - g.value_many(grid)).max())
        total += 2.0 ** -m * x / (1.0 + x)
    return total


def _compositions(total: int, parts: int):
    """Compositions of `total` into `parts` positive integers, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def _dyadic_vectors(n: int):
    """Strictly positive dyadic-rational simplex vectors, denominators 2, 4, 8, ...

    Vectors whose numerators are all even already appeared at a smaller
    denominator and are skipped; each vector is yielded once with its
    exact fraction labels.
    """
    d = 2
    while True:
        for comp in _compositions(d, n):
            if all(k % 2 == 0 for k in comp):
                continue
            vec = np.array(comp, dtype=float) / d
            label = ",".join(str(Fraction(k, d)) for k in comp)
            yield vec, label
        d *= 2


def dense_generator_family(count: int, n: int) -> list[tuple[GeneratingFunction, float]]:
    """First `count` generators of the countable dense schedule with weights 2^-k.

    Position 1 is the equal-exponent geometric mean (the barycenter vector);
    every fourth position thereafter is a min-affine tent with dyadic
    parameters, all other positions are geometric means with dyadic exponent
    vectors in ascending lexicographic order. Weights are proportional to
    2^-k, renormalized to sum to one.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if n < 2:
        raise GeneratorError("n must be >= 2")
    gms = _dyadic_vectors(n)
    tents = _dyadic_vectors(n)
    bary = barycenter(n)
    emitted_gm = {bary.tobytes()}
    gens: list[GeneratingFunction] = [GeometricMean(bary)]
    while len(gens) < count:
        k = len(gens) + 1
        if k % 4 == 0:
            theta, label = next(tents)
            pieces = np.diag(1.0 / theta)
            gens.append(MinAffine(pieces, label=f"tent({label})"))
        else:
            vec, label = next(gms)
            while vec.tobytes() in emitted_gm:
                vec, label = next(gms)
            emitted_gm.add(vec.tobytes())
            gens.append(GeometricMean(vec))
    lam = 0.5 ** np.arange(1, count + 1)
    lam /= lam.sum()
    return list(zip(gens, lam))


# -- serialization --------------------------------------------------------

def generator_to_json(gen: GeneratingFunction) -> str:
    """Structured-text form of a generator; round-trips bit-exactly."""
    return json.dumps(gen.to_dict(), separators=(",", ":"))


def _from_dict(data: dict) -> GeneratingFunction:
    kind = data.get("kind")
    if kind == "geometric_mean":
        gen = GeometricMean(np.asarray(data["weights"], dtype=float))
    elif kind == "min_affine":
        gen = MinAffine(np.asarray(data["coeffs"], dtype=float),
                        np.asarray(data["offsets"], dtype=float),
                        label=data.get("label", ""))
    elif kind == "log_blend":
        parts = [(_from_dict(part["generator"]), part["weight"]) for part in data["parts"]]
        gen = LogBlend(parts)
    else:
        raise GeneratorError(f"unknown generator kind {kind!r}")
    gen.c = float(data["c"])
    return gen


def generator_from_json(text: str) -> GeneratingFunction:
    return _from_dict(json.loads(text))
