"""Ordinary Kriging surrogate of a scalar system response.

The surrogate interpolates observed responses with a constant trend plus a
zero-mean Gaussian process with anisotropic squared-exponential kernel

    R(a, b) = prod_k exp(-theta_k (a_k - b_k)^2).

Lengthscale parameters are found by minimizing the reduced likelihood
objective |R|^(1/m) * sigma^2 with a deterministic multi-start compass
search in log10(theta). Inputs are standardized internally (the bridge
mixes magnitudes from 1e-3 to 1e11); predictions are returned in physical
units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular


class KrigingError(Exception):
    pass


class DuplicatePointError(KrigingError):
    """A training input coincides with an existing row within 1e-12 relative."""


class SingularCorrelationError(KrigingError):
    """Correlation matrix stayed singular through nugget escalation."""


def correlation(a, b, theta) -> float:
    """Squared-exponential kernel value for one pair of points; in (0, 1]."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    if not (a.size == b.size == theta.size):
        raise ValueError("dimension mismatch between points and theta")
    if np.any(theta <= 0.0):
        raise ValueError("theta components must be positive")
    return float(np.exp(-np.sum(theta * (a - b) ** 2)))


class TrainingSet:
    """Mutable collection of (input row, response) pairs; rejects duplicates."""

    def __init__(self, inputs=None, outputs=None):
        self._inputs: list[np.ndarray] = []
        self._outputs: list[float] = []
        if inputs is not None:
            inputs = np.asarray(inputs, dtype=float)
            outputs = np.asarray(outputs, dtype=float).ravel()
            if inputs.shape[0] != outputs.size:
                raise ValueError("outputs length must equal inputs row count")
            for row, y in zip(inputs, outputs):
                self.add(row, y)

    def add(self, x, y: float) -> None:
        x = np.asarray(x, dtype=float).ravel()
        for row in self._inputs:
            scale = np.maximum(np.maximum(np.abs(row), np.abs(x)), 1e-300)
            if np.max(np.abs(row - x) / scale) <= 1e-12:
                raise DuplicatePointError("training input duplicates an existing row")
        self._inputs.append(x.copy())
        self._outputs.append(float(y))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float).ravel()
        for row in self._inputs:
            scale = np.maximum(np.maximum(np.abs(row), np.abs(x)), 1e-300)
            if np.max(np.abs(row - x) / scale) <= 1e-12:
                return True
        return False

    @property
    def m(self) -> int:
        return len(self._inputs)

    @property
    def dim(self) -> int:
        return self._inputs[0].size if self._inputs else 0

    @property
    def inputs(self) -> np.ndarray:
        return np.array(self._inputs, dtype=float)

    @property
    def outputs(self) -> np.ndarray:
        return np.array(self._outputs, dtype=float)

    def copy(self) -> "TrainingSet":
        out = TrainingSet()
        out._inputs = [r.copy() for r in self._inputs]
        out._outputs = list(self._outputs)
        return out


@dataclass(frozen=True)
class Prediction:
    mean: float
    sd: float


class Predictions:
    """Batch of predictions; behaves as a sequence of Prediction."""

    __slots__ = ("mean", "sd")

    def __init__(self, mean: np.ndarray, sd: np.ndarray):
        self.mean = np.asarray(mean, dtype=float)
        self.sd = np.asarray(sd, dtype=float)
        self.mean.setflags(write=False)
        self.sd.setflags(write=False)

    def __len__(self) -> int:
        return self.mean.size

    def __getitem__(self, i) -> Prediction:
        return Prediction(float(self.mean[i]), float(self.sd[i]))

    def __iter__(self):
        for m, s in zip(self.mean, self.sd):
            yield Prediction(float(m), float(s))


@dataclass
class KrigingOptions:
    """Hyperparameter-search and conditioning knobs for ``fit``."""

    standardize: bool = True
    # (shift, scale) per input dimension; candidate-pool statistics when
    # available, else training statistics.
    input_stats: tuple | None = None
    log10_theta_lo: float = -4.0
    log10_theta_hi: float = 3.0
    n_starts: int = 5
    tol: float = 1e-4
    # 1e-10 keeps training-point reproduction inside 1e-6 of the output
    # range on smooth data; escalation handles clustered points.
    nugget: float = 1e-10
    max_nugget: float = 1e-4
    warm_theta: np.ndarray | None = None  # standardized-space seed for the search
    max_evals: int = 3000


@dataclass
class KrigingModel:
    """Fitted surrogate. Immutable after construction; share freely."""

    training: TrainingSet
    theta: np.ndarray  # standardized-input space
    beta: float  # standardized-output space
    sigma2: float  # standardized-output space
    nugget: float
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: float
    y_scale: float
    # cached factorization pieces (standardized spaces)
    _xs: np.ndarray = field(repr=False)
    _chol: np.ndarray = field(repr=False)
    _rinv: np.ndarray = field(repr=False)  # R^-1 (for batched variance)
    _alpha: np.ndarray = field(repr=False)  # R^-1 (y - beta)
    _w1: np.ndarray = field(repr=False)  # R^-1 1
    _c1: float = field(repr=False)  # 1^T R^-1 1

    @property
    def dim(self) -> int:
        return self.theta.size

    @property
    def beta_physical(self) -> float:
        return self.y_shift + self.y_scale * self.beta

    @property
    def sigma2_physical(self) -> float:
        return self.y_scale**2 * self.sigma2

    @property
    def theta_physical(self) -> np.ndarray:
        return self.theta / self.x_scale**2

    def to_json(self) -> str:
        """Self-describing record; full-precision decimals, replayable."""
        doc = {
            "model": "ordinary-kriging-gaussian-kernel",
            "theta": self.theta.tolist(),
            "beta": self.beta,
            "sigma2": self.sigma2,
            "nugget": self.nugget,
            "x_shift": self.x_shift.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_shift": self.y_shift,
            "y_scale": self.y_scale,
            "training_inputs": self.training.inputs.tolist(),
            "training_outputs": self.training.outputs.tolist(),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "KrigingModel":
        doc = json.loads(text)
        if doc.get("model") != "ordinary-kriging-gaussian-kernel":
            raise KrigingError("not a serialized kriging model")
        training = TrainingSet(doc["training_inputs"], doc["training_outputs"])
        return _assemble(
            training,
            theta=np.asarray(doc["theta"], dtype=float),
            beta=float(doc["beta"]),
            sigma2=float(doc["sigma2"]),
            nugget=float(doc["nugget"]),
            x_shift=np.asarray(doc["x_shift"], dtype=float),
            x_scale=np.asarray(doc["x_scale"], dtype=float),
            y_shift=float(doc["y_shift"]),
            y_scale=float(doc["y_scale"]),
        )


def _standardization(training: TrainingSet, options: KrigingOptions):
    x = training.inputs
    y = training.outputs
    if not options.standardize:
        return np.zeros(x.shape[1]), np.ones(x.shape[1]), 0.0, 1.0
    if options.input_stats is not None:
        x_shift = np.asarray(options.input_stats[0], dtype=float)
        x_scale = np.asarray(options.input_stats[1], dtype=float)
    else:
        x_shift = x.mean(axis=0)
        x_scale = x.std(axis=0)
    x_scale = np.where(x_scale > 0.0, x_scale, 1.0)
    y_shift = float(y.mean())
    y_sd = float(y.std())
    y_scale = y_sd if y_sd > 0.0 else 1.0
    return x_shift, x_scale, y_shift, y_scale


def _reduced_objective(d2, ys, nugget):
    """Return f(log10 theta) -> log(|R|^(1/m) sigma2), +inf on failed factorization."""
    m = ys.size
    ones = np.ones(m)

    def objective(v):
        theta = 10.0**v
        r = np.exp(-(d2 @ theta))
        r[np.diag_indices_from(r)] = 1.0 + nugget
        try:
            ll = cholesky(r, lower=True)
        except np.linalg.LinAlgError:
            return math.inf
        w1 = solve_triangular(ll, ones, lower=True)
        wy = solve_triangular(ll, ys, lower=True)
        beta = float(w1 @ wy) / float(w1 @ w1)
        res = wy - beta * w1
        sigma2 = float(res @ res) / m
        logdet_mth = (2.0 / m) * float(np.sum(np.log(np.diag(ll))))
        return logdet_mth + math.log(max(sigma2, 1e-300))

    return objective


def _compass_search(f, v0, lo, hi, step0, tol, budget):
    """Deterministic bounded pattern search; returns (v_best, f_best, evals)."""
    v = np.clip(np.asarray(v0, dtype=float), lo, hi)
    fv = f(v)
    evals = 1
    step = step0
    d = v.size
    while step >= tol and evals < budget:
        improved = False
        for k in range(d):
            for s in (1.0, -1.0):
                cand = v.copy()
                cand[k] = min(max(cand[k] + s * step, lo), hi)
                if cand[k] == v[k]:
                    continue
                fc = f(cand)
                evals += 1
                if fc < fv:
                    v, fv = cand, fc
                    improved = True
                    # ride the improving direction
                    while evals < budget:
                        nxt = v.copy()
                        nxt[k] = min(max(nxt[k] + s * step, lo), hi)
                        if nxt[k] == v[k]:
                            break
                        fn = f(nxt)
                        evals += 1
                        if fn < fv:
                            v, fv = nxt, fn
                        else:
                            break
                    break
        if not improved:
            step *= 0.5
    return v, fv, evals


def fit(training: TrainingSet, options: KrigingOptions | None = None) -> KrigingModel:
    """Fit an ordinary-Kriging model by minimizing |R|^(1/m) sigma^2 over theta.

    Deterministic: identical training set and options give bit-identical
    hyperparameters. Raises SingularCorrelationError if the correlation
    matrix stays unfactorizable through nugget escalation.
    """
    options = options or KrigingOptions()
    m = training.m
    if m < 2:
        raise KrigingError("at least 2 training points are required")
    x = training.inputs
    y = training.outputs
    d = x.shape[1]
    x_shift, x_scale, y_shift, y_scale = _standardization(training, options)
    xs = (x - x_shift) / x_scale
    ys = (y - y_shift) / y_scale

    diff = xs[:, None, :] - xs[None, :, :]
    d2 = diff * diff  # (m, m, d)

    lo, hi = options.log10_theta_lo, options.log10_theta_hi
    nugget = options.nugget
    while True:
        f = _reduced_objective(d2, ys, nugget)
        starts: list[tuple[np.ndarray, float]] = []
        if options.warm_theta is not None:
            warm = np.clip(np.log10(np.asarray(options.warm_theta, dtype=float)), lo, hi)
            starts.append((warm, 0.1))
            for iso in (0.0, -2.0):
                starts.append((np.full(d, iso), 0.5))
        else:
            for iso in (0.0, -1.0, -2.0, 1.0, 2.0)[: options.n_starts]:
                starts.append((np.full(d, iso), 0.5))
        best_v, best_f = None, math.inf
        for v0, step0 in starts:
            v, fv, _ = _compass_search(f, v0, lo, hi, step0, options.tol, options.max_evals)
            if fv < best_f:
                best_v, best_f = v, fv
        if best_f < math.inf:
            break
        if nugget >= options.max_nugget:
            raise SingularCorrelationError(
                f"correlation matrix singular up to nugget {nugget:g}"
            )
        nugget = min(nugget * 10.0, options.max_nugget)

    theta = 10.0**best_v
    return _assemble(
        training, theta, None, None, nugget, x_shift, x_scale, y_shift, y_scale
    )


def _assemble(training, theta, beta, sigma2, nugget, x_shift, x_scale, y_shift, y_scale):
    """Build the cached factorization (escalating nugget if needed)."""
    xs = (training.inputs - x_shift) / x_scale
    ys = (training.outputs - y_shift) / y_scale
    m = ys.size
    diff = xs[:, None, :] - xs[None, :, :]
    r = np.exp(-np.einsum("ijk,k->ij", diff * diff, theta))
    ll = None
    while ll is None:
        rr = r.copy()
        rr[np.diag_indices_from(rr)] = 1.0 + nugget
        try:
            ll = cholesky(rr, lower=True)
        except np.linalg.LinAlgError:
            if nugget >= 1e-4:
                raise SingularCorrelationError(
                    "correlation matrix singular at maximum nugget"
                ) from None
            nugget = min(nugget * 10.0, 1e-4)
    ones = np.ones(m)
    w1l = solve_triangular(ll, ones, lower=True)
    wyl = solve_triangular(ll, ys, lower=True)
    c1 = float(w1l @ w1l)
    if beta is None:
        beta = float(w1l @ wyl) / c1
    if sigma2 is None:
        resl = wyl - beta * w1l
        sigma2 = float(resl @ resl) / m
    alpha = solve_triangular(ll.T, wyl - beta * w1l, lower=False)
    w1 = solve_triangular(ll.T, w1l, lower=False)
    return KrigingModel(
        training=training,
        theta=np.asarray(theta, dtype=float),
        beta=float(beta),
        sigma2=float(sigma2),
        nugget=float(nugget),
        x_shift=np.asarray(x_shift, dtype=float),
        x_scale=np.asarray(x_scale, dtype=float),
        y_shift=float(y_shift),
        y_scale=float(y_scale),
        _xs=xs,
        _chol=ll,
        _alpha=alpha,
        _w1=w1,
        _c1=c1,
    )


def predict(model: KrigingModel, points, chunk: int = 20000) -> Predictions:
    """Predictive mean and standard deviation at each row of ``points``.

    Accepts an (n, d) array (or anything with a ``values`` attribute
    holding one). Evaluation is chunked to bound memory; results match
    per-point evaluation exactly.
    """
    pts = getattr(points, "values", points)
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.shape[1] != model.dim:
        raise ValueError("points dimension does not match training dimension")
    ps = (pts - model.x_shift) / model.x_scale
    sq = np.sqrt(model.theta)
    xw = model._xs * sq
    xw_norm2 = np.einsum("ij,ij->i", xw, xw)
    n = ps.shape[0]
    mean = np.empty(n)
    sd = np.empty(n)
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        pw = ps[a:b] * sq
        d2 = np.maximum(
            np.einsum("ij,ij->i", pw, pw)[:, None] + xw_norm2[None, :] - 2.0 * (pw @ xw.T),
            0.0,
        )
        r = np.exp(-d2)  # (c, m)
        mean[a:b] = model.y_shift + model.y_scale * (model.beta + r @ model._alpha)
        t = solve_triangular(model._chol, r.T, lower=True)
        quad = np.einsum("ij,ij->j", t, t)
        u = r @ model._w1 - 1.0
        var = model.sigma2 * (1.0 - quad + u * u / model._c1)
        sd[a:b] = model.y_scale * np.sqrt(np.maximum(var, 0.0))
    if single:
        return Predictions(mean[:1], sd[:1])
    return Predictions(mean, sd)
