"""Control policies over the sparse observation window.

Every policy maps a ControlQuery (time + observation window) to a
ControlAction: a zero-mean control field given either as truncated Fourier
coefficients or as a dense grid field.  The policies themselves are
deterministic; measurement noise lives entirely in the sensing layer.

Included: the zero baseline, the instantaneous sparse spectral
reconstruction baseline, the privileged full-information expert, the
constructive window-extrapolation estimator (binomial time extrapolation
over disjoint lag sets, exact-isometry least-squares reconstruction,
spectral Poisson inversion), exponential-weight aggregation over an expert
action library, and the linear window policy trained by ERM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensing import ObservationWindow
from .spectral import (
    FourierCoeffs,
    SpatialField,
    dirichlet_project,
    eval_trig,
    fourier_forward,
    fourier_inverse,
    poisson_coeffs,
)


@dataclass(frozen=True)
class ControlQuery:
    t: float
    window: ObservationWindow
    burn_in_elapsed: bool


@dataclass(frozen=True)
class ControlAction:
    """Zero-mean control field from one policy query."""

    policy: str
    coeffs: FourierCoeffs | None = None
    field: SpatialField | None = None

    def __post_init__(self):
        if (self.coeffs is None) == (self.field is None):
            raise ValueError("exactly one of coeffs or field must be set")
        if self.coeffs is not None and self.coeffs.mean != 0.0:
            raise ValueError("control coefficients must be mean-free")

    def as_field(self, nx: int) -> SpatialField:
        if self.field is not None:
            if self.field.nx != nx:
                raise ValueError(f"dense control on {self.field.nx} nodes, grid has {nx}")
            return self.field
        return fourier_inverse(self.coeffs, nx)

    def as_coeffs(self, M: int) -> FourierCoeffs:
        if self.coeffs is not None:
            return self.coeffs.truncated(M)
        c = fourier_forward(self.field, M)
        return FourierCoeffs(a=c.a, b=c.b, mean=0.0, Lx=c.Lx)


def _negate(c: FourierCoeffs) -> FourierCoeffs:
    return FourierCoeffs(a=-c.a, b=-c.b, mean=0.0, Lx=c.Lx)


def _require_active(q: ControlQuery, name: str) -> None:
    if not q.burn_in_elapsed:
        raise RuntimeError(f"{name} queried during burn-in; the runner must supply zero")


class ZeroControl:
    """B0: no external control."""

    name = "b0"
    min_window_columns = 1

    def __init__(self, Lx: float):
        self.Lx = Lx

    def query(self, q: ControlQuery) -> ControlAction:
        return ControlAction(
            policy=self.name, coeffs=FourierCoeffs(a=[0.0], b=[0.0], mean=0.0, Lx=self.Lx)
        )


class InstantSpectralControl:
    """B1: Poisson-invert the newest sensor column, zero-padding high modes."""

    name = "b1"

    def __init__(self, Lx: float, N: int):
        if (N - 1) // 2 < 1:
            raise ValueError("need at least 3 sensors to resolve one mode")
        self.Lx = Lx
        self.N = N
        self.min_window_columns = 1

    def query(self, q: ControlQuery) -> ControlAction:
        _require_active(q, self.name)
        newest = q.window.column_at_lag(0)
        rho_hat = dirichlet_project(newest, self.N, self.Lx)
        return ControlAction(policy=self.name, coeffs=_negate(poisson_coeffs(rho_hat)))


class ExpertControl:
    """B2: privileged cancellation of the solver-internal electric field.

    The runner recognizes this policy and cancels the total force exactly;
    query() exists only for the injected-field form.
    """

    name = "expert"
    min_window_columns = 1

    def query(self, q: ControlQuery) -> ControlAction:
        raise RuntimeError("expert control uses the solver-internal field; run it through the closed-loop runner")

    @staticmethod
    def action_from_field(true_E: SpatialField) -> ControlAction:
        return ControlAction(policy="expert", field=SpatialField(values=-true_E.values, Lx=true_E.Lx))


def binomial_weights(p: int) -> np.ndarray:
    """Alternating binomial weights (-1)^(j-1) C(p, j), j = 1..p (exact ints)."""
    if p < 1:
        raise ValueError("extrapolation order must be >= 1")
    return np.array([(-1) ** (j - 1) * math.comb(p, j) for j in range(1, p + 1)], dtype=float)


def binomial_extrap(readings_by_lag: np.ndarray, k: int, p: int) -> np.ndarray | float:
    """Order-p backward extrapolation from lags k, 2k, ..., pk.

    `readings_by_lag` is indexed by lag along its last axis (lag 0 = newest
    sample).  Exact on densities polynomial in time of degree <= p-1.
    """
    readings_by_lag = np.asarray(readings_by_lag, dtype=float)
    if k < 1:
        raise ValueError("base lag index must be >= 1")
    if p * k > readings_by_lag.shape[-1] - 1:
        raise ValueError(
            f"lag {p * k} beyond window of {readings_by_lag.shape[-1]} columns"
        )
    w = binomial_weights(p)
    taps = readings_by_lag[..., [j * k for j in range(1, p + 1)]]
    return taps @ w


@dataclass(frozen=True)
class ExtrapolationConfig:
    """Geometry of the constructive window estimator."""

    p: int
    K: int
    M: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("extrapolation order must be >= 1")
        if self.K < 2 * self.p**2:
            raise ValueError(f"window horizon K={self.K} < 2 p^2 = {2 * self.p**2}")
        if self.M < 1:
            raise ValueError("reconstruction degree must be >= 1")

    def index_set(self) -> list[int]:
        """Base lags whose tap sets {jk : j <= p} are pairwise disjoint."""
        lo = (self.p - 1) * self.K // (self.p**2) + 1
        hi = self.K // self.p
        return list(range(lo, hi + 1))

    @property
    def J(self) -> int:
        return len(self.index_set())

    @property
    def max_lag(self) -> int:
        return self.p * (self.K // self.p)

    @property
    def min_window_columns(self) -> int:
        return self.max_lag + 1


class WindowExtrapolationControl:
    """pi0: averaged binomial extrapolation per sensor, then least-squares
    Fourier reconstruction through the exact sampling isometry, then Poisson
    inversion and negation."""

    name = "pi0"

    def __init__(self, cfg: ExtrapolationConfig, Lx: float, N: int):
        if N <= 2 * cfg.M:
            raise ValueError(f"need N > 2M sensors, got N={N}, M={cfg.M}")
        self.cfg = cfg
        self.Lx = Lx
        self.N = N
        self.min_window_columns = cfg.min_window_columns

    def estimate_readings(self, window: ObservationWindow) -> np.ndarray:
        """Averaged per-sensor extrapolation to the current time."""
        cfg = self.cfg
        if window.K - 1 < cfg.max_lag:
            raise ValueError(
                f"window has {window.K} columns; estimator needs {cfg.min_window_columns}"
            )
        by_lag = window.matrix[:, ::-1]
        acc = np.zeros(window.N)
        for k in cfg.index_set():
            acc += binomial_extrap(by_lag, k, cfg.p)
        return acc / cfg.J

    def query(self, q: ControlQuery) -> ControlAction:
        _require_active(q, self.name)
        if not q.window.full:
            raise RuntimeError("pi0 queried before the window filled")
        ytilde = self.estimate_readings(q.window)
        rho_hat = dirichlet_project(ytilde, self.N, self.Lx).truncated(self.cfg.M)
        return ControlAction(policy=self.name, coeffs=_negate(poisson_coeffs(rho_hat)))


@dataclass
class AggregationConfig:
    """Exponential-weight mixture over a library of candidate control fields."""

    atoms: np.ndarray  # (n_atoms, 2 M) stacked [a | b] rows, mean-free
    M: int
    Lx: float
    tau: float
    N: int

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if self.atoms.shape[0] < 1 or self.atoms.shape[1] != 2 * self.M:
            raise ValueError("atom library must be nonempty with 2M columns")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")


def atoms_from_actions(actions: list[FourierCoeffs], N: int, Lx: float, cap: int = 2000) -> np.ndarray:
    """Sensor-space projection of an expert action library.

    Each action is sampled at the N sensor nodes and Dirichlet-projected,
    which is the occupancy measure the aggregation weighs over; the mean
    component is dropped (control fields are mean-free).  Uniform thinning
    caps the library size.
    """
    if not actions:
        raise ValueError("empty action library")
    if len(actions) > cap:
        idx = np.linspace(0, len(actions) - 1, cap).round().astype(int)
        actions = [actions[i] for i in idx]
    xi = np.arange(N) * Lx / N
    rows = []
    for c in actions:
        proj = dirichlet_project(np.asarray(eval_trig(c, xi), dtype=float), N, Lx)
        rows.append(np.concatenate([proj.a, proj.b]))
    return np.vstack(rows)


def exp_weight_aggregate(
    y: FourierCoeffs, cfg: AggregationConfig
) -> tuple[FourierCoeffs, np.ndarray]:
    """Posterior-mean atom under weights exp(-N ||f - y||^2 / tau).

    Distances use the normalized L2 norm (Parseval on coefficients), the
    form tied to the sensor sampling isometry.  The exponent is
    max-subtracted for stability; degenerate all-equal distances give
    uniform weights.  Returns the mixture and the weights for inspection.
    """
    yv = np.concatenate([y.truncated(cfg.M).a, y.truncated(cfg.M).b])
    dist_sq = 0.5 * np.sum((cfg.atoms - yv) ** 2, axis=1)
    logits = -cfg.N * dist_sq / cfg.tau
    logits -= logits.max()
    w = np.exp(logits)
    w /= w.sum()
    mix = w @ cfg.atoms
    coeffs = FourierCoeffs(a=mix[: cfg.M], b=mix[cfg.M :], mean=0.0, Lx=cfg.Lx)
    return coeffs, w


class ExponentialWeightControl:
    """Aggregation policy: smooth the base estimator toward the atom library."""

    name = "agg"

    def __init__(self, base: WindowExtrapolationControl, cfg: AggregationConfig):
        if cfg.M != base.cfg.M:
            raise ValueError("atom degree must match the base estimator degree")
        self.base = base
        self.cfg = cfg
        self.min_window_columns = base.min_window_columns

    def query(self, q: ControlQuery) -> ControlAction:
        y = self.base.query(q).coeffs
        coeffs, _ = exp_weight_aggregate(y, self.cfg)
        return ControlAction(policy=self.name, coeffs=coeffs)


@dataclass
class LinearPolicy:
    """Linear map from the flattened window (plus bias) to control coefficients."""

    W: np.ndarray  # (2 mf, N K + 1)
    N: int
    K: int
    mf: int
    Lx: float
    ridge: float = 0.0

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.shape != (2 * self.mf, self.N * self.K + 1):
            raise ValueError(
                f"weight shape {self.W.shape} does not match "
                f"({2 * self.mf}, {self.N * self.K + 1})"
            )
        if not np.all(np.isfinite(self.W)):
            raise ValueError("non-finite policy weights")

    def features(self, window_matrix: np.ndarray) -> np.ndarray:
        flat = np.asarray(window_matrix, dtype=float).reshape(-1)
        if flat.size != self.N * self.K:
            raise ValueError(f"window size {flat.size} != N*K = {self.N * self.K}")
        return np.concatenate([flat, [1.0]])

    def apply(self, window_matrix: np.ndarray) -> FourierCoeffs:
        out = self.W @ self.features(window_matrix)
        return FourierCoeffs(a=out[: self.mf], b=out[self.mf :], mean=0.0, Lx=self.Lx)

    def operator_norm_inf(self) -> float:
        """Lipschitz constant sup-norm(output) <= L * max|window entry|."""
        kappa = np.abs(self.W[:, :-1]).sum(axis=1)
        return float(np.sum(kappa))


class LinearWindowControl:
    name = "linear"

    def __init__(self, policy: LinearPolicy):
        self.policy = policy
        self.min_window_columns = policy.K

    def query(self, q: ControlQuery) -> ControlAction:
        _require_active(q, self.name)
        if not q.window.full:
            raise RuntimeError("linear policy queried before the window filled")
        if q.window.K != self.policy.K:
            raise ValueError(
                f"window has {q.window.K} columns, policy trained on {self.policy.K}"
            )
        return ControlAction(policy=self.name, coeffs=self.policy.apply(q.window.matrix))
