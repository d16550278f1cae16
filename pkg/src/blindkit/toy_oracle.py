"""Exact finite-alphabet oracle for the proxy-distortion identities.

A ToyChannel is a fully enumerable joint distribution over a clean
signal X (vectors from a finite alphabet) and a measurement Y, and a
ToyEstimator is a possibly randomized map Y -> X-hat. Every expectation
of interest (MSE, the posterior-mean MSE d*, the proxy distortion
E||X-hat - X*||^2, consistency against a supplied re-degradation table)
is computed by exact summation, so the decomposition

    MSE(X, X-hat) = d* + E||X-hat - X*||^2

and the perturbation bound |delta ProxMSE| <= E[||R||^2 + 4 ||R||_1]
can be verified to float accuracy with no Monte Carlo anywhere. Alphabet
sizes are capped (64 states, 16 dims) to keep every check instant.

`verify_prop1` and `verify_bound` return small report objects rather
than raising on violations, so callers can print per-estimator
residuals. `random_channel` / `random_estimator` build reproducible
stress suites (flat Dirichlet rows, uniform alphabets).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensor_io import SeededRng

__all__ = [
    "BoundReport",
    "Prop1Report",
    "ToyChannel",
    "ToyEstimator",
    "bsc_channel",
    "identity_estimator",
    "mmse_value",
    "posterior_mean",
    "posterior_mean_table",
    "random_channel",
    "random_estimator",
    "toy_cmse",
    "toy_mse",
    "toy_proxmse",
    "transform_channel",
    "transform_estimator",
    "verify_bound",
    "verify_prop1",
]

_MAX_STATES = 64
_MAX_DIM = 16
_SUM_TOL = 1e-12


def _as_matrix(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a list of vectors")
    return arr


@dataclass(frozen=True)
class ToyChannel:
    """Finite joint distribution p(x) p(y|x) over vector alphabets."""

    x_alphabet: np.ndarray  # (n_x, d)
    x_prior: np.ndarray  # (n_x,)
    y_alphabet: np.ndarray  # (n_y, d_y)
    likelihood: np.ndarray  # (n_x, n_y), rows sum to 1

    def __post_init__(self):
        object.__setattr__(self, "x_alphabet", _as_matrix(self.x_alphabet, "x_alphabet"))
        object.__setattr__(self, "y_alphabet", _as_matrix(self.y_alphabet, "y_alphabet"))
        object.__setattr__(self, "x_prior", np.asarray(self.x_prior, dtype=np.float64))
        object.__setattr__(self, "likelihood", np.asarray(self.likelihood, dtype=np.float64))
        n_x, d = self.x_alphabet.shape
        n_y = self.y_alphabet.shape[0]
        if n_x > _MAX_STATES or n_y > _MAX_STATES:
            raise ValueError(f"alphabet sizes capped at {_MAX_STATES} states")
        if d > _MAX_DIM or self.y_alphabet.shape[1] > _MAX_DIM:
            raise ValueError(f"alphabet dimension capped at {_MAX_DIM}")
        if self.x_prior.shape != (n_x,):
            raise ValueError("prior length must match the x alphabet")
        if self.likelihood.shape != (n_x, n_y):
            raise ValueError("likelihood must be (|X|, |Y|)")
        if np.any(self.x_prior < 0) or np.any(self.likelihood < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(self.x_prior.sum()) - 1.0) > _SUM_TOL:
            raise ValueError("prior must sum to 1")
        rowsums = self.likelihood.sum(axis=1)
        if np.any(np.abs(rowsums - 1.0) > _SUM_TOL):
            raise ValueError("every likelihood row must sum to 1")
        for arr in (self.x_alphabet, self.x_prior, self.y_alphabet, self.likelihood):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel entries must be finite")
            arr.setflags(write=False)

    @property
    def n_x(self) -> int:
        return self.x_alphabet.shape[0]

    @property
    def n_y(self) -> int:
        return self.y_alphabet.shape[0]

    def y_marginal(self) -> np.ndarray:
        return self.x_prior @ self.likelihood

    def to_json(self) -> str:
        return json.dumps(
            {
                "x_alphabet": self.x_alphabet.tolist(),
                "x_prior": self.x_prior.tolist(),
                "y_alphabet": self.y_alphabet.tolist(),
                "likelihood": self.likelihood.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ToyChannel":
        d = json.loads(text)
        return cls(
            x_alphabet=np.array(d["x_alphabet"]),
            x_prior=np.array(d["x_prior"]),
            y_alphabet=np.array(d["y_alphabet"]),
            likelihood=np.array(d["likelihood"]),
        )


@dataclass(frozen=True)
class ToyEstimator:
    """Randomized estimator: y index -> distribution over output vectors."""

    outputs: np.ndarray  # (n_out, d)
    table: np.ndarray  # (n_y, n_out), rows sum to 1

    def __post_init__(self):
        object.__setattr__(self, "outputs", _as_matrix(self.outputs, "outputs"))
        object.__setattr__(self, "table", np.asarray(self.table, dtype=np.float64))
        if self.table.ndim != 2 or self.table.shape[1] != self.outputs.shape[0]:
            raise ValueError("table must be (|Y|, |outputs|)")
        if np.any(self.table < 0):
            raise ValueError("estimator probabilities must be nonnegative")
        if np.any(np.abs(self.table.sum(axis=1) - 1.0) > _SUM_TOL):
            raise ValueError("every estimator row must sum to 1")
        for arr in (self.outputs, self.table):
            if not np.all(np.isfinite(arr)):
                raise ValueError("estimator entries must be finite")
            arr.setflags(write=False)


# ---------------------------------------------------------------------------
# Exact expectations


def posterior_mean(ch: ToyChannel, y_index: int) -> np.ndarray:
    """X*(y) = E[X | Y=y] by enumeration; zero-probability y is an error."""
    w = ch.x_prior * ch.likelihood[:, y_index]
    p_y = float(w.sum())
    if p_y <= 0.0:
        raise ValueError(f"y index {y_index} has zero probability")
    return (w @ ch.x_alphabet) / p_y


def posterior_mean_table(ch: ToyChannel) -> np.ndarray:
    """X*(y) for every y; zero-probability rows are filled with zeros.

    The zero fill is harmless: those rows only ever enter expectations
    multiplied by p(y) = 0.
    """
    w = ch.x_prior[:, None] * ch.likelihood  # (n_x, n_y)
    p_y = w.sum(axis=0)
    table = np.zeros((ch.n_y, ch.x_alphabet.shape[1]))
    pos = p_y > 0
    table[pos] = (w.T[pos] @ ch.x_alphabet) / p_y[pos, None]
    return table


def mmse_value(ch: ToyChannel) -> float:
    """d* = E||X - X*(Y)||^2, the MSE of the posterior-mean estimator."""
    star = posterior_mean_table(ch)
    total = 0.0
    for i in range(ch.n_x):
        diffs = ch.x_alphabet[i][None, :] - star  # (n_y, d)
        total += float(ch.x_prior[i] * (ch.likelihood[i] @ np.sum(diffs * diffs, axis=1)))
    return total


def _check_outputs(ch: ToyChannel, est: ToyEstimator) -> None:
    if est.table.shape[0] != ch.n_y:
        raise ValueError("estimator table rows must match the y alphabet")
    if est.outputs.shape[1] != ch.x_alphabet.shape[1]:
        raise ValueError("estimator outputs must live in the x alphabet's space")


def toy_mse(ch: ToyChannel, est: ToyEstimator) -> float:
    """E||X - X-hat||^2 over the joint (x, y, x-hat) distribution."""
    _check_outputs(ch, est)
    # sq[i, k] = ||x_i - out_k||^2
    d = ch.x_alphabet[:, None, :] - est.outputs[None, :, :]
    sq = np.sum(d * d, axis=2)
    joint = (ch.x_prior[:, None] * ch.likelihood) @ est.table  # (n_x, n_out)
    return float(np.sum(joint * sq))


def toy_proxmse(ch: ToyChannel, est: ToyEstimator) -> float:
    """E||X-hat - X*(Y)||^2, the exact proxy distortion."""
    _check_outputs(ch, est)
    star = posterior_mean_table(ch)
    p_y = ch.y_marginal()
    d = est.outputs[None, :, :] - star[:, None, :]  # (n_y, n_out, d)
    sq = np.sum(d * d, axis=2)
    return float(np.sum(p_y[:, None] * est.table * sq))


def toy_cmse(ch: ToyChannel, est: ToyEstimator, mu_table: np.ndarray) -> float:
    """E||Y - mu(X-hat)||^2 with a caller-supplied re-degradation table.

    mu_table maps each estimator output index to its expected measurement
    vector, shape (|outputs|, d_y).
    """
    _check_outputs(ch, est)
    mu = _as_matrix(mu_table, "mu_table")
    if mu.shape != (est.outputs.shape[0], ch.y_alphabet.shape[1]):
        raise ValueError(
            f"mu_table must be (|outputs|, d_y) = {(est.outputs.shape[0], ch.y_alphabet.shape[1])}, got {mu.shape}"
        )
    p_y = ch.y_marginal()
    d = ch.y_alphabet[:, None, :] - mu[None, :, :]
    sq = np.sum(d * d, axis=2)
    return float(np.sum(p_y[:, None] * est.table * sq))


# ---------------------------------------------------------------------------
# Verification reports


@dataclass(frozen=True)
class Prop1Report:
    ok: bool
    max_residual: float
    mse_values: tuple[float, ...]
    proxmse_values: tuple[float, ...]
    mse_ranking: tuple[int, ...]
    proxmse_ranking: tuple[int, ...]
    violations: tuple[str, ...]


def verify_prop1(ch: ToyChannel, estimators: list[ToyEstimator]) -> Prop1Report:
    """Check MSE = d* + ProxMSE and the induced rankings estimator-wise.

    The residual tolerance is 1e-10; rankings sort by value with the list
    index breaking ties, so two exactly tied estimators compare equal in
    both orders.
    """
    if len(estimators) < 2:
        raise ValueError("ranking needs at least 2 estimators")
    d_star = mmse_value(ch)
    mses = [toy_mse(ch, e) for e in estimators]
    proxes = [toy_proxmse(ch, e) for e in estimators]
    violations = []
    max_res = 0.0
    for i, (m, p) in enumerate(zip(mses, proxes)):
        res = abs(p - (m - d_star))
        max_res = max(max_res, res)
        if res > 1e-10:
            violations.append(f"estimator {i}: |ProxMSE - (MSE - d*)| = {res:.3e}")
    rank_m = tuple(sorted(range(len(mses)), key=lambda i: (mses[i], i)))
    rank_p = tuple(sorted(range(len(proxes)), key=lambda i: (proxes[i], i)))
    if rank_m != rank_p:
        violations.append(f"rankings differ: by MSE {rank_m} vs by ProxMSE {rank_p}")
    return Prop1Report(
        ok=not violations,
        max_residual=max_res,
        mse_values=tuple(mses),
        proxmse_values=tuple(proxes),
        mse_ranking=rank_m,
        proxmse_ranking=rank_p,
        violations=tuple(violations),
    )


@dataclass(frozen=True)
class BoundReport:
    ok: bool
    checked: int
    max_ratio: float  # largest |delta| / bound over perturbations with bound > 0
    violations: tuple[str, ...]


def verify_bound(ch: ToyChannel, est: ToyEstimator, perturbations: list[np.ndarray]) -> BoundReport:
    """Check |ProxMSE(X*) - ProxMSE(X* + R)| <= E[||R||^2 + 4 ||R||_1].

    Each perturbation is a table of residuals added to the posterior mean,
    shape (|Y|, d). The inequality needs signal values in [0, 1]: both the
    x alphabet and the estimator outputs are required to sit in the unit
    box.
    """
    _check_outputs(ch, est)
    if np.any(ch.x_alphabet < 0.0) or np.any(ch.x_alphabet > 1.0):
        raise ValueError("bound requires the x alphabet within [0, 1]")
    if np.any(est.outputs < 0.0) or np.any(est.outputs > 1.0):
        raise ValueError("bound requires estimator outputs within [0, 1]")
    star = posterior_mean_table(ch)
    p_y = ch.y_marginal()
    base = toy_proxmse(ch, est)
    violations = []
    max_ratio = 0.0
    for j, r in enumerate(perturbations):
        arr = np.asarray(r, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape != star.shape:
            raise ValueError(f"perturbation {j} must have shape {star.shape}, got {arr.shape}")
        tilde = star + arr
        d = est.outputs[None, :, :] - tilde[:, None, :]
        perturbed = float(np.sum(p_y[:, None] * est.table * np.sum(d * d, axis=2)))
        delta = abs(perturbed - base)
        bound = float(p_y @ (np.sum(arr * arr, axis=1) + 4.0 * np.sum(np.abs(arr), axis=1)))
        if bound > 0:
            max_ratio = max(max_ratio, delta / bound)
        if delta > bound + 1e-12:
            violations.append(f"perturbation {j}: |delta| = {delta:.6e} exceeds bound {bound:.6e}")
    return BoundReport(ok=not violations, checked=len(perturbations), max_ratio=max_ratio, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Linear latent embeddings


def transform_channel(ch: ToyChannel, matrix: np.ndarray) -> ToyChannel:
    """Map the x alphabet through a linear embedding z = E x.

    Posterior means commute with linear maps, so the transformed channel's
    posterior-mean table is exactly E applied to the original one; the
    proxy-distortion identity then holds verbatim in the latent space.
    """
    e = np.asarray(matrix, dtype=np.float64)
    return ToyChannel(
        x_alphabet=ch.x_alphabet @ e.T,
        x_prior=ch.x_prior,
        y_alphabet=ch.y_alphabet,
        likelihood=ch.likelihood,
    )


def transform_estimator(est: ToyEstimator, matrix: np.ndarray) -> ToyEstimator:
    e = np.asarray(matrix, dtype=np.float64)
    return ToyEstimator(outputs=est.outputs @ e.T, table=est.table)


# ---------------------------------------------------------------------------
# Builders


def bsc_channel(p: float) -> ToyChannel:
    """Binary symmetric channel on scalar alphabet {0, 1}, uniform prior."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("flip probability must be in [0, 1]")
    return ToyChannel(
        x_alphabet=np.array([[0.0], [1.0]]),
        x_prior=np.array([0.5, 0.5]),
        y_alphabet=np.array([[0.0], [1.0]]),
        likelihood=np.array([[1.0 - p, p], [p, 1.0 - p]]),
    )


def identity_estimator(ch: ToyChannel) -> ToyEstimator:
    """X-hat = Y (outputs are the y alphabet, rows are one-hot)."""
    return ToyEstimator(outputs=ch.y_alphabet.copy(), table=np.eye(ch.n_y))


def random_channel(rng: SeededRng, n_x: int = 6, n_y: int = 6, d: int = 2) -> ToyChannel:
    """Reproducible random channel: uniform alphabets, flat-Dirichlet rows."""
    g = rng.generator()
    return ToyChannel(
        x_alphabet=g.uniform(0.0, 1.0, (n_x, d)),
        x_prior=g.dirichlet(np.ones(n_x)),
        y_alphabet=g.uniform(0.0, 1.0, (n_y, d)),
        likelihood=np.stack([g.dirichlet(np.ones(n_y)) for _ in range(n_x)]),
    )


def random_estimator(rng: SeededRng, ch: ToyChannel, n_out: int = 5) -> ToyEstimator:
    g = rng.generator()
    return ToyEstimator(
        outputs=g.uniform(0.0, 1.0, (n_out, ch.x_alphabet.shape[1])),
        table=np.stack([g.dirichlet(np.ones(n_out)) for _ in range(ch.n_y)]),
    )
