"""Masked NMF with a piecewise-constant activation penalty.

Minimizes, over nonnegative gains and activations,

    fit + beta * penalty,   with
    fit     = sum_{r,t} w_rt * 0.5 * (s_rt - sum_j gains_rj * act_jt)^2
    penalty = sum_{j, t>=2} rho(act_jt - act_j(t-1)),  rho(x) = x^2/(x^2+eps^2)

by majorization-minimization: each outer iteration recomputes quadratic
transition weights from the previous activations (iterative reweighting),
takes one closed-form activation sweep, one multiplicative gains update, and
renormalizes the gains columns to unit 2-norm (absorbing scale into the
activations) to stop the penalty from draining the activations to zero.

With beta = 0 and a full mask the updates coincide, in exact arithmetic and
elementwise in floating point, with the classical Euclidean multiplicative
NMF rules; the weighted variant handles missing entries by masking both the
data and the current reconstruction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .matrices import FactorPair, MaskedMatrix, ReweightMatrix, ShapeMismatchError

# Activations are floored here after every update: the diagonal majorizer
# divides by the current activation, so an exact zero would lock the
# multiplicative update at zero and poison the next curvature estimate.
ACTIVATION_FLOOR = 1e-12


class NumericFailureError(RuntimeError):
    """Non-finite value appeared in a solver iterate."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration


class DegenerateFactorError(ValueError):
    """A gains column has zero norm and cannot be rescaled."""


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    beta     : weight of the piecewise-constant penalty (0 disables it,
               giving plain weighted NMF).
    epsilon  : smoothing constant; added as-is to the squared transition in
               the reweight denominator, squared inside the penalty kernel.
    rank     : number of factors K.
    max_iters, rel_tol : stop after max_iters outer iterations or when the
               relative objective change drops below rel_tol.
    init_seed: seed for the uniform (0.1, 1.1) factor initialization.
    guard    : tiny positive value protecting denominators.
    """

    beta: float = 5e-3
    epsilon: float = 1e-6
    rank: int = 5
    max_iters: int = 1000
    rel_tol: float = 1e-8
    init_seed: int = 0
    guard: float = 1e-12

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")
        if self.guard <= 0:
            raise ValueError("guard must be > 0")


@dataclass(frozen=True)
class IterationRecord:
    """One outer iteration of the trace.

    fit_after_p holds the weighted fit right after the activation sweep
    (before the gains update); fit/penalty/objective are evaluated at the
    end of the iteration, after rescaling. surrogate_before/after bracket
    the activation sweep. objective == fit + beta * penalty by construction.
    """

    iteration: int
    fit_after_p: float
    fit: float
    penalty: float
    objective: float
    surrogate_before: float
    surrogate_after: float
    clamped: int


@dataclass(frozen=True)
class IterateSnapshot:
    """Raw iterates kept when solve(..., record_factors=True).

    activations_updated / gains_updated are the pre-rescale results of the
    two update steps; pair is the rescaled state the next iteration sees.
    """

    activations_updated: np.ndarray
    gains_updated: np.ndarray
    pair: FactorPair


@dataclass
class SolveTrace:
    records: list[IterationRecord] = field(default_factory=list)
    iterates: list[IterateSnapshot] | None = None
    initial: FactorPair | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records])

    def to_csv(self, path) -> None:
        """Export as CSV with columns iter,fit,penalty,objective."""
        with open(path, "w", newline="") as fh:
            fh.write("iter,fit,penalty,objective\n")
            for rec in self.records:
                fh.write(
                    f"{rec.iteration},{rec.fit!r},{rec.penalty!r},{rec.objective!r}\n"
                )


def _check_compatible(s: MaskedMatrix, gains: np.ndarray, acts: np.ndarray) -> None:
    if s.shape != (gains.shape[0], acts.shape[1]) or gains.shape[1] != acts.shape[0]:
        raise ShapeMismatchError(
            f"measurements {s.shape}, gains {gains.shape}, "
            f"activations {acts.shape} are incompatible"
        )


def _weighted_fit(values: np.ndarray, mask: np.ndarray,
                  gains: np.ndarray, acts: np.ndarray) -> float:
    resid = mask * (values - gains @ acts)
    return 0.5 * float(np.sum(resid * resid))


def weighted_fit(s: MaskedMatrix, pair: FactorPair) -> float:
    """Half the mask-weighted squared reconstruction error."""
    _check_compatible(s, pair.gains, pair.activations)
    return _weighted_fit(s.values, s.mask, pair.gains, pair.activations)


def penalty_smoothed(activations: np.ndarray, epsilon: float) -> float:
    """Smoothed transition count of the activation rows.

    Each consecutive difference d contributes d^2 / (d^2 + epsilon^2),
    which is 0 for a flat pair and approaches 1 for any clear transition.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    acts = np.asarray(activations, dtype=np.float64)
    if acts.shape[1] < 2:
        return 0.0
    d2 = np.square(np.diff(acts, axis=1))
    return float(np.sum(d2 / (d2 + epsilon * epsilon)))


def objective(s: MaskedMatrix, pair: FactorPair, cfg: SolverConfig) -> float:
    """weighted_fit + beta * penalty_smoothed."""
    return weighted_fit(s, pair) + cfg.beta * penalty_smoothed(
        pair.activations, cfg.epsilon
    )


def fit_gradient(s: MaskedMatrix, gains: np.ndarray, acts: np.ndarray) -> np.ndarray:
    """Gradient of the weighted fit w.r.t. the activations, K x T.

    Per slot: -gains^T (w ⊙ s - w ⊙ (gains p)).
    """
    _check_compatible(s, gains, acts)
    return gains.T @ (s.mask * (gains @ acts)) - gains.T @ s.values


def compute_reweights(p_prev: np.ndarray, epsilon: float) -> ReweightMatrix:
    """Quadratic transition weights from the previous activations.

    Interior column t (1..T-1) is 1 / ((p[:,t] - p[:,t-1])^2 + epsilon);
    columns 0 and T are zero so boundary slots have no phantom neighbor.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    acts = np.asarray(p_prev, dtype=np.float64)
    k, t = acts.shape
    weights = np.zeros((k, t + 1))
    if t >= 2:
        weights[:, 1:t] = 1.0 / (np.square(np.diff(acts, axis=1)) + epsilon)
    return ReweightMatrix(weights)


def _shift_right(acts: np.ndarray) -> np.ndarray:
    # left neighbors: column t holds acts[:, t-1], column 0 zero-filled
    out = np.zeros_like(acts)
    out[:, 1:] = acts[:, :-1]
    return out


def _shift_left(acts: np.ndarray) -> np.ndarray:
    # right neighbors: column t holds acts[:, t+1], last column zero-filled
    out = np.zeros_like(acts)
    out[:, :-1] = acts[:, 1:]
    return out


def _activation_step(values, mask, gains, acts, weights, beta, guard):
    """One reweighted activation sweep; returns (new acts, clamp count).

    Closed-form minimizer of the per-slot quadratic surrogate, written with
    numerator and denominator both multiplied by the current activation so
    no division by the iterate is needed:

        new = (data + 2*beta*(yl*left + yr*right)) * p
              -----------------------------------------
              curv + 2*beta*(yl + yr) * p

    with data = gains^T(w ⊙ s) and curv = gains^T(w ⊙ gains p). At beta = 0
    this is exactly p * data / curv, the multiplicative Euclidean update.
    """
    t = acts.shape[1]
    data = gains.T @ values
    curv = gains.T @ (mask * (gains @ acts))
    yl = weights[:, :t]
    yr = weights[:, 1:]
    two_beta = 2.0 * beta
    pen_num = two_beta * (yl * _shift_right(acts) + yr * _shift_left(acts))
    num = (data + pen_num) * acts
    den = curv + two_beta * (yl + yr) * acts
    low = den < guard
    clamped = int(np.count_nonzero(low))
    if clamped:
        den = np.maximum(den, guard)
    return np.maximum(num / den, ACTIVATION_FLOOR), clamped


def update_activations(s: MaskedMatrix, gains: np.ndarray, p_i: np.ndarray,
                       y: ReweightMatrix, cfg: SolverConfig) -> np.ndarray:
    """One activation sweep over all time slots (neighbors read from p_i)."""
    acts = np.asarray(p_i, dtype=np.float64)
    _check_compatible(s, np.asarray(gains), acts)
    if y.weights.shape != (acts.shape[0], acts.shape[1] + 1):
        raise ShapeMismatchError(
            f"reweights shape {y.weights.shape} does not match activations "
            f"{acts.shape}"
        )
    new, _ = _activation_step(
        s.values, s.mask, np.asarray(gains, dtype=np.float64), acts,
        y.weights, cfg.beta, cfg.guard,
    )
    return new


def update_gains(s: MaskedMatrix, f_i: FactorPair, cfg: SolverConfig) -> np.ndarray:
    """Multiplicative gains update with masked data.

        gains <- gains * ((W ⊙ S) P^T) / ((W ⊙ (gains P)) P^T + guard)

    Nonnegativity is preserved and zero entries stay zero. The guard keeps
    masked-out rows from producing 0/0.
    """
    _check_compatible(s, f_i.gains, f_i.activations)
    gains, acts = f_i.gains, f_i.activations
    num = s.values @ acts.T
    den = (s.mask * (gains @ acts)) @ acts.T + cfg.guard
    return gains * num / den


def rescale(pair: FactorPair) -> FactorPair:
    """Normalize gains columns to unit 2-norm, absorbing scale into activations.

    The reconstruction is unchanged up to rounding. Raises
    DegenerateFactorError for a zero-norm column.
    """
    norms = np.linalg.norm(pair.gains, axis=0)
    if (norms == 0).any():
        dead = np.flatnonzero(norms == 0).tolist()
        raise DegenerateFactorError(f"gains columns {dead} have zero norm")
    return FactorPair(pair.gains / norms, pair.activations * norms[:, None])


def surrogate_per_slot(s: MaskedMatrix, gains: np.ndarray, p_new: np.ndarray,
                       p_ref: np.ndarray, y: ReweightMatrix, beta: float) -> np.ndarray:
    """Penalized quadratic surrogate, one value per time slot.

    Second-order expansion of the slot fit around p_ref with the diagonal
    curvature curv/p_ref, plus the reweighted quadratic transition terms
    toward the slot's frozen neighbors (each slot sees both its adjacent
    transitions). Touches the slot fit at p_new == p_ref when beta == 0;
    the activation sweep cannot increase it.
    """
    gains = np.asarray(gains, dtype=np.float64)
    p_new = np.asarray(p_new, dtype=np.float64)
    p_ref = np.asarray(p_ref, dtype=np.float64)
    _check_compatible(s, gains, p_ref)
    t = p_ref.shape[1]
    resid = s.mask * (s.values - gains @ p_ref)
    c_ref = 0.5 * np.sum(resid * resid, axis=0)
    grad = gains.T @ (s.mask * (gains @ p_ref)) - gains.T @ s.values
    curvature = (gains.T @ (s.mask * (gains @ p_ref))) / p_ref
    d = p_new - p_ref
    quad = c_ref + np.sum(d * grad, axis=0) + 0.5 * np.sum(curvature * d * d, axis=0)
    yl = y.weights[:, :t]
    yr = y.weights[:, 1:]
    left = yl * np.square(p_new - _shift_right(p_ref))
    right = yr * np.square(_shift_left(p_ref) - p_new)
    return quad + beta * np.sum(left + right, axis=0)


def _init_factors(rng: np.random.Generator, n_rows: int, rank: int,
                  n_cols: int) -> tuple[np.ndarray, np.ndarray]:
    # Strictly positive init keeps the multiplicative updates alive; the
    # 0.1 offset keeps the initial curvature estimates finite.
    gains = rng.uniform(0.1, 1.1, size=(n_rows, rank))
    acts = rng.uniform(0.1, 1.1, size=(rank, n_cols))
    return gains, acts


def _check_finite(iteration: int, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.isfinite(arr).all():
            raise NumericFailureError(iteration)


def solve(s: MaskedMatrix, cfg: SolverConfig, *,
          record_factors: bool = False) -> tuple[FactorPair, SolveTrace]:
    """Alternate activation and gains updates until convergence.

    Each outer iteration: recompute transition weights from the previous
    activations, sweep all activation slots, update the gains, renormalize.
    Stops when the relative objective change falls below cfg.rel_tol or
    after cfg.max_iters iterations. Returns the final pair and a trace;
    with record_factors=True the trace also keeps every iterate.
    """
    silent = np.flatnonzero(s.mask.sum(axis=1) == 0)
    if silent.size:
        warnings.warn(
            f"rows {silent.tolist()} have no observed entries; "
            "their reconstruction is unconstrained",
            stacklevel=2,
        )

    rng = np.random.default_rng(cfg.init_seed)
    gains, acts = _init_factors(rng, s.n_rows, cfg.rank, s.n_cols)
    trace = SolveTrace(iterates=[] if record_factors else None)
    if record_factors:
        trace.initial = FactorPair(gains, acts)
    prev_obj = _weighted_fit(s.values, s.mask, gains, acts) + cfg.beta * (
        penalty_smoothed(acts, cfg.epsilon)
    )

    for iteration in range(1, cfg.max_iters + 1):
        reweights = compute_reweights(acts, cfg.epsilon)
        surr_before = float(
            np.sum(surrogate_per_slot(s, gains, acts, acts, reweights, cfg.beta))
        )
        acts_new, clamped = _activation_step(
            s.values, s.mask, gains, acts, reweights.weights, cfg.beta, cfg.guard
        )
        surr_after = float(
            np.sum(surrogate_per_slot(s, gains, acts_new, acts, reweights, cfg.beta))
        )
        fit_after_p = _weighted_fit(s.values, s.mask, gains, acts_new)

        num = s.values @ acts_new.T
        den = (s.mask * (gains @ acts_new)) @ acts_new.T + cfg.guard
        gains_new = gains * num / den
        _check_finite(iteration, acts_new, gains_new)

        # A dead component cannot be renormalized; restart it from the init
        # distribution and let the next iterations repurpose it.
        norms = np.linalg.norm(gains_new, axis=0)
        dead = np.flatnonzero(norms == 0)
        if dead.size:
            gains_new = gains_new.copy()
            gains_new[:, dead] = rng.uniform(0.1, 1.1, size=(s.n_rows, dead.size))
            norms = np.linalg.norm(gains_new, axis=0)

        gains = gains_new / norms
        acts = acts_new * norms[:, None]

        fit = _weighted_fit(s.values, s.mask, gains, acts)
        pen = penalty_smoothed(acts, cfg.epsilon)
        obj = fit + cfg.beta * pen
        trace.records.append(
            IterationRecord(
                iteration=iteration,
                fit_after_p=fit_after_p,
                fit=fit,
                penalty=pen,
                objective=obj,
                surrogate_before=surr_before,
                surrogate_after=surr_after,
                clamped=clamped,
            )
        )
        if record_factors:
            trace.iterates.append(
                IterateSnapshot(
                    activations_updated=acts_new.copy(),
                    gains_updated=gains_new.copy(),
                    pair=FactorPair(gains, acts),
                )
            )

        rel = abs(prev_obj - obj) / max(abs(prev_obj), cfg.guard)
        prev_obj = obj
        if rel < cfg.rel_tol:
            break

    return FactorPair(gains, acts), trace


def infer_activations(s: MaskedMatrix, gains_fixed: np.ndarray,
                      cfg: SolverConfig) -> np.ndarray:
    """Estimate activations for frozen gains (no gains update, no rescale).

    Runs the reweight + activation sweep loop with the given gains until the
    relative objective change drops below cfg.rel_tol or cfg.max_iters.
    """
    gains = np.asarray(gains_fixed, dtype=np.float64)
    if gains.ndim != 2 or gains.shape[0] != s.n_rows:
        raise ShapeMismatchError(
            f"gains shape {gains.shape} incompatible with {s.n_rows} sensor rows"
        )
    if (gains < 0).any():
        raise ValueError("gains must be nonnegative")

    rng = np.random.default_rng(cfg.init_seed)
    acts = rng.uniform(0.1, 1.1, size=(gains.shape[1], s.n_cols))
    # Calibrate the starting scale to the observed data. With frozen gains
    # there is no rescaling channel, and once the reweighted penalty
    # saturates it freezes the multiplicative scale adaptation, so an init
    # orders of magnitude off would never recover within the budget.
    observed = s.mask.sum()
    if observed > 0:
        rec_mean = float((s.mask * (gains @ acts)).sum() / observed)
        if rec_mean > 0:
            acts = acts * (float(s.values.sum() / observed) / rec_mean)
            acts = np.maximum(acts, ACTIVATION_FLOOR)
    prev_obj = _weighted_fit(s.values, s.mask, gains, acts) + cfg.beta * (
        penalty_smoothed(acts, cfg.epsilon)
    )
    for iteration in range(1, cfg.max_iters + 1):
        reweights = compute_reweights(acts, cfg.epsilon)
        acts, _ = _activation_step(
            s.values, s.mask, gains, acts, reweights.weights, cfg.beta, cfg.guard
        )
        _check_finite(iteration, acts)
        obj = _weighted_fit(s.values, s.mask, gains, acts) + cfg.beta * (
            penalty_smoothed(acts, cfg.epsilon)
        )
        rel = abs(prev_obj - obj) / max(abs(prev_obj), cfg.guard)
        prev_obj = obj
        if rel < cfg.rel_tol:
            break
    return acts
