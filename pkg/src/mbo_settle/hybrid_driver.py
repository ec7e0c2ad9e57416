"""CVaR-aggregated variational objective for mixed binary problems and the slack heuristic.

The variational parameters are the ansatz angles ``theta`` together with the
continuous variables ``y``. For each trial point the state is prepared,
sampled, every sample is scored with the penalized objective at the current
``y``, and the best ``alpha`` fraction of scores is averaged (CVaR).

The heuristic repeats three steps per cycle:

1. optimize ``(theta, y)`` jointly and keep the samples of the last evaluation;
2. for every sampled bitstring, set the continuous variables to the values
   that minimize the penalty for that bitstring and keep the best completion;
3. freeze ``y`` at that completion and optimize ``theta`` alone.

All objective values handled here are in minimization form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import optimizer as opt
from . import settlement
from .mbo_core import MBOProblem, bit_matrix, bitstring, eval_joint, fix_continuous, to_ising
from .pool import choose_limits, initial_limits
from .simulator import (
    HardwareEfficientAnsatz,
    QaoaAnsatz,
    ReadoutNoise,
    SampleSet,
    apply_readout_noise,
    mitigate_readout,
    prepare_he_state,
    prepare_qaoa_state,
    sample,
)

_log = logging.getLogger(__name__)

HE = "hardware-efficient"
QAOA = "qaoa"
RESIDUAL_TOL = 1e-7


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run. ``cycles == 0`` means a direct joint solve of ``iters`` evaluations."""

    ansatz: str = HE
    depth: int = 2
    layers: int = 1
    shots: int = 8192
    alpha: float = 0.25
    lam: float = 1e3
    iters: int = 150
    cycles: int = 0
    iters_joint: int = 100
    iters_theta: int = 100
    seed: int = 0
    noise: tuple[float, float] | None = None
    mitigate: bool = False
    rhobeg: float = 0.5
    rhoend: float = 1e-4
    early_stop: bool = False

    def __post_init__(self):
        if self.ansatz not in (HE, QAOA):
            raise ValueError(f"ansatz must be {HE!r} or {QAOA!r}, got {self.ansatz!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.depth < 0 or self.layers < 1:
            raise ValueError("depth must be >= 0 and layers >= 1")
        if not self.lam > 0:
            raise ValueError("penalty weight must be positive")
        if self.cycles < 0:
            raise ValueError("cycles must be >= 0")
        if self.cycles == 0 and self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.cycles > 0 and (self.iters_joint < 1 or self.iters_theta < 0):
            raise ValueError("iters_joint must be >= 1 and iters_theta >= 0")
        if self.mitigate and self.noise is None:
            raise ValueError("mitigation needs a noise model")
        if self.noise is not None:
            ReadoutNoise.uniform(1, *self.noise)

    def to_dict(self) -> dict:
        return asdict(self)

    def num_parameters(self, n: int) -> int:
        if self.ansatz == HE:
            return HardwareEfficientAnsatz(n, self.depth).num_parameters
        return 2 * self.layers


@dataclass(frozen=True)
class TraceRow:
    eval_index: int
    cvar_value: float
    best_feasible_value: float
    phase: str
    cycle: int


@dataclass
class ConvergenceTrace:
    """One row per objective evaluation; ``best_feasible_value`` is a running minimum (``inf`` until found)."""

    rows: list[TraceRow] = field(default_factory=list)

    @property
    def best_feasible(self) -> float:
        return self.rows[-1].best_feasible_value if self.rows else math.inf

    def extend(self, other: ConvergenceTrace):
        self.rows.extend(other.rows)

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class CandidateSolution:
    bitstring: str
    x: np.ndarray
    y: np.ndarray
    raw_objective: float
    penalized_objective: float
    feasible: bool
    probability: float
    violation: float = 0.0

    def to_dict(self) -> dict:
        return {
            "bitstring": self.bitstring,
            "y": [float(v) for v in self.y],
            "raw_objective": self.raw_objective,
            "penalized_objective": self.penalized_objective,
            "feasible": self.feasible,
            "probability": self.probability,
            "violation": self.violation,
        }


# --- CVaR ----------------------------------------------------------------------


def cvar_count(alpha: float, total: int) -> int:
    """``ceil(alpha * total)``, robust to ``alpha * total`` landing just above an integer."""
    return max(1, math.ceil(alpha * total - 1e-9))


def aggregate_cvar(values: Sequence[float], alpha: float) -> float:
    """Mean of the ``ceil(alpha * N)`` smallest values."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("cannot aggregate an empty sample")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return float(v[: cvar_count(alpha, v.size)].mean())


def _lex_rank(n: int) -> np.ndarray:
    """Position of each basis index when bitstrings ``x_1..x_n`` are sorted as text."""
    rev = np.zeros(2**n, dtype=np.int64)
    for q in range(n):
        rev |= ((np.arange(2**n) >> q) & 1) << (n - 1 - q)
    return rev


def aggregate_cvar_weighted(values, weights, alpha: float, integral: bool = True) -> float:
    """CVaR of a weighted sample: ``weights[k]`` copies (or mass) of ``values[k]``.

    With integral weights (shot counts) the best ``ceil(alpha * N)`` shots are
    averaged exactly as in :func:`aggregate_cvar`; otherwise the best ``alpha``
    fraction of the total mass is averaged, splitting the boundary entry.
    Ties are broken by bitstring so the selection is deterministic.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    total = weights.sum()
    if total <= 0:
        raise ValueError("cannot aggregate an empty sample")
    n = int(round(math.log2(values.size))) if values.size > 1 else 0
    tiebreak = _lex_rank(n) if 2**n == values.size else np.arange(values.size)
    order = np.lexsort((tiebreak, values))
    budget = float(cvar_count(alpha, int(round(total)))) if integral else alpha * total
    take = np.minimum(weights[order], np.maximum(budget - (np.cumsum(weights[order]) - weights[order]), 0.0))
    return float(take @ values[order] / budget)


# --- objective -------------------------------------------------------------------


def split_params(problem: MBOProblem, config: RunConfig, params) -> tuple[np.ndarray, np.ndarray]:
    k = config.num_parameters(problem.n)
    params = np.asarray(params, dtype=float)
    return params[:k], params[k:]


def prepare_state(problem: MBOProblem, config: RunConfig, theta, y):
    theta = np.asarray(theta, dtype=float)
    if config.ansatz == HE:
        return prepare_he_state(HardwareEfficientAnsatz(problem.n, config.depth), theta)
    if theta.size != 2 * config.layers:
        raise ValueError(f"expected {2 * config.layers} QAOA angles, got {theta.size}")
    ising = to_ising(fix_continuous(problem.objective, problem.domain, y))
    return prepare_qaoa_state(QaoaAnsatz(ising.energies, theta[: config.layers], theta[config.layers :]))


def distribution(samples: SampleSet, config: RunConfig) -> tuple[np.ndarray, bool]:
    """Probabilities used for scoring: shot frequencies, or clamped mitigated quasi-probabilities.

    Returns ``(probabilities, integral)`` where ``integral`` says whether they are shot counts / N.
    """
    if config.mitigate:
        quasi = mitigate_readout(samples, ReadoutNoise.uniform(samples.n, *config.noise))
        quasi = np.clip(quasi, 0.0, None)
        return quasi / quasi.sum(), False
    return samples.frequencies(), True


class _Sampler:
    """Per-run random streams: one for shots, one for readout flips."""

    def __init__(self, config: RunConfig, shot_seed, noise_seed):
        self.config = config
        self.shots = np.random.default_rng(shot_seed)
        self.flips = np.random.default_rng(noise_seed)

    def __call__(self, state) -> SampleSet:
        s = sample(state, self.config.shots, self.shots)
        if self.config.noise is not None:
            s = apply_readout_noise(s, ReadoutNoise.uniform(state.n, *self.config.noise), self.flips)
        return s


def variational_objective(theta, y, problem: MBOProblem, config: RunConfig, seed=None):
    """CVaR of the penalized objective over ``config.shots`` samples. Returns ``(value, samples)``."""
    sampler = seed if isinstance(seed, _Sampler) else _Sampler(config, *np.random.SeedSequence(seed).spawn(2))
    y = np.asarray(y, dtype=float)
    samples = sampler(prepare_state(problem, config, theta, y))
    probs, integral = distribution(samples, config)
    energies = problem.objective.energies(y)
    weights = samples.counts if integral else probs
    return aggregate_cvar_weighted(energies, weights, config.alpha, integral), samples


# --- slack completion -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Completion:
    y: np.ndarray
    residuals: np.ndarray
    limits_feasible: bool

    @property
    def violation(self) -> float:
        return float(np.abs(self.residuals).sum())

    @property
    def violated_count(self) -> int:
        return int(np.sum(np.abs(self.residuals) > RESIDUAL_TOL))

    @property
    def feasible(self) -> bool:
        return self.limits_feasible and self.violated_count == 0


def complete_slacks(problem: MBOProblem, x, y=None) -> Completion:
    """Continuous values minimizing the penalty for bitstring ``x``.

    Variable limits are chosen per group by the exact pool routine; each slack
    then takes the value that zeroes its row, clipped into its bounds.
    Coordinates that are neither slacks nor limits keep their value from ``y``.
    """
    x = np.asarray(x, dtype=float)
    if y is None:
        y = np.zeros(problem.m)
    y = np.array(y, dtype=float)
    lower, upper = np.array(problem.domain.lower), np.array(problem.domain.upper)
    slack_of = {k: j for k, j in enumerate(problem.slack_index) if j is not None}
    limit_vars = {v for g in problem.limit_groups for v in g.variables}

    def row_offset(k, skip):
        p = problem.penalties[k]
        U = np.asarray(p.U, dtype=float)
        mask = np.ones(problem.m, dtype=bool)
        mask[list(skip)] = False
        return float(np.dot(p.u, x) + U[mask] @ y[mask] + p.v)

    limits_ok = True
    for g in problem.limit_groups:
        # row = net - l - s, so the net position is the row value without l and s
        net = [row_offset(k, {slack_of.get(k), *g.variables} - {None}) for k in g.rows]
        limits, ok = choose_limits(net, g.lower, g.upper, g.exchange, g.pool, g.relation)
        y[list(g.variables)] = limits
        limits_ok &= ok

    for k, j in slack_of.items():
        if j in limit_vars:
            continue
        coef = float(np.asarray(problem.penalties[k].U)[j])
        if coef == 0.0:
            continue
        rest = row_offset(k, {j})
        y[j] = min(max(-rest / coef, lower[j]), upper[j])

    residuals = np.array([p.residual(x, y) for p in problem.penalties])
    limits_ok &= all(rel.violation(y) <= opt.FEASIBILITY_TOL for rel in problem.domain.relations)
    return Completion(y, residuals, bool(limits_ok))


def is_feasible(problem: MBOProblem, x, completion: Completion | None = None) -> bool:
    instance = getattr(problem, "instance", None)
    if instance is not None:
        return settlement.is_feasible(instance, x)
    return (completion or complete_slacks(problem, x)).feasible


def raw_objective(problem: MBOProblem, x, y) -> float:
    """Unpenalized objective in its own sense (settled value for settlement problems)."""
    return problem.base.value(x, y) + 0.0  # no negative zero from the sign flip


def _raw_min(problem: MBOProblem, x, y) -> float:
    return eval_joint(problem.base, x, y)


# --- optimization phases ---------------------------------------------------------------


@dataclass
class PhaseResult:
    theta: np.ndarray
    y: np.ndarray
    trace: ConvergenceTrace
    samples: SampleSet
    status: str
    message: str = ""


class _Tracker:
    """Scores the incumbent sample of every evaluation and keeps the running best feasible value."""

    def __init__(self, problem: MBOProblem, config: RunConfig):
        self.problem = problem
        self.config = config
        self.best = math.inf
        self.count = 0
        self.bits = bit_matrix(problem.n)
        self.rank = _lex_rank(problem.n)
        self._feasible: dict[int, bool] = {}

    def feasible(self, k: int) -> bool:
        if k not in self._feasible:
            self._feasible[k] = is_feasible(self.problem, self.bits[k])
        return self._feasible[k]

    def record(self, trace, value, samples, y, phase, cycle):
        seen = samples.observed
        energies = self.problem.objective.energies(y)[seen]
        k = int(seen[np.lexsort((self.rank[seen], energies))[0]])
        if self.feasible(k):
            self.best = min(self.best, _raw_min(self.problem, self.bits[k], y))
        trace.rows.append(TraceRow(self.count, float(value), self.best, phase, cycle))
        self.count += 1


def _optimize(problem, config, sampler, tracker, x0, domain, budget, evaluate, phase, cycle) -> tuple:
    trace = ConvergenceTrace()
    last: dict = {}

    def objective(params):
        theta, y = evaluate(params)
        value, samples = variational_objective(theta, y, problem, config, sampler)
        tracker.record(trace, value, samples, y, phase, cycle)
        last.update(params=np.array(params), samples=samples)
        return value

    res = opt.minimize(opt.OptimizationProblem(objective, x0, domain, budget, config.rhobeg, config.rhoend))
    if res.status == opt.INFEASIBLE_START:
        _log.warning("%s phase: %s", phase, res.message)
    return res, last, trace


def joint_optimize(problem: MBOProblem, config: RunConfig, theta0, y0, *, budget=None,
                   sampler=None, tracker=None, cycle: int = 0, phase: str = "joint") -> PhaseResult:
    """Optimize ``(theta, y)`` together; returns the last iterate and its samples."""
    sampler = sampler or _Sampler(config, *np.random.SeedSequence(config.seed).spawn(2))
    tracker = tracker or _Tracker(problem, config)
    k = len(theta0)
    x0 = np.concatenate([np.asarray(theta0, dtype=float), np.asarray(y0, dtype=float)])
    domain = problem.domain.lift(k)
    budget = config.iters_joint if budget is None else budget
    res, last, trace = _optimize(
        problem, config, sampler, tracker, x0, domain, budget,
        lambda p: (p[:k], p[k:]), phase, cycle,
    )
    if not last:
        # infeasible start: evaluate once so callers still get samples
        value, samples = variational_objective(theta0, y0, problem, config, sampler)
        tracker.record(trace, value, samples, np.asarray(y0, dtype=float), phase, cycle)
        last = dict(params=x0, samples=samples)
    return PhaseResult(last["params"][:k], last["params"][k:], trace, last["samples"], res.status, res.message)


def theta_optimize(problem: MBOProblem, config: RunConfig, theta0, y, *, budget=None,
                   sampler=None, tracker=None, cycle: int = 0) -> PhaseResult:
    """Optimize ``theta`` with ``y`` frozen."""
    sampler = sampler or _Sampler(config, *np.random.SeedSequence(config.seed).spawn(2))
    tracker = tracker or _Tracker(problem, config)
    y = np.asarray(y, dtype=float)
    budget = config.iters_theta if budget is None else budget
    res, last, trace = _optimize(
        problem, config, sampler, tracker, np.asarray(theta0, dtype=float), None, budget,
        lambda p: (p, y), "theta", cycle,
    )
    return PhaseResult(last["params"], y, trace, last["samples"], res.status, res.message)


# --- candidates --------------------------------------------------------------------------


def _candidate(problem: MBOProblem, k: int, probability: float, y_hint=None) -> CandidateSolution:
    x = bit_matrix(problem.n)[k]
    comp = complete_slacks(problem, x, y_hint)
    return CandidateSolution(
        bitstring=bitstring(k, problem.n),
        x=x,
        y=comp.y,
        raw_objective=raw_objective(problem, x, comp.y),
        penalized_objective=eval_joint(problem.objective, x, comp.y),
        feasible=is_feasible(problem, x, comp),
        probability=float(probability),
        violation=comp.violation,
    )


def extract_candidates(samples: SampleSet, problem: MBOProblem, probabilities=None) -> list[CandidateSolution]:
    """One candidate per observed bitstring, feasible first, then by objective, probability and bitstring."""
    probs = samples.frequencies() if probabilities is None else np.asarray(probabilities, dtype=float)
    seen = np.union1d(samples.observed, np.flatnonzero(probs > 0))
    cands = [_candidate(problem, int(k), probs[k]) for k in seen]
    sign = -1.0 if problem.base.sense == "maximize" else 1.0
    return sorted(cands, key=lambda c: (not c.feasible, sign * c.raw_objective, -c.probability, c.bitstring))


def best_completion(samples: SampleSet, problem: MBOProblem) -> CandidateSolution:
    """Step 2: the sampled bitstring whose completion has the lowest penalized objective."""
    cands = [_candidate(problem, int(k), samples.frequencies()[k]) for k in samples.observed]
    return min(cands, key=lambda c: (c.penalized_objective, c.violation > RESIDUAL_TOL, c.bitstring))


# --- full runs -------------------------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    best: CandidateSolution
    trace: ConvergenceTrace
    samples: SampleSet
    probabilities: np.ndarray
    candidates: list[CandidateSolution]
    theta: np.ndarray
    y: np.ndarray
    statuses: list[str] = field(default_factory=list)


def initial_point(problem: MBOProblem, config: RunConfig, seed) -> tuple[np.ndarray, np.ndarray]:
    """Angles uniform in ``[-pi, pi]``; slacks at 0 (or their lower bound); limits at a feasible centroid."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-np.pi, np.pi, config.num_parameters(problem.n))
    lower = np.array(problem.domain.lower)
    y = np.where(np.isfinite(lower), np.maximum(lower, 0.0), 0.0)
    for g in problem.limit_groups:
        y[list(g.variables)] = initial_limits(g.lower, g.upper, g.exchange, g.pool, g.relation)
    return theta, y


def _finish(problem, config, phase: PhaseResult, trace, best, statuses) -> RunResult:
    probs, _ = distribution(phase.samples, config)
    cands = extract_candidates(phase.samples, problem, probs)
    # on a tie prefer the final samples, whose probability describes the returned state
    if cands and _rank(problem, cands[0]) <= _rank(problem, best):
        best = cands[0]
    return RunResult(config, best, trace, phase.samples, probs, cands, phase.theta, phase.y, statuses)


def _rank(problem, c: CandidateSolution | None):
    if c is None:
        return (True, math.inf, "")
    sign = -1.0 if problem.base.sense == "maximize" else 1.0
    return (not c.feasible, sign * c.raw_objective, c.bitstring)


def run_direct(problem: MBOProblem, config: RunConfig) -> RunResult:
    """Joint optimization of ``(theta, y)`` for ``config.iters`` evaluations, without slack completion."""
    init, shot_seed, noise_seed = np.random.SeedSequence(config.seed).spawn(3)
    sampler = _Sampler(config, shot_seed, noise_seed)
    tracker = _Tracker(problem, config)
    theta, y = initial_point(problem, config, init)
    phase = joint_optimize(problem, config, theta, y, budget=config.iters, sampler=sampler, tracker=tracker, phase="none")
    return _finish(problem, config, phase, phase.trace, None, [phase.status])


def run_heuristic(problem: MBOProblem, config: RunConfig) -> RunResult:
    """The three-step cycle repeated ``config.cycles`` times (or until a cycle brings no improvement)."""
    if config.cycles < 1:
        raise ValueError("run_heuristic needs cycles >= 1")
    init, shot_seed, noise_seed = np.random.SeedSequence(config.seed).spawn(3)
    sampler = _Sampler(config, shot_seed, noise_seed)
    tracker = _Tracker(problem, config)
    theta, y = initial_point(problem, config, init)
    trace = ConvergenceTrace()
    best: CandidateSolution | None = None
    statuses = []
    phase = None
    for cycle in range(config.cycles):
        before = tracker.best
        phase = joint_optimize(problem, config, theta, y, sampler=sampler, tracker=tracker, cycle=cycle)
        trace.extend(phase.trace)
        statuses.append(phase.status)
        chosen = best_completion(phase.samples, problem)
        if _rank(problem, chosen) < _rank(problem, best):
            best = chosen
        theta, y = phase.theta, chosen.y
        if config.iters_theta > 0:
            phase = theta_optimize(problem, config, theta, y, sampler=sampler, tracker=tracker, cycle=cycle)
            trace.extend(phase.trace)
            statuses.append(phase.status)
            theta = phase.theta
        if config.early_stop and cycle > 0 and not tracker.best < before:
            _log.info("no improvement in cycle %d, stopping", cycle)
            break
    return _finish(problem, config, phase, trace, best, statuses)


def run(problem: MBOProblem, config: RunConfig) -> RunResult:
    return run_heuristic(problem, config) if config.cycles > 0 else run_direct(problem, config)


def with_seed(config: RunConfig, seed: int) -> RunConfig:
    return replace(config, seed=seed)
