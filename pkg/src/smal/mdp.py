"""Action, transition, and reward learning over state streams.

Demonstrations arrive as an aligned pair of streams: states (one per
observation window) and atom movements (one per executed primitive).
Chunking the movement stream into windows of l atoms yields the action
vocabulary; counting (state, action, next state) triples yields the
transition model; a linear program recovers a sparse state reward under
which the demonstrated behavior is optimal. Value iteration then turns
the assembled model into an executable policy.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidModelError

__all__ = [
    "AtomMovement",
    "Action",
    "TransitionCounts",
    "MdpModel",
    "Policy",
    "RewardConfig",
    "RewardResult",
    "learn_actions",
    "learn_transitions",
    "build_mdp",
    "learn_reward",
    "value_iteration",
    "select_action",
]

log = logging.getLogger(__name__)


class AtomMovement(str, Enum):
    """The four primitive robot movements."""

    FORWARD = "forward"
    BACKWARD = "backward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"


@dataclass(frozen=True)
class Action:
    """A fixed-length sequence of atom movements with a dense id."""

    atoms: Tuple[AtomMovement, ...]
    id: int

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(AtomMovement(a) for a in self.atoms))
        if len(self.atoms) < 1:
            raise ValueError("an action needs at least one atom")
        if self.id < 0:
            raise ValueError("action ids are dense nonnegative integers")


def learn_actions(
    k_stream: Sequence,
    l: int,
    actions: Optional[Sequence[Action]] = None,
):
    """Chunk a movement stream into actions and an action-id stream.

    Non-overlapping windows of l atoms, trailing remainder dropped.
    Distinct windows get dense ids in first-seen order. Pass a previous
    action list to keep ids stable while consuming further demos.
    """
    if l < 1:
        raise ValueError("l must be positive")
    known: List[Action] = list(actions) if actions else []
    index = {a.atoms: a.id for a in known}
    if len(index) != len(known) or sorted(index.values()) != list(range(len(known))):
        raise ValueError("existing action ids must be dense and unique")

    atoms = [AtomMovement(a) for a in k_stream]
    a_stream: List[int] = []
    for start in range(0, len(atoms) - l + 1, l):
        window = tuple(atoms[start:start + l])
        if window not in index:
            index[window] = len(known)
            known.append(Action(atoms=window, id=len(known)))
        a_stream.append(index[window])
    return known, a_stream


@dataclass
class TransitionCounts:
    """Per-state log of observed (action, next state) occurrences."""

    occurrences: Dict[int, List[Tuple[int, int]]] = field(default_factory=dict)

    def record(self, s: int, a: int, s_next: int):
        self.occurrences.setdefault(s, []).append((a, s_next))

    def action_count(self, s: int, a: int) -> int:
        return sum(1 for (ai, _) in self.occurrences.get(s, []) if ai == a)

    def triple_count(self, s: int, a: int, s_next: int) -> int:
        return sum(1 for pair in self.occurrences.get(s, []) if pair == (a, s_next))

    def copy(self) -> "TransitionCounts":
        return TransitionCounts({s: list(v) for s, v in self.occurrences.items()})


def learn_transitions(
    s_stream: Sequence[int],
    a_stream: Sequence[int],
    counts: Optional[TransitionCounts] = None,
):
    """Count demonstrated transitions and derive their probabilities.

    Records (a(i), s(i+1)) under s(i) for every consecutive stream
    position; T(s, a, s') is the ratio of (a, s') occurrences to a
    occurrences at s. Returns the (possibly continued) counts plus T as
    a nested map {(s, a): {s': prob}}.
    """
    if len(a_stream) != len(s_stream) - 1:
        raise ValueError("need exactly one action between consecutive states")
    counts = counts.copy() if counts is not None else TransitionCounts()
    for i, a in enumerate(a_stream):
        counts.record(int(s_stream[i]), int(a), int(s_stream[i + 1]))

    T: Dict[Tuple[int, int], Dict[int, float]] = {}
    for s, pairs in counts.occurrences.items():
        totals = Counter(a for a, _ in pairs)
        triples = Counter(pairs)
        for (a, s_next), cnt in triples.items():
            T.setdefault((s, a), {})[s_next] = cnt / totals[a]
    return counts, T


@dataclass(frozen=True)
class MdpModel:
    """Finite MDP assembled from demonstrations.

    T has shape (S, A, S) and R shape (S, A); ``seen`` marks the (s, a)
    pairs that were actually demonstrated. Pairs never demonstrated are
    completed as probability-1 self-loops so that every row of T is a
    distribution. Immutable and safe to share across threads.
    """

    states: Tuple[int, ...]
    actions: Tuple[Action, ...]
    T: np.ndarray
    R: np.ndarray
    gamma: float
    seen: np.ndarray

    def __post_init__(self):
        S, A = len(self.states), len(self.actions)
        T = np.ascontiguousarray(self.T, dtype=np.float64)
        R = np.ascontiguousarray(self.R, dtype=np.float64)
        seen = np.ascontiguousarray(self.seen, dtype=bool)
        if T.shape != (S, A, S):
            raise ValueError("T must have shape (S, A, S)")
        if R.shape != (S, A):
            raise ValueError("R must have shape (S, A)")
        if seen.shape != (S, A):
            raise ValueError("seen must have shape (S, A)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "seen", seen)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_actions(self) -> int:
        return len(self.actions)


def build_mdp(
    num_states: int,
    actions: Sequence[Action],
    counts: TransitionCounts,
    R: Optional[np.ndarray] = None,
    gamma: float = 0.9,
) -> MdpModel:
    """Dense MdpModel from transition counts.

    Unseen (s, a) pairs become self-loops with probability 1 (and stay
    flagged unseen); R defaults to zeros until reward learning fills it.
    """
    S, A = num_states, len(actions)
    T = np.zeros((S, A, S))
    seen = np.zeros((S, A), dtype=bool)
    for s, pairs in counts.occurrences.items():
        if not 0 <= s < S:
            raise ValueError("state id outside the state space")
        for a, s_next in pairs:
            if not 0 <= a < A or not 0 <= s_next < S:
                raise ValueError("stream references unknown action or state")
            T[s, a, s_next] += 1.0
            seen[s, a] = True
    for s in range(S):
        for a in range(A):
            total = T[s, a].sum()
            if total > 0:
                T[s, a] /= total
            else:
                T[s, a, s] = 1.0
    if R is None:
        R = np.zeros((S, A))
    return MdpModel(
        states=tuple(range(num_states)), actions=tuple(actions),
        T=T, R=np.asarray(R, dtype=np.float64), gamma=gamma, seen=seen,
    )


@dataclass(frozen=True)
class RewardConfig:
    """Inverse reward learning hyperparameters."""

    gamma: float = 0.9
    r_max: float = 1.0
    l1_penalty: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if self.l1_penalty < 0:
            raise ValueError("l1_penalty must be nonnegative")


@dataclass(frozen=True)
class RewardResult:
    """Learned state reward plus its lift to (s, a) and diagnostics."""

    R: np.ndarray
    R_sa: np.ndarray
    pi_E: Dict[int, int]
    degenerate: bool
    constrained_states: Tuple[int, ...]


def _demonstrated_policy(streams) -> Dict[int, int]:
    votes: Dict[int, Dict[int, int]] = {}
    for s_stream, a_stream in streams:
        if len(a_stream) != len(s_stream) - 1:
            raise ValueError("need exactly one action between consecutive states")
        for i, a in enumerate(a_stream):
            per_state = votes.setdefault(int(s_stream[i]), {})
            per_state[int(a)] = per_state.get(int(a), 0) + 1
    return {
        s: min(a for a, c in per.items() if c == max(per.values()))
        for s, per in votes.items()
    }


def _normalize_streams(s_stream, a_stream):
    if len(s_stream) == 0 and len(a_stream) == 0:
        return []
    if isinstance(s_stream[0], (list, tuple)):
        return list(zip(s_stream, a_stream))
    return [(s_stream, a_stream)]


def learn_reward(
    model: MdpModel,
    s_stream,
    a_stream,
    demo_end_states: Iterable[int] = (),
    cfg: RewardConfig = RewardConfig(),
) -> RewardResult:
    """Recover a sparse state reward that makes the demos optimal.

    Solves the finite-state linear program of inverse reinforcement
    learning: maximize the summed worst-case advantage of the
    demonstrated policy over every alternative action, minus an L1
    penalty, subject to |R(s)| <= r_max. The demonstrated policy is the
    per-state majority action across all streams (ties to the lowest
    action id); states never acted from, such as demo end states, are
    treated as absorbing under it and contribute no constraints. The
    result is lifted to R(s, a) = R(s).

    A demo with no discriminating constraints (single state, or a
    single-action vocabulary) yields R = 0 with ``degenerate`` set.
    """
    S, A = model.num_states, model.num_actions
    streams = _normalize_streams(s_stream, a_stream)
    pi_E = _demonstrated_policy(streams)
    end_states = set(int(s) for s in demo_end_states)

    P_E = np.zeros((S, S))
    for s in range(S):
        if s in pi_E:
            P_E[s] = model.T[s, pi_E[s]]
        else:
            P_E[s, s] = 1.0  # absorbing completion

    zero = RewardResult(
        R=np.zeros(S), R_sa=np.zeros((S, A)), pi_E=pi_E,
        degenerate=True, constrained_states=(),
    )
    if not pi_E or A < 2:
        return zero

    M = np.linalg.inv(np.eye(S) - cfg.gamma * P_E)
    constrained = []
    directions = []  # per constrained state: list of advantage rows
    for s in sorted(pi_E):
        rows = []
        for a in range(A):
            if a == pi_E[s]:
                continue
            d = (P_E[s] - model.T[s, a]) @ M
            if np.abs(d).max() > 1e-12:  # identical rows discriminate nothing
                rows.append(d)
        if rows:
            constrained.append(s)
            directions.append(rows)
    if not directions:
        return zero

    # variables: R (S), t (one per constrained state), u (S)
    D = len(constrained)
    num_vars = S + D + S
    c = np.concatenate([np.zeros(S), -np.ones(D), cfg.l1_penalty * np.ones(S)])
    rows_ub = []
    rhs = []
    for d_idx, rows in enumerate(directions):
        for drow in rows:
            g = np.zeros(num_vars)
            g[:S] = -drow
            g[S + d_idx] = 1.0  # t_s <= d . R
            rows_ub.append(g)
            rhs.append(0.0)
            g2 = np.zeros(num_vars)
            g2[:S] = -drow  # d . R >= 0 keeps pi_E optimal
            rows_ub.append(g2)
            rhs.append(0.0)
    for i in range(S):
        g = np.zeros(num_vars)
        g[i], g[S + D + i] = 1.0, -1.0  # R_i <= u_i
        rows_ub.append(g)
        rhs.append(0.0)
        g2 = np.zeros(num_vars)
        g2[i], g2[S + D + i] = -1.0, -1.0  # -R_i <= u_i
        rows_ub.append(g2)
        rhs.append(0.0)

    bounds = (
        [(-cfg.r_max, cfg.r_max)] * S
        + [(None, None)] * D
        + [(0.0, cfg.r_max)] * S
    )
    res = linprog(
        c, A_ub=np.asarray(rows_ub), b_ub=np.asarray(rhs),
        bounds=bounds, method="highs",
    )
    if not res.success:
        raise InvalidModelError(f"reward program failed: {res.message}")
    R = res.x[:S].copy()
    return RewardResult(
        R=R, R_sa=np.repeat(R[:, None], A, axis=1), pi_E=pi_E,
        degenerate=False, constrained_states=tuple(constrained),
    )


@dataclass(frozen=True)
class Policy:
    """Greedy action and value per state.

    ``known`` marks states with at least one demonstrated action; the
    greedy choice at an unknown state rests purely on self-loop
    completion and is served only through select_action's fallback.
    """

    actions: Tuple[int, ...]
    values: Tuple[float, ...]
    known: Tuple[bool, ...]

    def action(self, s: int) -> int:
        return self.actions[s]

    def state_value(self, s: int) -> float:
        return self.values[s]


def value_iteration(model: MdpModel, tol: float = 1e-9,
                    max_sweeps: int = 100000) -> Policy:
    """Optimal greedy policy by dense value iteration.

    Sweeps V <- max_a [R(s, a) + gamma sum_s' T(s, a, s') V(s')] until
    the sup-norm change drops below tol. Ties in the greedy argmax break
    to the lowest action id.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    S, A = model.num_states, model.num_actions
    if A < 1 or S < 1:
        raise InvalidModelError("model needs at least one state and action")
    row_sums = model.T.sum(axis=2)
    if np.any(model.T < -1e-12) or np.any(np.abs(row_sums - 1.0) > 1e-9):
        raise InvalidModelError("transition rows must be probability distributions")

    V = np.zeros(S)
    for _ in range(max_sweeps):
        Q = model.R + model.gamma * (model.T @ V)
        V_next = Q.max(axis=1)
        delta = np.abs(V_next - V).max()
        V = V_next
        if delta < tol:
            break
    else:
        raise InvalidModelError("value iteration did not converge")
    Q = model.R + model.gamma * (model.T @ V)
    greedy = Q.argmax(axis=1)
    known = model.seen.any(axis=1)
    return Policy(
        actions=tuple(int(a) for a in greedy),
        values=tuple(float(v) for v in V),
        known=tuple(bool(b) for b in known),
    )


def select_action(
    model: MdpModel,
    policy: Policy,
    s: int,
    fallback_masses: Optional[np.ndarray] = None,
) -> Action:
    """Action the executor should perform from state s.

    A state with no demonstrated action has no meaningful policy entry;
    when identification masses are supplied, the action of the
    heaviest-mass known state is substituted (logged as a diagnostic),
    otherwise the lookup fails.
    """
    if not 0 <= s < model.num_states:
        raise KeyError(f"state {s} outside the model")
    if policy.known[s]:
        return model.actions[policy.actions[s]]
    if fallback_masses is None:
        raise KeyError(f"state {s} has no demonstrated action")
    masses = np.asarray(fallback_masses, dtype=np.float64)
    if masses.shape != (model.num_states,):
        raise ValueError("fallback masses must give one value per state")
    known = np.asarray(policy.known)
    if not known.any():
        raise KeyError("no state has a demonstrated action")
    masked = np.where(known, masses, -np.inf)
    nearest = int(np.argmax(masked))
    log.warning("state %d unseen in demos; borrowing action of state %d", s, nearest)
    return model.actions[policy.actions[nearest]]
