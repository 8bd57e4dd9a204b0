"""State space construction and sequence-based state identification.

A world state is represented by one template sequence of l consecutive
feature vectors. The state space grows online: each non-overlapping
window of l frames from a demonstration is matched against the current
templates, and windows that match nothing are enrolled as new states.
Matching solves the structured-sparse problem and reads off per-group
weight mass; a query whose every group mass stays at or below a small
threshold tau is declared unmatched.
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .solver import QuerySequence, SolverConfig, TemplateMatrix, WeightMatrix, solve

__all__ = [
    "MatchConfig",
    "StateSpace",
    "group_mass",
    "match",
    "learn_state_space",
    "identify",
    "identify_with_masses",
]


@dataclass(frozen=True)
class MatchConfig:
    """Threshold and solver settings used for state matching.

    tau is the no-match threshold on group mass. None means "derive from
    sequence length": 0.1 * l, since mass scales with the number of
    query columns.
    """

    tau: Optional[float] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")

    def resolved_tau(self, seq_len: int) -> float:
        return self.tau if self.tau is not None else 0.1 * seq_len

    def replace_tau(self, tau: float) -> "MatchConfig":
        return MatchConfig(tau=tau, solver=self.solver)


@dataclass(frozen=True)
class StateSpace:
    """Immutable snapshot of the learned states and their templates.

    One template sequence per state: sequence j of ``templates`` is the
    representative of ``state_of_seq[j]``, and with the one-representative
    rule that mapping is the identity.
    """

    states: tuple
    templates: TemplateMatrix
    state_of_seq: dict

    def __post_init__(self):
        if len(self.states) != self.templates.num_seqs:
            raise ValueError("state count must equal template sequence count")
        if list(self.states) != sorted(set(self.states)):
            raise ValueError("states must be dense unique integers")
        for j in range(self.templates.num_seqs):
            if self.state_of_seq.get(j) not in self.states:
                raise ValueError("every template sequence needs a state")

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def seq_len(self) -> int:
        return self.templates.seq_len

    @property
    def feature_length(self) -> int:
        return self.templates.m


def _as_columns(frames: Sequence) -> np.ndarray:
    cols = []
    for f in frames:
        v = np.asarray(getattr(f, "values", f), dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("frames must be flat feature vectors")
        cols.append(v)
    return np.column_stack(cols)


def group_mass(W: WeightMatrix, j: int) -> float:
    """Total absolute weight assigned to template sequence j."""
    if not 0 <= j < W.num_groups:
        raise IndexError("group index out of range")
    return float(np.abs(W.group(j)).sum())


def _all_masses(W: WeightMatrix) -> np.ndarray:
    k = W.num_groups
    return np.abs(W.data).reshape(k, W.seq_len, -1).sum(axis=(1, 2))


def match(W: WeightMatrix, cfg: MatchConfig) -> Optional[int]:
    """Sequence index of the best-supported template, or None.

    None means no template attracted more than tau of absolute weight,
    i.e. the query matches nothing in the database. Ties break to the
    lowest index.
    """
    masses = _all_masses(W)
    tau = cfg.resolved_tau(W.data.shape[1])
    if np.all(masses <= tau):
        return None
    return int(np.argmax(masses))


def learn_state_space(
    frames: Iterable,
    seq_len: int,
    cfg: MatchConfig = MatchConfig(),
    space: Optional[StateSpace] = None,
):
    """Consume a demonstration stream and grow the state space.

    Splits the stream into non-overlapping windows of seq_len frames
    (aligned to the start, trailing remainder dropped). Each window is
    matched against the templates collected so far; an unmatched window
    becomes a new state whose template is the window itself. The very
    first window of an empty database is enrolled without solving.

    Returns (StateSpace, state stream), where the stream holds one
    StateId per consumed window. The input ``space`` is never mutated;
    pass the previous result to continue enrollment across demos.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be positive")
    frames = list(frames)
    if space is None and len(frames) < seq_len:
        raise ValueError("stream shorter than one window")

    if space is not None and space.seq_len != seq_len:
        raise ValueError("seq_len does not match the existing space")

    templates = None if space is None else space.templates
    states = [] if space is None else list(space.states)
    stream = []

    for start in range(0, len(frames) - seq_len + 1, seq_len):
        window = _as_columns(frames[start:start + seq_len])
        if templates is None:
            templates = TemplateMatrix(window, seq_len=seq_len)
            states.append(0)
            stream.append(0)
            continue
        if window.shape[0] != templates.m:
            raise ValueError("frame length does not match the templates")
        W, _ = solve(templates, QuerySequence(window), cfg.solver)
        hit = match(W, cfg)
        if hit is None:
            templates = templates.append_sequence(window)
            sid = len(states)
            states.append(sid)
            stream.append(sid)
        else:
            stream.append(hit)

    new_space = StateSpace(
        states=tuple(states),
        templates=templates,
        state_of_seq={j: j for j in range(len(states))},
    )
    return new_space, stream


def identify_with_masses(Y: QuerySequence, space: StateSpace, cfg: MatchConfig = MatchConfig()):
    """Best-matching state plus the per-state mass vector.

    The masses expose match confidence: callers can normalize by total
    mass and sweep a decision threshold, as the recognition evaluation
    does for precision-recall curves.
    """
    if space.num_states < 1:
        raise ValueError("state space is empty")
    W, _ = solve(space.templates, Y, cfg.solver)
    masses = _all_masses(W)
    best_seq = int(np.argmax(masses))
    return space.state_of_seq[best_seq], masses


def identify(Y: QuerySequence, space: StateSpace, cfg: MatchConfig = MatchConfig()) -> int:
    """State of the template group with the largest absolute weight mass.

    Execution-phase identification: always answers, never enrolls.
    """
    sid, _ = identify_with_masses(Y, space, cfg)
    return sid
