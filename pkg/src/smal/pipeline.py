"""Demonstration recording, training, persistence, and evaluation.

The training chain consumes recorded demonstrations and produces, in
order: the state space (windowed enrollment of encoded frames), the
action vocabulary (windowed atom chunks), the transition counts, the
learned reward, and finally the executable policy. Every stage is
deterministic, so equal demonstration bytes and equal configuration
yield byte-equal saved models.

Demonstrations are zip archives (a JSON manifest plus one PNG per
frame); trained models are single files holding a JSON text header, a
separator byte pair, and little-endian float64 matrix sections.
"""

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .errors import ModelFormatError
from .features import Frame, ModalityConfig, encode
from .mdp import (
    Action,
    AtomMovement,
    MdpModel,
    Policy,
    RewardConfig,
    TransitionCounts,
    build_mdp,
    learn_actions,
    learn_reward,
    learn_transitions,
    select_action,
    value_iteration,
)
from .sim import SimWorld, render, scripted_expert, step
from .solver import QuerySequence, SolverConfig, TemplateMatrix
from .state_space import MatchConfig, StateSpace, identify_with_masses, learn_state_space

__all__ = [
    "Demonstration",
    "TrainConfig",
    "TrainedModel",
    "record_demo",
    "save_demo",
    "load_demo",
    "train",
    "save_model",
    "load_model",
    "evaluate_recognition",
    "RecognitionReport",
]

MODEL_FORMAT = "smal-model"
MODEL_VERSION = 1
DEMO_VERSION = 1
_ZIP_DATE = (2020, 1, 1, 0, 0, 0)  # fixed so archives are byte-stable


@dataclass(frozen=True)
class Demonstration:
    """Synchronized frame and atom streams from one recording session.

    There is a frame before and after every atom, so frames outnumber
    atoms by exactly one. ``truncated`` marks sessions that ended by
    disconnect rather than an explicit stop.
    """

    frames: Tuple[Frame, ...]
    k_stream: Tuple[AtomMovement, ...]
    metadata: Dict = field(default_factory=dict)
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(
            self, "k_stream", tuple(AtomMovement(a) for a in self.k_stream)
        )
        if len(self.frames) != len(self.k_stream) + 1:
            raise ValueError("a demo needs one more frame than atoms")


def record_demo(
    world: SimWorld,
    source: str = "scripted",
    pad_to: Optional[int] = None,
    metadata: Optional[Dict] = None,
) -> Demonstration:
    """Run the scripted expert in ``world`` and record the streams.

    ``pad_to`` tops the atom stream up to a multiple of that length by
    spinning in place at the victim, so that windowed training keeps the
    goal observations instead of dropping them as a partial window. Live
    teleop recording is owned by the service; this entry point only
    produces expert demos.
    """
    if source != "scripted":
        raise ValueError("only scripted recording is available here")
    atoms = scripted_expert(world)
    if pad_to is not None:
        if pad_to < 1:
            raise ValueError("pad_to must be positive")
        atoms = atoms + [AtomMovement.TURN_LEFT] * ((-len(atoms)) % pad_to)
    frames = [render(world)]
    for atom in atoms:
        world = step(world, atom)
        frames.append(render(world))
    meta = {"source": "scripted"}
    if metadata:
        meta.update(metadata)
    return Demonstration(frames=tuple(frames), k_stream=tuple(atoms), metadata=meta)


def _frame_to_png(frame: Frame) -> bytes:
    arr = np.round(frame.pixels * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def _png_to_frame(blob: bytes) -> Frame:
    img = Image.open(io.BytesIO(blob)).convert("RGB")
    return Frame(pixels=np.asarray(img, dtype=np.float64) / 255.0)


def save_demo(demo: Demonstration, path) -> None:
    """Write a demonstration archive: manifest.json plus PNG frames."""
    manifest = {
        "version": DEMO_VERSION,
        "k_stream": [a.value for a in demo.k_stream],
        "metadata": demo.metadata,
        "truncated": demo.truncated,
        "frame_count": len(demo.frames),
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_ZIP_DATE)
        zf.writestr(info, json.dumps(manifest, sort_keys=True, indent=1))
        for i, frame in enumerate(demo.frames):
            info = zipfile.ZipInfo(f"frames/{i:06d}.png", date_time=_ZIP_DATE)
            zf.writestr(info, _frame_to_png(frame))


def load_demo(path) -> Demonstration:
    """Read a demonstration archive written by save_demo."""
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("version") != DEMO_VERSION:
                raise ValueError(f"unsupported demo version {manifest.get('version')!r}")
            count = int(manifest["frame_count"])
            frames = [
                _png_to_frame(zf.read(f"frames/{i:06d}.png")) for i in range(count)
            ]
    except (KeyError, zipfile.BadZipFile) as exc:
        raise ValueError(f"demo archive is corrupt: {exc}") from exc
    return Demonstration(
        frames=tuple(frames),
        k_stream=tuple(AtomMovement(a) for a in manifest["k_stream"]),
        metadata=dict(manifest.get("metadata", {})),
        truncated=bool(manifest.get("truncated", False)),
    )


@dataclass(frozen=True)
class TrainConfig:
    """Everything train() needs besides the demonstrations.

    The defaults are calibrated for rendered first-person views, whose
    feature vectors correlate far more than generic streams: heavier
    sparsity weights (0.6) push the mass of a merely similar window well
    below the mass of a revisited one, and an unset match threshold
    resolves to 0.5 * seq_len, the midpoint of that gap. The bare
    matcher keeps its own lighter defaults for near-orthogonal features.
    """

    seq_len: int = 4
    modality: ModalityConfig = field(default_factory=ModalityConfig)
    match: MatchConfig = field(default_factory=lambda: MatchConfig(
        solver=SolverConfig(lambda1=0.6, lambda2=0.6)))
    reward: RewardConfig = field(default_factory=RewardConfig)
    vi_tol: float = 1e-9
    bootstrap_pad: bool = True

    def __post_init__(self):
        if self.seq_len < 1:
            raise ValueError("seq_len must be positive")
        if self.vi_tol <= 0:
            raise ValueError("vi_tol must be positive")
        if self.match.tau is None:
            object.__setattr__(
                self, "match", self.match.replace_tau(0.5 * self.seq_len)
            )


@dataclass(frozen=True)
class TrainedModel:
    """Everything needed to identify states and act on them.

    Doubles as the policy stack for episode execution: ``seq_len`` and
    ``plan`` are the interface run_episode drives.
    """

    config: TrainConfig
    space: StateSpace
    mdp: MdpModel
    policy: Policy
    label_states: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.space.seq_len != self.config.seq_len:
            raise ValueError("state space window length disagrees with config")
        if self.space.feature_length != self.config.modality.feature_length:
            raise ValueError("template rows disagree with the modality output")
        for action in self.mdp.actions:
            if len(action.atoms) != self.config.seq_len:
                raise ValueError("action length disagrees with config")

    @property
    def seq_len(self) -> int:
        return self.config.seq_len

    def encode_window(self, frames: Sequence[Frame]) -> QuerySequence:
        cols = [encode(f, self.config.modality).values for f in frames]
        return QuerySequence(np.column_stack(cols))

    def identify_window(self, frames: Sequence[Frame]):
        Y = self.encode_window(frames)
        return identify_with_masses(Y, self.space, self.config.match)

    def plan(self, frames: Sequence[Frame]) -> Action:
        if len(frames) != self.seq_len:
            raise ValueError("plan needs exactly seq_len frames")
        sid, masses = self.identify_window(frames)
        return select_action(self.mdp, self.policy, sid, fallback_masses=masses)


def _window_streams(demo: Demonstration, cfg: TrainConfig, space):
    l = cfg.seq_len
    encs = [encode(f, cfg.modality) for f in demo.frames]
    stream = ([encs[0]] * (l - 1) if cfg.bootstrap_pad else []) + encs
    return learn_state_space(stream, l, cfg.match, space)


def train(demos: Sequence[Demonstration], cfg: TrainConfig = TrainConfig()) -> TrainedModel:
    """Run the full learning chain over the given demonstrations.

    Per demo: encode frames, enroll observation windows into the shared
    state space, chunk atoms into actions, and count transitions. The
    window stream is front-padded with copies of the first frame (when
    ``bootstrap_pad`` is on) so the demo starts from a rest window; the
    executor reproduces that alignment by repeating the current view
    before its first action. Transition counting never crosses demo
    boundaries. Reward learning and value iteration finish the model.

    Deterministic: equal demo bytes and equal config give a model that
    serializes to identical bytes.
    """
    demos = list(demos)
    if not demos:
        raise ValueError("training needs at least one demonstration")
    l = cfg.seq_len
    space = None
    actions: List[Action] = []
    counts = TransitionCounts()
    s_streams: List[List[int]] = []
    a_streams: List[List[int]] = []
    end_states = set()
    labels: Dict[str, set] = {}

    for demo in demos:
        space, s_stream = _window_streams(demo, cfg, space)
        if not s_stream:
            raise ValueError("a demonstration produced no observation window")
        actions, a_stream = learn_actions(demo.k_stream, l, actions)
        n_trans = min(len(a_stream), len(s_stream) - 1)
        s_used, a_used = s_stream[:n_trans + 1], a_stream[:n_trans]
        counts, _ = learn_transitions(s_used, a_used, counts)
        if a_used:
            s_streams.append(s_used)
            a_streams.append(a_used)
        end_states.add(s_stream[-1])
        label = demo.metadata.get("label")
        if label is not None:
            labels.setdefault(str(label), set()).update(s_stream)

    if not actions:
        raise ValueError("no demonstration carried a full action window")
    model = build_mdp(space.num_states, actions, counts, gamma=cfg.reward.gamma)
    reward = learn_reward(model, s_streams, a_streams, end_states, cfg.reward)
    model = replace(model, R=reward.R_sa)
    policy = value_iteration(model, tol=cfg.vi_tol)
    return TrainedModel(
        config=cfg, space=space, mdp=model, policy=policy,
        label_states={k: tuple(sorted(v)) for k, v in sorted(labels.items())},
    )


# ---------------------------------------------------------------------------
# model persistence


def _config_header(cfg: TrainConfig) -> Dict:
    return {
        "seq_len": cfg.seq_len,
        "modality": {
            "color_downsample": list(cfg.modality.color_downsample),
            "gradient_bins": cfg.modality.gradient_bins,
            "gradient_downsample": list(cfg.modality.gradient_downsample),
        },
        "match": {"tau": cfg.match.tau, "solver": asdict(cfg.match.solver)},
        "reward": asdict(cfg.reward),
        "vi_tol": cfg.vi_tol,
        "bootstrap_pad": cfg.bootstrap_pad,
    }


def _config_from_header(blob: Dict) -> TrainConfig:
    modality = ModalityConfig(
        color_downsample=tuple(blob["modality"]["color_downsample"]),
        gradient_bins=int(blob["modality"]["gradient_bins"]),
        gradient_downsample=tuple(blob["modality"]["gradient_downsample"]),
    )
    match = MatchConfig(
        tau=blob["match"]["tau"], solver=SolverConfig(**blob["match"]["solver"])
    )
    return TrainConfig(
        seq_len=int(blob["seq_len"]), modality=modality, match=match,
        reward=RewardConfig(**blob["reward"]), vi_tol=float(blob["vi_tol"]),
        bootstrap_pad=bool(blob["bootstrap_pad"]),
    )


def save_model(model: TrainedModel, path) -> None:
    """Serialize to one file: JSON header, separator, float64 sections.

    The header holds configs, states, actions, the policy, label map,
    and a section index (offset and shape per matrix). Matrices follow
    as raw little-endian float64 bytes in index order. Saving the same
    model twice produces identical bytes.
    """
    sections = [
        ("templates", model.space.templates.data),
        ("transitions", model.mdp.T),
        ("reward", model.mdp.R),
        ("seen", model.mdp.seen.astype(np.float64)),
    ]
    index = {}
    blob = b""
    for name, arr in sections:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index[name] = {"offset": len(blob), "shape": list(arr.shape)}
        blob += data
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": _config_header(model.config),
        "gamma": model.mdp.gamma,
        "states": list(model.space.states),
        "actions": [
            {"id": a.id, "atoms": [m.value for m in a.atoms]} for a in model.mdp.actions
        ],
        "policy": {
            "actions": list(model.policy.actions),
            "values": list(model.policy.values),
            "known": list(model.policy.known),
        },
        "label_states": {k: list(v) for k, v in model.label_states.items()},
        "sections": index,
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(text.encode("utf-8"))
        fh.write(b"\n\x00")
        fh.write(blob)


def _read_section(blob: bytes, entry: Dict) -> np.ndarray:
    shape = tuple(int(s) for s in entry["shape"])
    count = int(np.prod(shape)) if shape else 1
    start = int(entry["offset"])
    end = start + count * 8
    if start < 0 or end > len(blob):
        raise ModelFormatError("model file is truncated")
    return np.frombuffer(blob[start:end], dtype="<f8").reshape(shape).copy()


def load_model(path) -> TrainedModel:
    """Read a model file back; raises ModelFormatError on damage."""
    with open(path, "rb") as fh:
        raw = fh.read()
    sep = raw.find(b"\n\x00")
    if sep < 0:
        raise ModelFormatError("missing header separator")
    try:
        header = json.loads(raw[:sep].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}") from exc
    if header.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model file")
    if header.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {header.get('version')!r}")
    blob = raw[sep + 2:]
    try:
        cfg = _config_from_header(header["config"])
        sections = header["sections"]
        templates = _read_section(blob, sections["templates"])
        T = _read_section(blob, sections["transitions"])
        R = _read_section(blob, sections["reward"])
        seen = _read_section(blob, sections["seen"]).astype(bool)
        states = tuple(int(s) for s in header["states"])
        actions = tuple(
            Action(atoms=tuple(AtomMovement(m) for m in a["atoms"]), id=int(a["id"]))
            for a in header["actions"]
        )
        space = StateSpace(
            states=states,
            templates=TemplateMatrix(templates, seq_len=cfg.seq_len),
            state_of_seq={j: j for j in range(len(states))},
        )
        mdp = MdpModel(states=states, actions=actions, T=T, R=R,
                       gamma=float(header["gamma"]), seen=seen)
        policy = Policy(
            actions=tuple(int(a) for a in header["policy"]["actions"]),
            values=tuple(float(v) for v in header["policy"]["values"]),
            known=tuple(bool(b) for b in header["policy"]["known"]),
        )
        label_states = {
            k: tuple(int(s) for s in v)
            for k, v in header.get("label_states", {}).items()
        }
        return TrainedModel(config=cfg, space=space, mdp=mdp, policy=policy,
                            label_states=label_states)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"inconsistent model contents: {exc}") from exc


# ---------------------------------------------------------------------------
# recognition evaluation


@dataclass(frozen=True)
class QueryResult:
    label: str
    predicted: int
    confidence: float
    correct: bool


@dataclass(frozen=True)
class RecognitionReport:
    queries: Tuple[QueryResult, ...]

    @property
    def accuracy(self) -> float:
        if not self.queries:
            return 0.0
        return sum(q.correct for q in self.queries) / len(self.queries)

    def pr_points(self) -> List[Tuple[float, float, float]]:
        """(threshold, precision, recall) rows, threshold descending.

        A query counts as accepted when its confidence reaches the
        threshold; recall therefore never decreases as the threshold
        drops.
        """
        if not self.queries:
            return []
        points = []
        total = len(self.queries)
        thresholds = sorted({q.confidence for q in self.queries}, reverse=True)
        for th in thresholds:
            accepted = [q for q in self.queries if q.confidence >= th]
            correct = sum(q.correct for q in accepted)
            points.append((th, correct / len(accepted), correct / total))
        return points


def evaluate_recognition(
    model: TrainedModel, labeled_demos: Sequence[Demonstration]
) -> RecognitionReport:
    """Identify every window of every labeled demo against the model.

    Each non-overlapping window of seq_len frames is one query; the
    prediction is correct when the identified state belongs to the set
    the query's label enrolled as (the model's label_states map).
    Confidence is the winning group's share of total absolute weight.
    """
    l = model.seq_len
    results = []
    for demo in labeled_demos:
        label = demo.metadata.get("label")
        if label is None:
            raise ValueError("every query demo needs a label in its metadata")
        label = str(label)
        expected = set(model.label_states.get(label, ()))
        frames = list(demo.frames)
        for start in range(0, len(frames) - l + 1, l):
            sid, masses = model.identify_window(frames[start:start + l])
            total = float(masses.sum())
            confidence = float(masses.max() / total) if total > 0 else 0.0
            results.append(QueryResult(
                label=label, predicted=sid, confidence=confidence,
                correct=sid in expected,
            ))
    return RecognitionReport(queries=tuple(results))
