"""Behavioral evolution histories and their line-delimited JSON format.

A history file is one JSON object per line: the first line is run metadata,
each following line is one episode with its ``B`` steps.  A step carries the
candidate contexts, the chosen index, and — only in the privileged view — the
observed reward.  ``strip_rewards`` produces the reward-free view that the
inverse estimators consume; the two views differ by nothing else.

Floats are serialized with 17 significant digits so a write/read round trip
is bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = [
    "HistoryMeta",
    "StepRecord",
    "EvolutionHistory",
    "write_history",
    "read_history",
    "write_phase",
    "read_phase",
    "strip_rewards",
    "truncate",
]

_FMT = "%.17g"


@dataclass(frozen=True)
class HistoryMeta:
    """First-line metadata: geometry, expert configuration, environment seed."""

    d: int
    M: int
    N: int
    B: int
    mode: str
    alpha: float
    lam: float
    env_seed: int
    env_digest: str = ""

    def to_dict(self):
        return {
            "d": self.d, "M": self.M, "N": self.N, "B": self.B,
            "mode": self.mode, "alpha": self.alpha, "lam": self.lam,
            "env_seed": self.env_seed, "env_digest": self.env_digest,
        }

    @classmethod
    def from_dict(cls, obj):
        required = ("d", "M", "N", "B", "mode", "alpha", "lam", "env_seed")
        missing = [k for k in required if k not in obj]
        if missing:
            raise ValueError(f"metadata is missing keys {missing}")
        return cls(d=int(obj["d"]), M=int(obj["M"]), N=int(obj["N"]), B=int(obj["B"]),
                   mode=str(obj["mode"]), alpha=float(obj["alpha"]), lam=float(obj["lam"]),
                   env_seed=int(obj["env_seed"]), env_digest=str(obj.get("env_digest", "")))


@dataclass(frozen=True)
class StepRecord:
    """One step: (M, d) candidates, the chosen index, and optionally its reward."""

    candidates: np.ndarray
    chosen_index: int
    reward: Optional[float] = None

    def __post_init__(self):
        c = np.asarray(self.candidates, dtype=np.float64)
        if c.ndim != 2:
            raise ValueError(f"candidates must be 2-D (M, d), got ndim={c.ndim}")
        if not 0 <= self.chosen_index < c.shape[0]:
            raise ValueError(f"chosen_index {self.chosen_index} out of range for M={c.shape[0]}")
        object.__setattr__(self, "candidates", c)


@dataclass(frozen=True, eq=False)
class EvolutionHistory:
    """Array-backed history: (N,B,M,d) candidates, (N,B) choices, optional (N,B) rewards."""

    meta: HistoryMeta
    candidates: np.ndarray
    choices: np.ndarray
    rewards: Optional[np.ndarray] = None

    def __post_init__(self):
        m = self.meta
        expect = (m.N, m.B, m.M, m.d)
        if self.candidates.shape != expect:
            raise ValueError(f"candidates shape {self.candidates.shape} != {expect}")
        if self.choices.shape != (m.N, m.B):
            raise ValueError(f"choices shape {self.choices.shape} != {(m.N, m.B)}")
        if self.choices.min(initial=0) < 0 or self.choices.max(initial=0) >= m.M:
            raise ValueError("choices contain indices outside [0, M)")
        if self.rewards is not None and self.rewards.shape != (m.N, m.B):
            raise ValueError(f"rewards shape {self.rewards.shape} != {(m.N, m.B)}")

    @property
    def has_rewards(self):
        return self.rewards is not None

    def step(self, episode, step):
        """The :class:`StepRecord` at 0-based (episode, step)."""
        r = float(self.rewards[episode, step]) if self.has_rewards else None
        return StepRecord(self.candidates[episode, step], int(self.choices[episode, step]), r)


def _fmt_step(candidates, chosen, reward):
    cands = "[[" + "],[".join(
        ",".join(_FMT % v for v in row) for row in candidates) + "]]"
    if reward is None:
        return '{"candidates":%s,"chosen":%d}' % (cands, chosen)
    return '{"candidates":%s,"chosen":%d,"reward":%s}' % (cands, chosen, _FMT % reward)


def write_history(hist, path):
    """Write a history as line-delimited JSON (metadata line, then one line per episode)."""
    m = hist.meta
    with open(path, "w") as fh:
        fh.write(json.dumps(m.to_dict()) + "\n")
        for n in range(m.N):
            steps = ",".join(
                _fmt_step(hist.candidates[n, b], int(hist.choices[n, b]),
                          float(hist.rewards[n, b]) if hist.has_rewards else None)
                for b in range(m.B))
            fh.write('{"episode":%d,"steps":[%s]}\n' % (n + 1, steps))


def _parse_json_line(line, lineno):
    try:
        return json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"line {lineno}: invalid JSON: {exc}") from exc


def read_history(path):
    """Parse a history file, validating shape and indices line by line."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError("line 1: empty history file")
    meta = HistoryMeta.from_dict(_parse_json_line(lines[0], 1))
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != meta.N:
        raise ValueError(f"expected {meta.N} episode lines, found {len(body)}")

    candidates = np.empty((meta.N, meta.B, meta.M, meta.d), dtype=np.float64)
    choices = np.empty((meta.N, meta.B), dtype=np.int64)
    rewards = None
    for n, (lineno, line) in enumerate(body):
        rec = _parse_json_line(line, lineno)
        if rec.get("episode") != n + 1:
            raise ValueError(f"line {lineno}: expected episode {n + 1}, got {rec.get('episode')}")
        steps = rec.get("steps")
        if not isinstance(steps, list) or len(steps) != meta.B:
            got = len(steps) if isinstance(steps, list) else type(steps).__name__
            raise ValueError(f"line {lineno}: expected {meta.B} steps, got {got}")
        try:
            cands = np.array([s["candidates"] for s in steps], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: malformed candidates: {exc}") from exc
        if cands.shape != (meta.B, meta.M, meta.d):
            raise ValueError(
                f"line {lineno}: candidates shape {cands.shape[1:]} != {(meta.M, meta.d)}")
        try:
            choices[n] = [s["chosen"] for s in steps]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"line {lineno}: malformed chosen index: {exc}") from exc
        candidates[n] = cands

        has_r = "reward" in steps[0]
        if n == 0 and has_r:
            rewards = np.empty((meta.N, meta.B), dtype=np.float64)
        if has_r != (rewards is not None) or any(("reward" in s) != has_r for s in steps):
            raise ValueError(f"line {lineno}: inconsistent reward presence")
        if has_r:
            rewards[n] = [s["reward"] for s in steps]

    if choices.min() < 0 or choices.max() >= meta.M:
        bad = int(np.argwhere((choices < 0) | (choices >= meta.M))[0][0])
        raise ValueError(f"episode {bad + 1}: chosen index outside [0, {meta.M})")
    return EvolutionHistory(meta, candidates, choices, rewards)


def write_phase(phase_data, path):
    """Write test-phase contexts in the same line format (no choices, no rewards)."""
    ep = phase_data.episodes
    n_ep, n_st, m, d = ep.shape
    with open(path, "w") as fh:
        fh.write(json.dumps({"phase": phase_data.phase, "N": n_ep, "B": n_st,
                             "M": m, "d": d}) + "\n")
        for n in range(n_ep):
            steps = ",".join(
                '{"candidates":[[%s]]}' % "],[".join(
                    ",".join(_FMT % v for v in row) for row in ep[n, b])
                for b in range(n_st))
            fh.write('{"episode":%d,"steps":[%s]}\n' % (n + 1, steps))


def read_phase(path):
    """Parse a phase file written by :func:`write_phase`."""
    from .synthenv import PhaseData

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError("line 1: empty phase file")
    meta = _parse_json_line(lines[0], 1)
    for key in ("phase", "N", "B", "M", "d"):
        if key not in meta:
            raise ValueError(f"line 1: metadata is missing key {key!r}")
    n_ep, n_st = int(meta["N"]), int(meta["B"])
    shape = (n_ep, n_st, int(meta["M"]), int(meta["d"]))
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != n_ep:
        raise ValueError(f"expected {n_ep} episode lines, found {len(body)}")
    episodes = np.empty(shape, dtype=np.float64)
    for n, (lineno, line) in enumerate(body):
        rec = _parse_json_line(line, lineno)
        steps = rec.get("steps")
        if not isinstance(steps, list) or len(steps) != n_st:
            raise ValueError(f"line {lineno}: expected {n_st} steps")
        try:
            cands = np.array([s["candidates"] for s in steps], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: malformed candidates: {exc}") from exc
        if cands.shape != shape[1:]:
            raise ValueError(f"line {lineno}: candidates shape {cands.shape[1:]} != {shape[2:]}")
        episodes[n] = cands
    return PhaseData(str(meta["phase"]), episodes)


def strip_rewards(hist):
    """The reward-free view of a history; applying it twice is a no-op."""
    if not hist.has_rewards:
        return hist
    return EvolutionHistory(hist.meta, hist.candidates, hist.choices, None)


def truncate(hist, ce_rate):
    """Keep the first floor(ce_rate * N) episodes of a history."""
    if not 0.0 < ce_rate <= 1.0:
        raise ValueError(f"ce_rate must lie in (0, 1], got {ce_rate}")
    keep = math.floor(ce_rate * hist.meta.N)
    if keep < 1:
        raise ValueError(f"ce_rate={ce_rate} keeps no episodes of N={hist.meta.N}")
    if keep == hist.meta.N:
        return hist
    rewards = hist.rewards[:keep] if hist.has_rewards else None
    return EvolutionHistory(replace(hist.meta, N=keep),
                            hist.candidates[:keep], hist.choices[:keep], rewards)
