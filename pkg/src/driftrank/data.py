"""Cascade corpus model: parsing, time-step bucketing, recent-stimuli
construction, and train/val/test plus seed-set splitting.

A cascade file is UTF-8 JSON lines: {"id", "text", "users": [[uid, ts], ...]}
with an optional "vec" overriding the text embedding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import embed
from .graphs import SocialGraph


@dataclass
class Cascade:
    id: str
    text: str
    users: list  # of (uid, ts), ascending ts, no duplicate uid
    content_vec: np.ndarray | None = None
    time_step: int | None = None

    @property
    def user_ids(self) -> list[int]:
        return [u for u, _ in self.users]

    @property
    def first_ts(self) -> float:
        return self.users[0][1]

    def __len__(self):
        return len(self.users)


@dataclass
class Corpus:
    graph: SocialGraph
    cascades: list
    n_steps: int
    train_idx: list = field(default_factory=list)
    val_idx: list = field(default_factory=list)
    test_idx: list = field(default_factory=list)

    @property
    def n_users(self) -> int:
        return self.graph.n_users

    def split(self, name: str) -> list[Cascade]:
        idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[name]
        return [self.cascades[i] for i in idx]

    def at_step(self, t: int) -> list[Cascade]:
        return [c for c in self.cascades if c.time_step == t]

    def training_users(self) -> set[int]:
        users: set[int] = set()
        for c in self.split("train"):
            users.update(c.user_ids)
        return users

    def training_forward_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_users, dtype=np.int64)
        for c in self.split("train"):
            for u in c.user_ids:
                counts[u] += 1
        return counts


def load_cascades(path) -> list[Cascade]:
    """Parse a JSONL cascade file; users are sorted by timestamp and
    duplicate user ids keep their earliest appearance."""
    cascades = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            if "id" not in rec or "users" not in rec:
                raise ValueError(f"{path}:{lineno}: record needs 'id' and 'users'")
            users = [(int(u), float(ts)) for u, ts in rec["users"]]
            users.sort(key=lambda p: p[1])
            seen: set[int] = set()
            deduped = []
            for u, ts in users:
                if u not in seen:
                    seen.add(u)
                    deduped.append((u, ts))
            vec = None
            if "vec" in rec:
                vec = np.asarray(rec["vec"], dtype=np.float64)
            cascades.append(
                Cascade(id=str(rec["id"]), text=rec.get("text", ""), users=deduped, content_vec=vec)
            )
    return cascades


def save_cascades(cascades, path):
    with open(path, "w", encoding="utf-8") as fh:
        for c in cascades:
            rec = {"id": c.id, "text": c.text, "users": [[u, ts] for u, ts in c.users]}
            fh.write(json.dumps(rec) + "\n")


def attach_embeddings(cascades, d: int):
    """Fill content_vec from text (or renormalize a supplied vector)."""
    for c in cascades:
        if c.content_vec is not None:
            if c.content_vec.shape != (d,):
                raise ValueError(
                    f"cascade {c.id}: supplied vector has shape {c.content_vec.shape}, expected ({d},)"
                )
            c.content_vec = embed.normalize_or_zero(c.content_vec)
        else:
            c.content_vec = embed.embed_text(c.text, d)


def bucket_by_timestep(cascades, n_steps: int) -> list[int]:
    """Assign each cascade a time step by its first timestamp.

    The span [min_first, max_first] is divided into n_steps equal half-open
    intervals, with the last interval right-closed.
    """
    if n_steps < 2:
        raise ValueError(f"need at least 2 time steps, got {n_steps}")
    if not cascades:
        raise ValueError("no cascades to bucket")
    firsts = [c.first_ts for c in cascades]
    lo, hi = min(firsts), max(firsts)
    if lo == hi:
        raise ValueError("all cascades share one first timestamp: degenerate span")
    width = (hi - lo) / n_steps
    steps = []
    for c in cascades:
        step = int((c.first_ts - lo) / width)
        step = min(step, n_steps - 1)
        c.time_step = step
        steps.append(step)
    return steps


def _threshold_fixed_point(cascades, min_user_records: int, min_cascade_len: int):
    """Iteratively drop sparse users and short cascades until stable."""
    kept = list(cascades)
    banned: set[int] = set()
    while True:
        kept = [c for c in kept if sum(1 for u in c.user_ids if u not in banned) >= min_cascade_len]
        counts: dict[int, int] = {}
        for c in kept:
            for u in c.user_ids:
                if u not in banned:
                    counts[u] = counts.get(u, 0) + 1
        newly = {u for u, n in counts.items() if n < min_user_records}
        if not newly:
            break
        banned |= newly
    out = []
    for c in kept:
        users = [(u, ts) for u, ts in c.users if u not in banned]
        out.append(Cascade(id=c.id, text=c.text, users=users, content_vec=c.content_vec, time_step=c.time_step))
    return out


def filter_corpus(
    graph: SocialGraph,
    cascades,
    n_steps: int,
    min_user_records: int = 10,
    min_cascade_len: int = 10,
    split_seed: int = 0,
) -> Corpus:
    """Threshold-filter bucketed cascades and build the corpus splits.

    Training covers steps 0..T-2; step T-1 cascades are randomly split
    val:test with ratio 1:3. Users never seen in training are removed from
    val/test ground truth.
    """
    for c in cascades:
        if c.time_step is None:
            raise ValueError(f"cascade {c.id} has no time step; bucket first")
        for u in c.user_ids:
            if u >= graph.n_users or u < 0:
                raise ValueError(f"cascade {c.id}: user {u} not in graph of {graph.n_users} users")
    filtered = _threshold_fixed_point(cascades, min_user_records, min_cascade_len)
    if not filtered:
        raise ValueError("corpus empty after filtering")

    train_idx = [i for i, c in enumerate(filtered) if c.time_step < n_steps - 1]
    last_idx = [i for i, c in enumerate(filtered) if c.time_step == n_steps - 1]
    rng = np.random.default_rng(split_seed)
    order = list(rng.permutation(len(last_idx)))
    n_val = len(last_idx) // 4  # val:test = 1:3
    val_idx = sorted(last_idx[i] for i in order[:n_val])
    test_idx = sorted(last_idx[i] for i in order[n_val:])

    corpus = Corpus(
        graph=graph,
        cascades=filtered,
        n_steps=n_steps,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
    )
    known = corpus.training_users()
    for i in val_idx + test_idx:
        c = filtered[i]
        c.users = [(u, ts) for u, ts in c.users if u in known]
    return corpus


def load_corpus(
    edges_path,
    cascades_path,
    n_steps: int = 6,
    d: int = 128,
    min_user_records: int = 10,
    min_cascade_len: int = 10,
    split_seed: int = 0,
) -> Corpus:
    """End-to-end load: parse files, embed, bucket, filter, split."""
    from .graphs import load_edges

    graph = load_edges(edges_path)
    cascades = load_cascades(cascades_path)
    attach_embeddings(cascades, d)
    bucket_by_timestep(cascades, n_steps)
    return filter_corpus(
        graph,
        cascades,
        n_steps,
        min_user_records=min_user_records,
        min_cascade_len=min_cascade_len,
        split_seed=split_seed,
    )


def recent_stimuli(corpus: Corpus, t: int, d: int) -> np.ndarray:
    """Stimuli matrix for step t: row i is the renormalized mean of the
    content each user propagated at step t-1, zero for inactive users."""
    if not (1 <= t < corpus.n_steps):
        raise ValueError(f"step must be in [1, {corpus.n_steps}), got {t}")
    acc = np.zeros((corpus.n_users, d))
    counts = np.zeros(corpus.n_users)
    for c in corpus.at_step(t - 1):
        if c.content_vec is None:
            raise ValueError(f"cascade {c.id} has no content vector")
        for u in c.user_ids:
            acc[u] += c.content_vec
            counts[u] += 1.0
    active = counts > 0
    acc[active] /= counts[active, None]
    norms = np.linalg.norm(acc, axis=1)
    pos = norms > 1e-12
    acc[pos] /= norms[pos, None]
    acc[~pos] = 0.0
    return acc


def aggregate_stimuli(corpus: Corpus, d: int, steps=None) -> np.ndarray:
    """Whole-window variant of recent_stimuli (used by the static-encoder
    ablation): mean content over all the given steps, renormalized."""
    if steps is None:
        steps = range(corpus.n_steps - 1)
    acc = np.zeros((corpus.n_users, d))
    counts = np.zeros(corpus.n_users)
    for t in steps:
        for c in corpus.at_step(t):
            for u in c.user_ids:
                acc[u] += c.content_vec
                counts[u] += 1.0
    active = counts > 0
    acc[active] /= counts[active, None]
    norms = np.linalg.norm(acc, axis=1)
    pos = norms > 1e-12
    acc[pos] /= norms[pos, None]
    acc[~pos] = 0.0
    return acc


def seed_split(cascade: Cascade, seed_pct: float):
    """Split a cascade's user sequence into (observed prefix, hidden rest).

    observed = first ceil(seed_pct * K) users; seed_pct 0 observes nothing
    (the "initial" setting where only the content is known).
    """
    if not (0.0 <= seed_pct <= 0.5):
        raise ValueError(f"seed_pct must be in [0, 0.5], got {seed_pct}")
    k = len(cascade)
    if seed_pct > 0.0 and k < 2:
        raise ValueError(f"cascade {cascade.id} too short to split (K={k})")
    n_obs = int(math.ceil(seed_pct * k))
    ids = cascade.user_ids
    return ids[:n_obs], ids[n_obs:]
