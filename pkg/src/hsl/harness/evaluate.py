"""Episode-based mean-IoU evaluation over synthetic suites and several seeds.

Each (seed, index) pair maps to one episode seed, so a report is a pure
function of the config, the suite and the seed list.  Episodes may run in a
process pool; results are always reduced in (seed, index) order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import Config, Episode, Rng
from ..core.errors import DimensionError, ParameterError
from .episodes import make_ambiguous_episode, make_episode, make_separable_episode, random_spec

SUITES = ("mixed", "high-contrast", "ambiguous")
MODES = ("pcmt", "fixed0", "otsu")

Predictor = Callable[[Episode], np.ndarray]


def iou(pred, gt) -> float:
    """Intersection over union of two binary masks; two empty masks score 1."""
    pred, gt = np.asarray(pred) > 0.5, np.asarray(gt) > 0.5
    if pred.shape != gt.shape:
        raise DimensionError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = int(np.count_nonzero(pred | gt))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(pred & gt)) / union


def episode_seed(seed: int, suite: str, index: int) -> int:
    return int(Rng(seed, "eval", suite).spawn("episode", index).raw(1)[0] >> np.uint64(1))


def suite_episode(suite: str, seed: int, index: int, size=(64, 64)) -> Episode:
    s = episode_seed(seed, suite, index)
    if suite == "mixed":
        return make_episode(random_spec(Rng(s, "mixed"), (0.3, 1.0), size))
    if suite == "high-contrast":
        return make_separable_episode(s, size=size)
    if suite == "ambiguous":
        return make_ambiguous_episode(s, size=size)
    raise ParameterError(f"unknown suite {suite!r}; expected one of {SUITES}")


def half_plane_mask(size, rng: Rng) -> np.ndarray:
    """Random half-plane through a uniformly drawn interior point."""
    H, W = size
    u = rng.uniform(3)
    angle = 2 * math.pi * u[0]
    px, py = W * u[1], H * u[2]
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64) + 0.5
    return (((xx - px) * math.cos(angle) + (yy - py) * math.sin(angle)) > 0).astype(np.float64)


@dataclass(frozen=True)
class EpisodeResult:
    seed: int
    index: int
    episode_seed: int
    ious: dict[str, float]
    C: float = float("nan")
    t: float = float("nan")


@dataclass(frozen=True)
class EvalReport:
    suite: str
    mode: str
    seeds: tuple[int, ...]
    n_episodes: int
    config_hash: str
    results: tuple[EpisodeResult, ...] = field(repr=False)

    @property
    def modes(self) -> tuple[str, ...]:
        return tuple(self.results[0].ious) if self.results else ()

    def per_episode(self, mode: str | None = None) -> list[float]:
        mode = mode or self.mode
        return [r.ious[mode] for r in self.results]

    def mean_iou(self, mode: str | None = None) -> float:
        vals = self.per_episode(mode)
        return float(np.mean(vals)) if vals else float("nan")

    def per_mode(self) -> dict[str, float]:
        return {m: self.mean_iou(m) for m in self.modes}

    def per_seed(self, mode: str | None = None) -> dict[int, float]:
        mode = mode or self.mode
        return {s: float(np.mean([r.ious[mode] for r in self.results if r.seed == s]))
                for s in self.seeds}

    def to_text(self) -> str:
        lines = [f"suite={self.suite}", f"mode={self.mode}",
                 f"seeds={','.join(map(str, self.seeds))}",
                 f"episodes_per_seed={self.n_episodes}",
                 f"config_hash={self.config_hash}",
                 f"mean_iou={self.mean_iou()!r}"]
        for m, v in self.per_mode().items():
            lines.append(f"mean_iou.{m}={v!r}")
        for s, v in self.per_seed().items():
            lines.append(f"mean_iou.seed{s}={v!r}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        modes = self.modes
        rows = ["seed,index,episode_seed," + ",".join(f"iou_{m}" for m in modes) + ",C,t"]
        for r in self.results:
            vals = ",".join(repr(r.ious[m]) for m in modes)
            rows.append(f"{r.seed},{r.index},{r.episode_seed},{vals},{r.C!r},{r.t!r}")
        return "\n".join(rows) + "\n"


def _run_one(args) -> EpisodeResult:
    from ..pipeline import infer_episode

    cfg, suite, seed, index, predictor = args
    episode = suite_episode(suite, seed, index, cfg.image_size)
    es = episode_seed(seed, suite, index)
    if predictor is not None:
        return EpisodeResult(seed, index, es, {"custom": iou(predictor(episode), episode.query_mask)})
    inf = infer_episode(episode, cfg, _models(cfg))
    ious = {m: iou(inf.predict(m), episode.query_mask) for m in MODES}
    return EpisodeResult(seed, index, es, ious, inf.C, inf.otsu.threshold)


_MODEL_CACHE: dict = {}


def _models(cfg: Config):
    from ..pipeline import Models

    key = cfg.digest()
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = Models.from_config(cfg)
    return _MODEL_CACHE[key]


def evaluate(n_episodes: int, seeds: Sequence[int], cfg: Config | None = None,
             mode: str = "pcmt", suite: str = "mixed", predictor: Predictor | None = None,
             threads: int = 1) -> EvalReport:
    """Run every (seed, index) episode and aggregate IoU.

    With the default predictor all three threshold modes are scored from one
    inference pass.  A custom ``predictor`` is scored under mode ``custom``.
    """
    cfg = cfg or Config()
    if n_episodes < 1:
        raise ParameterError("n_episodes must be >= 1")
    if suite not in SUITES:
        raise ParameterError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if predictor is not None:
        mode = "custom"
    elif mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}; expected one of {MODES}")
    seeds = tuple(int(s) for s in seeds)
    jobs = [(cfg, suite, s, i, predictor) for s in seeds for i in range(n_episodes)]
    if threads > 1 and predictor is None:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=8))
    else:
        results = [_run_one(j) for j in jobs]
    return EvalReport(suite, mode, seeds, n_episodes, cfg.digest(), tuple(results))


def chance_baseline(n_episodes: int, seeds: Sequence[int], cfg: Config | None = None,
                    suite: str = "high-contrast") -> float:
    """Mean IoU of a random half-plane prediction on the same episodes."""
    cfg = cfg or Config()
    vals = []
    for s in seeds:
        rng = Rng(s, "chance", suite)
        for i in range(n_episodes):
            ep = suite_episode(suite, s, i, cfg.image_size)
            vals.append(iou(half_plane_mask(ep.size, rng.spawn("episode", i)), ep.query_mask))
    return float(np.mean(vals))
