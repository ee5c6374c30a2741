"""Episode directories: ``support_<i>.ppm``, ``support_<i>_mask.pgm``,
``query.ppm``, ``query_mask.pgm`` and an ``episode.txt`` of ``key=value`` lines."""

from __future__ import annotations

from pathlib import Path

from ..core import Episode, read_image, read_mask, write_image, write_mask
from ..core.errors import FormatError


def write_episode_dir(episode: Episode, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, (img, mask) in enumerate(episode.supports):
        write_image(path / f"support_{i}.ppm", img)
        write_mask(path / f"support_{i}_mask.pgm", mask)
    write_image(path / "query.ppm", episode.query_image)
    write_mask(path / "query_mask.pgm", episode.query_mask)
    h, w = episode.size
    (path / "episode.txt").write_text(
        f"seed={episode.seed}\nk_shot={episode.k_shot}\nsize={h}x{w}\n")
    return path


def _read_meta(path: Path) -> dict[str, str]:
    meta_file = path / "episode.txt"
    if not meta_file.exists():
        return {}
    meta = {}
    for line in meta_file.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{meta_file}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def read_episode_dir(path: str | Path) -> Episode:
    path = Path(path)
    if not path.is_dir():
        raise FormatError(f"episode directory {path} does not exist")
    meta = _read_meta(path)
    k = int(meta["k_shot"]) if "k_shot" in meta else len(list(path.glob("support_*_mask.pgm")))
    if k < 1:
        raise FormatError(f"{path}: no support shots found")
    try:
        supports = tuple((read_image(path / f"support_{i}.ppm"),
                          read_mask(path / f"support_{i}_mask.pgm")) for i in range(k))
        query = read_image(path / "query.ppm")
        q_mask = path / "query_mask.pgm"
        query_mask = read_mask(q_mask) if q_mask.exists() else query[0] * 0.0
    except FileNotFoundError as exc:
        raise FormatError(f"{path}: missing episode file {exc.filename}") from exc
    return Episode(supports, query, query_mask, int(meta.get("seed", 0)))
