"""Episodic data model: folds, episode sampling, manifests, synthetic data.

Randomness comes exclusively from numpy's PCG64 (a seedable 64-bit permuted
congruential generator), so manifests and synthetic tensors are bit-identical
for equal (seed, parameters). Class signatures are derived from the class id
alone and stay stable across episodes and manifests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .arrayio import write_array_file, write_mask_file
from .errors import ManifestError
from .tensor import BinaryMask, FeatureStack, Tensor

CONTIGUOUS = "contiguous"
INTERLEAVED = "interleaved"

# Substream tag for per-class feature signatures.
_SIGNATURE_STREAM = 0x53474E31


# ---------------------------------------------------------------------------
# Folds


@dataclass(frozen=True)
class FoldSpec:
    """Total assignment of 1-based class ids to cross-validation folds."""

    dataset_name: str
    n_classes: int
    n_folds: int
    scheme: str
    assignment: tuple[int, ...]  # assignment[c - 1] = fold id of class c

    def fold_of(self, class_id: int) -> int:
        if not 1 <= class_id <= self.n_classes:
            raise ValueError(f"class id {class_id} outside 1..{self.n_classes}")
        return self.assignment[class_id - 1]

    def classes_in(self, fold_id: int) -> tuple[int, ...]:
        if not 0 <= fold_id < self.n_folds:
            raise ValueError(f"fold id {fold_id} outside 0..{self.n_folds - 1}")
        return tuple(c for c in range(1, self.n_classes + 1) if self.assignment[c - 1] == fold_id)


def default_scheme(dataset_name: str) -> str:
    """Community convention: COCO-style splits interleave, PASCAL-style ones
    take contiguous class blocks."""
    return INTERLEAVED if "coco" in dataset_name.lower() else CONTIGUOUS


def build_folds(dataset_name: str, n_classes: int, n_folds: int, scheme: str | None = None) -> FoldSpec:
    """Partition classes 1..n_classes into folds.

    contiguous: class c goes to fold (c-1) // (n_classes / n_folds)
    interleaved: class c goes to fold (c-1) % n_folds
    Omitting the scheme picks the dataset's conventional one.
    """
    if scheme is None:
        scheme = default_scheme(dataset_name)
    if n_classes < 1 or n_folds < 1:
        raise ValueError("need at least one class and one fold")
    if n_classes % n_folds != 0:
        raise ValueError(f"{n_folds} folds do not evenly divide {n_classes} classes")
    if scheme == CONTIGUOUS:
        per_fold = n_classes // n_folds
        assignment = tuple((c - 1) // per_fold for c in range(1, n_classes + 1))
    elif scheme == INTERLEAVED:
        assignment = tuple((c - 1) % n_folds for c in range(1, n_classes + 1))
    else:
        raise ValueError(f"unknown fold scheme {scheme!r}")
    return FoldSpec(dataset_name, n_classes, n_folds, scheme, assignment)


# ---------------------------------------------------------------------------
# Episodes and manifests


@dataclass(frozen=True)
class EpisodeItem:
    """File references for one (features, mask) item, relative to the manifest."""

    features: tuple[str, ...]  # one array file per layer, shallowest first
    im_features: tuple[str, ...]
    mask: str

    def __post_init__(self) -> None:
        if len(self.features) != len(self.im_features):
            raise ManifestError(
                f"item {self.mask}: {len(self.features)} feature layers but "
                f"{len(self.im_features)} input-masked layers"
            )


@dataclass(frozen=True)
class Episode:
    class_id: int
    supports: tuple[EpisodeItem, ...]
    query: EpisodeItem

    def __post_init__(self) -> None:
        if len(self.supports) < 1:
            raise ManifestError("episode needs at least one support")


@dataclass(frozen=True)
class EpisodeManifest:
    dataset: str
    fold: int
    shots: int
    seed: int
    episodes: tuple[Episode, ...]

    def __post_init__(self) -> None:
        if not self.episodes:
            raise ManifestError("manifest holds no episodes")
        if self.shots < 1:
            raise ManifestError(f"shots must be >= 1, got {self.shots}")
        for i, ep in enumerate(self.episodes):
            if len(ep.supports) != self.shots:
                raise ManifestError(
                    f"episode {i}: {len(ep.supports)} supports but manifest says {self.shots}-shot"
                )


def _item_to_dict(item: EpisodeItem) -> dict:
    return {
        "features": list(item.features),
        "im_features": list(item.im_features),
        "mask": item.mask,
    }


def _item_from_dict(d: dict, where: str) -> EpisodeItem:
    try:
        return EpisodeItem(
            features=tuple(d["features"]),
            im_features=tuple(d["im_features"]),
            mask=d["mask"],
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"{where}: bad item entry: {exc}") from None


def manifest_to_dict(m: EpisodeManifest) -> dict:
    return {
        "dataset": m.dataset,
        "fold": m.fold,
        "shots": m.shots,
        "seed": m.seed,
        "episodes": [
            {
                "class_id": ep.class_id,
                "supports": [_item_to_dict(s) for s in ep.supports],
                "query": _item_to_dict(ep.query),
            }
            for ep in m.episodes
        ],
    }


def manifest_from_dict(d: dict) -> EpisodeManifest:
    try:
        episodes = tuple(
            Episode(
                class_id=int(ep["class_id"]),
                supports=tuple(
                    _item_from_dict(s, f"episode {i}") for s in ep["supports"]
                ),
                query=_item_from_dict(ep["query"], f"episode {i}"),
            )
            for i, ep in enumerate(d["episodes"])
        )
        return EpisodeManifest(
            dataset=str(d["dataset"]),
            fold=int(d["fold"]),
            shots=int(d["shots"]),
            seed=int(d["seed"]),
            episodes=episodes,
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"manifest missing or malformed field: {exc}") from None


def save_manifest(m: EpisodeManifest, path: str | Path) -> None:
    text = json.dumps(manifest_to_dict(m), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_manifest(path: str | Path) -> EpisodeManifest:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from None
    return manifest_from_dict(d)


def sample_episodes(
    pool: Mapping[int, Sequence[EpisodeItem]],
    fold: FoldSpec,
    fold_id: int,
    shots: int,
    n_episodes: int,
    seed: int,
) -> EpisodeManifest:
    """Sample episodes from the classes of one fold.

    The class is drawn uniformly, then shots+1 distinct items (the last is
    the query, so it never appears among its own supports). Deterministic for
    equal (seed, pool ordering).
    """
    if shots < 1 or n_episodes < 1:
        raise ValueError("shots and n_episodes must be >= 1")
    classes = fold.classes_in(fold_id)
    if not classes:
        raise ValueError(f"fold {fold_id} holds no classes")
    for cid in classes:
        have = len(pool.get(cid, ()))
        if have < shots + 1:
            raise ValueError(
                f"class {cid} has {have} items, need at least {shots + 1} for {shots}-shot episodes"
            )
    rng = np.random.Generator(np.random.PCG64(seed))
    episodes = []
    for _ in range(n_episodes):
        cid = classes[int(rng.integers(len(classes)))]
        items = pool[cid]
        picks = rng.choice(len(items), size=shots + 1, replace=False)
        supports = tuple(items[int(j)] for j in picks[:shots])
        query = items[int(picks[-1])]
        episodes.append(Episode(class_id=cid, supports=supports, query=query))
    return EpisodeManifest(
        dataset=fold.dataset_name,
        fold=fold_id,
        shots=shots,
        seed=seed,
        episodes=tuple(episodes),
    )


# ---------------------------------------------------------------------------
# Synthetic episodes


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic episode generator.

    Feature maps carry a per-class signature vector inside elliptical blobs
    and an orthogonal background signature outside, optionally box-blurred
    and perturbed with Gaussian noise, at every requested layer size. The
    input-masked variant drops the background signature, mimicking features
    of a background-zeroed image.
    """

    class_id: int
    shots: int = 1
    image_size: tuple[int, int] = (64, 64)
    layer_sizes: tuple[tuple[int, int], ...] = ((16, 16), (8, 8))
    channels: int = 8
    blob_count: tuple[int, int] = (1, 1)
    blob_radius: tuple[float, float] = (4.0, 10.0)
    max_area_frac: float | None = None
    noise_sigma: float = 0.0
    blur_passes: int = 0
    signal_gain: float = 3.0

    def __post_init__(self) -> None:
        h, w = self.image_size
        r_lo, r_hi = self.blob_radius
        n_lo, n_hi = self.blob_count
        if h < 2 or w < 2:
            raise ValueError(f"image size must be at least 2x2, got {self.image_size}")
        if self.channels < 2:
            raise ValueError("need at least 2 channels for distinct signatures")
        if not self.layer_sizes or any(lh < 1 or lw < 1 for lh, lw in self.layer_sizes):
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not 1 <= n_lo <= n_hi:
            raise ValueError(f"bad blob count range {self.blob_count}")
        if not 1.0 <= r_lo <= r_hi:
            raise ValueError(f"bad blob radius range {self.blob_radius}")
        if 2 * r_hi > min(h, w) - 1:
            raise ValueError(
                f"blob radius {r_hi} cannot fit a {h}x{w} image"
            )
        if self.max_area_frac is not None:
            cap = self.max_area_frac * h * w
            if math.pi * r_lo * r_hi > cap:
                raise ValueError(
                    f"radius range {self.blob_radius} cannot respect "
                    f"max_area_frac={self.max_area_frac} on a {h}x{w} image"
                )
        if self.noise_sigma < 0 or self.blur_passes < 0:
            raise ValueError("noise_sigma and blur_passes must be >= 0")
        if self.signal_gain <= 0:
            raise ValueError("signal_gain must be > 0")


@dataclass(frozen=True)
class SyntheticItem:
    mask: BinaryMask
    features: FeatureStack
    im_features: FeatureStack


@dataclass(frozen=True)
class SyntheticEpisode:
    class_id: int
    supports: tuple[SyntheticItem, ...]
    query: SyntheticItem


def class_signature(class_id: int, channels: int) -> np.ndarray:
    """Stable unit-norm signature vector for a class id."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([_SIGNATURE_STREAM, class_id])))
    v = rng.standard_normal(channels)
    return v / np.linalg.norm(v)


def _orthogonal_unit(rng: np.random.Generator, against: np.ndarray) -> np.ndarray:
    while True:
        v = rng.standard_normal(against.size)
        v = v - (v @ against) * against
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm


def _sample_mask(rng: np.random.Generator, spec: SynthSpec) -> BinaryMask:
    h, w = spec.image_size
    r_lo, r_hi = spec.blob_radius
    n = int(rng.integers(spec.blob_count[0], spec.blob_count[1] + 1))
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    inside = np.zeros((h, w), dtype=bool)
    for _ in range(n):
        ry = rng.uniform(r_lo, r_hi)
        rx_hi = r_hi
        if spec.max_area_frac is not None:
            rx_hi = min(r_hi, spec.max_area_frac * h * w / (math.pi * ry))
        rx = rng.uniform(r_lo, rx_hi)
        cy = rng.uniform(ry, (h - 1) - ry)
        cx = rng.uniform(rx, (w - 1) - rx)
        inside |= ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0
    return BinaryMask(inside.astype(np.uint8))


def _area_pool(field: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact mean of a pixel grid over each output cell's source rectangle.

    Pixels are treated as unit squares; the integral image of such a field is
    cellwise bilinear, so sampling it at fractional cell borders is exact.
    """
    h, w = field.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = field.cumsum(axis=0).cumsum(axis=1)

    def at(ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        y0 = np.minimum(np.floor(ys).astype(np.intp), h - 1)
        x0 = np.minimum(np.floor(xs).astype(np.intp), w - 1)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        a = integral[np.ix_(y0, x0)]
        b = integral[np.ix_(y0 + 1, x0)]
        c = integral[np.ix_(y0, x0 + 1)]
        d = integral[np.ix_(y0 + 1, x0 + 1)]
        return a * (1 - fy) * (1 - fx) + b * fy * (1 - fx) + c * (1 - fy) * fx + d * fy * fx

    ye = np.linspace(0.0, float(h), out_h + 1)
    xe = np.linspace(0.0, float(w), out_w + 1)
    corners = at(ye, xe)
    sums = corners[1:, 1:] - corners[:-1, 1:] - corners[1:, :-1] + corners[:-1, :-1]
    cell_area = (h / out_h) * (w / out_w)
    return sums / cell_area


def _box_blur(field: np.ndarray, passes: int) -> np.ndarray:
    out = field
    for _ in range(passes):
        padded = np.pad(out, 1, mode="edge")
        out = sum(
            padded[dy : dy + field.shape[0], dx : dx + field.shape[1]]
            for dy in range(3)
            for dx in range(3)
        ) / 9.0
    return out


def _make_item(rng: np.random.Generator, spec: SynthSpec, sig_class: np.ndarray) -> SyntheticItem:
    mask = _sample_mask(rng, spec)
    sig_bg = _orthogonal_unit(rng, sig_class)
    c = spec.channels
    raw_layers = []
    im_layers = []
    for layer_id, (lh, lw) in enumerate(spec.layer_sizes):
        fg = _box_blur(_area_pool(mask.data.astype(np.float64), lh, lw), spec.blur_passes)
        # Saturating response: a cell responds near fully once a fraction
        # 1/signal_gain of it is covered, like an object-selective channel.
        act = np.minimum(1.0, spec.signal_gain * fg)
        raw = sig_class[:, None, None] * act + sig_bg[:, None, None] * (1.0 - act)
        imf = sig_class[:, None, None] * act
        if spec.noise_sigma > 0:
            raw = raw + rng.standard_normal((c, lh, lw)) * spec.noise_sigma
            imf = imf + rng.standard_normal((c, lh, lw)) * spec.noise_sigma
        raw_layers.append((layer_id, Tensor(raw.astype(np.float32))))
        im_layers.append((layer_id, Tensor(imf.astype(np.float32))))
    return SyntheticItem(
        mask=mask,
        features=FeatureStack(raw_layers),
        im_features=FeatureStack(im_layers),
    )


def generate_synthetic_episode(seed: int, spec: SynthSpec) -> SyntheticEpisode:
    """One fully deterministic synthetic episode (supports, query, features)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    sig_class = class_signature(spec.class_id, spec.channels)
    supports = tuple(_make_item(rng, spec, sig_class) for _ in range(spec.shots))
    query = _make_item(rng, spec, sig_class)
    return SyntheticEpisode(class_id=spec.class_id, supports=supports, query=query)


# ---------------------------------------------------------------------------
# Synthetic dataset emission


def _write_item(out_dir: Path, ep_dir: str, stem: str, item: SyntheticItem) -> EpisodeItem:
    feats = []
    ims = []
    for layer_id, t in item.features:
        rel = f"{ep_dir}/{stem}.f{layer_id}.npy"
        write_array_file(out_dir / rel, t)
        feats.append(rel)
    for layer_id, t in item.im_features:
        rel = f"{ep_dir}/{stem}.i{layer_id}.npy"
        write_array_file(out_dir / rel, t)
        ims.append(rel)
    mask_rel = f"{ep_dir}/{stem}.mask.npy"
    write_mask_file(out_dir / mask_rel, item.mask)
    return EpisodeItem(features=tuple(feats), im_features=tuple(ims), mask=mask_rel)


def synthesize_dataset(
    out_dir: str | Path,
    n_episodes: int,
    class_ids: Sequence[int],
    seed: int,
    spec: SynthSpec,
    dataset: str = "synthetic",
    fold_id: int = 0,
) -> Path:
    """Emit feature/mask array files plus a manifest for n synthetic episodes.

    Episode classes are drawn uniformly from class_ids; per-episode seeds are
    derived from (seed, episode index) so the whole tree is reproducible.
    Returns the manifest path.
    """
    if n_episodes < 1 or not class_ids:
        raise ValueError("need at least one episode and one class id")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xE9150DE5])))
    episodes = []
    for idx in range(n_episodes):
        cid = int(class_ids[int(rng.integers(len(class_ids)))])
        ep_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1, np.uint64)[0])
        ep = generate_synthetic_episode(ep_seed, replace(spec, class_id=cid))
        ep_dir = f"ep{idx:04d}"
        (out_dir / ep_dir).mkdir(exist_ok=True)
        supports = tuple(
            _write_item(out_dir, ep_dir, f"s{j}", item) for j, item in enumerate(ep.supports)
        )
        query = _write_item(out_dir, ep_dir, "q", ep.query)
        episodes.append(Episode(class_id=cid, supports=supports, query=query))
    manifest = EpisodeManifest(
        dataset=dataset,
        fold=fold_id,
        shots=spec.shots,
        seed=seed,
        episodes=tuple(episodes),
    )
    path = out_dir / "manifest.json"
    save_manifest(manifest, path)
    return path
