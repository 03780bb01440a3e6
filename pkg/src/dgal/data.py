"""Multi-domain datasets and labeled/unlabeled pool state.

Covers synthetic rotated-Gaussian generation, IDX image ingestion with
rotation, CSV round-trip, leave-one-domain-out splitting, and the pool
bookkeeping used by the active-learning loop. Everything here is a pure
function of its inputs and seeds.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, ContractError, FormatError

SYNTH_INPUT_DIM = 16
PROTO_RADIUS = 1.0
CLASS_SIGNAL_RADIUS = 1.0
DOMAIN_SIGNAL_RADIUS = 0.7

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Sample:
    """One observation: input vector, class label, domain tag, stable id."""

    x: np.ndarray
    y: int
    e: int
    id: int


@dataclass
class DomainDataset:
    """A fixed multi-domain dataset. Sample ids are row indices into X."""

    X: np.ndarray  # (n, input_dim) float64
    y: np.ndarray  # (n,) int64 class labels in 0..num_classes-1
    e: np.ndarray  # (n,) int64 domain tags in 0..num_domains-1
    num_classes: int
    num_domains: int
    domain_names: list[str]

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.e = np.asarray(self.e, dtype=np.int64)
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.e.shape != (n,):
            raise ContractError("X, y, e must agree on sample count")
        if n and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ContractError("class labels out of range")
        if n and (self.e.min() < 0 or self.e.max() >= self.num_domains):
            raise ContractError("domain tags out of range")
        if len(self.domain_names) != self.num_domains:
            raise ContractError("one name per domain required")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)

    def sample(self, i: int) -> Sample:
        return Sample(x=self.X[i], y=int(self.y[i]), e=int(self.e[i]), id=int(i))


@dataclass
class Fragment:
    """A single-domain slice (images + labels) awaiting a domain tag."""

    X: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) int64


@dataclass(frozen=True)
class Split:
    """One leave-one-domain-out split. test_ids cover the whole target domain."""

    source_domains: tuple[int, ...]
    target_domain: int
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray


@dataclass(frozen=True)
class PoolState:
    """Partition of a split's train ids into labeled and unlabeled sets."""

    labeled: np.ndarray  # sorted int64
    unlabeled: np.ndarray  # sorted int64
    round: int
    budget_per_round: int
    max_rounds: int


def generate_rotated_gaussians(
    seed: int,
    angles: list[float],
    classes: int,
    per_class: int,
    noise_sigma: float,
) -> DomainDataset:
    """Synthetic rotated-prototype dataset.

    Each (class, domain) prototype has three parts: a 2-D ring component on a
    circle of class directions that each domain rotates by its angle, so
    distant domains disagree about part of the class evidence; a fixed class
    identity coordinate shared by all domains, so the task stays solvable on
    an unseen domain; and a marker coordinate identifying the domain itself.
    Samples are the prototype plus isotropic Gaussian noise, mixed into
    SYNTH_INPUT_DIM dimensions by a seeded orthogonal matrix so no single
    input coordinate is privileged.
    """
    angles = [float(a) for a in angles]
    if len(angles) < 3:
        raise ContractError("need at least 3 domains")
    if len(set(angles)) != len(angles):
        raise ContractError("duplicate domain angles")
    if classes < 2:
        raise ContractError("need at least 2 classes")
    if per_class < 2:
        raise ContractError("per_class must be >= 2")
    if noise_sigma < 0:
        raise ContractError("noise_sigma must be >= 0")

    d = SYNTH_INPUT_DIM
    if 2 + classes + len(angles) > d:
        raise ContractError(
            f"classes + domains need {2 + classes + len(angles)} coordinates, only {d} available"
        )
    rng = np.random.default_rng(seed)
    mix, _ = np.linalg.qr(rng.standard_normal((d, d)))

    class_angles = 2.0 * np.pi * np.arange(classes) / classes
    protos = PROTO_RADIUS * np.stack([np.cos(class_angles), np.sin(class_angles)], axis=1)

    blocks, ys, es = [], [], []
    for dom, ang in enumerate(angles):
        t = np.deg2rad(ang)
        rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        for c in range(classes):
            z = np.zeros((per_class, d))
            z[:, :2] = protos[c] @ rot.T
            z[:, 2 + c] = CLASS_SIGNAL_RADIUS
            z[:, 2 + classes + dom] = DOMAIN_SIGNAL_RADIUS
            z += noise_sigma * rng.standard_normal((per_class, d))
            blocks.append(z @ mix.T)
            ys.append(np.full(per_class, c, dtype=np.int64))
            es.append(np.full(per_class, dom, dtype=np.int64))

    return DomainDataset(
        X=np.concatenate(blocks),
        y=np.concatenate(ys),
        e=np.concatenate(es),
        num_classes=classes,
        num_domains=len(angles),
        domain_names=[f"rot{a:g}" for a in angles],
    )


def _read_exact(path: Path, header_fmt: str):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        raw = f.read()
    header_size = struct.calcsize(header_fmt)
    if len(raw) < header_size:
        raise FormatError(f"{path}: file shorter than its header")
    return struct.unpack(header_fmt, raw[:header_size]), raw[header_size:]


def load_idx_pairs(images_path, labels_path) -> Fragment:
    """Load an IDX image/label file pair as one unlabeled-domain fragment.

    Pixel values are scaled to [0, 1]. The caller assigns the domain tag.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)

    (magic, count, rows, cols), body = _read_exact(images_path, ">IIII")
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = count * rows * cols
    if len(body) != expected:
        raise ConsistencyError(f"{images_path}: {len(body)} pixel bytes, header declares {expected}")

    (lmagic, lcount), lbody = _read_exact(labels_path, ">II")
    if lmagic != IDX_LABELS_MAGIC:
        raise FormatError(f"{labels_path}: bad magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if lcount != count:
        raise ConsistencyError(f"label count {lcount} != image count {count}")
    if len(lbody) != lcount:
        raise ConsistencyError(f"{labels_path}: {len(lbody)} label bytes, header declares {lcount}")

    X = np.frombuffer(body, dtype=np.uint8).astype(np.float64).reshape(count, rows * cols) / 255.0
    y = np.frombuffer(lbody, dtype=np.uint8).astype(np.int64)
    return Fragment(X=X, y=y)


def rotate_images(X: np.ndarray, angle_deg: float, width: int, height: int) -> np.ndarray:
    """Rotate flattened images about their center with bilinear interpolation.

    Out-of-frame source pixels read as 0. Angle 0 is the exact identity.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != width * height:
        raise ContractError(f"input dim {X.shape} incompatible with {width}x{height} images")

    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    dy, dx = rows - cy, cols - cx
    # inverse map: where each output pixel samples from
    src_x = c * dx - s * dy + cx
    src_y = s * dx + c * dy + cy

    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    wx = src_x - x0
    wy = src_y - y0

    imgs = X.reshape(-1, height, width)
    out = np.zeros_like(imgs)
    for (yy, xx, w) in (
        (y0, x0, (1 - wy) * (1 - wx)),
        (y0, x0 + 1, (1 - wy) * wx),
        (y0 + 1, x0, wy * (1 - wx)),
        (y0 + 1, x0 + 1, wy * wx),
    ):
        valid = (yy >= 0) & (yy < height) & (xx >= 0) & (xx < width)
        vy, vx = yy[valid], xx[valid]
        out[:, valid] += w[valid] * imgs[:, vy, vx]
    return out.reshape(X.shape[0], width * height)


def rotate_fragment(frag: Fragment, angle_deg: float, width: int, height: int) -> Fragment:
    return Fragment(X=rotate_images(frag.X, angle_deg, width, height), y=frag.y.copy())


def combine_fragments(frags: list[Fragment], domain_names: list[str] | None = None) -> DomainDataset:
    """Stack single-domain fragments into one dataset, one domain per fragment."""
    if not frags:
        raise ContractError("no fragments given")
    dims = {f.X.shape[1] for f in frags}
    if len(dims) != 1:
        raise ContractError("fragments disagree on input dim")
    X = np.concatenate([f.X for f in frags])
    y = np.concatenate([f.y for f in frags])
    e = np.concatenate(
        [np.full(len(f.y), i, dtype=np.int64) for i, f in enumerate(frags)]
    )
    names = domain_names if domain_names is not None else [f"dom{i}" for i in range(len(frags))]
    return DomainDataset(
        X=X,
        y=y,
        e=e,
        num_classes=int(y.max()) + 1,
        num_domains=len(frags),
        domain_names=names,
    )


def make_loo_splits(ds: DomainDataset, val_fraction: float, seed: int) -> list[Split]:
    """One leave-one-domain-out split per domain.

    Within the source domains the validation split is stratified per
    (domain, class), so per-class counts are preserved to within one sample.
    """
    if ds.num_domains < 3:
        raise ContractError("leave-one-out needs >= 3 domains")
    if not (0.0 < val_fraction < 1.0):
        raise ContractError("val_fraction must be in (0, 1)")

    rng = np.random.default_rng(seed)
    ids = ds.ids
    splits = []
    for target in range(ds.num_domains):
        sources = tuple(a for a in range(ds.num_domains) if a != target)
        train_parts, val_parts = [], []
        for a in sources:
            for cls in range(ds.num_classes):
                grp = ids[(ds.e == a) & (ds.y == cls)]
                if grp.size == 0:
                    continue
                if grp.size < 2:
                    raise ContractError(f"domain {a} class {cls} has < 2 samples")
                n_val = int(round(val_fraction * grp.size))
                perm = rng.permutation(grp)
                val_parts.append(perm[:n_val])
                train_parts.append(perm[n_val:])
        splits.append(
            Split(
                source_domains=sources,
                target_domain=target,
                train_ids=np.sort(np.concatenate(train_parts)),
                val_ids=np.sort(np.concatenate(val_parts)),
                test_ids=np.sort(ids[ds.e == target]),
            )
        )
    return splits


def init_pool(split: Split, budget_per_round: int, max_rounds: int) -> PoolState:
    if budget_per_round < 1:
        raise ContractError("budget_per_round must be >= 1")
    if max_rounds < 1:
        raise ContractError("max_rounds must be >= 1")
    return PoolState(
        labeled=np.empty(0, dtype=np.int64),
        unlabeled=np.sort(np.asarray(split.train_ids, dtype=np.int64)),
        round=0,
        budget_per_round=budget_per_round,
        max_rounds=max_rounds,
    )


def pool_label(pool: PoolState, chosen_ids: np.ndarray, oracle: DomainDataset) -> PoolState:
    """Move chosen ids from the unlabeled pool to the labeled set.

    The oracle is the ground-truth dataset; labels are read from it at
    training time, so this operation only moves ids and advances the round.
    """
    chosen = np.unique(np.asarray(chosen_ids, dtype=np.int64))
    if chosen.size != np.asarray(chosen_ids).size:
        raise ContractError("chosen ids contain duplicates")
    if chosen.size == 0:
        raise ContractError("empty selection")
    if np.intersect1d(chosen, pool.labeled).size:
        raise ContractError("some chosen ids are already labeled")
    if np.setdiff1d(chosen, pool.unlabeled).size:
        raise ContractError("some chosen ids are not in the unlabeled pool")
    if chosen.size > min(pool.budget_per_round, pool.unlabeled.size):
        raise ContractError("selection exceeds the per-round budget")
    if chosen.max() >= len(oracle):
        raise ContractError("chosen id outside the oracle dataset")
    return PoolState(
        labeled=np.union1d(pool.labeled, chosen),
        unlabeled=np.setdiff1d(pool.unlabeled, chosen),
        round=pool.round + 1,
        budget_per_round=pool.budget_per_round,
        max_rounds=pool.max_rounds,
    )


def save_csv_dataset(ds: DomainDataset, path) -> None:
    """Write the CSV interchange format: domain,label,f0,...,f{d-1}."""
    d = ds.input_dim
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["domain", "label"] + [f"f{j}" for j in range(d)])
        for i in range(len(ds)):
            w.writerow([int(ds.e[i]), int(ds.y[i])] + [repr(float(v)) for v in ds.X[i]])


def load_csv_dataset(path, domain_names: list[str] | None = None) -> DomainDataset:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if not header or header[:2] != ["domain", "label"]:
            raise FormatError(f"{path}: expected header starting with domain,label")
        d = len(header) - 2
        es, ys, rows = [], [], []
        for line in r:
            if len(line) != d + 2:
                raise ConsistencyError(f"{path}: row with {len(line)} fields, expected {d + 2}")
            es.append(int(line[0]))
            ys.append(int(line[1]))
            rows.append([float(v) for v in line[2:]])
    if not rows:
        raise ConsistencyError(f"{path}: no data rows")
    e = np.asarray(es, dtype=np.int64)
    y = np.asarray(ys, dtype=np.int64)
    num_domains = int(e.max()) + 1
    names = domain_names if domain_names is not None else [f"dom{i}" for i in range(num_domains)]
    return DomainDataset(
        X=np.asarray(rows, dtype=np.float64),
        y=y,
        e=e,
        num_classes=int(y.max()) + 1,
        num_domains=num_domains,
        domain_names=names,
    )
