"""Two-stage training orchestration, checkpointing, evaluation, inference.

Stage "weak" trains the category and caption networks jointly from a mixed
manifest, cycling per-source batches and combining the applicable losses.
Stage "snet" distills the fused maps: pseudo labels generated from a weak
checkpoint supervise the saliency network under the bootstrapping loss.

Determinism contract: every stochastic decision of step `k` comes from a
generator seeded with (seed, stage id, k), so restarting from a checkpoint
replays the exact remaining trajectory.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import data
from . import losses
from . import metrics
from . import pseudolabels
from . import ranking
from . import tensor as T
from .networks import CNet, NetworkConfig, PNet, SNet, VocabIndex
from .tensor import Adam, Tensor, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

# rng namespaces: init shared by both stages so a config fixes the networks
STAGE_IDS = {"init": 0, "weak": 1, "snet": 2}

WEAK_LOG_COLUMNS = ("step", "source", "l_c", "l_p", "l_at", "l_ac", "l_total")
SNET_LOG_COLUMNS = ("step", "l_b")


@dataclass
class TrainConfig:
    """Desk-scale defaults; the documented full-scale values sit in configs/.

    Full scale uses 256x256 inputs with batch 36 (weak stage) or 26 (snet
    stage) at the same learning rate; everything else carries over.
    """

    stage: str = "weak"
    seed: int = 0
    steps: int = 2000
    batch_size: int = 8
    image_size: int = 96
    lr: float = 1e-4
    beta: float = 0.005
    lam: float = 0.01
    delta: float = 0.05
    sources: tuple = ("category", "caption", "unlabelled")
    augment: bool = True
    crop_pad: int = 8
    # network shapes
    widths: tuple = (16, 32, 64, 128)
    d_attn: int = 64
    n_classes: int = 4
    vocab_size: int = 26
    d_embed: int = 64
    d_hidden: int = 128
    # unlabelled-image ranking
    n_segments: int = 100
    compactness: float = 10.0
    sigma: float = 0.1
    mu: float = 0.01
    # pseudo-label refinement
    refiner: str = "bilateral"
    refine_radius: int = 8
    refine_spatial_std: float = 8.0
    refine_color_std: float = 0.1
    refine_iterations: int = 5
    refine_weight: float = 1.0
    threshold: float = 0.5
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.stage not in ("weak", "snet"):
            raise ValueError(f"stage must be 'weak' or 'snet', got {self.stage!r}")
        for name in ("steps", "batch_size", "checkpoint_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
            setattr(self, name, int(getattr(self, name)))
        self.seed = int(self.seed)
        self.image_size = int(self.image_size)
        # stride-16 region grid and the pixel-to-region bridge need this
        if self.image_size < 32 or self.image_size % 16:
            raise ValueError(f"image_size must be a multiple of 16 and >= 32, "
                             f"got {self.image_size}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        self.sources = tuple(self.sources)
        if not self.sources:
            raise ValueError("sources must not be empty")
        if len(set(self.sources)) != len(self.sources):
            raise ValueError(f"duplicate sources in {self.sources}")
        for s in self.sources:
            if s not in data.SOURCES:
                raise ValueError(f"unknown source {s!r}")
        self.widths = tuple(self.widths)
        self.augment = bool(self.augment)
        if self.crop_pad < 0:
            raise ValueError("crop_pad must be >= 0")
        if self.n_segments < 2:
            raise ValueError("n_segments must be >= 2")
        for name in ("compactness", "sigma", "mu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.refiner not in ("bilateral", "off"):
            raise ValueError(f"refiner must be 'bilateral' or 'off', got {self.refiner!r}")
        if self.refine_radius < 1 or self.refine_iterations < 0 or self.refine_weight < 0:
            raise ValueError("bad refiner settings")
        if self.refine_spatial_std <= 0 or self.refine_color_std <= 0:
            raise ValueError("refiner stds must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        self.loss_weights  # validates beta/lam/delta ranges

    @property
    def network_config(self) -> NetworkConfig:
        return NetworkConfig(widths=self.widths, d_attn=self.d_attn,
                             n_classes=self.n_classes, vocab_size=self.vocab_size,
                             d_embed=self.d_embed, d_hidden=self.d_hidden)

    @property
    def loss_weights(self) -> losses.LossWeights:
        return losses.LossWeights(beta=self.beta, lam=self.lam, delta=self.delta)

    @property
    def refine_params(self):
        """None when the refiner is switched off."""
        if self.refiner == "off":
            return None
        return pseudolabels.RefineParams(
            radius=self.refine_radius, spatial_std=self.refine_spatial_std,
            color_std=self.refine_color_std, iterations=self.refine_iterations,
            weight=self.refine_weight)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sources"] = list(self.sources)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str, overrides: dict | None = None) -> "TrainConfig":
        values = read_config_file(path)
        if overrides:
            values.update(overrides)
        return cls.from_dict(values)


def parse_config_value(raw: str):
    """JSON where it parses, bare string otherwise (so colors=red works)."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def read_config_file(path: str) -> dict:
    """key = value lines; # starts a comment; values parsed as JSON."""
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            key, eq, raw = body.partition("=")
            key, raw = key.strip(), raw.strip()
            if not eq or not key:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = parse_config_value(raw)
    return values


def build_networks(config: TrainConfig) -> tuple:
    """Category and caption networks from the config's init stream."""
    rng = np.random.default_rng([config.seed, STAGE_IDS["init"]])
    cnet = CNet(config.network_config, rng)
    pnet = PNet(config.network_config, rng)
    return cnet, pnet


def build_snet(config: TrainConfig) -> SNet:
    rng = np.random.default_rng([config.seed, STAGE_IDS["init"]])
    return SNet(config.network_config, rng)


def _qualified(prefix: str, net) -> dict:
    return {f"{prefix}.{name}": p for name, p in net.named_params().items()}


def _save_state(path: str, named: dict, opt: Adam, names: list,
                config: TrainConfig, step: int, stage: str) -> None:
    tensors = {name: named[name].data for name in names}
    for name, m, v in zip(names, opt.state.m, opt.state.v):
        tensors[f"opt.{name}.m"] = m
        tensors[f"opt.{name}.v"] = v
    save_checkpoint(path, tensors, {"config": config.to_dict(), "stage": stage,
                                    "step": step, "adam_t": opt.state.t})


def _restore_state(path: str, named: dict, opt: Adam, names: list,
                   stage: str) -> int:
    """Load params + optimizer moments in place; returns the next step index."""
    tensors, hyper = load_checkpoint(path)
    if hyper.get("stage") != stage:
        raise ValueError(f"checkpoint stage {hyper.get('stage')!r} does not "
                         f"match requested stage {stage!r}")
    for i, name in enumerate(names):
        for key, dest in ((name, named[name].data),
                          (f"opt.{name}.m", opt.state.m[i]),
                          (f"opt.{name}.v", opt.state.v[i])):
            if key not in tensors:
                raise ValueError(f"checkpoint missing tensor {key!r}")
            if tensors[key].shape != dest.shape:
                raise ValueError(f"checkpoint tensor {key!r} has shape "
                                 f"{tensors[key].shape}, expected {dest.shape}")
            dest[...] = tensors[key]
    opt.state.t = int(hyper["adam_t"])
    return int(hyper["step"])


def _load_net_weights(net, tensors: dict, prefix: str) -> None:
    for name, p in net.named_params().items():
        key = f"{prefix}.{name}"
        if key not in tensors:
            raise ValueError(f"checkpoint missing tensor {key!r}")
        if tensors[key].shape != p.data.shape:
            raise ValueError(f"checkpoint tensor {key!r} has shape "
                             f"{tensors[key].shape}, expected {p.data.shape}")
        p.data[...] = tensors[key]


def _check_size(image: np.ndarray, path: str, expect: int) -> None:
    if image.shape[1] != expect or image.shape[2] != expect:
        raise ValueError(f"{path}: image is {image.shape[1]}x{image.shape[2]}, "
                         f"config expects {expect}x{expect}")


def _open_log(path: str, columns: tuple, fresh: bool):
    fh = open(path, "w" if fresh else "a")
    if fresh:
        fh.write(",".join(columns) + "\n")
    return fh


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def _pick(rng: np.random.Generator, pool_size: int, batch_size: int) -> np.ndarray:
    return rng.choice(pool_size, size=batch_size, replace=pool_size < batch_size)


def _upsample_maps(s: Tensor, out_h: int, out_w: int) -> np.ndarray:
    """Detached bilinear upsampling of [N, h, w] maps to pixel resolution."""
    with T.no_grad():
        up = T.bilinear_resize(Tensor(s.data[:, None].astype(np.float64)),
                               out_h, out_w)
    return up.data[:, 0]


def train_weak(config: TrainConfig, manifest_path: str, out_dir: str,
               resume: str | None = None) -> str:
    """First stage: joint training from category/caption/unlabelled batches.

    Per step one source is scheduled round-robin over those present. Category
    batches minimize L_c + lam*L_at (the category map teaching the caption
    network's map); caption batches the mirror image; unlabelled batches
    lam*L_ac against ranking-derived region targets. Returns the final
    checkpoint path; `resume` continues an interrupted run identically.
    """
    if config.stage != "weak":
        raise ValueError(f"train_weak needs a stage='weak' config, got {config.stage!r}")
    os.makedirs(out_dir, exist_ok=True)
    records = data.load_manifest(manifest_path)
    by_source = {s: [r for r in records if r.source == s] for s in data.SOURCES}
    active = []
    for s in config.sources:
        if by_source[s]:
            active.append(s)
        else:
            logger.warning("source %r has no records in %s; continuing with "
                           "the remaining losses", s, manifest_path)
    if not active:
        raise ValueError("manifest holds no records for any configured source")

    cnet, pnet = build_networks(config)
    named = {**_qualified("cnet", cnet), **_qualified("pnet", pnet)}
    names = sorted(named)
    opt = Adam([named[n] for n in names], lr=config.lr)
    start = 0
    if resume is not None:
        start = _restore_state(resume, named, opt, names, "weak")
        logger.info("resumed weak stage at step %d from %s", start, resume)

    swap_pair = None
    vocab_path = os.path.join(os.path.dirname(os.path.abspath(manifest_path)),
                              "vocab.json")
    if os.path.exists(vocab_path):
        vocab = VocabIndex.load(vocab_path)
        try:
            swap_pair = (vocab.id_of("left"), vocab.id_of("right"))
        except KeyError:
            logger.warning("vocabulary lacks left/right; flips will not swap "
                           "direction words")
    else:
        logger.warning("no vocab.json beside the manifest; flips will not "
                       "swap direction words")

    weights = config.loss_weights
    size = config.image_size
    ckpt_path = os.path.join(out_dir, "weak.ckpt")
    graph_cache: dict = {}
    log = _open_log(os.path.join(out_dir, "weak_log.csv"), WEAK_LOG_COLUMNS,
                    fresh=start == 0)
    try:
        for step in range(start, config.steps):
            source = active[step % len(active)]
            rng = np.random.default_rng([config.seed, STAGE_IDS["weak"], step])
            recs = by_source[source]
            idx = _pick(rng, len(recs), config.batch_size)
            row = dict.fromkeys(("l_c", "l_p", "l_at", "l_ac"))

            if source == "unlabelled" and weights.lam == 0.0:
                # the only unlabelled term is lam*L_ac, identically zero:
                # no forward, no optimizer step, parameters untouched
                log.write(f"{step},{source},,,,,{_fmt(0.0)}\n")
                log.flush()
                continue

            opt.zero_grad()
            if source == "category":
                imgs, labels = [], []
                for i in idx:
                    rec = recs[int(i)]
                    img = data.load_image(rec.image)
                    _check_size(img, rec.image, size)
                    if config.augment:
                        img, _, _ = data.augment_sample(rng, img,
                                                        pad=config.crop_pad)
                    imgs.append(img)
                    labels.append(rec.labels)
                x = Tensor(np.stack(imgs))
                out = cnet.forward(x)
                l_c = losses.category_localization_loss(
                    np.asarray(labels, dtype=np.float64), out, weights)
                row["l_c"] = l_c.item()
                l_at = None
                if weights.lam > 0:
                    l_at = losses.attention_transfer_loss(
                        out.s, pnet.saliency(x), "category")
                    row["l_at"] = l_at.item()
                total = losses.combined_loss(l_c, None, l_at, None, weights)
            elif source == "caption":
                imgs, toks = [], []
                for i in idx:
                    rec = recs[int(i)]
                    img = data.load_image(rec.image)
                    _check_size(img, rec.image, size)
                    tokens = rec.tokens
                    if config.augment:
                        img, _, tokens = data.augment_sample(
                            rng, img, tokens=tokens, swap_pair=swap_pair,
                            pad=config.crop_pad)
                    imgs.append(img)
                    toks.append(tokens)
                width = max(len(t) for t in toks)
                tok_arr = np.zeros((len(toks), width), dtype=np.int64)
                for r, t in enumerate(toks):
                    tok_arr[r, :len(t)] = t
                x = Tensor(np.stack(imgs))
                out = pnet.forward(x, tok_arr)
                l_p = losses.caption_localization_loss(tok_arr, out, weights)
                row["l_p"] = l_p.item()
                l_at = None
                if weights.lam > 0:
                    l_at = losses.attention_transfer_loss(
                        cnet.saliency(x), out.s, "caption")
                    row["l_at"] = l_at.item()
                total = losses.combined_loss(None, l_p, l_at, None, weights)
            else:
                # unlabelled: superpixel graphs depend only on the image, so
                # they are cached across steps and these batches skip the
                # random crop/flip that would invalidate them
                imgs, keys = [], []
                for i in idx:
                    rec = recs[int(i)]
                    img = data.load_image(rec.image)
                    _check_size(img, rec.image, size)
                    imgs.append(img)
                    keys.append(rec.image)
                x = Tensor(np.stack(imgs))
                s_c = cnet.saliency(x)
                s_p = pnet.saliency(x)
                up_c = _upsample_maps(s_c, size, size)
                up_p = _upsample_maps(s_p, size, size)
                pos_px = []
                for b, key in enumerate(keys):
                    entry = graph_cache.get(key)
                    if entry is None:
                        seg = ranking.slic_segment(
                            imgs[b], n_segments=config.n_segments,
                            compactness=config.compactness)
                        entry = (seg, ranking.build_affinity_graph(
                            seg, sigma=config.sigma))
                        graph_cache[key] = entry
                    seg, graph = entry
                    z = ranking.salient_seeds(up_c[b], up_p[b], seg)
                    scores = ranking.manifold_rank(graph, z.astype(np.float64),
                                                   mu=config.mu)
                    pos, _ = ranking.coherence_targets(scores, seg)
                    pos_px.append(pos)
                grid = s_c.shape[1:]
                pos_reg, neg_reg = losses.pixel_to_region_targets(
                    np.stack(pos_px), grid)
                l_ac = losses.attention_coherence_loss(s_c, s_p, pos_reg, neg_reg)
                row["l_ac"] = l_ac.item()
                total = losses.combined_loss(None, None, None, l_ac, weights)

            total.backward()
            opt.step()
            log.write(f"{step},{source},{_fmt(row['l_c'])},{_fmt(row['l_p'])},"
                      f"{_fmt(row['l_at'])},{_fmt(row['l_ac'])},"
                      f"{_fmt(total.item())}\n")
            log.flush()
            done = step + 1
            if done % config.checkpoint_every == 0 or done == config.steps:
                _save_state(ckpt_path, named, opt, names, config, done, "weak")
    finally:
        log.close()
    return ckpt_path


def gen_pseudo(checkpoint: str, manifest_path: str, out_dir: str,
               batch_size: int = 8, overrides: dict | None = None) -> str:
    """Pseudo labels for the unlabelled records from a weak checkpoint.

    Fuses the two coarse maps, optionally refines them against image colors,
    binarizes, and writes PNGs plus a provenance manifest under `out_dir`.
    Settings come from the checkpoint's stored config; `overrides` adjusts
    them (refiner, threshold, ...).
    """
    tensors, hyper = load_checkpoint(checkpoint)
    config = TrainConfig.from_dict({**hyper["config"], **(overrides or {})})
    cnet, pnet = build_networks(config)
    _load_net_weights(cnet, tensors, "cnet")
    _load_net_weights(pnet, tensors, "pnet")

    records = data.load_manifest(manifest_path)
    pool = [r for r in records if r.source == "unlabelled"]
    if not pool:
        logger.warning("manifest %s has no unlabelled records; using all %d "
                       "records", manifest_path, len(records))
        pool = records
    loaded = []
    for rec in pool:
        try:
            loaded.append((rec, data.load_image(rec.image)))
        except (OSError, ValueError) as exc:
            logger.warning("skipping unreadable image %s (%s)", rec.image, exc)
    refine = config.refine_params
    labels = {}
    for lo in range(0, len(loaded), batch_size):
        chunk = loaded[lo:lo + batch_size]
        x = Tensor(np.stack([img for _, img in chunk]))
        with T.no_grad():
            s_c = cnet.saliency(x)
            s_p = pnet.saliency(x)
        for (rec, img), mc, mp in zip(chunk, s_c.data, s_p.data):
            image_id = os.path.splitext(os.path.basename(rec.image))[0]
            if image_id in labels:
                raise ValueError(f"duplicate image id {image_id!r} in manifest")
            lab = pseudolabels.generate_pseudo_label(
                img, mc, mp, refine=refine, threshold=config.threshold,
                image_id=image_id)
            lab.provenance["image"] = rec.image
            labels[image_id] = lab
    if not labels:
        raise ValueError("no readable unlabelled images; nothing to write")
    pseudolabels.save_pseudo_labels(labels, out_dir)
    logger.info("wrote %d pseudo labels to %s", len(labels), out_dir)
    return out_dir


def train_snet(config: TrainConfig, pseudo_dir: str, out_dir: str,
               resume: str | None = None) -> str:
    """Second stage: fit the saliency network to the pseudo labels.

    Pairs come from the pseudo-label manifest (each entry records its source
    image); the objective is the bootstrapping loss, with the same crop/flip
    augmentation applied to image and label together.
    """
    if config.stage != "snet":
        raise ValueError(f"train_snet needs a stage='snet' config, got {config.stage!r}")
    os.makedirs(out_dir, exist_ok=True)
    stored = pseudolabels.load_pseudo_labels(pseudo_dir)
    pairs = []
    for image_id in sorted(stored):
        lab = stored[image_id]
        path = lab.provenance.get("image")
        if not path:
            raise ValueError(f"pseudo label {image_id!r} does not record its "
                             f"source image")
        pairs.append((path, lab.label))
    if not pairs:
        raise ValueError(f"no pseudo labels under {pseudo_dir}")

    snet = build_snet(config)
    named = _qualified("snet", snet)
    names = sorted(named)
    opt = Adam([named[n] for n in names], lr=config.lr)
    start = 0
    if resume is not None:
        start = _restore_state(resume, named, opt, names, "snet")
        logger.info("resumed snet stage at step %d from %s", start, resume)

    weights = config.loss_weights
    size = config.image_size
    ckpt_path = os.path.join(out_dir, "snet.ckpt")
    log = _open_log(os.path.join(out_dir, "snet_log.csv"), SNET_LOG_COLUMNS,
                    fresh=start == 0)
    try:
        for step in range(start, config.steps):
            rng = np.random.default_rng([config.seed, STAGE_IDS["snet"], step])
            idx = _pick(rng, len(pairs), config.batch_size)
            imgs, masks = [], []
            for i in idx:
                path, label = pairs[int(i)]
                img = data.load_image(path)
                _check_size(img, path, size)
                if config.augment:
                    img, label, _ = data.augment_sample(rng, img, mask=label,
                                                        pad=config.crop_pad)
                imgs.append(img)
                masks.append(label)
            opt.zero_grad()
            s = snet.forward(Tensor(np.stack(imgs)))
            l_b = losses.bootstrapping_loss(s, np.stack(masks), weights)
            l_b.backward()
            opt.step()
            log.write(f"{step},{_fmt(l_b.item())}\n")
            log.flush()
            done = step + 1
            if done % config.checkpoint_every == 0 or done == config.steps:
                _save_state(ckpt_path, named, opt, names, config, done, "snet")
    finally:
        log.close()
    return ckpt_path


def _snet_from_checkpoint(checkpoint: str) -> tuple:
    tensors, hyper = load_checkpoint(checkpoint)
    config = TrainConfig.from_dict(hyper["config"])
    snet = build_snet(config)
    _load_net_weights(snet, tensors, "snet")
    return snet, config


def _forward_snet(snet: SNet, imgs: np.ndarray) -> np.ndarray:
    """Inference forward that tolerates sizes off the backbone stride.

    Pads right/bottom by edge replication to the next stride multiple and
    crops the upsampled maps back, so outputs keep the input resolution.
    """
    n, _, h, w = imgs.shape
    stride = snet.backbone.config.out_stride
    ph, pw = -h % stride, -w % stride
    if ph or pw:
        imgs = np.pad(imgs, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
    with T.no_grad():
        s = snet.forward(Tensor(imgs))
    return s.data[:, :h, :w]


def _shape_batches(items: list, batch_size: int):
    """Group (key, image) pairs by image shape into forwardable batches."""
    groups: dict = {}
    for item in items:
        groups.setdefault(item[1].shape, []).append(item)
    for shape in sorted(groups, key=str):
        bucket = groups[shape]
        for lo in range(0, len(bucket), batch_size):
            yield bucket[lo:lo + batch_size]


def evaluate(checkpoint: str, manifest_path: str, out_prefix: str,
             batch_size: int = 8) -> metrics.MetricsReport:
    """Score a saliency checkpoint against a manifest's ground-truth masks.

    Inference is the bare network forward: maps go straight from the sigmoid
    output into the metrics, with no refinement or post-processing of any
    kind. Writes the CSV/JSON/SVG report files under `out_prefix`.
    """
    snet, _ = _snet_from_checkpoint(checkpoint)
    records = [r for r in data.load_manifest(manifest_path) if r.gt_mask]
    if not records:
        raise ValueError(f"{manifest_path} has no records with ground-truth masks")
    items = [(rec, data.load_image(rec.image)) for rec in records]
    preds, truths = [], []
    for chunk in _shape_batches(items, batch_size):
        maps = _forward_snet(snet, np.stack([img for _, img in chunk]))
        for (rec, _), m in zip(chunk, maps):
            preds.append(m.astype(np.float64))
            truths.append(data.load_mask(rec.gt_mask))
    report = metrics.compute_report(preds, truths)
    out_dir = os.path.dirname(out_prefix)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    metrics.save_report(report, out_prefix, svg=True)
    return report


def infer(checkpoint: str, image_paths: list, out_dir: str,
          batch_size: int = 8) -> list:
    """Write one 8-bit grayscale saliency PNG per input image.

    Outputs keep the input resolution and are named after the input stems.
    Returns the written paths in input order.
    """
    snet, _ = _snet_from_checkpoint(checkpoint)
    os.makedirs(out_dir, exist_ok=True)
    stems = [os.path.splitext(os.path.basename(p))[0] for p in image_paths]
    if len(set(stems)) != len(stems):
        raise ValueError("input image names collide after dropping directories")
    items = [(i, data.load_image(p)) for i, p in enumerate(image_paths)]
    outputs = [None] * len(items)
    for chunk in _shape_batches(items, batch_size):
        maps = _forward_snet(snet, np.stack([img for _, img in chunk]))
        for (i, _), m in zip(chunk, maps):
            path = os.path.join(out_dir, stems[i] + ".png")
            data.save_saliency(path, m)
            outputs[i] = path
    return outputs
