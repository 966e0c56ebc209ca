"""The three multi-modal fusion architectures, the binary-relevance training
loop, and inference.

Strategies:
  early        - one trunk (hidden ReLU + sigmoid head) over the concatenated
                 raw modality features;
  intermediate - per-modality hidden layers with auxiliary sigmoid heads, and
                 a joint sigmoid head over the concatenated hidden states;
                 the loss is the joint BCE plus every auxiliary BCE;
  late         - independent per-modality branches; the prediction is the
                 arithmetic mean of the branch probabilities and the loss is
                 the sum of branch BCEs.

Training is binary relevance: one sigmoid output per genre, mean BCE.
Everything is seeded; identical config + seed reproduces checkpoints
byte-for-byte.
"""

import copy
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import aggregate, metrics, nn, textlab
from ._rng import spawn_rng
from .featurestore import Dataset, EmbeddingTable, GenreTaxonomy, VideoRecord

__all__ = [
    "MODALITIES",
    "TrainConfig",
    "ModalityBranch",
    "GenreModel",
    "TrainingDivergedError",
    "make_genre_model",
    "model_params",
    "set_model_params",
    "assemble_inputs",
    "predict",
    "branch_predictions",
    "training_loss",
    "loss_and_grads",
    "grad_check_closure",
    "train",
    "infer_dataset",
    "save_model",
    "load_model",
    "compare_strategies",
    "format_comparison",
]

MODALITIES = ("visual", "audio", "language")
STRATEGIES = ("early", "intermediate", "late")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


def canonical_modalities(modalities) -> tuple:
    mods = tuple(modalities)
    unknown = set(mods) - set(MODALITIES)
    if unknown:
        raise ValueError(f"unknown modalities {sorted(unknown)}")
    if not mods:
        raise ValueError("at least one modality required")
    return tuple(m for m in MODALITIES if m in set(mods))


@dataclass
class TrainConfig:
    strategy: str = "intermediate"
    modalities: tuple = MODALITIES
    d_h: int = 32
    batch_size: int = 256
    epochs: int = 50
    max_lr: float = 1e-3
    seed: int = 0
    shots_per_video: int = 8
    frames_per_shot: int = 3
    keywords_k: int = 20
    resample_each_epoch: bool = True
    optimizer: str = "adam"
    warmup_frac: float = 0.05
    dropout: float = 0.0

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        for name in ("d_h", "batch_size", "shots_per_video", "frames_per_shot", "keywords_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.max_lr <= 0 or not (0.0 <= self.dropout < 1.0):
            raise ValueError("invalid epochs / max_lr / dropout")
        canonical_modalities(self.modalities)


@dataclass
class ModalityBranch:
    hidden: nn.Mlp  # raw feature -> d_h, ReLU
    head: nn.Mlp    # d_h -> G, sigmoid


@dataclass
class GenreModel:
    strategy: str
    modalities: tuple
    taxonomy: GenreTaxonomy
    d_h: int
    input_dims: dict                 # modality -> raw feature dim
    trunk: ModalityBranch = None     # early only (over concatenated input)
    branches: dict = field(default_factory=dict)  # intermediate / late
    joint: nn.Mlp = None             # intermediate only

    @property
    def num_genres(self) -> int:
        return len(self.taxonomy)


def make_genre_model(strategy: str, modalities, taxonomy: GenreTaxonomy,
                     input_dims: dict, d_h: int, seed: int = 0) -> GenreModel:
    """Seeded model construction; parameter draws happen in a fixed order so
    identical arguments give identical weights."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    mods = canonical_modalities(modalities)
    missing = [m for m in mods if m not in input_dims]
    if missing:
        raise ValueError(f"input_dims missing {missing}")
    g = len(taxonomy)
    rng = spawn_rng(seed, "fusion/init")
    model = GenreModel(strategy=strategy, modalities=mods, taxonomy=taxonomy,
                       d_h=d_h, input_dims={m: int(input_dims[m]) for m in mods})
    if strategy == "early":
        cat = sum(model.input_dims[m] for m in mods)
        model.trunk = ModalityBranch(
            hidden=nn.make_mlp((cat, d_h), ["relu"], rng),
            head=nn.make_mlp((d_h, g), ["sigmoid"], rng),
        )
    else:
        for m in mods:
            model.branches[m] = ModalityBranch(
                hidden=nn.make_mlp((model.input_dims[m], d_h), ["relu"], rng),
                head=nn.make_mlp((d_h, g), ["sigmoid"], rng),
            )
        if strategy == "intermediate":
            model.joint = nn.make_mlp((d_h * len(mods), g), ["sigmoid"], rng)
    return model


def _mlps(model: GenreModel) -> list:
    """All MLPs in the canonical parameter order."""
    nets = []
    if model.trunk is not None:
        nets += [model.trunk.hidden, model.trunk.head]
    for m in model.modalities:
        if m in model.branches:
            nets += [model.branches[m].hidden, model.branches[m].head]
    if model.joint is not None:
        nets.append(model.joint)
    return nets


def model_params(model: GenreModel) -> list:
    arrays = []
    for net in _mlps(model):
        for layer in net.layers:
            arrays += [layer.weights, layer.bias]
    return arrays


def set_model_params(model: GenreModel, arrays) -> None:
    expected = model_params(model)
    if len(arrays) != len(expected):
        raise ValueError(f"expected {len(expected)} arrays, got {len(arrays)}")
    i = 0
    for net in _mlps(model):
        for layer in net.layers:
            w = np.asarray(arrays[i], dtype=np.float32)
            b = np.asarray(arrays[i + 1], dtype=np.float32)
            if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
                raise ValueError("parameter shape mismatch")
            layer.weights = w
            layer.bias = b
            i += 2


# ---------------------------------------------------------------------------
# input assembly
# ---------------------------------------------------------------------------

def assemble_inputs(record: VideoRecord, embedding_table: EmbeddingTable = None,
                    train_mode: bool = False, seed: int = 0,
                    modalities=MODALITIES, num_shots: int = 8,
                    frames_per_shot: int = 3, keywords_k: int = 20) -> dict:
    """Per-modality float32 feature vectors for one record.

    Visual pools sampled shots (seeded-random in train mode, evenly spaced
    otherwise); audio is the stored embedding; language averages the
    embeddings of the extracted keywords.
    """
    mods = canonical_modalities(modalities)
    out = {}
    if "visual" in mods:
        mode = "seeded-random" if train_mode else "deterministic-uniform"
        shots = aggregate.sample_shots(record, num_shots=num_shots,
                                       frames_per_shot=frames_per_shot,
                                       mode=mode, seed=seed)
        out["visual"] = aggregate.video_feature([aggregate.shot_feature(s) for s in shots])
    if "audio" in mods:
        out["audio"] = record.audio_embedding
    if "language" in mods:
        if embedding_table is None:
            raise ValueError("language modality requires an embedding table")
        keywords = textlab.extract_keywords(record.transcript, k=keywords_k)
        out["language"], _ = textlab.language_feature(keywords, embedding_table)
    return out


def _as_batch(inputs: dict, modalities) -> tuple:
    mats = {}
    was_1d = None
    for m in modalities:
        x = np.asarray(inputs[m], dtype=np.float64)
        one = x.ndim == 1
        if was_1d is None:
            was_1d = one
        elif was_1d != one:
            raise ValueError("mixed single/batch modality inputs")
        mats[m] = x.reshape(1, -1) if one else x
    return mats, bool(was_1d)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _forward(model: GenreModel, inputs: dict, masks: dict = None) -> dict:
    """Forward pass for any strategy.

    Returns rho, the auxiliary per-modality probabilities (empty for early),
    and the caches needed for the backward pass. ``masks`` optionally holds
    inverted-dropout masks applied to each hidden activation. All internal
    tensors are batched 2-D; single-vector inputs get their shape back in
    rho/aux only.
    """
    missing = [m for m in model.modalities if m not in inputs]
    if missing:
        raise ValueError(f"missing modality inputs {missing} for strategy {model.strategy}")
    mats, was_1d = _as_batch(inputs, model.modalities)
    for m in model.modalities:
        if mats[m].shape[1] != model.input_dims[m]:
            raise ValueError(
                f"{m} input dim {mats[m].shape[1]} != model dim {model.input_dims[m]}"
            )
    squeeze = (lambda a: a[0]) if was_1d else (lambda a: a)
    ctx = {"was_1d": was_1d}
    if model.strategy == "early":
        x = np.concatenate([mats[m] for m in model.modalities], axis=1)
        z, ctx["cache_hidden"] = nn.mlp_forward(model.trunk.hidden, x)
        if masks:
            z = z * masks["trunk"]
        rho, ctx["cache_head"] = nn.mlp_forward(model.trunk.head, z)
        return {"rho": squeeze(rho), "aux": {}, "ctx": ctx}

    aux = {}
    hidden = {}
    ctx["branch"] = {}
    for m in model.modalities:
        branch = model.branches[m]
        z, cache_h = nn.mlp_forward(branch.hidden, mats[m])
        if masks and m in masks:
            z = z * masks[m]
        rho_m, cache_head = nn.mlp_forward(branch.head, z)
        hidden[m] = z
        aux[m] = rho_m
        ctx["branch"][m] = {"cache_hidden": cache_h, "cache_head": cache_head}
    if model.strategy == "intermediate":
        zcat = np.concatenate([hidden[m] for m in model.modalities], axis=1)
        rho, ctx["cache_joint"] = nn.mlp_forward(model.joint, zcat)
    else:
        # late fusion averages the branch probabilities as reported at the
        # 32-bit boundary, so predict() IS the mean of branch_predictions()
        rho = np.mean([aux[m].astype(np.float32).astype(np.float64)
                       for m in model.modalities], axis=0)
    return {"rho": squeeze(rho), "aux": {m: squeeze(a) for m, a in aux.items()}, "ctx": ctx}


def predict(model: GenreModel, inputs: dict) -> np.ndarray:
    """Per-genre probabilities in (0,1), float32; accepts a single record's
    feature dict or batched (B, d) inputs."""
    out = _forward(model, inputs)
    return np.asarray(out["rho"], dtype=np.float32)


def branch_predictions(model: GenreModel, inputs: dict) -> dict:
    """Per-modality branch probabilities (float32); empty for early fusion."""
    out = _forward(model, inputs)
    return {m: np.asarray(p, dtype=np.float32) for m, p in out["aux"].items()}


def training_loss(model: GenreModel, inputs: dict, labels) -> float:
    """Strategy-dependent loss: early bce(rho); intermediate bce(rho) plus all
    auxiliary bces; late the sum of branch bces."""
    return _loss_from_forward(model, _forward(model, inputs), labels)[0]


def _loss_from_forward(model: GenreModel, fwd: dict, labels) -> tuple:
    y = np.asarray(labels, dtype=np.float64)
    rho = fwd["rho"]
    if y.shape != np.shape(rho):
        raise ValueError(f"labels shape {y.shape} != predictions shape {np.shape(rho)}")
    parts = {}
    if model.strategy == "early":
        loss, d_rho = nn.bce_loss(rho, y)
        parts["rho"] = d_rho
        return loss, parts
    total = 0.0
    if model.strategy == "intermediate":
        joint_loss, d_rho = nn.bce_loss(rho, y)
        total += joint_loss
        parts["rho"] = d_rho
    for m in model.modalities:
        aux_loss, d_aux = nn.bce_loss(fwd["aux"][m], y)
        total += aux_loss
        parts[m] = d_aux
    return total, parts


def loss_and_grads(model: GenreModel, inputs: dict, labels, masks: dict = None) -> tuple:
    """Training loss and gradients for every parameter, aligned with
    :func:`model_params` order."""
    fwd = _forward(model, inputs, masks=masks)
    loss, d_parts = _loss_from_forward(model, fwd, labels)
    ctx = fwd["ctx"]
    # caches are always batched internally; lift squeezed gradients back to 2-D
    up = (lambda a: np.asarray(a).reshape(1, -1)) if ctx["was_1d"] else (lambda a: a)
    grads = []
    if model.strategy == "early":
        g_head, dz = nn.backward(model.trunk.head, ctx["cache_head"], up(d_parts["rho"]))
        if masks:
            dz = dz * masks["trunk"]
        g_hidden, _ = nn.backward(model.trunk.hidden, ctx["cache_hidden"], dz)
        for dw, db in g_hidden + g_head:
            grads += [dw, db]
        return loss, grads

    d_hidden = {}
    branch_grads = {}
    for m in model.modalities:
        g_head, dz = nn.backward(model.branches[m].head,
                                 ctx["branch"][m]["cache_head"], up(d_parts[m]))
        d_hidden[m] = dz
        branch_grads[m] = {"head": g_head}
    if model.strategy == "intermediate":
        g_joint, d_zcat = nn.backward(model.joint, ctx["cache_joint"], up(d_parts["rho"]))
        for i, m in enumerate(model.modalities):
            d_hidden[m] = d_hidden[m] + d_zcat[:, i * model.d_h:(i + 1) * model.d_h]
    for m in model.modalities:
        dz = d_hidden[m]
        if masks and m in masks:
            dz = dz * masks[m]
        g_hidden, _ = nn.backward(model.branches[m].hidden,
                                  ctx["branch"][m]["cache_hidden"], dz)
        branch_grads[m]["hidden"] = g_hidden
    for m in model.modalities:
        for dw, db in branch_grads[m]["hidden"] + branch_grads[m]["head"]:
            grads += [dw, db]
    if model.strategy == "intermediate":
        for dw, db in g_joint:
            grads += [dw, db]
    return loss, grads


def _set_params_raw(model: GenreModel, arrays) -> None:
    # unlike set_model_params, keeps the given dtype (float64 for grad checks)
    i = 0
    for net in _mlps(model):
        for layer in net.layers:
            layer.weights = arrays[i]
            layer.bias = arrays[i + 1]
            i += 2


def grad_check_closure(model: GenreModel, inputs: dict, labels) -> tuple:
    """(loss_fn, x0) for :func:`nn.grad_check`: the training loss as a float64
    function of the flattened parameter vector."""
    clone = copy.deepcopy(model)
    x0, shapes = nn.flatten_arrays(model_params(model))

    def fn(vec):
        _set_params_raw(clone, nn.unflatten_vector(vec, shapes))
        loss, grads = loss_and_grads(clone, inputs, labels)
        return loss, nn.flatten_arrays(grads)[0]

    return fn, x0


# ---------------------------------------------------------------------------
# training / inference
# ---------------------------------------------------------------------------

def _label_matrix(records, taxonomy) -> np.ndarray:
    return np.stack([taxonomy.label_vector(r.genres) for r in records])


def _static_features(records, config: TrainConfig, table) -> dict:
    feats = {}
    mods = canonical_modalities(config.modalities)
    if "audio" in mods:
        feats["audio"] = np.stack([r.audio_embedding for r in records]).astype(np.float64)
    if "language" in mods:
        if table is None:
            raise ValueError("language modality requires an embedding table")
        rows = []
        for r in records:
            kw = textlab.extract_keywords(r.transcript, k=config.keywords_k)
            vec, _ = textlab.language_feature(kw, table)
            rows.append(vec)
        feats["language"] = np.stack(rows).astype(np.float64)
    return feats


def _visual_matrix(records, config: TrainConfig, train_mode: bool, seeds=None) -> np.ndarray:
    rows = []
    for i, rec in enumerate(records):
        mode = "seeded-random" if train_mode else "deterministic-uniform"
        shots = aggregate.sample_shots(rec, num_shots=config.shots_per_video,
                                       frames_per_shot=config.frames_per_shot,
                                       mode=mode, seed=int(seeds[i]) if seeds is not None else 0)
        rows.append(aggregate.video_feature([aggregate.shot_feature(s) for s in shots]))
    return np.stack(rows).astype(np.float64)


def _macro_map(scores: np.ndarray, labels: np.ndarray) -> float:
    aps = [
        metrics.average_precision(scores[:, j], labels[:, j]) if labels[:, j].sum() > 0 else 0.0
        for j in range(labels.shape[1])
    ]
    return float(np.mean(aps))


def train(dataset: Dataset, config: TrainConfig, embedding_table: EmbeddingTable = None) -> tuple:
    """Train a fusion model; returns ``(model, history)`` where history holds
    one {epoch, train_loss, val_macro_map} entry per epoch and the model
    carries the best-validation-mAP parameters."""
    config.validate()
    mods = canonical_modalities(config.modalities)
    train_recs = dataset.split("train")
    val_recs = dataset.split("val")
    if not train_recs:
        raise ValueError("dataset has no train split")
    if not val_recs:
        raise ValueError("dataset has no val split")
    if "language" in mods:
        if embedding_table is None:
            raise ValueError("language modality requires an embedding table")
        if embedding_table.dim != dataset.d_l:
            raise ValueError(
                f"embedding table dim {embedding_table.dim} != dataset d_l {dataset.d_l}"
            )

    input_dims = {"visual": dataset.d_v, "audio": dataset.d_a, "language": dataset.d_l}
    model = make_genre_model(config.strategy, mods, dataset.taxonomy,
                             input_dims, config.d_h, seed=config.seed)
    history = []
    if config.epochs == 0:
        return model, history

    y_train = _label_matrix(train_recs, dataset.taxonomy)
    y_val = _label_matrix(val_recs, dataset.taxonomy)
    static_train = _static_features(train_recs, config, embedding_table)
    static_val = _static_features(val_recs, config, embedding_table)
    val_feats = dict(static_val)
    if "visual" in mods:
        val_feats["visual"] = _visual_matrix(val_recs, config, train_mode=False)

    rng_shuffle = spawn_rng(config.seed, "fusion/shuffle")
    rng_shots = spawn_rng(config.seed, "fusion/shot-seeds")
    rng_drop = spawn_rng(config.seed, "fusion/dropout")

    n = len(train_recs)
    params = model_params(model)
    state = nn.init_adam(params, lr=config.max_lr)
    batches_per_epoch = (n + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * batches_per_epoch
    global_step = 0

    frozen_visual = None
    if "visual" in mods and not config.resample_each_epoch:
        seeds = rng_shots.integers(0, 2 ** 63 - 1, size=n)
        frozen_visual = _visual_matrix(train_recs, config, train_mode=True, seeds=seeds)

    best_map = -1.0
    best_params = [p.copy() for p in params]
    best_epoch = -1

    for epoch in range(config.epochs):
        feats = dict(static_train)
        if "visual" in mods:
            if config.resample_each_epoch:
                seeds = rng_shots.integers(0, 2 ** 63 - 1, size=n)
                feats["visual"] = _visual_matrix(train_recs, config, train_mode=True, seeds=seeds)
            else:
                feats["visual"] = frozen_visual

        perm = rng_shuffle.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            batch = {m: feats[m][idx] for m in mods}
            labels = y_train[idx]
            masks = None
            if config.dropout > 0.0:
                keep = 1.0 - config.dropout
                names = ["trunk"] if model.strategy == "early" else list(mods)
                masks = {
                    name: (rng_drop.random((len(idx), config.d_h)) < keep) / keep
                    for name in names
                }
            set_model_params(model, params)
            loss, grads = loss_and_grads(model, batch, labels, masks=masks)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {global_step}"
                )
            lr = nn.lr_schedule(global_step, total_steps, config.max_lr, config.warmup_frac)
            if config.optimizer == "adam":
                params, state = nn.adam_step(params, grads, state, lr=lr)
            else:
                params = nn.sgd_step(params, grads, lr)
            global_step += 1
            epoch_loss += loss * len(idx)

        set_model_params(model, params)
        val_scores = predict(model, {m: val_feats[m] for m in mods}).astype(np.float64)
        val_map = _macro_map(val_scores, y_val)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / n,
            "val_macro_map": val_map,
        })
        if val_map > best_map:
            best_map = val_map
            best_params = [p.copy() for p in params]
            best_epoch = epoch

    set_model_params(model, best_params)
    return model, history


def infer_dataset(model: GenreModel, records, embedding_table: EmbeddingTable = None,
                  num_shots: int = 8, frames_per_shot: int = 3,
                  keywords_k: int = 20) -> metrics.PredictionSet:
    """Deterministic inference (evenly spaced sampling) over records, order
    preserved."""
    records = list(records)
    if not records:
        raise ValueError("empty record set")
    rows = []
    for rec in records:
        inputs = assemble_inputs(rec, embedding_table, train_mode=False,
                                 modalities=model.modalities, num_shots=num_shots,
                                 frames_per_shot=frames_per_shot, keywords_k=keywords_k)
        for m in model.modalities:
            got = inputs[m].shape[0]
            want = model.input_dims[m]
            if got != want:
                raise ValueError(
                    f"record {rec.id}: {m} feature dim {got} != model dim {want}"
                )
        rows.append(predict(model, inputs))
    return metrics.PredictionSet(ids=[r.id for r in records], scores=np.stack(rows),
                                 genres=list(model.taxonomy.names))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_model(model: GenreModel, path) -> None:
    header = {
        "kind": "genre-fusion",
        "strategy": model.strategy,
        "modalities": list(model.modalities),
        "taxonomy": list(model.taxonomy.names),
        "d_h": model.d_h,
        "input_dims": {m: model.input_dims[m] for m in model.modalities},
    }
    nn.save_checkpoint(path, header, model_params(model))


def load_model(path) -> GenreModel:
    header, params = nn.load_checkpoint(path)
    if header.get("kind") != "genre-fusion":
        raise ValueError(f"{path}: not a fusion checkpoint (kind={header.get('kind')!r})")
    model = make_genre_model(
        header["strategy"], tuple(header["modalities"]),
        GenreTaxonomy(tuple(header["taxonomy"])),
        {m: int(d) for m, d in header["input_dims"].items()},
        int(header["d_h"]), seed=0,
    )
    set_model_params(model, params)
    return model


# ---------------------------------------------------------------------------
# strategy comparison harness
# ---------------------------------------------------------------------------

def compare_strategies(dataset: Dataset, config: TrainConfig,
                       embedding_table: EmbeddingTable = None,
                       split: str = "test") -> list:
    """Train all three strategies on identical data/seed and report each on
    the given split."""
    rows = []
    for strategy in STRATEGIES:
        cfg = dataclasses.replace(config, strategy=strategy)
        model, history = train(dataset, cfg, embedding_table)
        preds = infer_dataset(model, dataset.split(split), embedding_table,
                              num_shots=cfg.shots_per_video,
                              frames_per_shot=cfg.frames_per_shot,
                              keywords_k=cfg.keywords_k)
        report = metrics.genre_report(preds, dataset.split(split), dataset.taxonomy)
        rows.append({"strategy": strategy, "model": model, "history": history,
                     "report": report})
    return rows


def format_comparison(rows) -> str:
    lines = [
        "fusion strategy comparison (same data, same seed)",
        f"{'strategy':<14} {'macro r@0.5':>11} {'macro p@0.5':>11} {'macro mAP':>10}"
        f" {'micro r@0.5':>11} {'micro p@0.5':>11} {'micro mAP':>10}",
    ]
    for row in rows:
        rep = row["report"]
        lines.append(
            f"{row['strategy']:<14} {rep.macro.recall_at_05:>11.4f} "
            f"{rep.macro.precision_at_05:>11.4f} {rep.macro.map:>10.4f} "
            f"{rep.micro.recall_at_05:>11.4f} {rep.micro.precision_at_05:>11.4f} "
            f"{rep.micro.map:>10.4f}"
        )
    return "\n".join(lines) + "\n"
