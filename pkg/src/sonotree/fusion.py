"""Gated low-rank-adapter fusion classifier.

The forward path: project the pooled text feature into the shared space,
push each visual level through its low-rank adapter plus the projected text
residual, route with a text-conditioned softmax gate (hard argmax selection
or soft mixture), add the text residual again, optionally add a projected
clinical embedding, and classify with a linear softmax head trained under
cross-entropy.

Gradients are hand-derived reverse mode. In hard-gate mode the selection
index is locally constant, so every non-gate gradient is the exact gradient
of the realized forward pass; the gate weights receive a straight-through
surrogate (the soft-mixture gradient, with the gate input detached) so the
router can still learn.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import (
    AdamState,
    ContractViolation,
    PROB_FLOOR,
    Rng,
    adam_step,
    softmax_rows,
)

LEVELS = ("c", "m", "f")
DEFAULT_D = 400
DEFAULT_DT = 768
DEFAULT_RANK = 16
DEFAULT_CLASSES = 2
INIT_SIGMA = 0.02

NUMERIC_RAW_DIM = 8
NUMERIC_HIDDEN = 64
NUMERIC_EMBED = 400


@dataclass(frozen=True)
class FusionConfig:
    levels: tuple = LEVELS
    use_numeric: bool = True
    use_rag: bool = True
    use_lora: bool = True
    gate_mode: str = "hard"  # hard | soft

    def validate(self) -> None:
        if not self.levels:
            raise ContractViolation("config: at least one visual level required")
        if len(set(self.levels)) != len(self.levels):
            raise ContractViolation("config: duplicate levels")
        for level in self.levels:
            if level not in LEVELS:
                raise ContractViolation(f"config: unknown level {level!r}")
        if self.gate_mode not in ("hard", "soft"):
            raise ContractViolation(f"config: unknown gate mode {self.gate_mode!r}")

    @property
    def gated(self) -> bool:
        return len(self.levels) >= 2

    def label(self) -> str:
        bits = ["L" + "".join(self.levels),
                "num" if self.use_numeric else "nonum",
                "rag" if self.use_rag else "norag",
                "lora" if self.use_lora else "nolora",
                self.gate_mode]
        return "-".join(bits)


def init_params(rng: Rng, d: int = DEFAULT_D, dt: int = DEFAULT_DT,
                rank: int = DEFAULT_RANK, classes: int = DEFAULT_CLASSES,
                numeric: bool = True, numeric_raw: int = NUMERIC_RAW_DIM,
                numeric_hidden: int = NUMERIC_HIDDEN,
                numeric_embed: int = NUMERIC_EMBED) -> dict:
    """Gaussian sigma=0.02 weights, zero biases, zero up-projections (so the
    epoch-0 model equals the text-only baseline)."""
    if rank >= d:
        raise ContractViolation(f"adapter rank {rank} must be < d={d}")
    params = {
        "w_t": rng.normals((d, dt)) * INIT_SIGMA,
        "b_t": np.zeros(d),
        "w_g": rng.normals((3, d)) * INIT_SIGMA,
        "b_g": np.zeros(3),
        "w_c": rng.normals((classes, d)) * INIT_SIGMA,
        "b_c": np.zeros(classes),
    }
    for level in LEVELS:
        params[f"w_down_{level}"] = rng.normals((rank, d)) * INIT_SIGMA
        params[f"b_down_{level}"] = np.zeros(rank)
        params[f"w_up_{level}"] = np.zeros((d, rank))
        params[f"b_up_{level}"] = np.zeros(d)
    if numeric:
        # clinical encoder: fan-in scale on the hidden layer keeps gradients
        # alive (three stacked sigma=0.02 layers would vanish), while the
        # output layer is damped so the numeric term enters z at the same
        # magnitude as the projected text instead of drowning it
        params["w_e1"] = rng.normals((numeric_hidden, numeric_raw)) \
            * np.sqrt(2.0 / numeric_raw)
        params["b_e1"] = np.zeros(numeric_hidden)
        params["w_e2"] = rng.normals((numeric_embed, numeric_hidden)) \
            * (0.1 / numeric_hidden)
        params["b_e2"] = np.zeros(numeric_embed)
        params["w_n"] = rng.normals((d, numeric_embed)) * INIT_SIGMA
        params["b_n"] = np.zeros(d)
    return params


def active_keys(params: dict, config: FusionConfig) -> list:
    """Parameter names actually trained under this configuration."""
    keys = ["w_t", "b_t", "w_c", "b_c"]
    if config.gated:
        keys += ["w_g", "b_g"]
    if config.use_lora:
        for level in config.levels:
            keys += [f"w_down_{level}", f"b_down_{level}",
                     f"w_up_{level}", f"b_up_{level}"]
    if config.use_numeric:
        keys += ["w_e1", "b_e1", "w_e2", "b_e2", "w_n", "b_n"]
    missing = [k for k in keys if k not in params]
    if missing:
        raise ContractViolation(f"params missing for config: {missing}")
    return keys


@dataclass
class FusionBatch:
    """Column-stacked inputs for n samples."""

    visual: dict  # level -> (n, d) array
    text: np.ndarray  # (n, dt); zeros when retrieval is disabled
    numeric_raw: np.ndarray | None  # (n, 8) scaled clinical vectors
    labels: np.ndarray | None = None  # (n,) ints

    @property
    def n(self) -> int:
        return self.text.shape[0]

    def select(self, idx) -> "FusionBatch":
        return FusionBatch(
            visual={k: v[idx] for k, v in self.visual.items()},
            text=self.text[idx],
            numeric_raw=None if self.numeric_raw is None else self.numeric_raw[idx],
            labels=None if self.labels is None else self.labels[idx])


@dataclass
class GateDecision:
    g: np.ndarray  # (n, n_levels) rows on the simplex
    selected: np.ndarray  # (n,) index into levels
    levels: tuple
    mode: str

    def selected_level(self, i: int = 0) -> str:
        return self.levels[int(self.selected[i])]


@dataclass
class ForwardTrace:
    t_tilde: np.ndarray
    h: dict  # level -> (n, d)
    gate: GateDecision
    z: np.ndarray
    logits: np.ndarray
    y_hat: np.ndarray
    loss: float | None
    cache: dict = field(default_factory=dict)


def _project_text(text: np.ndarray, params: dict) -> np.ndarray:
    if text.shape[1] != params["w_t"].shape[1]:
        raise ContractViolation(
            f"text dim {text.shape[1]} != projection dim {params['w_t'].shape[1]}")
    return text @ params["w_t"].T + params["b_t"]


def lora_apply(v: np.ndarray, params: dict, level: str) -> np.ndarray:
    """W_up (W_down v + b_down) + b_up for one level, batched rows."""
    w_down, b_down = params[f"w_down_{level}"], params[f"b_down_{level}"]
    w_up, b_up = params[f"w_up_{level}"], params[f"b_up_{level}"]
    if v.shape[1] != w_down.shape[1]:
        raise ContractViolation(f"visual dim {v.shape[1]} != d {w_down.shape[1]}")
    return (v @ w_down.T + b_down) @ w_up.T + b_up


def forward(batch: FusionBatch, params: dict, config: FusionConfig) -> ForwardTrace:
    config.validate()
    active_keys(params, config)  # raises on missing parameters
    levels = config.levels
    text = batch.text if config.use_rag else np.zeros_like(batch.text)
    t_tilde = _project_text(text, params)
    n, d = t_tilde.shape

    cache: dict = {"text_in": text}
    h = {}
    for level in levels:
        if level not in batch.visual:
            raise ContractViolation(f"missing visual level {level!r} in batch")
        if config.use_lora:
            a = batch.visual[level] @ params[f"w_down_{level}"].T \
                + params[f"b_down_{level}"]
            cache[f"a_{level}"] = a
            u = a @ params[f"w_up_{level}"].T + params[f"b_up_{level}"]
        else:
            u = np.zeros((n, d))
        h[level] = u + t_tilde

    if config.gated:
        idx = [LEVELS.index(level) for level in levels]
        logits_g = t_tilde @ params["w_g"][idx].T + params["b_g"][idx]
        g = softmax_rows(logits_g)
        selected = np.argmax(g, axis=1)  # lowest index wins ties
        if config.gate_mode == "hard":
            h_stack = np.stack([h[level] for level in levels], axis=1)
            h_sel = h_stack[np.arange(n), selected]
        else:
            h_sel = np.zeros((n, d))
            for li, level in enumerate(levels):
                h_sel += g[:, li:li + 1] * h[level]
        gate = GateDecision(g=g, selected=selected, levels=levels,
                            mode=config.gate_mode)
        cache["gate_idx"] = idx
    else:
        g = np.ones((n, 1))
        gate = GateDecision(g=g, selected=np.zeros(n, dtype=int),
                            levels=levels, mode="fixed")
        h_sel = h[levels[0]]

    z = h_sel + t_tilde
    if config.use_numeric:
        if batch.numeric_raw is None:
            raise ContractViolation("config enables numeric but batch has none")
        e_pre = batch.numeric_raw @ params["w_e1"].T + params["b_e1"]
        e1 = np.maximum(e_pre, 0.0)
        n_vec = e1 @ params["w_e2"].T + params["b_e2"]
        z = z + n_vec @ params["w_n"].T + params["b_n"]
        cache.update(e_pre=e_pre, e1=e1, n_vec=n_vec)

    logits = z @ params["w_c"].T + params["b_c"]
    y_hat = softmax_rows(logits)

    loss = None
    if batch.labels is not None:
        onehot = np.zeros_like(y_hat)
        onehot[np.arange(n), batch.labels] = 1.0
        loss = float(-np.sum(onehot * np.log(np.maximum(y_hat, PROB_FLOOR))))
        cache["onehot"] = onehot
    cache["h_sel"] = h_sel
    return ForwardTrace(t_tilde=t_tilde, h=h, gate=gate, z=z, logits=logits,
                        y_hat=y_hat, loss=loss, cache=cache)


def backward(trace: ForwardTrace, batch: FusionBatch, params: dict,
             config: FusionConfig) -> dict:
    """Gradients of the summed cross-entropy for every active parameter."""
    if trace.loss is None:
        raise ContractViolation("backward requires a trace with labels")
    levels = config.levels
    n = batch.n
    grads = {k: np.zeros_like(params[k]) for k in active_keys(params, config)}

    y_hat, onehot = trace.y_hat, trace.cache["onehot"]
    # exact gradient of -sum(y * log(max(y_hat, floor)))
    dy_hat = -onehot / np.maximum(y_hat, PROB_FLOOR) * (y_hat > PROB_FLOOR)
    dlogits = y_hat * (dy_hat - np.sum(dy_hat * y_hat, axis=1, keepdims=True))

    grads["w_c"] += dlogits.T @ trace.z
    grads["b_c"] += dlogits.sum(axis=0)
    dz = dlogits @ params["w_c"]

    if config.use_numeric:
        e_pre, e1, n_vec = (trace.cache[k] for k in ("e_pre", "e1", "n_vec"))
        grads["w_n"] += dz.T @ n_vec
        grads["b_n"] += dz.sum(axis=0)
        dn_vec = dz @ params["w_n"]
        grads["w_e2"] += dn_vec.T @ e1
        grads["b_e2"] += dn_vec.sum(axis=0)
        de_pre = (dn_vec @ params["w_e2"]) * (e_pre > 0)
        grads["w_e1"] += de_pre.T @ batch.numeric_raw
        grads["b_e1"] += de_pre.sum(axis=0)

    dh_sel = dz
    dt_tilde = dz.copy()  # direct residual into z

    dh = {level: np.zeros_like(dh_sel) for level in levels}
    if config.gated:
        g, selected = trace.gate.g, trace.gate.selected
        idx = trace.cache["gate_idx"]
        h_stack = np.stack([trace.h[level] for level in levels], axis=1)
        # gate logit gradient through the soft mixture in both modes
        dg = np.einsum("nd,nld->nl", dh_sel, h_stack)
        ds = g * (dg - np.sum(dg * g, axis=1, keepdims=True))
        grads["w_g"][idx] += ds.T @ trace.t_tilde
        grads["b_g"][idx] += ds.sum(axis=0)
        if config.gate_mode == "soft":
            dt_tilde += ds @ params["w_g"][idx]
            for li, level in enumerate(levels):
                dh[level] = g[:, li:li + 1] * dh_sel
        else:
            # hard: the realized forward uses only the selected branch and is
            # locally independent of the gate, so dt_tilde takes no gate term
            for li, level in enumerate(levels):
                mask = (selected == li)[:, None]
                dh[level] = dh_sel * mask
    else:
        dh[levels[0]] = dh_sel

    for level in levels:
        du = dh[level]
        dt_tilde += du  # h = u + t_tilde
        if config.use_lora:
            a = trace.cache[f"a_{level}"]
            grads[f"w_up_{level}"] += du.T @ a
            grads[f"b_up_{level}"] += du.sum(axis=0)
            da = du @ params[f"w_up_{level}"]
            grads[f"w_down_{level}"] += da.T @ batch.visual[level]
            grads[f"b_down_{level}"] += da.sum(axis=0)

    grads["w_t"] += dt_tilde.T @ trace.cache["text_in"]
    grads["b_t"] += dt_tilde.sum(axis=0)
    return grads


def predict(batch: FusionBatch, params: dict, config: FusionConfig):
    """(labels, probabilities, gate decision) without needing labels."""
    unlabeled = replace_labels(batch, None)
    trace = forward(unlabeled, params, config)
    labels = np.argmax(trace.y_hat, axis=1)
    return labels, trace.y_hat, trace.gate


def replace_labels(batch: FusionBatch, labels) -> FusionBatch:
    return FusionBatch(visual=batch.visual, text=batch.text,
                       numeric_raw=batch.numeric_raw, labels=labels)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    gate_fracs: tuple  # fraction routed to (c, m, f)


def train(batch: FusionBatch, params: dict, config: FusionConfig,
          rng: Rng, lr: float = 1e-3, batch_size: int = 32,
          epochs: int = 100, val_batch: FusionBatch | None = None):
    """Mini-batch Adam with seeded shuffling. Returns (params, [EpochLog])."""
    if batch.labels is None:
        raise ContractViolation("train: labels required")
    classes = np.unique(batch.labels)
    if classes.size < 2:
        raise ContractViolation("train: need at least two classes present")
    keys = active_keys(params, config)
    trainable = {k: params[k].copy() for k in keys}
    frozen = {k: v for k, v in params.items() if k not in trainable}
    state = AdamState.for_params(trainable)
    logs = []
    n = batch.n
    for epoch in range(epochs):
        order = list(range(n))
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            mini = batch.select(idx)
            merged = {**trainable, **frozen}
            trace = forward(mini, merged, config)
            grads = backward(trace, mini, merged, config)
            epoch_loss += trace.loss
            scaled = {k: grads[k] / len(idx) for k in keys}
            trainable, state = adam_step(trainable, scaled, state, lr)
        merged = {**trainable, **frozen}
        labels_pred, _, gate = predict(batch, merged, config)
        train_acc = float(np.mean(labels_pred == batch.labels))
        if val_batch is not None and val_batch.labels is not None:
            val_pred, _, _ = predict(val_batch, merged, config)
            val_acc = float(np.mean(val_pred == val_batch.labels))
        else:
            val_acc = float("nan")
        fracs = gate_fractions(gate)
        logs.append(EpochLog(epoch=epoch, loss=epoch_loss / n,
                             train_acc=train_acc, val_acc=val_acc,
                             gate_fracs=fracs))
    return {**trainable, **frozen}, logs


def gate_fractions(gate: GateDecision) -> tuple:
    """Fraction of samples routed to each of (c, m, f); absent levels get 0."""
    counts = {level: 0.0 for level in LEVELS}
    n = gate.selected.shape[0]
    for li, level in enumerate(gate.levels):
        counts[level] = float(np.sum(gate.selected == li)) / max(n, 1)
    return tuple(counts[level] for level in LEVELS)


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + flat little-endian float32 parameter file
# ---------------------------------------------------------------------------

def _param_order(params: dict) -> list:
    return sorted(params.keys())


def save_checkpoint(directory, params: dict, config: FusionConfig,
                    extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    order = _param_order(params)
    manifest = {
        "format": "fusion-checkpoint-v1",
        "dtype": "float32-le",
        "order": [{"name": k, "shape": list(params[k].shape)} for k in order],
        "config": {
            "levels": list(config.levels),
            "use_numeric": config.use_numeric,
            "use_rag": config.use_rag,
            "use_lora": config.use_lora,
            "gate_mode": config.gate_mode,
        },
        "extra": extra or {},
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    with (directory / "params.bin").open("wb") as fh:
        for key in order:
            flat = params[key].astype("<f4").ravel()
            fh.write(struct.pack(f"<{flat.size}f", *flat))


def load_checkpoint(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != "fusion-checkpoint-v1":
        raise ContractViolation("unknown checkpoint format")
    params = {}
    raw = (directory / "params.bin").read_bytes()
    offset = 0
    for entry in manifest["order"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        values = struct.unpack_from(f"<{count}f", raw, offset)
        offset += 4 * count
        params[entry["name"]] = np.array(values, dtype=np.float64).reshape(shape)
    cfg = manifest["config"]
    config = FusionConfig(levels=tuple(cfg["levels"]),
                          use_numeric=cfg["use_numeric"],
                          use_rag=cfg["use_rag"], use_lora=cfg["use_lora"],
                          gate_mode=cfg["gate_mode"])
    return params, config, manifest.get("extra", {})
