"""Training: masked reduce-sum cross-entropy, RMSProp/Adam, the
cluster-as-minibatch loop, and autoencoder pretraining.

The loss mask per position i is

    m_i = beta / count(y_i)^alpha   if prediction == truth
          1    / count(y_i)^alpha   otherwise

with count taken over all ground-truth positions of the minibatch (padding
and internal markers included).  alpha=0 with beta=1 is the neutral mask.
Losses are summed, never averaged, so every node weighs the same
independently of its minibatch.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import add_n, weighted_cross_entropy
from .clustering import Clustering, Schedules, pick_clustering
from .corpus import FormulaPair
from .encoding import (PaddedBatch, Vocabulary, build_batch, build_vocab,
                       encode_tree)
from .metrics import EvalReport, MetricAccumulator
from .parser import ParserOptions, parse_formula
from .treelstm import ModelConfig, TreeToTreeModel

log = logging.getLogger(__name__)

LR_RANGE = (1e-6, 1e-4)
DEFAULT_LR = {"adam": 1e-5, "rmsprop": 5e-5}


class Diverged(FloatingPointError):
    def __init__(self, epoch: int, last_good: dict | None):
        self.epoch = epoch
        self.last_good = last_good
        super().__init__(f"loss became non-finite in epoch {epoch}")


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.0        # 0 selects the per-optimizer default
    alpha: float = 1.0
    beta: float = 0.5
    dropout: float = 0.05
    layers: int = 1
    state_size: int = 256
    embed_size: int = 0
    proj_size: int = 0
    dec_state_size: int = 0
    bridge: str = "auto"
    epochs: int = 10
    max_updates: int = 0              # 0 = no cap
    seed: int = 0
    mode: str = "direct"              # direct | autoencoder-pretrain
    grad_clip: float = 5.0
    teacher_forcing: bool = True
    min_count: int = 1
    cluster_steps: int = 20
    finetune: str = "all"             # all | bridge (pretrain mode stage 3)
    pretrain_epochs: int = 0          # 0: same as epochs

    def __post_init__(self):
        if self.optimizer not in DEFAULT_LR:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.mode not in ("direct", "autoencoder-pretrain"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.learning_rate == 0.0:
            self.learning_rate = DEFAULT_LR[self.optimizer]
        if not LR_RANGE[0] <= self.learning_rate <= LR_RANGE[1]:
            log.warning("learning rate %g is outside the reference range "
                        "[%g, %g]", self.learning_rate, *LR_RANGE)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size, state_size=self.state_size,
            layers=self.layers, embed_size=self.embed_size,
            proj_size=self.proj_size, dec_state_size=self.dec_state_size,
            bridge=self.bridge, dropout=self.dropout)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_pf: float
    train_pm: float
    val_pf: float
    val_pm: float
    val_pb: float
    wall_seconds: float


# -- loss ------------------------------------------------------------------

def loss_mask(truth: np.ndarray, pred: np.ndarray, alpha: float,
              beta: float) -> np.ndarray:
    """Per-position loss weights for one minibatch (see module docstring)."""
    counts = np.bincount(truth.ravel())
    occ = counts[truth].astype(np.float64)
    base = occ ** -alpha
    return np.where(pred == truth, beta * base, base)


def masked_loss(logits, truth: np.ndarray, weights: np.ndarray):
    """Reduce-sum of weight * cross-entropy over all positions and members.

    logits: one (B, V) tensor per hull position, preorder; truth/weights:
    (B, P) arrays.
    """
    terms = [weighted_cross_entropy(lg, truth[:, i], weights[:, i])
             for i, lg in enumerate(logits)]
    return add_n(terms)


# -- optimizers ------------------------------------------------------------

class OptState:
    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm <= 0 or total <= max_norm or total == 0.0:
        return total
    scale = max_norm / total
    for g in grads.values():
        g *= scale
    return total


def adam_step(params, grads, state: OptState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, names=None):
    state.step += 1
    t = state.step
    for name in (names if names is not None else params):
        g = grads[name]
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m += (1 - beta1) * (g - m)
        v += (1 - beta2) * (g * g - v)
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def rmsprop_step(params, grads, state: OptState, lr: float,
                 decay: float = 0.9, eps: float = 1e-8, names=None):
    state.step += 1
    for name in (names if names is not None else params):
        g = grads[name]
        p = params[name]
        v = state.v.setdefault(name, np.zeros_like(p.data))
        v += (1 - decay) * (g * g - v)
        p.data = p.data - lr * g / (np.sqrt(v) + eps)


OPTIMIZERS = {"adam": adam_step, "rmsprop": rmsprop_step}


# -- pipeline assembly -----------------------------------------------------

@dataclass
class Prepared:
    batches: list[PaddedBatch]
    clustering: Clustering
    vocab: Vocabulary
    encoded: dict


def encode_pairs(pairs, vocab: Vocabulary, opts: ParserOptions,
                 swap_traversal: bool = True) -> dict:
    out = {}
    for p in pairs:
        tin = parse_formula(p.generic, opts, swap_traversal)
        tout = parse_formula(p.semantic, opts, swap_traversal)
        out[p.id] = (encode_tree(tin, vocab), encode_tree(tout, vocab))
    return out


def prepare(pairs, opts: ParserOptions, vocab: Vocabulary | None = None,
            min_count: int = 1, cluster_steps: int = 20,
            swap_traversal: bool = True,
            autoencode: str | None = None) -> Prepared:
    """Parse, encode, cluster and batch a pair corpus.

    autoencode: None for translation batches, "generic"/"semantic" to build
    identity batches over that side only (clustered on single topologies).
    """
    if vocab is None:
        trees = []
        for p in pairs:
            trees.append(parse_formula(p.generic, opts, swap_traversal))
            trees.append(parse_formula(p.semantic, opts, swap_traversal))
        vocab = build_vocab(trees, min_count=min_count)
    encoded = encode_pairs(pairs, vocab, opts, swap_traversal)
    if autoencode == "generic":
        encoded = {pid: (e_in, e_in) for pid, (e_in, _) in encoded.items()}
    elif autoencode == "semantic":
        encoded = {pid: (e_out, e_out) for pid, (_, e_out) in encoded.items()}
    if autoencode:
        masks = [(pid, (e_in.topo,)) for pid, (e_in, _) in encoded.items()]
    else:
        masks = [(pid, (e_in.topo, e_out.topo))
                 for pid, (e_in, e_out) in encoded.items()]
    clustering = pick_clustering(
        masks, Schedules.default(len(masks), cluster_steps))
    batches = []
    for c in clustering.clusters:
        hull_in = c.hulls[0]
        hull_out = c.hulls[-1]
        batches.append(build_batch(c.member_ids, encoded, hull_in, hull_out))
    return Prepared(batches, clustering, vocab, encoded)


# -- evaluation ------------------------------------------------------------

def evaluate_model(model: TreeToTreeModel, batches,
                   content_only_bow: bool = False,
                   teacher_forcing: bool = False) -> EvalReport:
    """Free-running decode over each batch's truth hull, pooled metrics."""
    acc = MetricAccumulator(content_only_bow=content_only_bow)
    for b in batches:
        _, preds = model.forward(b, teacher_forcing=teacher_forcing,
                                 training=False)
        acc.add_batch(preds, b.values_out)
    return acc.report()


# -- the training loop -----------------------------------------------------

@dataclass
class TrainResult:
    model: TreeToTreeModel
    vocab: Vocabulary
    clustering: Clustering
    logs: list[EpochLog] = field(default_factory=list)
    updates: int = 0


def _snapshot(model) -> dict:
    return {name: p.data.copy() for name, p in model.params.items()}


def train_loop(model: TreeToTreeModel, batches, config: TrainConfig,
               val_batches=None, param_names=None,
               update_callback=None) -> tuple[list[EpochLog], int]:
    """Iterate clusters as minibatches; returns (per-epoch logs, updates).

    Raises Diverged (carrying the last epoch-end parameter snapshot) when
    the loss stops being finite.
    """
    opt = OPTIMIZERS[config.optimizer]
    state = OptState()
    shuffle_rng = np.random.default_rng([config.seed, 101])
    drop_rng = np.random.default_rng([config.seed, 202])
    logs: list[EpochLog] = []
    last_good = None
    updates = 0
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        order = shuffle_rng.permutation(len(batches))
        total_loss = 0.0
        train_acc = MetricAccumulator()
        for bi in order:
            batch = batches[bi]
            model.zero_grads()
            logits, preds = model.forward(
                batch, teacher_forcing=config.teacher_forcing,
                training=True, rng=drop_rng)
            weights = loss_mask(batch.values_out, preds, config.alpha,
                                config.beta)
            loss = masked_loss(logits, batch.values_out, weights)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise Diverged(epoch, last_good)
            loss.backward()
            grads = model.grads()
            clip_grads(grads, config.grad_clip)
            opt(model.params, grads, state, config.learning_rate,
                names=param_names)
            total_loss += loss_val
            train_acc.add_batch(preds, batch.values_out)
            updates += 1
            if update_callback is not None:
                update_callback(updates, model)
            if config.max_updates and updates >= config.max_updates:
                break
        train_rep = train_acc.report()
        val_pf = val_pm = val_pb = float("nan")
        if val_batches:
            val_rep = evaluate_model(model, val_batches)
            val_pf, val_pm, val_pb = val_rep.p_f, val_rep.p_m, val_rep.p_b
        logs.append(EpochLog(epoch + 1, total_loss, train_rep.p_f,
                             train_rep.p_m, val_pf, val_pm, val_pb,
                             time.monotonic() - t0))
        last_good = _snapshot(model)
        if config.max_updates and updates >= config.max_updates:
            break
    return logs, updates


def train(train_pairs: list[FormulaPair], config: TrainConfig,
          opts: ParserOptions | None = None, val_pairs=None) -> TrainResult:
    """End-to-end training on a pair corpus (direct mode)."""
    opts = opts or ParserOptions()
    prep = prepare(train_pairs, opts, min_count=config.min_count,
                   cluster_steps=config.cluster_steps)
    val_batches = None
    if val_pairs:
        val_prep = prepare(val_pairs, opts, vocab=prep.vocab,
                           cluster_steps=config.cluster_steps)
        val_batches = val_prep.batches
    model = TreeToTreeModel(config.model_config(len(prep.vocab)),
                            seed=config.seed)
    logs, updates = train_loop(model, prep.batches, config,
                               val_batches=val_batches)
    return TrainResult(model, prep.vocab, prep.clustering, logs, updates)


def pretrain_autoencoders(train_pairs, config: TrainConfig,
                          opts: ParserOptions | None = None,
                          val_pairs=None):
    """Two identity autoencoders, then the combined translator.

    Stage 1 trains an autoencoder on the generic side, stage 2 on the
    semantic side, stage 3 combines stage 1's encoder with stage 2's decoder
    through a fresh bridge and trains on the translation pairs (bridge only
    when config.finetune == "bridge").

    Returns (combined TrainResult, input AE model, output AE model).
    """
    opts = opts or ParserOptions()
    ae_epochs = config.pretrain_epochs or config.epochs
    prep = prepare(train_pairs, opts, min_count=config.min_count,
                   cluster_steps=config.cluster_steps)
    vocab = prep.vocab

    ae_models = {}
    for side in ("generic", "semantic"):
        side_prep = prepare(train_pairs, opts, vocab=vocab,
                            cluster_steps=config.cluster_steps,
                            autoencode=side)
        ae_cfg = TrainConfig(**{**config.__dict__, "epochs": ae_epochs,
                                "mode": "direct", "learning_rate":
                                config.learning_rate})
        model = TreeToTreeModel(ae_cfg.model_config(len(vocab)),
                                seed=config.seed + (1 if side == "semantic"
                                                    else 0))
        train_loop(model, side_prep.batches, ae_cfg)
        ae_models[side] = model

    combined_cfg = ModelConfig(
        vocab_size=len(vocab), state_size=config.state_size,
        layers=config.layers, embed_size=config.embed_size,
        proj_size=config.proj_size, dec_state_size=config.dec_state_size,
        bridge="on", dropout=config.dropout)
    combined = TreeToTreeModel(combined_cfg, seed=config.seed + 7)
    for name, p in ae_models["generic"].params.items():
        if name.startswith("enc."):
            combined.params[name].data = p.data.copy()
    for name, p in ae_models["semantic"].params.items():
        if name.startswith(("dec.", "proj.")):
            combined.params[name].data = p.data.copy()

    val_batches = None
    if val_pairs:
        val_prep = prepare(val_pairs, opts, vocab=vocab,
                           cluster_steps=config.cluster_steps)
        val_batches = val_prep.batches
    names = None
    if config.finetune == "bridge":
        names = [n for n in combined.params if n.startswith("bridge.")]
    logs, updates = train_loop(combined, prep.batches, config,
                               val_batches=val_batches, param_names=names)
    return (TrainResult(combined, vocab, prep.clustering, logs, updates),
            ae_models["generic"], ae_models["semantic"])
