"""Recursive LSTM encoder/decoder over padded tree batches.

Encoder: one two-ary LSTM per layer walks the hull bottom-up; each node
consumes its value embedding (layer 1) or the lower layer's hidden state,
plus both children's states.  Child hidden states pass through the
swap-aware combination

    (1 - T) * (U_L h_L + U_R h_R) + T * (U_R h_L + U_L h_R)

per gate, and the two forget gates exchange the child cell states the same
way, so the network computes the pre-traversal tree.  Leaf child states are
zero.

Decoder: two per-branch LSTMs per layer walk the hull top-down.  A node's
state comes from its parent's branch cell fed with the parent's value
(teacher value during training, argmax feeding otherwise); the swap bit of
the parent exchanges the branch roles.  The root acts as the left child of a
virtual super-root whose state is the bridged encoder state and whose fed
value is the reserved BOS row.  Logits come from the top layer's hidden
state through two stacked projections.

All weight matrices are Xavier-initialized, all biases zero.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (Tensor, add, add_n, blend, constant, dropout, matmul,
                       mul, rows, sigmoid, tanh)
from .encoding import PaddedBatch
from .trees import Topology

ENC_GATES = ("i", "fl", "fr", "o", "u")
DEC_GATES = ("i", "f", "o", "u")

CHECKPOINT_MAGIC = b"MTCKPT1\n"


class ShapeMismatch(ValueError):
    pass


class NonFiniteState(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    state_size: int = 256
    layers: int = 1
    embed_size: int = 0       # 0: use state_size
    proj_size: int = 0        # 0: use state_size
    dec_state_size: int = 0   # 0: use state_size
    bridge: str = "auto"      # auto | on | off
    bridge_tanh: bool = True
    dropout: float = 0.05

    def resolved(self) -> "ModelConfig":
        cfg = ModelConfig(**asdict(self))
        cfg.embed_size = cfg.embed_size or cfg.state_size
        cfg.proj_size = cfg.proj_size or cfg.state_size
        cfg.dec_state_size = cfg.dec_state_size or cfg.state_size
        return cfg


def xavier_init(rows_: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform in +-sqrt(6 / (rows + cols)); variance 2 / (rows + cols)."""
    if rows_ < 1 or cols < 1:
        raise ShapeMismatch("matrix dimensions must be positive")
    bound = np.sqrt(6.0 / (rows_ + cols))
    return rng.uniform(-bound, bound, size=(rows_, cols))


def combine_children(h_left: Tensor, h_right: Tensor, t: np.ndarray,
                     u_left: Tensor, u_right: Tensor) -> Tensor:
    """The swap-aware child combination for one gate's U matrices."""
    straight = add(matmul(h_left, u_left), matmul(h_right, u_right))
    crossed = add(matmul(h_left, u_right), matmul(h_right, u_left))
    return blend(t, straight, crossed)


class TreeToTreeModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config.resolved()
        cfg = self.config
        if cfg.bridge not in ("auto", "on", "off"):
            raise ValueError(f"unknown bridge mode {cfg.bridge!r}")
        self.use_bridge = cfg.bridge == "on" or (
            cfg.bridge == "auto" and cfg.dec_state_size != cfg.state_size)
        if not self.use_bridge and cfg.dec_state_size != cfg.state_size:
            raise ShapeMismatch(
                "bridge is mandatory when encoder/decoder state sizes differ")
        rng = np.random.default_rng(seed)
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self._build(rng)
        expected = self.expected_param_count()
        actual = sum(p.data.size for p in self.params.values())
        assert actual == expected, (actual, expected)

    # -- construction ------------------------------------------------------

    def _mat(self, name, rows_, cols, rng):
        self.params[name] = Tensor(xavier_init(rows_, cols, rng))

    def _bias(self, name, dim):
        self.params[name] = Tensor(np.zeros(dim))

    def _build(self, rng):
        cfg = self.config
        v, e, d, dd, p = (cfg.vocab_size, cfg.embed_size, cfg.state_size,
                          cfg.dec_state_size, cfg.proj_size)
        self._mat("enc.embed", v, e, rng)
        for l in range(cfg.layers):
            din = e if l == 0 else d
            for g in ENC_GATES:
                self._mat(f"enc.{l}.W{g}", din, d, rng)
                self._mat(f"enc.{l}.UL{g}", d, d, rng)
                self._mat(f"enc.{l}.UR{g}", d, d, rng)
                self._bias(f"enc.{l}.b{g}", d)
        self._mat("dec.embed", v + 1, e, rng)  # last row: BOS
        for l in range(cfg.layers):
            din = e if l == 0 else dd
            for br in ("L", "R"):
                for g in DEC_GATES:
                    self._mat(f"dec.{l}.{br}.W{g}", din, dd, rng)
                    self._mat(f"dec.{l}.{br}.U{g}", dd, dd, rng)
                    self._bias(f"dec.{l}.{br}.b{g}", dd)
        if self.use_bridge:
            for l in range(cfg.layers):
                self._mat(f"bridge.{l}.Wh", d, dd, rng)
                self._bias(f"bridge.{l}.bh", dd)
                self._mat(f"bridge.{l}.Wc", d, dd, rng)
                self._bias(f"bridge.{l}.bc", dd)
        self._mat("proj.W1", dd, p, rng)
        self._bias("proj.b1", p)
        self._mat("proj.W2", p, v, rng)
        self._bias("proj.b2", v)

    def expected_param_count(self) -> int:
        cfg = self.config
        v, e, d, dd, p = (cfg.vocab_size, cfg.embed_size, cfg.state_size,
                          cfg.dec_state_size, cfg.proj_size)
        n = v * e + (v + 1) * e
        for l in range(cfg.layers):
            din_e = e if l == 0 else d
            n += 5 * (din_e * d + 2 * d * d + d)
            din_d = e if l == 0 else dd
            n += 2 * 4 * (din_d * dd + dd * dd + dd)
        if self.use_bridge:
            n += cfg.layers * 2 * (d * dd + dd)
        n += dd * p + p + p * v + v
        return n

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Parameter gradients; exactly zero for parameters off the tape."""
        return {name: (t.grad if t.grad is not None
                       else np.zeros_like(t.data))
                for name, t in self.params.items()}

    # -- forward pieces ----------------------------------------------------

    def _enc_cell(self, l, x, child_states, t):
        """One two-ary LSTM step; child_states None at hull leaves."""
        P = self.params
        pre = {}
        for g in ENC_GATES:
            term = matmul(x, P[f"enc.{l}.W{g}"])
            if child_states is not None:
                (h_l, _), (h_r, _) = child_states
                comb = combine_children(h_l, h_r, t, P[f"enc.{l}.UL{g}"],
                                        P[f"enc.{l}.UR{g}"])
                term = add(term, comb)
            pre[g] = add(term, P[f"enc.{l}.b{g}"])
        i = sigmoid(pre["i"])
        o = sigmoid(pre["o"])
        u = tanh(pre["u"])
        c = mul(i, u)
        if child_states is not None:
            (_, c_l), (_, c_r) = child_states
            f_l = sigmoid(pre["fl"])
            f_r = sigmoid(pre["fr"])
            c = add_n([c, mul(f_l, blend(t, c_l, c_r)),
                       mul(f_r, blend(t, c_r, c_l))])
        h = mul(o, tanh(c))
        return h, c

    def _dec_cell(self, l, br, x, state):
        P = self.params
        h_prev, c_prev = state
        pre = {g: add(add(matmul(x, P[f"dec.{l}.{br}.W{g}"]),
                          matmul(h_prev, P[f"dec.{l}.{br}.U{g}"])),
                      P[f"dec.{l}.{br}.b{g}"])
               for g in DEC_GATES}
        c = add(mul(sigmoid(pre["i"]), tanh(pre["u"])),
                mul(sigmoid(pre["f"]), c_prev))
        h = mul(sigmoid(pre["o"]), tanh(c))
        return h, c

    def encode(self, values: np.ndarray, swaps: np.ndarray, topo: Topology,
               training: bool = False, rng: np.random.Generator | None = None):
        """Bottom-up pass; returns per-layer root states [(h, c), ...]."""
        cfg = self.config
        if values.shape[1] != topo.size:
            raise ShapeMismatch("value grid does not match the hull")
        left, right = topo.child_arrays()
        order = topo.postorder()
        layer_input = {i: rows(self.params["enc.embed"], values[:, i])
                       for i in range(topo.size)}
        states: list[dict] = []
        for l in range(cfg.layers):
            state_l: dict[int, tuple] = {}
            next_input = {}
            for i in order:
                x = layer_input[int(i)]
                if training and cfg.dropout > 0:
                    x = dropout(x, cfg.dropout, rng)
                children = None
                t = None
                if left[i] >= 0:
                    children = (state_l[int(left[i])], state_l[int(right[i])])
                    t = swaps[:, i:i + 1]
                h, c = self._enc_cell(l, x, children, t)
                state_l[int(i)] = (h, c)
                next_input[int(i)] = h
            states.append(state_l)
            layer_input = next_input
        roots = [states[l][0] for l in range(cfg.layers)]
        if not np.all(np.isfinite(roots[-1][0].data)):
            raise NonFiniteState("encoder root state is not finite")
        return roots

    def bridge(self, enc_roots):
        """Map encoder root states to decoder initial states, per layer."""
        if not self.use_bridge:
            return enc_roots
        P = self.params
        out = []
        for l, (h, c) in enumerate(enc_roots):
            bh = add(matmul(h, P[f"bridge.{l}.Wh"]), P[f"bridge.{l}.bh"])
            bc = add(matmul(c, P[f"bridge.{l}.Wc"]), P[f"bridge.{l}.bc"])
            if self.config.bridge_tanh:
                bh, bc = tanh(bh), tanh(bc)
            out.append((bh, bc))
        return out

    def _project(self, h):
        P = self.params
        hidden = tanh(add(matmul(h, P["proj.W1"]), P["proj.b1"]))
        return add(matmul(hidden, P["proj.W2"]), P["proj.b2"])

    def decode(self, init_states, topo: Topology, swaps: np.ndarray,
               teacher: np.ndarray | None = None, training: bool = False,
               rng: np.random.Generator | None = None):
        """Top-down pass over a hull.

        Returns (logits, preds): one (B, V) logits tensor per hull position
        in preorder, and the argmax values (B, P).  The value fed across
        each edge is the teacher value when given, the argmax otherwise.
        """
        cfg = self.config
        P = self.params
        n_pos = topo.size
        batch = swaps.shape[0]
        parent, branch = topo.parent_arrays()
        bos = np.full(batch, cfg.vocab_size, dtype=np.int64)

        fed = np.zeros((batch, n_pos), dtype=np.int64)
        preds = np.zeros((batch, n_pos), dtype=np.int64)
        logits: list[Tensor] = []
        state: list[dict[int, tuple]] = [dict() for _ in range(cfg.layers)]

        def layer_x(l, i):
            if l == 0:
                idx = bos if i == 0 else fed[:, parent[i]]
                x = rows(P["dec.embed"], idx)
            else:
                x = state[l - 1][i][0]
            if training and cfg.dropout > 0:
                x = dropout(x, cfg.dropout, rng)
            return x

        for i in range(n_pos):  # preorder: parents precede children
            for l in range(cfg.layers):
                x = layer_x(l, i)
                if i == 0:
                    state[l][i] = self._dec_cell(l, "L", x, init_states[l])
                else:
                    p = int(parent[i])
                    t = swaps[:, p:p + 1]
                    out_l = self._dec_cell(l, "L", x, state[l][p])
                    out_r = self._dec_cell(l, "R", x, state[l][p])
                    if branch[i] == 0:
                        h = blend(t, out_l[0], out_r[0])
                        c = blend(t, out_l[1], out_r[1])
                    else:
                        h = blend(t, out_r[0], out_l[0])
                        c = blend(t, out_r[1], out_l[1])
                    state[l][i] = (h, c)
            lg = self._project(state[cfg.layers - 1][i][0])
            logits.append(lg)
            preds[:, i] = lg.data.argmax(axis=1)
            fed[:, i] = teacher[:, i] if teacher is not None else preds[:, i]
        if logits and not np.all(np.isfinite(logits[-1].data)):
            raise NonFiniteState("decoder logits are not finite")
        return logits, preds

    def forward(self, b: PaddedBatch, teacher_forcing: bool = True,
                training: bool = False,
                rng: np.random.Generator | None = None):
        """encode -> bridge -> decode for one cluster minibatch."""
        enc_roots = self.encode(b.values_in, b.swaps_in, b.hull_in,
                                training=training, rng=rng)
        init = self.bridge(enc_roots)
        teacher = b.values_out if teacher_forcing else None
        return self.decode(init, b.hull_out, b.swaps_out, teacher=teacher,
                           training=training, rng=rng)


# -- checkpoints -----------------------------------------------------------

def save_checkpoint(path, model: TreeToTreeModel, meta: dict | None = None):
    header = {
        "format": 1,
        "config": asdict(model.config),
        "names": list(model.params.keys()),
        "shapes": [list(p.data.shape) for p in model.params.values()],
        "meta": meta or {},
    }
    blob = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes()
                    for p in model.params.values())
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob)


def load_checkpoint(path, expect_vocab_hash: str | None = None):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    if expect_vocab_hash is not None:
        got = header["meta"].get("vocab_hash")
        if got != expect_vocab_hash:
            raise ValueError(
                f"{path}: checkpoint vocabulary hash {got} does not match "
                f"expected {expect_vocab_hash}")
    model = TreeToTreeModel(ModelConfig(**header["config"]), seed=0)
    offset = 0
    for name, shape in zip(header["names"], header["shapes"]):
        if name not in model.params:
            raise ShapeMismatch(f"{path}: unknown parameter {name}")
        param = model.params[name]
        if list(param.data.shape) != shape:
            raise ShapeMismatch(f"{path}: {name} has shape {shape}, "
                                f"expected {list(param.data.shape)}")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        param.data = arr.reshape(shape).astype(np.float64)
        offset += count * 8
    if offset != len(blob):
        raise ShapeMismatch(f"{path}: trailing bytes in checkpoint")
    return model, header["meta"]
