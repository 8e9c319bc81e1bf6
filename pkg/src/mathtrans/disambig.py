"""Standalone bag-of-words disambiguation of generic symbols.

For a generic symbol occurring in a formula, choose the semantic macro it
should translate to, restricted to the macros that render back to that same
symbol.  The candidate table is mined from the paired corpus by aligning the
leaf sequences of both parse trees and collecting 1:1 substitutions whose
semantic side is a macro.

The classifier is one shared MLP over (bag-of-words of the formula with the
occurrence under classification removed, one-hot of the symbol); the output
layer scores candidate slots, with slots beyond a symbol's candidate list
masked out.  Symbols with a single candidate bypass the network entirely.
"""

from __future__ import annotations

import difflib
import json
import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, matmul, tanh, weighted_cross_entropy
from .parser import ParserOptions, parse_formula, tokenize
from .treelstm import xavier_init

log = logging.getLogger(__name__)

ALIGN_OPTS = ParserOptions(command_end=False, concat_end=False)
MIN_ALIGN_RATIO = 0.5


class DisambigError(ValueError):
    pass


class UnknownSymbol(DisambigError):
    pass


class CandidateTable:
    def __init__(self, table: dict[str, list[str]]):
        for sym, macros in table.items():
            if not macros:
                raise DisambigError(f"empty candidate list for {sym!r}")
        self.table = {s: list(ms) for s, ms in table.items()}

    def __contains__(self, symbol):
        return symbol in self.table

    def candidates(self, symbol: str) -> list[str]:
        if symbol not in self.table:
            raise UnknownSymbol(f"no candidates for {symbol!r}")
        return self.table[symbol]

    def symbols(self) -> list[str]:
        return sorted(self.table)

    @property
    def max_candidates(self) -> int:
        return max(len(ms) for ms in self.table.values())

    def to_json(self) -> str:
        return json.dumps(self.table, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, s: str) -> "CandidateTable":
        return cls(json.loads(s))


@dataclass(frozen=True)
class Instance:
    """One labelled occurrence: symbol in a formula, true macro."""
    symbol: str
    macro: str
    formula: str


def _leaves(formula: str) -> list[str]:
    return parse_formula(formula, ALIGN_OPTS, swap_traversal=False).leaves()


def align_pair(generic: str, semantic: str) -> list[tuple[str, str]] | None:
    """1:1 leaf substitutions between the two sides, None if unalignable."""
    gl = _leaves(generic)
    sl = _leaves(semantic)
    matcher = difflib.SequenceMatcher(a=gl, b=sl, autojunk=False)
    if matcher.ratio() < MIN_ALIGN_RATIO:
        return None
    subs = []
    for op, i1, i2, j1, j2 in matcher.get_opcodes():
        if op == "replace" and (i2 - i1) == (j2 - j1):
            subs.extend(zip(gl[i1:i2], sl[j1:j2]))
    return subs


def build_candidates(pairs) -> CandidateTable:
    """Mine symbol -> macro candidates from aligned corpus pairs."""
    table: dict[str, list[str]] = {}
    skipped = 0
    for p in pairs:
        try:
            subs = align_pair(p.generic, p.semantic)
        except Exception:
            subs = None
        if subs is None:
            skipped += 1
            log.warning("unalignable pair %s skipped", p.id)
            continue
        for g, s in subs:
            if not s.startswith("\\") or g == s:
                continue
            table.setdefault(g, [])
            if s not in table[g]:
                table[g].append(s)
    if skipped:
        log.info("skipped %d unalignable pairs", skipped)
    return CandidateTable(table)


def extract_instances(pairs) -> list[Instance]:
    """Ground-truth classification instances from aligned pairs."""
    out = []
    for p in pairs:
        try:
            subs = align_pair(p.generic, p.semantic)
        except Exception:
            subs = None
        if not subs:
            continue
        for g, s in subs:
            if s.startswith("\\") and g != s:
                out.append(Instance(g, s, p.generic))
    return out


class BowFeaturizer:
    """Counts over a fixed token vocabulary, target occurrence excluded."""

    def __init__(self, tokens: list[str], exclude_target: bool = True,
                 binary: bool = False):
        self.index = {t: i for i, t in enumerate(tokens)}
        self.exclude_target = exclude_target
        self.binary = binary

    @classmethod
    def from_formulas(cls, formulas, **kw) -> "BowFeaturizer":
        seen: dict[str, None] = {}
        for f in formulas:
            for tok in tokenize(f):
                seen.setdefault(tok.text, None)
        return cls(sorted(seen), **kw)

    @property
    def dim(self) -> int:
        return len(self.index)

    def vector(self, formula: str, symbol: str | None = None) -> np.ndarray:
        v = np.zeros(self.dim)
        for tok in tokenize(formula):
            i = self.index.get(tok.text)
            if i is not None:
                v[i] += 1.0
        if symbol is not None and self.exclude_target:
            i = self.index.get(symbol)
            if i is not None and v[i] > 0:
                v[i] -= 1.0
        if self.binary:
            v = (v > 0).astype(np.float64)
        return v

    def to_json(self) -> str:
        tokens = sorted(self.index, key=self.index.get)
        return json.dumps({"tokens": tokens,
                           "exclude_target": self.exclude_target,
                           "binary": self.binary}, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "BowFeaturizer":
        obj = json.loads(s)
        return cls(obj["tokens"], exclude_target=obj["exclude_target"],
                   binary=obj["binary"])


class DisambigModel:
    """Shared MLP over bag-of-words + symbol one-hot, 1-5 hidden layers."""

    def __init__(self, table: CandidateTable, featurizer: BowFeaturizer,
                 hidden_layers: int = 2, width: int = 64, seed: int = 0):
        if not 1 <= hidden_layers <= 5:
            raise DisambigError("hidden_layers must be between 1 and 5")
        self.table = table
        self.featurizer = featurizer
        self.symbols = table.symbols()
        self.sym_index = {s: i for i, s in enumerate(self.symbols)}
        self.n_out = table.max_candidates
        self.hidden_layers = hidden_layers
        self.width = width
        rng = np.random.default_rng(seed)
        dims = [featurizer.dim + len(self.symbols)] \
            + [width] * hidden_layers + [self.n_out]
        self.params: dict[str, Tensor] = {}
        for i in range(len(dims) - 1):
            self.params[f"W{i}"] = Tensor(xavier_init(dims[i], dims[i + 1],
                                                      rng))
            self.params[f"b{i}"] = Tensor(np.zeros(dims[i + 1]))

    def features(self, symbol: str, formula: str) -> np.ndarray:
        bow = self.featurizer.vector(formula, symbol)
        onehot = np.zeros(len(self.symbols))
        if symbol in self.sym_index:
            onehot[self.sym_index[symbol]] = 1.0
        return np.concatenate([bow, onehot])

    def logits(self, x: Tensor) -> Tensor:
        h = x
        for i in range(self.hidden_layers + 1):
            h = add(matmul(h, self.params[f"W{i}"]), self.params[f"b{i}"])
            if i < self.hidden_layers:
                h = tanh(h)
        return h

    def _masked_scores(self, symbol: str, formula: str) -> np.ndarray:
        x = Tensor(self.features(symbol, formula)[None, :],
                   requires_grad=False)
        scores = self.logits(x).data[0].copy()
        k = len(self.table.candidates(symbol))
        scores[k:] = -np.inf
        return scores

    def classify(self, symbol: str, formula: str) -> str:
        """The chosen macro; singleton candidate lists bypass the network."""
        cands = self.table.candidates(symbol)
        if len(cands) == 1:
            return cands[0]
        return cands[int(np.argmax(self._masked_scores(symbol, formula)))]

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None

    def train(self, instances, epochs: int = 60, lr: float = 0.05,
              seed: int = 0, batch_size: int = 32) -> list[float]:
        """Adam on cross-entropy over candidate slots; returns epoch losses."""
        from .training import OptState, adam_step

        multi = [inst for inst in instances
                 if inst.symbol in self.table
                 and len(self.table.candidates(inst.symbol)) > 1
                 and inst.macro in self.table.candidates(inst.symbol)]
        if not multi:
            return []
        feats = np.stack([self.features(i.symbol, i.formula) for i in multi])
        labels = np.array([self.table.candidates(i.symbol).index(i.macro)
                           for i in multi], dtype=np.int64)
        valid = np.full((len(multi), self.n_out), -np.inf)
        for r, inst in enumerate(multi):
            valid[r, :len(self.table.candidates(inst.symbol))] = 0.0
        rng = np.random.default_rng(seed)
        state = OptState()
        losses = []
        for _ in range(epochs):
            order = rng.permutation(len(multi))
            total = 0.0
            for start in range(0, len(multi), batch_size):
                idx = order[start:start + batch_size]
                self.zero_grads()
                x = Tensor(feats[idx], requires_grad=False)
                logits = add(self.logits(x), valid[idx])
                loss = weighted_cross_entropy(logits, labels[idx],
                                              np.ones(len(idx)))
                loss.backward()
                grads = {n: (p.grad if p.grad is not None
                             else np.zeros_like(p.data))
                         for n, p in self.params.items()}
                adam_step(self.params, grads, state, lr)
                total += float(loss.data)
            losses.append(total / len(multi))
        return losses

    def accuracy(self, instances) -> float:
        """Fraction classified correctly; singletons included."""
        hits = 0
        used = 0
        for inst in instances:
            if inst.symbol not in self.table:
                continue
            used += 1
            if self.classify(inst.symbol, inst.formula) == inst.macro:
                hits += 1
        if used == 0:
            raise DisambigError("no usable instances")
        return hits / used

    def save(self, path):
        header = {
            "table": self.table.table,
            "featurizer": json.loads(self.featurizer.to_json()),
            "hidden_layers": self.hidden_layers,
            "width": self.width,
            "shapes": {n: list(p.data.shape) for n, p in self.params.items()},
        }
        blob = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes()
                        for p in self.params.values())
        with open(path, "wb") as fh:
            fh.write(b"MTDIS1\n")
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            fh.write(blob)

    @classmethod
    def load(cls, path) -> "DisambigModel":
        with open(path, "rb") as fh:
            if fh.read(7) != b"MTDIS1\n":
                raise DisambigError(f"{path}: not a disambiguation model")
            header = json.loads(fh.readline().decode("utf-8"))
            blob = fh.read()
        feat = BowFeaturizer.from_json(json.dumps(header["featurizer"]))
        model = cls(CandidateTable(header["table"]), feat,
                    hidden_layers=header["hidden_layers"],
                    width=header["width"])
        offset = 0
        for name, p in model.params.items():
            shape = header["shapes"][name]
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            p.data = arr.reshape(shape).astype(np.float64)
            offset += count * 8
        return model
