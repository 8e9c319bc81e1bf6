"""Corpus handling: paired formulas, comparator-split augmentation, the
synthetic paired-grammar generator, and train/validation splitting.

Corpus file format: UTF-8 TSV, one `generic<TAB>semantic` pair per line,
lines starting with % are comments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .parser import tokenize

log = logging.getLogger(__name__)

# Tokens a formula is split on during augmentation.  The reference comparator
# list plus the \le/\ge family its own worked example splits on.
COMPARATORS = {
    "=", "<", ">", "≤", "≥",
    "\\lt", "\\gt", "\\le", "\\leq", "\\ge", "\\geq",
    "\\equiv", "\\asympeq", "\\sim",
    "\\Rightarrow", "\\rightarrow", "\\to",
}


class CorpusError(ValueError):
    pass


class MismatchedSplit(CorpusError):
    def __init__(self, pair_id, n_generic, n_semantic):
        self.pair_id = pair_id
        super().__init__(
            f"pair {pair_id}: generic side splits into {n_generic} terms, "
            f"semantic side into {n_semantic}")


@dataclass(frozen=True)
class FormulaPair:
    generic: str
    semantic: str
    id: str


def read_pairs(path) -> list[FormulaPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("%"):
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0].strip() or not cols[1].strip():
                raise CorpusError(f"{path}:{lineno}: expected "
                                  "'generic<TAB>semantic'")
            pairs.append(FormulaPair(cols[0], cols[1], f"L{lineno}"))
    return pairs


def format_pairs(pairs) -> str:
    return "".join(f"{p.generic}\t{p.semantic}\n" for p in pairs)


def _top_level_splits(formula: str) -> list[str]:
    """Split a formula at top-level comparator tokens, keeping the original
    substrings; element 2i is a term, element 2i+1 a comparator."""
    tokens = tokenize(formula)
    depth = 0
    cuts = []  # (start, end) of comparator tokens at depth 0
    for tok in tokens:
        if tok.kind == "open-brace":
            depth += 1
        elif tok.kind == "close-brace":
            depth -= 1
        elif depth == 0 and tok.text in COMPARATORS:
            cuts.append((tok.pos, tok.end))
    parts = []
    prev = 0
    for start, end in cuts:
        parts.append(formula[prev:start].strip())
        parts.append(formula[start:end])
        prev = end
    parts.append(formula[prev:].strip())
    return parts


def augment(pair: FormulaPair) -> list[FormulaPair]:
    """Comparator-split windows of a pair, applied in lockstep on both sides.

    Emits every single term, every two and three adjacent terms including
    the joining comparators, and the whole formula; exact-string duplicates
    are removed.  Raises MismatchedSplit when the sides disagree on the
    comparator count.
    """
    gen_parts = _top_level_splits(pair.generic)
    sem_parts = _top_level_splits(pair.semantic)
    if len(gen_parts) != len(sem_parts):
        raise MismatchedSplit(pair.id, (len(gen_parts) + 1) // 2,
                              (len(sem_parts) + 1) // 2)
    k = (len(gen_parts) + 1) // 2  # number of terms

    def window(parts, i, width):
        return " ".join(p for p in parts[2 * i: 2 * (i + width) - 1] if p)

    out = []
    seen = set()
    for width in (1, 2, 3, k):
        if width > k:
            continue
        for i in range(k - width + 1):
            g = window(gen_parts, i, width)
            s = window(sem_parts, i, width)
            if not g or not s:
                continue
            if (g, s) in seen:
                continue
            seen.add((g, s))
            out.append(FormulaPair(g, s, f"{pair.id}#w{len(out)}"))
    return out


def augment_corpus(pairs) -> list[FormulaPair]:
    """Augment every pair; pairs whose sides split differently are dropped
    with a warning."""
    out = []
    for p in pairs:
        try:
            out.extend(augment(p))
        except MismatchedSplit as exc:
            log.warning("dropping pair: %s", exc)
    return out


def split_train_val(pairs, fraction: float, seed: int):
    """Deterministic shuffled split; fraction is the training share."""
    if not 0.0 < fraction < 1.0:
        raise CorpusError(f"fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_train = int(round(len(pairs) * fraction))
    train = [pairs[i] for i in order[:n_train]]
    val = [pairs[i] for i in order[n_train:]]
    return train, val


def kfold_splits(pairs, k: int = 10, seed: int = 0):
    """Yield (train, val) per fold; each pair is validation exactly once."""
    order = np.random.default_rng(seed).permutation(len(pairs))
    folds = np.array_split(order, k)
    for i in range(k):
        val = [pairs[j] for j in folds[i]]
        train = [pairs[j] for f in range(k) if f != i for j in folds[f]]
        yield train, val


# ---------------------------------------------------------------------------
# Synthetic paired corpus
#
# A stand-in for a real generic/semantic corpus: a small grammar of paired
# templates.  Most productions substitute generic symbols with semantic
# macros token for token (so both sides parse to the same topology); the
# trig productions use the @{...} macro application style and differ.
# Ambiguous generic symbols (\bar, \hat, \Gamma, \pi, \phi, \delta) map to
# two semantic macros each, disambiguated by the surrounding context tokens.
# ---------------------------------------------------------------------------

VARS = ["x", "y", "a", "b", "t", "w"]


def _expr(rng, depth: int) -> list[str]:
    """Small random expression as a token list (identical on both sides)."""
    roll = rng.random()
    if depth <= 0 or roll < 0.35:
        if rng.random() < 0.5:
            return [str(rng.integers(1, 10))]
        return [rng.choice(VARS)]
    if roll < 0.55:
        return _expr(rng, depth - 1) + [rng.choice(["+", "-"])] \
            + _expr(rng, depth - 1)
    if roll < 0.70:
        return ["\\frac", "{"] + _expr(rng, depth - 1) + ["}", "{"] \
            + _expr(rng, depth - 1) + ["}"]
    if roll < 0.82:
        return ["\\sqrt", "{"] + _expr(rng, depth - 1) + ["}"]
    if roll < 0.92:
        return [rng.choice(VARS), rng.choice(["^", "_"]), "{"] \
            + _expr(rng, depth - 1) + ["}"]
    return ["("] + _expr(rng, depth - 1) + [rng.choice(["+", "-"])] \
        + _expr(rng, depth - 1) + [")"]


def _sub(tokens: list[str], mapping: dict[str, str]) -> list[str]:
    return [mapping.get(t, t) for t in tokens]


def _p_plain(rng):
    toks = _expr(rng, 2)
    return toks, list(toks)


def _p_equation(rng):
    toks = _expr(rng, 1) + ["="] + _expr(rng, 1)
    return toks, list(toks)


def _p_inequality(rng):
    toks = _expr(rng, 1) + ["\\leq"] + _expr(rng, 1)
    return toks, list(toks)


def _p_chain(rng):
    toks = _expr(rng, 1) + ["="] + _expr(rng, 1) + ["="] + _expr(rng, 1)
    return toks, list(toks)


def _p_func_cos(rng):
    inner = _expr(rng, 1)
    return (["\\cos", "("] + inner + [")"],
            ["\\cos", "@", "{"] + inner + ["}"])


def _p_func_sin(rng):
    inner = _expr(rng, 1)
    return (["\\sin", "("] + inner + [")"],
            ["\\sin", "@", "{"] + inner + ["}"])


def _p_reim(rng):
    v = rng.choice(["z", "w"])
    toks = ["\\Re", "(", v, ")", "+", "\\Im", "(", v, ")"]
    return toks, _sub(toks, {"\\Re": "\\RealPart", "\\Im": "\\ImagPart"})


def _p_binom(rng):
    n = rng.choice(["n", "m", str(rng.integers(2, 9))])
    k = rng.choice(["k", "j"])
    toks = ["\\binom", "{", n, "}", "{", k, "}", "+", rng.choice(VARS)]
    return toks, _sub(toks, {"\\binom": "\\Binomial"})


# ambiguous symbol, semantic macro, template builder
def _p_bar_mean(rng):
    v = rng.choice(VARS)
    toks = ["\\bar", "{", v, "}", "=", "\\frac", "{", "p", "+", "q", "}",
            "{", "n", "}"]
    return toks, _sub(toks, {"\\bar": "\\Mean"})


def _p_bar_conj(rng):
    v = rng.choice(["z", "w"])
    toks = ["\\bar", "{", v, "}", rng.choice(["+", "-"]), "z", "w"]
    return toks, _sub(toks, {"\\bar": "\\ComplexConj"})


def _p_hat_fourier(rng):
    v = rng.choice(["f", "g"])
    toks = ["\\hat", "{", v, "}", "(", "\\omega", ")"]
    return toks, _sub(toks, {"\\hat": "\\FourierTrans"})


def _p_hat_unit(rng):
    v = rng.choice(["e", "r"])
    toks = ["\\hat", "{", v, "}", "\\cdot", "u", "+", "v"]
    return toks, _sub(toks, {"\\hat": "\\UnitVector"})


def _p_gamma_euler(rng):
    v = rng.choice(["z", "s"])
    toks = ["\\Gamma", "(", v, "+", "1", ")", "=", v, "\\Gamma", "(", v, ")"]
    return toks, _sub(toks, {"\\Gamma": "\\EulerGamma"})


def _p_gamma_contour(rng):
    toks = ["\\oint", "_", "{", "\\Gamma", "}", "f", "(", "t", ")", "d", "t"]
    return toks, _sub(toks, {"\\Gamma": "\\Contour"})


def _p_pi_circle(rng):
    if rng.random() < 0.5:
        toks = ["2", "\\pi", "r"]
    else:
        toks = ["\\pi", "r", "^", "{", "2", "}"]
    return toks, _sub(toks, {"\\pi": "\\cpi"})


def _p_pi_prime(rng):
    toks = ["\\pi", "(", "x", ")", "+", "\\log", "(", "x", ")"]
    return toks, _sub(toks, {"\\pi": "\\PrimePi"})


def _p_phi_golden(rng):
    toks = ["\\phi", "=", "\\frac", "{", "1", "+", "\\sqrt", "{", "5", "}",
            "}", "{", "2", "}"]
    return toks, _sub(toks, {"\\phi": "\\GoldenRatio"})


def _p_phi_totient(rng):
    v = rng.choice(["n", "m"])
    toks = ["\\phi", "(", v, ")", "+", "\\gcd", "(", "n", ",", "m", ")"]
    return toks, _sub(toks, {"\\phi": "\\Totient"})


def _p_delta_dirac(rng):
    toks = ["\\int", "f", "(", "x", ")", "\\delta", "(", "x", ")", "d", "x"]
    return toks, _sub(toks, {"\\delta": "\\DiracDelta"})


def _p_delta_kron(rng):
    toks = ["\\delta", "_", "{", "i", "j", "}", "+", "i", "+", "j"]
    return toks, _sub(toks, {"\\delta": "\\KroneckerDelta"})


PRODUCTIONS = [
    ("plain", _p_plain),
    ("equation", _p_equation),
    ("inequality", _p_inequality),
    ("chain", _p_chain),
    ("func_cos", _p_func_cos),
    ("func_sin", _p_func_sin),
    ("reim", _p_reim),
    ("binom", _p_binom),
    ("bar_mean", _p_bar_mean),
    ("bar_conj", _p_bar_conj),
    ("hat_fourier", _p_hat_fourier),
    ("hat_unit", _p_hat_unit),
    ("gamma_euler", _p_gamma_euler),
    ("gamma_contour", _p_gamma_contour),
    ("pi_circle", _p_pi_circle),
    ("pi_prime", _p_pi_prime),
    ("phi_golden", _p_phi_golden),
    ("phi_totient", _p_phi_totient),
    ("delta_dirac", _p_delta_dirac),
    ("delta_kron", _p_delta_kron),
]

# ground truth the disambiguation module is evaluated against
AMBIGUOUS_SENSES = {
    "\\bar": ["\\Mean", "\\ComplexConj"],
    "\\hat": ["\\FourierTrans", "\\UnitVector"],
    "\\Gamma": ["\\EulerGamma", "\\Contour"],
    "\\pi": ["\\cpi", "\\PrimePi"],
    "\\phi": ["\\GoldenRatio", "\\Totient"],
    "\\delta": ["\\DiracDelta", "\\KroneckerDelta"],
}

MAX_TOKENS_PER_SIDE = 40


def gen_pair(seed: int, index: int) -> tuple[FormulaPair, str]:
    """One deterministic pair plus the production name that built it.

    Seeded per item index so the corpus is identical however the calls are
    distributed over workers.
    """
    rng = np.random.default_rng([seed, index])
    while True:
        name, builder = PRODUCTIONS[int(rng.integers(len(PRODUCTIONS)))]
        gen_toks, sem_toks = builder(rng)
        if max(len(gen_toks), len(sem_toks)) <= MAX_TOKENS_PER_SIDE:
            break
    return (FormulaPair(" ".join(gen_toks), " ".join(sem_toks),
                        f"syn-{index:06d}"), name)


def gen_synthetic_corpus(seed: int, n: int) -> list[FormulaPair]:
    if n < 1:
        raise CorpusError("n must be >= 1")
    return [gen_pair(seed, i)[0] for i in range(n)]
